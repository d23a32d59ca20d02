"""Injectable time sources.

The gateway batches feed delivery on per-subscriber intervals and the
node paces frame sends, so both take a clock instead of calling
``time.time`` directly. Tests swap in the manual variants to make
interval behaviour deterministic.
"""

from __future__ import annotations

import asyncio
import heapq
import itertools
import time


class RealClock:
    """Wall clock backed by ``time.time`` / ``asyncio.sleep``."""

    def now_ms(self) -> int:
        return int(time.time() * 1000)

    async def sleep(self, seconds: float) -> None:
        await asyncio.sleep(seconds)


class ManualClock:
    """Async clock that only moves when a test calls :meth:`advance`.

    Sleeps park on a heap of (deadline, future) entries; ``advance``
    releases them in deadline order, yielding to the loop between wakes
    so released tasks can run and re-register their next sleep.
    """

    def __init__(self, start_ms: int = 0):
        self._now = start_ms
        self._waiters: list[tuple[int, int, asyncio.Future]] = []
        self._counter = itertools.count()

    def now_ms(self) -> int:
        return self._now

    async def sleep(self, seconds: float) -> None:
        deadline = self._now + int(round(seconds * 1000))
        if deadline <= self._now:
            await asyncio.sleep(0)
            return
        fut = asyncio.get_running_loop().create_future()
        heapq.heappush(self._waiters, (deadline, next(self._counter), fut))
        await fut

    async def advance(self, seconds: float) -> None:
        target = self._now + int(round(seconds * 1000))
        while self._waiters and self._waiters[0][0] <= target:
            deadline, _, fut = heapq.heappop(self._waiters)
            self._now = max(self._now, deadline)
            if not fut.done():
                fut.set_result(None)
            # Let the woken task run far enough to re-register its next sleep.
            for _ in range(20):
                await asyncio.sleep(0)
        self._now = target
        for _ in range(20):
            await asyncio.sleep(0)


class SyncClock:
    """Blocking wall clock for the single-threaded sensor node."""

    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class ManualSyncClock:
    """Blocking clock whose sleeps advance internal time instantly.

    Records every requested sleep so tests can assert exact pacing.
    """

    def __init__(self, start_ms: int = 0):
        self._now = start_ms
        self.sleeps: list[float] = []

    def now_ms(self) -> int:
        return self._now

    def sleep(self, seconds: float) -> None:
        self.sleeps.append(seconds)
        self._now += int(round(seconds * 1000))
