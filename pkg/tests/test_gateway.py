"""Gateway behaviour: handshakes, pipeline, batching, alerts, fan-out."""

import asyncio
import json
from pathlib import Path

import numpy as np
import pytest

from sentinel import protocol
from sentinel.clock import ManualClock
from sentinel.detection.boxes import BoundingBox
from sentinel.detection.frame import Frame, frame_from_array
from sentinel.gateway import websocket as ws
from sentinel.gateway.config import GatewayConfig
from sentinel.gateway.service import Gateway, SightingEvent
from sentinel.protocol import make_message
from sentinel.synthetic import make_stream

from conftest import KNOWN_SUBJECTS, OPERATOR_PASSWORD, subject_name

READ_TIMEOUT = 10.0


def blank_frame(node_id="cam", sequence=1, size=48):
    return frame_from_array(
        node_id, sequence, 0, np.full((size, size), 90, dtype=np.uint8)
    )


def subject_frame(subject: int, sequence: int, seed: int = 200, node_id="cam"):
    (frame, planted) = make_stream(
        seed=seed + sequence,
        node_id=node_id,
        labels_per_frame=[[subject_name(subject)]],
    )[0]
    return Frame(
        node_id=frame.node_id,
        sequence=sequence,
        timestamp_ms=frame.timestamp_ms,
        width=frame.width,
        height=frame.height,
        channels=frame.channels,
        pixels=frame.pixels,
    )


def fake_event(i: int, timestamp_ms: int = 0, status="neutral") -> SightingEvent:
    return SightingEvent(
        identity_id=f"id-{i}",
        display_name=f"person-{i}",
        distance=0.1,
        confidence=0.95,
        box=BoundingBox(x=1, y=1, w=10, h=10, score=0.9),
        node_id="cam",
        timestamp_ms=timestamp_ms,
        frame_sequence=i,
        status=status,
    )


class Harness:
    """One gateway on ephemeral ports with a manual clock."""

    def __init__(self, gateway_paths, model_artifacts, **config_overrides):
        self.paths = gateway_paths
        self.artifacts = model_artifacts
        self.overrides = config_overrides

    async def __aenter__(self):
        config = GatewayConfig(
            node_port=0, monitor_port=0, **self.paths, **self.overrides
        )
        self.clock = ManualClock()
        registry = self.artifacts.known_registry(Path(self.paths["registry_path"]))
        self.gateway = Gateway(config, clock=self.clock, registry=registry)
        await self.gateway.start()
        self._cleanup = []
        return self

    async def __aexit__(self, *exc):
        for writer in self._cleanup:
            try:
                writer.close()
            except Exception:
                pass
        await self.gateway.stop()

    async def open_node(self, node_id="cam"):
        host, port = self.gateway.node_address
        reader, writer = await asyncio.open_connection(host, port)
        self._cleanup.append(writer)
        await protocol.write_message(
            writer, make_message("NODE_HELLO", node_id=node_id)
        )
        return reader, writer

    async def open_monitor(self):
        host, port = self.gateway.monitor_address
        reader, writer = await asyncio.open_connection(host, port)
        self._cleanup.append(writer)
        return MonitorClient(reader, writer)


class MonitorClient:
    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer

    async def send(self, message):
        await protocol.write_message(self.writer, message)

    async def read(self, timeout=READ_TIMEOUT):
        return await asyncio.wait_for(protocol.read_message(self.reader), timeout)

    async def read_type(self, msg_type, timeout=READ_TIMEOUT, skip=("HEARTBEAT",)):
        while True:
            msg = await self.read(timeout)
            if msg is None:
                raise AssertionError(f"connection closed waiting for {msg_type}")
            if msg["type"] == msg_type:
                return msg
            if msg["type"] not in skip:
                raise AssertionError(f"expected {msg_type}, got {msg['type']}: {msg}")

    async def expect_nothing(self, quiet=0.2):
        with pytest.raises(asyncio.TimeoutError):
            await asyncio.wait_for(protocol.read_message(self.reader), quiet)

    async def auth(self, operator_id="op-alice", password=OPERATOR_PASSWORD):
        await self.send(
            make_message(
                "AUTH_REQUEST",
                method="credentials",
                operator_id=operator_id,
                password=password,
            )
        )
        return await self.read_type("AUTH_RESPONSE")

    async def subscribe(self, interval=None):
        await self.send(make_message("SUBSCRIBE"))
        if interval is not None:
            await self.send(make_message("SET_INTERVAL", seconds=interval))


# ----------------------------------------------------------------------
# node side


def test_frame_before_hello_errors_and_disconnects(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            host, port = h.gateway.node_address
            reader, writer = await asyncio.open_connection(host, port)
            await protocol.write_message(writer, blank_frame())
            msg = await asyncio.wait_for(protocol.read_message(reader), READ_TIMEOUT)
            assert msg["type"] == "ERROR"
            assert msg["code"] == "handshake"
            assert await asyncio.wait_for(reader.read(), READ_TIMEOUT) == b""
            writer.close()

    asyncio.run(go())


def test_hello_then_frames_reach_pipeline(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            _, writer = await h.open_node()
            for seq in (1, 2, 3):
                await protocol.write_message(writer, blank_frame(sequence=seq))
            for _ in range(200):
                if h.gateway.metrics["frames_received"] >= 3:
                    break
                await asyncio.sleep(0.02)
            assert h.gateway.metrics["frames_received"] == 3
            # Blank frames hold no faces, so the pipeline logs nothing.
            await h.gateway.wait_for_sightings(0)
            assert h.gateway.metrics["sightings"] == 0

    asyncio.run(go())


def test_out_of_order_sequence_dropped_connection_stays(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            reader, writer = await h.open_node()
            await protocol.write_message(writer, blank_frame(sequence=5))
            await protocol.write_message(writer, blank_frame(sequence=4))
            await protocol.write_message(writer, blank_frame(sequence=6))
            for _ in range(200):
                if h.gateway.metrics["frames_received"] >= 3:
                    break
                await asyncio.sleep(0.02)
            assert h.gateway.metrics["frames_dropped_sequence"] == 1
            # Connection still serves heartbeats after the drop.
            await protocol.write_message(
                writer, make_message("HEARTBEAT", node_id="cam", sent_at=0)
            )
            reply = await asyncio.wait_for(protocol.read_message(reader), READ_TIMEOUT)
            assert reply["type"] == "HEARTBEAT"

    asyncio.run(go())


def test_garbage_framing_disconnects_without_crash(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            host, port = h.gateway.node_address
            reader, writer = await asyncio.open_connection(host, port)
            writer.write(b"\x00\x00\x00\x05\xff\xff\xff\xff\xff")
            await writer.drain()
            assert await asyncio.wait_for(reader.read(), READ_TIMEOUT) == b""
            writer.close()
            # Gateway still accepts new connections afterwards.
            _, w2 = await h.open_node("cam-2")
            await protocol.write_message(
                w2, make_message("HEARTBEAT", node_id="cam-2", sent_at=0)
            )

    asyncio.run(go())


# ----------------------------------------------------------------------
# monitor auth


def test_subscribe_before_auth_rejected(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            monitor = await h.open_monitor()
            await monitor.send(make_message("SUBSCRIBE"))
            msg = await monitor.read()
            assert msg["type"] == "ERROR"
            assert msg["code"] == "auth_required"

    asyncio.run(go())


def test_credentials_auth_paths(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            good = await h.open_monitor()
            resp = await good.auth()
            assert resp["ok"] is True and resp["session_id"]
            bad = await h.open_monitor()
            resp = await bad.auth(password="wrong")
            assert resp["ok"] is False and resp["reason"]

    asyncio.run(go())


def test_face_auth_end_to_end(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            monitor = await h.open_monitor()
            crop = model_artifacts.crop_of(subject=0, which=0)
            await monitor.send(
                make_message("AUTH_REQUEST", method="face", crop=crop.tolist())
            )
            resp = await monitor.read_type("AUTH_RESPONSE")
            assert resp["ok"] is True
            assert resp["method"] == "face"
            assert resp["operator_id"] == subject_name(0)

    asyncio.run(go())


def test_face_auth_rejects_bad_crop(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            monitor = await h.open_monitor()
            rng = np.random.default_rng(0)
            await monitor.send(
                make_message(
                    "AUTH_REQUEST", method="face", crop=rng.uniform(0, 1, 256).tolist()
                )
            )
            resp = await monitor.read_type("AUTH_RESPONSE")
            assert resp["ok"] is False

    asyncio.run(go())


def test_version_mismatch_gets_version_error(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            monitor = await h.open_monitor()
            msg = make_message("SUBSCRIBE")
            msg["protocol_version"] = 99
            await monitor.send(msg)
            reply = await monitor.read()
            assert reply["type"] == "ERROR"
            assert reply["code"] == "version"

    asyncio.run(go())


# ----------------------------------------------------------------------
# pipeline through real frames


def test_known_subject_and_guest_sightings(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            _, writer = await h.open_node()
            await protocol.write_message(writer, subject_frame(0, sequence=1))
            await protocol.write_message(
                writer, subject_frame(KNOWN_SUBJECTS, sequence=2)
            )
            await h.gateway.wait_for_sightings(2)
            log_lines = [
                json.loads(line)
                for line in Path(gateway_paths["sightings_log_path"]).read_text().splitlines()
            ]
            sightings = [l for l in log_lines if l["kind"] == "sighting"]
            assert len(sightings) == 2
            assert sightings[0]["display_name"] == subject_name(0)
            assert sightings[0]["guest_enrollment"] is False
            assert sightings[1]["identity_id"] == "guest-1"
            assert sightings[1]["guest_enrollment"] is True
            assert all(l["node_id"] == "cam" for l in sightings)
            # Guest crop persisted beside the registry.
            crop_path = Path(sightings[1]["crop_path"])
            assert crop_path.exists()

    asyncio.run(go())


def test_pipeline_determinism(gateway_paths, model_artifacts, tmp_path):
    config = GatewayConfig(node_port=0, monitor_port=0, **gateway_paths)
    frame = subject_frame(2, sequence=1)
    results = []
    for run in range(2):
        registry = model_artifacts.known_registry(tmp_path / f"reg-{run}.jsonl")
        gateway = Gateway(config, clock=ManualClock(), registry=registry)
        events = gateway.process_frame(frame)
        results.append(
            [
                (e.identity_id, e.display_name, e.distance, e.confidence,
                 e.box.to_dict(), e.frame_sequence)
                for e in events
            ]
        )
    assert results[0] == results[1]
    assert results[0]


# ----------------------------------------------------------------------
# interval batching


def test_interval_batching_matches_discrete_time_oracle(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            fast = await h.open_monitor()
            slow = await h.open_monitor()
            await fast.auth()
            await slow.auth()
            await fast.subscribe(interval=2)
            await slow.subscribe(interval=5)
            await asyncio.sleep(0.05)

            # Uniform events: one per simulated second for 10 seconds.
            for second in range(10):
                await h.gateway._dispatch_events(
                    [fake_event(second, timestamp_ms=h.clock.now_ms())]
                )
                await h.clock.advance(1.0)
            # Drain: collect batches from each monitor.
            fast_batches, slow_batches = [], []
            for sink, batches in ((fast, fast_batches), (slow, slow_batches)):
                while True:
                    try:
                        msg = await asyncio.wait_for(
                            protocol.read_message(sink.reader), 0.3
                        )
                    except asyncio.TimeoutError:
                        break
                    if msg and msg["type"] == "SIGHTING_BATCH":
                        batches.append(msg)
            assert len(fast_batches) == 5  # flushes at t=2,4,6,8,10
            assert len(slow_batches) == 2  # flushes at t=5,10
            assert sum(b["count"] for b in fast_batches) == 10
            assert sum(b["count"] for b in slow_batches) == 10
            for batch in fast_batches + slow_batches:
                stamps = [e["timestamp_ms"] for e in batch["events"]]
                assert stamps == sorted(stamps)

    asyncio.run(go())


def test_empty_buffer_sends_nothing(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            monitor = await h.open_monitor()
            await monitor.auth()
            await monitor.subscribe(interval=2)
            await asyncio.sleep(0.05)
            await h.clock.advance(6.0)
            await monitor.expect_nothing()

    asyncio.run(go())


def test_no_events_from_before_subscribe(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            monitor = await h.open_monitor()
            await monitor.auth()
            await h.gateway._dispatch_events([fake_event(1)])
            await monitor.subscribe(interval=2)
            await asyncio.sleep(0.05)
            await h.gateway._dispatch_events([fake_event(2)])
            await h.clock.advance(2.5)
            batch = await monitor.read_type("SIGHTING_BATCH")
            assert batch["count"] == 1
            assert batch["events"][0]["frame_sequence"] == 2

    asyncio.run(go())


# ----------------------------------------------------------------------
# alerts


def test_blacklist_alert_bypasses_batching(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            monitor = await h.open_monitor()
            await monitor.auth()
            await monitor.subscribe(interval=5)
            await asyncio.sleep(0.05)

            target_id = sorted(h.gateway.registry.records)[0]
            await monitor.send(
                make_message("STATUS_UPDATE", identity_id=target_id, status="blacklist")
            )
            echo = await monitor.read_type("STATUS_UPDATE")
            assert echo["status"] == "blacklist" and echo["applied"] is True

            await h.gateway._dispatch_events(
                [
                    SightingEvent(
                        identity_id=target_id,
                        display_name="x",
                        distance=0.1,
                        confidence=0.95,
                        box=BoundingBox(x=1, y=1, w=5, h=5, score=0.9),
                        node_id="cam",
                        timestamp_ms=0,
                        frame_sequence=1,
                        status="blacklist",
                    )
                ]
            )
            # No clock advance: the alert must arrive before any flush.
            alert = await monitor.read_type("ALERT")
            assert alert["reason"] == "blacklist"
            assert alert["event"]["identity_id"] == target_id

    asyncio.run(go())


def test_neutral_sighting_raises_no_alert(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            monitor = await h.open_monitor()
            await monitor.auth()
            await monitor.subscribe(interval=5)
            await asyncio.sleep(0.05)
            await h.gateway._dispatch_events([fake_event(1)])
            await monitor.expect_nothing()

    asyncio.run(go())


def test_whitelisted_identity_stops_alerting(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            _, writer = await h.open_node()
            monitor = await h.open_monitor()
            await monitor.auth()
            await monitor.subscribe(interval=5)
            await asyncio.sleep(0.05)

            record = next(
                r
                for r in h.gateway.registry.records.values()
                if r.display_name == subject_name(1)
            )
            await monitor.send(
                make_message("STATUS_UPDATE", identity_id=record.id, status="blacklist")
            )
            await monitor.read_type("STATUS_UPDATE")
            await protocol.write_message(writer, subject_frame(1, sequence=1))
            await h.gateway.wait_for_sightings(1)
            alert = await monitor.read_type("ALERT")
            assert alert["event"]["identity_id"] == record.id

            await monitor.send(
                make_message("STATUS_UPDATE", identity_id=record.id, status="whitelist")
            )
            await monitor.read_type("STATUS_UPDATE")
            await protocol.write_message(writer, subject_frame(1, sequence=2))
            await h.gateway.wait_for_sightings(2)
            await monitor.expect_nothing(quiet=0.3)
            assert h.gateway.metrics["alerts"] == 1

    asyncio.run(go())


# ----------------------------------------------------------------------
# status updates


def test_status_update_unknown_id_errors_requester_only(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            first = await h.open_monitor()
            second = await h.open_monitor()
            await first.auth()
            await second.auth()
            await first.send(
                make_message("STATUS_UPDATE", identity_id="nope", status="blacklist")
            )
            err = await first.read_type("ERROR")
            assert err["code"] == "not_found"
            await second.expect_nothing()

    asyncio.run(go())


def test_concurrent_status_updates_last_writer_wins(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            first = await h.open_monitor()
            second = await h.open_monitor()
            await first.auth()
            await second.auth()
            target = sorted(h.gateway.registry.records)[0]
            await first.send(
                make_message("STATUS_UPDATE", identity_id=target, status="blacklist")
            )
            await second.send(
                make_message("STATUS_UPDATE", identity_id=target, status="whitelist")
            )
            echoes = []
            for _ in range(2):
                echoes.append(await first.read_type("STATUS_UPDATE"))
            final = h.gateway.registry.get(target).status
            assert final == echoes[-1]["status"]
            assert {e["status"] for e in echoes} == {"blacklist", "whitelist"}

    asyncio.run(go())


def test_full_pipeline_queue_drops_oldest(gateway_paths, model_artifacts, tmp_path):
    async def go():
        config = GatewayConfig(
            node_port=0, monitor_port=0, pipeline_queue_size=2, **gateway_paths
        )
        registry = model_artifacts.known_registry(tmp_path / "reg.jsonl")
        gateway = Gateway(config, clock=ManualClock(), registry=registry)
        from sentinel.gateway.service import NodeState

        state = NodeState(node_id="cam")
        for seq in (1, 2, 3):
            gateway._ingest_frame(state, blank_frame(sequence=seq))
        assert gateway.metrics["frames_dropped_queue"] == 1
        assert gateway._queue.qsize() == 2
        # The oldest frame went; the two newest remain in order.
        kept = [gateway._queue.get_nowait().sequence for _ in range(2)]
        assert kept == [2, 3]

    asyncio.run(go())


def test_node_liveness_sweep_marks_dead(gateway_paths, model_artifacts, tmp_path):
    async def go():
        config = GatewayConfig(node_port=0, monitor_port=0, **gateway_paths)
        registry = model_artifacts.known_registry(tmp_path / "reg.jsonl")
        clock = ManualClock(start_ms=100_000)
        gateway = Gateway(config, clock=clock, registry=registry)
        from sentinel.gateway.service import NodeState

        state = NodeState(node_id="cam", last_heartbeat_ms=clock.now_ms())
        gateway.nodes["cam"] = state
        # Two missed intervals: still considered alive.
        gateway._sweep_node_liveness(clock.now_ms() + 10_000)
        assert not state.reported_dead
        # Past three missed 5-second heartbeats: reported dead once.
        gateway._sweep_node_liveness(clock.now_ms() + 15_500)
        assert state.reported_dead

    asyncio.run(go())


# ----------------------------------------------------------------------
# delivery failures


def test_unreachable_session_torn_down_after_three_failures(
    gateway_paths, model_artifacts
):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:

            class FailingTransport:
                kind = "stub"
                closed = False

                async def send(self, message):
                    raise ConnectionError("gone")

                async def close(self):
                    self.closed = True

            from sentinel.gateway.service import MonitorSession

            transport = FailingTransport()
            session = MonitorSession(
                session_id="s1",
                transport=transport,
                authenticated=True,
                subscribed=True,
            )
            h.gateway.sessions["s1"] = session
            for i in range(3):
                await h.gateway._dispatch_events([fake_event(i, status="blacklist")])
            assert "s1" not in h.gateway.sessions
            assert transport.closed

    asyncio.run(go())


# ----------------------------------------------------------------------
# websocket transport


def test_websocket_monitor_full_path(gateway_paths, model_artifacts):
    async def go():
        async with Harness(gateway_paths, model_artifacts) as h:
            host, port = h.gateway.monitor_address
            reader, writer = await asyncio.open_connection(host, port)
            await ws.client_handshake(reader, writer, f"{host}:{port}")

            async def send(msg):
                payload = protocol.encode_payload(msg)
                writer.write(ws.encode_ws_frame(ws.OP_TEXT, payload, mask=True))
                await writer.drain()

            async def recv():
                result = await asyncio.wait_for(
                    ws.read_ws_message(reader, writer), READ_TIMEOUT
                )
                assert result is not None
                return protocol.decode_payload(result[1])

            await send(
                make_message(
                    "AUTH_REQUEST",
                    method="credentials",
                    operator_id="op-alice",
                    password=OPERATOR_PASSWORD,
                )
            )
            resp = await recv()
            assert resp["type"] == "AUTH_RESPONSE" and resp["ok"] is True
            await send(make_message("SUBSCRIBE"))
            await send(make_message("SET_INTERVAL", seconds=1))
            await asyncio.sleep(0.05)
            await h.gateway._dispatch_events([fake_event(1)])
            await h.clock.advance(1.2)
            batch = await recv()
            assert batch["type"] == "SIGHTING_BATCH"
            assert batch["count"] == 1
            writer.close()

    asyncio.run(go())
