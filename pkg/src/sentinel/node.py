"""Camera-node agent: reads frames from a directory or the synthetic
generator and streams them to the gateway.

Single-threaded send loop: connect, NODE_HELLO, frames at the
configured rate with a HEARTBEAT every five seconds, reconnect with
exponential backoff on failure. Sequence numbers keep increasing across
reconnects so the gateway's ordering check never sees a reset.
"""

from __future__ import annotations

import argparse
import logging
import socket
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from sentinel import protocol
from sentinel.clock import SyncClock
from sentinel.detection.frame import Frame, frame_from_array
from sentinel.errors import ConfigError, ProtocolError
from sentinel.pnm import read_pnm
from sentinel.protocol import make_message
from sentinel.synthetic import identity_label, make_stream, write_stream_source

logger = logging.getLogger(__name__)

HEARTBEAT_INTERVAL_S = 5.0
BACKOFF_INITIAL_S = 1.0
BACKOFF_CAP_S = 30.0
SYNTHETIC_DEFAULT_FRAMES = 20
SYNTHETIC_SUBJECT_POOL = 10


@dataclass
class NodeConfig:
    node_id: str
    gateway_host: str
    gateway_port: int
    source: str  # directory path or "synthetic:<seed>[:<frames>]"
    frame_rate: float = 5.0
    loop: bool = False
    retry_budget: int = 5
    sidecar_path: str | None = None

    def __post_init__(self):
        if not self.node_id:
            raise ConfigError("node_id must be nonempty")
        if not 0 < self.frame_rate <= 30:
            raise ConfigError(f"frame_rate must lie in (0, 30], got {self.frame_rate}")


def _synthetic_params(source: str) -> tuple[int, int]:
    parts = source.split(":")
    seed = int(parts[1]) if len(parts) > 1 and parts[1] else 0
    frames = int(parts[2]) if len(parts) > 2 and parts[2] else SYNTHETIC_DEFAULT_FRAMES
    return seed, frames


def ingest_source(config: NodeConfig, clock=None) -> Iterator[Frame]:
    """Ordered frame stream from the configured source.

    Directory sources read image files in lexicographic order;
    unreadable files are skipped with a warning. Loop mode restarts from
    the first file without resetting the sequence counter. Synthetic
    sources generate a deterministic planted-face stream for the seed
    and optionally write its ground-truth sidecar.
    """
    clock = clock if clock is not None else SyncClock()
    sequence = 0

    if config.source.startswith("synthetic:"):
        seed, n_frames = _synthetic_params(config.source)
        labels = [
            [identity_label(i % SYNTHETIC_SUBJECT_POOL)] for i in range(n_frames)
        ]
        stream = make_stream(seed=seed, node_id=config.node_id, labels_per_frame=labels)
        if config.sidecar_path:
            write_stream_source_sidecar_only(stream, config.sidecar_path)
        while True:
            for frame, _ in stream:
                sequence += 1
                yield Frame(
                    node_id=config.node_id,
                    sequence=sequence,
                    timestamp_ms=clock.now_ms(),
                    width=frame.width,
                    height=frame.height,
                    channels=frame.channels,
                    pixels=frame.pixels,
                )
            if not config.loop:
                return

    source_dir = Path(config.source)
    if not source_dir.is_dir():
        raise ConfigError(f"source directory not found: {config.source}")
    files = sorted(
        p for p in source_dir.iterdir() if p.suffix.lower() in (".pgm", ".ppm")
    )
    if not files:
        raise ConfigError(f"no .pgm/.ppm files in {config.source}")
    while True:
        for path in files:
            try:
                pixels = read_pnm(path)
            except (OSError, ValueError) as exc:
                logger.warning("skipping unreadable %s: %s", path, exc)
                continue
            sequence += 1
            yield frame_from_array(
                node_id=config.node_id,
                sequence=sequence,
                timestamp_ms=clock.now_ms(),
                pixels=pixels,
            )
        if not config.loop:
            return


def write_stream_source_sidecar_only(stream, sidecar_path: str) -> None:
    lines = []
    for frame, planted in stream:
        for p in planted:
            lines.append(
                f"{frame.sequence} {p.label} "
                f"{p.box.x:.1f} {p.box.y:.1f} {p.box.w:.1f} {p.box.h:.1f}"
            )
    Path(sidecar_path).write_text("\n".join(lines) + ("\n" if lines else ""))


def _connect(config: NodeConfig) -> socket.socket:
    sock = socket.create_connection(
        (config.gateway_host, config.gateway_port), timeout=10.0
    )
    protocol.send_message(sock, make_message("NODE_HELLO", node_id=config.node_id))
    return sock


def run_node(config: NodeConfig, clock=None) -> int:
    """Stream the source to the gateway; returns a process exit status.

    Reconnects with exponential backoff (1 s doubling, capped at 30 s);
    once the retry budget is exhausted the node gives up with status 1.
    A source that ends cleanly sends one final heartbeat and exits 0.
    """
    clock = clock if clock is not None else SyncClock()
    frames = ingest_source(config, clock=clock)
    pending: Frame | None = None
    sock: socket.socket | None = None
    retries_used = 0
    backoff = BACKOFF_INITIAL_S
    period = 1.0 / config.frame_rate
    last_heartbeat = clock.now_ms()

    while True:
        if sock is None:
            try:
                sock = _connect(config)
                retries_used = 0
                backoff = BACKOFF_INITIAL_S
                logger.info(
                    "connected to gateway %s:%d", config.gateway_host, config.gateway_port
                )
            except OSError as exc:
                logger.warning(
                    "connect failed (retry %d/%d): %s",
                    retries_used,
                    config.retry_budget,
                    exc,
                )
                if retries_used >= config.retry_budget:
                    logger.error("retry budget exhausted; giving up")
                    return 1
                retries_used += 1
                clock.sleep(backoff)
                backoff = min(backoff * 2, BACKOFF_CAP_S)
                continue

        if pending is None:
            try:
                raw = next(frames)
            except StopIteration:
                try:
                    protocol.send_message(
                        sock,
                        make_message(
                            "HEARTBEAT", node_id=config.node_id, sent_at=clock.now_ms()
                        ),
                    )
                    sock.close()
                except OSError:
                    pass
                logger.info("source exhausted; clean exit")
                return 0
            pending = Frame(
                node_id=raw.node_id,
                sequence=raw.sequence,
                timestamp_ms=clock.now_ms(),
                width=raw.width,
                height=raw.height,
                channels=raw.channels,
                pixels=raw.pixels,
            )

        try:
            if (clock.now_ms() - last_heartbeat) / 1000.0 >= HEARTBEAT_INTERVAL_S:
                protocol.send_message(
                    sock,
                    make_message(
                        "HEARTBEAT", node_id=config.node_id, sent_at=clock.now_ms()
                    ),
                )
                last_heartbeat = clock.now_ms()
            protocol.send_message(sock, pending)
            pending = None
            clock.sleep(period)
        except (OSError, ProtocolError) as exc:
            logger.warning("send failed, reconnecting: %s", exc)
            try:
                sock.close()
            except OSError:
                pass
            sock = None


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sentinel-node", description=__doc__)
    parser.add_argument("--id", required=True, dest="node_id", help="node identifier")
    parser.add_argument("--gateway", required=True, help="host:port of the gateway")
    parser.add_argument(
        "--source", required=True, help="image directory or synthetic:<seed>[:<frames>]"
    )
    parser.add_argument("--fps", type=float, default=5.0, help="frames per second")
    parser.add_argument("--loop", action="store_true", help="repeat the source forever")
    parser.add_argument("--retry-budget", type=int, default=5)
    parser.add_argument("--sidecar", help="write synthetic ground truth to this path")
    parser.add_argument(
        "--detect-local",
        action="store_true",
        help="reserved: on-node detection is not implemented",
    )
    parser.add_argument("--log-level", default="INFO")
    args = parser.parse_args(argv)

    if args.detect_local:
        parser.error("--detect-local is reserved and not implemented")
    host, _, port = args.gateway.partition(":")
    if not port:
        parser.error("--gateway must be host:port")

    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = NodeConfig(
            node_id=args.node_id,
            gateway_host=host,
            gateway_port=int(port),
            source=args.source,
            frame_rate=args.fps,
            loop=args.loop,
            retry_budget=args.retry_budget,
            sidecar_path=args.sidecar,
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run_node(config)


if __name__ == "__main__":
    sys.exit(main())
