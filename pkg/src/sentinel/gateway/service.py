"""The base station: node ingest, frame pipeline, monitor fan-out.

One asyncio task per connection. Frames pass through a bounded queue to
a single pipeline task (detect -> crop -> embed -> classify -> record);
a single timer task flushes per-session batches. Registry mutations all
happen in synchronous sections on the event loop, so writes are
serialized without explicit locking.

Monitors authenticate with credentials or a face crop, then SUBSCRIBE
to receive interval-batched sightings; blacklist alerts bypass the
batching and go out immediately to every authenticated session.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import struct
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sentinel import protocol
from sentinel.clock import RealClock
from sentinel.detection.boxes import BoundingBox
from sentinel.detection.cascade import crop_align, detect_faces
from sentinel.detection.frame import Frame
from sentinel.embedding.network import EmbedderNetwork, embed, load_network
from sentinel.errors import NotFoundError, ProtocolError
from sentinel.gateway import websocket as ws
from sentinel.gateway.config import GatewayConfig
from sentinel.protocol import Message, make_message
from sentinel.registry import GUEST_REINFORCE_CONFIDENCE, Registry
from sentinel.synthetic import make_stage_scorers

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SightingEvent:
    """One recognized (or guest-enrolled) face occurrence."""

    identity_id: str
    display_name: str
    distance: float
    confidence: float
    box: BoundingBox
    node_id: str
    timestamp_ms: int
    frame_sequence: int
    status: str = "neutral"
    guest_enrollment: bool = False
    crop_path: str | None = None

    def to_dict(self) -> dict:
        doc = {
            "identity_id": self.identity_id,
            "display_name": self.display_name,
            "distance": self.distance,
            "confidence": self.confidence,
            "box": self.box.to_dict(),
            "node_id": self.node_id,
            "timestamp_ms": self.timestamp_ms,
            "frame_sequence": self.frame_sequence,
            "status": self.status,
            "guest_enrollment": self.guest_enrollment,
        }
        if self.crop_path is not None:
            doc["crop_path"] = self.crop_path
        return doc


class RawTransport:
    """Length-prefixed messages over a plain TCP stream."""

    kind = "raw"

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer

    async def send(self, message: Message | Frame) -> None:
        await protocol.write_message(self.writer, message)

    async def recv(self) -> Message | None:
        return await protocol.read_message(self.reader)

    async def close(self) -> None:
        try:
            self.writer.close()
            await self.writer.wait_closed()
        except (ConnectionError, RuntimeError):
            pass


class WsTransport:
    """The same payloads carried as WebSocket messages."""

    kind = "websocket"

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer

    async def send(self, message: Message | Frame) -> None:
        payload = protocol.encode_payload(message)
        opcode = ws.OP_BINARY if payload[:1] == bytes([protocol.FRAME_MARKER]) else ws.OP_TEXT
        self.writer.write(ws.encode_ws_frame(opcode, payload))
        await self.writer.drain()

    async def recv(self) -> Message | None:
        result = await ws.read_ws_message(self.reader, self.writer)
        if result is None:
            return None
        _, payload = result
        return protocol.decode_payload(payload)

    async def close(self) -> None:
        try:
            self.writer.write(ws.encode_ws_frame(ws.OP_CLOSE, b""))
            await self.writer.drain()
        except (ConnectionError, RuntimeError):
            pass
        try:
            self.writer.close()
            await self.writer.wait_closed()
        except (ConnectionError, RuntimeError):
            pass


@dataclass
class MonitorSession:
    session_id: str
    transport: object
    operator_id: str = ""
    authenticated: bool = False
    subscribed: bool = False
    interval_s: float = 5.0
    buffer: list[SightingEvent] = field(default_factory=list)
    next_flush_ms: int = 0
    send_failures: int = 0


@dataclass
class NodeState:
    node_id: str
    last_sequence: int = 0
    last_heartbeat_ms: int = 0
    reported_dead: bool = False


class Gateway:
    def __init__(
        self,
        config: GatewayConfig,
        clock=None,
        registry: Registry | None = None,
        operator_registry: Registry | None = None,
        embedder: EmbedderNetwork | None = None,
        scorers=None,
    ):
        self.config = config
        self.clock = clock if clock is not None else RealClock()
        self.registry = registry if registry is not None else self._open_registry()
        self.operator_registry = (
            operator_registry
            if operator_registry is not None
            else self._open_operator_registry()
        )
        self.operator_credentials = self._load_credentials()
        self.embedder = embedder if embedder is not None else self._open_embedder()
        self.scorers = scorers if scorers is not None else make_stage_scorers()

        self.sessions: dict[str, MonitorSession] = {}
        self.nodes: dict[str, NodeState] = {}
        self.metrics = {
            "frames_received": 0,
            "frames_dropped_sequence": 0,
            "frames_dropped_queue": 0,
            "sightings": 0,
            "guest_enrollments": 0,
            "alerts": 0,
            "batches_sent": 0,
        }
        self._queue: asyncio.Queue[Frame] = asyncio.Queue(
            maxsize=config.pipeline_queue_size
        )
        self._sightings_seen = 0
        self._progress: asyncio.Condition | None = None
        self._servers: list[asyncio.base_events.Server] = []
        self._tasks: list[asyncio.Task] = []
        self.node_address: tuple[str, int] | None = None
        self.monitor_address: tuple[str, int] | None = None

    # ------------------------------------------------------------------
    # Construction helpers

    def _open_registry(self) -> Registry:
        path = Path(self.config.registry_path)
        if path.exists():
            return Registry.load(path)
        reg = Registry(guest_threshold=self.config.guest_threshold, path=path)
        return reg

    def _open_operator_registry(self) -> Registry:
        path = Path(self.config.operator_registry_path)
        if path.exists():
            return Registry.load(path)
        return Registry()

    def _load_credentials(self) -> dict[str, str]:
        path = Path(self.config.operator_credentials_path)
        if path.exists():
            return json.loads(path.read_text())
        return {}

    def _open_embedder(self) -> EmbedderNetwork:
        if self.config.embedder_path and Path(self.config.embedder_path).exists():
            return load_network(self.config.embedder_path)
        return EmbedderNetwork.initialize(
            d_in=self.config.crop_size**2, seed=self.config.embedder_seed
        )

    # ------------------------------------------------------------------
    # Lifecycle

    async def start(self) -> None:
        self._progress = asyncio.Condition()
        node_server = await asyncio.start_server(
            self._handle_node, self.config.node_host, self.config.node_port
        )
        monitor_server = await asyncio.start_server(
            self._handle_monitor, self.config.monitor_host, self.config.monitor_port
        )
        self._servers = [node_server, monitor_server]
        self.node_address = node_server.sockets[0].getsockname()[:2]
        self.monitor_address = monitor_server.sockets[0].getsockname()[:2]
        self._tasks = [
            asyncio.create_task(self._pipeline_loop(), name="gateway-pipeline"),
            asyncio.create_task(self._flush_loop(), name="gateway-flush"),
        ]
        logger.info(
            "gateway listening nodes=%s:%d monitors=%s:%d",
            *self.node_address,
            *self.monitor_address,
        )

    async def stop(self) -> None:
        for task in self._tasks:
            task.cancel()
        for task in self._tasks:
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass
        self._tasks = []
        for session in list(self.sessions.values()):
            await session.transport.close()
        self.sessions.clear()
        for server in self._servers:
            server.close()
            await server.wait_closed()
        self._servers = []

    async def wait_for_sightings(self, count: int, timeout: float = 30.0) -> None:
        """Block until the pipeline has produced ``count`` sightings."""
        assert self._progress is not None

        async def waiter():
            async with self._progress:
                await self._progress.wait_for(lambda: self._sightings_seen >= count)

        await asyncio.wait_for(waiter(), timeout)

    # ------------------------------------------------------------------
    # Node connections

    async def _handle_node(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        transport = RawTransport(reader, writer)
        peer = writer.get_extra_info("peername")
        try:
            first = await transport.recv()
        except ProtocolError as exc:
            logger.warning("node %s: bad first message: %s", peer, exc)
            await transport.close()
            return
        if first is None:
            await transport.close()
            return
        if first.get("type") != "NODE_HELLO" or not first.get("node_id"):
            await self._send_error(transport, "handshake", "first message must be NODE_HELLO")
            await transport.close()
            return
        try:
            protocol.check_version(first)
        except ProtocolError as exc:
            await self._send_error(transport, "version", str(exc))
            await transport.close()
            return
        node_id = str(first["node_id"])
        state = self.nodes.setdefault(node_id, NodeState(node_id=node_id))
        state.last_heartbeat_ms = self.clock.now_ms()
        state.reported_dead = False
        logger.info("node %s connected from %s", node_id, peer)
        try:
            while True:
                try:
                    msg = await transport.recv()
                except ProtocolError as exc:
                    logger.warning("node %s: protocol error: %s", node_id, exc)
                    break
                if msg is None:
                    break
                msg_type = msg.get("type")
                if msg_type == "FRAME":
                    self._ingest_frame(state, msg["frame"])
                elif msg_type == "HEARTBEAT":
                    state.last_heartbeat_ms = self.clock.now_ms()
                    state.reported_dead = False
                    await transport.send(
                        make_message("HEARTBEAT", node_id=node_id, echoed=True)
                    )
                elif msg_type == "NODE_HELLO":
                    continue  # idempotent re-hello after reconnect logic upstream
                else:
                    await self._send_error(
                        transport, "bad_request", f"unexpected {msg_type} from a node"
                    )
        finally:
            logger.info("node %s disconnected", node_id)
            await transport.close()

    def _ingest_frame(self, state: NodeState, frame: Frame) -> None:
        self.metrics["frames_received"] += 1
        if frame.node_id != state.node_id:
            logger.warning(
                "frame node_id %r does not match hello %r; dropped",
                frame.node_id,
                state.node_id,
            )
            return
        if frame.sequence <= state.last_sequence:
            self.metrics["frames_dropped_sequence"] += 1
            logger.warning(
                "node %s: out-of-order sequence %d (last %d); dropped",
                state.node_id,
                frame.sequence,
                state.last_sequence,
            )
            return
        state.last_sequence = frame.sequence
        if self._queue.full():
            try:
                self._queue.get_nowait()
                self.metrics["frames_dropped_queue"] += 1
            except asyncio.QueueEmpty:
                pass
        self._queue.put_nowait(frame)

    # ------------------------------------------------------------------
    # Frame pipeline

    async def _pipeline_loop(self) -> None:
        while True:
            frame = await self._queue.get()
            try:
                events = self.process_frame(frame)
                await self._dispatch_events(events)
            except Exception:
                logger.exception("pipeline failed on frame %d", frame.sequence)

    def process_frame(self, frame: Frame) -> list[SightingEvent]:
        """Detect, embed, and classify every face in one frame.

        A failure on one face logs and skips that face only. Guest
        enrollment happens inline when confidence falls below the
        threshold; strong re-sightings of a guest extend its gallery.
        """
        detections = detect_faces(frame, self.scorers, self.config.detector)
        now = self.clock.now_ms()
        events: list[SightingEvent] = []
        for detection in detections:
            try:
                crop = crop_align(frame, detection, self.config.crop_size)
                query = embed(self.embedder, crop)
                result = self.registry.classify(query)
                if result.is_guest_enrollment:
                    record = self.registry.enroll_guest(query, crop=crop, now_ms=now)
                    self.metrics["guest_enrollments"] += 1
                    crop_path = None
                    if self.registry.path is not None:
                        crop_path = str(
                            self.registry.path.parent / "guests" / f"{record.id}.pgm"
                        )
                    event = SightingEvent(
                        identity_id=record.id,
                        display_name=record.display_name,
                        distance=result.distance,
                        confidence=result.confidence,
                        box=detection.box,
                        node_id=frame.node_id,
                        timestamp_ms=now,
                        frame_sequence=frame.sequence,
                        status=record.status,
                        guest_enrollment=True,
                        crop_path=crop_path,
                    )
                else:
                    record = self.registry.get(result.identity_id)
                    if record.is_guest and result.confidence >= GUEST_REINFORCE_CONFIDENCE:
                        self.registry.reinforce_guest(record.id, query)
                    event = SightingEvent(
                        identity_id=record.id,
                        display_name=record.display_name,
                        distance=result.distance,
                        confidence=result.confidence,
                        box=detection.box,
                        node_id=frame.node_id,
                        timestamp_ms=now,
                        frame_sequence=frame.sequence,
                        status=record.status,
                    )
                events.append(event)
            except Exception:
                logger.exception(
                    "face at %s in frame %d skipped", detection.box, frame.sequence
                )
        return events

    async def _dispatch_events(self, events: list[SightingEvent]) -> None:
        for event in events:
            self._append_log("sighting", event)
            self.metrics["sightings"] += 1
            for session in self.sessions.values():
                if session.authenticated and session.subscribed:
                    session.buffer.append(event)
            if event.status == "blacklist":
                await self.raise_alert(event)
        self._sightings_seen += len(events)
        if self._progress is not None:
            async with self._progress:
                self._progress.notify_all()

    def _append_log(self, kind: str, event: SightingEvent) -> None:
        path = Path(self.config.sightings_log_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = {"kind": kind}
        doc.update(event.to_dict())
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(doc, sort_keys=True) + "\n")

    async def raise_alert(self, event: SightingEvent) -> None:
        """Immediate blacklist broadcast, bypassing interval batching."""
        self._append_log("alert", event)
        self.metrics["alerts"] += 1
        message = make_message("ALERT", reason="blacklist", event=event.to_dict())
        for session in list(self.sessions.values()):
            if session.authenticated:
                await self._send_to_session(session, message)

    # ------------------------------------------------------------------
    # Monitor connections

    async def _handle_monitor(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        # Sniff the transport: an HTTP upgrade starts with 'G'; a raw
        # length prefix for a <=16 MiB payload starts 0x00 or 0x01.
        try:
            first = await reader.readexactly(1)
        except (asyncio.IncompleteReadError, ConnectionError):
            writer.close()
            return
        transport: RawTransport | WsTransport
        first_message: Message | None = None
        try:
            if first == b"G":
                await ws.server_handshake(reader, writer, preread=first)
                transport = WsTransport(reader, writer)
            else:
                rest = await reader.readexactly(3)
                (length,) = struct.unpack(">I", first + rest)
                if length > protocol.MAX_PAYLOAD:
                    raise ProtocolError(f"payload length {length} exceeds maximum")
                payload = await reader.readexactly(length)
                first_message = protocol.decode_payload(payload)
                transport = RawTransport(reader, writer)
        except (ProtocolError, asyncio.IncompleteReadError, ConnectionError) as exc:
            logger.warning("monitor handshake failed: %s", exc)
            writer.close()
            return

        session = MonitorSession(session_id=uuid.uuid4().hex, transport=transport)
        try:
            if first_message is not None:
                await self._handle_monitor_message(session, first_message)
            while True:
                try:
                    msg = await transport.recv()
                except ProtocolError as exc:
                    logger.warning("monitor %s: protocol error: %s", session.session_id, exc)
                    break
                if msg is None:
                    break
                await self._handle_monitor_message(session, msg)
        finally:
            self.sessions.pop(session.session_id, None)
            await transport.close()

    async def _handle_monitor_message(self, session: MonitorSession, msg: Message) -> None:
        msg_type = msg.get("type")
        try:
            protocol.check_version(msg)
        except ProtocolError as exc:
            await self._send_error(session.transport, "version", str(exc))
            return
        if not session.authenticated:
            if msg_type == "AUTH_REQUEST":
                await self._handle_auth(session, msg)
            else:
                await self._send_error(
                    session.transport, "auth_required", f"{msg_type} requires authentication"
                )
            return
        if msg_type == "SUBSCRIBE":
            session.subscribed = True
            session.buffer.clear()
            session.next_flush_ms = self.clock.now_ms() + int(session.interval_s * 1000)
        elif msg_type == "SET_INTERVAL":
            seconds = msg.get("seconds")
            if not isinstance(seconds, (int, float)) or seconds < 1:
                await self._send_error(
                    session.transport, "bad_request", "interval must be a number >= 1"
                )
                return
            session.interval_s = float(seconds)
            session.next_flush_ms = self.clock.now_ms() + int(seconds * 1000)
        elif msg_type == "STATUS_UPDATE":
            await self._handle_status_update(session, msg)
        elif msg_type == "HEARTBEAT":
            await self._send_to_session(session, make_message("HEARTBEAT", echoed=True))
        elif msg_type == "AUTH_REQUEST":
            await self._handle_auth(session, msg)
        else:
            await self._send_error(
                session.transport, "bad_request", f"unexpected {msg_type} from a monitor"
            )

    async def _handle_auth(self, session: MonitorSession, msg: Message) -> None:
        method = msg.get("method")
        ok = False
        operator_id = ""
        reason = ""
        if method == "credentials":
            operator_id = str(msg.get("operator_id", ""))
            password = str(msg.get("password", ""))
            digest = hashlib.sha256(password.encode("utf-8")).hexdigest()
            stored = self.operator_credentials.get(operator_id)
            ok = stored is not None and stored == digest
            reason = "" if ok else "unknown operator or wrong password"
        elif method == "face":
            crop = msg.get("crop")
            expected = self.config.crop_size**2
            if not isinstance(crop, list) or len(crop) != expected:
                reason = f"face crop must hold {expected} values"
            elif len(self.operator_registry) == 0:
                reason = "no operators enrolled for face login"
            else:
                query = embed(self.embedder, np.clip(np.asarray(crop, dtype=np.float64), 0.0, 1.0))
                result = self.operator_registry.classify(query)
                if not result.is_guest_enrollment and result.confidence >= 0.5:
                    ok = True
                    operator_id = self.operator_registry.get(result.identity_id).display_name
                else:
                    reason = f"face not recognized (confidence {result.confidence:.2f})"
        else:
            reason = f"unknown auth method {method!r}"

        if ok:
            session.authenticated = True
            session.operator_id = operator_id
            self.sessions[session.session_id] = session
            await self._send_to_session(
                session,
                make_message(
                    "AUTH_RESPONSE",
                    ok=True,
                    session_id=session.session_id,
                    operator_id=operator_id,
                    method=method,
                ),
            )
            logger.info("monitor session %s authenticated (%s)", session.session_id, method)
        else:
            await self._send_to_session(
                session,
                make_message("AUTH_RESPONSE", ok=False, method=method, reason=reason),
            )

    async def _handle_status_update(self, session: MonitorSession, msg: Message) -> None:
        identity_id = str(msg.get("identity_id", ""))
        status = str(msg.get("status", ""))
        try:
            record = self.registry.set_status(identity_id, status, now_ms=self.clock.now_ms())
        except NotFoundError as exc:
            await self._send_error(session.transport, "not_found", str(exc))
            return
        except ValueError as exc:
            await self._send_error(session.transport, "bad_request", str(exc))
            return
        echo = make_message(
            "STATUS_UPDATE",
            identity_id=record.id,
            status=record.status,
            display_name=record.display_name,
            applied=True,
            by=session.operator_id,
        )
        for other in list(self.sessions.values()):
            if other.authenticated:
                await self._send_to_session(other, echo)

    # ------------------------------------------------------------------
    # Feed delivery

    async def _flush_loop(self) -> None:
        while True:
            await self.clock.sleep(self.config.flush_tick_seconds)
            now = self.clock.now_ms()
            self._sweep_node_liveness(now)
            for session, batch in self.flush_due(now):
                await self._send_to_session(session, batch)

    def flush_due(self, now_ms: int) -> list[tuple[MonitorSession, Message]]:
        """Collect SIGHTING_BATCH messages for every due session.

        Cadence is anchored at SUBSCRIBE (or the last SET_INTERVAL): a
        due session with an empty buffer sends nothing but keeps its
        schedule.
        """
        due = []
        for session in self.sessions.values():
            if not (session.authenticated and session.subscribed):
                continue
            if now_ms < session.next_flush_ms:
                continue
            interval_ms = max(1, int(session.interval_s * 1000))
            while session.next_flush_ms <= now_ms:
                session.next_flush_ms += interval_ms
            if not session.buffer:
                continue
            events = sorted(
                session.buffer, key=lambda e: (e.timestamp_ms, e.node_id, e.frame_sequence)
            )
            session.buffer = []
            batch = make_message(
                "SIGHTING_BATCH",
                events=[e.to_dict() for e in events],
                count=len(events),
                interval=session.interval_s,
            )
            self.metrics["batches_sent"] += 1
            due.append((session, batch))
        return due

    def _sweep_node_liveness(self, now_ms: int) -> None:
        timeout_ms = int(
            self.config.heartbeat_interval_seconds
            * self.config.heartbeat_missed_limit
            * 1000
        )
        for state in self.nodes.values():
            if state.reported_dead or state.last_heartbeat_ms == 0:
                continue
            if now_ms - state.last_heartbeat_ms > timeout_ms:
                state.reported_dead = True
                logger.warning(
                    "node %s considered dead (no heartbeat for %.1fs)",
                    state.node_id,
                    (now_ms - state.last_heartbeat_ms) / 1000,
                )

    async def _send_to_session(self, session: MonitorSession, message: Message) -> None:
        try:
            await session.transport.send(message)
            session.send_failures = 0
        except Exception as exc:
            session.send_failures += 1
            logger.warning(
                "send to session %s failed (%d consecutive): %s",
                session.session_id,
                session.send_failures,
                exc,
            )
            if session.send_failures >= 3:
                logger.warning("tearing down unreachable session %s", session.session_id)
                self.sessions.pop(session.session_id, None)
                await session.transport.close()

    async def _send_error(self, transport, code: str, message: str) -> None:
        try:
            await transport.send(make_message("ERROR", code=code, message=message))
        except Exception:
            pass
