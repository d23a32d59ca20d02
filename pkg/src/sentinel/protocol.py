"""Length-prefixed wire protocol shared by nodes, gateway, and monitors.

Every message on a raw TCP link is a 4-byte big-endian unsigned payload
length followed by the payload. Control messages are canonical JSON
objects (sorted keys, no whitespace) carrying ``type`` and
``protocol_version``. FRAME messages instead carry one 0x01 marker byte
followed by the binary frame layout; JSON text always starts with '{',
so the first payload byte disambiguates.

Over the browser-facing WebSocket transport the same payloads travel as
one WebSocket message each (text for JSON, binary for frames); only the
outer framing differs.
"""

from __future__ import annotations

import asyncio
import json
import socket
import struct
from typing import Any

from sentinel.detection.frame import Frame, decode_frame, encode_frame
from sentinel.errors import ProtocolError

PROTOCOL_VERSION = 1
MAX_PAYLOAD = 16 * 1024 * 1024  # 16 MiB
FRAME_MARKER = 0x01

MESSAGE_TYPES = frozenset(
    {
        "NODE_HELLO",
        "FRAME",
        "HEARTBEAT",
        "AUTH_REQUEST",
        "AUTH_RESPONSE",
        "SUBSCRIBE",
        "SET_INTERVAL",
        "SIGHTING_BATCH",
        "ALERT",
        "STATUS_UPDATE",
        "ERROR",
    }
)

Message = dict[str, Any]


def make_message(msg_type: str, **body: Any) -> Message:
    if msg_type not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {msg_type!r}")
    msg: Message = {"type": msg_type, "protocol_version": PROTOCOL_VERSION}
    msg.update(body)
    return msg


def encode_payload(message: Message | Frame) -> bytes:
    """Payload bytes for one message (without the length prefix)."""
    if isinstance(message, Frame):
        return bytes([FRAME_MARKER]) + encode_frame(message)
    if message.get("type") == "FRAME" and isinstance(message.get("frame"), Frame):
        return bytes([FRAME_MARKER]) + encode_frame(message["frame"])
    if message.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {message.get('type')!r}")
    return json.dumps(message, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_payload(payload: bytes) -> Message:
    """Parse one payload; FRAME payloads come back as {'type': 'FRAME',
    'frame': Frame, 'protocol_version': 1}."""
    if not payload:
        raise ProtocolError("empty payload")
    if payload[0] == FRAME_MARKER:
        try:
            frame = decode_frame(payload[1:])
        except (ValueError, UnicodeDecodeError) as exc:
            raise ProtocolError(f"bad frame payload: {exc}") from exc
        return {"type": "FRAME", "protocol_version": PROTOCOL_VERSION, "frame": frame}
    try:
        msg = json.loads(payload.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"payload is not valid JSON: {exc}") from exc
    if not isinstance(msg, dict):
        raise ProtocolError("payload must be a JSON object")
    if msg.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {msg.get('type')!r}")
    return msg


def check_version(message: Message) -> None:
    if message.get("protocol_version") != PROTOCOL_VERSION:
        raise ProtocolError(
            f"protocol version {message.get('protocol_version')!r} unsupported"
        )


def encode(message: Message | Frame) -> bytes:
    """Full wire bytes: length prefix plus payload."""
    payload = encode_payload(message)
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return struct.pack(">I", len(payload)) + payload


def decode(data: bytes) -> Message:
    """Decode one complete wire message from exact bytes."""
    if len(data) < 4:
        raise ProtocolError("short read: missing length prefix")
    (length,) = struct.unpack(">I", data[:4])
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds {MAX_PAYLOAD}")
    if len(data) != 4 + length:
        raise ProtocolError(f"expected {4 + length} bytes, got {len(data)}")
    return decode_payload(data[4:])


# ----------------------------------------------------------------------
# Async stream helpers (gateway side).


async def read_message(reader: asyncio.StreamReader) -> Message | None:
    """Read one message; None on clean EOF at a message boundary."""
    try:
        header = await reader.readexactly(4)
    except asyncio.IncompleteReadError as exc:
        if not exc.partial:
            return None
        raise ProtocolError("connection closed mid-header") from exc
    (length,) = struct.unpack(">I", header)
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds {MAX_PAYLOAD}")
    try:
        payload = await reader.readexactly(length)
    except asyncio.IncompleteReadError as exc:
        raise ProtocolError("connection closed mid-payload") from exc
    return decode_payload(payload)


async def write_message(writer: asyncio.StreamWriter, message: Message | Frame) -> None:
    writer.write(encode(message))
    await writer.drain()


# ----------------------------------------------------------------------
# Blocking socket helpers (node side).


def recv_exact(sock: socket.socket, length: int) -> bytes:
    chunks = []
    remaining = length
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ProtocolError("connection closed by peer")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def send_message(sock: socket.socket, message: Message | Frame) -> None:
    sock.sendall(encode(message))


def recv_message(sock: socket.socket) -> Message:
    (length,) = struct.unpack(">I", recv_exact(sock, 4))
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds {MAX_PAYLOAD}")
    return decode_payload(recv_exact(sock, length))
