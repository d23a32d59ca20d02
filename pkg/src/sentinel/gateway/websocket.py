"""Minimal RFC 6455 WebSocket support for the monitor port.

The monitor listener accepts both raw length-prefixed connections and
browser WebSocket connections on one port, telling them apart by the
first byte (an HTTP upgrade starts with 'G'; a length prefix for a
bounded payload starts 0x00/0x01). Only the pieces the console needs
are implemented: the server handshake, unfragmented and fragmented
text/binary messages, close, and ping/pong. Client-side masking is
included so tests can drive the server with the same codec.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import os
import struct

from sentinel.errors import ProtocolError

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA

MAX_WS_PAYLOAD = 16 * 1024 * 1024


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


async def server_handshake(
    reader: asyncio.StreamReader,
    writer: asyncio.StreamWriter,
    preread: bytes = b"",
) -> None:
    """Complete the HTTP upgrade; ``preread`` holds already-sniffed bytes."""
    raw = preread
    while b"\r\n\r\n" not in raw:
        chunk = await reader.read(4096)
        if not chunk:
            raise ProtocolError("connection closed during websocket handshake")
        raw += chunk
        if len(raw) > 64 * 1024:
            raise ProtocolError("oversized websocket handshake")
    head = raw.split(b"\r\n\r\n", 1)[0].decode("latin-1")
    lines = head.split("\r\n")
    if not lines[0].startswith("GET "):
        raise ProtocolError(f"not a websocket upgrade: {lines[0]!r}")
    headers = {}
    for line in lines[1:]:
        if ":" in line:
            name, value = line.split(":", 1)
            headers[name.strip().lower()] = value.strip()
    key = headers.get("sec-websocket-key")
    if not key or "websocket" not in headers.get("upgrade", "").lower():
        raise ProtocolError("missing websocket upgrade headers")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
        "\r\n"
    )
    writer.write(response.encode("ascii"))
    await writer.drain()


def encode_ws_frame(opcode: int, payload: bytes, mask: bool = False) -> bytes:
    header = bytes([0x80 | opcode])
    length = len(payload)
    mask_bit = 0x80 if mask else 0
    if length < 126:
        header += bytes([mask_bit | length])
    elif length < 1 << 16:
        header += bytes([mask_bit | 126]) + struct.pack(">H", length)
    else:
        header += bytes([mask_bit | 127]) + struct.pack(">Q", length)
    if mask:
        key = os.urandom(4)
        masked = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return header + key + masked
    return header + payload


async def read_ws_frame(reader: asyncio.StreamReader) -> tuple[int, bool, bytes]:
    """One raw frame: (opcode, fin, unmasked payload).

    EOF at a frame boundary counts as a close; EOF inside a frame is a
    protocol error.
    """
    try:
        first = await reader.readexactly(2)
    except asyncio.IncompleteReadError as exc:
        if not exc.partial:
            return OP_CLOSE, True, b""
        raise ProtocolError("websocket connection closed mid-frame") from exc
    fin = bool(first[0] & 0x80)
    opcode = first[0] & 0x0F
    masked = bool(first[1] & 0x80)
    length = first[1] & 0x7F
    if length == 126:
        (length,) = struct.unpack(">H", await reader.readexactly(2))
    elif length == 127:
        (length,) = struct.unpack(">Q", await reader.readexactly(8))
    if length > MAX_WS_PAYLOAD:
        raise ProtocolError(f"websocket payload of {length} bytes too large")
    key = await reader.readexactly(4) if masked else b""
    payload = await reader.readexactly(length) if length else b""
    if masked:
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return opcode, fin, payload


async def read_ws_message(
    reader: asyncio.StreamReader, writer: asyncio.StreamWriter
) -> tuple[int, bytes] | None:
    """One application message, handling continuation, ping, and close.

    Returns (opcode, payload) for text/binary, or None once closed.
    """
    opcode = None
    buffer = b""
    while True:
        frame_op, fin, payload = await read_ws_frame(reader)
        if frame_op == OP_CLOSE:
            try:
                writer.write(encode_ws_frame(OP_CLOSE, b""))
                await writer.drain()
            except (ConnectionError, RuntimeError):
                pass
            return None
        if frame_op == OP_PING:
            writer.write(encode_ws_frame(OP_PONG, payload))
            await writer.drain()
            continue
        if frame_op == OP_PONG:
            continue
        if frame_op in (OP_TEXT, OP_BINARY):
            if opcode is not None:
                raise ProtocolError("interleaved websocket message start")
            opcode = frame_op
        elif frame_op == OP_CONT:
            if opcode is None:
                raise ProtocolError("websocket continuation without a start frame")
        else:
            raise ProtocolError(f"unsupported websocket opcode {frame_op}")
        buffer += payload
        if len(buffer) > MAX_WS_PAYLOAD:
            raise ProtocolError("websocket message too large")
        if fin:
            return opcode, buffer


async def client_handshake(
    reader: asyncio.StreamReader,
    writer: asyncio.StreamWriter,
    host: str,
    path: str = "/",
) -> None:
    """Initiate an upgrade (test/tooling client)."""
    key = base64.b64encode(os.urandom(16)).decode("ascii")
    request = (
        f"GET {path} HTTP/1.1\r\n"
        f"Host: {host}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n"
        "\r\n"
    )
    writer.write(request.encode("ascii"))
    await writer.drain()
    raw = b""
    while b"\r\n\r\n" not in raw:
        chunk = await reader.read(4096)
        if not chunk:
            raise ProtocolError("connection closed during websocket handshake")
        raw += chunk
    status = raw.split(b"\r\n", 1)[0].decode("latin-1")
    if "101" not in status:
        raise ProtocolError(f"websocket upgrade refused: {status}")
    expected = accept_key(key)
    if expected.encode("ascii") not in raw:
        raise ProtocolError("websocket accept key mismatch")
