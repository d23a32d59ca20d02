"""Camera frames and their binary wire layout.

Layout (all integers little-endian):

    u16  node_id length        u64  sequence
    ...  node_id utf-8 bytes   u64  timestamp (ms since epoch)
    u32  width                 u32  height
    u8   channels (1 or 3)     ...  row-major 8-bit pixel buffer
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from sentinel.detection.image import to_grayscale

_HEAD = struct.Struct("<QQIIB")


@dataclass(frozen=True)
class Frame:
    node_id: str
    sequence: int
    timestamp_ms: int
    width: int
    height: int
    channels: int
    pixels: bytes

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        expected = self.width * self.height * self.channels
        if len(self.pixels) != expected:
            raise ValueError(
                f"pixel buffer length {len(self.pixels)} != "
                f"width*height*channels {expected}"
            )

    def pixel_array(self) -> np.ndarray:
        arr = np.frombuffer(self.pixels, dtype=np.uint8)
        if self.channels == 1:
            return arr.reshape(self.height, self.width)
        return arr.reshape(self.height, self.width, 3)


def frame_to_gray(frame: Frame) -> np.ndarray:
    """Frame pixels as float64 grayscale in [0, 1]."""
    return to_grayscale(frame.pixel_array())


def frame_from_array(
    node_id: str, sequence: int, timestamp_ms: int, pixels: np.ndarray
) -> Frame:
    arr = np.asarray(pixels, dtype=np.uint8)
    if arr.ndim == 2:
        h, w, c = arr.shape[0], arr.shape[1], 1
    elif arr.ndim == 3 and arr.shape[2] == 3:
        h, w, c = arr.shape
    else:
        raise ValueError(f"expected (h,w) or (h,w,3) uint8 pixels, got {arr.shape}")
    return Frame(
        node_id=node_id,
        sequence=sequence,
        timestamp_ms=timestamp_ms,
        width=w,
        height=h,
        channels=c,
        pixels=arr.tobytes(),
    )


def encode_frame(frame: Frame) -> bytes:
    node = frame.node_id.encode("utf-8")
    if len(node) > 0xFFFF:
        raise ValueError("node_id too long")
    return (
        struct.pack("<H", len(node))
        + node
        + _HEAD.pack(
            frame.sequence,
            frame.timestamp_ms,
            frame.width,
            frame.height,
            frame.channels,
        )
        + frame.pixels
    )


def decode_frame(data: bytes) -> Frame:
    if len(data) < 2:
        raise ValueError("frame truncated before node_id length")
    (node_len,) = struct.unpack_from("<H", data, 0)
    pos = 2
    if len(data) < pos + node_len + _HEAD.size:
        raise ValueError("frame truncated in header")
    node_id = data[pos : pos + node_len].decode("utf-8")
    pos += node_len
    sequence, timestamp_ms, width, height, channels = _HEAD.unpack_from(data, pos)
    pos += _HEAD.size
    pixels = data[pos:]
    if len(pixels) != width * height * channels:
        raise ValueError(
            f"frame pixel buffer has {len(pixels)} bytes, "
            f"expected {width * height * channels}"
        )
    return Frame(
        node_id=node_id,
        sequence=sequence,
        timestamp_ms=timestamp_ms,
        width=width,
        height=height,
        channels=channels,
        pixels=pixels,
    )
