"""Binary PGM (P5) and PPM (P6) reading and writing.

Nodes ingest image files in these formats only: no codec dependency,
and round trips are bit-exact, which the tests rely on.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # Skip whitespace and '#' comment lines between header tokens.
    while pos < len(data):
        c = data[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("truncated header")
    return data[start:pos], pos


def read_pnm(path: str | Path) -> np.ndarray:
    """Read a binary graymap or pixmap.

    Returns uint8 array of shape (h, w) for PGM or (h, w, 3) for PPM.
    """
    data = Path(path).read_bytes()
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported format {magic!r} (want binary P5/P6)")
    w_tok, pos = _read_token(data, pos)
    h_tok, pos = _read_token(data, pos)
    maxval_tok, pos = _read_token(data, pos)
    width, height, maxval = int(w_tok), int(h_tok), int(maxval_tok)
    if maxval != 255:
        raise ValueError(f"only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    pixels = data[pos : pos + need]
    if len(pixels) != need:
        raise ValueError(f"pixel data truncated: want {need}, got {len(pixels)}")
    arr = np.frombuffer(pixels, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(height, width)
    return arr.reshape(height, width, 3)


def write_pnm(path: str | Path, image: np.ndarray) -> None:
    """Write uint8 (h, w) as PGM or (h, w, 3) as PPM."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim == 2:
        magic, (h, w) = b"P5", image.shape
    elif image.ndim == 3 and image.shape[2] == 3:
        magic, (h, w) = b"P6", image.shape[:2]
    else:
        raise ValueError(f"expected (h,w) or (h,w,3) uint8 array, got {image.shape}")
    header = b"%s\n%d %d\n255\n" % (magic, w, h)
    Path(path).write_bytes(header + image.tobytes())


def gray_to_unit(image: np.ndarray) -> np.ndarray:
    """uint8 grayscale image to float64 in [0, 1]."""
    return np.asarray(image, dtype=np.float64) / 255.0


def unit_to_gray(values: np.ndarray) -> np.ndarray:
    """Float [0, 1] image to uint8 with round-half-away clamping."""
    return np.clip(np.rint(np.asarray(values) * 255.0), 0, 255).astype(np.uint8)
