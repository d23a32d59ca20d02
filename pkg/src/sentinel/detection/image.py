"""Grayscale conversion, bilinear resampling, window extraction."""

from __future__ import annotations

import numpy as np

# Conventional luminance weights; fixed so results are bit-reproducible.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_grayscale(pixels: np.ndarray) -> np.ndarray:
    """(h, w) or (h, w, 3) uint8/float image to float64 grayscale in [0, 1]."""
    arr = np.asarray(pixels)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        return arr @ LUMA_WEIGHTS
    raise ValueError(f"expected (h,w) or (h,w,3) image, got shape {arr.shape}")


def _bilinear_sample(image: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample an image at continuous row/column coordinate grids."""
    in_h, in_w = image.shape
    ys = np.clip(ys, 0.0, in_h - 1.0)
    xs = np.clip(xs, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = image[np.ix_(y0, x0)] * (1 - wx) + image[np.ix_(y0, x1)] * wx
    bot = image[np.ix_(y1, x0)] * (1 - wx) + image[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample with pixel-center alignment.

    Output pixel centers map to input coordinates
    (row + 0.5) * in/out - 0.5, clamped at the borders, and each sample
    mixes the four surrounding input pixels by their fractional weights.
    """
    image = np.asarray(image, dtype=np.float64)
    if out_h <= 0 or out_w <= 0:
        raise ValueError("output size must be positive")
    in_h, in_w = image.shape
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    return _bilinear_sample(image, ys, xs)


def sample_region(
    image: np.ndarray,
    x1: float,
    y1: float,
    x2: float,
    y2: float,
    out_size: int,
) -> np.ndarray:
    """Resample an arbitrary float rectangle to out_size x out_size.

    Unlike clipping extraction, coordinates outside the image are
    edge-extended, so the mapping between the rectangle and the output
    stays affine even at frame borders.
    """
    image = np.asarray(image, dtype=np.float64)
    ys = y1 + (np.arange(out_size) + 0.5) * (y2 - y1) / out_size - 0.5
    xs = x1 + (np.arange(out_size) + 0.5) * (x2 - x1) / out_size - 0.5
    return _bilinear_sample(image, ys, xs)


def sliding_windows(
    image: np.ndarray, size: int, stride: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All size x size windows on a stride grid.

    Returns (windows (n, size, size), xs (n,), ys (n,)) where xs/ys are
    the top-left window corners. Empty arrays if the image is too small.
    """
    h, w = image.shape
    if h < size or w < size:
        return (
            np.empty((0, size, size)),
            np.empty(0, dtype=int),
            np.empty(0, dtype=int),
        )
    view = np.lib.stride_tricks.sliding_window_view(image, (size, size))
    view = view[::stride, ::stride]
    gy, gx = view.shape[:2]
    ys, xs = np.mgrid[0:gy, 0:gx]
    return (
        view.reshape(-1, size, size),
        (xs.ravel() * stride).astype(int),
        (ys.ravel() * stride).astype(int),
    )


def extract_square(
    gray: np.ndarray,
    x: float,
    y: float,
    w: float,
    h: float,
    out_size: int,
) -> np.ndarray | None:
    """Square-expand a region about its center, clip, and resample.

    Returns an (out_size, out_size) crop in [0, 1], or None when the
    expanded region has no area inside the image.
    """
    side = max(w, h)
    cx = x + w / 2.0
    cy = y + h / 2.0
    x1 = int(np.floor(cx - side / 2.0))
    y1 = int(np.floor(cy - side / 2.0))
    x2 = int(np.ceil(cx + side / 2.0))
    y2 = int(np.ceil(cy + side / 2.0))
    ih, iw = gray.shape
    x1, x2 = max(0, x1), min(iw, x2)
    y1, y2 = max(0, y1), min(ih, y2)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    region = gray[y1:y2, x1:x2]
    return np.clip(bilinear_resize(region, out_size, out_size), 0.0, 1.0)
