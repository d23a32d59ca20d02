"""Resampling, grayscale, and crop alignment."""

import numpy as np
import pytest

from sentinel.detection.boxes import BoundingBox
from sentinel.detection.cascade import FaceDetection, Landmarks, crop_align
from sentinel.detection.frame import frame_from_array
from sentinel.detection.image import (
    bilinear_resize,
    sample_region,
    sliding_windows,
    to_grayscale,
)
from sentinel.errors import AlignmentError


def detection_for(box: BoundingBox) -> FaceDetection:
    cx, cy = box.center
    points = tuple((cx, cy) for _ in range(5))
    return FaceDetection(box=box, landmarks=Landmarks(points=points), stage_scores=(1, 1, 1))


def test_grayscale_uses_conventional_luma_weights():
    pixels = np.zeros((1, 3, 3), dtype=np.uint8)
    pixels[0, 0] = (255, 0, 0)
    pixels[0, 1] = (0, 255, 0)
    pixels[0, 2] = (0, 0, 255)
    gray = to_grayscale(pixels)
    assert gray[0, 0] == pytest.approx(0.299)
    assert gray[0, 1] == pytest.approx(0.587)
    assert gray[0, 2] == pytest.approx(0.114)


def test_bilinear_downscale_of_checkerboard_averages():
    # Hand oracle: with pixel-center alignment, each output of an exact
    # 2x downscale sits at the center of a 2x2 block, so every sample of
    # a checkerboard mixes two zeros and two ones with weight 1/4 each.
    board = np.indices((4, 4)).sum(axis=0) % 2
    out = bilinear_resize(board.astype(float), 2, 2)
    assert out == pytest.approx(np.full((2, 2), 0.5))


def test_bilinear_identity_resize():
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(7, 5))
    assert bilinear_resize(img, 7, 5) == pytest.approx(img)


def test_bilinear_constant_image_stays_constant():
    img = np.full((9, 9), 0.37)
    out = bilinear_resize(img, 4, 6)
    assert out == pytest.approx(np.full((4, 6), 0.37))


def test_sample_region_matches_full_resize():
    rng = np.random.default_rng(1)
    img = rng.uniform(size=(20, 20))
    via_region = sample_region(img, 0, 0, 20, 20, 10)
    via_resize = bilinear_resize(img, 10, 10)
    assert via_region == pytest.approx(via_resize)


def test_sliding_windows_counts_and_coordinates():
    img = np.arange(100, dtype=float).reshape(10, 10)
    windows, xs, ys = sliding_windows(img, size=4, stride=2)
    assert windows.shape == (16, 4, 4)
    assert xs.max() == 6 and ys.max() == 6
    k = np.nonzero((xs == 2) & (ys == 4))[0][0]
    assert windows[k] == pytest.approx(img[4:8, 2:6])


def test_sliding_windows_too_small_image():
    windows, xs, ys = sliding_windows(np.zeros((3, 3)), size=4, stride=2)
    assert len(windows) == 0


# ----------------------------------------------------------------------
# crop_align


def test_crop_align_constant_frame_gives_constant_vector():
    frame = frame_from_array("n", 1, 0, np.full((30, 30), 100, dtype=np.uint8))
    det = detection_for(BoundingBox(x=0, y=0, w=30, h=30, score=1.0))
    crop = crop_align(frame, det, 8)
    assert crop.shape == (64,)
    assert crop == pytest.approx(np.full(64, 100 / 255))


def test_crop_align_output_length_contract():
    rng = np.random.default_rng(2)
    frame = frame_from_array("n", 1, 0, rng.integers(0, 256, size=(40, 40), dtype=np.uint8).astype(np.uint8))
    det = detection_for(BoundingBox(x=5, y=5, w=12, h=20, score=0.9))
    for out_size in (8, 16, 24):
        assert crop_align(frame, det, out_size).shape == (out_size**2,)


def test_crop_align_outside_frame_raises():
    frame = frame_from_array("n", 1, 0, np.zeros((20, 20), dtype=np.uint8))
    det = detection_for(BoundingBox(x=100, y=100, w=5, h=5, score=0.5))
    with pytest.raises(AlignmentError):
        crop_align(frame, det, 8)


def test_crop_align_values_stay_in_unit_range():
    rng = np.random.default_rng(3)
    frame = frame_from_array(
        "n", 1, 0, rng.integers(0, 256, size=(32, 32), dtype=np.uint8).astype(np.uint8)
    )
    det = detection_for(BoundingBox(x=2, y=3, w=10, h=10, score=0.9))
    crop = crop_align(frame, det, 16)
    assert crop.min() >= 0.0 and crop.max() <= 1.0
