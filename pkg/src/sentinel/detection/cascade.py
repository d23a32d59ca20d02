"""Three-stage cascaded face detector with pluggable stage scorers.

The pipeline mirrors the classic propose/refine/output cascade: a 12 px
sliding window over an image pyramid proposes candidates, a 24 px stage
rescoring pass refines their boxes, and a 48 px stage confirms and adds
five facial landmarks; greedy NMS filters between stages.

Stage scorers are pluggable. Each scorer sees a square window sampled
around a candidate box (padded by the scorer's ``pad_factor``) and
returns a score plus box-regression offsets expressed as corner shifts
in fractions of that window. The reference scorers correlate against a
fixed per-stage template: the refine stage searches the template over a
small grid of scales and positions inside its padded window, which is
what snaps the coarse, scale-quantized proposals onto the face tightly
enough that duplicates collapse under NMS.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from sentinel.detection.boxes import BASE_WINDOW, BoundingBox, image_pyramid, nms
from sentinel.detection.frame import Frame, frame_to_gray
from sentinel.detection.image import (
    bilinear_resize,
    extract_square,
    sample_region,
    sliding_windows,
)
from sentinel.errors import AlignmentError

STAGE_WINDOWS = (12, 24, 48)

# Landmark positions the reference scorer reports, as fractions of the
# face box: left eye, right eye, nose, left mouth, right mouth.
TEMPLATE_LANDMARKS = np.array(
    [[0.32, 0.38], [0.68, 0.38], [0.50, 0.55], [0.35, 0.72], [0.65, 0.72]]
)


@dataclass(frozen=True)
class Landmarks:
    """Five (x, y) points: eyes, nose, mouth corners."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.points) != 5:
            raise ValueError(f"expected 5 landmark points, got {len(self.points)}")
        for x, y in self.points:
            if not (np.isfinite(x) and np.isfinite(y)):
                raise ValueError("landmark coordinates must be finite")

    def to_list(self) -> list[list[float]]:
        return [[x, y] for x, y in self.points]


@dataclass(frozen=True)
class FaceDetection:
    """One detected face: box, landmarks, per-stage scores.

    Landmarks are clamped into the box expanded by a 20% margin at
    construction, so the containment invariant holds for any scorer.
    """

    box: BoundingBox
    landmarks: Landmarks
    stage_scores: tuple[float, float, float]

    def __post_init__(self):
        b = self.box
        mx, my = 0.1 * b.w, 0.1 * b.h
        clamped = tuple(
            (
                float(np.clip(x, b.x - mx, b.x2 + mx)),
                float(np.clip(y, b.y - my, b.y2 + my)),
            )
            for x, y in self.landmarks.points
        )
        object.__setattr__(self, "landmarks", Landmarks(points=clamped))

    def to_dict(self) -> dict:
        return {
            "box": self.box.to_dict(),
            "landmarks": self.landmarks.to_list(),
            "stage_scores": list(self.stage_scores),
        }


class StageScorer(Protocol):
    """Batch classifier for one cascade stage.

    ``score_batch`` takes (n, input_size, input_size) grayscale windows
    in [0, 1] and returns (scores (n,), offsets (n, 4), has_landmarks).
    Scores lie in [0, 1]. Offsets are additive corner regressions
    (dx1, dy1, dx2, dy2) in fractions of the window extent; all-zero
    leaves the candidate box unchanged.
    """

    window_size: int
    pad_factor: float

    @property
    def input_size(self) -> int: ...

    def score_batch(self, windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


def _ncc_unit(template: np.ndarray) -> np.ndarray:
    centered = template - template.mean()
    norm = np.linalg.norm(centered)
    if norm == 0:
        raise ValueError("template has zero variance")
    return (centered / norm).ravel()


def _ncc_scores(flat_windows: np.ndarray, unit_template: np.ndarray) -> np.ndarray:
    centered = flat_windows - flat_windows.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    ncc = np.zeros(len(flat_windows))
    ok = norms > 1e-12
    ncc[ok] = (centered[ok] @ unit_template) / norms[ok]
    return ncc


class TemplateScorer:
    """Plain normalized cross-correlation against one template.

    NCC is invariant to window brightness and contrast, so flat noise
    scores near 0.5 after the (ncc + 1) / 2 mapping while on-template
    faces score close to 1. Emits zero box regression. An output-stage
    instance may declare its landmark layout (five (x, y) fractions of
    the face box) via ``landmark_points``.
    """

    pad_factor = 1.0

    def __init__(self, template: np.ndarray, landmark_points: np.ndarray | None = None):
        t = np.asarray(template, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError(f"template must be square, got {t.shape}")
        self.window_size = t.shape[0]
        self.landmark_points = landmark_points
        self._unit = _ncc_unit(t)

    @property
    def input_size(self) -> int:
        return self.window_size

    def score_batch(self, windows: np.ndarray):
        ncc = _ncc_scores(windows.reshape(windows.shape[0], -1), self._unit)
        scores = np.clip((ncc + 1.0) / 2.0, 0.0, 1.0)
        return scores, np.zeros((len(scores), 4))


class TemplateSearchScorer:
    """NCC with a scale-and-position search; regresses the box.

    The window is sampled around the candidate padded by ``pad_factor``.
    The template is slid over a stride grid at several relative scales;
    the best placement supplies both the score and corner offsets that
    snap the candidate onto it.
    """

    def __init__(
        self,
        template: np.ndarray,
        pad_factor: float = 1.4,
        scales: tuple[float, ...] = (0.72, 0.85, 1.0, 1.18, 1.4),
        stride: int = 2,
    ):
        t = np.asarray(template, dtype=np.float64)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError(f"template must be square, got {t.shape}")
        self.window_size = t.shape[0]
        self.pad_factor = pad_factor
        self.scales = scales
        self.stride = stride
        self.emits_landmarks = False
        self._unit = _ncc_unit(t)

    @property
    def input_size(self) -> int:
        return int(round(self.window_size * self.pad_factor))

    def score_batch(self, windows: np.ndarray):
        size = self.window_size
        scores = np.zeros(len(windows))
        offsets = np.zeros((len(windows), 4))
        for i, window in enumerate(windows):
            s_in = window.shape[0]
            best_ncc = -2.0
            best_rect = (0.0, 0.0, 1.0, 1.0)
            for scale in self.scales:
                resized_side = max(size, int(round(s_in / scale)))
                resized = bilinear_resize(window, resized_side, resized_side)
                view = np.lib.stride_tricks.sliding_window_view(resized, (size, size))
                view = view[:: self.stride, :: self.stride]
                gy, gx = view.shape[:2]
                ncc = _ncc_scores(view.reshape(gy * gx, -1), self._unit)
                k = int(np.argmax(ncc))
                if ncc[k] > best_ncc:
                    py, px = divmod(k, gx)
                    x1 = px * self.stride / resized_side
                    y1 = py * self.stride / resized_side
                    side = size / resized_side
                    best_ncc = float(ncc[k])
                    best_rect = (x1, y1, x1 + side, y1 + side)
            scores[i] = np.clip((best_ncc + 1.0) / 2.0, 0.0, 1.0)
            offsets[i] = (
                best_rect[0],
                best_rect[1],
                best_rect[2] - 1.0,
                best_rect[3] - 1.0,
            )
        return scores, offsets


@dataclass(frozen=True)
class DetectorConfig:
    """Cascade thresholds and pyramid constants.

    The output-stage threshold sits well above the refine threshold
    because only regression-fitted boxes reach it: fitted faces
    correlate near 1 while off-face or badly-scaled survivors stay
    below ~0.84.
    """

    min_face: int = 20
    scale_factor: float = 0.709
    stage_thresholds: tuple[float, float, float] = (0.6, 0.7, 0.86)
    nms_intra: float = 0.7
    nms_final: float = 0.5
    stride: int = 2

    def __post_init__(self):
        for t in self.stage_thresholds:
            if not 0.0 < t < 1.0:
                raise ValueError(f"stage threshold must lie in (0, 1), got {t}")


def _padded_square(box: BoundingBox, pad_factor: float) -> tuple[float, float, float]:
    """(x1, y1, side) of the square window a stage samples for a box."""
    side = max(box.w, box.h) * pad_factor
    cx, cy = box.center
    return cx - side / 2.0, cy - side / 2.0, side


def _clip_box(box: BoundingBox, width: int, height: int) -> BoundingBox | None:
    x1 = max(0.0, box.x)
    y1 = max(0.0, box.y)
    x2 = min(float(width), box.x2)
    y2 = min(float(height), box.y2)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    return BoundingBox(x=x1, y=y1, w=x2 - x1, h=y2 - y1, score=box.score)


def _proposal_stage(
    gray: np.ndarray, scorer: StageScorer, config: DetectorConfig
) -> list[BoundingBox]:
    h, w = gray.shape
    proposals: list[BoundingBox] = []
    for scale in image_pyramid(w, h, config.min_face, config.scale_factor):
        sh = max(BASE_WINDOW, int(round(h * scale)))
        sw = max(BASE_WINDOW, int(round(w * scale)))
        level = bilinear_resize(gray, sh, sw)
        windows, xs, ys = sliding_windows(level, scorer.window_size, config.stride)
        if len(windows) == 0:
            continue
        scores, offsets = scorer.score_batch(windows)
        keep = np.nonzero(scores > config.stage_thresholds[0])[0]
        level_boxes = []
        side = scorer.window_size / scale
        for i in keep:
            x = xs[i] / scale + offsets[i][0] * side
            y = ys[i] / scale + offsets[i][1] * side
            x2 = xs[i] / scale + side + offsets[i][2] * side
            y2 = ys[i] / scale + side + offsets[i][3] * side
            if x2 > x and y2 > y:
                level_boxes.append(
                    BoundingBox(x=x, y=y, w=x2 - x, h=y2 - y, score=float(scores[i]))
                )
        proposals.extend(nms(level_boxes, config.nms_intra))
    return nms(proposals, config.nms_intra)


def _refine_stage(
    gray: np.ndarray,
    candidates: list[tuple[BoundingBox, tuple[float, ...]]],
    scorer: StageScorer,
    threshold: float,
    nms_threshold: float,
) -> list[tuple[BoundingBox, tuple[float, ...]]]:
    """Rescore candidates at one stage; returns NMS-filtered survivors
    as (refined box, accumulated stage scores)."""
    if not candidates:
        return []
    rects = [_padded_square(box, scorer.pad_factor) for box, _ in candidates]
    windows = np.stack(
        [
            np.clip(
                sample_region(gray, x1, y1, x1 + side, y1 + side, scorer.input_size),
                0.0,
                1.0,
            )
            for x1, y1, side in rects
        ]
    )
    scores, offsets = scorer.score_batch(windows)
    survivors = []
    for i, (box, history) in enumerate(candidates):
        if scores[i] <= threshold:
            continue
        x1, y1, side = rects[i]
        rx1 = x1 + offsets[i][0] * side
        ry1 = y1 + offsets[i][1] * side
        rx2 = x1 + side + offsets[i][2] * side
        ry2 = y1 + side + offsets[i][3] * side
        if rx2 <= rx1 or ry2 <= ry1:
            continue
        refined = BoundingBox(
            x=rx1, y=ry1, w=rx2 - rx1, h=ry2 - ry1, score=float(scores[i])
        )
        survivors.append((refined, history + (float(scores[i]),)))
    kept = nms([box for box, _ in survivors], nms_threshold)
    kept_ids = {id(b) for b in kept}
    return [s for s in survivors if id(s[0]) in kept_ids]


def detect_faces(
    frame: Frame,
    scorers: tuple[StageScorer, StageScorer, StageScorer],
    config: DetectorConfig | None = None,
) -> list[FaceDetection]:
    """Run the full cascade over one frame.

    Every returned detection exceeded its stage thresholds, carries
    landmarks, and has its box clipped to frame bounds. Result order is
    final-score descending; no faces yields [].
    """
    config = config or DetectorConfig()
    gray = frame_to_gray(frame)

    proposals = _proposal_stage(gray, scorers[0], config)
    refined = _refine_stage(
        gray,
        [(b, (b.score,)) for b in proposals],
        scorers[1],
        config.stage_thresholds[1],
        config.nms_intra,
    )
    output = _refine_stage(
        gray,
        refined,
        scorers[2],
        config.stage_thresholds[2],
        config.nms_final,
    )

    layout = getattr(scorers[2], "landmark_points", None)
    if layout is None:
        layout = TEMPLATE_LANDMARKS
    detections = []
    for box, history in output:
        clipped = _clip_box(box, frame.width, frame.height)
        if clipped is None:
            continue
        landmarks = Landmarks(
            points=tuple(
                (clipped.x + u * clipped.w, clipped.y + v * clipped.h)
                for u, v in layout
            )
        )
        detections.append(
            FaceDetection(box=clipped, landmarks=landmarks, stage_scores=tuple(history))
        )
    detections.sort(key=lambda d: -d.box.score)
    return detections


def crop_align(frame: Frame, detection: FaceDetection, out_size: int) -> np.ndarray:
    """Square-expand, clip, and resample a detection into a unit-range
    grayscale vector of length out_size**2."""
    gray = frame_to_gray(frame)
    b = detection.box
    crop = extract_square(gray, b.x, b.y, b.w, b.h, out_size)
    if crop is None:
        raise AlignmentError(
            f"detection box ({b.x}, {b.y}, {b.w}, {b.h}) has no area inside the frame"
        )
    return crop.ravel()
