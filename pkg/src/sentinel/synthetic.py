"""Deterministic synthetic faces, frames, and corpora.

Everything downstream tests against constructions from this module: a
fixed analytic face template gives the detector's reference scorers
something to correlate with, per-identity low-frequency textures give
the embedder something to separate, and planted boxes on noise
backgrounds provide exact ground truth for localization.

The base template is analytic (defined on unit coordinates), so stage
templates and planted faces at any pixel size come from the same
function rather than from resampling chains.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sentinel.detection.boxes import BoundingBox
from sentinel.detection.cascade import (
    STAGE_WINDOWS,
    TEMPLATE_LANDMARKS,
    TemplateScorer,
    TemplateSearchScorer,
)
from sentinel.detection.frame import Frame, frame_from_array
from sentinel.detection.image import bilinear_resize
from sentinel.pnm import unit_to_gray, write_pnm

TEXTURE_GRID = 6
TEXTURE_AMPLITUDE = 0.30
BACKGROUND_RANGE = (0.25, 0.45)
RENDER_NOISE = 0.01


def identity_label(index: int) -> str:
    return f"subject-{index:02d}"


def _identity_seed(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def base_face(size: int) -> np.ndarray:
    """The generic face template at a given pixel size.

    Bright head disc inside a dark outline halo, with eye wells and a
    mouth bar. The halo is what makes normalized cross-correlation fall
    off sharply under scale or position mismatch: a zoomed or shifted
    crop loses the ring and its correlation drops well below a fitted
    placement's. Corner values sit at the background mean so the box
    edge blends with scene noise.
    """
    coords = (np.arange(size) + 0.5) / size
    u, v = np.meshgrid(coords, coords)  # u: x fraction, v: y fraction
    r = np.sqrt((u - 0.5) ** 2 + (v - 0.5) ** 2) / 0.5
    face = 0.35 + 0.55 * np.exp(-((r / 0.72) ** 4))
    face -= 0.55 * np.exp(-(((r - 0.88) / 0.10) ** 2))
    for ex, ey in ((0.32, 0.38), (0.68, 0.38)):
        d2 = (u - ex) ** 2 + (v - ey) ** 2
        face -= 0.45 * np.exp(-d2 / (2 * 0.055**2))
    mouth = np.exp(-(((v - 0.72) / 0.05) ** 2)) * np.exp(-(((u - 0.5) / 0.13) ** 4))
    face -= 0.35 * mouth
    return np.clip(face, 0.02, 0.98)


def identity_texture(label: str, size: int) -> np.ndarray:
    """Low-frequency signed field unique to one identity.

    A seeded coarse grid upsampled smoothly and masked to the inner face
    disc; low frequency so it survives the 16 px embedding crop.
    """
    rng = np.random.default_rng(_identity_seed(label))
    grid = rng.normal(scale=1.0, size=(TEXTURE_GRID, TEXTURE_GRID))
    field = bilinear_resize(grid, size, size)
    coords = (np.arange(size) + 0.5) / size
    u, v = np.meshgrid(coords, coords)
    r = np.sqrt((u - 0.5) ** 2 + (v - 0.5) ** 2) / 0.5
    mask = np.exp(-((r / 0.75) ** 8))
    return TEXTURE_AMPLITUDE * field * mask


def render_face(label: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """One rendering of an identity's face with per-render pixel noise."""
    face = base_face(size) + identity_texture(label, size)
    face = face + rng.normal(scale=RENDER_NOISE, size=(size, size))
    return np.clip(face, 0.0, 1.0)


def make_stage_scorers():
    """The reference scorer triple used by the gateway and the trainer.

    Proposal: plain correlation at 12 px. Refine: correlation with a
    scale/position search at 24 px, which regresses the box. Output:
    plain correlation at 48 px plus the template's landmark layout.
    """
    p, r, o = (base_face(s) for s in STAGE_WINDOWS)
    return (
        TemplateScorer(p),
        TemplateSearchScorer(r),
        TemplateScorer(o, landmark_points=TEMPLATE_LANDMARKS),
    )


@dataclass(frozen=True)
class PlantedFace:
    label: str
    box: BoundingBox


def render_scene(
    rng: np.random.Generator,
    labels: list[str],
    frame_size: int = 96,
    face_size_range: tuple[int, int] = (26, 42),
) -> tuple[np.ndarray, list[PlantedFace]]:
    """Noise background with one planted face per label.

    Faces are placed fully inside the frame and pairwise disjoint, so
    the returned boxes are exact ground truth. A single face goes
    anywhere; multiple faces each take a distinct cell of a 2x2 grid,
    which guarantees disjointness without rejection sampling.
    """
    lo, hi = BACKGROUND_RANGE
    pixels = rng.uniform(lo, hi, size=(frame_size, frame_size))
    planted: list[PlantedFace] = []
    if len(labels) > 4:
        raise ValueError(f"at most 4 faces per frame, got {len(labels)}")

    def place(label: str, x0: int, y0: int, span: int) -> None:
        max_size = min(face_size_range[1], span - 6)
        if max_size < face_size_range[0]:
            raise ValueError(f"frame too small for face range in span {span}")
        size = int(rng.integers(face_size_range[0], max_size + 1))
        x = x0 + 2 + int(rng.integers(0, span - size - 4))
        y = y0 + 2 + int(rng.integers(0, span - size - 4))
        pixels[y : y + size, x : x + size] = render_face(label, size, rng)
        box = BoundingBox(x=float(x), y=float(y), w=float(size), h=float(size))
        planted.append(PlantedFace(label=label, box=box))

    if len(labels) <= 1:
        for label in labels:
            place(label, 0, 0, frame_size)
    else:
        half = frame_size // 2
        cells = [(0, 0), (half, 0), (0, half), (half, half)]
        chosen = rng.choice(len(cells), size=len(labels), replace=False)
        for label, cell_idx in zip(labels, chosen):
            cx, cy = cells[cell_idx]
            place(label, cx, cy, half)
    return pixels, planted


def make_stream(
    seed: int,
    node_id: str,
    labels_per_frame: list[list[str]],
    frame_size: int = 96,
    face_size_range: tuple[int, int] = (26, 42),
) -> list[tuple[Frame, list[PlantedFace]]]:
    """Frame stream with ground truth, sequences starting at 1."""
    rng = np.random.default_rng(seed)
    stream = []
    for i, labels in enumerate(labels_per_frame):
        pixels, planted = render_scene(rng, labels, frame_size, face_size_range)
        frame = frame_from_array(
            node_id=node_id,
            sequence=i + 1,
            timestamp_ms=0,
            pixels=unit_to_gray(pixels),
        )
        stream.append((frame, planted))
    return stream


def write_stream_source(
    directory: str | Path,
    stream: list[tuple[Frame, list[PlantedFace]]],
    sidecar: str | Path | None = None,
) -> None:
    """Materialize a stream as PGM files plus a ground-truth sidecar.

    Sidecar lines: sequence, identity label, box x y w h.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for frame, planted in stream:
        write_pnm(directory / f"frame_{frame.sequence:05d}.pgm", frame.pixel_array())
        for p in planted:
            lines.append(
                f"{frame.sequence} {p.label} "
                f"{p.box.x:.1f} {p.box.y:.1f} {p.box.w:.1f} {p.box.h:.1f}"
            )
    if sidecar is not None:
        Path(sidecar).write_text("\n".join(lines) + ("\n" if lines else ""))


def make_raw_corpus(
    root: str | Path,
    seed: int,
    subjects: int,
    images_per_subject: int,
    frame_size: int = 96,
    face_size_range: tuple[int, int] = (26, 42),
) -> list[str]:
    """Per-subject directories of raw scene images (one face per image).

    This is the input the trainer's alignment step expects; aligned
    crops then come out of the real detector, so training sees the same
    crop distribution the gateway pipeline produces.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    labels = [identity_label(i) for i in range(subjects)]
    for label in labels:
        subject_dir = root / label
        subject_dir.mkdir(parents=True, exist_ok=True)
        for j in range(images_per_subject):
            pixels, _ = render_scene(rng, [label], frame_size, face_size_range)
            write_pnm(subject_dir / f"img_{j:03d}.pgm", unit_to_gray(pixels))
    return labels
