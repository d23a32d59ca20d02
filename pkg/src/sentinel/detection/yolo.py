"""Grid-cell assignment and sum-squared-error loss utilities.

Standalone utilities for the grid-based detector formulation: the image
splits into grid x grid cells, each owning a fixed number of predicted
boxes; a ground truth belongs to the cell containing its center and,
within it, to the predictor overlapping it most. The loss sums squared
differences in (center x, center y, sqrt w, sqrt h, score) over
responsible predictors, plus a down-weighted score-versus-zero term for
every other predictor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from sentinel.detection.boxes import BoundingBox, iou

LAMBDA_COORD = 5.0
LAMBDA_NOOBJ = 0.5


@dataclass(frozen=True)
class GridAssignment:
    """Ground truth index -> (cell row, cell col, predictor index)."""

    truth_index: int
    row: int
    col: int
    predictor: int


def yolo_grid_assign(
    truths: Sequence[BoundingBox],
    width: float,
    height: float,
    predictions: Sequence[Sequence[Sequence[BoundingBox]]],
    grid: int = 13,
) -> list[GridAssignment]:
    """Assign each ground truth to its center cell's best predictor.

    Within the cell, the predictor with maximum IoU against the truth is
    responsible; ties break toward the lowest predictor index.
    """
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    assignments = []
    for t_idx, truth in enumerate(truths):
        cx, cy = truth.center
        if not (0.0 <= cx <= width and 0.0 <= cy <= height):
            raise ValueError(f"truth {t_idx} center ({cx}, {cy}) outside image")
        col = min(int(cx / width * grid), grid - 1)
        row = min(int(cy / height * grid), grid - 1)
        cell = predictions[row][col]
        best_idx = 0
        best_iou = -1.0
        for p_idx, pred in enumerate(cell):
            overlap = iou(pred, truth)
            if overlap > best_iou:
                best_iou = overlap
                best_idx = p_idx
        assignments.append(
            GridAssignment(truth_index=t_idx, row=row, col=col, predictor=best_idx)
        )
    return assignments


def yolo_sse_loss(
    assignments: Sequence[GridAssignment],
    predictions: Sequence[Sequence[Sequence[BoundingBox]]],
    truths: Sequence[BoundingBox],
    lambda_coord: float = LAMBDA_COORD,
    lambda_noobj: float = LAMBDA_NOOBJ,
) -> float:
    """Sum-squared error between responsible predictions and their truths.

    Responsible predictors are penalized on center coordinates, square
    roots of the extents (weighted by lambda_coord), and score against
    1. All remaining predictors contribute lambda_noobj * score**2.
    """
    responsible = {(a.row, a.col, a.predictor): a.truth_index for a in assignments}
    loss = 0.0
    for row, row_cells in enumerate(predictions):
        for col, cell in enumerate(row_cells):
            for p_idx, pred in enumerate(cell):
                key = (row, col, p_idx)
                if key in responsible:
                    truth = truths[responsible[key]]
                    pcx, pcy = pred.center
                    tcx, tcy = truth.center
                    loss += lambda_coord * ((pcx - tcx) ** 2 + (pcy - tcy) ** 2)
                    loss += lambda_coord * (
                        (math.sqrt(pred.w) - math.sqrt(truth.w)) ** 2
                        + (math.sqrt(pred.h) - math.sqrt(truth.h)) ** 2
                    )
                    loss += (pred.score - 1.0) ** 2
                else:
                    loss += lambda_noobj * pred.score**2
    return loss
