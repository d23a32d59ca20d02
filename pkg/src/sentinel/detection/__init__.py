"""Face detection: box geometry, cascade orchestration, grid utilities."""

from sentinel.detection.boxes import BoundingBox, image_pyramid, iou, nms
from sentinel.detection.cascade import (
    DetectorConfig,
    FaceDetection,
    Landmarks,
    StageScorer,
    TemplateScorer,
    crop_align,
    detect_faces,
)
from sentinel.detection.frame import Frame, decode_frame, encode_frame, frame_to_gray
from sentinel.detection.yolo import GridAssignment, yolo_grid_assign, yolo_sse_loss

__all__ = [
    "BoundingBox",
    "DetectorConfig",
    "FaceDetection",
    "Frame",
    "GridAssignment",
    "Landmarks",
    "StageScorer",
    "TemplateScorer",
    "crop_align",
    "decode_frame",
    "detect_faces",
    "encode_frame",
    "frame_to_gray",
    "image_pyramid",
    "iou",
    "nms",
    "yolo_grid_assign",
    "yolo_sse_loss",
]
