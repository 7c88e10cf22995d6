"""boxlift: lift 2D vehicle detections to oriented 3D boxes and evaluate them."""

from boxlift.boxes import Box2D, DetectionPair, iou2d, iou3d, nms, vg_nms
from boxlift.geometry import (
    CameraModel,
    RotationTriple,
    backproject_at_distance,
    compose_rotation,
    decompose_rotation,
    project,
    wrap_angle,
)
from boxlift.lifting import (
    Box3D,
    ClassPriors,
    KeypointOffsets,
    LiftParams,
    TransformSet,
    encode,
    lift,
    project_box,
)
from boxlift.losses import LossBreakdown, LossWeights, total_loss
from boxlift.metrics import EvalReport, GroundTruthBox, ap40, aos, match_3d, nuscenes_cd_ap

__version__ = "0.1.0"

__all__ = [
    "Box2D", "Box3D", "CameraModel", "ClassPriors", "DetectionPair",
    "EvalReport", "GroundTruthBox", "KeypointOffsets", "LiftParams",
    "LossBreakdown", "LossWeights", "RotationTriple", "TransformSet",
    "ap40", "aos", "backproject_at_distance", "compose_rotation",
    "decompose_rotation", "encode", "iou2d", "iou3d", "lift", "match_3d",
    "nms", "nuscenes_cd_ap", "project", "project_box", "total_loss",
    "vg_nms", "wrap_angle",
]
