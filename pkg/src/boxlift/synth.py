"""Synthetic scene generation for end-to-end verification without a network.

Boxes are sampled in a realistic street rig (origin below the horizon,
pitch/roll inside the small-angle regime of the height solve), encoded to
lift parameters, optionally perturbed, and written as scene files.

Randomness comes from numpy's PCG64 generator seeded per frame with
(seed, frame_index), so output is reproducible across platforms and across
any parallel generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from boxlift.errors import BoxliftError
from boxlift.geometry import CameraModel, RotationTriple
from boxlift.io import SceneFile
from boxlift.lifting import Box3D, ClassPriors, LiftParams, encode, project_box

MAX_ATTEMPTS_PER_BOX = 200


def default_camera() -> CameraModel:
    """A KITTI-resolution pinhole rig used when no camera is supplied."""
    return CameraModel.pinhole(720.0, 720.0, 621.0, 187.5, 1242, 375)


@dataclass(frozen=True)
class SceneSpec:
    """Sampling layout and noise model for synthetic scenes."""

    seed: int = 0
    num_frames: int = 10
    boxes_per_frame: tuple[int, int] = (1, 8)
    depth_range: tuple[float, float] = (12.0, 60.0)
    height_range: tuple[float, float] = (1.3, 1.9)
    aspect_jitter: float = 0.1
    yaw_range: tuple[float, float] = (-math.pi, math.pi)
    pitch_roll_jitter: float = math.radians(3.0)
    camera_height_range: tuple[float, float] = (1.4, 1.75)
    depth_noise_std: float = 0.0  # relative
    side_ratio_noise_std: float = 0.0
    angle_noise_std: float = 0.0  # radians, on the yaw offset
    classes: tuple[str, ...] = ("Car",)

    def __post_init__(self):
        if self.num_frames < 0:
            raise ValueError("num_frames must be non-negative")
        lo, hi = self.boxes_per_frame
        if lo < 0 or hi < lo:
            raise ValueError("boxes_per_frame range is empty")
        for name in ("depth_noise_std", "side_ratio_noise_std", "angle_noise_std"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.depth_range[0] >= self.depth_range[1]:
            raise ValueError("depth_range is empty")


def _sample_box(rng: np.random.Generator, spec: SceneSpec, cam: CameraModel,
                priors: ClassPriors) -> tuple[Box3D, float] | None:
    """One attempt at a fully visible, encodable ground-truth box."""
    class_id = str(rng.choice(spec.classes))
    ar_l, ar_w = priors.aspect(class_id)
    h = float(rng.uniform(*spec.height_range))
    dims = (ar_l * h * float(rng.uniform(1.0 - spec.aspect_jitter, 1.0 + spec.aspect_jitter)),
            h,
            ar_w * h * float(rng.uniform(1.0 - spec.aspect_jitter, 1.0 + spec.aspect_jitter)))
    yaw = float(rng.uniform(*spec.yaw_range))
    pitch = float(rng.uniform(-spec.pitch_roll_jitter, spec.pitch_roll_jitter))
    roll = float(rng.uniform(-spec.pitch_roll_jitter, spec.pitch_roll_jitter))
    depth = float(rng.uniform(*spec.depth_range))
    ground_y = float(rng.uniform(*spec.camera_height_range))
    # Lateral position bounded by the frustum at this depth, with margins so
    # the whole box stays inside the image.
    fx = cam.projection[0, 0]
    cx = cam.projection[0, 2]
    half_span = depth * min(cx, cam.image_width - cx) / fx
    margin = max(dims[0], dims[2])
    if half_span <= margin:
        return None
    x = float(rng.uniform(-(half_span - margin), half_span - margin))
    origin = np.array([x, ground_y, depth])
    box = Box3D(origin, dims, RotationTriple(yaw, pitch, roll), class_id, None)

    verts = box.vertices()
    if np.any(verts[:, 2] <= 1.0):
        return None
    hom = verts @ cam.projection[:, :3].T + cam.projection[:, 3]
    uv = hom[:, :2] / hom[:, 2:3]
    if (uv[:, 0].min() < 0.0 or uv[:, 0].max() > cam.image_width
            or uv[:, 1].min() < 0.0 or uv[:, 1].max() > cam.image_height):
        return None
    score = float(rng.uniform(0.3, 1.0))
    return box, score


def _perturb(params: LiftParams, rng: np.random.Generator,
             spec: SceneSpec) -> LiftParams:
    if (spec.depth_noise_std == 0.0 and spec.side_ratio_noise_std == 0.0
            and spec.angle_noise_std == 0.0):
        return params
    inv_depth = params.inv_depth
    if spec.depth_noise_std > 0.0:
        factor = 1.0 + float(rng.normal(0.0, spec.depth_noise_std))
        inv_depth = params.inv_depth / max(factor, 1e-3)
    side_ratio = params.side_ratio
    if spec.side_ratio_noise_std > 0.0:
        side_ratio = float(np.clip(
            side_ratio + rng.normal(0.0, spec.side_ratio_noise_std), 0.0, 1.0))
    delta_angles = params.delta_angles
    if spec.angle_noise_std > 0.0:
        delta_angles = (delta_angles[0] + float(rng.normal(0.0, spec.angle_noise_std)),
                        delta_angles[1], delta_angles[2])
    return LiftParams(
        box_amodal=params.box_amodal, side_ratio=side_ratio,
        delta_angles=delta_angles, delta_aspect=params.delta_aspect,
        inv_depth=inv_depth, class_id=params.class_id, facing=params.facing,
        side=params.side, score=params.score, box_visible=params.box_visible)


def generate(spec: SceneSpec, cam: CameraModel | None = None,
             priors: ClassPriors | None = None) -> list[SceneFile]:
    """Deterministically generate scene files for the given spec.

    Every ground-truth box is encodable; detections are the encoded ground
    truth with the configured noise applied.  Raises after bounded retries if
    the constraints cannot be met.
    """
    cam = cam if cam is not None else default_camera()
    priors = priors if priors is not None else ClassPriors.default()
    scenes = []
    for frame in range(spec.num_frames):
        rng = np.random.default_rng([spec.seed, frame])
        count = int(rng.integers(spec.boxes_per_frame[0], spec.boxes_per_frame[1] + 1))
        gts = []
        dets = []
        for _ in range(count):
            for attempt in range(MAX_ATTEMPTS_PER_BOX):
                sample = _sample_box(rng, spec, cam, priors)
                if sample is None:
                    continue
                box, score = sample
                try:
                    params = encode(box, cam, priors)
                    offsets = project_box(box, cam)
                except BoxliftError:
                    continue
                break
            else:
                raise RuntimeError(
                    f"could not sample a valid box in {MAX_ATTEMPTS_PER_BOX} attempts")
            height_px = offsets.enclosing.height
            gts.append(_ground_truth(box, height_px))
            params = LiftParams(
                box_amodal=params.box_amodal, side_ratio=params.side_ratio,
                delta_angles=params.delta_angles, delta_aspect=params.delta_aspect,
                inv_depth=params.inv_depth, class_id=params.class_id,
                facing=params.facing, side=params.side, score=score,
                box_visible=params.box_visible)
            dets.append(_perturb(params, rng, spec))
        scenes.append(SceneFile(cam, gts, dets))
    return scenes


def _ground_truth(box: Box3D, height_px: float):
    from boxlift.metrics import GroundTruthBox

    return GroundTruthBox(box, box_height_px=height_px, occlusion=0, truncation=0.0)
