"""Shared test oracles and samplers, independent of the code paths they check."""

from __future__ import annotations

import math

import numpy as np

from boxlift.geometry import CameraModel, RotationTriple, backproject_at_distance, compose_rotation
from boxlift.lifting import Box3D


def make_camera() -> CameraModel:
    return CameraModel.pinhole(720.0, 720.0, 621.0, 187.5, 1242, 375)


def sample_box(rng: np.random.Generator, cam: CameraModel,
               dims_range=(0.5, 6.0), depth_range=(4.0, 80.0),
               pitch_roll_deg=3.0) -> Box3D:
    """A random valid box anchored on a pixel ray (origin may need retries
    upstream when vertices leave the camera frustum)."""
    dims = tuple(rng.uniform(*dims_range, 3))
    depth = rng.uniform(*depth_range)
    u = rng.uniform(0.1 * cam.image_width, 0.9 * cam.image_width)
    v = rng.uniform(0.55 * cam.image_height, 0.98 * cam.image_height)
    origin = backproject_at_distance((u, v), depth, cam)
    jitter = math.radians(pitch_roll_deg)
    angles = RotationTriple(rng.uniform(-math.pi, math.pi),
                            rng.uniform(-jitter, jitter),
                            rng.uniform(-jitter, jitter))
    return Box3D(origin, dims, angles, "Car", float(rng.uniform(0.0, 1.0)))


def street_box(rng: np.random.Generator, depth_range=(12.0, 80.0),
               height_range=(1.3, 1.9), ground_range=(1.4, 1.75),
               pitch_roll_deg=3.0) -> Box3D:
    """A car-like box in a realistic street rig (camera above the ground)."""
    h = rng.uniform(*height_range)
    depth = rng.uniform(*depth_range)
    x = rng.uniform(-0.3, 0.3) * depth
    jitter = math.radians(pitch_roll_deg)
    angles = RotationTriple(rng.uniform(-math.pi, math.pi),
                            rng.uniform(-jitter, jitter),
                            rng.uniform(-jitter, jitter))
    return Box3D(np.array([x, rng.uniform(*ground_range), depth]),
                 (2.8 * h, h, 1.1 * h), angles, "Car", float(rng.uniform(0.0, 1.0)))


def point_in_box(points: np.ndarray, box: Box3D) -> np.ndarray:
    """Membership test via the box's local frame (no polygon machinery)."""
    rot = box.rotation()
    local = (points - box.origin) @ rot
    length, height, width = box.dims
    sx, sz = box.extension_signs()
    x_lo, x_hi = min(0.0, sx * width), max(0.0, sx * width)
    z_lo, z_hi = min(0.0, sz * length), max(0.0, sz * length)
    return ((local[:, 0] >= x_lo) & (local[:, 0] <= x_hi)
            & (local[:, 1] >= -height) & (local[:, 1] <= 0.0)
            & (local[:, 2] >= z_lo) & (local[:, 2] <= z_hi))


def sample_points_in_box(rng: np.random.Generator, box: Box3D, n: int) -> np.ndarray:
    """Uniform samples inside the box volume."""
    length, height, width = box.dims
    sx, sz = box.extension_signs()
    local = rng.uniform(0.0, 1.0, (n, 3))
    local[:, 0] *= sx * width
    local[:, 1] *= -height
    local[:, 2] *= sz * length
    return box.origin + local @ box.rotation().T


def monte_carlo_iou3d(a: Box3D, b: Box3D, n: int, rng: np.random.Generator) -> float:
    """Point-sampling IoU oracle: sample in a, estimate the overlap fraction."""
    vol_a = float(np.prod(a.dims))
    vol_b = float(np.prod(b.dims))
    pts = sample_points_in_box(rng, a, n)
    inter = vol_a * float(point_in_box(pts, b).mean())
    union = vol_a + vol_b - inter
    return inter / union if union > 0.0 else 0.0


def rotate_translate_box(box: Box3D, delta_yaw: float, translation) -> Box3D:
    """Rigidly move a yaw-only box: rotate about the vertical axis, translate.

    Rebuilds the box anchored at the transformed camera-closest corner, with
    explicit extension signs so the covered volume transfers exactly.
    """
    assert box.angles.pitch == 0.0 and box.angles.roll == 0.0
    rot = compose_rotation(RotationTriple(delta_yaw, 0.0, 0.0))
    verts = box.vertices() @ rot.T + np.asarray(translation, dtype=float)
    bottom = verts[:4]
    closest = int(np.argmin(np.linalg.norm(bottom, axis=1)))
    new_rot = compose_rotation(RotationTriple(box.angles.yaw + delta_yaw, 0.0, 0.0))
    # Vertex indices: ^1 crosses the width edge, ^2 crosses the length edge.
    sx = math.copysign(1.0, float((bottom[closest ^ 1] - bottom[closest]) @ new_rot[:, 0]))
    sz = math.copysign(1.0, float((bottom[closest ^ 2] - bottom[closest]) @ new_rot[:, 2]))
    return Box3D(bottom[closest], box.dims,
                 RotationTriple(box.angles.yaw + delta_yaw, 0.0, 0.0),
                 box.class_id, box.score, extensions=(sx, sz))


def central_difference(func, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(len(x)):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (func(hi) - func(lo)) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.atleast_1d(np.asarray(analytic, dtype=float))
    numeric = np.atleast_1d(np.asarray(numeric, dtype=float))
    scale = np.maximum(1e-8, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / scale).max())
