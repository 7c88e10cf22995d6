"""Camera model, projection, ray backprojection and rotation composition.

Coordinate conventions used throughout the package:

  Camera frame: x right, y down, z forward (right-handed).  Pixel
  coordinates (u, v) with v growing downward; (u, v, 1) ~ P @ (x, y, z, 1)
  for the 3x4 projection matrix P.

  Rotation angles (yaw, pitch, roll), all wrapped to (-pi, pi]:
    yaw   about +y (the downward image axis).  A direction in the ground
          plane has angle atan2(x, z); positive yaw increases that angle,
          turning a forward-pointing axis toward +x (image right).
    pitch about x (lateral axis), positive tips the forward axis upward.
    roll  about z (forward axis), positive tips the right side downward.
  Composition is intrinsic, R = R_y(yaw) @ R_x(pitch) @ R_z(roll).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from boxlift.errors import GimbalLock, NoForwardSolution, PointBehindCamera

TWO_PI = 2.0 * math.pi

# Pixels may fall outside the image by up to this many image sizes on each
# side (truncated objects project their origin outside the frame).
FRAME_MARGIN = 2.0


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]; a tie at -pi maps to +pi."""
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


@dataclass(frozen=True)
class RotationTriple:
    """Yaw/pitch/roll in radians, normalized to (-pi, pi] on construction."""

    yaw: float
    pitch: float
    roll: float

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        object.__setattr__(self, "pitch", wrap_angle(float(self.pitch)))
        object.__setattr__(self, "roll", wrap_angle(float(self.roll)))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.yaw, self.pitch, self.roll)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole-style camera described by a 3x4 projection matrix.

    extrinsic_pitch / extrinsic_roll describe how the camera is mounted
    relative to the vehicle; rotation priors use their negation.
    """

    projection: np.ndarray  # (3, 4), pixels <- meters, homogeneous
    image_width: int
    image_height: int
    extrinsic_pitch: float = 0.0
    extrinsic_roll: float = 0.0

    def __post_init__(self):
        proj = np.asarray(self.projection, dtype=float)
        if proj.shape != (3, 4):
            raise ValueError(f"projection must be 3x4, got {proj.shape}")
        if not np.all(np.isfinite(proj)):
            raise ValueError("projection must be finite")
        if np.linalg.matrix_rank(proj) != 3:
            raise ValueError("projection must have rank 3")
        if abs(np.linalg.det(proj[:, :3])) < 1e-12:
            raise ValueError("left 3x3 block of projection must be invertible")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        object.__setattr__(self, "projection", proj)

    @classmethod
    def pinhole(cls, fx: float, fy: float, cx: float, cy: float,
                image_width: int, image_height: int,
                extrinsic_pitch: float = 0.0, extrinsic_roll: float = 0.0) -> "CameraModel":
        proj = np.array([
            [fx, 0.0, cx, 0.0],
            [0.0, fy, cy, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        return cls(proj, image_width, image_height, extrinsic_pitch, extrinsic_roll)


def project(point, cam: CameraModel) -> np.ndarray:
    """Project a camera-frame point to pixel coordinates (u, v).

    Raises PointBehindCamera for z <= 1e-9 or vanishing homogeneous depth.
    """
    p = np.asarray(point, dtype=float)
    if p[2] <= 1e-9:
        raise PointBehindCamera(f"point has z={p[2]:.3g}")
    hom = cam.projection[:, :3] @ p + cam.projection[:, 3]
    if hom[2] <= 1e-9:
        raise PointBehindCamera(f"homogeneous depth {hom[2]:.3g}")
    return hom[:2] / hom[2]


def project_many(points: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Project an (N, 3) array of camera-frame points to (N, 2) pixels."""
    pts = np.asarray(points, dtype=float)
    if np.any(pts[:, 2] <= 1e-9):
        raise PointBehindCamera("at least one point has non-positive z")
    hom = pts @ cam.projection[:, :3].T + cam.projection[:, 3]
    if np.any(hom[:, 2] <= 1e-9):
        raise PointBehindCamera("at least one point has non-positive homogeneous depth")
    return hom[:, :2] / hom[:, 2:3]


def backproject_at_distance(pixel, distance: float, cam: CameraModel) -> np.ndarray:
    """Return the point q with project(q) == pixel and ||q|| == distance, q.z > 0.

    The pixel ray is X(t) = c + t*d with d = M^-1 (u, v, 1) and c = -M^-1 p4
    (M the left 3x3 block, p4 the fourth column); ||X(t)|| == distance is a
    quadratic in t, solved in closed form.  The forward constraint is t > 0,
    which equals the homogeneous depth of X(t).
    """
    u, v = float(pixel[0]), float(pixel[1])
    if distance <= 0.0:
        raise NoForwardSolution(f"distance must be positive, got {distance}")
    if not (math.isfinite(u) and math.isfinite(v)):
        raise ValueError("pixel coordinates must be finite")
    mw, mh = FRAME_MARGIN * cam.image_width, FRAME_MARGIN * cam.image_height
    if not (-mw <= u <= cam.image_width + mw and -mh <= v <= cam.image_height + mh):
        raise ValueError(f"pixel ({u:.1f}, {v:.1f}) outside the enlarged image frame")

    m = cam.projection[:, :3]
    direction = np.linalg.solve(m, np.array([u, v, 1.0]))
    center = -np.linalg.solve(m, cam.projection[:, 3])

    a = float(direction @ direction)
    b = 2.0 * float(center @ direction)
    c = float(center @ center) - distance * distance
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        raise NoForwardSolution("pixel ray never reaches the requested distance")
    root = math.sqrt(disc)
    for t in ((-b + root) / (2.0 * a), (-b - root) / (2.0 * a)):
        if t > 0.0:
            q = center + t * direction
            if q[2] > 0.0:
                return q
    raise NoForwardSolution("no forward intersection at the requested distance")


def ray_yaw(point) -> float:
    """Yaw angle of the camera ray through a point: atan2(x, z)."""
    return math.atan2(float(point[0]), float(point[2]))


def compose_rotation(angles: RotationTriple) -> np.ndarray:
    """Compose R = R_y(yaw) @ R_x(pitch) @ R_z(roll); orthonormal, det +1."""
    cy, sy = math.cos(angles.yaw), math.sin(angles.yaw)
    cp, sp = math.cos(angles.pitch), math.sin(angles.pitch)
    cr, sr = math.cos(angles.roll), math.sin(angles.roll)
    # Product written out; rows follow from R_y @ (R_x @ R_z).
    return np.array([
        [cy * cr + sy * sp * sr, -cy * sr + sy * sp * cr, sy * cp],
        [cp * sr, cp * cr, -sp],
        [-sy * cr + cy * sp * sr, sy * sr + cy * sp * cr, cy * cp],
    ])


def decompose_rotation(rotation: np.ndarray) -> RotationTriple:
    """Invert compose_rotation away from gimbal lock.

    Raises GimbalLock when |cos(pitch)| < 1e-6 (yaw and roll become coupled
    and cannot be separated; the caller must handle the degenerate pose).
    """
    r = np.asarray(rotation, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or np.linalg.det(r) < 0.0:
        raise ValueError("matrix is not a proper rotation")
    cos_pitch = math.hypot(r[1, 0], r[1, 1])
    if cos_pitch < 1e-6:
        raise GimbalLock("|cos(pitch)| < 1e-6; yaw/roll are not separable")
    pitch = math.atan2(-r[1, 2], cos_pitch)
    yaw = math.atan2(r[0, 2], r[2, 2])
    roll = math.atan2(r[1, 0], r[1, 1])
    return RotationTriple(yaw, pitch, roll)
