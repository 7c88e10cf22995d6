"""Lift per-detection parameters to oriented 3D boxes, and the exact inverse.

The box is anchored at its origin keypoint O, the camera-closest bottom
corner.  Local box axes before rotation: x spans the width (toward the
corner A), -y the height (toward B, up), z the length (toward C).  With the
yaw convention from :mod:`boxlift.geometry` a zero-yaw box points its length
axis along +z, so the yaw of a box equals the ground-plane angle of its
length axis, which is what the arcsin side-ratio prior assumes.

Anchoring at a corner leaves a sign freedom per horizontal axis: the box may
extend along +axis or -axis from O.  Both signs are resolved so that O stays
the camera-closest bottom corner (extension sign is positive iff stepping
along the axis does not move closer to the camera).  This makes the
construction well defined from (origin, dims, angles) alone and makes a
front/back flip (yaw + pi) land on the identical volume.

Lifting chain: the origin pixel comes from the amodal 2D box and the side
ratio, the 3D origin from backprojection at the predicted distance, the
height from a closed-form solve that pins the 2D top edge, length and width
from class aspect-ratio priors, and the angles from the camera-ray yaw prior
plus predicted offsets.  ``encode`` inverts every step algebraically so that
``lift(encode(b))`` reproduces ``b`` to floating-point accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from boxlift.boxes import Box2D
from boxlift.errors import (
    DepthOutOfRange,
    NonPositiveHeight,
    PointBehindCamera,
    SingularProjection,
    Unencodable,
)
from boxlift.geometry import (
    CameraModel,
    RotationTriple,
    backproject_at_distance,
    compose_rotation,
    project,
    project_many,
    ray_yaw,
    wrap_angle,
)

FACING_VALUES = ("front", "back")
SIDE_VALUES = ("left", "right")

# Accepted window for the predicted distance, meters.
DEPTH_MIN = 0.5
DEPTH_MAX = 500.0


@dataclass(frozen=True)
class ClassPriors:
    """Per-class aspect-ratio priors: length/height and width/height."""

    table: dict[str, tuple[float, float]]

    def __post_init__(self):
        for name, (ar_l, ar_w) in self.table.items():
            if ar_l <= 0.0 or ar_w <= 0.0:
                raise ValueError(f"priors for {name!r} must be positive")

    def aspect(self, class_id: str) -> tuple[float, float]:
        try:
            return self.table[class_id]
        except KeyError:
            raise KeyError(f"no aspect priors for class {class_id!r}") from None

    @classmethod
    def default(cls) -> "ClassPriors":
        return cls({"Car": (2.8, 1.1)})


@dataclass(frozen=True)
class LiftParams:
    """Per-object prediction vector consumed by :func:`lift`.

    box_visible covers only the visible pixels of the object; it is carried
    for selection (vg-NMS) and the loss, never used by the lift itself.
    """

    box_amodal: Box2D
    side_ratio: float
    delta_angles: tuple[float, float, float]
    delta_aspect: tuple[float, float]  # (length, width) multipliers
    inv_depth: float
    class_id: str
    facing: str  # "front" | "back": which end of the vehicle is visible
    side: str  # "left" | "right": where the side face sits in the image
    score: float = 0.0
    box_visible: Box2D | None = None

    def __post_init__(self):
        b = self.box_amodal
        if b.x_min >= b.x_max or b.y_min >= b.y_max:
            raise ValueError("box_amodal must be non-degenerate")
        if not 0.0 <= self.side_ratio <= 1.0:
            raise ValueError(f"side_ratio must be in [0, 1], got {self.side_ratio}")
        if self.inv_depth <= 0.0:
            raise ValueError("inv_depth must be positive")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if len(self.delta_angles) != 3:
            raise ValueError("delta_angles must have 3 components")
        if len(self.delta_aspect) != 2 or any(d <= 0.0 for d in self.delta_aspect):
            raise ValueError("delta_aspect components must be positive")
        if self.facing not in FACING_VALUES:
            raise ValueError(f"facing must be one of {FACING_VALUES}")
        if self.side not in SIDE_VALUES:
            raise ValueError(f"side must be one of {SIDE_VALUES}")


@dataclass(frozen=True)
class TransformSet:
    """Homogeneous scaling, rotation and translation assembled by the lift."""

    scale: np.ndarray  # (4, 4) diag(width, height, length, 1)
    rotation: np.ndarray  # (4, 4) rotation block embedded homogeneously
    translation: np.ndarray  # (4, 4) identity plus the origin in the last column

    def matrix(self) -> np.ndarray:
        return self.translation @ self.rotation @ self.scale


@dataclass(eq=False)
class Box3D:
    """Oriented 3D box anchored at its camera-closest bottom corner.

    dims is (length, height, width) in meters.  Vertex order (see module
    docstring for the local frame):

      0 origin O            4 top of O (B keypoint)
      1 width corner A      5 top of A
      2 length corner C     6 top of C
      3 far bottom corner   7 top far corner

    extensions pins the width/length extension signs explicitly.  Boxes built
    by the lift leave it None: the signs then derive from the camera-closest
    rule, which is exactly invertible.  Imports from center-based formats set
    it, because when the camera sits laterally inside a box's slab the
    closest-corner anchor alone does not determine which side the box covers.
    """

    origin: np.ndarray
    dims: tuple[float, float, float]
    angles: RotationTriple
    class_id: str = "Car"
    score: float | None = None
    extensions: tuple[float, float] | None = None

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float)
        if origin.shape != (3,) or not np.all(np.isfinite(origin)):
            raise ValueError("origin must be a finite 3-vector")
        if origin[2] <= 0.0:
            raise ValueError("origin must be in front of the camera")
        if len(self.dims) != 3 or any(d <= 0.0 for d in self.dims):
            raise ValueError(f"dims must be positive, got {self.dims}")
        if self.extensions is not None:
            if tuple(abs(s) for s in self.extensions) != (1.0, 1.0):
                raise ValueError("extensions must be +-1 signs")
            self.extensions = (float(self.extensions[0]), float(self.extensions[1]))
        self.origin = origin
        self.dims = tuple(float(d) for d in self.dims)

    def rotation(self) -> np.ndarray:
        return compose_rotation(self.angles)

    def extension_signs(self) -> tuple[float, float]:
        """Signs of the width/length extensions keeping O camera-closest.

        Stepping to an adjacent bottom corner changes the squared camera
        distance by 2*dot(O, e) + |e|^2, so the positive direction is kept
        exactly when dot(O, axis) >= -dim/2 (ties resolve to +1, which keeps
        vertex 0 the canonical closest corner).
        """
        if self.extensions is not None:
            return self.extensions
        rot = self.rotation()
        length, _, width = self.dims
        sx = 1.0 if float(self.origin @ rot[:, 0]) >= -0.5 * width else -1.0
        sz = 1.0 if float(self.origin @ rot[:, 2]) >= -0.5 * length else -1.0
        return sx, sz

    def local_corners(self) -> np.ndarray:
        """Signed, scaled corner offsets in the local frame, (8, 3)."""
        length, height, width = self.dims
        sx, sz = self.extension_signs()
        x, y, z = sx * width, -height, sz * length
        return np.array([
            [0.0, 0.0, 0.0],
            [x, 0.0, 0.0],
            [0.0, 0.0, z],
            [x, 0.0, z],
            [0.0, y, 0.0],
            [x, y, 0.0],
            [0.0, y, z],
            [x, y, z],
        ])

    def unit_corners(self) -> np.ndarray:
        """Signed unit-box corners, homogeneous (8, 4).

        Mapping them through TransformSet.matrix() reproduces vertices().
        """
        sx, sz = self.extension_signs()
        base = [
            (0.0, 0.0, 0.0), (sx, 0.0, 0.0), (0.0, 0.0, sz), (sx, 0.0, sz),
            (0.0, -1.0, 0.0), (sx, -1.0, 0.0), (0.0, -1.0, sz), (sx, -1.0, sz),
        ]
        return np.array([(x, y, z, 1.0) for x, y, z in base])

    def vertices(self) -> np.ndarray:
        """The 8 box corners in the camera frame, (8, 3)."""
        return self.origin + self.local_corners() @ self.rotation().T

    def bottom_center(self) -> np.ndarray:
        """Center of the bottom face."""
        verts = self.vertices()
        return verts[:4].mean(axis=0)

    def yaw_only(self) -> "Box3D":
        """Copy with pitch and roll zeroed (benchmark overlap convention).

        The effective extension signs carry over so the reduction keeps the
        original anchoring.
        """
        if self.angles.pitch == 0.0 and self.angles.roll == 0.0:
            return self
        return Box3D(self.origin, self.dims, RotationTriple(self.angles.yaw, 0.0, 0.0),
                     self.class_id, self.score, extensions=self.extension_signs())


@dataclass(frozen=True)
class KeypointOffsets:
    """Relative keypoint positions inside the box enclosing all 8 projections.

    Each offset pair is ((u - u_min) / width, (v - v_min) / height), in [0, 1].
    """

    enclosing: Box2D
    width_corner: tuple[float, float]
    height_corner: tuple[float, float]
    length_corner: tuple[float, float]
    origin: tuple[float, float]

    def as_vector(self) -> np.ndarray:
        """Fixed-order 8-vector: width, height, length, origin x/y pairs."""
        return np.array([*self.width_corner, *self.height_corner,
                         *self.length_corner, *self.origin])


def solve_origin(params: LiftParams, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Place the origin keypoint: pixel from the amodal box and side ratio,
    3D point by backprojection at the predicted distance.

    Returns the origin and the homogeneous translation matrix.
    """
    distance = 1.0 / params.inv_depth
    if not DEPTH_MIN < distance < DEPTH_MAX:
        raise DepthOutOfRange(
            f"distance {distance:.3g} m outside ({DEPTH_MIN}, {DEPTH_MAX})")
    b = params.box_amodal
    width2d = b.x_max - b.x_min
    if params.side == "left":
        o_u = b.x_min + params.side_ratio * width2d
    else:
        o_u = b.x_max - params.side_ratio * width2d
    origin = backproject_at_distance((o_u, b.y_max), distance, cam)
    translation = np.eye(4)
    translation[:3, 3] = origin
    return origin, translation


def solve_height(origin: np.ndarray, top_v: float, cam: CameraModel) -> float:
    """Closed-form height h with project(origin - (0, h, 0)).v == top_v.

    The projected v-coordinate is a ratio of two expressions linear in h, so
    the constraint is a single linear solve.  Exact for any pose; treating
    the result as the box height is what assumes small pitch and roll.
    """
    m = cam.projection[:, :3]
    p4 = cam.projection[:, 3]
    v_num = float(m[1] @ origin + p4[1])
    depth_hom = float(m[2] @ origin + p4[2])
    denom = float(top_v * m[2, 1] - m[1, 1])
    if abs(denom) < 1e-12:
        raise SingularProjection("height coefficient vanishes for this camera row")
    height = (top_v * depth_hom - v_num) / denom
    if height <= 0.0:
        raise NonPositiveHeight(
            f"top edge v={top_v:.3f} does not sit above the origin row")
    return height


def compute_dims(height: float, class_id: str, delta_aspect: tuple[float, float],
                 priors: ClassPriors) -> tuple[float, float, float]:
    """Length and width from class aspect-ratio priors times predicted multipliers."""
    if height <= 0.0:
        raise ValueError("height must be positive")
    ar_l, ar_w = priors.aspect(class_id)
    return (ar_l * height * delta_aspect[0], height, ar_w * height * delta_aspect[1])


def compute_yaw_prior(origin: np.ndarray, side_ratio: float, side: str) -> float:
    """Initial yaw: camera-ray angle plus/minus arcsin of the side ratio.

    The ratio is clamped into [0, 1] before the arcsin (regressor outputs are
    unbounded).
    """
    theta_cam = ray_yaw(origin)
    s = min(1.0, max(0.0, side_ratio))
    offset = math.asin(s)
    return theta_cam + offset if side == "right" else theta_cam - offset


def compute_angles(theta_init: float, cam: CameraModel,
                   delta_angles: tuple[float, float, float], facing: str) -> RotationTriple:
    """Final rotation: refine the priors with the predicted offsets.

    Yaw gains pi when the front is visible; pitch and roll priors are the
    negated camera extrinsics.
    """
    yaw = theta_init + delta_angles[0]
    if facing == "front":
        yaw += math.pi
    pitch = -cam.extrinsic_pitch + delta_angles[1]
    roll = -cam.extrinsic_roll + delta_angles[2]
    return RotationTriple(yaw, pitch, roll)


def lift(params: LiftParams, cam: CameraModel,
         priors: ClassPriors) -> tuple[Box3D, TransformSet]:
    """Run the full lift chain and return the box plus its transform set."""
    origin, translation = solve_origin(params, cam)
    height = solve_height(origin, params.box_amodal.y_min, cam)
    dims = compute_dims(height, params.class_id, params.delta_aspect, priors)
    theta_init = compute_yaw_prior(origin, params.side_ratio, params.side)
    angles = compute_angles(theta_init, cam, params.delta_angles, params.facing)
    box = Box3D(origin, dims, angles, params.class_id, params.score)
    length, h, width = dims
    rotation = np.eye(4)
    rotation[:3, :3] = box.rotation()
    transforms = TransformSet(np.diag([width, h, length, 1.0]), rotation, translation)
    return box, transforms


def encode(box: Box3D, cam: CameraModel, priors: ClassPriors) -> LiftParams:
    """Exact inverse of :func:`lift`, also the training-target generator.

    facing/side/side_ratio come from the sine and cosine of the yaw measured
    against the camera ray; the amodal box is assembled so that the origin
    pixel relation and the height solve invert exactly (its top edge is the
    exact height-solve pixel, which coincides with the projected B keypoint
    at zero pitch and roll).  All angle offsets except yaw absorb the pose
    relative to the priors; the yaw offset is identically zero.
    """
    try:
        uv = project_many(box.vertices(), cam)
        u_o, v_o = project(box.origin, cam)
    except PointBehindCamera as exc:
        raise Unencodable(str(exc)) from exc

    origin = box.origin
    distance = float(np.linalg.norm(origin))
    theta_cam = ray_yaw(origin)
    alpha = wrap_angle(box.angles.yaw - theta_cam)
    facing = "front" if abs(alpha) > 0.5 * math.pi else "back"
    rel = wrap_angle(alpha - math.pi) if facing == "front" else alpha
    side = "right" if math.sin(rel) >= 0.0 else "left"
    side_ratio = abs(math.sin(rel))

    length, height, width = box.dims
    top_v = project(origin - np.array([0.0, height, 0.0]), cam)[1]
    # Horizontal box span from the three bottom keypoints.  The width and
    # length edges cannot both align with the camera ray, so the span is
    # positive for every valid box; placing the origin pixel at the side
    # ratio inside it makes the origin relation invert exactly.
    span = (u_o, float(uv[1, 0]), float(uv[2, 0]))
    width_px = max(span) - min(span)
    if side == "right":
        x_max = u_o + side_ratio * width_px
        x_min = x_max - width_px
    else:
        x_min = u_o - side_ratio * width_px
        x_max = x_min + width_px
    if not (x_min < x_max and top_v < v_o):
        raise Unencodable("degenerate pose: projected keypoints do not span a box")

    ar_l, ar_w = priors.aspect(box.class_id)
    return LiftParams(
        box_amodal=Box2D(x_min, top_v, x_max, v_o),
        side_ratio=side_ratio,
        delta_angles=(0.0,
                      wrap_angle(box.angles.pitch + cam.extrinsic_pitch),
                      wrap_angle(box.angles.roll + cam.extrinsic_roll)),
        delta_aspect=(length / (ar_l * height), width / (ar_w * height)),
        inv_depth=1.0 / distance,
        class_id=box.class_id,
        facing=facing,
        side=side,
        score=box.score if box.score is not None else 0.0,
    )


def project_box(box: Box3D, cam: CameraModel) -> KeypointOffsets:
    """Project the box and express the keypoints relative to the enclosing box."""
    uv = project_many(box.vertices(), cam)
    lo = uv.min(axis=0)
    hi = uv.max(axis=0)
    size = hi - lo
    enclosing = Box2D(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    def offset(i: int) -> tuple[float, float]:
        rel = np.where(size > 0.0, (uv[i] - lo) / np.where(size > 0.0, size, 1.0), 0.0)
        return (float(rel[0]), float(rel[1]))

    return KeypointOffsets(enclosing=enclosing, width_corner=offset(1),
                           height_corner=offset(4), length_corner=offset(2),
                           origin=offset(0))


def box_from_bottom_center(center, dims: tuple[float, float, float],
                           angles: RotationTriple, class_id: str = "Car",
                           score: float | None = None) -> Box3D:
    """Build a Box3D from a bottom-face center, selecting the origin corner.

    The origin is the camera-closest of the four bottom corners; exact ties
    resolve to the first corner in the fixed (+x, +z), (+x, -z), (-x, +z),
    (-x, -z) enumeration.  The extension signs are stored explicitly so the
    box covers the given volume exactly for every pose.
    """
    center = np.asarray(center, dtype=float)
    length, height, width = dims
    rot = compose_rotation(angles)
    half_w = 0.5 * width * rot[:, 0]
    half_l = 0.5 * length * rot[:, 2]
    combos = ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0))
    corners = [center + sx * half_w + sz * half_l for sx, sz in combos]
    best = min(range(4), key=lambda i: (float(corners[i] @ corners[i]), i))
    sx, sz = combos[best]
    return Box3D(corners[best], dims, angles, class_id, score,
                 extensions=(-sx, -sz))
