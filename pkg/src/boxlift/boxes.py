"""2D and oriented 3D box overlap, NMS and visibility-guided NMS."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Collinear / on-edge tolerance for the polygon clipper.
CLIP_EPS = 1e-12


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned pixel box; degenerate (zero-area) boxes are allowed."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    score: float = 0.0

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"invalid box extents {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class DetectionPair:
    """Visible-extent (modal) and full-extent (amodal) boxes of one detection."""

    modal: Box2D
    amodal: Box2D
    index: int


def iou2d(a: Box2D, b: Box2D) -> float:
    """Intersection over union of two 2D boxes; 0 when the union is empty."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex subject polygon by a convex CCW clip polygon.

    Vertices are (N, 2); returns the (possibly empty) intersection polygon.
    Points within CLIP_EPS of a clip edge count as inside.
    """
    output = [tuple(p) for p in subject]
    cx1, cy1 = clip[-1]
    for cx2, cy2 in clip:
        if not output:
            break
        ex, ey = cx2 - cx1, cy2 - cy1
        inp = output
        output = []
        sx, sy = inp[-1]
        # Signed side of the directed clip edge; interior is the left side.
        f_s = ex * (sy - cy1) - ey * (sx - cx1)
        for px, py in inp:
            f_p = ex * (py - cy1) - ey * (px - cx1)
            p_in = f_p >= -CLIP_EPS
            if p_in != (f_s >= -CLIP_EPS):
                denom = f_s - f_p
                if abs(denom) > CLIP_EPS:
                    t = f_s / denom
                    output.append((sx + t * (px - sx), sy + t * (py - sy)))
            if p_in:
                output.append((px, py))
            sx, sy, f_s = px, py, f_p
        cx1, cy1 = cx2, cy2
    return np.asarray(output) if output else np.empty((0, 2))


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area of a simple polygon given as (N, 2) vertices."""
    if len(poly) < 3:
        return 0.0
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


@dataclass(frozen=True)
class Footprint:
    """Ground-plane rectangle plus vertical interval of a yaw-only box."""

    polygon: np.ndarray  # (4, 2) CCW corners in the (x, z) plane
    y_top: float
    y_bottom: float
    volume: float
    center: tuple[float, float]
    radius: float


def footprint(box) -> Footprint:
    """Yaw-only reduction of a 3D box: pitch and roll are zeroed before overlap.

    Matches the benchmark convention where oriented overlap is computed from
    the bird's-eye-view rectangle times the vertical interval.
    """
    reduced = box.yaw_only()
    verts = reduced.vertices()
    # Perimeter order: origin, width corner, far corner, length corner.
    poly = verts[(0, 1, 3, 2), :][:, (0, 2)]
    # Enforce CCW orientation in the (x, z) plane for the clipper.
    signed = 0.0
    for i in range(4):
        x1, z1 = poly[i]
        x2, z2 = poly[(i + 1) % 4]
        signed += x1 * z2 - x2 * z1
    if signed < 0.0:
        poly = poly[::-1].copy()
    y_bottom = float(verts[0, 1])
    area = polygon_area(poly)
    length, height, width = box.dims
    center = (float(poly[:, 0].mean()), float(poly[:, 1].mean()))
    radius = 0.5 * math.hypot(length, width)
    return Footprint(poly, y_bottom - height, y_bottom, area * height,
                     center, radius)


def footprint_iou(a: Footprint, b: Footprint) -> float:
    """Volume IoU of two footprints (prisms)."""
    if math.hypot(a.center[0] - b.center[0],
                  a.center[1] - b.center[1]) > a.radius + b.radius:
        return 0.0
    dy = min(a.y_bottom, b.y_bottom) - max(a.y_top, b.y_top)
    if dy <= 0.0:
        return 0.0
    inter_poly = clip_convex(a.polygon, b.polygon)
    inter = polygon_area(inter_poly) * dy
    if inter <= 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return inter / union


def iou3d(a, b) -> float:
    """Oriented 3D IoU of two boxes under the yaw-only reduction.

    The bird's-eye-view intersection is an exact convex polygon clip; the
    vertical overlap is an interval intersection.
    """
    return footprint_iou(footprint(a), footprint(b))


def nms(dets: list[Box2D], iou_threshold: float) -> list[int]:
    """Greedy non-maximum suppression over descending scores.

    A box is suppressed iff its IoU with an already kept box exceeds the
    threshold (strictly).  Score ties break toward the lower input index.
    Returns kept indices in ascending order.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept: list[int] = []
    for i in order:
        if all(iou2d(dets[i], dets[j]) <= iou_threshold for j in kept):
            kept.append(i)
    return sorted(kept)


def vg_nms(pairs: list[DetectionPair], iou_threshold: float) -> list[int]:
    """Suppression decided on the modal (visible) boxes.

    The survivors' amodal boxes are what downstream lifting consumes; when
    modal == amodal for every pair this reduces exactly to nms.
    """
    return nms([p.modal for p in pairs], iou_threshold)
