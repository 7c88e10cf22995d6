"""Scalar loss functions with analytic gradients.

Every elementary loss returns (value, gradient) so the gradients can be
verified against central finite differences.  The 2D-box losses use
cos(IoU) with the IoU scalar taken directly as the argument in radians;
values therefore live in [cos(1), 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from boxlift.boxes import Box2D
from boxlift.errors import DegenerateProbability, LengthMismatch

SIMPLEX_TOL = 1e-3


@dataclass(frozen=True)
class LossWeights:
    """Weight per loss term; defaults: classification 2, depth 0.5, rest 1."""

    w_box_amodal: float = 1.0
    w_box_enclosing: float = 1.0
    w_box_visible: float = 1.0
    w_side_ratio: float = 1.0
    w_depth: float = 0.5
    w_offsets: float = 1.0
    w_aspect: float = 1.0
    w_facing: float = 1.0
    w_side: float = 1.0
    w_class: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0.0:
                raise ValueError(f"{f.name} must be non-negative")

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(**{f.name: getattr(self, f.name) * factor for f in fields(self)})


@dataclass(frozen=True)
class LossBreakdown:
    """Every individual term plus the weighted total."""

    box_amodal: float
    box_enclosing: float
    box_visible: float
    side_ratio: float
    depth: float
    offsets: float
    aspect: float
    facing: float
    side: float
    classification: float
    total: float

    def terms(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "total"}


def _iou2d_grad(pred: Box2D, target: Box2D) -> tuple[float, np.ndarray]:
    """IoU and its gradient w.r.t. pred's (x_min, y_min, x_max, y_max).

    Piecewise smooth; gradients are taken for the currently active edges and
    are zero for disjoint boxes.
    """
    iw = min(pred.x_max, target.x_max) - max(pred.x_min, target.x_min)
    ih = min(pred.y_max, target.y_max) - max(pred.y_min, target.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0, np.zeros(4)
    inter = iw * ih
    area_p = pred.area
    union = area_p + target.area - inter

    d_inter = np.array([
        -ih if pred.x_min > target.x_min else 0.0,
        -iw if pred.y_min > target.y_min else 0.0,
        ih if pred.x_max < target.x_max else 0.0,
        iw if pred.y_max < target.y_max else 0.0,
    ])
    d_area = np.array([-pred.height, -pred.width, pred.height, pred.width])
    d_union = d_area - d_inter
    grad = (d_inter * union - inter * d_union) / (union * union)
    return inter / union, grad


def cos_iou_loss(pred: Box2D, target: Box2D) -> tuple[float, np.ndarray]:
    """cos(IoU) box loss; monotonically decreasing in the overlap.

    Gradient is w.r.t. pred's 4 coordinates and is defined wherever the IoU
    is (edges not exactly touching).
    """
    if target.x_min >= target.x_max or target.y_min >= target.y_max:
        raise ValueError("target box must be non-degenerate")
    iou, grad = _iou2d_grad(pred, target)
    return math.cos(iou), -math.sin(iou) * grad


def l2_loss(pred, target) -> tuple[float, np.ndarray]:
    """Sum of squared differences; gradient 2 * (pred - target)."""
    p = np.atleast_1d(np.asarray(pred, dtype=float))
    t = np.atleast_1d(np.asarray(target, dtype=float))
    if p.shape != t.shape:
        raise LengthMismatch(f"shapes {p.shape} and {t.shape} differ")
    diff = p - t
    return float(diff @ diff), 2.0 * diff


def smooth_l1_loss(pred: float, target: float) -> tuple[float, float]:
    """0.5*d^2 for |d| < 1, |d| - 0.5 otherwise (transition fixed at 1)."""
    d = float(pred) - float(target)
    if abs(d) < 1.0:
        return 0.5 * d * d, d
    return abs(d) - 0.5, math.copysign(1.0, d)


def sigmoid_ce_loss(logit: float, label: int) -> tuple[float, float]:
    """Numerically stable sigmoid cross entropy for a binary label in {0, 1}."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    x = float(logit)
    value = max(x, 0.0) - x * label + math.log1p(math.exp(-abs(x)))
    sigma = 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))
    return value, sigma - label


def focal_loss(probs, label: int, gamma: float = 2.0,
               alpha: float = 0.25) -> tuple[float, np.ndarray]:
    """-alpha * (1 - p)^gamma * log(p) on the labelled class probability.

    gamma=0, alpha=1 reduces to plain cross entropy.  The gradient is with
    respect to the full probability vector (zero off the labelled entry).
    """
    p = np.asarray(probs, dtype=float)
    if gamma < 0.0:
        raise ValueError("gamma must be non-negative")
    if abs(float(p.sum()) - 1.0) > SIMPLEX_TOL or np.any(p < -SIMPLEX_TOL):
        raise ValueError("probs must lie on the probability simplex")
    p_label = float(p[label])
    if p_label < 1e-12:
        raise DegenerateProbability(f"p[{label}] = {p_label:.3g}")
    one_minus = 1.0 - p_label
    value = -alpha * one_minus ** gamma * math.log(p_label)
    grad = np.zeros_like(p)
    d = -alpha * (one_minus ** gamma / p_label)
    if gamma > 0.0 and one_minus > 0.0:
        d += alpha * gamma * one_minus ** (gamma - 1.0) * math.log(p_label)
    grad[label] = d
    return value, grad


@dataclass(frozen=True)
class PredictionTerms:
    """Network-side quantities entering the total loss."""

    box_amodal: Box2D
    box_enclosing: Box2D
    side_ratio: float
    inv_depth: float
    offsets: np.ndarray  # (8,) keypoint offsets, see KeypointOffsets.as_vector
    aspect: np.ndarray  # (2,) aspect multipliers
    facing_logit: float
    side_logit: float
    class_probs: np.ndarray
    box_visible: Box2D | None = None


@dataclass(frozen=True)
class TargetTerms:
    """Ground-truth counterparts; facing/side as binary labels (1 = front / right)."""

    box_amodal: Box2D
    box_enclosing: Box2D
    side_ratio: float
    inv_depth: float
    offsets: np.ndarray
    aspect: np.ndarray
    facing_label: int
    side_label: int
    class_index: int
    box_visible: Box2D | None = None


def total_loss(pred: PredictionTerms, target: TargetTerms,
               weights: LossWeights | None = None,
               focal_gamma: float = 2.0, focal_alpha: float = 0.25) -> LossBreakdown:
    """Assemble all ten terms with their per-term loss family.

    cos(IoU) for the three 2D boxes, L2 for side ratio / offsets / aspect
    multipliers, smooth L1 for inverse depth, sigmoid cross entropy for the
    two binary heads and focal loss for the classification.  The visible-box
    term is zero when either side omits the box.
    """
    w = weights if weights is not None else LossWeights()
    box_amodal = cos_iou_loss(pred.box_amodal, target.box_amodal)[0]
    box_enclosing = cos_iou_loss(pred.box_enclosing, target.box_enclosing)[0]
    if pred.box_visible is not None and target.box_visible is not None:
        box_visible = cos_iou_loss(pred.box_visible, target.box_visible)[0]
    else:
        box_visible = 0.0
    side_ratio = l2_loss(pred.side_ratio, target.side_ratio)[0]
    depth = smooth_l1_loss(pred.inv_depth, target.inv_depth)[0]
    offsets = l2_loss(pred.offsets, target.offsets)[0]
    aspect = l2_loss(pred.aspect, target.aspect)[0]
    facing = sigmoid_ce_loss(pred.facing_logit, target.facing_label)[0]
    side = sigmoid_ce_loss(pred.side_logit, target.side_label)[0]
    classification = focal_loss(pred.class_probs, target.class_index,
                                focal_gamma, focal_alpha)[0]
    total = (w.w_box_amodal * box_amodal + w.w_box_enclosing * box_enclosing
             + w.w_box_visible * box_visible + w.w_side_ratio * side_ratio
             + w.w_depth * depth + w.w_offsets * offsets + w.w_aspect * aspect
             + w.w_facing * facing + w.w_side * side + w.w_class * classification)
    return LossBreakdown(box_amodal, box_enclosing, box_visible, side_ratio,
                         depth, offsets, aspect, facing, side, classification, total)
