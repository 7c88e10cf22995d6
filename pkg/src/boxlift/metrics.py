"""Detection metrics: 40-point interpolated AP, orientation similarity and
center-distance AP, with greedy score-ordered matching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from boxlift.boxes import Footprint, footprint, footprint_iou
from boxlift.geometry import wrap_angle
from boxlift.lifting import Box3D

# Recall grids.  The 40-point definition includes r = 0; the deployed
# benchmark variant starts at 1/40 instead.
RECALL_POINTS_PAPER = np.linspace(0.0, 1.0, 40)
RECALL_POINTS_DEPLOYED = np.arange(1, 41) / 40.0

CD_THRESHOLDS_DEFAULT = (0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class DifficultyProfile:
    """Inclusion thresholds for a ground-truth difficulty category."""

    min_box_height_px: float
    max_occlusion: int
    max_truncation: float


# KITTI-convention defaults; the category names only label threshold sets.
DIFFICULTY_PROFILES: dict[str, DifficultyProfile] = {
    "easy": DifficultyProfile(40.0, 0, 0.15),
    "moderate": DifficultyProfile(25.0, 1, 0.30),
    "hard": DifficultyProfile(25.0, 2, 0.50),
}


@dataclass(frozen=True)
class GroundTruthBox:
    """A 3D ground-truth box plus the attributes driving difficulty filtering."""

    box: Box3D
    box_height_px: float = math.inf
    occlusion: int = 0
    truncation: float = 0.0

    def __post_init__(self):
        if not 0 <= self.occlusion <= 3:
            raise ValueError(f"occlusion must be in 0..3, got {self.occlusion}")
        if not 0.0 <= self.truncation <= 1.0:
            raise ValueError(f"truncation must be in [0, 1], got {self.truncation}")


def difficulty_filter(gts: list[GroundTruthBox], profile: str,
                      profiles: dict[str, DifficultyProfile] | None = None) -> np.ndarray:
    """Inclusion flags for a difficulty profile.

    "moderate_hard" is the union of the moderate and hard inclusion sets.
    Excluded ground truth neither counts as a miss nor may be claimed as a
    true positive; detections matching it are ignored.
    """
    table = profiles if profiles is not None else DIFFICULTY_PROFILES
    if profile == "moderate_hard":
        return (difficulty_filter(gts, "moderate", table)
                | difficulty_filter(gts, "hard", table))
    spec = table[profile]
    flags = np.zeros(len(gts), dtype=bool)
    for i, gt in enumerate(gts):
        flags[i] = (gt.box_height_px >= spec.min_box_height_px
                    and gt.occlusion <= spec.max_occlusion
                    and gt.truncation <= spec.max_truncation)
    return flags


@dataclass
class MatchResult:
    """Per-detection and per-ground-truth assignment flags, input order."""

    det_tp: np.ndarray  # bool
    det_ignored: np.ndarray  # bool, matched only excluded ground truth
    det_gt_index: np.ndarray  # int, -1 when unmatched
    gt_matched: np.ndarray  # bool

    @property
    def num_fn(self) -> int:
        return int((~self.gt_matched).sum())


def _det_order(dets: list[Box3D]) -> list[int]:
    scores = [d.score if d.score is not None else 0.0 for d in dets]
    return sorted(range(len(dets)), key=lambda i: (-scores[i], i))


def match_footprints(det_fp: list[Footprint], det_order: list[int],
                     gt_fp: list[Footprint], iou_min: float,
                     include: np.ndarray) -> MatchResult:
    """Greedy footprint-level matching; det_order is the score ranking."""
    tp = np.zeros(len(det_fp), dtype=bool)
    ignored = np.zeros(len(det_fp), dtype=bool)
    det_gt = np.full(len(det_fp), -1, dtype=int)
    taken = np.zeros(len(gt_fp), dtype=bool)

    for i in det_order:
        best_iou, best_j = 0.0, -1
        best_ign_iou, best_ign_j = 0.0, -1
        for j in range(len(gt_fp)):
            if taken[j]:
                continue
            overlap = footprint_iou(det_fp[i], gt_fp[j])
            if overlap < iou_min:
                continue
            if include[j]:
                if overlap > best_iou:
                    best_iou, best_j = overlap, j
            elif overlap > best_ign_iou:
                best_ign_iou, best_ign_j = overlap, j
        if best_j >= 0:
            tp[i] = True
            det_gt[i] = best_j
            taken[best_j] = True
        elif best_ign_j >= 0:
            ignored[i] = True
            det_gt[i] = best_ign_j
            taken[best_ign_j] = True

    gt_matched = taken & include
    # Excluded ground truth is not counted either way.
    gt_matched[~include] = True
    return MatchResult(tp, ignored, det_gt, gt_matched)


def match_3d(dets: list[Box3D], gts: list[Box3D | GroundTruthBox], iou_min: float,
             gt_include: np.ndarray | None = None) -> MatchResult:
    """Greedy one-to-one matching in descending detection-score order.

    Each detection claims the unmatched ground truth with the highest
    overlap if that overlap reaches iou_min, otherwise it is a false
    positive (or ignored if its best admissible match is excluded ground
    truth).  Score ties break toward the lower detection index.
    """
    if not 0.0 < iou_min < 1.0:
        raise ValueError(f"iou_min must be in (0, 1), got {iou_min}")
    gt_boxes = [g.box if isinstance(g, GroundTruthBox) else g for g in gts]
    include = (np.ones(len(gt_boxes), dtype=bool)
               if gt_include is None else np.asarray(gt_include, dtype=bool))
    return match_footprints([footprint(d) for d in dets], _det_order(dets),
                            [footprint(g) for g in gt_boxes], iou_min, include)


def match_center_distance(dets: list[Box3D], gts: list[Box3D | GroundTruthBox],
                          threshold: float,
                          gt_include: np.ndarray | None = None) -> MatchResult:
    """Greedy matching by planar (x, z) distance of the bottom-face centers.

    The threshold comparison is inclusive.
    """
    gt_boxes = [g.box if isinstance(g, GroundTruthBox) else g for g in gts]
    include = (np.ones(len(gt_boxes), dtype=bool)
               if gt_include is None else np.asarray(gt_include, dtype=bool))
    det_c = [d.bottom_center()[[0, 2]] for d in dets]
    gt_c = [g.bottom_center()[[0, 2]] for g in gt_boxes]

    tp = np.zeros(len(dets), dtype=bool)
    ignored = np.zeros(len(dets), dtype=bool)
    det_gt = np.full(len(dets), -1, dtype=int)
    taken = np.zeros(len(gt_boxes), dtype=bool)

    for i in _det_order(dets):
        best_d, best_j = math.inf, -1
        best_ign_d, best_ign_j = math.inf, -1
        for j in range(len(gt_boxes)):
            if taken[j]:
                continue
            d = float(np.hypot(*(det_c[i] - gt_c[j])))
            if d > threshold:
                continue
            if include[j]:
                if d < best_d:
                    best_d, best_j = d, j
            elif d < best_ign_d:
                best_ign_d, best_ign_j = d, j
        if best_j >= 0:
            tp[i] = True
            det_gt[i] = best_j
            taken[best_j] = True
        elif best_ign_j >= 0:
            ignored[i] = True
            det_gt[i] = best_ign_j
            taken[best_ign_j] = True

    gt_matched = taken & include
    gt_matched[~include] = True
    return MatchResult(tp, ignored, det_gt, gt_matched)


def recall_points(variant: str = "paper40") -> np.ndarray:
    if variant == "paper40":
        return RECALL_POINTS_PAPER
    if variant == "deployed40":
        return RECALL_POINTS_DEPLOYED
    raise ValueError(f"unknown AP variant {variant!r}")


def _interpolate(levels: np.ndarray, recalls: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """max level over prefixes whose recall reaches each grid point; 0 past
    the maximum achieved recall."""
    n = len(levels)
    out = np.zeros(len(grid))
    if n == 0:
        return out
    suffix_max = np.maximum.accumulate(levels[::-1])[::-1]
    for gi, r in enumerate(grid):
        k = int(np.searchsorted(recalls, r, side="left"))
        if k < n:
            out[gi] = suffix_max[k]
    return out


@dataclass
class PrCurve:
    """Interpolated curve over the 40 recall points plus the raw sequence."""

    recalls: np.ndarray
    precision: np.ndarray
    similarity: np.ndarray | None
    num_gt: int
    raw_scores: np.ndarray
    raw_tp: np.ndarray

    def __post_init__(self):
        # Interpolated precision is non-increasing by construction.
        assert np.all(np.diff(self.precision) <= 1e-12)

    @property
    def ap(self) -> float:
        return float(self.precision.mean())

    @property
    def aos(self) -> float | None:
        if self.similarity is None:
            return None
        return float(self.similarity.mean())


def pr_curve(tp_flags, num_gt: int, similarities=None, scores=None,
             variant: str = "paper40") -> PrCurve | None:
    """Build the interpolated curve from a ranked TP/FP sequence.

    Returns None when there is no ground truth (AP undefined by convention).
    The sequence must already be ranked by descending score; similarities are
    per-detection orientation terms (0 for false positives).
    """
    if num_gt < 0:
        raise ValueError("num_gt must be non-negative")
    if num_gt == 0:
        return None
    tp = np.asarray(tp_flags, dtype=bool)
    grid = recall_points(variant)
    cum_tp = np.cumsum(tp)
    ranks = np.arange(1, len(tp) + 1)
    recalls = cum_tp / num_gt
    precisions = cum_tp / ranks
    interp_p = _interpolate(precisions, recalls, grid)
    interp_s = None
    if similarities is not None:
        sims = np.asarray(similarities, dtype=float)
        if len(sims) != len(tp):
            raise ValueError("similarities must align with tp_flags")
        s_levels = np.cumsum(sims) / ranks
        interp_s = _interpolate(s_levels, recalls, grid)
    raw_scores = (np.asarray(scores, dtype=float) if scores is not None
                  else np.zeros(len(tp)))
    return PrCurve(grid, interp_p, interp_s, num_gt, raw_scores, tp)


def ap40(tp_flags, num_gt: int, variant: str = "paper40") -> float | None:
    """Mean interpolated precision over the 40 recall points."""
    curve = pr_curve(tp_flags, num_gt, variant=variant)
    return None if curve is None else curve.ap


def aos(tp_flags, yaw_errors, num_gt: int, variant: str = "paper40") -> float | None:
    """AP machinery with precision replaced by normalized cosine similarity.

    yaw_errors holds the signed yaw error per detection; only true positives
    contribute, false positives enter the average with similarity 0.
    """
    tp = np.asarray(tp_flags, dtype=bool)
    errs = np.asarray(yaw_errors, dtype=float)
    sims = np.where(tp, 0.5 * (1.0 + np.cos(errs)), 0.0)
    curve = pr_curve(tp, num_gt, similarities=sims, variant=variant)
    return None if curve is None else curve.aos


def orientation_similarity(det: Box3D, gt: Box3D) -> float:
    """Normalized cosine similarity of the yaw error."""
    return 0.5 * (1.0 + math.cos(wrap_angle(det.angles.yaw - gt.angles.yaw)))


@dataclass
class ClassAccumulator:
    """Collects ranked detection outcomes for one class and difficulty."""

    scores: list[float] = field(default_factory=list)
    tp: list[bool] = field(default_factory=list)
    sim: list[float] = field(default_factory=list)
    order: list[tuple] = field(default_factory=list)
    num_gt: int = 0
    num_fn: int = 0

    def add_rows(self, frame_key, rows: list[tuple[float, bool, float]],
                 num_gt: int, num_fn: int) -> None:
        """Fold in precomputed per-frame (score, tp, similarity) rows."""
        self.num_gt += num_gt
        self.num_fn += num_fn
        for i, (score, tp, sim) in enumerate(rows):
            self.scores.append(score)
            self.tp.append(bool(tp))
            self.sim.append(sim)
            self.order.append((-score, frame_key, i))

    def add_frame(self, frame_key, dets: list[Box3D], gts: list[GroundTruthBox],
                  iou_min: float, gt_include: np.ndarray | None = None) -> None:
        result = match_3d(dets, [g.box for g in gts], iou_min, gt_include)
        include = (np.ones(len(gts), dtype=bool) if gt_include is None
                   else np.asarray(gt_include, dtype=bool))
        rows = []
        for i, det in enumerate(dets):
            if result.det_ignored[i]:
                continue
            score = det.score if det.score is not None else 0.0
            sim = 0.0
            if result.det_tp[i]:
                sim = orientation_similarity(det, gts[result.det_gt_index[i]].box)
            rows.append((score, bool(result.det_tp[i]), sim))
        self.add_rows(frame_key, rows, int(include.sum()), result.num_fn)

    def ranked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Global ranking, deterministic regardless of frame arrival order."""
        idx = sorted(range(len(self.order)), key=lambda k: self.order[k])
        return (np.array([self.scores[k] for k in idx]),
                np.array([self.tp[k] for k in idx], dtype=bool),
                np.array([self.sim[k] for k in idx]))

    def curve(self, variant: str = "paper40") -> PrCurve | None:
        scores, tp, sim = self.ranked()
        return pr_curve(tp, self.num_gt, similarities=sim, scores=scores,
                        variant=variant)

    def counts(self) -> dict[str, int]:
        tp_total = int(sum(self.tp))
        return {"tp": tp_total, "fp": len(self.tp) - tp_total, "fn": self.num_fn}


@dataclass
class DifficultyEval:
    """Evaluation outcome for one class at one difficulty."""

    ap: float | None
    aos: float | None
    counts: dict[str, int]
    curve: PrCurve | None
    cd_ap: dict[str, float | None] = field(default_factory=dict)


@dataclass
class EvalReport:
    """Per-class, per-difficulty results plus the run configuration echo."""

    entries: dict[str, dict[str, DifficultyEval]]
    iou_thresholds: dict[str, float]
    variant: str
    cd_thresholds: tuple[float, ...] = CD_THRESHOLDS_DEFAULT

    def to_dict(self) -> dict:
        out: dict = {"variant": self.variant,
                     "iou_thresholds": dict(self.iou_thresholds),
                     "cd_thresholds": list(self.cd_thresholds),
                     "classes": {}}
        for cls, by_diff in self.entries.items():
            out["classes"][cls] = {}
            for diff, ev in by_diff.items():
                out["classes"][cls][diff] = {
                    "ap3d": ev.ap,
                    "aos": ev.aos,
                    "counts": ev.counts,
                    "cd_ap": ev.cd_ap,
                }
        return out


def nuscenes_cd_ap(frames: list[tuple[list[Box3D], list[GroundTruthBox]]],
                   thresholds=CD_THRESHOLDS_DEFAULT, variant: str = "paper40",
                   gt_include_per_frame: list[np.ndarray] | None = None
                   ) -> dict[str, float | None]:
    """Center-distance AP per threshold plus their mean.

    Matching replaces the volume overlap with the planar distance of the
    bottom-face centers; the AP machinery is unchanged.
    """
    result: dict[str, float | None] = {}
    aps = []
    for t in thresholds:
        acc_scores: list[tuple] = []
        acc_tp: list[bool] = []
        num_gt = 0
        for fi, (dets, gts) in enumerate(frames):
            include = (None if gt_include_per_frame is None
                       else gt_include_per_frame[fi])
            m = match_center_distance(dets, [g.box for g in gts], t, include)
            inc = (np.ones(len(gts), dtype=bool) if include is None
                   else np.asarray(include, dtype=bool))
            num_gt += int(inc.sum())
            for i, det in enumerate(dets):
                if m.det_ignored[i]:
                    continue
                score = det.score if det.score is not None else 0.0
                acc_scores.append((-score, fi, i))
                acc_tp.append(bool(m.det_tp[i]))
        order = sorted(range(len(acc_tp)), key=lambda k: acc_scores[k])
        ranked_tp = [acc_tp[k] for k in order]
        ap = ap40(ranked_tp, num_gt, variant)
        result[f"{t:g}"] = ap
        if ap is not None:
            aps.append(ap)
    result["mean"] = float(np.mean(aps)) if aps else None
    return result
