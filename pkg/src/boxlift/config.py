"""Run configuration: a single versioned JSON file, flags override values.

The defaults encode the reference setup: Car aspect priors 2.8 (length over
height) and 1.1 (width over height), loss weights 1 everywhere except
classification 2 and depth 0.5, 0.7 IoU acceptance for Car.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from boxlift.lifting import ClassPriors
from boxlift.losses import LossWeights
from boxlift.metrics import DifficultyProfile

ENV_CONFIG_PATH = "BOXLIFT_CONFIG"

CONFIG_VERSION = 1

DEFAULT_CONFIG: dict = {
    "version": CONFIG_VERSION,
    "class_priors": {
        "Car": {"length_over_height": 2.8, "width_over_height": 1.1},
    },
    "loss_weights": {
        "w_box_amodal": 1.0,
        "w_box_enclosing": 1.0,
        "w_box_visible": 1.0,
        "w_side_ratio": 1.0,
        "w_depth": 0.5,
        "w_offsets": 1.0,
        "w_aspect": 1.0,
        "w_facing": 1.0,
        "w_side": 1.0,
        "w_class": 2.0,
    },
    "iou_thresholds": {"default": 0.7, "Car": 0.7},
    "cd_thresholds": [0.5, 1.0, 2.0, 4.0],
    # "paper40" averages interpolated precision over {0, 1/39, ..., 1};
    # "deployed40" uses {1/40, ..., 1} as the deployed benchmark does.
    "ap_variant": "paper40",
    # Reserved: whether cos(IoU) rescales its argument by pi/2.  Parsed and
    # validated but not acted upon.
    "cos_iou_scaled": False,
    "difficulty_profiles": {
        "easy": {"min_box_height_px": 40.0, "max_occlusion": 0, "max_truncation": 0.15},
        "moderate": {"min_box_height_px": 25.0, "max_occlusion": 1, "max_truncation": 0.30},
        "hard": {"min_box_height_px": 25.0, "max_occlusion": 2, "max_truncation": 0.50},
    },
    "difficulties": ["easy", "moderate", "hard", "moderate_hard"],
    "jobs": None,
}


@dataclass(frozen=True)
class RunConfig:
    priors: ClassPriors
    loss_weights: LossWeights
    iou_thresholds: dict[str, float]
    cd_thresholds: tuple[float, ...]
    ap_variant: str
    cos_iou_scaled: bool
    difficulty_profiles: dict[str, DifficultyProfile]
    difficulties: tuple[str, ...]
    jobs: int | None

    def iou_threshold(self, class_id: str) -> float:
        return self.iou_thresholds.get(class_id, self.iou_thresholds["default"])


def config_from_dict(data: dict) -> RunConfig:
    if data.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ValueError(f"unsupported config version {data.get('version')!r}")
    merged = json.loads(json.dumps(DEFAULT_CONFIG))
    for key, value in data.items():
        if key == "version":
            continue
        if key not in merged:
            raise ValueError(f"unknown config key {key!r}")
        if isinstance(merged[key], dict) and isinstance(value, dict):
            merged[key].update(value)
        else:
            merged[key] = value

    priors_table = {}
    for name, entry in merged["class_priors"].items():
        priors_table[name] = (float(entry["length_over_height"]),
                              float(entry["width_over_height"]))
    thresholds = {}
    for k, v in merged["iou_thresholds"].items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ValueError(f"iou_thresholds[{k!r}] must be a number")
        thresholds[k] = float(v)
    if "default" not in thresholds:
        raise ValueError("iou_thresholds must define a 'default' entry")
    if merged["ap_variant"] not in ("paper40", "deployed40"):
        raise ValueError(f"unknown ap_variant {merged['ap_variant']!r}")
    profiles = {
        name: DifficultyProfile(float(p["min_box_height_px"]),
                                int(p["max_occlusion"]), float(p["max_truncation"]))
        for name, p in merged["difficulty_profiles"].items()
    }
    for diff in merged["difficulties"]:
        if diff != "moderate_hard" and diff not in profiles:
            raise ValueError(f"difficulty {diff!r} has no profile")
    jobs = merged["jobs"]
    if jobs is not None:
        jobs = int(jobs)
        if jobs < 1:
            raise ValueError("jobs must be positive")
    return RunConfig(
        priors=ClassPriors(priors_table),
        loss_weights=LossWeights(**{k: float(v) for k, v in merged["loss_weights"].items()}),
        iou_thresholds=thresholds,
        cd_thresholds=tuple(float(t) for t in merged["cd_thresholds"]),
        ap_variant=str(merged["ap_variant"]),
        cos_iou_scaled=bool(merged["cos_iou_scaled"]),
        difficulty_profiles=profiles,
        difficulties=tuple(merged["difficulties"]),
        jobs=jobs,
    )


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Resolve the config: explicit path, else $BOXLIFT_CONFIG, else defaults.

    overrides are applied on top of the file values (flag semantics).
    """
    data: dict = {}
    resolved = path or os.environ.get(ENV_CONFIG_PATH)
    if resolved:
        data = json.loads(Path(resolved).read_text())
    if overrides:
        for key, value in overrides.items():
            if isinstance(data.get(key), dict) and isinstance(value, dict):
                data[key].update(value)
            else:
                data[key] = value
    return config_from_dict(data)


def default_config() -> RunConfig:
    return config_from_dict({})
