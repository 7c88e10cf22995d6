"""KITTI label/calibration parsing and the scene JSON interchange format.

Serialization is canonical: floats use the shortest round-trip decimal
representation, so serialize(parse(text)) is a fixed point after one pass.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from boxlift.boxes import Box2D
from boxlift.errors import MalformedLine, MissingProjection, SchemaViolation
from boxlift.geometry import CameraModel, RotationTriple, project_many, wrap_angle
from boxlift.lifting import Box3D, LiftParams, box_from_bottom_center
from boxlift.metrics import GroundTruthBox

SCENE_VERSION = 1

# KITTI yaw is measured from the +x axis; this package measures the heading
# of the length axis from +z.  Converting is a quarter-turn offset.
KITTI_YAW_OFFSET = math.pi / 2

# KITTI calibration files carry no image size; this is the common one.
KITTI_IMAGE_SIZE = (1242, 375)

_LABEL_FIELDS = 15  # 16 with a trailing score


@dataclass(frozen=True)
class KittiLabelRecord:
    """One object line of a KITTI label file, fields verbatim."""

    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox: tuple[float, float, float, float]
    dimensions: tuple[float, float, float]  # (h, w, l) as in the file
    location: tuple[float, float, float]  # bottom-face center, camera frame
    rotation_y: float
    score: float | None = None


def _fmt(x: float) -> str:
    """Shortest decimal that round-trips the float."""
    return repr(float(x))


def parse_kitti_label_line(line: str, line_number: int = 1) -> KittiLabelRecord:
    """Parse one label line; 15 fields for ground truth, 16 with a score."""
    parts = line.split()
    if len(parts) not in (_LABEL_FIELDS, _LABEL_FIELDS + 1):
        raise MalformedLine(
            f"line {line_number}: expected {_LABEL_FIELDS} or {_LABEL_FIELDS + 1} "
            f"fields, got {len(parts)}", line_number)

    def number(index: int) -> float:
        try:
            value = float(parts[index])
        except ValueError:
            raise MalformedLine(
                f"line {line_number}, field {index}: {parts[index]!r} is not a number",
                line_number, index) from None
        if not math.isfinite(value):
            raise MalformedLine(
                f"line {line_number}, field {index}: non-finite value",
                line_number, index)
        return value

    occluded_f = number(2)
    if occluded_f != int(occluded_f):
        raise MalformedLine(
            f"line {line_number}, field 2: occlusion must be integral",
            line_number, 2)
    return KittiLabelRecord(
        type=parts[0],
        truncated=number(1),
        occluded=int(occluded_f),
        alpha=number(3),
        bbox=(number(4), number(5), number(6), number(7)),
        dimensions=(number(8), number(9), number(10)),
        location=(number(11), number(12), number(13)),
        rotation_y=number(14),
        score=number(15) if len(parts) == _LABEL_FIELDS + 1 else None,
    )


def serialize_kitti_label(record: KittiLabelRecord) -> str:
    parts = [record.type, _fmt(record.truncated), str(record.occluded),
             _fmt(record.alpha)]
    parts += [_fmt(v) for v in record.bbox]
    parts += [_fmt(v) for v in record.dimensions]
    parts += [_fmt(v) for v in record.location]
    parts.append(_fmt(record.rotation_y))
    if record.score is not None:
        parts.append(_fmt(record.score))
    return " ".join(parts)


def parse_kitti_label_file(text: str) -> list[KittiLabelRecord]:
    records = []
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            records.append(parse_kitti_label_line(line, i))
    return records


def serialize_kitti_label_file(records: list[KittiLabelRecord]) -> str:
    return "".join(serialize_kitti_label(r) + "\n" for r in records)


def record_to_box(record: KittiLabelRecord) -> Box3D:
    """Convert a label record to a Box3D.

    KITTI stores the bottom-face center and a yaw from +x; the box origin
    becomes the camera-closest bottom corner under the package conventions.
    """
    h, w, length = record.dimensions
    yaw = wrap_angle(record.rotation_y + KITTI_YAW_OFFSET)
    return box_from_bottom_center(
        np.array(record.location), (length, h, w), RotationTriple(yaw, 0.0, 0.0),
        class_id=record.type, score=record.score)


def record_to_ground_truth(record: KittiLabelRecord) -> GroundTruthBox:
    height_px = record.bbox[3] - record.bbox[1]
    return GroundTruthBox(record_to_box(record), box_height_px=height_px,
                          occlusion=record.occluded, truncation=record.truncated)


def box_to_record(box: Box3D, cam: CameraModel | None = None,
                  truncated: float = 0.0, occluded: int = 0) -> KittiLabelRecord:
    """Convert a Box3D back to a label record.

    The 2D bbox is the projected enclosing box clipped to the image when a
    camera is given, zeros otherwise.
    """
    center = box.bottom_center()
    ry = wrap_angle(box.angles.yaw - KITTI_YAW_OFFSET)
    alpha = wrap_angle(ry - math.atan2(center[0], center[2]))
    bbox = (0.0, 0.0, 0.0, 0.0)
    if cam is not None:
        uv = project_many(box.vertices(), cam)
        x0 = min(max(float(uv[:, 0].min()), 0.0), cam.image_width)
        y0 = min(max(float(uv[:, 1].min()), 0.0), cam.image_height)
        x1 = min(max(float(uv[:, 0].max()), 0.0), cam.image_width)
        y1 = min(max(float(uv[:, 1].max()), 0.0), cam.image_height)
        bbox = (x0, y0, x1, y1)
    length, h, w = box.dims
    return KittiLabelRecord(
        type=box.class_id, truncated=truncated, occluded=occluded, alpha=alpha,
        bbox=bbox, dimensions=(h, w, length),
        location=(float(center[0]), float(center[1]), float(center[2])),
        rotation_y=ry, score=box.score)


def parse_kitti_calib(text: str, image_size: tuple[int, int] = KITTI_IMAGE_SIZE,
                      extrinsic_pitch: float = 0.0,
                      extrinsic_roll: float = 0.0) -> CameraModel:
    """Read the P2 projection row of a KITTI calibration file.

    Calibration files carry no image size or mounting angles; they default to
    the common KITTI resolution and zero unless overridden.
    """
    for line in text.splitlines():
        if line.startswith("P2:"):
            values = line.split(":", 1)[1].split()
            if len(values) != 12:
                raise MissingProjection(f"P2 row has {len(values)} values, expected 12")
            proj = np.array([float(v) for v in values]).reshape(3, 4)
            return CameraModel(proj, image_size[0], image_size[1],
                               extrinsic_pitch, extrinsic_roll)
    raise MissingProjection("no P2 row found")


def serialize_kitti_calib(cam: CameraModel) -> str:
    values = " ".join(_fmt(v) for v in cam.projection.reshape(-1))
    return f"P2: {values}\n"


@dataclass
class SceneFile:
    """Interchange container: camera, ground truth and detections.

    Detections are either lift parameter sets or already-lifted boxes.
    Unknown JSON keys are preserved in the extras mappings and re-emitted on
    save.
    """

    camera: CameraModel | None
    ground_truth: list[GroundTruthBox] = field(default_factory=list)
    detections: list[LiftParams | Box3D] = field(default_factory=list)
    extras: dict = field(default_factory=dict)


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise SchemaViolation(f"missing key {key!r}", path)
    return obj[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(f"expected a number, got {type(value).__name__}", path)
    if not math.isfinite(value):
        raise SchemaViolation("expected a finite number", path)
    return float(value)


def _number_list(value, n: int, path: str) -> list[float]:
    if not isinstance(value, list) or len(value) != n:
        raise SchemaViolation(f"expected a list of {n} numbers", path)
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _collect_extras(obj: dict, known: set[str], path: str) -> dict:
    extras = {k: obj[k] for k in obj if k not in known}
    if extras:
        warnings.warn(f"{path}: preserving unknown keys {sorted(extras)}")
    return extras


def _camera_from_dict(obj: dict, path: str) -> CameraModel:
    rows = _require(obj, "projection", path)
    if not isinstance(rows, list) or len(rows) != 3:
        raise SchemaViolation("projection must be a 3x4 nested list", f"{path}.projection")
    proj = [_number_list(row, 4, f"{path}.projection[{i}]") for i, row in enumerate(rows)]
    try:
        return CameraModel(
            np.array(proj),
            int(_number(_require(obj, "image_width", path), f"{path}.image_width")),
            int(_number(_require(obj, "image_height", path), f"{path}.image_height")),
            _number(obj.get("extrinsic_pitch", 0.0), f"{path}.extrinsic_pitch"),
            _number(obj.get("extrinsic_roll", 0.0), f"{path}.extrinsic_roll"))
    except ValueError as exc:
        raise SchemaViolation(str(exc), path) from None


def _camera_to_dict(cam: CameraModel) -> dict:
    return {
        "projection": [[float(v) for v in row] for row in cam.projection],
        "image_width": cam.image_width,
        "image_height": cam.image_height,
        "extrinsic_pitch": cam.extrinsic_pitch,
        "extrinsic_roll": cam.extrinsic_roll,
    }


_ANGLE_KEYS = ("yaw", "pitch", "roll")


def _angles_from_dict(obj, path: str) -> RotationTriple:
    if not isinstance(obj, dict):
        raise SchemaViolation("angles must be an object", path)
    return RotationTriple(*(
        _number(_require(obj, k, path), f"{path}.{k}") for k in _ANGLE_KEYS))


def _box3d_from_dict(obj: dict, path: str) -> Box3D:
    try:
        return Box3D(
            np.array(_number_list(_require(obj, "origin", path), 3, f"{path}.origin")),
            tuple(_number_list(_require(obj, "dims", path), 3, f"{path}.dims")),
            _angles_from_dict(_require(obj, "angles", path), f"{path}.angles"),
            class_id=str(_require(obj, "class_id", path)),
            score=None if obj.get("score") is None
            else _number(obj["score"], f"{path}.score"))
    except ValueError as exc:
        raise SchemaViolation(str(exc), path) from None


def _box3d_to_dict(box: Box3D) -> dict:
    return {
        "origin": [float(v) for v in box.origin],
        "dims": list(box.dims),
        "angles": {"yaw": box.angles.yaw, "pitch": box.angles.pitch,
                   "roll": box.angles.roll},
        "class_id": box.class_id,
        "score": box.score,
    }


_GT_KEYS = {"origin", "dims", "angles", "class_id", "score", "box_height_px",
            "occlusion", "truncation"}


def _gt_from_dict(obj: dict, path: str) -> tuple[GroundTruthBox, dict]:
    box = _box3d_from_dict(obj, path)
    try:
        gt = GroundTruthBox(
            box,
            box_height_px=_number(obj.get("box_height_px", math.inf),
                                  f"{path}.box_height_px")
            if obj.get("box_height_px") is not None else math.inf,
            occlusion=int(obj.get("occlusion", 0)),
            truncation=_number(obj.get("truncation", 0.0), f"{path}.truncation"))
    except ValueError as exc:
        raise SchemaViolation(str(exc), path) from None
    return gt, _collect_extras(obj, _GT_KEYS, path)


def _gt_to_dict(gt: GroundTruthBox, extras: dict) -> dict:
    out = _box3d_to_dict(gt.box)
    out["box_height_px"] = None if math.isinf(gt.box_height_px) else gt.box_height_px
    out["occlusion"] = gt.occlusion
    out["truncation"] = gt.truncation
    out.update(extras)
    return out


_PARAMS_KEYS = {"kind", "box_amodal", "box_visible", "side_ratio", "delta_angles",
                "delta_aspect", "inv_depth", "class_id", "facing", "side", "score"}
_BOX_DET_KEYS = {"kind"} | _GT_KEYS


def _params_from_dict(obj: dict, path: str) -> tuple[LiftParams, dict]:
    amodal = _number_list(_require(obj, "box_amodal", path), 4, f"{path}.box_amodal")
    visible = obj.get("box_visible")
    try:
        params = LiftParams(
            box_amodal=Box2D(*amodal),
            box_visible=None if visible is None
            else Box2D(*_number_list(visible, 4, f"{path}.box_visible")),
            side_ratio=_number(_require(obj, "side_ratio", path), f"{path}.side_ratio"),
            delta_angles=tuple(_number_list(_require(obj, "delta_angles", path), 3,
                                            f"{path}.delta_angles")),
            delta_aspect=tuple(_number_list(_require(obj, "delta_aspect", path), 2,
                                            f"{path}.delta_aspect")),
            inv_depth=_number(_require(obj, "inv_depth", path), f"{path}.inv_depth"),
            class_id=str(_require(obj, "class_id", path)),
            facing=str(_require(obj, "facing", path)),
            side=str(_require(obj, "side", path)),
            score=_number(obj.get("score", 0.0), f"{path}.score"))
    except ValueError as exc:
        raise SchemaViolation(str(exc), path) from None
    return params, _collect_extras(obj, _PARAMS_KEYS, path)


def _params_to_dict(params: LiftParams) -> dict:
    b = params.box_amodal
    v = params.box_visible
    return {
        "kind": "params",
        "box_amodal": [b.x_min, b.y_min, b.x_max, b.y_max],
        "box_visible": None if v is None else [v.x_min, v.y_min, v.x_max, v.y_max],
        "side_ratio": params.side_ratio,
        "delta_angles": list(params.delta_angles),
        "delta_aspect": list(params.delta_aspect),
        "inv_depth": params.inv_depth,
        "class_id": params.class_id,
        "facing": params.facing,
        "side": params.side,
        "score": params.score,
    }


_SCENE_KEYS = {"version", "camera", "ground_truth", "detections"}


def scene_from_dict(data: dict) -> SceneFile:
    if not isinstance(data, dict):
        raise SchemaViolation("scene must be a JSON object", "$")
    version = _require(data, "version", "$")
    if version != SCENE_VERSION:
        raise SchemaViolation(f"unsupported version {version!r}", "$.version")
    camera = None
    if data.get("camera") is not None:
        camera = _camera_from_dict(data["camera"], "$.camera")

    ground_truth = []
    gt_extras = []
    gts = data.get("ground_truth", [])
    if not isinstance(gts, list):
        raise SchemaViolation("ground_truth must be a list", "$.ground_truth")
    for i, obj in enumerate(gts):
        gt, extras = _gt_from_dict(obj, f"$.ground_truth[{i}]")
        ground_truth.append(gt)
        gt_extras.append(extras)

    detections = []
    det_extras = []
    dets = data.get("detections", [])
    if not isinstance(dets, list):
        raise SchemaViolation("detections must be a list", "$.detections")
    for i, obj in enumerate(dets):
        path = f"$.detections[{i}]"
        kind = obj.get("kind", "params")
        if kind == "params":
            det, extras = _params_from_dict(obj, path)
        elif kind == "box":
            det = _box3d_from_dict(obj, path)
            extras = _collect_extras(obj, _BOX_DET_KEYS, path)
        else:
            raise SchemaViolation(f"unknown detection kind {kind!r}", f"{path}.kind")
        detections.append(det)
        det_extras.append(extras)

    top_extras = _collect_extras(data, _SCENE_KEYS, "$")
    scene = SceneFile(camera, ground_truth, detections,
                      extras={"scene": top_extras, "ground_truth": gt_extras,
                              "detections": det_extras})
    return scene


def scene_to_dict(scene: SceneFile) -> dict:
    gt_extras = scene.extras.get("ground_truth", [{}] * len(scene.ground_truth))
    det_extras = scene.extras.get("detections", [{}] * len(scene.detections))
    dets = []
    for det, extras in zip(scene.detections, det_extras):
        if isinstance(det, LiftParams):
            obj = _params_to_dict(det)
        else:
            obj = {"kind": "box", **_box3d_to_dict(det)}
        obj.update(extras)
        dets.append(obj)
    data = {
        "version": SCENE_VERSION,
        "camera": None if scene.camera is None else _camera_to_dict(scene.camera),
        "ground_truth": [_gt_to_dict(gt, extras)
                         for gt, extras in zip(scene.ground_truth, gt_extras)],
        "detections": dets,
    }
    data.update(scene.extras.get("scene", {}))
    return data


def load_scene(path) -> SceneFile:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid JSON: {exc}", "$") from None
    return scene_from_dict(data)


def dumps_scene(scene: SceneFile) -> str:
    return json.dumps(scene_to_dict(scene), indent=2, sort_keys=True) + "\n"


def save_scene(scene: SceneFile, path) -> None:
    Path(path).write_text(dumps_scene(scene))
