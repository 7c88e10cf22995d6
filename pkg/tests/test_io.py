"""Format fidelity: parse/serialize stability, conversions, scene round trips."""

import json
import math

import numpy as np
import pytest

from boxlift.errors import MalformedLine, MissingProjection, SchemaViolation
from boxlift.geometry import RotationTriple, wrap_angle
from boxlift.io import (
    SceneFile,
    box_to_record,
    load_scene,
    parse_kitti_calib,
    parse_kitti_label_file,
    parse_kitti_label_line,
    record_to_box,
    record_to_ground_truth,
    save_scene,
    scene_from_dict,
    scene_to_dict,
    serialize_kitti_calib,
    serialize_kitti_label,
    serialize_kitti_label_file,
)
from boxlift.lifting import box_from_bottom_center
from boxlift.synth import SceneSpec, default_camera, generate

SAMPLE_LINE = ("Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 "
               "1.65 1.67 3.64 -0.65 1.71 46.70 -1.59")


class TestLabelParsing:
    def test_sample_line_fields(self):
        rec = parse_kitti_label_line(SAMPLE_LINE)
        assert rec.type == "Car"
        assert rec.dimensions == (1.65, 1.67, 3.64)  # h, w, l
        assert rec.location == (-0.65, 1.71, 46.70)
        assert rec.rotation_y == -1.59
        assert rec.alpha == -1.58
        assert rec.score is None

    def test_fourteen_fields_rejected(self):
        short = " ".join(SAMPLE_LINE.split()[:14])
        with pytest.raises(MalformedLine) as info:
            parse_kitti_label_line(short, line_number=3)
        assert info.value.line_number == 3

    def test_sixteen_fields_populate_score(self):
        rec = parse_kitti_label_line(SAMPLE_LINE + " 0.91")
        assert rec.score == 0.91

    def test_bad_field_reports_index(self):
        parts = SAMPLE_LINE.split()
        parts[11] = "not-a-number"
        with pytest.raises(MalformedLine) as info:
            parse_kitti_label_line(" ".join(parts), line_number=7)
        assert info.value.line_number == 7
        assert info.value.field_index == 11

    def test_non_integral_occlusion_rejected(self):
        parts = SAMPLE_LINE.split()
        parts[2] = "0.5"
        with pytest.raises(MalformedLine) as info:
            parse_kitti_label_line(" ".join(parts))
        assert info.value.field_index == 2

    def test_unknown_type_preserved(self):
        rec = parse_kitti_label_line("UnicycleTruck" + SAMPLE_LINE[3:])
        assert rec.type == "UnicycleTruck"

    def test_canonical_serialization_is_stable(self):
        text = SAMPLE_LINE + "\n" + SAMPLE_LINE + " 0.5\n"
        once = serialize_kitti_label_file(parse_kitti_label_file(text))
        twice = serialize_kitti_label_file(parse_kitti_label_file(once))
        assert once == twice

    def test_blank_lines_skipped(self):
        text = f"\n{SAMPLE_LINE}\n\n"
        assert len(parse_kitti_label_file(text)) == 1


class TestBoxConversion:
    def test_round_trip_preserves_pose(self):
        rng = np.random.default_rng(40)
        for _ in range(300):
            box = box_from_bottom_center(
                np.array([rng.uniform(-15, 15), rng.uniform(0.5, 2.5),
                          rng.uniform(5, 70)]),
                tuple(rng.uniform(0.8, 5.5, 3)),
                RotationTriple(rng.uniform(-math.pi, math.pi), 0.0, 0.0),
                score=float(rng.uniform(0, 1)))
            rec = box_to_record(box)
            back = record_to_box(rec)
            np.testing.assert_allclose(back.bottom_center(), box.bottom_center(),
                                       atol=1e-9)
            assert back.dims == pytest.approx(box.dims, abs=1e-9)
            assert abs(wrap_angle(back.angles.yaw - box.angles.yaw)) < 1e-9
            np.testing.assert_allclose(
                np.sort(back.vertices(), axis=0),
                np.sort(box.vertices(), axis=0), atol=1e-9)

    def test_record_round_trip_through_text(self):
        box = box_from_bottom_center(np.array([-0.65, 1.71, 46.7]),
                                     (3.64, 1.65, 1.67),
                                     RotationTriple(-1.59 + math.pi / 2, 0, 0))
        rec = box_to_record(box)
        reparsed = parse_kitti_label_line(serialize_kitti_label(rec))
        assert reparsed.rotation_y == pytest.approx(-1.59, abs=1e-12)
        assert reparsed.location == pytest.approx((-0.65, 1.71, 46.7), abs=1e-9)

    def test_ground_truth_attributes(self):
        rec = parse_kitti_label_line(SAMPLE_LINE)
        g = record_to_ground_truth(rec)
        assert g.box_height_px == pytest.approx(200.12 - 173.33)
        assert g.occlusion == 0
        assert g.truncation == 0.0

    def test_bbox_written_when_camera_given(self):
        cam = default_camera()
        box = box_from_bottom_center(np.array([0.0, 1.6, 20.0]),
                                     (4.2, 1.5, 1.65), RotationTriple(0.4, 0, 0))
        rec = box_to_record(box, cam)
        assert rec.bbox[0] < rec.bbox[2]
        assert rec.bbox[1] < rec.bbox[3]
        assert 0.0 <= rec.bbox[0] <= cam.image_width


class TestCalib:
    def test_parse_identity_projection(self):
        cam = parse_kitti_calib("P2: 1 0 0 0 0 1 0 0 0 0 1 0\n")
        np.testing.assert_allclose(cam.projection[:, :3], np.eye(3))

    def test_missing_projection(self):
        with pytest.raises(MissingProjection):
            parse_kitti_calib("P0: 1 0 0 0 0 1 0 0 0 0 1 0\n")

    def test_wrong_value_count(self):
        with pytest.raises(MissingProjection):
            parse_kitti_calib("P2: 1 2 3\n")

    def test_canonical_round_trip(self):
        text = ("P2: 721.5377 0.0 609.5593 44.85728 0.0 721.5377 "
                "172.854 0.2163791 0.0 0.0 1.0 0.002745884\n")
        once = serialize_kitti_calib(parse_kitti_calib(text))
        assert serialize_kitti_calib(parse_kitti_calib(once)) == once

    def test_ignores_other_rows(self):
        text = "P0: 9 9 9 9 9 9 9 9 9 9 9 9\nP2: 700 0 621 0 0 700 187.5 0 0 0 1 0\n"
        cam = parse_kitti_calib(text)
        assert cam.projection[0, 0] == 700.0


class TestSceneFile:
    def scene(self):
        return generate(SceneSpec(seed=5, num_frames=1, boxes_per_frame=(3, 3)))[0]

    def test_save_load_byte_identity(self, tmp_path):
        path = tmp_path / "scene.json"
        save_scene(self.scene(), path)
        first = path.read_bytes()
        save_scene(load_scene(path), path)
        assert path.read_bytes() == first

    def test_numeric_fields_round_trip_exactly(self, tmp_path):
        scene = self.scene()
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        loaded = load_scene(path)
        for original, reloaded in zip(scene.ground_truth, loaded.ground_truth):
            np.testing.assert_array_equal(original.box.origin, reloaded.box.origin)
            assert original.box.angles.as_tuple() == reloaded.box.angles.as_tuple()

    def test_unknown_keys_preserved_with_warning(self, tmp_path):
        data = scene_to_dict(self.scene())
        data["survey_notes"] = {"weather": "overcast"}
        data["ground_truth"][0]["annotator"] = "crew-7"
        path = tmp_path / "scene.json"
        path.write_text(json.dumps(data))
        with pytest.warns(UserWarning):
            loaded = load_scene(path)
        out = scene_to_dict(loaded)
        assert out["survey_notes"] == {"weather": "overcast"}
        assert out["ground_truth"][0]["annotator"] == "crew-7"

    def test_schema_violation_reports_path(self, tmp_path):
        data = scene_to_dict(self.scene())
        data["ground_truth"][1]["dims"] = [1.0, 2.0]
        path = tmp_path / "scene.json"
        path.write_text(json.dumps(data))
        with pytest.raises(SchemaViolation) as info:
            load_scene(path)
        assert "$.ground_truth[1].dims" in str(info.value)

    def test_missing_version_rejected(self):
        with pytest.raises(SchemaViolation):
            scene_from_dict({"camera": None})

    def test_box_detections_round_trip(self, tmp_path):
        box = box_from_bottom_center(np.array([1.0, 1.5, 12.0]), (4.2, 1.5, 1.65),
                                     RotationTriple(0.3, 0, 0), score=0.7)
        scene = SceneFile(default_camera(), [], [box])
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        loaded = load_scene(path)
        np.testing.assert_array_equal(loaded.detections[0].origin, box.origin)
        assert loaded.detections[0].score == 0.7

    def test_invalid_json_is_schema_violation(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(SchemaViolation):
            load_scene(path)
