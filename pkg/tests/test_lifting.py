"""Lift chain tests: every stage against hand arithmetic, then exact inversion."""

import math

import numpy as np
import pytest

from boxlift.boxes import Box2D
from boxlift.errors import DepthOutOfRange, NonPositiveHeight, Unencodable
from boxlift.geometry import (
    CameraModel,
    RotationTriple,
    backproject_at_distance,
    project,
    wrap_angle,
)
from boxlift.lifting import (
    Box3D,
    ClassPriors,
    LiftParams,
    box_from_bottom_center,
    compute_angles,
    compute_dims,
    compute_yaw_prior,
    encode,
    lift,
    project_box,
    solve_height,
    solve_origin,
)

from util import sample_box, street_box, make_camera

PRIORS = ClassPriors.default()


def make_params(box=(521.0, 198.0, 621.0, 303.0), side_ratio=0.0,
                deltas=(0.0, 0.0, 0.0), aspect=(1.0, 1.0), inv_depth=None,
                facing="back", side="right", class_id="Car", score=0.5):
    if inv_depth is None:
        inv_depth = 1.0 / math.sqrt(102.7225)  # distance of (0, 1.65, 10)
    return LiftParams(box_amodal=Box2D(*box), side_ratio=side_ratio,
                      delta_angles=deltas, delta_aspect=aspect,
                      inv_depth=inv_depth, class_id=class_id, facing=facing,
                      side=side, score=score)


def fixture_cam():
    return CameraModel.pinhole(700.0, 700.0, 621.0, 187.5, 1242, 375)


class TestSolveOrigin:
    def test_side_ratio_zero_left_anchors_x_min(self):
        cam = fixture_cam()
        params = make_params(box=(600.0, 198.0, 700.0, 303.0), side_ratio=0.0,
                             side="left", inv_depth=0.05)
        origin, _ = solve_origin(params, cam)
        assert project(origin, cam) == pytest.approx([600.0, 303.0], abs=1e-9)

    def test_side_ratio_one_right_anchors_x_min(self):
        cam = fixture_cam()
        params = make_params(box=(600.0, 198.0, 700.0, 303.0), side_ratio=1.0,
                             side="right", inv_depth=0.05)
        origin, _ = solve_origin(params, cam)
        assert project(origin, cam) == pytest.approx([600.0, 303.0], abs=1e-9)

    def test_origin_pixel_arithmetic(self):
        # box (100, 100, 200, 180), ratio 0.75, left: O = (175, 180).
        cam = fixture_cam()
        params = make_params(box=(100.0, 100.0, 200.0, 180.0), side_ratio=0.75,
                             side="left", inv_depth=0.05)
        origin, translation = solve_origin(params, cam)
        assert project(origin, cam) == pytest.approx([175.0, 180.0], abs=1e-9)
        assert np.linalg.norm(origin) == pytest.approx(20.0, abs=1e-9)
        np.testing.assert_allclose(translation[:3, 3], origin)
        np.testing.assert_allclose(translation[:3, :3], np.eye(3))

    def test_depth_window(self):
        with pytest.raises(DepthOutOfRange):
            solve_origin(make_params(inv_depth=3.0), fixture_cam())
        with pytest.raises(DepthOutOfRange):
            solve_origin(make_params(inv_depth=1e-4), fixture_cam())


class TestSolveHeight:
    def test_hand_example(self):
        # v_O = 700*1.65/10 + 180 = 295.5; h = (295.5 - 190.5) * 10 / 700.
        cam = CameraModel.pinhole(700.0, 700.0, 621.0, 180.0, 1242, 375)
        h = solve_height(np.array([0.0, 1.65, 10.0]), 190.5, cam)
        assert h == pytest.approx(1.5, abs=1e-12)

    def test_consistent_doubling_scales_height(self):
        # Same pixel geometry at doubled depth and doubled ground offset:
        # v_O = 700*3.3/20 + 180 = 295.5; h = (295.5 - 190.5) * 20 / 700 = 3.
        cam = CameraModel.pinhole(700.0, 700.0, 621.0, 180.0, 1242, 375)
        h = solve_height(np.array([0.0, 3.3, 20.0]), 190.5, cam)
        assert h == pytest.approx(3.0, abs=1e-12)

    def test_top_at_origin_row_degenerates(self):
        cam = CameraModel.pinhole(700.0, 700.0, 621.0, 180.0, 1242, 375)
        origin = np.array([0.0, 1.65, 10.0])
        v_origin = project(origin, cam)[1]
        with pytest.raises(NonPositiveHeight):
            solve_height(origin, v_origin, cam)

    def test_solved_height_projects_back(self):
        cam = fixture_cam()
        origin = np.array([2.0, 1.4, 25.0])
        h = solve_height(origin, 140.0, cam)
        top = origin - np.array([0.0, h, 0.0])
        assert project(top, cam)[1] == pytest.approx(140.0, abs=1e-9)


class TestComputeDims:
    def test_car_priors(self):
        assert compute_dims(1.4, "Car", (1.0, 1.0), PRIORS) == pytest.approx(
            (3.92, 1.4, 1.54))

    def test_unit_priors_give_cube(self):
        cube = ClassPriors({"Box": (1.0, 1.0)})
        assert compute_dims(1.4, "Box", (1.0, 1.0), cube) == pytest.approx(
            (1.4, 1.4, 1.4))

    def test_aspect_multipliers(self):
        assert compute_dims(1.4, "Car", (1.2, 0.9), PRIORS) == pytest.approx(
            (4.704, 1.4, 1.386))

    def test_unknown_class(self):
        with pytest.raises(KeyError):
            compute_dims(1.4, "Tractor", (1.0, 1.0), PRIORS)


class TestComputeYawPrior:
    def test_on_axis_frontal(self):
        assert compute_yaw_prior(np.array([0.0, 1.5, 10.0]), 0.0, "right") == 0.0

    def test_full_side_ratio_right(self):
        assert compute_yaw_prior(np.array([0.0, 1.5, 10.0]), 1.0, "right") == (
            pytest.approx(math.pi / 2))

    def test_diagonal_ray_left(self):
        # arctan(1) - arcsin(0.5) = pi/4 - pi/6.
        yaw = compute_yaw_prior(np.array([5.0, 1.5, 5.0]), 0.5, "left")
        assert yaw == pytest.approx(math.pi / 4 - math.pi / 6)

    def test_clamps_noisy_ratio(self):
        yaw = compute_yaw_prior(np.array([0.0, 1.5, 10.0]), 1.2, "right")
        assert yaw == pytest.approx(math.pi / 2)


class TestComputeAngles:
    def test_zero_deltas_back(self):
        cam = fixture_cam()
        angles = compute_angles(0.4, cam, (0.0, 0.0, 0.0), "back")
        assert angles.as_tuple() == pytest.approx((0.4, 0.0, 0.0))

    def test_front_adds_half_turn(self):
        angles = compute_angles(0.4, fixture_cam(), (0.0, 0.0, 0.0), "front")
        assert angles.yaw == pytest.approx(wrap_angle(0.4 + math.pi))

    def test_extrinsics_negate_into_priors(self):
        cam = CameraModel.pinhole(700, 700, 621, 187.5, 1242, 375,
                                  extrinsic_pitch=math.radians(10.0),
                                  extrinsic_roll=math.radians(-4.0))
        angles = compute_angles(0.0, cam, (0.0, 0.0, 0.0), "back")
        assert angles.pitch == pytest.approx(math.radians(-10.0))
        assert angles.roll == pytest.approx(math.radians(4.0))


class TestLift:
    def test_hand_built_dead_on_car(self):
        # Origin pixel (621, 303) at distance sqrt(102.7225) backprojects to
        # exactly (0, 1.65, 10); height (303-198)*10/700 = 1.5; priors give
        # dims (4.2, 1.5, 1.65); pure back view means yaw 0.
        cam = fixture_cam()
        box, transforms = lift(make_params(), cam, PRIORS)
        np.testing.assert_allclose(box.origin, [0.0, 1.65, 10.0], atol=1e-9)
        assert box.dims == pytest.approx((4.2, 1.5, 1.65), abs=1e-12)
        assert box.angles.as_tuple() == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)
        assert box.class_id == "Car"
        assert box.score == 0.5

        verts = box.vertices()
        np.testing.assert_allclose(verts[0], [0.0, 1.65, 10.0], atol=1e-9)
        np.testing.assert_allclose(verts[4], [0.0, 0.15, 10.0], atol=1e-9)  # B
        np.testing.assert_allclose(verts[2], [0.0, 1.65, 14.2], atol=1e-9)  # C
        # B projects back to the amodal top edge.
        assert project(verts[4], cam)[1] == pytest.approx(198.0, abs=1e-9)

    def test_transform_identity(self):
        cam = make_camera()
        rng = np.random.default_rng(10)
        for _ in range(100):
            box = sample_box(rng, cam)
            try:
                params = encode(box, cam, PRIORS)
            except Unencodable:
                continue
            lifted, transforms = lift(params, cam, PRIORS)
            mapped = (transforms.matrix() @ lifted.unit_corners().T).T[:, :3]
            np.testing.assert_allclose(mapped, lifted.vertices(), atol=1e-9)

    def test_lifted_origin_lands_on_origin_pixel(self):
        cam = fixture_cam()
        params = make_params(box=(100.0, 100.0, 200.0, 180.0), side_ratio=0.75,
                             side="left", inv_depth=0.05)
        box, _ = lift(params, cam, PRIORS)
        assert project(box.origin, cam) == pytest.approx([175.0, 180.0], abs=1e-6)

    def test_facing_flip_covers_same_volume(self):
        cam = fixture_cam()
        back = make_params(side_ratio=0.3)
        front = make_params(side_ratio=0.3, facing="front")
        box_b, _ = lift(back, cam, PRIORS)
        box_f, _ = lift(front, cam, PRIORS)
        assert wrap_angle(box_f.angles.yaw - box_b.angles.yaw) == pytest.approx(
            math.pi)
        verts_b = np.array(sorted(map(tuple, np.round(box_b.vertices(), 9))))
        verts_f = np.array(sorted(map(tuple, np.round(box_f.vertices(), 9))))
        np.testing.assert_allclose(verts_b, verts_f, atol=1e-8)

    def test_closer_object_is_smaller(self):
        # Same 2D box at decreasing distance must shrink strictly.
        cam = fixture_cam()
        heights = []
        for depth in (40.0, 30.0, 20.0, 10.0, 5.0):
            box, _ = lift(make_params(inv_depth=1.0 / depth), cam, PRIORS)
            heights.append(box.dims[1])
        assert all(a > b for a, b in zip(heights, heights[1:]))

    def test_origin_is_camera_closest_bottom_vertex(self):
        cam = make_camera()
        rng = np.random.default_rng(11)
        for _ in range(300):
            box = sample_box(rng, cam)
            dists = np.linalg.norm(box.vertices()[:4], axis=1)
            assert dists[0] <= dists.min() + 1e-9


class TestEncode:
    def test_dead_on_facing_camera(self):
        cam = fixture_cam()
        origin = backproject_at_distance((621.0, 303.0), 10.135211, cam)
        theta_cam = math.atan2(origin[0], origin[2])
        box = Box3D(origin, (4.2, 1.5, 1.65),
                    RotationTriple(theta_cam + math.pi, 0.0, 0.0))
        params = encode(box, cam, PRIORS)
        assert params.facing == "front"
        assert params.side_ratio == pytest.approx(0.0, abs=1e-12)

    def test_thirty_degrees_right_back(self):
        cam = fixture_cam()
        origin = backproject_at_distance((500.0, 300.0), 15.0, cam)
        theta_cam = math.atan2(origin[0], origin[2])
        box = Box3D(origin, (4.2, 1.5, 1.65),
                    RotationTriple(theta_cam + math.pi / 6, 0.0, 0.0))
        params = encode(box, cam, PRIORS)
        assert params.facing == "back"
        assert params.side == "right"
        assert params.side_ratio == pytest.approx(0.5, abs=1e-12)

    def test_round_trip_property(self):
        cam = make_camera()
        rng = np.random.default_rng(12)
        checked = 0
        while checked < 1000:
            box = sample_box(rng, cam)
            try:
                params = encode(box, cam, PRIORS)
            except Unencodable:
                continue
            rebuilt, _ = lift(params, cam, PRIORS)
            checked += 1
            assert np.linalg.norm(rebuilt.origin - box.origin) < 1e-6
            assert max(abs(a - b) for a, b in zip(rebuilt.dims, box.dims)) < 1e-9
            assert max(abs(wrap_angle(a - b)) for a, b in zip(
                rebuilt.angles.as_tuple(), box.angles.as_tuple())) < 1e-9
            assert params.facing == encode(rebuilt, cam, PRIORS).facing

    def test_yaw_offset_is_absorbed_by_side_ratio(self):
        cam = make_camera()
        rng = np.random.default_rng(13)
        for _ in range(50):
            box = sample_box(rng, cam, pitch_roll_deg=0.0)
            try:
                params = encode(box, cam, PRIORS)
            except Unencodable:
                continue
            assert params.delta_angles[0] == 0.0

    def test_unencodable_behind_camera(self):
        cam = fixture_cam()
        box = Box3D(np.array([0.0, 1.5, 2.0]), (6.0, 1.5, 6.0),
                    RotationTriple(0.8, 0.0, 0.0))
        with pytest.raises(Unencodable):
            encode(box, cam, PRIORS)


class TestProjectBox:
    def test_offsets_within_unit_square(self):
        cam = make_camera()
        rng = np.random.default_rng(14)
        for _ in range(200):
            box = sample_box(rng, cam)
            offsets = project_box(box, cam)
            for pair in (offsets.width_corner, offsets.height_corner,
                         offsets.length_corner, offsets.origin):
                assert -1e-12 <= pair[0] <= 1.0 + 1e-12
                assert -1e-12 <= pair[1] <= 1.0 + 1e-12

    def test_on_axis_origin_at_bottom_edge(self):
        cam = fixture_cam()
        box, _ = lift(make_params(), cam, PRIORS)
        offsets = project_box(box, cam)
        assert offsets.origin[1] == pytest.approx(1.0, abs=1e-12)

    def test_dead_on_length_corner_collapses_onto_origin(self):
        cam = fixture_cam()
        origin = backproject_at_distance((621.0, 300.0), 15.0, cam)
        theta_cam = math.atan2(origin[0], origin[2])
        box = Box3D(origin, (4.2, 1.5, 1.65), RotationTriple(theta_cam, 0.0, 0.0))
        params = encode(box, cam, PRIORS)
        assert params.side_ratio == pytest.approx(0.0, abs=1e-12)
        offsets = project_box(box, cam)
        assert offsets.length_corner[0] == pytest.approx(offsets.origin[0], abs=1e-9)

    def test_enclosing_box_contains_keypoints(self):
        cam = make_camera()
        box = street_box(np.random.default_rng(15))
        offsets = project_box(box, cam)
        verts_uv = np.array([project(v, cam) for v in box.vertices()])
        assert offsets.enclosing.x_min == pytest.approx(verts_uv[:, 0].min())
        assert offsets.enclosing.y_max == pytest.approx(verts_uv[:, 1].max())

    def test_vector_order(self):
        cam = fixture_cam()
        box, _ = lift(make_params(), cam, PRIORS)
        offsets = project_box(box, cam)
        vec = offsets.as_vector()
        assert vec.shape == (8,)
        assert tuple(vec[0:2]) == offsets.width_corner
        assert tuple(vec[6:8]) == offsets.origin


class TestValidation:
    def test_degenerate_amodal_box(self):
        with pytest.raises(ValueError):
            make_params(box=(200.0, 100.0, 100.0, 180.0))

    def test_side_ratio_bounds(self):
        with pytest.raises(ValueError):
            make_params(side_ratio=1.5)

    def test_negative_aspect(self):
        with pytest.raises(ValueError):
            make_params(aspect=(1.0, -0.5))

    def test_bad_facing_value(self):
        with pytest.raises(ValueError):
            make_params(facing="sideways")

    def test_box_from_bottom_center_covers_volume(self):
        rng = np.random.default_rng(16)
        for _ in range(300):
            center = np.array([rng.uniform(-10, 10), rng.uniform(0.5, 2.0),
                               rng.uniform(5, 40)])
            dims = tuple(rng.uniform(0.8, 5.0, 3))
            angles = RotationTriple(rng.uniform(-math.pi, math.pi), 0.0, 0.0)
            box = box_from_bottom_center(center, dims, angles)
            np.testing.assert_allclose(box.bottom_center(), center, atol=1e-9)
            dists = np.linalg.norm(box.vertices()[:4], axis=1)
            assert dists[0] <= dists.min() + 1e-9
