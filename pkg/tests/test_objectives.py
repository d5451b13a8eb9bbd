from __future__ import annotations

import numpy as np
import pytest

from conftest import whole_volume
from oracles import ray_clearance
from placeplan.objectives import (Objective, available_objectives, clearance, make_objective, numeric_gradient,
                                  objective_max_clearance, objective_min_clearance, register_objective)
from placeplan.se3 import ObjectModel, Pose
from placeplan.world import TargetVolume, VoxelGrid, build_distance_field


def point_object(points):
    pts = np.atleast_2d(points)
    hull = np.array([[0, 0, 0], [1e-3, 0, 0], [0, 1e-3, 0], [0, 0, 1e-3]], float)
    return ObjectModel(hull, np.zeros((0, 3), int), hull.mean(axis=0), pts)


@pytest.fixture
def empty_field():
    g = VoxelGrid.empty(np.zeros(3), 0.05, (20, 20, 20))
    return build_distance_field(g, whole_volume(g))


@pytest.fixture
def wall_field():
    # a wall occupying x in [0.6, 0.65)
    g = VoxelGrid.empty(np.zeros(3), 0.05, (20, 20, 20)).fill_box((0.6, 0, 0), (0.64, 1, 1))
    return g, build_distance_field(g, whole_volume(g))


def test_singleton_clearance(empty_field):
    obj = point_object([[0.0, 0.0, 0.0]])
    p = Pose((0.3, 0.5, 0.5))
    assert clearance(p, obj, empty_field) == pytest.approx(0.3)


def test_center_of_empty_volume(empty_field):
    obj = point_object([[0.0, 0.0, 0.0]])
    assert clearance(Pose((0.5, 0.5, 0.5)), obj, empty_field) == pytest.approx(0.5)


def test_mean_of_two_points(empty_field):
    obj = point_object([[0.0, 0.0, 0.0], [0.2, 0.0, 0.0]])
    # point clearances 0.1 (x = 0.1) and 0.3 (x = 0.3)
    assert clearance(Pose((0.1, 0.5, 0.5)), obj, empty_field) == pytest.approx(0.2)


def test_objectives_are_negatives(wall_field):
    _, f = wall_field
    obj = point_object([[0, 0, 0], [0.05, 0.02, 0.0]])
    p = Pose.from_yaw(0.4, (0.3, 0.4, 0.3))
    assert objective_min_clearance(obj, f)(p) == -objective_max_clearance(obj, f)(p)


def test_rankings_against_ray_oracle(wall_field):
    g, f = wall_field
    obj = point_object([[0, 0, 0]])
    near, centred = Pose((0.55, 0.5, 0.5)), Pose((0.3, 0.5, 0.5))

    def oracle(pose):
        return ray_clearance(g.occupancy, g.origin, g.cell_size, g.origin, g.upper, pose.position)

    assert oracle(centred) > oracle(near)
    hi, lo = objective_max_clearance(obj, f), objective_min_clearance(obj, f)
    assert hi(centred) > hi(near)
    assert lo(near) > lo(centred)
    assert hi(near) == pytest.approx(oracle(near))


def test_clearance_monotone_away_from_wall(wall_field):
    _, f = wall_field
    obj = point_object([[0, 0, 0]])
    xs = np.linspace(0.45, 0.58, 14)
    c = [clearance(Pose((x, 0.5, 0.5)), obj, f) for x in xs]
    # moving towards the wall never increases clearance
    assert np.all(np.diff(c) <= 1e-12)
    assert c[-1] < c[0]


def test_registry():
    assert {"max-clearance", "min-clearance"} <= set(available_objectives())
    with pytest.raises(ValueError):
        make_objective("nope", None, None)
    register_objective("height", lambda obj, field: Objective("height", lambda p: p.position[2]))
    assert make_objective("height", None, None)(Pose((0, 0, 2.0))) == 2.0


def test_gradient_of_constant_is_zero():
    g = numeric_gradient(Objective("c", lambda p: 3.0), Pose.from_yaw(0.3, (1, 2, 3)), 0.01)
    assert np.array_equal(g, np.zeros(3))


def test_gradient_of_x_coordinate():
    g = numeric_gradient(Objective("x", lambda p: p.position[0]), Pose.from_yaw(0.3, (1, 2, 3)), 0.01)
    assert np.allclose(g, [1, 0, 0], atol=1e-9)


def test_yaw_rotates_about_world_z_through_position():
    # objective: yaw angle of the pose
    obj = Objective("yaw", lambda p: p.yaw)
    g = numeric_gradient(obj, Pose.from_euler((0.2, 0.1, 0.0), 0.0, 0.0, 0.3), 0.01, 0.02)
    assert np.allclose(g, [0, 0, 1], atol=1e-9)
    p = Pose.from_yaw(0.0, (0.5, 0.0, 0.0)).rotated_about_z(np.pi / 2)
    assert np.allclose(p.position, [0.5, 0, 0])


def test_gradient_points_away_from_wall(wall_field):
    g, f = wall_field
    obj = point_object([[0, 0, 0]])
    pose = Pose((0.5, 0.5, 0.5))
    grad = numeric_gradient(objective_max_clearance(obj, f), pose, g.cell_size)
    h = g.cell_size
    plus = ray_clearance(g.occupancy, g.origin, h, g.origin, g.upper, pose.position + [h, 0, 0])
    minus = ray_clearance(g.occupancy, g.origin, h, g.origin, g.upper, pose.position - [h, 0, 0])
    assert grad[0] < 0
    assert grad[0] == pytest.approx((plus - minus) / (2 * h))


def test_gradient_step_must_be_positive():
    with pytest.raises(ValueError):
        numeric_gradient(Objective("c", lambda p: 0.0), Pose(), 0.0)


def test_richardson_on_smooth_objective(rng):
    def f(p):
        x, y, _ = p.position
        return np.sin(3 * x) * np.cos(2 * y) + 0.3 * np.sin(p.yaw)

    obj = Objective("smooth", f)
    for _ in range(10):
        pose = Pose.from_yaw(rng.uniform(-1, 1), rng.uniform(-1, 1, 3))
        exact = np.array([3 * np.cos(3 * pose.position[0]) * np.cos(2 * pose.position[1]),
                          -2 * np.sin(3 * pose.position[0]) * np.sin(2 * pose.position[1]),
                          0.3 * np.cos(pose.yaw)])
        h = 0.05
        e1 = np.abs(numeric_gradient(obj, pose, h, h) - exact)
        e2 = np.abs(numeric_gradient(obj, pose, h / 2, h / 2) - exact)
        big = e1 > 1e-9
        assert np.all(e1[big] / np.maximum(e2[big], 1e-300) >= 3)


def test_clearance_zero_outside_volume():
    g = VoxelGrid.empty(np.zeros(3), 0.05, (20, 20, 20))
    f = build_distance_field(g, TargetVolume((0.2, 0.2, 0.2), (0.8, 0.8, 0.8)))
    assert clearance(Pose((0.1, 0.5, 0.5)), point_object([[0, 0, 0]]), f) == 0.0
