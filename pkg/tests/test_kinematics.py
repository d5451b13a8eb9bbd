from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import planar_two_link, prismatic_x
from oracles import chain_matrix
from placeplan.assets import cartesian_arm, six_dof_arm
from placeplan.kinematics import (PRISMATIC, REVOLUTE, ArmModel, Grasp, IKParams, Joint, JointLimit, NoSolution,
                                  collision_balls_at, forward_kinematics, jacobian, object_pose, solve_ik,
                                  solve_object_ik)
from placeplan.se3 import Pose

ARMS = {"planar": planar_two_link, "six_dof": lambda: six_dof_arm("a", (0.0, 0.1, 0.3)), "cartesian": cartesian_arm}


def fk_position_jacobian(arm, q, h=1e-6):
    cols = []
    for k in range(arm.dof):
        dq = np.zeros(arm.dof)
        dq[k] = h
        cols.append((forward_kinematics(arm, q + dq).position - forward_kinematics(arm, q - dq).position) / (2 * h))
    return np.array(cols).T


def interior_configuration(arm, rng, shrink=1e-5):
    return rng.uniform(arm.lower + shrink, arm.upper - shrink)


def test_joint_validation():
    with pytest.raises(ValueError):
        Joint(REVOLUTE, np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        Joint("helical", np.array([1.0, 0, 0]))
    with pytest.raises(ValueError):
        Joint(REVOLUTE, np.array([1.0, 0, 0]), lo=1.0, hi=1.0)
    with pytest.raises(ValueError):
        ArmModel("empty", [])


def test_planar_fk_extended(planar_arm):
    assert np.allclose(forward_kinematics(planar_arm, [0.0, 0.0]).position, [2, 0, 0])


def test_planar_fk_quarter_turn(planar_arm):
    assert np.allclose(forward_kinematics(planar_arm, [np.pi / 2, 0.0]).position, [0, 2, 0])


def test_fk_rejects_out_of_limit(planar_arm):
    with pytest.raises(JointLimit):
        forward_kinematics(planar_arm, [4.0, 0.0])
    with pytest.raises(JointLimit):
        forward_kinematics(planar_arm, [0.0])


@pytest.mark.parametrize("name", sorted(ARMS))
def test_fk_matches_matrix_chain(name, rng):
    arm = ARMS[name]()
    for _ in range(20):
        q = arm.random_configuration(rng)
        assert np.max(np.abs(forward_kinematics(arm, q).matrix - chain_matrix(arm, q))) < 1e-12


def test_identity_grasp_object_pose_is_fk(planar_arm):
    q = np.array([0.3, -0.2])
    assert np.allclose(object_pose(planar_arm, Grasp("planar"), q).matrix, forward_kinematics(planar_arm, q).matrix)


def test_translated_grasp_offsets_object(planar_arm):
    t = np.array([0.1, 0.2, -0.05])
    q = np.array([0.7, 0.4])
    ee = forward_kinematics(planar_arm, q)
    obj = object_pose(planar_arm, Grasp("planar", Pose(t)), q)
    assert np.allclose(obj.position, ee.position - ee.rotation @ t)
    assert np.allclose(obj.rotation, ee.rotation)


def test_object_pose_ik_round_trip(rng):
    arm = ARMS["six_dof"]()
    grasp = Grasp("a", Pose.from_euler((0.0, 0.0, 0.05), 0.2, 0.1, -0.3))
    q = interior_configuration(arm, rng, 0.3)
    target = object_pose(arm, grasp, q)
    q2 = solve_object_ik(arm, grasp, target, 10, rng)
    dp, da = object_pose(arm, grasp, q2).distance(target)
    assert dp <= 1e-4 and da <= 1e-3


def test_prismatic_jacobian_column():
    J = jacobian(prismatic_x(), [0.2])
    assert np.allclose(J[:, 0], [1, 0, 0, 0, 0, 0])


def test_planar_jacobian_at_zero(planar_arm):
    J = jacobian(planar_arm, [0.0, 0.0])
    assert J[1, 0] == pytest.approx(2.0)
    assert J[1, 1] == pytest.approx(1.0)
    assert np.allclose(J[3:, :], [[0, 0], [0, 0], [1, 1]])


@pytest.mark.parametrize("name", sorted(ARMS))
def test_jacobian_matches_central_differences(name, rng):
    arm = ARMS[name]()
    for _ in range(30):
        q = interior_configuration(arm, rng)
        J = jacobian(arm, q)
        assert np.max(np.abs(J[:3] - fk_position_jacobian(arm, q))) <= 1e-5


def test_jacobian_at_custom_point(planar_arm):
    q = np.array([0.4, 0.9])
    p = np.array([0.3, 0.1, 0.0])
    J = jacobian(planar_arm, q, point=p)
    # first joint at the origin: velocity of p is z x p
    assert np.allclose(J[:3, 0], np.cross([0, 0, 1], p))


def test_ik_extended_target(planar_arm, rng):
    q = solve_ik(planar_arm, Pose((2.0, 0, 0)), 5, rng, q_init=[0.1, -0.1])
    assert np.allclose(q, [0, 0], atol=1e-2)
    assert forward_kinematics(planar_arm, q).distance(Pose((2.0, 0, 0)))[0] <= 1e-4


def test_ik_unreachable(planar_arm, rng):
    with pytest.raises(NoSolution):
        solve_ik(planar_arm, Pose((3.0, 0, 0)), 3, rng)


def test_ik_quarter_turn(planar_arm, rng):
    target = Pose.from_yaw(np.pi / 2, (0.0, 2.0, 0.0))
    q = solve_ik(planar_arm, target, 5, rng)
    dp, da = forward_kinematics(planar_arm, q).distance(target)
    assert dp <= 1e-4 and da <= 1e-3
    assert planar_arm.within_limits(q)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ik_success_implies_round_trip(seed):
    rng = np.random.default_rng(seed)
    arm = ARMS["six_dof"]()
    # mix of reachable and arbitrary targets
    if seed % 2:
        target = forward_kinematics(arm, arm.random_configuration(rng))
    else:
        target = Pose.from_euler(rng.uniform(-0.6, 0.6, 3), *rng.uniform(-np.pi, np.pi, 3))
    try:
        q = solve_ik(arm, target, 2, rng)
    except NoSolution:
        return
    dp, da = forward_kinematics(arm, q).distance(target)
    assert dp <= 1e-4 and da <= 1e-3
    assert arm.within_limits(q)


def test_ik_respects_params(rng):
    arm = ARMS["six_dof"]()
    target = forward_kinematics(arm, interior_configuration(arm, rng, 0.3))
    with pytest.raises(NoSolution):
        solve_ik(arm, target, 1, rng, params=IKParams(max_iterations=1))


def test_balls_at_zero_configuration():
    arm = ArmModel("one", [Joint(REVOLUTE, np.array([0, 0, 1.0]))], link_balls=[[], [((0.5, 0.2, 0.1), 0.05)]])
    c, r = collision_balls_at(arm, [0.0])
    assert np.allclose(c, [[0.5, 0.2, 0.1]]) and np.allclose(r, [0.05])


def test_ball_count_invariant(rng):
    arm = ARMS["six_dof"]()
    counts = {len(collision_balls_at(arm, arm.random_configuration(rng))[1]) for _ in range(10)}
    assert counts == {arm.n_balls}


def test_half_turn_mirrors_balls():
    arm = ArmModel("one", [Joint(REVOLUTE, np.array([0, 0, 1.0]))], link_balls=[[], [((0.5, 0.2, 0.1), 0.05)]])
    c0, _ = collision_balls_at(arm, [0.0])
    c1, _ = collision_balls_at(arm, [np.pi])
    assert np.allclose(c1[:, :2], -c0[:, :2]) and np.allclose(c1[:, 2], c0[:, 2])


@settings(max_examples=25)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(-np.pi, np.pi), st.floats(-1, 1))
def test_object_pose_equivariant_under_base_change(t, yaw, pitch):
    T = Pose.from_euler(t, 0.1, pitch, yaw)
    arm = ARMS["six_dof"]()
    moved = ArmModel(arm.name, arm.joints, T @ arm.base_pose, arm.tool, arm.link_balls, arm.q_rest)
    grasp = Grasp("a", Pose((0.02, 0.0, 0.03)))
    q = np.array([0.1, -0.4, 1.2, 0.3, -0.2, 0.5])
    assert np.allclose((T @ object_pose(arm, grasp, q)).matrix, object_pose(moved, grasp, q).matrix, atol=1e-12)


def test_prismatic_joint_moves_along_axis():
    arm = ArmModel("p", [Joint(PRISMATIC, np.array([0, 1.0, 0]), lo=-1, hi=1)])
    assert np.allclose(forward_kinematics(arm, [0.3]).position, [0, 0.3, 0])


def test_wrap_folds_full_turn_joints_only():
    arm = six_dof_arm("a", (0.0, 0.1, 0.3))
    q = np.array([np.pi + 0.5, 2.5, 0.0, -np.pi - 0.25, -3.0, 2.5 * np.pi])
    w = arm.wrap(q)
    # joints 0, 3, 5 span a full turn; 1 and 4 are clamped
    assert w == pytest.approx([-np.pi + 0.5, 1.9, 0.0, np.pi - 0.25, -2.0, 0.5 * np.pi])
    assert arm.within_limits(w)
    # folding leaves the end effector where it was
    inside = np.array([np.pi + 0.5, 1.0, 0.3, -np.pi - 0.25, -1.0, 2.5 * np.pi])
    assert np.allclose(arm.frames(inside)[-1], arm.frames(arm.wrap(inside))[-1], atol=1e-12)
