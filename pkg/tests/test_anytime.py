from __future__ import annotations

import dataclasses
import math
import threading

import numpy as np
import pytest

from conftest import cube_object, floor_grid, make_context, prismatic_x, whole_volume
from placeplan.anytime import (AnytimePlanner, LocalOptTrace, PlannerConfig, PreconditionFailed, optimize_locally,
                               preprocess, run)
from placeplan.assets import cartesian_arm
from placeplan.constraints import config_checker, is_object_collision_free, is_stable
from placeplan.kinematics import Grasp, object_pose
from placeplan.motion_planner import Path, joint_steps
from placeplan.objectives import Objective
from placeplan.world import TargetVolume, VoxelGrid


def small_scene():
    g = floor_grid(16, 0.02, 12)
    return g, whole_volume(g), cube_object(0.04, spacing=0.02)


def gantry(grid):
    arm = cartesian_arm("gantry", grid.origin - 0.1, grid.upper + 0.1)
    arm = dataclasses.replace(arm, q_rest=np.array([0.16, 0.16, 0.2, 0.0, 0.0, 0.0]))
    return {"gantry": arm}, {"gantry": Grasp("gantry")}


def planner_for(cfg, grid=None):
    g, vol, obj = small_scene()
    grid = grid if grid is not None else g
    arms, grasps = gantry(grid)
    return AnytimePlanner(cfg, grid, whole_volume(grid), obj, arms, grasps)


def revalidate(planner, sol):
    """Independent check of a published solution."""
    ctx = planner.ctx
    arm = ctx.arm(sol.arm_id)
    valid = config_checker(ctx, sol.arm_id)
    steps = joint_steps(arm)
    wps = np.asarray(sol.path.waypoints)
    assert np.array_equal(wps[0], planner.planners[sol.arm_id].forward.root)
    for a, b in zip(wps[:-1], wps[1:]):
        n = int(np.ceil(2 * np.linalg.norm((b - a) / steps)))
        assert all(valid(a + (b - a) * k / max(n, 1)) for k in range(0, n + 1))
    pose = object_pose(arm, ctx.grasp(sol.arm_id), wps[-1])
    assert np.allclose(pose.matrix, sol.pose.matrix)
    assert is_stable(pose, sol.face, ctx.regions, ctx.tolerances.stability_tol)
    assert is_object_collision_free(pose, ctx.obj, ctx.field, ctx.tolerances.contact_offset)
    assert ctx.objective(pose) == sol.xi


# -- configuration --------------------------------------------------------------------


def test_config_validation():
    for bad in ({"g_max": 0}, {"m_max": 0}, {"mu": 0.0}, {"local_opt_steps": 0}, {"sampler": "grid"},
                {"time_limit": -1.0}, {"max_iterations": -1}):
        with pytest.raises(ValueError):
            PlannerConfig(**bad)
    assert PlannerConfig().mu == 0.02 and PlannerConfig().local_opt_steps == 100


# -- preprocessing ----------------------------------------------------------------------


def test_preprocess_cube_on_table():
    g, vol, obj = small_scene()
    pre = preprocess(g, vol, obj)
    assert len(pre.faces) == 6 and len(pre.regions) >= 1


def test_preprocess_is_pure():
    g, vol, obj = small_scene()
    a, b = preprocess(g, vol, obj), preprocess(g, vol, obj)
    assert [f.normal.tolist() for f in a.faces] == [f.normal.tolist() for f in b.faces]
    assert [r.cells.tolist() for r in a.regions] == [r.cells.tolist() for r in b.regions]
    assert np.array_equal(a.field.signed_distance, b.field.signed_distance)


def test_fully_occupied_volume():
    g = VoxelGrid(np.zeros(3), 0.02, np.ones((16, 16, 12), dtype=bool))
    _, _, obj = small_scene()
    assert preprocess(g, whole_volume(g), obj).regions == []
    with pytest.raises(PreconditionFailed, match="regions"):
        planner_for(PlannerConfig(), grid=g)


def test_start_in_collision():
    g, vol, obj = small_scene()
    arms, grasps = gantry(g)
    with pytest.raises(PreconditionFailed, match="start"):
        AnytimePlanner(PlannerConfig(), g, vol, obj, arms, grasps, starts={"gantry": np.array([0.16, 0.16, 0.0, 0.0, 0.0, 0.0])})


# -- the loop ----------------------------------------------------------------------------


def test_zero_time_limit():
    calls = []
    g, vol, obj = small_scene()
    arms, grasps = gantry(g)
    assert run(PlannerConfig(time_limit=0.0), g, vol, obj, arms, grasps, calls.append) is None
    assert calls == []


def test_published_values_strictly_increase_and_revalidate():
    for seed in range(3):
        planner = planner_for(PlannerConfig(seed=seed, max_iterations=30, time_limit=math.inf))
        published = []
        planner.run(published.append)
        assert published, seed
        xs = [s.xi for s in published]
        assert all(b > a for a, b in zip(xs, xs[1:]))
        assert planner.best is published[-1]
        for s in published:
            revalidate(planner, s)


def test_goal_set_hygiene_after_each_publish():
    planner = planner_for(PlannerConfig(seed=4, time_limit=math.inf))
    published = 0
    for _ in range(40):
        sol = planner.step()
        if sol is not None:
            published += 1
            assert all(g.xi > planner.xi_best for _, _, g in planner.live_goals())
            assert sol.xi == planner.xi_best
    assert published >= 1


def test_stop_flag_is_honoured():
    stop = threading.Event()
    stop.set()
    calls = []
    planner = planner_for(PlannerConfig(time_limit=math.inf))
    assert planner.run(calls.append, stop) is None and calls == []


def test_stop_between_sub_steps():
    # the flag is raised by the objective during goal sampling; no planning
    # or publishing happens afterwards in that iteration
    stop = threading.Event()
    planner = planner_for(PlannerConfig(time_limit=math.inf, max_iterations=5))
    inner = planner.ctx.objective

    def tripwire(pose):
        stop.set()
        return inner(pose)

    object.__setattr__(planner.ctx, "objective", Objective("tripwire", tripwire))
    assert planner.step(stop) is None
    assert all(p.iterations == 0 for p in planner.planners.values())


def test_determinism():
    def trace():
        planner = planner_for(PlannerConfig(seed=7, max_iterations=20, time_limit=math.inf))
        planner.run()
        return [(s.iteration, s.xi, np.asarray(s.path.waypoints).tolist()) for s in planner.solutions]

    assert trace() == trace()


def test_uniform_variant_and_no_local_opt_run():
    for cfg in (PlannerConfig(sampler="uniform", max_iterations=20, time_limit=math.inf),
                PlannerConfig(local_opt=False, max_iterations=20, time_limit=math.inf)):
        planner = planner_for(cfg)
        planner.run()
        for s in planner.solutions:
            revalidate(planner, s)


# -- local optimization -------------------------------------------------------------------


def slider_context(objective=None, grid=None, volume=None):
    g = grid if grid is not None else floor_grid(40, 0.02, 10)
    vol = volume if volume is not None else TargetVolume((0, 0, 0), (0.6, 0.8, 0.2))
    arm = prismatic_x(-1, 1, (0.1, 0.4, 0.04))
    ctx = make_context(g, vol, cube_object(0.04, spacing=0.02), {"slider": arm}, {"slider": Grasp("slider")})
    obj = objective or Objective("x", lambda p: p.position[0])
    return dataclasses.replace(ctx, objective=obj)


def bottom(ctx):
    return next(f for f in ctx.faces if f.normal[2] < -0.99)


def test_constant_objective_leaves_path_unchanged():
    ctx = slider_context(Objective("c", lambda p: 1.0))
    path = Path([np.zeros(1)], "slider")
    trace = LocalOptTrace()
    assert optimize_locally(path, ctx, bottom(ctx), trace=trace) is path
    assert trace.stop == "gradient"


def test_prismatic_steps_follow_pseudo_inverse():
    # J at the object origin is (1, 0, 0, 0, 0, 0); its pseudo-inverse maps the
    # lifted gradient (1, 0, 0, 0, 0, 0) to dq = 1, so every accepted step is mu
    ctx = slider_context()
    trace = LocalOptTrace()
    out = optimize_locally(Path([np.zeros(1)], "slider"), ctx, bottom(ctx), mu=0.1, trace=trace)
    full = [s for s in trace.steps if s[0] == 0.1]
    assert len(full) == 4
    for mu, dq, before, after in full:
        assert dq[0] == pytest.approx(0.1, abs=1e-12)
        assert after - before == pytest.approx(0.1, abs=1e-12)
    # the cube (half width 0.02) must stay over the region, which ends at x = 0.6
    assert trace.rejections == [(0.1, "stability"), (0.05, "stability")]
    assert trace.stop == "rejected"
    assert out.end[0] == pytest.approx(0.45, abs=1e-12)
    x = object_pose(ctx.arm("slider"), ctx.grasp("slider"), out.end).position[0]
    assert x + 0.02 <= 0.6 + ctx.tolerances.stability_tol
    steps = joint_steps(ctx.arm("slider"))
    assert np.all(np.abs(np.diff(np.asarray(out.waypoints)[:, 0])) <= steps[0] + 1e-12)


def test_step_into_obstacle_is_rejected():
    g = floor_grid(40, 0.02, 10).fill_box((0.34, 0.0, 0.02), (0.4, 0.8, 0.2))
    ctx = slider_context(grid=g)
    trace = LocalOptTrace()
    out = optimize_locally(Path([np.zeros(1)], "slider"), ctx, bottom(ctx), mu=0.1, trace=trace)
    assert trace.stop == "rejected"
    assert {r[1] for r in trace.rejections} <= {"configuration", "object collision"}
    valid = config_checker(ctx, "slider")
    assert all(valid(q) for q in out.waypoints)
    x = object_pose(ctx.arm("slider"), ctx.grasp("slider"), out.end).position[0]
    assert x + 0.02 < 0.34 + 0.01
