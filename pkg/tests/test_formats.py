from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from placeplan import assets, formats
from placeplan.anytime import PlannerConfig
from placeplan.context import Tolerances
from placeplan.formats import ParseError
from placeplan.kinematics import forward_kinematics
from placeplan.motion_planner import Path
from placeplan.world import TargetVolume, VoxelGrid


# -- scenes --------------------------------------------------------------------------


def test_scene_round_trip():
    for make in assets.SCENES.values():
        scene = make()
        back = formats.parse_scene(formats.dump_scene(scene))
        assert back.name == scene.name
        assert np.array_equal(back.grid.occupancy, scene.grid.occupancy)
        assert np.array_equal(back.grid.origin, scene.grid.origin) and back.grid.cell_size == scene.grid.cell_size
        assert np.array_equal(back.volume.lo, scene.volume.lo) and np.array_equal(back.volume.hi, scene.volume.hi)


def test_scene_boxes_and_default_empty():
    text = "scene 1\norigin 0 0 0\ncell_size 0.1\ndims 4 4 4\nvolume 0 0 0 0.4 0.4 0.4\nbox 0 0 0 0.19 0.4 0.09\n"
    s = formats.parse_scene(text)
    assert s.grid.occupancy.sum() == 2 * 4 * 1


@pytest.mark.parametrize("text,line", [
    ("scene 1\norigin 0 0\n", 2),
    ("scene 1\ncolour red\n", 2),
    ("scene 2\n", 1),
    ("scene 1\norigin 0 0 0\ncell_size -1\ndims 2 2 2\nvolume 0 0 0 1 1 1\n", 3),
    ("scene 1\norigin 0 0 0\ncell_size 1\ndims 2 2 2\nvolume 0 0 0 1 1 1\noccupancy\n  0:3\nend\n", 0),
    ("scene 1\norigin 0 0 0\ncell_size 1\ndims 2 2 2\nvolume 0 0 0 1 1 1\noccupancy\n  2:8\nend\n", 7),
])
def test_scene_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as e:
        formats.parse_scene(text, "bad.scene")
    assert e.value.line == line and str(e.value).startswith(f"bad.scene:{line}:")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_random_occupancy_round_trip(nx, ny, nz, seed):
    occ = np.random.default_rng(seed).random((nx, ny, nz)) < 0.4
    g = VoxelGrid(np.array([0.1, -0.2, 0.0]), 0.05, occ)
    scene = assets.Scene("r", g, TargetVolume(g.origin, g.upper))
    assert np.array_equal(formats.parse_scene(formats.dump_scene(scene)).grid.occupancy, occ)


# -- objects -------------------------------------------------------------------------


def test_object_round_trip():
    for make in assets.OBJECTS.values():
        obj = make()
        mesh, meta = formats.dump_object(obj)
        back = formats.parse_object(mesh, meta)
        assert back.name == obj.name
        assert np.allclose(back.com, obj.com, atol=0, rtol=0)
        assert np.array_equal(back.body_points, obj.body_points)
        assert np.array_equal(back.surface_points, obj.surface_points)


def test_body_points_from_mesh_lie_inside():
    verts, tris = formats.parse_mesh(formats.dump_object(assets.box_object())[0])
    pts = formats.body_points_from_mesh(verts, tris, 0.01)
    assert len(pts) > 0
    assert np.all(formats.points_inside_mesh(pts * (1 - 1e-3), verts, tris))  # box is centred
    assert np.all(np.abs(pts) <= np.array([0.04, 0.03, 0.025]) + 1e-12)


def test_object_meta_errors():
    mesh, _ = formats.dump_object(assets.box_object())
    with pytest.raises(ParseError):
        formats.parse_object(mesh, "meta 1\nname x\ncom 0 0 0\n")
    with pytest.raises(ParseError):
        formats.parse_object(mesh, "meta 1\ncom 0 0\nb 0 0 0\n")


# -- arms ------------------------------------------------------------------------------


def test_arms_round_trip(rng):
    arms = assets.dual_arm_robot()
    arms["gantry"] = assets.cartesian_arm(ball=0.03)
    back, _ = formats.parse_arms(formats.dump_arms(arms))
    assert list(back) == list(arms)
    for k, arm in arms.items():
        b = back[k]
        assert np.array_equal(b.lower, arm.lower) and np.array_equal(b.upper, arm.upper)
        assert np.array_equal(b.q_rest, arm.q_rest)
        for _ in range(5):
            q = rng.uniform(arm.lower, arm.upper)
            assert np.allclose(forward_kinematics(b, q).matrix, forward_kinematics(arm, q).matrix, atol=1e-14)


def test_arm_grasps():
    obj = assets.box_object()
    text = formats.dump_arms(assets.dual_arm_robot()).replace("end\n", "  grasp side\nend\n")
    _, grasps = formats.parse_arms(text, obj=obj)
    assert set(grasps) == {"left", "right"}
    want = assets.side_grasp(obj, "left")
    assert np.allclose(grasps["left"].transform.matrix, want.transform.matrix)


# -- config -----------------------------------------------------------------------------


def test_config_round_trip_default():
    cfg = PlannerConfig(seed=3)
    assert formats.parse_config(formats.dump_config(cfg)) == cfg


def test_config_requires_seed():
    with pytest.raises(ParseError, match="seed"):
        formats.parse_config("config 1\ng_max = 4\n")


@pytest.mark.parametrize("line", ["g_max = many", "nonsense = 1", "local_opt = maybe", "g_max 4", "g_max = 0"])
def test_config_errors(line):
    with pytest.raises(ParseError):
        formats.parse_config(f"config 1\nseed = 1\n{line}\n")


_cfg_fields = st.fixed_dictionaries({}, optional={
    "g_max": st.integers(1, 50), "m_max": st.integers(1, 500), "c": st.floats(0, 10),
    "l": st.integers(1, 9), "min_area": st.none() | st.floats(1e-6, 1.0), "seed": st.integers(0, 2**31),
    "mu": st.floats(1e-4, 1.0), "time_limit": st.floats(0, 1e4), "sampler": st.sampled_from(["mcts", "uniform"]),
    "local_opt": st.booleans(), "objective": st.sampled_from(["max-clearance", "min-clearance"]),
    "max_iterations": st.none() | st.integers(0, 1000), "grad_step": st.none() | st.floats(1e-4, 0.1),
})
_tol_fields = st.fixed_dictionaries({}, optional={
    "stability_tol": st.floats(1e-6, 0.1), "eps_region": st.none() | st.floats(1e-6, 0.1),
    "scales": st.tuples(*[st.floats(0.01, 10)] * 5),
})


@settings(max_examples=60, deadline=None)
@given(_cfg_fields, _tol_fields)
def test_config_round_trip_and_hash(kw, tol):
    cfg = PlannerConfig(**kw, tolerances=Tolerances(**tol))
    back = formats.parse_config(formats.dump_config(cfg))
    assert back == cfg
    assert formats.config_hash(back) == formats.config_hash(cfg)


@settings(max_examples=60, deadline=None)
@given(_cfg_fields, _cfg_fields)
def test_config_hash_changes_iff_fields_change(a, b):
    ca, cb = PlannerConfig(**a), PlannerConfig(**b)
    assert (formats.config_hash(ca) == formats.config_hash(cb)) == (ca == cb)


def test_every_field_moves_the_hash():
    base = PlannerConfig()
    h = formats.config_hash(base)
    changes = {"g_max": 11, "m_max": 101, "c": 1.5, "l": 3, "min_area": 0.01, "min_theta": 0.1, "objective": "min-clearance",
               "time_limit": 31.0, "seed": 1, "mu": 0.03, "local_opt_steps": 99, "grad_tol": 1e-6, "grad_step": 0.01,
               "sampler": "uniform", "local_opt": False, "ik_seeds": 4, "max_iterations": 7,
               "tolerances": Tolerances(stability_tol=1e-3)}
    assert set(changes) == {f.name for f in dataclasses.fields(PlannerConfig)}
    for k, v in changes.items():
        assert formats.config_hash(dataclasses.replace(base, **{k: v})) != h, k


# -- paths and records ---------------------------------------------------------------------


def test_path_round_trip():
    p = Path([np.array([0.1, 1 / 3, -2.0]), np.array([np.pi, 0.0, 1e-17])], "left")
    back = formats.parse_path(formats.dump_path(p))
    assert back.arm_id == "left"
    assert all(np.array_equal(a, b) for a, b in zip(back.waypoints, p.waypoints))


def test_path_errors():
    with pytest.raises(ParseError):
        formats.parse_path("path 1\narm a\nw 1 2\n")
    with pytest.raises(ParseError):
        formats.parse_path("path 1\narm a\ndof 2\nw 1 2 3\n")
    with pytest.raises(ParseError):
        formats.parse_path("path 1\narm a\ndof 2\n")


def test_records():
    line = formats.format_record(1.5, 0.0123, 0.5, "left", 12)
    text = f"# seed 4\n# variant mcts+localopt\n{formats.RECORD_HEADER}\n{line}\n"
    meta, rows = formats.parse_records(text)
    assert meta == {"seed": "4", "variant": "mcts+localopt"}
    assert rows == [(1.5, 0.0123, 0.5, "left", 12)]
