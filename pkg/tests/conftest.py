from __future__ import annotations

import numpy as np
import pytest

from placeplan.kinematics import PRISMATIC, REVOLUTE, ArmModel, Joint
from placeplan.se3 import ObjectModel, Pose
from placeplan.world import TargetVolume, VoxelGrid


def planar_two_link(lo=-np.pi, hi=np.pi) -> ArmModel:
    """Two revolute z-joints, unit links along x; the tool sits at the tip."""
    z = np.array([0.0, 0.0, 1.0])
    joints = [Joint(REVOLUTE, z, Pose.identity(), lo, hi), Joint(REVOLUTE, z, Pose((1.0, 0, 0)), lo, hi)]
    return ArmModel("planar", joints, tool=Pose((1.0, 0, 0)))


def prismatic_x(lo=-1.0, hi=1.0, base=(0.0, 0.0, 0.0)) -> ArmModel:
    return ArmModel("slider", [Joint(PRISMATIC, np.array([1.0, 0, 0]), Pose.identity(), lo, hi)],
                    base_pose=Pose(base), q_rest=np.zeros(1))


def cube_object(side=1.0, com=None, spacing=None) -> ObjectModel:
    h = side / 2
    corners = np.array([[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)])
    if spacing is None:
        body = corners * 0.99
    else:
        ax = np.arange(-h + spacing / 2, h, spacing)
        body = np.array(np.meshgrid(ax, ax, ax, indexing="ij")).reshape(3, -1).T
    return ObjectModel(corners, np.zeros((0, 3), dtype=int), np.zeros(3) if com is None else com, body, "cube")


def floor_grid(n=16, cell=0.02, height=24) -> VoxelGrid:
    """An n x n x height grid whose bottom layer is fully occupied."""
    occ = np.zeros((n, n, height), dtype=bool)
    occ[:, :, 0] = True
    return VoxelGrid(np.zeros(3), cell, occ)


def whole_volume(grid: VoxelGrid) -> TargetVolume:
    return TargetVolume(grid.origin, grid.upper)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def planar_arm():
    return planar_two_link()


@pytest.fixture
def cube():
    return cube_object()


def make_context(grid, volume, obj, arms=None, grasps=None, objective="max-clearance", tolerances=None, **kw):
    """PlacementContext over a scene; defaults to one Cartesian arm holding
    the object at its origin."""
    from placeplan.assets import cartesian_arm
    from placeplan.context import PlacementContext, Tolerances
    from placeplan.kinematics import Grasp
    from placeplan.objectives import make_objective
    from placeplan.se3 import extract_placement_faces
    from placeplan.world import build_distance_field, extract_regions

    if arms is None:
        lo, hi = grid.origin - 1.0, grid.upper + 1.0
        arms = {"gantry": cartesian_arm("gantry", lo, hi)}
        grasps = {"gantry": Grasp("gantry")}
    faces = extract_placement_faces(obj)
    regions = extract_regions(grid, volume, min(f.height for f in faces))
    field = build_distance_field(grid, volume)
    return PlacementContext(obj, faces, regions, field, arms, grasps, make_objective(objective, obj, field),
                            tolerances or Tolerances(), **kw)


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
