"""Built-in demo scenes, objects and robots.

All lengths are metres. The robots stand at the world origin facing +x and
the scenes put their furniture in front of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import PRISMATIC, REVOLUTE, ArmModel, Grasp, Joint
from .se3 import ObjectModel, Pose
from .world import TargetVolume, VoxelGrid

CELL = 0.02


@dataclass(frozen=True)
class Scene:
    name: str
    grid: VoxelGrid
    volume: TargetVolume


# ---------------------------------------------------------------------------
# scenes


def _grid(cell=CELL, lo=(-0.1, -0.5, 0.0), hi=(0.7, 0.5, 0.8)) -> VoxelGrid:
    lo, hi = np.asarray(lo), np.asarray(hi)
    dims = np.round((hi - lo) / cell).astype(int)
    return VoxelGrid.empty(lo, cell, dims)


def shelf_scene(clutter: bool = True) -> Scene:
    """Open-front shelf with three compartments and a few blocks on the
    boards."""
    g = _grid()
    x0, x1, yw = 0.34, 0.58, 0.30
    g = g.fill_box((x0, -yw - 0.02, 0.0), (x1, -yw, 0.64))
    g = g.fill_box((x0, yw, 0.0), (x1, yw + 0.02, 0.64))
    g = g.fill_box((x1, -yw, 0.0), (x1 + 0.02, yw, 0.64))
    for z in (0.06, 0.24, 0.42, 0.62):
        g = g.fill_box((x0, -yw, z), (x1, yw, z + 0.02))
    if clutter:
        for lo, hi in (
            ((0.44, -0.20, 0.08), (0.50, -0.14, 0.16)),
            ((0.38, 0.06, 0.08), (0.42, 0.12, 0.14)),
            ((0.48, 0.16, 0.26), (0.56, 0.22, 0.36)),
            ((0.36, -0.08, 0.26), (0.40, -0.02, 0.30)),
            ((0.42, -0.26, 0.44), (0.48, -0.18, 0.50)),
            ((0.50, 0.00, 0.44), (0.56, 0.08, 0.54)),
        ):
            g = g.fill_box(lo, hi)
    return Scene("shelf", g, TargetVolume((x0, -yw, 0.08), (x1, yw, 0.62)))


def table_scene() -> Scene:
    """A table in front of the robot with two small blocks on it."""
    g = _grid()
    lo, hi = np.array([0.26, -0.36, 0.0]), np.array([0.62, 0.36, 0.18])
    g = g.fill_box((lo[0], lo[1], 0.16), (hi[0], hi[1], 0.18))
    for x in (lo[0], hi[0] - 0.02):
        for y in (lo[1], hi[1] - 0.02):
            g = g.fill_box((x, y, 0.0), (x + 0.02, y + 0.02, 0.16))
    g = g.fill_box((0.44, -0.24, 0.18), (0.50, -0.18, 0.24))
    g = g.fill_box((0.34, 0.14, 0.18), (0.40, 0.22, 0.22))
    return Scene("table", g, TargetVolume((lo[0], lo[1], 0.18), (hi[0], hi[1], 0.46)))


def two_region_scene() -> Scene:
    """Two pedestals; the second carries a grid of 4 cm posts with 2 cm
    gaps, so no object fits on it."""
    g = _grid(lo=(0.0, -0.4, 0.0), hi=(0.6, 0.4, 0.5))
    g = g.fill_box((0.20, -0.30, 0.0), (0.40, -0.06, 0.10))
    g = g.fill_box((0.20, 0.06, 0.0), (0.40, 0.30, 0.10))
    # posts two cells wide: the field resolves an obstacle only to within half a cell
    for x in np.arange(0.20, 0.40, 0.06):
        for y in np.arange(0.06, 0.30, 0.06):
            g = g.fill_box((x + 0.005, y + 0.005, 0.10), (x + 0.035, y + 0.035, 0.50))
    return Scene("two_region", g, TargetVolume((0.20, -0.30, 0.10), (0.40, 0.30, 0.40)))


SCENES = {"shelf": shelf_scene, "table": table_scene, "two_region": two_region_scene}


# ---------------------------------------------------------------------------
# objects


def _box_mesh(lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    v = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tri = [t for a, b, c, d in quads for t in ((a, b, c), (a, c, d))]
    return v, np.array(tri)


def _body_grid(inside, lo, hi, spacing):
    """Lattice points of [lo, hi] ``inside`` the solid, including the
    bounding faces."""
    axes = [np.linspace(a, b, max(2, int(np.ceil((b - a) / spacing)) + 1)) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return pts[inside(pts)]


def box_object(size=(0.08, 0.06, 0.05), name: str = "box", spacing: float = CELL) -> ObjectModel:
    half = np.asarray(size, float) / 2
    v, tri = _box_mesh(-half, half)
    body = _body_grid(lambda p: np.ones(len(p), bool), -half, half, spacing)
    return ObjectModel(v, tri, np.zeros(3), body, name)


def elongated_box(spacing: float = CELL) -> ObjectModel:
    return box_object((0.16, 0.04, 0.04), "elongated_box", spacing)


def l_prism(arm: float = 0.08, width: float = 0.03, height: float = 0.05, spacing: float = CELL) -> ObjectModel:
    """L-shaped profile in the xy-plane extruded along z, origin at the
    outer corner of the L (bottom)."""
    a, t = arm, width
    outline = np.array([[0, 0], [a, 0], [a, t], [t, t], [t, a], [0, a]], dtype=float)
    n = len(outline)
    v = np.vstack([np.c_[outline, np.zeros(n)], np.c_[outline, np.full(n, height)]])
    tri = [(0, k + 1, k) for k in range(1, n - 1)]  # bottom, facing -z
    tri += [(n, n + k, n + k + 1) for k in range(1, n - 1)]  # top
    for k in range(n):
        m = (k + 1) % n
        tri += [(k, m, n + m), (k, n + m, n + k)]
    tri = np.array(tri)
    # centre of mass of the two overlapping-free rectangles
    areas = np.array([a * t, (a - t) * t])
    cents = np.array([[a / 2, t / 2], [t / 2, t + (a - t) / 2]])
    com_xy = areas @ cents / areas.sum()

    def inside(p):
        return ((p[:, 0] <= a + 1e-12) & (p[:, 1] <= t + 1e-12)) | ((p[:, 0] <= t + 1e-12) & (p[:, 1] <= a + 1e-12))

    body = _body_grid(inside, (0, 0, 0), (a, a, height), spacing / 2 if spacing > t else spacing)
    return ObjectModel(v, tri, np.r_[com_xy, height / 2], body, "l_prism")


def pyramid(base: float = 0.08, height: float = 0.10, spacing: float = CELL) -> ObjectModel:
    """Square pyramid, origin at the base centre; it can only rest on its
    base."""
    b = base / 2
    v = np.array([[-b, -b, 0], [b, -b, 0], [b, b, 0], [-b, b, 0], [0, 0, height]], dtype=float)
    tri = np.array([(0, 2, 1), (0, 3, 2), (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)])

    def inside(p):
        s = b * (1 - p[:, 2] / height) + 1e-12
        return (np.abs(p[:, 0]) <= s) & (np.abs(p[:, 1]) <= s)

    body = _body_grid(inside, (-b, -b, 0), (b, b, height), spacing)
    body = np.vstack([body, [[0, 0, height]]])
    return ObjectModel(v, tri, np.array([0, 0, height / 4]), body, "pyramid")


OBJECTS = {"box": box_object, "elongated_box": elongated_box, "l_prism": l_prism, "pyramid": pyramid}


# ---------------------------------------------------------------------------
# robots


def six_dof_arm(name: str, mount) -> ArmModel:
    """Shoulder yaw/pitch, elbow pitch, forearm roll, wrist pitch and wrist
    roll; the tool z-axis points along the last link."""
    ex, ey, ez = np.eye(3)
    joints = [
        Joint(REVOLUTE, ez, Pose.identity(), -np.pi, np.pi),
        Joint(REVOLUTE, ey, Pose((0, 0, 0.05), (1, 0, 0, 0)), -1.9, 1.9),
        Joint(REVOLUTE, ey, Pose((0.30, 0, 0), (1, 0, 0, 0)), -2.8, 2.8),
        Joint(REVOLUTE, ex, Pose((0.15, 0, 0), (1, 0, 0, 0)), -np.pi, np.pi),
        Joint(REVOLUTE, ey, Pose((0.15, 0, 0), (1, 0, 0, 0)), -2.0, 2.0),
        Joint(REVOLUTE, ex, Pose((0.05, 0, 0), (1, 0, 0, 0)), -np.pi, np.pi),
    ]
    balls = [
        [((0, 0, 0.0), 0.05)],
        [],
        [((0.06, 0, 0), 0.035), ((0.15, 0, 0), 0.035), ((0.24, 0, 0), 0.035)],
        [((0.05, 0, 0), 0.03), ((0.12, 0, 0), 0.03)],
        [((0.05, 0, 0), 0.025), ((0.12, 0, 0), 0.025)],
        [],
        [((0.025, 0, 0), 0.02)],
    ]
    tool = Pose.from_rotation(np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0]], float), (0.06, 0, 0))
    q_rest = np.array([0.0, -1.2, 2.6, 0.0, -1.4, 0.0])
    return ArmModel(name, joints, Pose(mount, (1, 0, 0, 0)), tool, balls, q_rest)


def dual_arm_robot() -> dict[str, ArmModel]:
    return {"right": six_dof_arm("right", (0.0, -0.16, 0.30)), "left": six_dof_arm("left", (0.0, 0.16, 0.30))}


def cartesian_arm(name: str = "gantry", lo=(-0.2, -0.6, 0.0), hi=(0.8, 0.6, 0.8), ball: float = 0.0) -> ArmModel:
    """Three prismatic axes followed by z-y-x revolute joints."""
    ex, ey, ez = np.eye(3)
    joints = [Joint(PRISMATIC, e, Pose.identity(), lo[k], hi[k]) for k, e in enumerate((ex, ey, ez))]
    joints += [Joint(REVOLUTE, e, Pose.identity(), -np.pi, np.pi) for e in (ez, ey, ex)]
    balls = [[] for _ in range(7)]
    if ball > 0:
        balls[6] = [((0, 0, -ball - 0.01), ball)]
    q_rest = np.r_[(np.asarray(lo) + np.asarray(hi)) / 2, 0, 0, 0]
    return ArmModel(name, joints, Pose.identity(), Pose.identity(), balls, q_rest)


def side_grasp(obj: ObjectModel, arm_id: str) -> Grasp:
    """Gripper at the centre of the object's -x bounding-box face, approach
    direction along object +x."""
    lo, hi = obj.surface_points.min(axis=0), obj.surface_points.max(axis=0)
    c = (lo + hi) / 2
    R = np.array([[0, 0, 1], [0, -1, 0], [1, 0, 0]], dtype=float)  # columns: gripper x, y, z
    return Grasp(arm_id, Pose.from_rotation(R, (lo[0], c[1], c[2])))


def top_grasp(obj: ObjectModel, arm_id: str) -> Grasp:
    """Gripper above the object's bounding box, approaching along -z."""
    lo, hi = obj.surface_points.min(axis=0), obj.surface_points.max(axis=0)
    c = (lo + hi) / 2
    R = np.diag([1.0, -1.0, -1.0])
    return Grasp(arm_id, Pose.from_rotation(R, (c[0], c[1], hi[2] + 0.01)))


def demo_setup(scene: str = "shelf", obj: str = "box"):
    """(scene, object, arms, grasps) for the dual-arm robot."""
    s = SCENES[scene]()
    o = OBJECTS[obj]()
    arms = dual_arm_robot()
    grasps = {a: side_grasp(o, a) for a in arms}
    return s, o, arms, grasps


__all__ = [
    "Scene", "shelf_scene", "table_scene", "two_region_scene", "box_object", "elongated_box", "l_prism",
    "pyramid", "six_dof_arm", "dual_arm_robot", "cartesian_arm", "side_grasp", "top_grasp", "demo_setup",
    "SCENES", "OBJECTS",
]
