"""Serial-arm kinematics: forward kinematics, Jacobians, damped least-squares
inverse kinematics, grasped-object poses and collision balls."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .se3 import Pose, rotation_log

REVOLUTE = "revolute"
PRISMATIC = "prismatic"


class JointLimit(ValueError):
    """Raised when a configuration violates the arm's joint limits."""


class NoSolution(RuntimeError):
    """Raised when inverse kinematics fails from every seed."""


@dataclass(frozen=True, eq=False)
class Joint:
    kind: str
    axis: np.ndarray
    origin: Pose = field(default_factory=Pose.identity)
    lo: float = -np.pi
    hi: float = np.pi

    def __post_init__(self):
        if self.kind not in (REVOLUTE, PRISMATIC):
            raise ValueError(f"unknown joint type {self.kind!r}")
        a = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(a)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("joint axis must be a unit vector")
        if not self.lo < self.hi:
            raise ValueError("joint limits require lo < hi")
        object.__setattr__(self, "axis", a / n)

    def motion(self, q: float) -> np.ndarray:
        x, y, z = self._axis
        if self.kind == PRISMATIC:
            return np.array([[1.0, 0, 0, x * q], [0, 1.0, 0, y * q], [0, 0, 1.0, z * q], [0, 0, 0, 1.0]])
        c, s = math.cos(q), math.sin(q)
        C = 1.0 - c
        return np.array([
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s, 0.0],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s, 0.0],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])

    @cached_property
    def _axis(self) -> tuple[float, float, float]:
        return tuple(float(v) for v in self.axis)


@dataclass(frozen=True, eq=False)
class ArmModel:
    """A serial chain. ``link_balls[k]`` lists (center, radius) pairs attached
    to link k, where link 0 is the base and link k > 0 moves with joint k."""

    name: str
    joints: list
    base_pose: Pose = field(default_factory=Pose.identity)
    tool: Pose = field(default_factory=Pose.identity)
    link_balls: list = field(default_factory=list)
    q_rest: np.ndarray | None = None

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ValueError("an arm needs at least one joint")
        balls = list(self.link_balls) + [[] for _ in range(len(self.joints) + 1 - len(self.link_balls))]
        if len(balls) != len(self.joints) + 1:
            raise ValueError("link_balls has more entries than links")
        object.__setattr__(self, "link_balls", balls)
        if self.q_rest is not None:
            object.__setattr__(self, "q_rest", np.asarray(self.q_rest, dtype=float))

    @property
    def dof(self) -> int:
        return len(self.joints)

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([j.lo for j in self.joints])

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([j.hi for j in self.joints])

    @cached_property
    def _axes(self) -> np.ndarray:
        return np.array([j.axis for j in self.joints])

    @cached_property
    def _revolute(self) -> np.ndarray:
        return np.array([j.kind == REVOLUTE for j in self.joints])

    @cached_property
    def _continuous(self) -> np.ndarray:
        """Revolute joints whose limits span a full turn."""
        return self._revolute & np.isclose(self.upper - self.lower, 2 * np.pi)

    def wrap(self, q) -> np.ndarray:
        """Map full-turn revolute joints into their limit interval, then clamp."""
        q = np.asarray(q, dtype=float)
        c = self._continuous
        if c.any():
            q = np.where(c, self.lower + np.mod(q - self.lower, 2 * np.pi), q)
        return np.clip(q, self.lower, self.upper)

    @cached_property
    def _origins(self):
        return [j.origin.matrix for j in self.joints]

    @cached_property
    def _ball_data(self):
        centers, radii, links = [], [], []
        for k, balls in enumerate(self.link_balls):
            for c, r in balls:
                centers.append(np.asarray(c, dtype=float))
                radii.append(float(r))
                links.append(k)
        if not centers:
            return np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=int)
        return np.array(centers), np.array(radii), np.array(links)

    @property
    def n_balls(self) -> int:
        return len(self._ball_data[1])

    def within_limits(self, q, tol: float = 1e-9) -> bool:
        q = np.asarray(q, dtype=float)
        return q.shape == (self.dof,) and bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def check(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise JointLimit(f"{self.name}: expected {self.dof} joint values, got shape {q.shape}")
        if not self.within_limits(q):
            raise JointLimit(f"{self.name}: configuration {q} outside joint limits")
        return q

    def random_configuration(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)

    def frames(self, q) -> list[np.ndarray]:
        """World matrices of link 0 (base) .. link n; no limit check."""
        T = self.base_pose.matrix
        out = [T]
        for origin, joint, qi in zip(self._origins, self.joints, q):
            T = T @ origin @ joint.motion(qi)
            out.append(T)
        return out


@dataclass(frozen=True, eq=False)
class Grasp:
    """``transform`` is gT_o; the held object sits at FK(q) @ inverse(gT_o)."""

    arm_id: str
    transform: Pose = field(default_factory=Pose.identity)

    @cached_property
    def inverse(self) -> Pose:
        return self.transform.inverse()


def _ee_matrix(arm: ArmModel, q) -> np.ndarray:
    return arm.frames(q)[-1] @ arm.tool.matrix


def forward_kinematics(arm: ArmModel, q) -> Pose:
    q = arm.check(q)
    return Pose.from_matrix(_ee_matrix(arm, q))


def object_pose(arm: ArmModel, grasp: Grasp, q) -> Pose:
    return forward_kinematics(arm, q) @ grasp.inverse


def _jacobian_from_frames(arm: ArmModel, frames, point) -> np.ndarray:
    F = np.stack(frames[1:])
    z = np.einsum("nij,nj->ni", F[:, :3, :3], arm._axes)
    r = point - F[:, :3, 3]
    lin = np.stack([z[:, 1] * r[:, 2] - z[:, 2] * r[:, 1], z[:, 2] * r[:, 0] - z[:, 0] * r[:, 2],
                    z[:, 0] * r[:, 1] - z[:, 1] * r[:, 0]], axis=1)
    rev = arm._revolute
    J = np.empty((6, arm.dof))
    J[:3] = np.where(rev[:, None], lin, z).T
    J[3:] = np.where(rev[:, None], z, 0.0).T
    return J


def jacobian(arm: ArmModel, q, point=None) -> np.ndarray:
    """Geometric Jacobian (6, n): linear velocity of ``point`` (default the
    end effector) on top, angular velocity below."""
    q = arm.check(q)
    frames = arm.frames(q)
    if point is None:
        point = (frames[-1] @ arm.tool.matrix)[:3, 3]
    return _jacobian_from_frames(arm, frames, np.asarray(point, dtype=float))


@dataclass(frozen=True)
class IKParams:
    damping: float = 1e-3
    max_iterations: int = 200
    step_clamp: float = 0.2
    pos_tol: float = 1e-4
    rot_tol: float = 1e-3
    stall_iterations: int = 25


def _dls(arm: ArmModel, target: np.ndarray, q0, params: IKParams):
    q = arm.wrap(q0)
    Rt, pt = target[:3, :3], target[:3, 3]
    tool = arm.tool.matrix
    damp = params.damping * np.eye(6)
    best, stalled = np.inf, 0
    for _ in range(params.max_iterations):
        frames = arm.frames(q)
        T = frames[-1] @ tool
        err = np.concatenate([pt - T[:3, 3], rotation_log(Rt @ T[:3, :3].T)])
        ep, er = np.linalg.norm(err[:3]), np.linalg.norm(err[3:])
        if ep < 1e-2 * params.pos_tol and er < 1e-2 * params.rot_tol:
            return q, ep, er
        # give up on seeds that stopped converging (joint limits, singularities)
        e = ep + er
        if e < best * (1 - 1e-3):
            best, stalled = e, 0
        else:
            stalled += 1
            if stalled >= params.stall_iterations:
                break
        J = _jacobian_from_frames(arm, frames, T[:3, 3])
        dq = J.T @ np.linalg.solve(J @ J.T + damp, err)
        m = np.max(np.abs(dq))
        if m > params.step_clamp:
            dq *= params.step_clamp / m
        q = arm.wrap(q + dq)
    T = _ee_matrix(arm, q)
    ep = np.linalg.norm(pt - T[:3, 3])
    er = np.linalg.norm(rotation_log(Rt @ T[:3, :3].T))
    return q, ep, er


def solve_ik(arm: ArmModel, target: Pose, seeds: int, rng: np.random.Generator, q_init=None, params: IKParams | None = None) -> np.ndarray:
    """Damped least squares from ``q_init`` (if given) and then random seeds.

    Returns a configuration whose end effector matches ``target`` within
    ``params.pos_tol`` / ``params.rot_tol``; raises NoSolution otherwise.
    """
    params = params or IKParams()
    T = target.matrix
    starts = []
    if q_init is not None:
        starts.append(np.asarray(q_init, dtype=float))
    while len(starts) < max(seeds, 1):
        starts.append(arm.random_configuration(rng))
    for q0 in starts[: max(seeds, 1)]:
        q, ep, er = _dls(arm, T, q0, params)
        if ep <= params.pos_tol and er <= params.rot_tol:
            return q
    raise NoSolution(f"{arm.name}: no IK solution from {max(seeds, 1)} seeds")


def solve_object_ik(arm, grasp, target_object: Pose, seeds, rng, q_init=None, params=None) -> np.ndarray:
    """IK for a desired grasped-object pose."""
    return solve_ik(arm, target_object @ grasp.transform, seeds, rng, q_init, params)


def collision_balls_at(arm: ArmModel, q) -> tuple[np.ndarray, np.ndarray]:
    """World centers (b, 3) and radii (b,) of the arm's collision balls."""
    q = arm.check(q)
    return _balls(arm, arm.frames(q))


def _balls(arm: ArmModel, frames):
    centers, radii, links = arm._ball_data
    if len(radii) == 0:
        return centers, radii
    F = np.stack(frames)[links]
    world = np.einsum("bij,bj->bi", F[:, :3, :3], centers) + F[:, :3, 3]
    return world, radii
