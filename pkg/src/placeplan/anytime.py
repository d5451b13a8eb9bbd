"""The anytime placement loop: sample goals, plan motions towards them,
refine the reached placement and publish each strictly better solution."""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .afr import AfrHierarchy, HierarchyParams
from .constraints import config_checker, is_object_collision_free, is_stable
from .context import PlacementContext, Tolerances
from .goal_sampler import DEFAULT_C, GoalSample, MctsGoalSampler, UniformGoalSampler
from .kinematics import IKParams, jacobian, object_pose
from .motion_planner import InvalidGoal, MotionPlanner, Path, edge_free, joint_steps
from .objectives import Objective, make_objective, numeric_gradient
from .se3 import ObjectModel, PlacementFace, Pose, extract_placement_faces
from .world import DistanceField, TargetVolume, VoxelGrid, build_distance_field, extract_regions


class PreconditionFailed(ValueError):
    """Raised when the planner cannot start (start in collision, no faces,
    no regions)."""


@dataclass(frozen=True)
class PlannerConfig:
    g_max: int = 10
    m_max: int = 100
    c: float = DEFAULT_C
    l: int = 4
    min_area: float | None = None
    min_theta: float = math.pi / 16
    tolerances: Tolerances = field(default_factory=Tolerances)
    objective: str = "max-clearance"
    time_limit: float = 30.0
    seed: int = 0
    mu: float = 0.02
    local_opt_steps: int = 100
    grad_tol: float = 1e-5
    grad_step: float | None = None  # None: one grid cell
    sampler: str = "mcts"
    local_opt: bool = True
    ik_seeds: int = 3
    max_iterations: int | None = None  # outer-loop cap; makes runs clock independent

    def __post_init__(self):
        if self.g_max < 1 or self.m_max < 1 or self.local_opt_steps < 1 or self.ik_seeds < 1:
            raise ValueError("budgets must be >= 1")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.time_limit < 0:
            raise ValueError("time_limit must be >= 0")
        if self.sampler not in ("mcts", "uniform"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")

    @property
    def hierarchy_params(self) -> HierarchyParams:
        return HierarchyParams(self.l, self.min_area, self.min_theta)


@dataclass(frozen=True)
class Solution:
    path: Path
    pose: Pose
    xi: float
    wall_time: float
    arm_id: str
    face: PlacementFace | None = None
    iteration: int = 0

    @property
    def n_waypoints(self) -> int:
        return len(self.path)


@dataclass(frozen=True)
class Preprocessed:
    faces: list
    regions: list
    field: DistanceField


def preprocess(grid: VoxelGrid, volume: TargetVolume, obj: ObjectModel) -> Preprocessed:
    faces = extract_placement_faces(obj)
    height = min(f.height for f in faces)
    regions = extract_regions(grid, volume, height)
    return Preprocessed(faces, regions, build_distance_field(grid, volume))


@dataclass
class LocalOptTrace:
    steps: list = field(default_factory=list)  # (mu, dq, xi_before, xi_after)
    rejections: list = field(default_factory=list)  # (mu, failed check)
    stop: str = ""


def optimize_locally(path: Path, ctx: PlacementContext, face: PlacementFace, mu: float = 0.02, max_steps: int = 100,
                     grad_tol: float = 1e-5, grad_step: float | None = None, trace: LocalOptTrace | None = None) -> Path:
    """Follow the objective gradient from the last waypoint via the Jacobian
    pseudo-inverse at the object origin; accepted configurations are
    appended to the path.

    A rejected step halves ``mu`` once; a second rejection ends the search.
    """
    arm_id = path.arm_id
    arm, grasp = ctx.arm(arm_id), ctx.grasp(arm_id)
    valid = config_checker(ctx, arm_id)
    steps = joint_steps(arm)
    h = ctx.field.cell_size if grad_step is None else grad_step
    tol = ctx.tolerances
    q = np.asarray(path.end, dtype=float)
    pose = object_pose(arm, grasp, q)
    xi = ctx.objective(pose)
    added = []
    backtracked = False
    trace = trace if trace is not None else LocalOptTrace()
    trace.stop = "max_steps"
    for _ in range(max_steps):
        g = numeric_gradient(ctx.objective, pose, h)
        if np.linalg.norm(g) < grad_tol:
            trace.stop = "gradient"
            break
        J = jacobian(arm, q, point=pose.position)
        dq = np.linalg.pinv(J) @ np.array([g[0], g[1], 0.0, 0.0, 0.0, g[2]])
        q_new = q + mu * dq
        n = max(1, int(math.ceil(np.linalg.norm((q_new - q) / steps) - 1e-9)))
        chain = [q] + [q + (q_new - q) * (k / n) for k in range(1, n + 1)]
        failed = ""
        if not all(valid(b) and edge_free(valid, a, b, steps) for a, b in zip(chain[:-1], chain[1:])):
            failed = "configuration"
        else:
            pose_new = object_pose(arm, grasp, q_new)
            xi_new = ctx.objective(pose_new)
            if xi_new < xi:
                failed = "objective"
            elif not is_stable(pose_new, face, ctx.region_index, tol.stability_tol):
                failed = "stability"
            elif not is_object_collision_free(pose_new, ctx.obj, ctx.field, tol.contact_offset):
                failed = "object collision"
        if failed:
            trace.rejections.append((mu, failed))
            if backtracked:
                trace.stop = "rejected"
                break
            backtracked = True
            mu *= 0.5
            continue
        added.extend(chain[1:])
        trace.steps.append((mu, mu * dq, xi, xi_new))
        q, pose, xi = q_new, pose_new, xi_new
    return path.extended(added) if added else path


class AnytimePlanner:
    """Planner state driven one outer iteration at a time by :meth:`step`.

    ``planners`` (per-arm motion planners), ``sampler`` and ``xi_best`` are
    exposed for instrumentation.
    """

    def __init__(self, config: PlannerConfig, grid: VoxelGrid, volume: TargetVolume, obj: ObjectModel,
                 arms: dict, grasps: dict, starts: dict | None = None, pre: Preprocessed | None = None,
                 objective: Objective | None = None):
        self.config = config
        pre = pre or preprocess(grid, volume, obj)
        if not pre.faces:
            raise PreconditionFailed("no placement faces")
        if not pre.regions:
            raise PreconditionFailed("no regions")
        self.pre = pre
        objective = objective or make_objective(config.objective, obj, pre.field)
        self.ctx = PlacementContext(obj, pre.faces, pre.regions, pre.field, dict(arms), dict(grasps), objective,
                                    config.tolerances, IKParams(), config.ik_seeds)
        self.hierarchy = AfrHierarchy(list(arms), pre.faces, pre.regions, config.hierarchy_params)
        if config.sampler == "mcts":
            self.sampler = MctsGoalSampler(self.ctx, self.hierarchy, config.c)
        else:
            self.sampler = UniformGoalSampler(self.ctx, self.hierarchy)
        starts = starts or {}
        self.planners: dict[str, MotionPlanner] = {}
        for arm_id, arm in arms.items():
            q0 = np.asarray(starts.get(arm_id, arm.q_rest), dtype=float)
            try:
                self.planners[arm_id] = MotionPlanner(arm, q0, config_checker(self.ctx, arm_id), arm_id)
            except InvalidGoal:
                raise PreconditionFailed(f"start configuration of arm {arm_id!r} is in collision") from None
        self.rng = np.random.default_rng(config.seed)
        self.xi_best = -math.inf
        self.best: Solution | None = None
        self.solutions: list[Solution] = []
        self.iteration = 0
        self._rr = 0
        self._t0 = None

    # -- goal bookkeeping ------------------------------------------------

    def live_goals(self) -> list[tuple[str, int, GoalSample]]:
        return [(a, gid, p.goals[gid]) for a, p in self.planners.items() for gid in p.live_goals]

    def _add_goals(self, goals: list[GoalSample]) -> None:
        for g in goals:
            try:
                self.planners[g.arm_id].add_goal(g)
            except InvalidGoal:
                pass

    def _prune(self) -> None:
        for arm_id, gid, g in self.live_goals():
            if g.xi <= self.xi_best:
                self.planners[arm_id].remove_goal(gid)

    def _next_arm(self) -> str | None:
        ids = list(self.planners)
        for k in range(len(ids)):
            a = ids[(self._rr + k) % len(ids)]
            if self.planners[a].live_goals:
                self._rr = (self._rr + k + 1) % len(ids)
                return a
        return None

    # -- loop ------------------------------------------------------------

    def elapsed(self) -> float:
        return 0.0 if self._t0 is None else time.perf_counter() - self._t0

    def interrupted(self, stop: threading.Event | None = None) -> bool:
        return (stop is not None and stop.is_set()) or self.elapsed() >= self.config.time_limit

    def should_stop(self, stop: threading.Event | None = None) -> bool:
        cap = self.config.max_iterations
        return self.interrupted(stop) or (cap is not None and self.iteration >= cap)

    def step(self, stop: threading.Event | None = None) -> Solution | None:
        """One outer iteration; returns the newly published solution, if any."""
        if self._t0 is None:
            self._t0 = time.perf_counter()
        self.iteration += 1
        cfg = self.config
        self._add_goals(self.sampler.sample_goals(cfg.g_max, self.xi_best, self.rng))
        if self.interrupted(stop):
            return None
        arm_id = self._next_arm()
        if arm_id is None:
            return None
        planner = self.planners[arm_id]
        path = planner.plan(cfg.m_max, self.rng)
        if path is None:
            return None
        goal = planner.goals[planner.last_goal_id]
        if cfg.local_opt and not self.interrupted(stop):
            path = optimize_locally(path, self.ctx, goal.face, cfg.mu, cfg.local_opt_steps, cfg.grad_tol, cfg.grad_step)
        pose = object_pose(self.ctx.arm(arm_id), self.ctx.grasp(arm_id), path.end)
        xi = self.ctx.objective(pose)
        self.xi_best = xi
        self._prune()
        sol = Solution(path, pose, xi, self.elapsed(), arm_id, goal.face, self.iteration)
        self.best = sol
        self.solutions.append(sol)
        return sol

    def run(self, callback: Callable[[Solution], None] | None = None, stop: threading.Event | None = None) -> Solution | None:
        self._t0 = time.perf_counter()
        while not self.should_stop(stop):
            sol = self.step(stop)
            if sol is not None and callback is not None:
                callback(sol)
        return self.best


def run(config: PlannerConfig, grid: VoxelGrid, volume: TargetVolume, obj: ObjectModel, arms: dict, grasps: dict,
        callback: Callable[[Solution], None] | None = None, stop: threading.Event | None = None,
        starts: dict | None = None) -> Solution | None:
    """Run the anytime loop until ``config.time_limit`` or ``stop``; returns the
    last published solution or None."""
    planner = AnytimePlanner(config, grid, volume, obj, arms, grasps, starts)
    return planner.run(callback, stop)
