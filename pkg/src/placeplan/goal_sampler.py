"""Goal sampling over the arm-face-region hierarchy with Monte Carlo tree
search, plus the uniform baseline sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .afr import AfrHierarchy, AfrNode, sample_pose
from .constraints import ValidityReport, error_terms, heuristic_H, is_stable, pose_errors
from .context import PlacementContext
from .kinematics import NoSolution, object_pose, solve_object_ik
from .se3 import PlacementFace, Pose

DEFAULT_C = 1.0 / math.sqrt(2.0)


class Exhausted(RuntimeError):
    """Raised when a hierarchy node that must be descended has no children."""


@dataclass
class _Entry:
    node: AfrNode
    visits: int = 0
    reward: float = 0.0
    expanded: list = field(default_factory=list)
    all_children: list | None = None


@dataclass(frozen=True)
class GoalSample:
    q: np.ndarray
    arm_id: str
    pose: Pose
    xi: float
    face: PlacementFace | None = None


class SamplerTree:
    """Persistent search state: visit counts, accumulated rewards and the
    expanded children of every stored node."""

    def __init__(self, hierarchy: AfrHierarchy):
        self.hierarchy = hierarchy
        root = hierarchy.root()
        self._entries: dict[tuple, _Entry] = {root.path: _Entry(root)}

    @property
    def root(self) -> AfrNode:
        return self._entries[()].node

    def __contains__(self, node: AfrNode) -> bool:
        return node.path in self._entries

    def __len__(self):
        return len(self._entries)

    def nodes(self):
        return [e.node for e in self._entries.values()]

    def visits(self, node: AfrNode) -> int:
        return self._entries[node.path].visits

    def reward(self, node: AfrNode) -> float:
        return self._entries[node.path].reward

    def expanded(self, node: AfrNode) -> list[AfrNode]:
        return self._entries[node.path].expanded

    def all_children(self, node: AfrNode) -> list[AfrNode]:
        e = self._entries[node.path]
        if e.all_children is None:
            e.all_children = self.hierarchy.children(node)
        return e.all_children

    def is_leaf(self, node: AfrNode) -> bool:
        return self.hierarchy.is_leaf(node)

    def add_child(self, node: AfrNode, rng: np.random.Generator) -> AfrNode:
        """Store a uniformly random not-yet-expanded child of ``node``."""
        e = self._entries[node.path]
        kids = self.all_children(node)
        taken = {c.path for c in e.expanded}
        free = [c for c in kids if c.path not in taken]
        if not free:
            raise Exhausted(f"{node!r} has no unexpanded children")
        child = free[int(rng.integers(len(free)))]
        e.expanded.append(child)
        self._entries[child.path] = _Entry(child)
        return child

    def backpropagate(self, node: AfrNode, delta: float) -> None:
        p = node.path
        for d in range(len(p), -1, -1):
            e = self._entries[p[:d]]
            e.visits += 1
            e.reward += delta

    def subtree_visits(self, predicate) -> int:
        """Sum of visits over stored nodes matching ``predicate`` whose
        parent does not match (i.e. subtree roots)."""
        total = 0
        for path, e in self._entries.items():
            if predicate(e.node) and (not path or not predicate(self._entries[path[:-1]].node)):
                total += e.visits
        return total

    def stats_by_depth(self) -> dict[int, dict[str, float]]:
        out: dict[int, dict[str, float]] = {}
        for e in self._entries.values():
            s = out.setdefault(e.node.depth, {"nodes": 0, "visits": 0, "reward": 0.0})
            s["nodes"] += 1
            s["visits"] += e.visits
            s["reward"] += e.reward
        return dict(sorted(out.items()))


def ucb1_score(child_reward: float, child_visits: int, parent_visits: int, c: float) -> float:
    return child_reward / child_visits + c * math.sqrt(2.0 * math.log(parent_visits) / child_visits)


def new_child_score(tree: SamplerTree, node: AfrNode, c: float) -> float:
    """Score for expanding a new child: the siblings' mean reward rate plus
    an exploration bonus with the sibling count in place of visits."""
    kids = tree.expanded(node)
    j = len(kids)
    if j >= len(tree.all_children(node)):
        return -math.inf
    if j == 0:
        return math.inf
    mean = sum(tree.reward(i) / tree.visits(i) for i in kids) / j
    return mean + c * math.sqrt(2.0 * math.log(tree.visits(node)) / j)


def select_child(tree: SamplerTree, node: AfrNode, c: float, rng: np.random.Generator) -> AfrNode:
    kids = tree.expanded(node)
    if not kids:
        if not tree.all_children(node):
            raise Exhausted(f"{node!r} has no children")
        return tree.add_child(node, rng)
    nv = tree.visits(node)
    scores = [ucb1_score(tree.reward(i), tree.visits(i), nv, c) if tree.visits(i) > 0 else math.inf for i in kids]
    u_new = new_child_score(tree, node, c)
    if all(u_new > u for u in scores):
        return tree.add_child(node, rng)
    return kids[int(np.argmax(scores))]


def select_node(tree: SamplerTree, c: float, rng: np.random.Generator) -> AfrNode:
    n = tree.root
    for _ in range(3):
        n = select_child(tree, n, c, rng)
    while tree.visits(n) > 0 and not tree.is_leaf(n):
        n = select_child(tree, n, c, rng)
    return n


def reward(report: ValidityReport, is_leaf: bool, scales=None) -> float:
    if not is_leaf:
        return heuristic_H(report, scales)
    return 1.0 if report.valid else 0.0


def update(tree: SamplerTree, node: AfrNode, report: ValidityReport, is_leaf: bool, scales=None) -> float:
    delta = reward(report, is_leaf, scales)
    tree.backpropagate(node, delta)
    return delta


def evaluate_sample(node: AfrNode, pose: Pose, ctx: PlacementContext, xi_best: float, rng: np.random.Generator,
                    q_init: dict | None = None):
    """Check a sampled pose; solve IK when the pose constraints hold.

    Returns (report, goal or None).
    """
    pe = pose_errors(pose, node, ctx, xi_best)
    if not (pe["stable"] and pe["cf"] and pe["improves"]):
        return error_terms(pose, None, node, ctx, xi_best, ik_attempted=False, pose_part=pe), None
    arm_id = node.arm_id
    arm, grasp = ctx.arm(arm_id), ctx.grasp(arm_id)
    seed = arm.q_rest if q_init is None else q_init.get(arm_id, arm.q_rest)
    try:
        q = solve_object_ik(arm, grasp, pose, ctx.ik_seeds, rng, q_init=seed, params=ctx.ik_params)
    except NoSolution:
        return error_terms(pose, None, node, ctx, xi_best, ik_attempted=True, pose_part=pe), None
    report = error_terms(pose, q, node, ctx, xi_best, ik_attempted=True, pose_part=pe)
    if not report.valid:
        return report, None
    # the reached pose differs from the sample by the IK residual; re-check it
    reached = object_pose(arm, grasp, q)
    xi = ctx.objective(reached)
    if not (xi > xi_best and is_stable(reached, node.face, ctx.region_index, ctx.tolerances.stability_tol)):
        errors = dict(report.errors, arm=max(report.errors["arm"], np.finfo(float).tiny))
        report = ValidityReport(report.stable, report.object_collision_free, report.objective_improves, False,
                                report.in_cell, errors, report.xi, True)
        return report, None
    return report, GoalSample(q, arm_id, reached, xi, node.face)


class MctsGoalSampler:
    """Keeps the search tree across calls to :meth:`sample_goals`."""

    variant = "mcts"

    def __init__(self, ctx: PlacementContext, hierarchy: AfrHierarchy, c: float = DEFAULT_C):
        self.ctx = ctx
        self.hierarchy = hierarchy
        self.tree = SamplerTree(hierarchy)
        self.c = c
        self.n_samples = 0

    def sample_goals(self, g_max: int, xi_best: float, rng: np.random.Generator) -> list[GoalSample]:
        return sample_goals(self.tree, g_max, xi_best, self.ctx, rng, c=self.c, _counter=self)


class UniformGoalSampler:
    """Baseline: a uniformly random (arm, face, region) cell with the full
    yaw range each iteration, without any search tree."""

    variant = "uniform"

    def __init__(self, ctx: PlacementContext, hierarchy: AfrHierarchy):
        self.ctx = ctx
        self.hierarchy = hierarchy
        self.n_samples = 0
        self._cells = None

    def _depth3(self) -> list[AfrNode]:
        if self._cells is None:
            h = self.hierarchy
            out = []
            for a in h.children(h.root()):
                for f in h.children(a):
                    out.extend(h.children(f))
            self._cells = out
        return self._cells

    def sample_goals(self, g_max: int, xi_best: float, rng: np.random.Generator) -> list[GoalSample]:
        cells = self._depth3()
        goals = []
        for _ in range(g_max):
            node = cells[int(rng.integers(len(cells)))]
            _, goal = evaluate_sample(node, sample_pose(node, rng), self.ctx, xi_best, rng)
            self.n_samples += 1
            if goal is not None:
                goals.append(goal)
        return goals


def sample_goals(tree: SamplerTree, g_max: int, xi_best: float, ctx: PlacementContext, rng: np.random.Generator,
                 c: float = DEFAULT_C, _counter=None) -> list[GoalSample]:
    """Run ``g_max`` select / sample / validate / update iterations and return
    the valid goals found. ``tree`` is updated in place."""
    if g_max < 1:
        raise ValueError("g_max must be >= 1")
    scales = ctx.tolerances.scales
    goals = []
    for _ in range(g_max):
        node = select_node(tree, c, rng)
        pose = sample_pose(node, rng)
        report, goal = evaluate_sample(node, pose, ctx, xi_best, rng)
        update(tree, node, report, tree.is_leaf(node), scales)
        if _counter is not None:
            _counter.n_samples += 1
        if goal is not None:
            goals.append(goal)
    return goals
