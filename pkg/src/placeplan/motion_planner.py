"""Bidirectional RRT with one forward tree and one backward tree per goal.

Goals can be added and removed between calls. Trees of removed goals are
kept; reaching one merges it into the forward tree without reporting
success.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kinematics import PRISMATIC, ArmModel

REVOLUTE_STEP = 0.1
PRISMATIC_STEP = 0.05


class InvalidGoal(ValueError):
    """Raised when a goal configuration is in collision."""


class UnknownGoal(KeyError):
    """Raised for goal ids that do not exist or were already removed."""


@dataclass
class Path:
    waypoints: list
    arm_id: str

    def __len__(self):
        return len(self.waypoints)

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]

    def extended(self, configs) -> Path:
        return Path(list(self.waypoints) + [np.asarray(q, dtype=float) for q in configs], self.arm_id)


class SearchTree:
    """Configurations with parent links, stored in a growing array."""

    def __init__(self, root, kind: str, goal_id: int | None = None):
        root = np.asarray(root, dtype=float)
        self._q = np.empty((64, len(root)))
        self._q[0] = root
        self.parents = [-1]
        self.kind = kind
        self.goal_id = goal_id
        self.live = kind == "forward"

    def __len__(self):
        return len(self.parents)

    @property
    def root(self) -> np.ndarray:
        return self._q[0]

    @property
    def configs(self) -> np.ndarray:
        return self._q[: len(self.parents)]

    def add(self, q, parent: int) -> int:
        n = len(self.parents)
        if n == len(self._q):
            self._q = np.concatenate([self._q, np.empty_like(self._q)])
        self._q[n] = q
        self.parents.append(parent)
        return n

    def nearest(self, q) -> int:
        d = self.configs - q
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def nearest_distance(self, q) -> tuple[int, float]:
        d = self.configs - q
        d2 = np.einsum("ij,ij->i", d, d)
        k = int(np.argmin(d2))
        return k, float(d2[k])

    def branch(self, idx: int) -> list[int]:
        """Indices from ``idx`` up to the root."""
        out = [idx]
        while self.parents[out[-1]] >= 0:
            out.append(self.parents[out[-1]])
        return out


def joint_steps(arm: ArmModel, revolute: float = REVOLUTE_STEP, prismatic: float = PRISMATIC_STEP) -> np.ndarray:
    return np.array([prismatic if j.kind == PRISMATIC else revolute for j in arm.joints])


def edge_free(valid: Callable, qa, qb, steps: np.ndarray, resolution: float = 0.5) -> bool:
    """Check interior configurations of a straight joint-space segment,
    spaced at ``resolution`` steering steps."""
    delta = qb - qa
    n = int(math.ceil(np.linalg.norm(delta / steps) / resolution))
    for k in range(1, n):
        if not valid(qa + delta * (k / n)):
            return False
    return True


def validate_path(path: Path, valid: Callable, steps: np.ndarray, resolution: float = 0.5) -> bool:
    """Re-check of a path: every waypoint and interpolated configuration at
    ``resolution`` steering steps must be valid."""
    wps = [np.asarray(q, dtype=float) for q in path.waypoints]
    if not all(valid(q) for q in wps):
        return False
    return all(edge_free(valid, a, b, steps, resolution) for a, b in zip(wps[:-1], wps[1:]))


class MotionPlanner:
    """Per-arm planning state that persists across :meth:`plan` calls."""

    def __init__(self, arm: ArmModel, q0, valid: Callable, arm_id: str | None = None, max_connect: int = 200):
        self.arm = arm
        self.arm_id = arm_id or arm.name
        self.valid = valid
        self.steps = joint_steps(arm)
        q0 = np.asarray(q0, dtype=float)
        if not valid(q0):
            raise InvalidGoal("start configuration is in collision")
        self.forward = SearchTree(q0, "forward")
        self.backward: list[SearchTree] = []
        self.goals: dict[int, object] = {}
        self._live: set[int] = set()
        self._next_id = 0
        self._rr = 0
        self._phase = 0
        self.max_connect = max_connect
        self.iterations = 0

    # -- goal set --------------------------------------------------------

    def add_goal(self, goal) -> int:
        q = np.asarray(goal.q if hasattr(goal, "q") else goal, dtype=float)
        if not self.valid(q):
            raise InvalidGoal("goal configuration is in collision")
        gid = self._next_id
        self._next_id += 1
        tree = SearchTree(q, "backward", gid)
        tree.live = True
        self.backward.append(tree)
        self.goals[gid] = goal
        self._live.add(gid)
        return gid

    def remove_goal(self, goal_id: int) -> None:
        if goal_id not in self._live:
            raise UnknownGoal(goal_id)
        self._live.discard(goal_id)
        for t in self.backward:
            if t.goal_id == goal_id:
                t.live = False

    @property
    def live_goals(self) -> list[int]:
        return sorted(self._live)

    def node_count(self) -> int:
        return len(self.forward) + sum(len(t) for t in self.backward)

    # -- tree growth -----------------------------------------------------

    def _steer(self, qa, qb):
        delta = qb - qa
        s = np.linalg.norm(delta / self.steps)
        if s <= 1.0:
            return qb.copy(), True
        return qa + delta / s, False

    def _extend(self, tree: SearchTree, target):
        """One step from the nearest node toward ``target``.

        Returns (new index or None, reached target).
        """
        near = tree.nearest(target)
        qn = tree.configs[near]
        q_new, reached = self._steer(qn, target)
        if not self.valid(q_new) or not edge_free(self.valid, qn, q_new, self.steps):
            return None, False
        return tree.add(q_new, near), reached

    def _connect(self, tree: SearchTree, target):
        last = None
        for _ in range(self.max_connect):
            idx, reached = self._extend(tree, target)
            if idx is None:
                return last, False
            last = idx
            if reached:
                return last, True
        return last, False

    def _merge(self, back: SearchTree, b_idx: int, f_idx: int) -> int:
        """Graft ``back`` into the forward tree so that its node ``b_idx``
        coincides with forward node ``f_idx``; returns the forward index of
        the backward tree's root."""
        n = len(back)
        adj = [[] for _ in range(n)]
        for k, p in enumerate(back.parents):
            if p >= 0:
                adj[k].append(p)
                adj[p].append(k)
        mapped = {b_idx: f_idx}
        queue = deque([b_idx])
        cfg = back.configs
        while queue:
            k = queue.popleft()
            for m in adj[k]:
                if m not in mapped:
                    mapped[m] = self.forward.add(cfg[m], mapped[k])
                    queue.append(m)
        self.backward.remove(back)
        return mapped[0]

    def _schedule(self) -> list[SearchTree]:
        seq = []
        for t in self.backward:
            seq.extend([t, t] if t.live else [t])
        return seq

    def _finish(self, back: SearchTree, b_idx: int, f_idx: int):
        root_idx = self._merge(back, b_idx, f_idx)
        if back.live:
            self._live.discard(back.goal_id)
            branch = self.forward.branch(root_idx)[::-1]
            wps = [self.forward.configs[k].copy() for k in branch]
            wps[-1] = back.root.copy()
            return Path(wps, self.arm_id), back.goal_id
        return None

    def plan(self, m_max: int, rng: np.random.Generator):
        """Up to ``m_max`` iterations; returns a Path to a live goal or None.

        The id of the reached goal is kept in ``last_goal_id``.
        """
        self.last_goal_id = None
        if not self._live:
            return None
        lo, hi = self.arm.lower, self.arm.upper
        for _ in range(m_max):
            if not self._live:
                return None
            self.iterations += 1
            q_rand = rng.uniform(lo, hi)
            self._phase ^= 1
            if self._phase:
                f_idx, _ = self._extend(self.forward, q_rand)
                if f_idx is None or not self.backward:
                    continue
                q_new = self.forward.configs[f_idx]
                back = min(self.backward, key=lambda t: t.nearest_distance(q_new)[1])
                b_idx, reached = self._connect(back, q_new)
                if reached:
                    done = self._finish(back, b_idx, f_idx)
                    if done:
                        self.last_goal_id = done[1]
                        return done[0]
            else:
                seq = self._schedule()
                if not seq:
                    continue
                back = seq[self._rr % len(seq)]
                self._rr += 1
                b_idx, _ = self._extend(back, q_rand)
                if b_idx is None:
                    continue
                f_idx, reached = self._connect(self.forward, back.configs[b_idx])
                if reached:
                    done = self._finish(back, b_idx, f_idx)
                    if done:
                        self.last_goal_id = done[1]
                        return done[0]
        return None
