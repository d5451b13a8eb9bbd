"""The arm-face-region hierarchy over parameterized placement poses.

Depth 1 picks an arm, depth 2 a placement face, depth 3 a placement region.
Nodes below depth 3 split the parent's region at its mean x/y into up to four
quadrants and its yaw interval into ``l`` equal parts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .se3 import PlacementFace, Pose, pose_from_parameters
from .world import PlacementRegion, sample_point, split_region

TWO_PI = 2.0 * np.pi


class LeafNode(ValueError):
    """Raised when asking for the children of a leaf."""


@dataclass(frozen=True)
class HierarchyParams:
    l: int = 4
    min_area: float | None = None  # None: four grid cells
    min_theta: float = np.pi / 16

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("l must be >= 1")
        if self.min_area is not None and self.min_area <= 0:
            raise ValueError("min_area must be positive")
        if self.min_theta <= 0:
            raise ValueError("min_theta must be positive")


@dataclass(frozen=True, eq=False)
class AfrNode:
    """A cell of the hierarchy, identified by its child-index path."""

    path: tuple = ()
    arm_id: str | None = None
    face: PlacementFace | None = field(default=None, repr=False)
    region: PlacementRegion | None = field(default=None, repr=False)
    theta_lo: float = 0.0
    theta_hi: float = TWO_PI

    @property
    def depth(self) -> int:
        return len(self.path)

    @property
    def face_id(self) -> int | None:
        return None if self.face is None else self.face.face_id

    @property
    def parent_path(self) -> tuple:
        return self.path[:-1]

    def __eq__(self, other):
        return isinstance(other, AfrNode) and self.path == other.path

    def __hash__(self):
        return hash(self.path)

    def __repr__(self):
        bits = [f"path={self.path}"]
        if self.arm_id is not None:
            bits.append(f"arm={self.arm_id}")
        if self.face is not None:
            bits.append(f"face={self.face.face_id}")
        if self.region is not None:
            bits.append(f"region={self.region.region_id}[{len(self.region)}]")
            bits.append(f"theta=[{self.theta_lo:.3f}, {self.theta_hi:.3f})")
        return f"AfrNode({', '.join(bits)})"


def root() -> AfrNode:
    return AfrNode()


class AfrHierarchy:
    """Lazy child enumeration over fixed arms, faces and regions."""

    def __init__(self, arm_ids, faces, regions, params: HierarchyParams | None = None):
        self.arm_ids = list(arm_ids)
        self.faces = list(faces)
        self.regions = list(regions)
        self.params = params or HierarchyParams()
        cs = self.regions[0].cell_size if self.regions else 0.0
        self.min_area = self.params.min_area if self.params.min_area is not None else 4 * cs * cs

    def root(self) -> AfrNode:
        return root()

    def is_leaf(self, node: AfrNode) -> bool:
        if node.depth < 3:
            return False
        return node.region.area <= self.min_area * (1 + 1e-9) or (node.theta_hi - node.theta_lo) <= self.params.min_theta * (1 + 1e-9)

    def children(self, node: AfrNode) -> list[AfrNode]:
        d = node.depth
        p = node.path
        if d == 0:
            return [AfrNode(p + (k,), a) for k, a in enumerate(self.arm_ids)]
        if d == 1:
            return [AfrNode(p + (k,), node.arm_id, f) for k, f in enumerate(self.faces)]
        if d == 2:
            return [AfrNode(p + (k,), node.arm_id, node.face, r) for k, r in enumerate(self.regions)]
        if self.is_leaf(node):
            raise LeafNode(repr(node))
        l = self.params.l
        edges = np.linspace(node.theta_lo, node.theta_hi, l + 1)
        out = []
        for sub in split_region(node.region):
            for a, b in zip(edges[:-1], edges[1:]):
                out.append(AfrNode(p + (len(out),), node.arm_id, node.face, sub, float(a), float(b)))
        return out

    def sample_pose(self, node: AfrNode, rng: np.random.Generator) -> Pose:
        return sample_pose(node, rng)

    def max_depth(self) -> int:
        """Upper bound on node depth implied by the leaf thresholds."""
        if not self.regions:
            return 3
        area0 = max(r.area for r in self.regions)
        da = int(np.ceil(np.log(max(area0 / self.min_area, 1.0)) / np.log(4)))
        if self.params.l == 1:
            return 3 + da
        dt = int(np.ceil(np.log(max(TWO_PI / self.params.min_theta, 1.0)) / np.log(self.params.l)))
        return 3 + da + dt


def children(node: AfrNode, hierarchy: AfrHierarchy) -> list[AfrNode]:
    return hierarchy.children(node)


def is_leaf(node: AfrNode, hierarchy: AfrHierarchy) -> bool:
    return hierarchy.is_leaf(node)


def node_theta(pose: Pose, face: PlacementFace) -> float:
    """Recover the yaw parameter in [0, 2pi) of a pose built on ``face``."""
    M = pose.rotation @ face.ref_transform.rotation.T
    return float(np.arctan2(M[1, 0], M[0, 0]) % TWO_PI)


def sample_pose(node: AfrNode, rng: np.random.Generator) -> Pose:
    if node.depth < 3:
        raise ValueError("only nodes at depth >= 3 define a pose set")
    x, y, z = sample_point(node.region, rng)
    theta = node.theta_lo + rng.random() * (node.theta_hi - node.theta_lo)
    return pose_from_parameters(z, x, y, theta, node.face)
