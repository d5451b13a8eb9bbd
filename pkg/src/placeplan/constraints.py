"""Placement validity predicates, smooth error terms and the partial-credit
heuristic used as reward for inner hierarchy nodes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .afr import AfrNode, node_theta
from .context import PlacementContext
from .kinematics import ArmModel, Grasp, _balls
from .se3 import ObjectModel, PlacementFace, Pose
from .world import DistanceField, RegionIndex

ERROR_KEYS = ("xi", "region", "sigma", "cf", "arm")
_TINY = np.finfo(float).tiny
_BELOW_ONE = 1.0 - 1e-12


def smooth_hinge(d, eps: float):
    """Smooth one-sided penalty: linear for d < 0, quadratic on [0, eps],
    zero beyond eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    d = np.asarray(d, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.where(d < 0, -d + 0.5 * eps, np.where(d <= eps, (d - eps) ** 2 / (2 * eps), 0.0))
    return float(out) if out.ndim == 0 else out


def _index(regions) -> RegionIndex:
    return regions if isinstance(regions, RegionIndex) else RegionIndex(regions)


def is_stable(pose: Pose, face: PlacementFace, regions, tol: float) -> bool:
    """True iff every face vertex touches some region (regions may differ
    per vertex)."""
    verts = pose.apply(face.vertices)
    return bool(np.all(_index(regions).support_excess(verts, tol) == 0.0))


def is_object_collision_free(pose: Pose, obj: ObjectModel, field: DistanceField, contact_offset: float | None = None) -> bool:
    offset = -0.5 * field.cell_size if contact_offset is None else contact_offset
    return bool(np.all(field.distance(pose.apply(obj.body_points)) > offset))


def is_config_collision_free(arm: ArmModel, q, field: DistanceField, held: tuple[ObjectModel, Grasp] | None = None,
                             contact_offset: float | None = None) -> bool:
    q = arm.check(q)
    frames = arm.frames(q)
    centers, radii = _balls(arm, frames)
    if len(radii) and not np.all(field.distance(centers) > radii):
        return False
    if held is not None:
        obj, grasp = held
        ee = Pose.from_matrix(frames[-1] @ arm.tool.matrix)
        return is_object_collision_free(ee @ grasp.inverse, obj, field, contact_offset)
    return True


def config_checker(ctx: PlacementContext, arm_id: str, with_object: bool = True):
    """Fast q -> bool validity test (limits, balls, held object)."""
    arm, grasp = ctx.arm(arm_id), ctx.grasp(arm_id)
    field = ctx.field
    offset = ctx.tolerances.contact_offset
    centers, radii, links = arm._ball_data
    g_inv = grasp.inverse.matrix
    tool = arm.tool.matrix
    body_h = np.c_[ctx.obj.body_points, np.ones(len(ctx.obj.body_points))]
    lower, upper = arm.lower - 1e-9, arm.upper + 1e-9

    def valid(q) -> bool:
        if np.any(q < lower) or np.any(q > upper):
            return False
        frames = arm.frames(q)
        parts = []
        if len(radii):
            F = np.stack(frames)[links]
            parts.append(np.einsum("bij,bj->bi", F[:, :3, :3], centers) + F[:, :3, 3])
        if with_object:
            O = frames[-1] @ tool @ g_inv
            parts.append(body_h @ O[:3, :].T)
        if not parts:
            return True
        d = field.distance(np.concatenate(parts))
        nb = len(radii)
        if nb and not np.all(d[:nb] > radii):
            return False
        return bool(np.all(d[nb:] > offset))

    return valid


@dataclass(frozen=True)
class ValidityReport:
    """Constraint flags and error terms for one sampled pose (and arm
    configuration, once inverse kinematics has been attempted).

    A flag is true iff its error term is exactly zero. ``in_cell`` tracks
    membership of the pose in the sampled node's cell (the region/yaw term).
    """

    stable: bool
    object_collision_free: bool
    objective_improves: bool
    arm_collision_free: bool
    in_cell: bool
    errors: dict
    xi: float
    arm_term: bool  # whether the arm error enters the heuristic

    @property
    def pose_valid(self) -> bool:
        return self.stable and self.object_collision_free and self.objective_improves

    @property
    def valid(self) -> bool:
        """All placement constraints hold (stability, feasibility, objective
        improvement, collision-free configuration)."""
        return self.pose_valid and self.arm_collision_free

    @property
    def satisfied(self) -> bool:
        return self.valid and self.in_cell

    @property
    def error_vector(self) -> np.ndarray:
        return np.array([self.errors[k] for k in ERROR_KEYS])


def _term(ok: bool, err: float) -> float:
    return 0.0 if ok else max(float(err), _TINY)


def pose_errors(pose: Pose, node: AfrNode, ctx: PlacementContext, xi_best: float, xi: float | None = None) -> dict:
    """Flags and error terms that depend on the object pose only."""
    tol = ctx.tolerances
    if xi is None:
        xi = ctx.objective(pose)
    margin = xi - xi_best
    improves = bool(margin > 0)
    e_xi = _term(improves, smooth_hinge(margin + tol.eps_xi, tol.eps_xi))

    face = node.face
    ref = pose.apply(face.reference_vertex)
    dist_r = float(node.region.distance(ref[None])[0])
    if dist_r <= 1e-9:
        dist_r = 0.0
    theta = node_theta(pose, face)
    out_theta = max(node.theta_lo - theta, theta - node.theta_hi)
    if out_theta <= 1e-9:
        out_theta = min(out_theta, 0.0)
    in_cell = dist_r == 0.0 and out_theta <= 0.0
    e_region = _term(in_cell, smooth_hinge(-dist_r + tol.eps_region, tol.eps_region)
                     + smooth_hinge(-out_theta + tol.eps_theta, tol.eps_theta))

    excess = ctx.region_index.support_excess(pose.apply(face.vertices), tol.stability_tol)
    stable = bool(np.all(excess == 0.0))
    e_sigma = _term(stable, np.sum(smooth_hinge(-excess + tol.eps_region, tol.eps_region)))

    sd = ctx.field.distance(pose.apply(ctx.obj.body_points))
    cf = bool(np.all(sd > tol.contact_offset))
    e_cf = _term(cf, np.sum(smooth_hinge(sd - tol.contact_offset + tol.eps_cf, tol.eps_cf)))
    return {
        "stable": stable, "cf": cf, "improves": improves, "in_cell": in_cell, "xi_value": float(xi),
        "xi": e_xi, "region": e_region, "sigma": e_sigma, "cf_err": e_cf,
    }


def arm_errors(arm_id: str, q, ctx: PlacementContext) -> tuple[bool, float]:
    """(collision-free flag, arm collision cost) for a configuration."""
    tol = ctx.tolerances
    arm, grasp = ctx.arm(arm_id), ctx.grasp(arm_id)
    if not arm.within_limits(q):
        return False, np.inf
    frames = arm.frames(q)
    centers, radii = _balls(arm, frames)
    cost, ok = 0.0, True
    if len(radii):
        d = ctx.field.distance(centers) - radii
        ok = bool(np.all(d > 0))
        cost += float(np.sum(smooth_hinge(d + tol.eps_q, tol.eps_q)))
    held = Pose.from_matrix(frames[-1] @ arm.tool.matrix) @ grasp.inverse
    sd = ctx.field.distance(held.apply(ctx.obj.body_points))
    ok = ok and bool(np.all(sd > tol.contact_offset))
    cost += float(np.sum(smooth_hinge(sd - tol.contact_offset + tol.eps_cf, tol.eps_cf)))
    return ok, _term(ok, cost)


def error_terms(pose: Pose, q, node: AfrNode, ctx: PlacementContext, xi_best: float,
                ik_attempted: bool | None = None, pose_part: dict | None = None) -> ValidityReport:
    """Full validity report for ``pose`` sampled from ``node``.

    ``q`` is the IK solution for the node's arm, or None. With ``q`` None the
    arm term counts as violated (infinite cost) whenever IK was attempted or
    the pose itself is valid; otherwise it is left out of the heuristic.
    """
    if node.depth < 3:
        raise ValueError("error terms need a node at depth >= 3")
    pe = pose_part if pose_part is not None else pose_errors(pose, node, ctx, xi_best)
    pose_ok = pe["stable"] and pe["cf"] and pe["improves"]
    if q is not None:
        arm_ok, e_arm = arm_errors(node.arm_id, np.asarray(q, dtype=float), ctx)
        arm_term = True
    else:
        arm_ok, e_arm = False, np.inf
        arm_term = bool(ik_attempted) or pose_ok
    errors = {"xi": pe["xi"], "region": pe["region"], "sigma": pe["sigma"], "cf": pe["cf_err"], "arm": e_arm}
    return ValidityReport(pe["stable"], pe["cf"], pe["improves"], arm_ok, pe["in_cell"], errors, pe["xi_value"], arm_term)


def heuristic_H(report: ValidityReport, scales=None) -> float:
    """Mean of exp(-e_k / s_k) over the error terms, in [0, 1]; equals 1
    exactly when every term is zero. The arm term is dropped for pose-only
    reports."""
    s = np.ones(5) if scales is None else np.asarray(scales, dtype=float)
    keys = ERROR_KEYS if report.arm_term else ERROR_KEYS[:4]
    terms = []
    for k, key in enumerate(keys):
        e = report.errors[key]
        t = float(np.exp(-e / s[k]))
        if e > 0:
            t = min(t, _BELOW_ONE)
        terms.append(t)
    return float(np.mean(terms))
