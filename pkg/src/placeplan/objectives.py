"""Placement objectives and their numerical gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .se3 import ObjectModel, Pose
from .world import DistanceField


@dataclass(frozen=True)
class Objective:
    """A black-box function of the object pose; larger is better."""

    name: str
    evaluate: Callable[[Pose], float]
    sense: str = "maximize"

    def __call__(self, pose: Pose) -> float:
        return float(self.evaluate(pose))


def clearance(pose: Pose, obj: ObjectModel, field: DistanceField) -> float:
    """Mean axis-ray clearance of the object's body points at ``pose``."""
    return float(np.mean(field.clearance(pose.apply(obj.body_points))))


def objective_max_clearance(obj: ObjectModel, field: DistanceField) -> Objective:
    return Objective("max-clearance", lambda pose: clearance(pose, obj, field))


def objective_min_clearance(obj: ObjectModel, field: DistanceField) -> Objective:
    return Objective("min-clearance", lambda pose: -clearance(pose, obj, field))


_REGISTRY: dict[str, Callable[[ObjectModel, DistanceField], Objective]] = {
    "max-clearance": objective_max_clearance,
    "min-clearance": objective_min_clearance,
}


def register_objective(name: str, factory: Callable[[ObjectModel, DistanceField], Objective]) -> None:
    _REGISTRY[name] = factory


def available_objectives() -> list[str]:
    return sorted(_REGISTRY)


def make_objective(name: str, obj: ObjectModel, field: DistanceField) -> Objective:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown objective {name!r}; choose from {available_objectives()}") from None
    return factory(obj, field)


def objective_bounds(name: str, field: DistanceField) -> tuple[float, float]:
    """Static (lo, hi) range of the built-in objectives, for normalization."""
    cmax = field.max_clearance
    if name == "max-clearance":
        return 0.0, cmax
    if name == "min-clearance":
        return -cmax, 0.0
    return float("nan"), float("nan")


YAW_STEP = 0.05


def numeric_gradient(objective: Objective, pose: Pose, step: float, step_theta: float = YAW_STEP) -> np.ndarray:
    """Central-difference gradient w.r.t. world x, y and yaw e_z.

    Yaw perturbations rotate about the world z-axis through the pose
    position.
    """
    if step <= 0 or step_theta <= 0:
        raise ValueError("step must be positive")
    ht = step_theta
    ex, ey = np.array([step, 0.0, 0.0]), np.array([0.0, step, 0.0])
    gx = (objective(pose.translated(ex)) - objective(pose.translated(-ex))) / (2 * step)
    gy = (objective(pose.translated(ey)) - objective(pose.translated(-ey))) / (2 * step)
    gt = (objective(pose.rotated_about_z(ht)) - objective(pose.rotated_about_z(-ht))) / (2 * ht)
    return np.array([gx, gy, gt])
