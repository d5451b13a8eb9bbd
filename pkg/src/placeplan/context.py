"""Shared, read-only problem data handed to the planning components."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .kinematics import ArmModel, Grasp, IKParams
from .objectives import Objective
from .se3 import ObjectModel
from .world import DistanceField, RegionIndex


@dataclass(frozen=True)
class Tolerances:
    """Validity tolerances and error-function constants.

    ``None`` entries resolve to one grid cell (``contact_offset`` to minus half
    a cell) through :meth:`resolve`.
    """

    stability_tol: float = 2e-3
    contact_offset: float | None = None
    eps_region: float | None = None
    eps_theta: float | None = None
    eps_cf: float | None = None
    eps_q: float | None = None
    eps_xi: float | None = None
    scales: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)  # xi, region, sigma, cf, arm

    def resolve(self, cell_size: float) -> Tolerances:
        def pick(v, default):
            return default if v is None else float(v)

        return replace(
            self,
            contact_offset=pick(self.contact_offset, -0.5 * cell_size),
            eps_region=pick(self.eps_region, cell_size),
            eps_theta=pick(self.eps_theta, cell_size),
            eps_cf=pick(self.eps_cf, cell_size),
            eps_q=pick(self.eps_q, cell_size),
            eps_xi=pick(self.eps_xi, cell_size),
            scales=tuple(float(s) for s in self.scales),
        )


@dataclass(frozen=True, eq=False)
class PlacementContext:
    obj: ObjectModel
    faces: list
    regions: list
    field: DistanceField
    arms: dict  # arm id -> ArmModel
    grasps: dict  # arm id -> Grasp
    objective: Objective
    tolerances: Tolerances = field(default_factory=Tolerances)
    ik_params: IKParams = field(default_factory=IKParams)
    ik_seeds: int = 3

    def __post_init__(self):
        object.__setattr__(self, "tolerances", self.tolerances.resolve(self.field.cell_size))
        object.__setattr__(self, "_index", RegionIndex(self.regions))
        missing = set(self.arms) - set(self.grasps)
        if missing:
            raise ValueError(f"no grasp for arms {sorted(missing)}")

    @property
    def region_index(self) -> RegionIndex:
        return self._index

    @property
    def arm_ids(self) -> list[str]:
        return list(self.arms)

    def arm(self, arm_id: str) -> ArmModel:
        return self.arms[arm_id]

    def grasp(self, arm_id: str) -> Grasp:
        return self.grasps[arm_id]
