"""Estimator-style facade: ``fit`` preprocesses a scene and object,
``plan`` runs the anytime loop."""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator

from .anytime import AnytimePlanner, PlannerConfig, Solution, preprocess
from .assets import Scene
from .context import Tolerances


def check_scene(scene) -> Scene:
    if not isinstance(scene, Scene):
        raise TypeError(f"expected a Scene, got {type(scene).__name__}")
    return scene


def check_arms(arms: dict, grasps: dict) -> None:
    if not arms:
        raise ValueError("at least one arm is required")
    missing = sorted(set(arms) - set(grasps))
    if missing:
        raise ValueError(f"arms without a grasp: {missing}")
    for arm_id, arm in arms.items():
        if arm.q_rest is None:
            raise ValueError(f"arm {arm_id!r} has no start configuration")


class PlacementPlanner(BaseEstimator):
    """Hyper-parameters mirror :class:`PlannerConfig`; fitted attributes end
    in an underscore."""

    def __init__(self, objective="max-clearance", time_limit=30.0, seed=0, sampler="mcts", local_opt=True, g_max=10,
                 m_max=100, c=1 / np.sqrt(2), l=4, mu=0.02, tolerances=None):
        self.objective = objective
        self.time_limit = time_limit
        self.seed = seed
        self.sampler = sampler
        self.local_opt = local_opt
        self.g_max = g_max
        self.m_max = m_max
        self.c = c
        self.l = l
        self.mu = mu
        self.tolerances = tolerances

    def _config(self, **over) -> PlannerConfig:
        kw = {k: v for k, v in self.get_params().items() if k != "tolerances"}
        kw["tolerances"] = self.tolerances or Tolerances()
        return dataclasses.replace(PlannerConfig(**kw), **over)

    def fit(self, scene, obj, arms: dict, grasps: dict):
        scene = check_scene(scene)
        check_arms(arms, grasps)
        self._config()  # validates the hyper-parameters
        self.scene_ = scene
        self.object_ = obj
        self.arms_ = dict(arms)
        self.grasps_ = dict(grasps)
        self.preprocessed_ = preprocess(scene.grid, scene.volume, obj)
        self.n_faces_ = len(self.preprocessed_.faces)
        self.n_regions_ = len(self.preprocessed_.regions)
        return self

    def _check_fitted(self):
        if not hasattr(self, "preprocessed_"):
            raise RuntimeError("call fit() before planning")

    def plan(self, time_limit: float | None = None, callback=None, stop=None) -> Solution | None:
        self._check_fitted()
        over = {} if time_limit is None else {"time_limit": time_limit}
        s = self.scene_
        self.planner_ = AnytimePlanner(self._config(**over), s.grid, s.volume, self.object_, self.arms_, self.grasps_,
                                       pre=self.preprocessed_)
        self.solution_ = self.planner_.run(callback, stop)
        self.solutions_ = list(self.planner_.solutions)
        return self.solution_

    def predict(self, time_limit: float | None = None):
        """Object pose of the best placement found, or None."""
        sol = self.plan(time_limit)
        return None if sol is None else sol.pose
