"""Anytime object placement planning for robot manipulators."""

from .anytime import AnytimePlanner, PlannerConfig, PreconditionFailed, Solution, optimize_locally, preprocess, run
from .context import PlacementContext, Tolerances
from .estimator import PlacementPlanner
from .kinematics import ArmModel, Grasp, Joint
from .motion_planner import MotionPlanner, Path
from .se3 import ObjectModel, Pose
from .world import TargetVolume, VoxelGrid

__all__ = [
    "AnytimePlanner", "PlannerConfig", "PreconditionFailed", "Solution", "optimize_locally", "preprocess", "run",
    "PlacementContext", "Tolerances", "PlacementPlanner", "ArmModel", "Grasp", "Joint", "MotionPlanner", "Path",
    "ObjectModel", "Pose", "TargetVolume", "VoxelGrid",
]
