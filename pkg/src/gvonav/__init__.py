"""Unicycle navigation among pedestrians: informed RRT* paths, trajectory
tracking and a probabilistic velocity-obstacle filter, plus a small lidar
simulator and benchmark harness."""

from .core import STOP, Action, ActionSpace, Pose, propagate_arc, wrap_angle
from .scenario import Scenario, ScenarioError, load_scenario

__all__ = [
    "Action",
    "ActionSpace",
    "Pose",
    "STOP",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "propagate_arc",
    "wrap_angle",
]

__version__ = "0.1.0"
