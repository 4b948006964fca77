"""Synthetic indoor world: scenes, rendering, kinematics and ground-truth geodesics."""
from .camera import AgentState, CameraModel
from .generate import build_beacon_scene, build_decoy_scene, decoy_instance, generate_scene
from .geodesic import NavGrid, geodesic_distance, geodesic_to_set, nav_grid
from .kinematics import Action, StepResult, step
from .render import Observation, render
from .scene import Box, SceneObject, SceneSpec, Task

__all__ = [
    "Action", "AgentState", "Box", "CameraModel", "NavGrid", "Observation", "SceneObject", "SceneSpec",
    "StepResult", "Task", "build_beacon_scene", "build_decoy_scene", "decoy_instance", "generate_scene",
    "geodesic_distance", "geodesic_to_set", "nav_grid", "render", "step",
]
