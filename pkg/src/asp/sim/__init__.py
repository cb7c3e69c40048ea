"""Deterministic kinematic simulator standing in for robot, sensors and judge."""

from .judge import check_references, judge
from .scene import JointSpec, NoiseConfig, ObjectSpec, PartSpec, SceneSpec, TaskSpec
from .templates import TEMPLATES, generate_scene, template_names
from .world import SimWorld, camera_pose

__all__ = ["JointSpec", "NoiseConfig", "ObjectSpec", "PartSpec", "SceneSpec", "SimWorld",
           "TaskSpec", "TEMPLATES", "camera_pose", "check_references", "generate_scene",
           "judge", "template_names"]
