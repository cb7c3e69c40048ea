"""Scene, task and noise descriptions with their JSON forms."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any

import jsonschema
import numpy as np

from ..errors import InvalidParameter
from ..nav import OccupancyGrid

POINT_DECIMALS = 5
POSE_DECIMALS = 9


def _canon(a) -> np.ndarray:
    # geometry is stored at file precision so a loaded scene equals the generated one
    return np.round(np.asarray(a, dtype=np.float64), POINT_DECIMALS)


def _pts(a) -> list[list[float]]:
    return _canon(a).tolist()


@dataclass
class PartSpec:
    name: str
    points: np.ndarray
    skill: str | None = None
    verbs: list[str] = field(default_factory=list)
    pressable: bool = False
    grip_modes: list[str] = field(default_factory=list)
    moving: bool = False

    def __post_init__(self):
        self.points = _canon(self.points)

    def to_json(self) -> dict:
        return {"name": self.name, "points": _pts(self.points), "skill": self.skill,
                "verbs": list(self.verbs), "pressable": self.pressable,
                "grip_modes": list(self.grip_modes), "moving": self.moving}

    @classmethod
    def from_json(cls, d: dict) -> "PartSpec":
        return cls(d["name"], np.asarray(d["points"], dtype=np.float64), d.get("skill"),
                   list(d.get("verbs", [])), bool(d.get("pressable", False)),
                   list(d.get("grip_modes", [])), bool(d.get("moving", False)))


@dataclass
class JointSpec:
    """Prismatic joint; ``axis`` is the opening direction in the object frame."""

    axis: list[float]
    range: float

    def to_json(self) -> dict:
        return {"axis": [float(v) for v in self.axis], "range": float(self.range)}


@dataclass
class ObjectSpec:
    name: str
    label: str
    position: list[float]
    body: np.ndarray
    yaw: float = 0.0
    parts: list[PartSpec] = field(default_factory=list)
    graspable: bool = True
    container: bool = False
    support: bool = False
    fixed: bool = False
    supported_by: str | None = None
    joint: JointSpec | None = None
    detach_axis: list[float] | None = None

    def __post_init__(self):
        self.body = _canon(self.body)
        self.position = [round(float(v), POSE_DECIMALS) for v in self.position]
        self.yaw = round(float(self.yaw), POSE_DECIMALS)

    @property
    def occluder(self) -> bool:
        return not self.container

    def to_json(self) -> dict:
        return {
            "name": self.name, "label": self.label,
            "position": list(self.position), "yaw": self.yaw, "body": _pts(self.body),
            "parts": [p.to_json() for p in self.parts],
            "graspable": self.graspable, "container": self.container,
            "support": self.support, "fixed": self.fixed,
            "supported_by": self.supported_by,
            "joint": self.joint.to_json() if self.joint else None,
            "detach_axis": self.detach_axis,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ObjectSpec":
        joint = JointSpec(**d["joint"]) if d.get("joint") else None
        return cls(d["name"], d["label"], [float(v) for v in d["position"]],
                   np.asarray(d["body"], dtype=np.float64), float(d.get("yaw", 0.0)),
                   [PartSpec.from_json(p) for p in d.get("parts", [])],
                   bool(d.get("graspable", True)), bool(d.get("container", False)),
                   bool(d.get("support", False)), bool(d.get("fixed", False)),
                   d.get("supported_by"), joint, d.get("detach_axis"))


@dataclass
class TaskSpec:
    """Goal predicate plus the hints a scripted agent needs.

    ``kind`` is one of contained, pressed, open_fraction, held, detached,
    placed_on. ``scoring`` is ``binary`` or ``per_object``.
    """

    query: str
    kind: str
    args: dict[str, Any]
    scoring: str = "binary"
    family: str = ""
    hints: dict[str, Any] = field(default_factory=dict)

    KINDS = ("contained", "pressed", "open_fraction", "held", "detached", "placed_on")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidParameter(f"unknown task kind {self.kind!r}")
        if self.scoring not in ("binary", "per_object"):
            raise InvalidParameter(f"unknown scoring rule {self.scoring!r}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "TaskSpec":
        return cls(d["query"], d["kind"], dict(d["args"]), d.get("scoring", "binary"),
                   d.get("family", ""), dict(d.get("hints", {})))


@dataclass
class NoiseConfig:
    p_oversegment: float = 0.0
    aff_jitter: float = 0.0
    wrong_part_prob: float = 0.0
    p_slip: float = 0.0

    def __post_init__(self):
        for name in ("p_oversegment", "wrong_part_prob", "p_slip"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParameter(f"{name} must be a probability, got {v}")
        if self.aff_jitter < 0:
            raise InvalidParameter("aff_jitter must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "NoiseConfig":
        unknown = set(d) - {"p_oversegment", "aff_jitter", "wrong_part_prob", "p_slip"}
        if unknown:
            raise InvalidParameter(f"unknown noise fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass
class SceneSpec:
    template: str
    seed: int
    mode: str
    objects: list[ObjectSpec]
    task: TaskSpec
    home_camera: list[float]
    base_pose: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    ee_home: list[float] = field(default_factory=lambda: [0.3, 0.0, 0.5])
    keyframes: list[list[float]] = field(default_factory=list)
    grid: OccupancyGrid | None = None

    def __post_init__(self):
        if self.mode not in ("tabletop", "mobile"):
            raise InvalidParameter(f"unknown mode {self.mode!r}")
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise InvalidParameter("object names must be unique")
        if any(not o.label.strip() for o in self.objects):
            raise InvalidParameter("object labels must be non-empty")
        if self.mode == "mobile":
            if self.grid is None:
                raise InvalidParameter("mobile scenes need an occupancy grid")
            if not 1 <= len(self.keyframes) <= 5:
                raise InvalidParameter("mobile scenes need 1 to 5 keyframes")

    def object(self, name: str) -> ObjectSpec:
        for o in self.objects:
            if o.name == name:
                return o
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "template": self.template, "seed": self.seed, "mode": self.mode,
            "objects": [o.to_json() for o in self.objects],
            "task": self.task.to_json(),
            "home_camera": [round(float(v), 9) for v in self.home_camera],
            "base_pose": [round(float(v), 9) for v in self.base_pose],
            "ee_home": [float(v) for v in self.ee_home],
            "keyframes": [[round(float(v), 9) for v in k] for k in self.keyframes],
            "grid": self.grid.to_json() if self.grid is not None else None,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, doc: dict) -> "SceneSpec":
        try:
            jsonschema.validate(doc, SCENE_SCHEMA)
        except jsonschema.ValidationError as err:
            raise InvalidParameter(f"invalid scene file: {err.message}") from None
        return cls(doc["template"], int(doc["seed"]), doc["mode"],
                   [ObjectSpec.from_json(o) for o in doc["objects"]],
                   TaskSpec.from_json(doc["task"]), list(doc["home_camera"]),
                   list(doc.get("base_pose", [0.0, 0.0, 0.0])),
                   list(doc.get("ee_home", [0.3, 0.0, 0.5])),
                   [list(k) for k in doc.get("keyframes", [])],
                   OccupancyGrid.from_json(doc["grid"]) if doc.get("grid") else None)

    @classmethod
    def loads(cls, text: str) -> "SceneSpec":
        return cls.from_json(json.loads(text))


_POINTS = {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                      "minItems": 3, "maxItems": 3}}
_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_POSE3D = {"type": "array", "items": {"type": "number"}, "minItems": 7, "maxItems": 7}

SCENE_SCHEMA = {
    "type": "object",
    "required": ["template", "seed", "mode", "objects", "task", "home_camera"],
    "properties": {
        "template": {"type": "string"},
        "seed": {"type": "integer"},
        "mode": {"enum": ["tabletop", "mobile"]},
        "home_camera": _POSE3D,
        "base_pose": _VEC3,
        "ee_home": _VEC3,
        "keyframes": {"type": "array", "items": _POSE3D, "maxItems": 5},
        "grid": {"oneOf": [{"type": "null"}, {
            "type": "object",
            "required": ["resolution", "origin", "width", "height", "data"],
            "properties": {"resolution": {"type": "number", "exclusiveMinimum": 0},
                           "origin": {"type": "array", "minItems": 2, "maxItems": 2},
                           "width": {"type": "integer", "minimum": 1},
                           "height": {"type": "integer", "minimum": 1},
                           "data": {"type": "string"}}}]},
        "task": {
            "type": "object", "required": ["query", "kind", "args"],
            "properties": {"query": {"type": "string"},
                           "kind": {"enum": list(TaskSpec.KINDS)},
                           "args": {"type": "object"},
                           "scoring": {"enum": ["binary", "per_object"]}}},
        "objects": {"type": "array", "items": {
            "type": "object",
            "required": ["name", "label", "position", "body"],
            "properties": {
                "name": {"type": "string", "minLength": 1},
                "label": {"type": "string", "minLength": 1},
                "position": _VEC3, "yaw": {"type": "number"},
                "body": _POINTS,
                "parts": {"type": "array", "items": {
                    "type": "object", "required": ["name", "points"],
                    "properties": {"name": {"type": "string"}, "points": _POINTS,
                                   "skill": {"type": ["string", "null"]},
                                   "verbs": {"type": "array", "items": {"type": "string"}}}}},
                "joint": {"oneOf": [{"type": "null"}, {
                    "type": "object", "required": ["axis", "range"],
                    "properties": {"axis": _VEC3,
                                   "range": {"type": "number", "exclusiveMinimum": 0}}}]},
                "detach_axis": {"oneOf": [{"type": "null"}, _VEC3]},
            }}},
    },
}
