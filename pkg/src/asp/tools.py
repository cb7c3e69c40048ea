"""Agent-facing tool layer.

The layer owns the symbolic state (held object plus inventory of grounded
keys), binds keys to map objects and runs every tool as a single
sequential call returning a :class:`ToolOutput`. Skill tools may invalidate
the map; the next retrieval rebuilds it from a fresh home-pose frame.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import geom, nav
from .affordance import (AffordanceBackend, AffordanceConfig, detect_affordances, propose_skill,
                         whole_object_affordance)
from .errors import (AffordanceDetectionFailed, ASPError, BackendError, InvalidParameter,
                     NavigationFailed, NoHorizontalNormal, NoValidPose, StaleMap)
from .scene_map import MapConfig, Object, ObjectMap, build_from_frame, integrate_keyframe
from .semantics import DEFAULT_K, DEFAULT_N_VIEWS, EmbeddingProvider, RelevanceClassifier, top_k
from .skills import (NEEDS_EMPTY_HAND, NEEDS_HELD, OBJECT_SKILLS, GraspProposer, MotionChecker,
                     SkillConfig, SkillKind, SkillResult, context_cloud, skill_drop, skill_grasp,
                     skill_grasp_part, skill_hook_pull, skill_pinch_pull, skill_place,
                     skill_tip_push)

NOT_IN_INVENTORY = "object not in inventory"
NO_OBJECTS = "no objects found for query"
RETRY_LIMIT = "retry limit reached"
REMAP_NOTE = ("the object map was invalidated and the inventory cleared; "
              "call object_retrieval to ground objects again")

# skills after which tabletop geometry has changed and the map must be rebuilt
_MOVES_SCENE = frozenset({SkillKind.GRASP, SkillKind.GRASP_PART, SkillKind.PLACE, SkillKind.DROP,
                          SkillKind.PINCH_PULL, SkillKind.HOOK_PULL})


def sanitize(query: str) -> str:
    s = re.sub(r"\s+", "_", query.strip().lower())
    s = re.sub(r"[^a-z0-9_]", "", s)
    s = re.sub(r"_+", "_", s).strip("_")
    return s or "object"


@dataclass
class State:
    held_object: str | None = None
    inventory: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"held_object": self.held_object, "inventory": list(self.inventory)}

    def violations(self) -> list[str]:
        out = []
        if self.held_object is not None and self.held_object in self.inventory:
            out.append("held object is also in the inventory")
        if len(set(self.inventory)) != len(self.inventory):
            out.append("inventory has duplicate keys")
        return out


@dataclass
class ToolOutput:
    success: bool
    feedback_msg: str
    output: Any = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.success and not self.feedback_msg:
            self.feedback_msg = "tool failed"

    def output_json(self):
        if isinstance(self.output, State):
            return self.output.to_json()
        if isinstance(self.output, (bool, np.bool_)):
            return bool(self.output)
        if isinstance(self.output, (float, np.floating)):
            return float(self.output)
        return self.output


@dataclass
class KeyBinding:
    key: str
    object_id: int
    origin_query: str
    map_name: str = "main"
    main_id: int = -1


@dataclass
class Backends:
    embedder: EmbeddingProvider
    classifier: RelevanceClassifier
    affordance: AffordanceBackend
    proposer: GraspProposer
    checker: MotionChecker


@dataclass
class ToolConfig:
    mode: str = "tabletop"
    no_aff: bool = False
    k: int = DEFAULT_K
    n_views: int = DEFAULT_N_VIEWS
    max_failures: int = 3
    redetect_radius: float = 0.5
    map: MapConfig = field(default_factory=MapConfig)
    skill: SkillConfig = field(default_factory=SkillConfig)
    nav: nav.NavConfig = field(default_factory=nav.NavConfig)
    aff: AffordanceConfig = field(default_factory=AffordanceConfig)

    def __post_init__(self):
        if self.mode not in ("tabletop", "mobile"):
            raise InvalidParameter(f"unknown mode {self.mode!r}")


class _Fail(ASPError):
    """Internal: abort a tool with a user-facing message."""


class ToolLayer:
    def __init__(self, world, backends: Backends, cfg: ToolConfig | None = None):
        self.world = world
        self.backends = backends
        self.cfg = cfg or ToolConfig()
        self.state = State()
        self.bindings: dict[str, KeyBinding] = {}
        self.maps: dict[str, ObjectMap] = {"main": ObjectMap(stale=True)}
        self.counters: Counter = Counter()
        self.failures: Counter = Counter()
        self.remaps = 0
        self._local_maps = 0
        self.tools: dict[str, Callable[..., ToolOutput]] = {
            "object_retrieval": self.object_retrieval,
            "distance_between": self.distance_between,
            "distance_to": self.distance_to,
            "left_of": self.left_of,
            "right_of": self.right_of,
            "size_of": self.size_of,
            "interact": self.interact,
            "go_to": self.go_to,
        }
        if self.cfg.mode == "mobile":
            self.maps["main"] = self._keyframe_map()

    # plumbing -------------------------------------------------------------

    @property
    def main_map(self) -> ObjectMap:
        return self.maps["main"]

    def call(self, name: str, args: dict) -> ToolOutput:
        """Run one tool; package errors become failed outputs, never exceptions."""
        fn = self.tools.get(name)
        if fn is None:
            return ToolOutput(False, f"unknown tool {name!r}")
        try:
            return fn(**args)
        except TypeError as err:
            return ToolOutput(False, f"bad arguments for {name}: {err}")
        except _Fail as err:
            return ToolOutput(False, str(err), self._state_copy())
        except StaleMap as err:
            return ToolOutput(False, f"stale map: {err}")
        except BackendError as err:
            return ToolOutput(False, f"backend failure: {err}")
        except ASPError as err:
            return ToolOutput(False, f"{type(err).__name__}: {err}")

    def _state_copy(self) -> State:
        return State(self.state.held_object, list(self.state.inventory))

    def _keyframe_map(self) -> ObjectMap:
        m = ObjectMap()
        for cam in self.world.keyframe_cameras():
            m = integrate_keyframe(m, self.world.render(cam), self.backends.embedder, self.cfg.map)
        return m

    def _require_fresh(self) -> None:
        if self.main_map.stale:
            raise StaleMap("the object map is out of date after a scene change; "
                           "call object_retrieval to rebuild it")

    def _binding(self, key: str) -> KeyBinding:
        if not isinstance(key, str) or key not in self.state.inventory:
            raise _Fail(f"{NOT_IN_INVENTORY}: {key!r}")
        return self.bindings[key]

    def _object(self, key: str) -> tuple[Object, ObjectMap]:
        b = self._binding(key)
        m = self.maps[b.map_name]
        return m.get(b.object_id), m

    def _new_key(self, query: str) -> str:
        base = sanitize(query)
        key = f"{base}_{self.counters[base]}"
        self.counters[base] += 1
        return key

    def trigger_remap(self, reason: str) -> None:
        """Invalidate the map; drop inventory and bindings, keep the held object."""
        self.main_map.stale = True
        self.state.inventory = []
        self.bindings = {}
        self.maps = {"main": self.main_map}
        self.remaps += 1
        self.last_remap_reason = reason

    def _observer(self) -> geom.Pose3D:
        if self.cfg.mode == "mobile":
            return self.world.base_camera()
        return self.world.home_camera()

    def _reference_point(self) -> np.ndarray:
        if self.cfg.mode == "mobile":
            b = self.world.base_pose
            return np.array([b.x, b.y, 0.0])
        return np.asarray(self.world.ee, dtype=np.float64)

    # retrieval ------------------------------------------------------------

    def _rebuild(self) -> None:
        self.world.move_to_home()
        frame = self.world.render(self.world.home_camera())
        self.maps["main"] = build_from_frame(frame, self.backends.embedder, self.cfg.map)

    def _relevant(self, m: ObjectMap, query: str) -> list[int]:
        qv = self.backends.embedder.embed_text(query)
        out = []
        for oid, _ in top_k(m, qv, self.cfg.k):
            obj = m.get(oid)
            if self.backends.classifier.is_relevant(obj.crops[:self.cfg.n_views], query):
                out.append(oid)
        return out

    def object_retrieval(self, query: str) -> ToolOutput:
        if not isinstance(query, str) or not query.strip():
            raise _Fail("query must be a non-empty string")
        rebuilt = False
        if self.main_map.stale:
            if self.cfg.mode == "mobile":
                raise StaleMap("the room map cannot be rebuilt in mobile mode")
            self._rebuild()
            rebuilt = True
        claimed = {b.main_id for b in self.bindings.values()}
        found, known, keys = [], [], []
        for oid in self._relevant(self.main_map, query):
            if oid in claimed:
                bound = [b.key for b in self.bindings.values()
                         if b.main_id == oid and b.key in self.state.inventory]
                known.extend(bound)
                keys.extend(bound)
                continue
            key = self._new_key(query)
            self.bindings[key] = KeyBinding(key, oid, query, "main", oid)
            self.state.inventory.append(key)
            found.append(key)
            keys.append(key)
        if found:
            msg = f"found {len(found)} object(s) for {query!r}: {', '.join(found)}"
        elif known:
            msg = f"no new objects for {query!r}; already grounded as {', '.join(sorted(known))}"
        else:
            msg = f"{NO_OBJECTS} {query!r}"
        return ToolOutput(True, msg, self._state_copy(),
                          {"found": found, "keys": keys, "rebuilt": rebuilt})

    # spatial --------------------------------------------------------------

    def distance_between(self, a: str, b: str) -> ToolOutput:
        self._require_fresh()
        oa, _ = self._object(a)
        ob, _ = self._object(b)
        d = float(np.linalg.norm(oa.centroid - ob.centroid))
        return ToolOutput(True, f"{a} and {b} are {d:.3f} m apart", d)

    def distance_to(self, a: str) -> ToolOutput:
        self._require_fresh()
        oa, _ = self._object(a)
        d = float(np.linalg.norm(oa.centroid - self._reference_point()))
        return ToolOutput(True, f"{a} is {d:.3f} m from the robot", d)

    def _lateral(self, obj: Object) -> float:
        cam = self._observer()
        left = cam.rotation[:, 1]
        return float(np.dot(obj.centroid - cam.position, left))

    def left_of(self, a: str, b: str) -> ToolOutput:
        self._require_fresh()
        oa, _ = self._object(a)
        ob, _ = self._object(b)
        res = self._lateral(oa) > self._lateral(ob)
        return ToolOutput(True, f"{a} is {'' if res else 'not '}left of {b}", res)

    def right_of(self, a: str, b: str) -> ToolOutput:
        self._require_fresh()
        oa, _ = self._object(a)
        ob, _ = self._object(b)
        res = self._lateral(oa) < self._lateral(ob)
        return ToolOutput(True, f"{a} is {'' if res else 'not '}right of {b}", res)

    def size_of(self, a: str) -> ToolOutput:
        self._require_fresh()
        oa, _ = self._object(a)
        s = float(np.max(geom.aabb_extents(oa.point_cloud)))
        return ToolOutput(True, f"{a} is {s:.3f} m across its largest side", s)

    # interaction ----------------------------------------------------------

    def _choose_affordance(self, obj: Object, action: str, use_aff: bool):
        be = self.backends.affordance
        if use_aff:
            affs = detect_affordances(obj, action, be, self.cfg.aff)
            if not affs:
                return None
            return affs[0]
        skill = propose_skill(obj, action, be, self.cfg.aff)
        return None if skill is None else whole_object_affordance(obj, skill)

    def _run_skill(self, skill: SkillKind, obj: Object, aff_cloud: np.ndarray,
                   m: ObjectMap) -> SkillResult:
        b, w, sc = self.backends, self.world, self.cfg.skill
        if skill in (SkillKind.GRASP, SkillKind.GRASP_PART):
            ctx = context_cloud([o.point_cloud for o in m.objects], obj.point_cloud,
                                sc.context_margin)
            if skill is SkillKind.GRASP:
                return skill_grasp(obj.point_cloud, w, b.proposer, b.checker, sc, ctx)
            return skill_grasp_part(obj.point_cloud, aff_cloud, w, b.proposer, b.checker, sc, ctx)
        if skill is SkillKind.PLACE:
            return skill_place(obj.point_cloud, w, b.checker, sc)
        if skill is SkillKind.DROP:
            return skill_drop(obj.point_cloud, w, b.checker, sc)
        if skill is SkillKind.TIP_PUSH:
            return skill_tip_push(obj.point_cloud, aff_cloud, w, b.checker, sc)
        if skill is SkillKind.PINCH_PULL:
            return skill_pinch_pull(obj.point_cloud, aff_cloud, w, b.checker, sc)
        return skill_hook_pull(obj.point_cloud, aff_cloud, w, b.checker, sc)

    def interact(self, obj: str, action: str) -> ToolOutput:
        self._require_fresh()
        if not isinstance(action, str) or not action.strip():
            raise _Fail("action must be a non-empty string")
        target, m = self._object(obj)
        use_aff = not (self.cfg.no_aff and self.cfg.mode == "tabletop")
        try:
            aff = self._choose_affordance(target, action, use_aff)
        except AffordanceDetectionFailed as err:
            raise _Fail(f"affordance detection failed: {err}") from err
        if aff is None:
            raise _Fail(f"no affordance on {obj} matches the action {action!r}")
        skill = aff.skill
        held = self.state.held_object
        if skill in NEEDS_EMPTY_HAND and held is not None:
            raise _Fail(f"precondition violated: {skill.value} requires held_object to be none "
                        f"(currently holding {held})")
        if skill in NEEDS_HELD and held is None:
            raise _Fail(f"precondition violated: {skill.value} requires a held object "
                        f"(held_object is none)")
        if self.failures[(skill.value, obj)] >= self.cfg.max_failures:
            raise _Fail(f"{RETRY_LIMIT}: {skill.value} on {obj} already failed "
                        f"{self.cfg.max_failures} times")
        result = self._run_skill(skill, target, aff.point_cloud, m)
        extra = {"skill": result.to_log(), "part": aff.part}
        if not result.success:
            self.failures[(skill.value, obj)] += 1
            msg = f"{skill.value} failed: {result.reason}"
            if result.remap and self.cfg.mode == "tabletop":
                self.trigger_remap(result.reason)
                msg += f"; {REMAP_NOTE}"
                extra["remapped"] = True
            return ToolOutput(False, msg, self._state_copy(), extra)
        if result.attached is not None:
            self.state.held_object = obj
            self.state.inventory = [k for k in self.state.inventory if k != obj]
        if result.released:
            self.state.held_object = None
        msg = f"{skill.value} on {obj} ({aff.part}) succeeded"
        if self.cfg.mode == "tabletop" and skill in _MOVES_SCENE:
            self.trigger_remap(f"scene changed by {skill.value}")
            msg += f"; {REMAP_NOTE}"
            extra["remapped"] = True
        return ToolOutput(True, msg, self._state_copy(), extra)

    # navigation -----------------------------------------------------------

    def _view_target(self, target: Object, action: str) -> tuple[np.ndarray | None, str]:
        if self.cfg.no_aff:
            return None, "affordance-free approach"
        try:
            affs = detect_affordances(target, action, self.backends.affordance, self.cfg.aff)
        except AffordanceDetectionFailed as err:
            return None, f"no affordance guidance ({err})"
        if not affs or affs[0].skill in OBJECT_SKILLS:
            return None, "no directional affordance"
        try:
            p = nav.preferred_view_position(affs[0].point_cloud, target.centroid, self.cfg.nav.r0)
        except (NoHorizontalNormal, ASPError) as err:
            return None, f"no horizontal affordance normal ({err})"
        return p, f"approaching the {affs[0].part}"

    def plan_approach(self, obj: str, action: str, trace: list | None = None):
        """Navigation goal for acting on ``obj``: (goal pose, p_aff or None, note)."""
        target, _ = self._object(obj)
        p_aff, note = self._view_target(target, action)
        goal = nav.select_nav_goal(self.world.spec.grid, target.centroid, p_aff, self.cfg.nav,
                                   trace)
        return goal, p_aff, note

    def go_to(self, obj: str, action: str) -> ToolOutput:
        if self.cfg.mode != "mobile":
            raise _Fail("go_to is only available in mobile mode")
        if not isinstance(action, str) or not action.strip():
            raise _Fail("action must be a non-empty string")
        binding = self._binding(obj)
        target, _ = self._object(obj)
        centroid = target.centroid
        try:
            goal, p_aff, note = self.plan_approach(obj, action)
            nav.navigate(self.world, self.world.spec.grid, goal, self.cfg.nav.lethal)
        except (NoValidPose, NavigationFailed) as err:
            raise _Fail(f"navigation failed: {err}") from err
        self.world.ee = np.array([goal.x + 0.3 * np.cos(goal.theta),
                                  goal.y + 0.3 * np.sin(goal.theta), 0.8])
        frame = self.world.render(self.world.base_camera())
        local = build_from_frame(frame, self.backends.embedder, self.cfg.map)
        best, best_d = None, self.cfg.redetect_radius
        for oid in self._relevant(local, binding.origin_query):
            d = float(np.linalg.norm(local.get(oid).centroid - centroid))
            if d <= best_d:
                best, best_d = oid, d
        pose = [round(v, 3) for v in goal.to_list()]
        if best is None:
            raise _Fail(f"arrived at {pose} but redetection of {obj} with query "
                        f"{binding.origin_query!r} failed")
        name = f"local_{self._local_maps}"
        self._local_maps += 1
        self.maps[name] = local
        self.bindings[obj] = KeyBinding(obj, best, binding.origin_query, name, binding.main_id)
        return ToolOutput(True, f"arrived at {pose} facing {obj} ({note}); redetected {obj} "
                                f"{best_d:.3f} m from its mapped position",
                          self._state_copy(), {"goal": goal.to_list(), "p_aff": (
                              None if p_aff is None else [float(v) for v in p_aff])})


TOOL_MANIFEST: list[dict] = [
    {
        "name": "object_retrieval",
        "description": ("Ground objects matching an open-vocabulary text query. Relevant "
                        "objects get new keys appended to the inventory; objects already "
                        "grounded are not duplicated. Returns the State."),
        "parameters": {"type": "object", "properties": {"query": {"type": "string",
                                                                  "minLength": 1}},
                       "required": ["query"], "additionalProperties": False},
        "returns": "State",
    },
    {
        "name": "distance_between",
        "description": ("Euclidean distance in meters between the centroids of two "
                        "inventory objects."),
        "parameters": {"type": "object",
                       "properties": {"a": {"type": "string"}, "b": {"type": "string"}},
                       "required": ["a", "b"], "additionalProperties": False},
        "returns": "float",
    },
    {
        "name": "distance_to",
        "description": ("Distance in meters from the robot (gripper on a table, base when "
                        "mobile) to an inventory object's centroid."),
        "parameters": {"type": "object", "properties": {"a": {"type": "string"}},
                       "required": ["a"], "additionalProperties": False},
        "returns": "float",
    },
    {
        "name": "left_of",
        "description": ("True when object a is strictly left of object b as seen from the "
                        "robot's observation viewpoint."),
        "parameters": {"type": "object",
                       "properties": {"a": {"type": "string"}, "b": {"type": "string"}},
                       "required": ["a", "b"], "additionalProperties": False},
        "returns": "bool",
    },
    {
        "name": "right_of",
        "description": ("True when object a is strictly right of object b as seen from the "
                        "robot's observation viewpoint."),
        "parameters": {"type": "object",
                       "properties": {"a": {"type": "string"}, "b": {"type": "string"}},
                       "required": ["a", "b"], "additionalProperties": False},
        "returns": "bool",
    },
    {
        "name": "size_of",
        "description": "Largest bounding-box side of an inventory object, in meters.",
        "parameters": {"type": "object", "properties": {"a": {"type": "string"}},
                       "required": ["a"], "additionalProperties": False},
        "returns": "float",
    },
    {
        "name": "interact",
        "description": (
            "Perform an action on an inventory object, e.g. 'pick up', 'place it in', "
            "'press the button', 'open'. The skill is chosen from affordances detected on the "
            "object. Grasping skills need an empty gripper (held_object none); place and drop "
            "need a held object and put it on or into obj. A skill that failed three times on "
            "the same object is refused. Failures that lose track of objects clear the "
            "inventory; call object_retrieval again. Returns the State."),
        "parameters": {"type": "object",
                       "properties": {"obj": {"type": "string"},
                                      "action": {"type": "string", "minLength": 1}},
                       "required": ["obj", "action"], "additionalProperties": False},
        "returns": "State",
    },
    {
        "name": "go_to",
        "description": (
            "Drive the mobile base to a pose suited for performing the action on an "
            "inventory object, then re-detect the object from the new viewpoint. Call before "
            "interact when the object is out of reach. Returns the State."),
        "parameters": {"type": "object",
                       "properties": {"obj": {"type": "string"},
                                      "action": {"type": "string", "minLength": 1}},
                       "required": ["obj", "action"], "additionalProperties": False},
        "returns": "State",
        "mode": "mobile",
    },
]


def manifest(mode: str = "tabletop") -> list[dict]:
    """Tools available in ``mode``, without internal annotations."""
    out = []
    for t in TOOL_MANIFEST:
        if t.get("mode", mode) != mode:
            continue
        out.append({k: v for k, v in t.items() if k != "mode"})
    return out
