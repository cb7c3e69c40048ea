"""Scripted skills over point clouds.

Skills turn an object (and optionally an affordance) cloud into end-effector
goals, check them with a :class:`MotionChecker` and execute them on a world
implementing :class:`SkillWorld`. They never look up ground truth: every
decision comes from map geometry.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import geom, kernels
from .errors import DegenerateGeometry


class SkillKind(str, enum.Enum):
    GRASP = "grasp"
    PLACE = "place"
    DROP = "drop"
    GRASP_PART = "grasp_part"
    TIP_PUSH = "tip_push"
    PINCH_PULL = "pinch_pull"
    HOOK_PULL = "hook_pull"


# skills that need an empty gripper / a held object before they run
NEEDS_EMPTY_HAND = frozenset({SkillKind.GRASP, SkillKind.GRASP_PART,
                              SkillKind.PINCH_PULL, SkillKind.HOOK_PULL})
NEEDS_HELD = frozenset({SkillKind.PLACE, SkillKind.DROP})
OBJECT_SKILLS = frozenset({SkillKind.GRASP, SkillKind.PLACE, SkillKind.DROP})


@dataclass
class SkillConfig:
    max_grasps: int = 10
    proximity: float = 0.03
    context_margin: float = 0.10
    pull_distance: float = 0.15
    place_clearance: float = 0.02
    drop_height: float = 0.10
    min_horizontal: float = 0.1


@dataclass(frozen=True)
class GraspCandidate:
    pose: geom.Pose3D
    score: float
    width: float


@dataclass
class SkillResult:
    kind: SkillKind
    success: bool
    reason: str = ""
    attempts: int = 0
    goal: geom.Pose3D | None = None
    remap: bool = False
    attached: str | None = None
    released: bool = False
    detail: dict = field(default_factory=dict)

    def to_log(self) -> dict:
        return {"kind": self.kind.value, "success": self.success, "reason": self.reason,
                "attempts": self.attempts, "remap": self.remap,
                "goal": self.goal.to_list() if self.goal is not None else None,
                **({"detail": self.detail} if self.detail else {})}


class SkillWorld(Protocol):
    base_pose: geom.Pose2D

    def grasp_at(self, pose: geom.Pose3D) -> str | None: ...

    def holding(self) -> bool: ...

    def open_gripper(self) -> None: ...

    def release_held(self, position: np.ndarray, mode: str) -> dict: ...

    def press_at(self, position: np.ndarray, direction: np.ndarray) -> str | None: ...

    def pull_at(self, position: np.ndarray, axis: np.ndarray, distance: float,
                mode: str) -> dict: ...


class GraspProposer(Protocol):
    def propose(self, context_cloud: np.ndarray) -> list[GraspCandidate]: ...


class MotionChecker(Protocol):
    def feasible(self, goal: geom.Pose3D, world: SkillWorld) -> tuple[bool, str]: ...


def _frame(approach: np.ndarray, closing: np.ndarray) -> np.ndarray:
    """Rotation whose z axis is ``approach`` and y axis is ``closing``
    (re-orthogonalized)."""
    z = approach / np.linalg.norm(approach)
    y = closing - np.dot(closing, z) * z
    if np.linalg.norm(y) < 1e-9:
        y = np.cross(z, [1.0, 0.0, 0.0])
        if np.linalg.norm(y) < 1e-9:
            y = np.cross(z, [0.0, 1.0, 0.0])
    y = y / np.linalg.norm(y)
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


def approach_axis(pose: geom.Pose3D) -> np.ndarray:
    return pose.rotation[:, 2]


class MockGraspProposer:
    """Deterministic top-down grasp proposals.

    Every voxel of the context cloud is a candidate; the fingers close along
    the minor horizontal axis of the local neighborhood, whose spread sets the
    opening width. Candidates rank by height above the support plus local
    flatness, so rims and handles both appear on a mug.
    """

    def __init__(self, voxel: float = 0.015, radius: float = 0.03, max_width: float = 0.085,
                 flatness_weight: float = 0.1):
        self.voxel = voxel
        self.radius = radius
        self.max_width = max_width
        self.flatness_weight = flatness_weight

    def propose(self, context_cloud: np.ndarray) -> list[GraspCandidate]:
        cloud = geom.as_cloud(context_cloud)
        pts = geom.voxel_downsample(cloud, self.voxel)
        counts, covs = kernels.local_covariances(pts, self.radius)
        keep = counts >= 3
        pts, covs = pts[keep], covs[keep]
        if pts.shape[0] == 0:
            return []
        support = cloud[:, 2].min()
        evals = np.linalg.eigvalsh(covs)
        trace = evals.sum(axis=1)
        flat = np.where(trace > 0, 1.0 - 3.0 * evals[:, 0] / np.maximum(trace, 1e-300), 0.0)
        xy_vals, xy_vecs = np.linalg.eigh(covs[:, :2, :2])
        widths = 4.0 * np.sqrt(np.maximum(xy_vals[:, 0], 0.0)) + 0.01
        scores = (pts[:, 2] - support) + self.flatness_weight * flat
        order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], -scores))
        out = []
        for i in order:
            if widths[i] > self.max_width:
                continue
            close = np.array([xy_vecs[i, 0, 0], xy_vecs[i, 1, 0], 0.0])
            rot = _frame(np.array([0.0, 0.0, -1.0]), close)
            out.append(GraspCandidate(geom.Pose3D.from_axes(pts[i], rot),
                                      float(scores[i]), float(widths[i])))
        return out


class SimMotionChecker:
    """Reachability stand-in for a motion planner.

    A goal is feasible when it lies within horizontal reach of the base, below
    the height limit, and its approach direction does not point back toward
    the robot (approaches within about 17 degrees of vertical are exempt).
    """

    def __init__(self, reach: float = 1.1, max_height: float = 1.6):
        self.reach = reach
        self.max_height = max_height

    def feasible(self, goal: geom.Pose3D, world: SkillWorld) -> tuple[bool, str]:
        base = world.base_pose
        offset = goal.position[:2] - np.array([base.x, base.y])
        dist = float(np.hypot(*offset))
        if dist > self.reach:
            return False, f"goal is {dist:.2f} m from the base, beyond reach {self.reach:.2f} m"
        if not -0.05 <= goal.position[2] <= self.max_height:
            return False, f"goal height {goal.position[2]:.2f} m is out of range"
        approach = approach_axis(goal)[:2]
        # near-vertical approaches are top-down and always allowed
        if np.linalg.norm(approach) > 0.3 and dist > 1e-6 and np.dot(approach, offset) < 0:
            return False, "approach direction faces the robot; no collision-free path"
        return True, ""


class ScriptedChecker:
    """Rejects the first ``reject_first`` queries, then defers to ``inner``."""

    def __init__(self, reject_first: int, inner: MotionChecker | None = None):
        self.reject_first = reject_first
        self.inner = inner
        self.calls = 0

    def feasible(self, goal: geom.Pose3D, world: SkillWorld) -> tuple[bool, str]:
        self.calls += 1
        if self.calls <= self.reject_first:
            return False, f"scripted rejection {self.calls}"
        if self.inner is None:
            return True, ""
        return self.inner.feasible(goal, world)


class RejectAllChecker:
    def feasible(self, goal, world) -> tuple[bool, str]:
        return False, "planner found no path"


def verify_held(world: SkillWorld) -> bool:
    return bool(world.holding())


def context_cloud(map_clouds: list[np.ndarray], target: np.ndarray, margin: float) -> np.ndarray:
    """All map points inside the target's bounding box inflated by ``margin``."""
    lo = target.min(axis=0) - margin
    hi = target.max(axis=0) + margin
    pts = np.vstack(map_clouds)
    inside = np.all((pts >= lo) & (pts <= hi), axis=1)
    return pts[inside] if inside.any() else target


def _grasp_near(kind: SkillKind, target: np.ndarray, context: np.ndarray, world: SkillWorld,
                proposer: GraspProposer, checker: MotionChecker, cfg: SkillConfig) -> SkillResult:
    cands = proposer.propose(context)
    if cands:
        pos = np.array([c.pose.position for c in cands])
        near = geom.nearest_distances(pos, target) <= cfg.proximity
        cands = [c for c, ok in zip(cands, near) if ok]
    what = "object part" if kind is SkillKind.GRASP_PART else "object"
    if not cands:
        return SkillResult(kind, False, f"no grasp candidates near the {what}")
    attempts = 0
    last_reason = ""
    chosen = None
    for cand in cands[:cfg.max_grasps]:
        attempts += 1
        ok, why = checker.feasible(cand.pose, world)
        if ok:
            chosen = cand
            break
        last_reason = why
    if chosen is None:
        return SkillResult(kind, False,
                           f"motion planning failed for all {attempts} grasp candidates "
                           f"(last: {last_reason})", attempts=attempts)
    name = world.grasp_at(chosen.pose)
    if not verify_held(world):
        return SkillResult(kind, False, "grasp slipped: the gripper is empty after closing",
                           attempts=attempts, goal=chosen.pose, remap=True)
    return SkillResult(kind, True, f"grasped {kind.value} target", attempts=attempts,
                       goal=chosen.pose, attached=name,
                       detail={"grasp_width": round(chosen.width, 6)})


def skill_grasp(obj_cloud, world, proposer, checker, cfg: SkillConfig | None = None,
                context: np.ndarray | None = None) -> SkillResult:
    cfg = cfg or SkillConfig()
    obj_cloud = geom.as_cloud(obj_cloud)
    return _grasp_near(SkillKind.GRASP, obj_cloud, obj_cloud if context is None else context,
                       world, proposer, checker, cfg)


def skill_grasp_part(obj_cloud, aff_cloud, world, proposer, checker,
                     cfg: SkillConfig | None = None,
                     context: np.ndarray | None = None) -> SkillResult:
    cfg = cfg or SkillConfig()
    obj_cloud = geom.as_cloud(obj_cloud)
    aff_cloud = geom.as_cloud(aff_cloud)
    return _grasp_near(SkillKind.GRASP_PART, aff_cloud, obj_cloud if context is None else context,
                       world, proposer, checker, cfg)


def _release(kind: SkillKind, target_cloud, world, checker, height: float) -> SkillResult:
    target = geom.as_cloud(target_cloud)
    c = target.mean(axis=0)
    goal = geom.Pose3D.from_axes(np.array([c[0], c[1], target[:, 2].max() + height]),
                                 _frame(np.array([0.0, 0.0, -1.0]), np.array([0.0, 1.0, 0.0])))
    ok, why = checker.feasible(goal, world)
    if not ok:
        return SkillResult(kind, False, f"motion planning failed: {why}", attempts=1, goal=goal)
    if not world.holding():
        return SkillResult(kind, False, "the gripper is empty; nothing to release",
                           attempts=1, goal=goal)
    outcome = world.release_held(goal.position, "drop" if kind is SkillKind.DROP else "place")
    return SkillResult(kind, True, f"released held object ({kind.value})", attempts=1,
                       goal=goal, released=True, detail=outcome)


def skill_place(target_cloud, world, checker, cfg: SkillConfig | None = None) -> SkillResult:
    cfg = cfg or SkillConfig()
    return _release(SkillKind.PLACE, target_cloud, world, checker, cfg.place_clearance)


def skill_drop(target_cloud, world, checker, cfg: SkillConfig | None = None) -> SkillResult:
    cfg = cfg or SkillConfig()
    return _release(SkillKind.DROP, target_cloud, world, checker, cfg.drop_height)


def outward_normal(aff_cloud: np.ndarray, obj_centroid: np.ndarray) -> np.ndarray:
    """Affordance normal pointing away from the owning object's centroid.

    When the two centroids coincide the upward-facing sign is kept.
    """
    n = geom.dominant_normal(aff_cloud)
    offset = geom.centroid(aff_cloud) - obj_centroid
    d = float(np.dot(n, offset))
    if abs(d) <= 1e-12:
        return -n if n[2] < 0 else n
    return -n if d < 0 else n


def pull_axis(aff_cloud: np.ndarray, obj_centroid: np.ndarray,
              min_horizontal: float = 0.1) -> np.ndarray | None:
    """Horizontal unit pulling direction, or None when the normal is near vertical."""
    n = outward_normal(aff_cloud, obj_centroid)
    h = np.array([n[0], n[1], 0.0])
    norm = math.hypot(h[0], h[1])
    if norm < min_horizontal:
        return None
    return h / norm


def skill_tip_push(obj_cloud, aff_cloud, world, checker,
                   cfg: SkillConfig | None = None) -> SkillResult:
    kind = SkillKind.TIP_PUSH
    aff = geom.as_cloud(aff_cloud)
    try:
        n = outward_normal(aff, geom.centroid(obj_cloud))
    except DegenerateGeometry as err:
        return SkillResult(kind, False, f"cannot estimate the part surface normal: {err}")
    target = aff.mean(axis=0)
    goal = geom.Pose3D.from_axes(target, _frame(-n, np.array([0.0, 0.0, 1.0])))
    ok, why = checker.feasible(goal, world)
    if not ok:
        return SkillResult(kind, False, f"motion planning failed: {why}", attempts=1, goal=goal)
    pressed = world.press_at(target, -n)
    return SkillResult(kind, True, "pushed the part with the gripper tip", attempts=1,
                       goal=goal, detail={"pressed": pressed})


def _pull(kind: SkillKind, obj_cloud, aff_cloud, world, checker, cfg: SkillConfig) -> SkillResult:
    aff = geom.as_cloud(aff_cloud)
    try:
        axis = pull_axis(aff, geom.centroid(obj_cloud), cfg.min_horizontal)
    except DegenerateGeometry as err:
        return SkillResult(kind, False, f"cannot estimate the part surface normal: {err}")
    if axis is None:
        return SkillResult(kind, False, "cannot infer a horizontal pulling axis from the part")
    target = aff.mean(axis=0)
    if kind is SkillKind.PINCH_PULL:
        rot = _frame(-axis, np.array([0.0, 0.0, 1.0]))
    else:
        # hook from above, tilted toward the part
        rot = _frame(np.array([0.0, 0.0, -1.0]) - 0.5 * axis, np.cross([0.0, 0.0, 1.0], axis))
    goal = geom.Pose3D.from_axes(target, rot)
    ok, why = checker.feasible(goal, world)
    if not ok:
        return SkillResult(kind, False, f"motion planning failed: {why}", attempts=1, goal=goal)
    mode = "pinch" if kind is SkillKind.PINCH_PULL else "hook"
    outcome = world.pull_at(target, axis, cfg.pull_distance, mode)
    detail = {"axis": [round(float(v), 9) for v in axis], **outcome}
    if kind is SkillKind.PINCH_PULL:
        if not verify_held(world):
            return SkillResult(kind, False, "pinch slipped: the gripper holds nothing after pulling",
                               attempts=1, goal=goal, remap=True, detail=detail)
        attached = outcome.get("detached")
        if attached is None:
            world.open_gripper()
        return SkillResult(kind, True, "pinched and pulled the part", attempts=1, goal=goal,
                           attached=attached, detail=detail)
    return SkillResult(kind, True, "hooked and pulled the part", attempts=1, goal=goal,
                       detail=detail)


def skill_pinch_pull(obj_cloud, aff_cloud, world, checker,
                     cfg: SkillConfig | None = None) -> SkillResult:
    return _pull(SkillKind.PINCH_PULL, obj_cloud, aff_cloud, world, checker, cfg or SkillConfig())


def skill_hook_pull(obj_cloud, aff_cloud, world, checker,
                    cfg: SkillConfig | None = None) -> SkillResult:
    return _pull(SkillKind.HOOK_PULL, obj_cloud, aff_cloud, world, checker, cfg or SkillConfig())
