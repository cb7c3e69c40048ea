"""Two-step affordance pipeline: propose (skill, part) pairs per crop,
localize each part as a 3D sub-cloud, then fuse duplicates across views."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import geom
from .errors import AffordanceDetectionFailed, BackendError, InvalidParameter
from .remote import JsonHttpClient, RemoteConfig
from .scene_map import Affordance, Crop, Object
from .semantics import tokenize
from .skills import SkillKind

WHOLE_OBJECT = "whole object"
SUBSET_RADIUS = 0.05

# verbs that trigger the object-level skills when no part matches;
# checked in this order so "pick up and drop" resolves to drop
GENERAL_VERBS: list[tuple[SkillKind, frozenset[str]]] = [
    (SkillKind.DROP, frozenset({"drop", "throw", "toss", "dump"})),
    (SkillKind.PLACE, frozenset({"place", "put", "set", "stack"})),
    (SkillKind.GRASP, frozenset({"pick", "grab", "grasp", "take", "lift", "get", "hold", "fetch"})),
]


@dataclass
class AffordanceConfig:
    k_crops: int = 3
    iou_thresh: float = 0.5
    iou_voxel: float = geom.DEFAULT_VOXEL
    subset_radius: float = SUBSET_RADIUS


@dataclass(frozen=True)
class AffordanceProposal:
    skill: SkillKind
    part: str
    crop_index: int


class AffordanceBackend(Protocol):
    def propose(self, views: Sequence[Crop], action: str) -> list[AffordanceProposal]: ...

    def localize(self, proposal: AffordanceProposal, crop: Crop) -> np.ndarray: ...


def _stable_int(*parts) -> int:
    h = hashlib.blake2b("|".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


class SimAffordanceBackend:
    """Reads simulated ground-truth parts from the crops.

    Parts are ranked by token overlap between the action and the part's name
    plus trigger verbs; only the best-scoring parts are proposed. Without any
    part match, the object-level verbs pick grasp/place/drop on the whole
    crop. Optional noise jitters the localized cloud or swaps in a different
    part.
    """

    def __init__(self, jitter: float = 0.0, wrong_part_prob: float = 0.0, seed: int = 0):
        self.jitter = jitter
        self.wrong_part_prob = wrong_part_prob
        self.seed = seed
        self._calls = 0

    def propose(self, views: Sequence[Crop], action: str) -> list[AffordanceProposal]:
        tokens = set(tokenize(action))
        out = []
        for idx, crop in enumerate(views):
            scored = []
            for part in crop.gt_parts:
                vocab = set(tokenize(part["name"])) | {v for verb in part.get("verbs", [])
                                                       for v in tokenize(verb)}
                score = len(tokens & vocab)
                if score:
                    scored.append((score, part))
            if scored:
                best = max(s for s, _ in scored)
                out.extend(AffordanceProposal(SkillKind(p["skill"]), p["name"], idx)
                           for s, p in scored if s == best)
                continue
            for kind, verbs in GENERAL_VERBS:
                if tokens & verbs:
                    out.append(AffordanceProposal(kind, WHOLE_OBJECT, idx))
                    break
        return out

    def localize(self, proposal: AffordanceProposal, crop: Crop) -> np.ndarray:
        self._calls += 1
        if proposal.part == WHOLE_OBJECT:
            return np.asarray(crop.depth_ref, dtype=np.float64)
        parts = {p["name"]: p for p in crop.gt_parts}
        if proposal.part not in parts:
            return np.zeros((0, 3))
        rng = np.random.default_rng(
            [self.seed, _stable_int(proposal.part, proposal.crop_index), self._calls])
        name = proposal.part
        if self.wrong_part_prob > 0 and rng.random() < self.wrong_part_prob:
            others = sorted(n for n in parts if n != name)
            if others:
                name = others[int(rng.integers(len(others)))]
        cloud = np.asarray(parts[name]["points"], dtype=np.float64)
        if self.jitter > 0:
            cloud = cloud + rng.normal(0.0, self.jitter, size=3)
        return cloud


class RemoteAffordanceBackend:
    def __init__(self, config: RemoteConfig):
        self.client = JsonHttpClient(config)

    @staticmethod
    def _crop(crop: Crop) -> dict:
        return {"area": int(crop.segment_area), "border": bool(crop.touches_border),
                "frame": int(crop.source_frame_id), "label": crop.view_label,
                "points": np.asarray(crop.depth_ref).tolist()}

    def propose(self, views: Sequence[Crop], action: str) -> list[AffordanceProposal]:
        reply = self.client.post({"op": "propose", "action": action,
                                  "views": [self._crop(v) for v in views]})
        try:
            return [AffordanceProposal(SkillKind(p["skill"]), str(p["part"]), int(p["crop_index"]))
                    for p in reply["proposals"]]
        except (KeyError, TypeError, ValueError) as err:
            raise BackendError(f"malformed proposal reply: {err}") from err

    def localize(self, proposal: AffordanceProposal, crop: Crop) -> np.ndarray:
        reply = self.client.post({"op": "localize", "skill": proposal.skill.value,
                                  "part": proposal.part, "crop": self._crop(crop)})
        pts = reply.get("points")
        if not isinstance(pts, list):
            raise BackendError("localize reply lacks 'points'")
        if not pts:
            return np.zeros((0, 3))
        try:
            return geom.as_cloud(pts)
        except (InvalidParameter, ValueError) as err:
            raise BackendError(f"bad localized cloud: {err}") from err


def associate_multiview(affs: Sequence[Affordance], iou_thresh: float = 0.5,
                        voxel: float = geom.DEFAULT_VOXEL) -> list[Affordance]:
    """Fuse affordances whose clouds overlap (voxel IoU) and share a skill.

    Groups are connected components of the overlap graph; each fused entry
    keeps the list position of its earliest member. Repeats to a fixpoint.
    """
    if not 0 < iou_thresh <= 1:
        raise InvalidParameter(f"iou_thresh must be in (0, 1], got {iou_thresh}")
    items = list(affs)
    while True:
        parent = list(range(len(items)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        linked = False
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                if items[i].skill is not items[j].skill:
                    continue
                if geom.iou_3d(items[i].point_cloud, items[j].point_cloud, voxel) >= iou_thresh:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
                        linked = True
        if not linked:
            return items
        groups: dict[int, list[Affordance]] = {}
        for i, a in enumerate(items):
            groups.setdefault(find(i), []).append(a)
        fused = []
        for root in sorted(groups):
            members = groups[root]
            if len(members) == 1:
                fused.append(members[0])
                continue
            largest = max(members, key=lambda a: a.point_cloud.shape[0])
            cloud = geom.voxel_downsample(np.vstack([a.point_cloud for a in members]), voxel)
            fused.append(Affordance(cloud, largest.part, members[0].skill))
        items = fused


def whole_object_affordance(obj: Object, skill: SkillKind) -> Affordance:
    return Affordance(obj.point_cloud, WHOLE_OBJECT, SkillKind(skill))


def _clip_to_object(cloud: np.ndarray, obj_cloud: np.ndarray, radius: float) -> np.ndarray:
    if cloud.shape[0] == 0:
        return cloud
    keep = geom.nearest_distances(cloud, obj_cloud) <= radius
    return cloud[keep]


def detect_affordances(obj: Object, action: str, backend: AffordanceBackend,
                       cfg: AffordanceConfig | None = None) -> list[Affordance]:
    """Affordances of ``obj`` relevant to ``action``, in proposal order.

    Localized points farther than ``cfg.subset_radius`` from the object cloud
    are discarded, and empty localizations are dropped.
    """
    cfg = cfg or AffordanceConfig()
    views = obj.crops[:cfg.k_crops]
    if not views:
        raise AffordanceDetectionFailed("object has no crops to inspect")
    try:
        proposals = backend.propose(views, action)
        found = []
        for p in proposals:
            if not 0 <= p.crop_index < len(views):
                raise AffordanceDetectionFailed(f"proposal refers to unknown crop {p.crop_index}")
            cloud = np.asarray(backend.localize(p, views[p.crop_index]), dtype=np.float64)
            cloud = _clip_to_object(cloud.reshape(-1, 3), obj.point_cloud, cfg.subset_radius)
            if cloud.shape[0]:
                found.append(Affordance(cloud, p.part, p.skill))
    except BackendError as err:
        raise AffordanceDetectionFailed(f"affordance backend failed: {err}") from err
    return associate_multiview(found, cfg.iou_thresh, cfg.iou_voxel)


def propose_skill(obj: Object, action: str, backend: AffordanceBackend,
                  cfg: AffordanceConfig | None = None) -> SkillKind | None:
    """Skill of the first proposal only, for the whole-object ablation."""
    cfg = cfg or AffordanceConfig()
    views = obj.crops[:cfg.k_crops]
    if not views:
        raise AffordanceDetectionFailed("object has no crops to inspect")
    try:
        proposals = backend.propose(views, action)
    except BackendError as err:
        raise AffordanceDetectionFailed(f"affordance backend failed: {err}") from err
    return proposals[0].skill if proposals else None
