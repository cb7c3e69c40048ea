"""Object map construction: per-segment objects, merging, crop ranking and
keyframe integration."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from . import geom
from .errors import StaleMap
from .semantics import cosine, normalize
from .skills import SkillKind


@dataclass
class MapConfig:
    geom_thresh: float = 0.4
    sem_thresh: float = 0.8
    border_penalty: float = 0.5
    voxel: float = geom.DEFAULT_VOXEL
    overlap_radius: float = geom.DEFAULT_OVERLAP_RADIUS


@dataclass
class Segment:
    mask_id: int
    point_cloud: np.ndarray
    segment_area: int
    touches_border: bool = False
    gt_label: str | None = None
    # sim only: [{"name", "skill", "points", "verbs"}]
    gt_parts: list[dict] = field(default_factory=list)


@dataclass
class SegmentedFrame:
    camera_pose: geom.Pose3D
    segments: list[Segment]
    frame_id: int = 0


@dataclass
class Crop:
    segment_area: int
    touches_border: bool
    source_frame_id: int
    depth_ref: np.ndarray
    view_label: str | None = None
    feature: np.ndarray | None = None
    gt_parts: list[dict] = field(default_factory=list)

    def effective_area(self, border_penalty: float) -> float:
        return self.segment_area * (border_penalty if self.touches_border else 1.0)


@dataclass
class Affordance:
    point_cloud: np.ndarray
    part: str
    skill: SkillKind


@dataclass
class Object:
    id: int
    point_cloud: np.ndarray
    crops: list[Crop]
    features: np.ndarray
    affordances: list[Affordance] = field(default_factory=list)
    label_votes: Counter = field(default_factory=Counter)

    @property
    def gt_label(self) -> str | None:
        if not self.label_votes:
            return None
        # majority, ties broken alphabetically
        return min(self.label_votes.items(), key=lambda kv: (-kv[1], kv[0]))[0]

    @property
    def centroid(self) -> np.ndarray:
        return geom.centroid(self.point_cloud)


@dataclass
class ObjectMap:
    objects: list[Object] = field(default_factory=list)
    stale: bool = False
    frame_count: int = 0
    next_id: int = 0

    def get(self, object_id: int) -> Object:
        if self.stale:
            raise StaleMap("object map is stale; rebuild before reading objects")
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    def __len__(self) -> int:
        return len(self.objects)

    def to_json(self) -> dict[str, Any]:
        return {
            "frame_count": self.frame_count,
            "stale": self.stale,
            "objects": [
                {
                    "id": o.id,
                    "points": o.point_cloud.tolist(),
                    "features": o.features.tolist(),
                    "crops": [{"area": c.segment_area, "border": c.touches_border,
                               "frame": c.source_frame_id} for c in o.crops],
                    "affordances": [{"part": a.part, "skill": a.skill.value,
                                     "points": a.point_cloud.tolist()} for a in o.affordances],
                    **({"gt_label": o.gt_label} if o.gt_label else {}),
                }
                for o in self.objects
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "ObjectMap":
        objects = []
        for o in doc["objects"]:
            feats = normalize(np.asarray(o["features"], dtype=np.float64))
            pts = geom.as_cloud(o["points"])
            crops = [Crop(c["area"], c["border"], c["frame"], pts, feature=feats)
                     for c in o.get("crops", [])]
            affs = [Affordance(geom.as_cloud(a["points"]), a["part"], SkillKind(a["skill"]))
                    for a in o.get("affordances", [])]
            votes = Counter({o["gt_label"]: 1}) if o.get("gt_label") else Counter()
            objects.append(Object(o["id"], pts, crops, feats, affs, votes))
        next_id = max((o.id for o in objects), default=-1) + 1
        return cls(objects, doc.get("stale", False), doc.get("frame_count", 0), next_id)


def rank_crops(crops: Sequence[Crop], border_penalty: float = 0.5) -> list[Crop]:
    """Best crops first: largest effective area, ties kept in frame order."""
    return sorted(crops, key=lambda c: (-c.effective_area(border_penalty), c.source_frame_id))


def _features_from_crops(crops: Sequence[Crop]) -> np.ndarray:
    return normalize(np.sum([c.feature for c in crops], axis=0))


def object_from_segment(seg: Segment, frame_id: int, object_id: int, embedder,
                        cfg: MapConfig) -> Object:
    cloud = geom.voxel_downsample(seg.point_cloud, cfg.voxel)
    crop = Crop(seg.segment_area, seg.touches_border, frame_id, cloud,
                view_label=seg.gt_label, gt_parts=seg.gt_parts)
    crop.feature = embedder.embed_crop(crop)
    votes = Counter({seg.gt_label: 1}) if seg.gt_label else Counter()
    return Object(object_id, cloud, [crop], crop.feature.copy(), [], votes)


def merge_pair(a: Object, b: Object, cfg: MapConfig | None = None) -> Object:
    """Fuse two objects.

    Features become the normalized mean of every stored per-crop feature, so
    an object seen in three crops weighs three times one seen once.
    """
    cfg = cfg or MapConfig()
    cloud = geom.voxel_downsample(np.vstack([a.point_cloud, b.point_cloud]), cfg.voxel)
    crops = rank_crops(list(a.crops) + list(b.crops), cfg.border_penalty)
    feats = _features_from_crops(crops)
    return Object(min(a.id, b.id), cloud, crops, feats,
                  list(a.affordances) + list(b.affordances),
                  a.label_votes + b.label_votes)


def _similar_edges(objs: list[Object], cfg: MapConfig, geom_thresh: float,
                   sem_thresh: float, cache: dict) -> list[tuple[float, int, int]]:
    edges = []
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            a, b = objs[i], objs[j]
            if cosine(a.features, b.features) < sem_thresh:
                continue
            key = (id(a), id(b))
            if key not in cache:
                # keep a and b referenced so their ids cannot be recycled
                cache[key] = (a, b, geom.overlap_ratio(a.point_cloud, b.point_cloud,
                                                       cfg.overlap_radius))
            ov = cache[key][2]
            if ov >= geom_thresh:
                edges.append((ov, i, j))
    edges.sort(key=lambda e: (-e[0], objs[e[1]].id, objs[e[2]].id))
    return edges


def merge_objects(object_map: ObjectMap, geom_thresh: float | None = None,
                  sem_thresh: float | None = None, cfg: MapConfig | None = None) -> ObjectMap:
    """Merge every geometrically and semantically similar group until fixpoint.

    Each round links all qualifying pairs, then folds each connected group
    with :func:`merge_pair` in descending-overlap edge order. Rounds repeat
    until no pair qualifies.
    """
    cfg = cfg or MapConfig()
    geom_thresh = cfg.geom_thresh if geom_thresh is None else geom_thresh
    sem_thresh = cfg.sem_thresh if sem_thresh is None else sem_thresh
    objs = list(object_map.objects)
    cache: dict = {}
    while True:
        edges = _similar_edges(objs, cfg, geom_thresh, sem_thresh, cache)
        if not edges:
            break
        parent = list(range(len(objs)))
        merged: dict[int, Object] = {i: o for i, o in enumerate(objs)}

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for _, i, j in edges:
            ri, rj = find(i), find(j)
            if ri == rj:
                continue
            root, other = min(ri, rj), max(ri, rj)
            merged[root] = merge_pair(merged[root], merged[other], cfg)
            parent[other] = root
        objs = [merged[i] for i in range(len(objs)) if find(i) == i]
    objs.sort(key=lambda o: o.id)
    return replace(object_map, objects=objs)


def build_from_frame(frame: SegmentedFrame, embedder, cfg: MapConfig | None = None) -> ObjectMap:
    cfg = cfg or MapConfig()
    objs = [object_from_segment(seg, frame.frame_id, i, embedder, cfg)
            for i, seg in enumerate(frame.segments)]
    m = ObjectMap(objs, stale=False, frame_count=1, next_id=len(objs))
    return merge_objects(m, cfg=cfg)


def integrate_keyframe(object_map: ObjectMap, frame: SegmentedFrame, embedder,
                       cfg: MapConfig | None = None) -> ObjectMap:
    cfg = cfg or MapConfig()
    new = [object_from_segment(seg, frame.frame_id, object_map.next_id + i, embedder, cfg)
           for i, seg in enumerate(frame.segments)]
    m = ObjectMap(list(object_map.objects) + new, stale=object_map.stale,
                  frame_count=object_map.frame_count + 1,
                  next_id=object_map.next_id + len(new))
    return merge_objects(m, cfg=cfg) if new else m
