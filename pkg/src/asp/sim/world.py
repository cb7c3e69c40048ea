"""Kinematic world state, segmented rendering and skill physics."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .. import geom
from ..scene_map import Segment, SegmentedFrame
from .scene import NoiseConfig, ObjectSpec, SceneSpec
from .shapes import yaw_matrix

HFOV = math.radians(50.0)
VFOV = math.radians(40.0)
IMAGE_WIDTH = 640
SAMPLE_SPACING = 0.01
GRASP_TOL = 0.02
CONTACT_TOL = 0.025
PRESS_RAY_RADIUS = 0.012
DETACH_COS = 0.8
HANDLE_TOL = 0.03
BASE_CAM_HEIGHT = 1.2
BASE_CAM_PITCH = math.radians(35.0)


def camera_pose(position, yaw: float, pitch: float) -> geom.Pose3D:
    """Camera looking along +x of its frame, ``pitch`` > 0 tilts it down."""
    return geom.Pose3D(np.asarray(position, dtype=np.float64), geom.quat_from_rpy(0.0, pitch, yaw))


@dataclass
class ObjectState:
    position: np.ndarray
    yaw: float
    open_fraction: float = 0.0
    pressed: dict[str, bool] = field(default_factory=dict)
    pinned: bool = False
    supported_by: str | None = None
    contained_in: str | None = None
    held: bool = False
    grasp_local: np.ndarray | None = None


class _Geometry:
    """Per-object local cloud with part index ranges."""

    def __init__(self, spec: ObjectSpec):
        chunks = [spec.body]
        self.part_slices: dict[str, slice] = {}
        start = spec.body.shape[0]
        moving = np.zeros(spec.body.shape[0], dtype=bool)
        masks = [moving]
        for p in spec.parts:
            n = p.points.shape[0]
            self.part_slices[p.name] = slice(start, start + n)
            chunks.append(p.points)
            masks.append(np.full(n, p.moving))
            start += n
        self.local = np.vstack(chunks)
        self.moving = np.concatenate(masks)
        self.owner = np.full(self.local.shape[0], -1, dtype=np.int64)
        for k, p in enumerate(spec.parts):
            self.owner[self.part_slices[p.name]] = k


class SimWorld:
    """Deterministic tabletop or room world.

    Objects are rigid point sets; drawers slide along a prismatic joint and
    pinned items (thumbtacks, plugs) come free when pulled along their
    extraction axis. Supported/contained relations update instantly on
    release.
    """

    def __init__(self, spec: SceneSpec, noise: NoiseConfig | None = None, seed: int = 0):
        self.spec = spec
        self.noise = noise or NoiseConfig()
        # separate streams so rendering never shifts the physics noise
        self.rng = np.random.default_rng([seed, 1])
        self.render_rng = np.random.default_rng([seed, 2])
        self.specs = {o.name: o for o in spec.objects}
        self.order = [o.name for o in spec.objects]
        self.geometry = {o.name: _Geometry(o) for o in spec.objects}
        self.states = {
            o.name: ObjectState(np.asarray(o.position, dtype=np.float64), float(o.yaw),
                                pressed={p.name: False for p in o.parts if p.pressable},
                                pinned=o.detach_axis is not None, supported_by=o.supported_by)
            for o in spec.objects}
        self.base_pose = geom.Pose2D(*spec.base_pose)
        self.ee = np.asarray(spec.ee_home, dtype=np.float64)
        self.held: str | None = None
        self.fixture_grip: str | None = None
        self.frame_counter = 0
        self._cache: dict[str, tuple[tuple, np.ndarray]] = {}

    # geometry -----------------------------------------------------------

    def _key(self, name: str) -> tuple:
        s = self.states[name]
        return (tuple(s.position), s.yaw, s.open_fraction)

    def cloud(self, name: str) -> np.ndarray:
        key = self._key(name)
        hit = self._cache.get(name)
        if hit is not None and hit[0] == key:
            return hit[1]
        spec, s, g = self.specs[name], self.states[name], self.geometry[name]
        rot = yaw_matrix(s.yaw)
        pts = g.local @ rot.T + s.position
        if spec.joint is not None and s.open_fraction > 0:
            shift = rot @ np.asarray(spec.joint.axis) * (s.open_fraction * spec.joint.range)
            pts[g.moving] += shift
        self._cache[name] = (key, pts)
        return pts

    def part_cloud(self, name: str, part: str) -> np.ndarray:
        return self.cloud(name)[self.geometry[name].part_slices[part]]

    def axis_world(self, name: str, axis) -> np.ndarray:
        return yaw_matrix(self.states[name].yaw) @ np.asarray(axis, dtype=np.float64)

    def visible_objects(self) -> list[str]:
        return [n for n in self.order if not self.states[n].held]

    # cameras --------------------------------------------------------------

    def home_camera(self) -> geom.Pose3D:
        return geom.Pose3D.from_list(self.spec.home_camera)

    def base_camera(self) -> geom.Pose3D:
        b = self.base_pose
        return camera_pose([b.x, b.y, BASE_CAM_HEIGHT], b.theta, BASE_CAM_PITCH)

    def keyframe_cameras(self) -> list[geom.Pose3D]:
        return [geom.Pose3D.from_list(k) for k in self.spec.keyframes]

    def move_to_home(self) -> None:
        self.ee = np.asarray(self.spec.ee_home, dtype=np.float64)

    # rendering ------------------------------------------------------------

    def render(self, camera: geom.Pose3D, noise: NoiseConfig | None = None) -> SegmentedFrame:
        """Segments for every visible object; never mutates object state."""
        noise = noise or self.noise
        rot = camera.rotation
        origin = camera.position
        tan_h, tan_v = math.tan(HFOV), math.tan(VFOV)
        focal = (IMAGE_WIDTH / 2) / tan_h
        names = self.visible_objects()
        cam_pts, cents = {}, {}
        for n in names:
            local = (self.cloud(n) - origin) @ rot
            cam_pts[n] = local
            cents[n] = (self.cloud(n).mean(axis=0) - origin) @ rot

        def inside(p):
            f = p[..., 0]
            with np.errstate(divide="ignore", invalid="ignore"):
                return ((f > 0.05) & (np.abs(p[..., 1]) <= tan_h * f)
                        & (np.abs(p[..., 2]) <= tan_v * f))

        segments = []
        frame_id = self.frame_counter
        self.frame_counter += 1
        for n in names:
            c = cents[n]
            if not inside(c) or self._occluded(n, c, cam_pts, inside):
                continue
            pts_cam = cam_pts[n]
            keep = inside(pts_cam)
            if not keep.any():
                continue
            world_pts = self.cloud(n)[keep]
            area = float(np.sum((focal * SAMPLE_SPACING / pts_cam[keep, 0]) ** 2))
            pieces = [np.nonzero(keep)[0]]
            if noise.p_oversegment > 0 and self.render_rng.random() < noise.p_oversegment:
                pieces = self._split(self.cloud(n), pieces[0])
            spec = self.specs[n]
            for idx in pieces:
                sub_keep = np.zeros_like(keep)
                sub_keep[idx] = True
                sub_area = area * idx.shape[0] / max(1, world_pts.shape[0])
                segments.append(Segment(
                    mask_id=len(segments), point_cloud=self.cloud(n)[idx].copy(),
                    segment_area=max(1, int(round(sub_area))),
                    touches_border=bool((~keep).any()), gt_label=spec.label,
                    gt_parts=self._gt_parts(n, sub_keep)))
        return SegmentedFrame(camera, segments, frame_id)

    def _occluded(self, name, c, cam_pts, inside) -> bool:
        u, v = c[1] / c[0], c[2] / c[0]
        for other, pts in cam_pts.items():
            if other == name or not self.specs[other].occluder:
                continue
            # contents sit around their container's centroid and never hide it
            if self.states[other].contained_in == name:
                continue
            front = pts[:, 0] < c[0] - 0.02
            if not front.any():
                continue
            p = pts[front]
            p = p[p[:, 0] > 0.05]
            if p.shape[0] == 0:
                continue
            close = (np.abs(p[:, 1] / p[:, 0] - u) < 0.01) & (np.abs(p[:, 2] / p[:, 0] - v) < 0.01)
            if int(close.sum()) >= 3:
                return True
        return False

    @staticmethod
    def _split(cloud: np.ndarray, idx: np.ndarray) -> list[np.ndarray]:
        """Two overlapping pieces along the longest horizontal extent."""
        pts = cloud[idx]
        ext = pts[:, :2].max(axis=0) - pts[:, :2].min(axis=0)
        coord = pts[:, int(np.argmax(ext))]
        q25, q75 = np.quantile(coord, [0.25, 0.75])
        a, b = idx[coord <= q75], idx[coord >= q25]
        if a.shape[0] == 0 or b.shape[0] == 0:
            return [idx]
        return [a, b]

    def _gt_parts(self, name: str, keep: np.ndarray) -> list[dict]:
        spec, g = self.specs[name], self.geometry[name]
        cloud = self.cloud(name)
        out = []
        for p in spec.parts:
            if p.skill is None:
                continue
            sl = g.part_slices[p.name]
            mask = keep[sl]
            if not mask.any():
                continue
            out.append({"name": p.name, "skill": p.skill, "verbs": list(p.verbs),
                        "points": cloud[sl][mask].copy()})
        return out

    # skill physics --------------------------------------------------------

    def holding(self) -> bool:
        return self.held is not None or self.fixture_grip is not None

    def open_gripper(self) -> None:
        self.fixture_grip = None

    def grasp_at(self, pose: geom.Pose3D) -> str | None:
        p = pose.position
        self.ee = p.copy()
        self.fixture_grip = None
        best, best_d = None, GRASP_TOL
        for n in self.visible_objects():
            spec, s = self.specs[n], self.states[n]
            if not spec.graspable or spec.fixed or s.pinned:
                continue
            d = float(np.min(np.linalg.norm(self.cloud(n) - p, axis=1)))
            if d <= best_d:
                best, best_d = n, d
        if best is None:
            return None
        if self.noise.p_slip > 0 and self.rng.random() < self.noise.p_slip:
            return None
        self._attach(best, p)
        return best

    def _attach(self, name: str, point: np.ndarray) -> None:
        s = self.states[name]
        s.grasp_local = yaw_matrix(s.yaw).T @ (point - s.position)
        s.held = True
        s.supported_by = None
        s.contained_in = None
        self.held = name
        # anything resting on the lifted object loses its support
        for other in self.order:
            o = self.states[other]
            if o.supported_by == name:
                o.supported_by = None
            if o.contained_in == name:
                o.contained_in = None

    def release_held(self, position: np.ndarray, mode: str) -> dict:
        name = self.held
        if name is None:
            return {"released": None}
        position = np.asarray(position, dtype=np.float64)
        self.ee = position.copy()
        target, top = None, -math.inf
        for n in self.visible_objects():
            pts = self.cloud(n)
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            if not (lo[0] - 0.01 <= position[0] <= hi[0] + 0.01
                    and lo[1] - 0.01 <= position[1] <= hi[1] + 0.01):
                continue
            if hi[2] > position[2] + 0.05 or hi[2] <= top:
                continue
            target, top = n, hi[2]
        s = self.states[name]
        s.held = False
        self.held = None
        cloud = self.cloud(name)
        if target is None:
            floor, s.supported_by, s.contained_in = 0.0, None, None
        elif self.specs[target].container:
            floor = float(self.cloud(target)[:, 2].min()) + 0.005
            s.supported_by, s.contained_in = target, target
        else:
            floor, s.supported_by, s.contained_in = float(top), target, None
        center = 0.5 * (cloud[:, :2].min(axis=0) + cloud[:, :2].max(axis=0))
        shift = np.array([position[0] - center[0], position[1] - center[1],
                          floor - cloud[:, 2].min()])
        s.position = s.position + shift
        return {"released": name, "onto": target, "mode": mode}

    def press_at(self, position: np.ndarray, direction: np.ndarray) -> str | None:
        d = np.asarray(direction, dtype=np.float64)
        d = d / np.linalg.norm(d)
        start = np.asarray(position, dtype=np.float64) - 0.3 * d
        self.ee = np.asarray(position, dtype=np.float64).copy()
        best = (math.inf, None, -1)
        for n in self.visible_objects():
            rel = self.cloud(n) - start
            t = rel @ d
            lateral = np.linalg.norm(rel - np.outer(t, d), axis=1)
            hit = (t >= 0) & (lateral <= PRESS_RAY_RADIUS)
            if not hit.any():
                continue
            i = int(np.argmin(np.where(hit, t, np.inf)))
            if t[i] < best[0]:
                best = (float(t[i]), n, i)
        _, n, i = best
        if n is None:
            return None
        k = self.geometry[n].owner[i]
        if k < 0:
            return None
        part = self.specs[n].parts[k]
        if not part.pressable:
            return None
        self.states[n].pressed[part.name] = True
        return f"{n}:{part.name}"

    def pull_at(self, position: np.ndarray, axis: np.ndarray, distance: float,
                mode: str) -> dict:
        p = np.asarray(position, dtype=np.float64)
        axis = np.asarray(axis, dtype=np.float64)
        self.ee = p.copy()
        self.fixture_grip = None
        best = (CONTACT_TOL, None, None)
        for n in self.visible_objects():
            for part in self.specs[n].parts:
                if mode not in part.grip_modes:
                    continue
                d = float(np.min(np.linalg.norm(self.part_cloud(n, part.name) - p, axis=1)))
                if d <= best[0]:
                    best = (d, n, part.name)
        _, n, part = best
        if n is None:
            return {"contact": None}
        spec, s = self.specs[n], self.states[n]
        out: dict = {"contact": f"{n}:{part}"}
        if spec.joint is not None:
            joint_axis = self.axis_world(n, spec.joint.axis)
            delta = distance * float(np.dot(axis, joint_axis)) / spec.joint.range
            s.open_fraction = float(np.clip(s.open_fraction + delta, 0.0, 1.0))
            out["open_fraction"] = round(s.open_fraction, 9)
        elif spec.detach_axis is not None and s.pinned:
            aligned = float(np.dot(axis, self.axis_world(n, spec.detach_axis))) >= DETACH_COS
            if aligned and mode == "pinch":
                s.pinned = False
                s.position = s.position + distance * axis
                self._attach(n, p + distance * axis)
                self.ee = p + distance * axis
                out["detached"] = n
                return out
            out["detached"] = None
        if mode == "pinch":
            self.fixture_grip = f"{n}:{part}"
        return out

    # bookkeeping ----------------------------------------------------------

    def grasped_part(self, name: str, part: str, tol: float = HANDLE_TOL) -> bool:
        """Whether the stored grasp point of ``name`` lies near ``part``."""
        s = self.states[name]
        if s.grasp_local is None:
            return False
        sl = self.geometry[name].part_slices[part]
        local = self.geometry[name].local[sl]
        return bool(np.min(np.linalg.norm(local - s.grasp_local, axis=1)) <= tol)

    def state_json(self) -> dict:
        r = lambda v: round(float(v), 9)  # noqa: E731
        return {
            "objects": {n: {"position": [r(v) for v in s.position], "yaw": r(s.yaw),
                            "open_fraction": r(s.open_fraction),
                            "pressed": dict(sorted(s.pressed.items())), "pinned": s.pinned,
                            "supported_by": s.supported_by, "contained_in": s.contained_in,
                            "held": s.held}
                        for n, s in self.states.items()},
            "base_pose": [r(v) for v in self.base_pose.to_list()],
            "ee": [r(v) for v in self.ee],
            "held": self.held, "fixture_grip": self.fixture_grip,
        }

    def digest(self) -> str:
        blob = json.dumps(self.state_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()
