"""Point-cloud and pose primitives.

Point clouds are plain ``(N, 3)`` float64 arrays in meters; a single point is
a length-3 array. Helpers here validate, never copy unless needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateGeometry, EmptyCloud, InvalidParameter

TWO_PI = 2.0 * math.pi
DEFAULT_VOXEL = 0.02
DEFAULT_OVERLAP_RADIUS = 0.02

_KEY_OFFSET = 1 << 20


def as_cloud(points, allow_empty: bool = False) -> np.ndarray:
    """Coerce ``points`` to a validated ``(N, 3)`` float64 array."""
    pc = np.asarray(points, dtype=np.float64)
    if pc.size == 0:
        if allow_empty:
            return np.zeros((0, 3))
        raise EmptyCloud("point cloud is empty")
    if pc.ndim == 1 and pc.shape[0] == 3:
        pc = pc.reshape(1, 3)
    if pc.ndim != 2 or pc.shape[1] != 3:
        raise InvalidParameter(f"expected an (N, 3) array, got shape {pc.shape}")
    if not np.isfinite(pc).all():
        raise InvalidParameter("point cloud contains NaN or inf")
    return pc


def normalize_angle(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod of values just below 2*pi can round up to exactly 2*pi
    return 0.0 if t >= TWO_PI else t


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise InvalidParameter("Pose2D components must be finite")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def p(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.theta]


def quat_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """(w, x, y, z) quaternion for intrinsic Z-Y-X (yaw, pitch, roll) angles."""
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class Pose3D:
    """Position plus a unit (w, x, y, z) quaternion."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        q = np.asarray(self.orientation, dtype=np.float64).reshape(4)
        if not (np.isfinite(pos).all() and np.isfinite(q).all()):
            raise InvalidParameter("Pose3D components must be finite")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise InvalidParameter(f"quaternion norm {np.linalg.norm(q)} is not 1")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", q)

    @classmethod
    def from_axes(cls, position, rotation: np.ndarray) -> "Pose3D":
        return cls(position, quat_from_matrix(np.asarray(rotation, dtype=np.float64)))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def to_list(self) -> list[float]:
        return [float(v) for v in (*self.position, *self.orientation)]

    @classmethod
    def from_list(cls, values) -> "Pose3D":
        values = [float(v) for v in values]
        q = np.array(values[3:7])
        return cls(np.array(values[:3]), q / np.linalg.norm(q))


def centroid(pc) -> np.ndarray:
    return as_cloud(pc).mean(axis=0)


def aabb_extents(pc) -> np.ndarray:
    pc = as_cloud(pc)
    return pc.max(axis=0) - pc.min(axis=0)


def voxel_keys(pc: np.ndarray, voxel: float) -> np.ndarray:
    """Integer voxel coordinates packed into one int64 per point."""
    idx = np.floor(pc / voxel).astype(np.int64) + _KEY_OFFSET
    if (idx < 0).any() or (idx >= (1 << 21)).any():
        raise InvalidParameter("point cloud extends beyond the voxel key range")
    return (idx[:, 0] << 42) | (idx[:, 1] << 21) | idx[:, 2]


def voxel_downsample(pc, voxel: float = DEFAULT_VOXEL) -> np.ndarray:
    """One point per occupied voxel: the centroid of the points inside it.

    Output rows are ordered by voxel key, so the result does not depend on
    input ordering.
    """
    if not voxel > 0:
        raise InvalidParameter(f"voxel size must be positive, got {voxel}")
    pc = as_cloud(pc)
    keys = voxel_keys(pc, voxel)
    uniq, inverse = np.unique(keys, return_inverse=True)
    counts = np.bincount(inverse, minlength=uniq.shape[0]).astype(np.float64)
    out = np.empty((uniq.shape[0], 3))
    for k in range(3):
        out[:, k] = np.bincount(inverse, weights=pc[:, k], minlength=uniq.shape[0]) / counts
    return out


def directed_overlap(a, b, radius: float = DEFAULT_OVERLAP_RADIUS) -> float:
    """Fraction of points of ``a`` that have a neighbor in ``b`` within ``radius``."""
    a = as_cloud(a)
    b = as_cloud(b)
    if not radius > 0:
        raise InvalidParameter(f"radius must be positive, got {radius}")
    # cheap reject on inflated bounding boxes
    if ((a.min(axis=0) - radius > b.max(axis=0)).any()
            or (b.min(axis=0) - radius > a.max(axis=0)).any()):
        return 0.0
    return kernels.count_within(a, b, radius) / a.shape[0]


def overlap_ratio(a, b, radius: float = DEFAULT_OVERLAP_RADIUS) -> float:
    """Symmetric point overlap: the larger of the two directed fractions."""
    return max(directed_overlap(a, b, radius), directed_overlap(b, a, radius))


def iou_3d(a, b, voxel: float = DEFAULT_VOXEL) -> float:
    if not voxel > 0:
        raise InvalidParameter(f"voxel size must be positive, got {voxel}")
    ka = np.unique(voxel_keys(as_cloud(a), voxel))
    kb = np.unique(voxel_keys(as_cloud(b), voxel))
    inter = np.intersect1d(ka, kb, assume_unique=True).shape[0]
    union = ka.shape[0] + kb.shape[0] - inter
    return inter / union


def dominant_normal(pc) -> np.ndarray:
    """Unit eigenvector of the point covariance with the smallest eigenvalue.

    Sign is arbitrary; callers orient it.
    """
    pc = as_cloud(pc)
    if pc.shape[0] < 3:
        raise DegenerateGeometry("need at least 3 points to fit a normal")
    centered = pc - pc.mean(axis=0)
    cov = centered.T @ centered / pc.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    scale = max(evals[2], 1e-300)
    if evals[1] <= 1e-10 * scale or evals[2] <= 1e-18:
        raise DegenerateGeometry("points are collinear or coincident")
    n = evecs[:, 0]
    return n / np.linalg.norm(n)


def orient_away(normal: np.ndarray, origin: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Flip ``normal`` so it points from ``reference`` toward ``origin``."""
    return -normal if float(np.dot(normal, origin - reference)) < 0.0 else normal


def nearest_distances(query: np.ndarray, cloud: np.ndarray) -> np.ndarray:
    """Distance from each query point to its nearest neighbor in ``cloud``."""
    query = np.atleast_2d(query)
    out = np.empty(query.shape[0])
    for lo in range(0, query.shape[0], 1024):
        d = query[lo:lo + 1024, None, :] - cloud[None, :, :]
        out[lo:lo + 1024] = np.sqrt(np.min(np.einsum("ijk,ijk->ij", d, d), axis=1))
    return out
