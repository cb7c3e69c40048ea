"""Deterministic surface samplers for scene templates.

All shapes are built in an object frame whose origin sits at the bottom
center of the object, z up. Sampling is on regular grids so the same
arguments always give the same points.
"""

from __future__ import annotations

import math

import numpy as np


def _grid(a: float, b: float, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    na = max(2, int(math.ceil(a / spacing)) + 1)
    nb = max(2, int(math.ceil(b / spacing)) + 1)
    u, v = np.meshgrid(np.linspace(-a / 2, a / 2, na), np.linspace(-b / 2, b / 2, nb))
    return u.ravel(), v.ravel()


def hplate(sx: float, sy: float, z: float, spacing: float, cx: float = 0.0,
           cy: float = 0.0) -> np.ndarray:
    """Horizontal rectangle at height ``z``."""
    u, v = _grid(sx, sy, spacing)
    return np.column_stack([u + cx, v + cy, np.full_like(u, z)])


def vplate_x(sy: float, sz: float, x: float, spacing: float, cy: float = 0.0,
             cz: float = 0.0) -> np.ndarray:
    """Rectangle in a plane of constant x (normal along x)."""
    u, v = _grid(sy, sz, spacing)
    return np.column_stack([np.full_like(u, x), u + cy, v + cz])


def vplate_y(sx: float, sz: float, y: float, spacing: float, cx: float = 0.0,
             cz: float = 0.0) -> np.ndarray:
    u, v = _grid(sx, sz, spacing)
    return np.column_stack([u + cx, np.full_like(u, y), v + cz])


def box(sx: float, sy: float, sz: float, spacing: float, top: bool = True,
        bottom: bool = True) -> np.ndarray:
    """Closed (or open-topped) box surface resting on z = 0."""
    faces = [
        vplate_x(sy, sz, -sx / 2, spacing, cz=sz / 2),
        vplate_x(sy, sz, sx / 2, spacing, cz=sz / 2),
        vplate_y(sx, sz, -sy / 2, spacing, cz=sz / 2),
        vplate_y(sx, sz, sy / 2, spacing, cz=sz / 2),
    ]
    if top:
        faces.append(hplate(sx, sy, sz, spacing))
    if bottom:
        faces.append(hplate(sx, sy, 0.0, spacing))
    return dedupe(np.vstack(faces))


def cylinder(radius: float, height: float, spacing: float, top: bool = True,
             bottom: bool = True, z0: float = 0.0) -> np.ndarray:
    n_ang = max(8, int(math.ceil(2 * math.pi * radius / spacing)))
    n_h = max(2, int(math.ceil(height / spacing)) + 1)
    ang = np.arange(n_ang) * (2 * math.pi / n_ang)
    zs = np.linspace(z0, z0 + height, n_h)
    a, z = np.meshgrid(ang, zs)
    parts = [np.column_stack([radius * np.cos(a.ravel()), radius * np.sin(a.ravel()), z.ravel()])]
    if top:
        parts.append(disk(radius, spacing, z0 + height))
    if bottom:
        parts.append(disk(radius, spacing, z0))
    return dedupe(np.vstack(parts))


def disk(radius: float, spacing: float, z: float = 0.0) -> np.ndarray:
    """Horizontal filled disk of concentric rings."""
    pts = [[0.0, 0.0, z]]
    n_r = max(1, int(math.ceil(radius / spacing)))
    for k in range(1, n_r + 1):
        r = radius * k / n_r
        n = max(6, int(math.ceil(2 * math.pi * r / spacing)))
        ang = np.arange(n) * (2 * math.pi / n)
        pts.extend(np.column_stack([r * np.cos(ang), r * np.sin(ang), np.full(n, z)]).tolist())
    return np.asarray(pts)


def sphere(radius: float, spacing: float, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    n_lat = max(4, int(math.ceil(math.pi * radius / spacing)))
    pts = []
    for i in range(n_lat + 1):
        phi = math.pi * i / n_lat
        r = radius * math.sin(phi)
        z = radius * math.cos(phi)
        n = max(1, int(math.ceil(2 * math.pi * r / spacing)))
        ang = np.arange(n) * (2 * math.pi / n)
        pts.extend(np.column_stack([r * np.cos(ang), r * np.sin(ang), np.full(n, z)]).tolist())
    return np.asarray(pts) + np.asarray(center, dtype=np.float64)


def rotate_to_x(points: np.ndarray) -> np.ndarray:
    """Map the z axis of a shape onto +x (x <- z, z <- -x)."""
    return np.column_stack([points[:, 2], points[:, 1], -points[:, 0]])


def arc_handle(radius: float, tube: float, spacing: float, center_x: float,
               center_z: float) -> np.ndarray:
    """Half ring in the xz plane bulging toward +x, like a mug handle."""
    n_ang = max(8, int(math.ceil(math.pi * radius / spacing)))
    n_tube = max(6, int(math.ceil(2 * math.pi * tube / spacing)))
    pts = []
    for i in range(n_ang + 1):
        a = -math.pi / 2 + math.pi * i / n_ang
        cx = center_x + radius * math.cos(a)
        cz = center_z + radius * math.sin(a)
        for j in range(n_tube):
            b = 2 * math.pi * j / n_tube
            pts.append([cx + tube * math.cos(b) * math.cos(a), tube * math.sin(b),
                        cz + tube * math.cos(b) * math.sin(a)])
    return np.asarray(pts)


def dedupe(points: np.ndarray, decimals: int = 6) -> np.ndarray:
    _, idx = np.unique(np.round(points, decimals), axis=0, return_index=True)
    return points[np.sort(idx)]


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
