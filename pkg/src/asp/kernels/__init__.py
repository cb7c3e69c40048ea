"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``ASP_DISABLE_NUMBA`` is unset (or ``0``/``false``). Both paths are
importable directly as ``numpy_impl`` and ``numba_impl`` for comparison.
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np

from . import _numpy as numpy_impl

try:
    from . import _numba as numba_impl
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None
    warnings.warn("numba unavailable; using the numpy kernels")


def _numba_requested() -> bool:
    flag = os.environ.get("ASP_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


BACKEND = "numba" if (numba_impl is not None and _numba_requested()) else "numpy"
_impl = numba_impl if BACKEND == "numba" else numpy_impl


def footprint_costs(cells: np.ndarray, origin: tuple[float, float], res: float,
                    xs: np.ndarray, ys: np.ndarray, thetas: np.ndarray,
                    half_len: float, half_wid: float, lethal: int) -> np.ndarray:
    """Mean cell cost under an oriented rectangle for each candidate pose.

    Returns ``inf`` for candidates whose footprint touches a lethal cell or
    leaves the grid.
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    # trig is evaluated here so both backends see bit-identical inputs
    cos_t = np.array([math.cos(t) for t in thetas], dtype=np.float64)
    sin_t = np.array([math.sin(t) for t in thetas], dtype=np.float64)
    return _impl.footprint_costs(
        np.ascontiguousarray(cells, dtype=np.uint8), float(origin[0]), float(origin[1]),
        float(res), np.ascontiguousarray(xs, dtype=np.float64),
        np.ascontiguousarray(ys, dtype=np.float64), cos_t, sin_t,
        float(half_len), float(half_wid), int(lethal))


def reachable(free: np.ndarray, start: tuple[int, int], goal: tuple[int, int]) -> bool:
    """8-connected reachability between two (row, col) cells of a boolean grid."""
    return bool(_impl.reachable(np.ascontiguousarray(free, dtype=np.bool_),
                                int(start[0]), int(start[1]), int(goal[0]), int(goal[1])))


def count_within(a: np.ndarray, b: np.ndarray, radius: float) -> int:
    """Number of points of ``a`` with at least one point of ``b`` within ``radius``."""
    return int(_impl.count_within(np.ascontiguousarray(a, dtype=np.float64),
                                  np.ascontiguousarray(b, dtype=np.float64), float(radius)))


def local_covariances(points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Neighbor counts and population covariances of each point's radius ball."""
    return _impl.local_covariances(np.ascontiguousarray(points, dtype=np.float64), float(radius))


__all__ = ["BACKEND", "footprint_costs", "reachable", "count_within",
           "local_covariances", "numpy_impl", "numba_impl"]
