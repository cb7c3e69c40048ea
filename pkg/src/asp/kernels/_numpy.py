"""Pure-numpy implementations of the hot loops.

Every function here mirrors the signature of its numba twin in ``_numba.py``
and must produce identical results on identical inputs.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 2048
_SWEEP = 128


def footprint_costs(cells, origin_x, origin_y, res, xs, ys, cos_t, sin_t,
                    half_len, half_wid, lethal):
    h, w = cells.shape
    out = np.empty(xs.shape[0], dtype=np.float64)
    x_max = origin_x + w * res
    y_max = origin_y + h * res
    for i in range(xs.shape[0]):
        x, y, c, s = xs[i], ys[i], cos_t[i], sin_t[i]
        ax, ay = c * half_len, s * half_len
        bx, by = -s * half_wid, c * half_wid
        cx = np.array([x + ax + bx, x + ax - bx, x - ax + bx, x - ax - bx])
        cy = np.array([y + ay + by, y + ay - by, y - ay + by, y - ay - by])
        if (cx.min() < origin_x or cx.max() > x_max
                or cy.min() < origin_y or cy.max() > y_max):
            out[i] = np.inf
            continue
        c0 = max(int(np.floor((cx.min() - origin_x) / res)), 0)
        c1 = min(int(np.floor((cx.max() - origin_x) / res)), w - 1)
        r0 = max(int(np.floor((cy.min() - origin_y) / res)), 0)
        r1 = min(int(np.floor((cy.max() - origin_y) / res)), h - 1)
        cols = np.arange(c0, c1 + 1)
        rows = np.arange(r0, r1 + 1)
        ccx = origin_x + (cols + 0.5) * res - x
        ccy = origin_y + (rows + 0.5) * res - y
        gx, gy = np.meshgrid(ccx, ccy)
        dx = gx * c + gy * s
        dy = -gx * s + gy * c
        mask = (np.abs(dx) <= half_len) & (np.abs(dy) <= half_wid)
        block = cells[r0:r1 + 1, c0:c1 + 1]
        n = int(mask.sum())
        if n == 0:
            col = min(max(int(np.floor((x - origin_x) / res)), 0), w - 1)
            row = min(max(int(np.floor((y - origin_y) / res)), 0), h - 1)
            v = float(cells[row, col])
            out[i] = np.inf if v >= lethal else v
            continue
        vals = block[mask].astype(np.float64)
        if vals.max() >= lethal:
            out[i] = np.inf
        else:
            out[i] = vals.sum() / n
    return out


def reachable(free, start_r, start_c, goal_r, goal_c):
    if not (free[start_r, start_c] and free[goal_r, goal_c]):
        return False
    reached = np.zeros_like(free, dtype=bool)
    reached[start_r, start_c] = True
    while True:
        grown = reached.copy()
        grown[1:, :] |= reached[:-1, :]
        grown[:-1, :] |= reached[1:, :]
        grown[:, 1:] |= reached[:, :-1]
        grown[:, :-1] |= reached[:, 1:]
        grown[1:, 1:] |= reached[:-1, :-1]
        grown[:-1, :-1] |= reached[1:, 1:]
        grown[1:, :-1] |= reached[:-1, 1:]
        grown[:-1, 1:] |= reached[1:, :-1]
        grown &= free
        if grown[goal_r, goal_c]:
            return True
        if np.array_equal(grown, reached):
            return False
        reached = grown


def count_within(a, b, radius):
    r2 = radius * radius
    # sweep over x-sorted points; the slack keeps the window a superset of
    # the exact neighbors so the final test below decides every hit
    pad = radius * (1.0 + 1e-6) + 1e-12
    bs = b[np.argsort(b[:, 0], kind="stable")]
    a_sorted = a[np.argsort(a[:, 0], kind="stable")]
    total = 0
    for lo in range(0, a_sorted.shape[0], _SWEEP):
        block = a_sorted[lo:lo + _SWEEP]
        i0 = np.searchsorted(bs[:, 0], block[0, 0] - pad, side="left")
        i1 = np.searchsorted(bs[:, 0], block[-1, 0] + pad, side="right")
        cand = bs[i0:i1]
        lo_yz = block[:, 1:].min(axis=0) - pad
        hi_yz = block[:, 1:].max(axis=0) + pad
        cand = cand[((cand[:, 1:] >= lo_yz) & (cand[:, 1:] <= hi_yz)).all(axis=1)]
        if cand.shape[0] == 0:
            continue
        d = block[:, None, :] - cand[None, :, :]
        d2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
        total += int((d2 <= r2).any(axis=1).sum())
    return total


def local_covariances(points, radius):
    n = points.shape[0]
    r2 = radius * radius
    counts = np.zeros(n, dtype=np.int64)
    covs = np.zeros((n, 3, 3), dtype=np.float64)
    for lo in range(0, n, _CHUNK):
        block = points[lo:lo + _CHUNK]
        d = block[:, None, :] - points[None, :, :]
        d2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
        mask = d2 <= r2
        for bi in range(block.shape[0]):
            nb = points[mask[bi]]
            cnt = nb.shape[0]
            # add.accumulate sums strictly left to right, like the numba loop
            mean = np.add.accumulate(nb, axis=0)[-1]
            second = np.add.accumulate(nb[:, :, None] * nb[:, None, :], axis=0)[-1]
            covs[lo + bi] = second / cnt - (mean[:, None] / cnt) * (mean[None, :] / cnt)
            counts[lo + bi] = cnt
    return counts, covs
