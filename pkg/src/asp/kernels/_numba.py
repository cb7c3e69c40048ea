"""Numba-compiled implementations of the hot loops (see ``_numpy.py``)."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def footprint_costs(cells, origin_x, origin_y, res, xs, ys, cos_t, sin_t,
                    half_len, half_wid, lethal):
    h, w = cells.shape
    n_cand = xs.shape[0]
    out = np.empty(n_cand, dtype=np.float64)
    x_max = origin_x + w * res
    y_max = origin_y + h * res
    cx = np.empty(4)
    cy = np.empty(4)
    for i in range(n_cand):
        x = xs[i]
        y = ys[i]
        c = cos_t[i]
        s = sin_t[i]
        ax = c * half_len
        ay = s * half_len
        bx = -s * half_wid
        by = c * half_wid
        cx[0] = x + ax + bx
        cx[1] = x + ax - bx
        cx[2] = x - ax + bx
        cx[3] = x - ax - bx
        cy[0] = y + ay + by
        cy[1] = y + ay - by
        cy[2] = y - ay + by
        cy[3] = y - ay - by
        if cx.min() < origin_x or cx.max() > x_max or cy.min() < origin_y or cy.max() > y_max:
            out[i] = np.inf
            continue
        c0 = max(int(math.floor((cx.min() - origin_x) / res)), 0)
        c1 = min(int(math.floor((cx.max() - origin_x) / res)), w - 1)
        r0 = max(int(math.floor((cy.min() - origin_y) / res)), 0)
        r1 = min(int(math.floor((cy.max() - origin_y) / res)), h - 1)
        total = 0.0
        n = 0
        hit_lethal = False
        for row in range(r0, r1 + 1):
            gy = origin_y + (row + 0.5) * res - y
            for col in range(c0, c1 + 1):
                gx = origin_x + (col + 0.5) * res - x
                dx = gx * c + gy * s
                dy = -gx * s + gy * c
                if abs(dx) <= half_len and abs(dy) <= half_wid:
                    v = cells[row, col]
                    if v >= lethal:
                        hit_lethal = True
                        break
                    total += v
                    n += 1
            if hit_lethal:
                break
        if hit_lethal:
            out[i] = np.inf
        elif n == 0:
            col = min(max(int(math.floor((x - origin_x) / res)), 0), w - 1)
            row = min(max(int(math.floor((y - origin_y) / res)), 0), h - 1)
            v = cells[row, col]
            out[i] = np.inf if v >= lethal else float(v)
        else:
            out[i] = total / n
    return out


@njit(cache=True)
def reachable(free, start_r, start_c, goal_r, goal_c):
    h, w = free.shape
    if not (free[start_r, start_c] and free[goal_r, goal_c]):
        return False
    seen = np.zeros((h, w), dtype=np.bool_)
    queue = np.empty(h * w, dtype=np.int64)
    head = 0
    tail = 0
    queue[tail] = start_r * w + start_c
    tail += 1
    seen[start_r, start_c] = True
    while head < tail:
        cur = queue[head]
        head += 1
        r = cur // w
        c = cur % w
        if r == goal_r and c == goal_c:
            return True
        for dr in range(-1, 2):
            for dc in range(-1, 2):
                if dr == 0 and dc == 0:
                    continue
                nr = r + dr
                nc = c + dc
                if nr < 0 or nr >= h or nc < 0 or nc >= w:
                    continue
                if seen[nr, nc] or not free[nr, nc]:
                    continue
                seen[nr, nc] = True
                queue[tail] = nr * w + nc
                tail += 1
    return False


@njit(cache=True)
def count_within(a, b, radius):
    r2 = radius * radius
    total = 0
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            dz = a[i, 2] - b[j, 2]
            if dx * dx + dy * dy + dz * dz <= r2:
                total += 1
                break
    return total


@njit(cache=True)
def local_covariances(points, radius):
    n = points.shape[0]
    r2 = radius * radius
    counts = np.zeros(n, dtype=np.int64)
    covs = np.zeros((n, 3, 3), dtype=np.float64)
    mean = np.empty(3)
    second = np.empty((3, 3))
    for i in range(n):
        mean[:] = 0.0
        second[:, :] = 0.0
        cnt = 0
        for j in range(n):
            dx = points[i, 0] - points[j, 0]
            dy = points[i, 1] - points[j, 1]
            dz = points[i, 2] - points[j, 2]
            if dx * dx + dy * dy + dz * dz <= r2:
                cnt += 1
                for k in range(3):
                    mean[k] += points[j, k]
                    for m in range(3):
                        second[k, m] += points[j, k] * points[j, m]
        counts[i] = cnt
        for k in range(3):
            for m in range(3):
                covs[i, k, m] = second[k, m] / cnt - (mean[k] / cnt) * (mean[m] / cnt)
    return counts, covs
