"""Affordance-guided navigation on a 2D cost grid.

Goal search samples base poses on circles around the target, rejects
colliding footprints and minimizes footprint cost plus a pull toward the
preferred viewing position derived from the affordance normal.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field

import numpy as np

from . import geom, kernels
from .errors import InvalidParameter, NavigationFailed, NoHorizontalNormal, NoValidPose

LETHAL = 254


@dataclass
class OccupancyGrid:
    """Row-major cost grid; row index grows with y, column index with x.

    ``origin`` is the world position of the outer corner of cell (0, 0).
    """

    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray

    def __post_init__(self):
        if not self.resolution > 0:
            raise InvalidParameter(f"resolution must be positive, got {self.resolution}")
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.size == 0:
            raise InvalidParameter("grid cells must be a non-empty 2D array")
        self.cells = np.ascontiguousarray(np.clip(cells, 0, 255), dtype=np.uint8)
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @classmethod
    def empty(cls, width_m: float, height_m: float, resolution: float = 0.05,
              origin: tuple[float, float] = (0.0, 0.0)) -> "OccupancyGrid":
        w = int(round(width_m / resolution))
        h = int(round(height_m / resolution))
        return cls(resolution, origin, np.zeros((h, w), dtype=np.uint8))

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        col = int(math.floor((x - self.origin[0]) / self.resolution))
        row = int(math.floor((y - self.origin[1]) / self.resolution))
        return row, col

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (self.origin[0] + (col + 0.5) * self.resolution,
                self.origin[1] + (row + 0.5) * self.resolution)

    def fill_rect(self, x0: float, y0: float, x1: float, y1: float, cost: int) -> None:
        """Raise every cell whose center lies in the box to at least ``cost``."""
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        cols = (xs >= min(x0, x1)) & (xs <= max(x0, x1))
        rows = (ys >= min(y0, y1)) & (ys <= max(y0, y1))
        block = np.ix_(rows, cols)
        self.cells[block] = np.maximum(self.cells[block], np.uint8(cost))

    def inflate(self, radius: float, cost: int, lethal: int = LETHAL) -> "OccupancyGrid":
        """Copy where every non-lethal cell within ``radius`` of a lethal cell
        costs at least ``cost``."""
        lethal_mask = self.cells >= lethal
        near = np.zeros_like(lethal_mask)
        k = int(math.ceil(radius / self.resolution))
        h, w = lethal_mask.shape
        for dr in range(-k, k + 1):
            for dc in range(-k, k + 1):
                if (dr * dr + dc * dc) * self.resolution ** 2 > radius ** 2 + 1e-12:
                    continue
                src = lethal_mask[max(0, -dr):h - max(0, dr), max(0, -dc):w - max(0, dc)]
                near[max(0, dr):h - max(0, -dr), max(0, dc):w - max(0, -dc)] |= src
        cells = self.cells.copy()
        bump = near & ~lethal_mask
        cells[bump] = np.maximum(cells[bump], np.uint8(cost))
        return OccupancyGrid(self.resolution, self.origin, cells)

    def to_json(self) -> dict:
        return {"resolution": self.resolution, "origin": list(self.origin),
                "width": self.width, "height": self.height,
                "data": base64.b64encode(self.cells.tobytes()).decode("ascii")}

    @classmethod
    def from_json(cls, doc: dict) -> "OccupancyGrid":
        raw = np.frombuffer(base64.b64decode(doc["data"]), dtype=np.uint8)
        if raw.size != doc["width"] * doc["height"]:
            raise InvalidParameter("grid data length does not match width*height")
        return cls(doc["resolution"], tuple(doc["origin"]),
                   raw.reshape(doc["height"], doc["width"]).copy())


@dataclass(frozen=True)
class Footprint:
    half_length: float = 0.30
    half_width: float = 0.25

    def __post_init__(self):
        if not (self.half_length > 0 and self.half_width > 0):
            raise InvalidParameter("footprint extents must be positive")


@dataclass
class NavConfig:
    radii: tuple[float, ...] = (0.85, 1.0, 1.2, 1.5)
    lambda_aff: float = 2.0
    angular_step: float = math.radians(10.0)
    lethal: int = LETHAL
    footprint: Footprint = field(default_factory=Footprint)

    def __post_init__(self):
        r = tuple(float(v) for v in self.radii)
        if not r or r[0] <= 0 or any(b <= a for a, b in zip(r, r[1:])):
            raise InvalidParameter(f"radii must be positive and strictly increasing: {r}")
        self.radii = r
        if self.lambda_aff < 0:
            raise InvalidParameter("lambda_aff must be non-negative")
        if not 0 < self.angular_step <= math.pi:
            raise InvalidParameter("angular_step must be in (0, pi]")

    @property
    def r0(self) -> float:
        return self.radii[0]


def footprint_cost(grid: OccupancyGrid, pose: geom.Pose2D, fp: Footprint | None = None,
                   lethal: int = LETHAL) -> float:
    fp = fp or Footprint()
    return float(kernels.footprint_costs(
        grid.cells, grid.origin, grid.resolution, np.array([pose.x]), np.array([pose.y]),
        np.array([pose.theta]), fp.half_length, fp.half_width, lethal)[0])


def preferred_view_position(aff_cloud, obj_centroid, r: float) -> np.ndarray:
    """Point at distance ``r`` from the object along the affordance's outward
    horizontal normal."""
    aff = geom.as_cloud(aff_cloud)
    c = np.asarray(obj_centroid, dtype=np.float64)
    n = geom.dominant_normal(aff)
    if float(np.dot(n, geom.centroid(aff) - c)) < 0:
        n = -n
    h = math.hypot(n[0], n[1])
    if h < 0.1:
        raise NoHorizontalNormal(f"affordance normal is near vertical (horizontal norm {h:.3f})")
    return np.array([c[0] + r * n[0] / h, c[1] + r * n[1] / h])


@dataclass
class Candidates:
    radius: float
    xs: np.ndarray
    ys: np.ndarray
    thetas: np.ndarray
    costs: np.ndarray
    objective: np.ndarray


def ring_candidates(center_xy, r: float, step: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = max(1, int(round(2.0 * math.pi / step)))
    phis = np.arange(n) * (2.0 * math.pi / n)
    xs = center_xy[0] + r * np.cos(phis)
    ys = center_xy[1] + r * np.sin(phis)
    thetas = np.array([geom.normalize_angle(p + math.pi) for p in phis])
    return xs, ys, thetas


def _evaluate(grid, center_xy, p_aff, r, cfg: NavConfig) -> Candidates:
    xs, ys, thetas = ring_candidates(center_xy, r, cfg.angular_step)
    costs = kernels.footprint_costs(grid.cells, grid.origin, grid.resolution, xs, ys, thetas,
                                    cfg.footprint.half_length, cfg.footprint.half_width,
                                    cfg.lethal)
    obj = costs.copy()
    if p_aff is not None and cfg.lambda_aff > 0:
        obj = obj + cfg.lambda_aff * np.hypot(xs - p_aff[0], ys - p_aff[1])
    return Candidates(r, xs, ys, thetas, costs, obj)


def select_nav_goal(grid: OccupancyGrid, obj_centroid, p_aff=None,
                    cfg: NavConfig | None = None, trace: list | None = None) -> geom.Pose2D:
    """Lowest-objective collision-free pose facing the object.

    Radii are tried in order and the first ring with any finite-cost pose
    wins; ``trace`` (if given) collects the evaluated :class:`Candidates`.
    """
    cfg = cfg or NavConfig()
    c = np.asarray(obj_centroid, dtype=np.float64)[:2]
    pa = None if p_aff is None else np.asarray(p_aff, dtype=np.float64)[:2]
    for r in cfg.radii:
        cand = _evaluate(grid, c, pa, r, cfg)
        if trace is not None:
            trace.append(cand)
        finite = np.isfinite(cand.costs)
        if not finite.any():
            continue
        scores = np.where(finite, cand.objective, np.inf)
        i = int(np.argmin(scores))
        return geom.Pose2D(float(cand.xs[i]), float(cand.ys[i]), float(cand.thetas[i]))
    raise NoValidPose(f"no collision-free pose within {cfg.radii[-1]:.2f} m of the object")


def navigate(world, grid: OccupancyGrid, goal: geom.Pose2D, lethal: int = LETHAL) -> geom.Pose2D:
    """Move ``world.base_pose`` to ``goal`` if an 8-connected free path exists."""
    start = grid.cell_of(world.base_pose.x, world.base_pose.y)
    end = grid.cell_of(goal.x, goal.y)
    if not grid.in_bounds(*end):
        raise NavigationFailed("goal lies outside the map")
    if not grid.in_bounds(*start):
        raise NavigationFailed("robot is outside the map")
    free = grid.cells < lethal
    if not free[end]:
        raise NavigationFailed("goal cell is occupied")
    if not kernels.reachable(free, start, end):
        raise NavigationFailed("no path from the current base pose to the goal")
    world.base_pose = goal
    return goal


def grid_image(grid: OccupancyGrid, trace: list[Candidates] | None = None,
               goal: geom.Pose2D | None = None) -> np.ndarray:
    """Grayscale picture (top row = max y): free white, cost darker, candidates
    mid-gray, chosen pose black."""
    img = (255 - grid.cells.astype(np.int32)).clip(0, 255).astype(np.uint8)

    def mark(x, y, value):
        r, c = grid.cell_of(x, y)
        if grid.in_bounds(r, c):
            img[r, c] = value

    for cand in trace or []:
        for x, y, f in zip(cand.xs, cand.ys, cand.costs):
            mark(x, y, 160 if np.isfinite(f) else 96)
    if goal is not None:
        for t in np.linspace(0.0, 0.3, 7):
            mark(goal.x + t * math.cos(goal.theta), goal.y + t * math.sin(goal.theta), 0)
    return img[::-1]


def write_pgm(path, image: np.ndarray) -> None:
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())
