import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asp import geom
from asp.errors import InvalidParameter, NavigationFailed, NoHorizontalNormal, NoValidPose
from asp.nav import (LETHAL, Footprint, NavConfig, OccupancyGrid, footprint_cost, grid_image,
                     navigate, preferred_view_position, ring_candidates, select_nav_goal,
                     write_pgm)


def _face(normal, center=(0.0, 0.0, 0.5), size=0.2, n=7):
    normal = np.asarray(normal, float)
    a = np.cross(normal, [0.0, 0.0, 1.0])
    if np.linalg.norm(a) < 1e-9:
        a = np.array([1.0, 0.0, 0.0])
    a /= np.linalg.norm(a)
    b = np.cross(normal, a)
    u, v = np.meshgrid(np.linspace(-size / 2, size / 2, n), np.linspace(-size / 2, size / 2, n))
    return np.asarray(center) + u.ravel()[:, None] * a + v.ravel()[:, None] * b


def _wrap(d):
    return math.atan2(math.sin(d), math.cos(d))


def _cell_mean_oracle(grid, pose, fp, lethal=LETHAL):
    """Mean cost over cells whose centers fall inside the oriented rectangle."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    vals = []
    for r in range(grid.height):
        for col in range(grid.width):
            x, y = grid.cell_center(r, col)
            dx, dy = x - pose.x, y - pose.y
            u, v = c * dx + s * dy, -s * dx + c * dy
            if abs(u) <= fp.half_length and abs(v) <= fp.half_width:
                vals.append(int(grid.cells[r, col]))
    if not vals or max(vals) >= lethal:
        return math.inf
    return float(np.mean(vals))


def test_free_grid_costs_zero():
    g = OccupancyGrid.empty(4, 4)
    assert footprint_cost(g, geom.Pose2D(2, 2, 0.3)) == 0.0


def test_lethal_overlap_is_infinite():
    g = OccupancyGrid.empty(4, 4)
    g.fill_rect(2.0, 2.0, 2.1, 2.1, LETHAL)
    assert footprint_cost(g, geom.Pose2D(2, 2, 0)) == math.inf


def test_outside_grid_is_lethal():
    g = OccupancyGrid.empty(2, 2)
    assert footprint_cost(g, geom.Pose2D(0.1, 0.1, 0)) == math.inf


def test_half_cost_footprint():
    g = OccupancyGrid.empty(4, 4)
    g.fill_rect(0.0, 0.0, 2.0, 4.0, 100)  # everything west of x=2
    pose = geom.Pose2D(2.0, 2.0, 0.0)
    fp = Footprint()
    got = footprint_cost(g, pose, fp)
    assert got == pytest.approx(_cell_mean_oracle(g, pose, fp))
    assert got == pytest.approx(50.0, abs=100 * g.resolution / (2 * fp.half_length) + 1e-9)


@given(st.floats(1.0, 3.0), st.floats(1.0, 3.0), st.floats(-math.pi, math.pi),
       st.integers(0, 2**31 - 1))
def test_footprint_matches_cell_enumeration(x, y, theta, seed):
    rng = np.random.default_rng(seed)
    g = OccupancyGrid(0.1, (0.0, 0.0), rng.integers(0, 200, size=(40, 40)))
    pose = geom.Pose2D(x, y, theta)
    fp = Footprint(0.3, 0.25)
    assert footprint_cost(g, pose, fp) == pytest.approx(_cell_mean_oracle(g, pose, fp))


def test_preferred_view_position_examples():
    c = np.array([0.0, 0.0, 0.5])
    p = preferred_view_position(_face([1, 0, 0], center=(0.2, 0.0, 0.5)), c, 0.85)
    assert np.allclose(p, [0.85, 0.0], atol=1e-9)
    p = preferred_view_position(_face([0, -1, 0], center=(0.0, -0.2, 0.5)), c, 0.85)
    assert np.allclose(p, [0.0, -0.85], atol=1e-9)
    with pytest.raises(NoHorizontalNormal):
        preferred_view_position(_face([0, 0, 1], center=(0.0, 0.0, 0.8)), c, 0.85)


def test_preferred_view_sign_follows_offset():
    # the fitted normal's sign is arbitrary; the result is not
    c = np.array([1.0, 1.0, 0.3])
    face = _face([-1, 0, 0], center=(0.8, 1.0, 0.3))
    assert np.allclose(preferred_view_position(face, c, 1.0), [0.0, 1.0], atol=1e-9)


def test_ring_faces_center():
    xs, ys, th = ring_candidates((1.0, 2.0), 0.85, math.radians(10))
    assert len(xs) == 36
    assert np.allclose(np.hypot(xs - 1.0, ys - 2.0), 0.85)
    heading = np.arctan2(2.0 - ys, 1.0 - xs)
    assert np.allclose([_wrap(h - t) for h, t in zip(heading, th)], 0, atol=1e-12)


def _brute_force(grid, center, p_aff, cfg):
    for r in cfg.radii:
        best = None
        xs, ys, th = ring_candidates(center, r, cfg.angular_step)
        for i in range(len(xs)):
            pose = geom.Pose2D(xs[i], ys[i], th[i])
            f = _cell_mean_oracle(grid, pose, cfg.footprint, cfg.lethal)
            if not math.isfinite(f):
                continue
            obj = f
            if p_aff is not None and cfg.lambda_aff > 0:
                obj += cfg.lambda_aff * math.hypot(xs[i] - p_aff[0], ys[i] - p_aff[1])
            if best is None or obj < best[0] - 1e-9:
                best = (obj, pose)
        if best is not None:
            return best[1]
    return None


def _random_room(rng, res=0.1, size=4.0):
    n = int(size / res)
    g = OccupancyGrid(res, (0.0, 0.0), rng.integers(0, 80, size=(n, n)))
    for _ in range(int(rng.integers(0, 5))):
        x, y = rng.uniform(0, size, 2)
        g.fill_rect(x, y, x + rng.uniform(0.2, 1.0), y + rng.uniform(0.2, 1.0), LETHAL)
    return g


@pytest.mark.parametrize("seed", range(12))
def test_select_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    g = _random_room(rng)
    center = rng.uniform(1.5, 2.5, 2)
    phi = rng.uniform(0, 2 * math.pi)
    p_aff = center + 0.85 * np.array([math.cos(phi), math.sin(phi)])
    cfg = NavConfig(angular_step=math.radians(30))
    want = _brute_force(g, center, p_aff, cfg)
    if want is None:
        with pytest.raises(NoValidPose):
            select_nav_goal(g, center, p_aff, cfg)
        return
    got = select_nav_goal(g, center, p_aff, cfg)
    assert (got.x, got.y, got.theta) == pytest.approx((want.x, want.y, want.theta))


def test_empty_grid_goes_to_preferred_position():
    g = OccupancyGrid.empty(4, 4, origin=(-2, -2))
    goal = select_nav_goal(g, [0.0, 0.0], [0.85, 0.0])
    assert (goal.x, goal.y) == pytest.approx((0.85, 0.0))
    assert abs(_wrap(goal.theta - math.pi)) < 1e-12


def test_wall_on_preferred_side_forces_other_side():
    g = OccupancyGrid.empty(4, 4, origin=(-2, -2))
    g.fill_rect(0.3, -2.0, 2.0, 2.0, LETHAL)
    assert footprint_cost(g, geom.Pose2D(0.85, 0.0, math.pi)) == math.inf
    goal = select_nav_goal(g, [0.0, 0.0], [0.85, 0.0])
    # the closest free poses to p_aff sit right at the wall edge
    assert goal.x < 0.3 - Footprint().half_width + 1e-9
    assert math.isfinite(footprint_cost(g, goal))


def test_no_affordance_term_picks_cheapest():
    g = OccupancyGrid.empty(4, 4, origin=(-2, -2))
    g.cells[:] = 50
    g.cells[g.cell_of(0.0, 0.3)[0]:, :] = 0  # the north side is free
    cfg = NavConfig(lambda_aff=0.0)
    goal = select_nav_goal(g, [0.0, 0.0], [0.85, 0.0], cfg)
    assert goal.y > 0.5
    assert footprint_cost(g, goal) == 0.0


def test_relaxation_uses_first_feasible_radius():
    g = OccupancyGrid.empty(5, 5, origin=(-2.5, -2.5))
    # a lethal annulus that blocks every pose on the 0.85 m ring
    for r in range(g.height):
        for c in range(g.width):
            x, y = g.cell_center(r, c)
            if 0.55 <= math.hypot(x, y) <= 0.75:
                g.cells[r, c] = LETHAL
    trace = []
    goal = select_nav_goal(g, [0.0, 0.0], None, NavConfig(), trace)
    assert [t.radius for t in trace] == [0.85, 1.0, 1.2]
    assert not np.isfinite(trace[0].costs).any()
    assert math.hypot(goal.x, goal.y) == pytest.approx(1.2)


def test_fully_blocked_raises():
    g = OccupancyGrid(0.05, (-2, -2), np.full((80, 80), LETHAL))
    with pytest.raises(NoValidPose):
        select_nav_goal(g, [0, 0])


@pytest.mark.parametrize("seed", range(6))
def test_lambda_monotone(seed):
    rng = np.random.default_rng(100 + seed)
    g = _random_room(rng)
    center = rng.uniform(1.5, 2.5, 2)
    p_aff = center + rng.normal(size=2)
    dists = []
    for lam in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0]:
        try:
            goal = select_nav_goal(g, center, p_aff, NavConfig(lambda_aff=lam))
        except NoValidPose:
            return
        dists.append(math.hypot(goal.x - p_aff[0], goal.y - p_aff[1]))
    assert all(b <= a + 1e-9 for a, b in zip(dists, dists[1:]))


@given(st.integers(0, 2**31 - 1))
def test_goal_faces_object_and_is_collision_free(seed):
    rng = np.random.default_rng(seed)
    g = _random_room(rng)
    center = rng.uniform(1.5, 2.5, 2)
    cfg = NavConfig()
    try:
        goal = select_nav_goal(g, center, None, cfg)
    except NoValidPose:
        return
    assert math.isfinite(footprint_cost(g, goal, cfg.footprint))
    heading = math.atan2(center[1] - goal.y, center[0] - goal.x)
    assert abs(_wrap(heading - goal.theta)) < cfg.angular_step
    again = select_nav_goal(g, center, None, cfg)
    assert again == goal


def test_nav_config_validation():
    assert NavConfig().r0 == 0.85
    with pytest.raises(InvalidParameter):
        NavConfig(radii=(1.0, 0.85))
    with pytest.raises(InvalidParameter):
        NavConfig(lambda_aff=-1)
    with pytest.raises(InvalidParameter):
        Footprint(0.0, 0.2)
    with pytest.raises(InvalidParameter):
        OccupancyGrid(0.0, (0, 0), np.zeros((2, 2)))


class _Robot:
    def __init__(self, x, y):
        self.base_pose = geom.Pose2D(x, y, 0.0)


def _bfs_reachable(free, start, end):
    seen = {start}
    todo = [start]
    while todo:
        r, c = todo.pop()
        if (r, c) == end:
            return True
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                q = (r + dr, c + dc)
                if q in seen or not (0 <= q[0] < free.shape[0] and 0 <= q[1] < free.shape[1]):
                    continue
                if free[q]:
                    seen.add(q)
                    todo.append(q)
    return False


def test_navigate_free_and_enclosed():
    g = OccupancyGrid.empty(4, 4)
    bot = _Robot(0.5, 0.5)
    goal = geom.Pose2D(3.0, 3.0, 1.0)
    assert navigate(bot, g, goal) == goal and bot.base_pose == goal
    # a closed room around the goal
    g.fill_rect(1.5, 1.5, 2.5, 1.55, LETHAL)
    g.fill_rect(1.5, 2.45, 2.5, 2.5, LETHAL)
    g.fill_rect(1.5, 1.5, 1.55, 2.5, LETHAL)
    g.fill_rect(2.45, 1.5, 2.5, 2.5, LETHAL)
    bot = _Robot(0.5, 0.5)
    with pytest.raises(NavigationFailed):
        navigate(bot, g, geom.Pose2D(2.0, 2.0, 0.0))
    assert bot.base_pose.x == 0.5
    with pytest.raises(NavigationFailed):
        navigate(bot, g, geom.Pose2D(9.0, 9.0, 0.0))
    with pytest.raises(NavigationFailed):
        navigate(bot, g, geom.Pose2D(1.52, 2.0, 0.0))


@pytest.mark.parametrize("seed", range(5))
def test_navigate_matches_search_oracle(seed):
    rng = np.random.default_rng(seed)
    g = OccupancyGrid(0.1, (0, 0), np.where(rng.random((30, 30)) < 0.35, LETHAL, 0))
    free = g.cells < LETHAL
    cells = np.argwhere(free)
    for _ in range(10):
        a, b = cells[rng.integers(len(cells), size=2)]
        x0, y0 = g.cell_center(*a)
        x1, y1 = g.cell_center(*b)
        want = _bfs_reachable(free, tuple(a), tuple(b))
        bot = _Robot(x0, y0)
        try:
            navigate(bot, g, geom.Pose2D(x1, y1, 0.0))
            got = True
        except NavigationFailed:
            got = False
        assert got == want


def test_grid_json_roundtrip():
    rng = np.random.default_rng(5)
    g = OccupancyGrid(0.05, (-1.5, 2.0), rng.integers(0, 256, size=(7, 11)))
    doc = g.to_json()
    assert (doc["width"], doc["height"]) == (11, 7)
    back = OccupancyGrid.from_json(doc)
    assert back.origin == g.origin and back.resolution == g.resolution
    assert np.array_equal(back.cells, g.cells)
    doc["width"] = 12
    with pytest.raises(InvalidParameter):
        OccupancyGrid.from_json(doc)


def test_inflate_marks_neighbors():
    g = OccupancyGrid.empty(1, 1, resolution=0.1)
    g.cells[5, 5] = LETHAL
    inf = g.inflate(0.15, 100)
    assert inf.cells[5, 5] == LETHAL
    assert inf.cells[5, 6] == 100 and inf.cells[6, 6] == 100
    assert inf.cells[5, 7] == 0
    assert g.cells[5, 6] == 0


def test_grid_image_and_pgm(tmp_path):
    g = OccupancyGrid.empty(2, 1)
    trace = []
    goal = select_nav_goal(g, [1.0, 0.5], None, NavConfig(radii=(0.3,)), trace)
    img = grid_image(g, trace, goal)
    assert img.shape == (g.height, g.width)
    assert (img == 0).any() and (img == 160).any()
    path = tmp_path / "grid.pgm"
    write_pgm(path, img)
    raw = path.read_bytes()
    header = f"P5\n{g.width} {g.height}\n255\n".encode()
    assert raw.startswith(header) and len(raw) == len(header) + img.size
