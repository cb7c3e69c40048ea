"""Seeded scene templates.

Tabletop scenes put the robot base at the origin facing +x with objects on a
table surface at z = 0. Room scenes are 6 x 6 m with furniture on an
occupancy grid and four corner keyframes.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ..errors import UnknownTemplate
from ..nav import LETHAL, OccupancyGrid
from ..semantics import tokenize
from . import shapes
from .scene import JointSpec, ObjectSpec, PartSpec, SceneSpec, TaskSpec
from .world import SimWorld, camera_pose

TABLE_REGION = ((0.38, 0.72), (-0.32, 0.32))
HOME_CAMERA = camera_pose([0.0, 0.0, 0.9], 0.0, math.radians(55.0))
ROOM = 6.0
GRID_RES = 0.05
INFLATION = 0.15
INFLATION_COST = 100
KEYFRAME_HEIGHT = 1.6
KEYFRAME_PITCH = math.radians(25.0)

Builder = Callable[[], np.ndarray]


def _ball(r):
    return lambda: shapes.sphere(r, 0.008, (0, 0, r))


def _box(sx, sy, sz, spacing=0.008):
    return lambda: shapes.box(sx, sy, sz, spacing)


def _cyl(r, h, spacing=0.008, top=True):
    return lambda: shapes.cylinder(r, h, spacing, top=top)


def _plush(r):
    return lambda: np.vstack([shapes.sphere(r, 0.01, (0, 0, r)),
                              shapes.sphere(0.6 * r, 0.01, (0, 0, 2.3 * r))])


# label, builder, footprint radius
DISTRACTORS: list[tuple[str, Builder, float]] = [
    ("green cube", _box(0.05, 0.05, 0.05), 0.04),
    ("yellow banana", _box(0.16, 0.035, 0.035), 0.09),
    ("pink sponge", _box(0.09, 0.06, 0.03), 0.06),
    ("black stapler", _box(0.15, 0.04, 0.05), 0.08),
    ("brown walnut", _ball(0.02), 0.03),
    ("silver spoon", _box(0.14, 0.03, 0.012), 0.08),
    ("glue stick", _cyl(0.012, 0.08), 0.02),
    ("paper cup", _cyl(0.035, 0.09, top=False), 0.04),
    ("lime", _ball(0.025), 0.03),
    ("toy car", _box(0.08, 0.04, 0.035), 0.05),
    ("orange carrot", _box(0.14, 0.025, 0.025), 0.08),
    ("white eraser", _box(0.05, 0.03, 0.02), 0.035),
]

PICK_ITEMS: list[tuple[str, str, Builder, float]] = [
    ("red ball", "red ball", _ball(0.03), 0.035),
    ("wooden block", "block", _box(0.05, 0.05, 0.05), 0.04),
    ("plastic frog", "frog", _plush(0.025), 0.035),
    ("blue marker", "marker", _box(0.12, 0.02, 0.02), 0.07),
]

PICK_CONTAINERS: list[tuple[str, str, float, float, float]] = [
    # label, query noun, size x, size y, height
    ("ceramic bowl", "bowl", 0.16, 0.16, 0.06),
    ("plastic tray", "tray", 0.22, 0.16, 0.04),
    ("wicker basket", "basket", 0.20, 0.16, 0.08),
]

ROOM_ITEMS: list[tuple[str, Builder]] = [
    ("penguin plushie", _plush(0.05)),
    ("screwdriver", _box(0.18, 0.03, 0.03)),
    ("headphones", _box(0.16, 0.15, 0.06, 0.01)),
    ("toy banana", _box(0.16, 0.035, 0.035)),
    ("soda can", _cyl(0.033, 0.12)),
    ("teddy bear", _plush(0.06)),
    ("water bottle", _cyl(0.035, 0.2)),
    ("rubik cube", _box(0.057, 0.057, 0.057)),
]

ROOM_CONTAINERS: list[tuple[str, str, float, float, float]] = [
    ("cardboard box", "cardboard box", 0.40, 0.30, 0.25),
    ("laundry basket", "laundry basket", 0.45, 0.35, 0.30),
    ("storage bin", "storage bin", 0.40, 0.40, 0.22),
]


def _tokens(*texts: str) -> set[str]:
    out: set[str] = set()
    for t in texts:
        out |= set(tokenize(t))
    return out


def _pick_distractors(rng, n: int, avoid: set[str]):
    pool = [d for d in DISTRACTORS if not (_tokens(d[0]) & avoid)]
    idx = rng.choice(len(pool), size=min(n, len(pool)), replace=False)
    return [pool[i] for i in sorted(idx)]


def _scatter(rng, radii: list[float], region, fixed: list[tuple[float, float, float]] = (),
             gap: float = 0.04, tries: int = 400) -> list[tuple[float, float]] | None:
    """Non-overlapping disc centers inside ``region`` avoiding ``fixed`` discs."""
    (x0, x1), (y0, y1) = region
    placed: list[tuple[float, float, float]] = list(fixed)
    out = []
    for r in radii:
        if x1 - x0 < 2 * r or y1 - y0 < 2 * r:
            return None
        for _ in range(tries):
            x = float(rng.uniform(x0 + r, x1 - r))
            y = float(rng.uniform(y0 + r, y1 - r))
            if all(math.hypot(x - px, y - py) >= r + pr + gap for px, py, pr in placed):
                placed.append((x, y, r))
                out.append((round(x, 4), round(y, 4)))
                break
        else:
            return None
    return out


def _open_box(sx, sy, sz, spacing):
    return shapes.box(sx, sy, sz, spacing, top=False)


def _container(name, label, sx, sy, sz, pos, spacing=0.01, yaw=0.0, supported_by=None):
    return ObjectSpec(name, label, list(pos), _open_box(sx, sy, sz, spacing), yaw,
                      graspable=False, container=True, supported_by=supported_by)


def _all_visible(spec: SceneSpec) -> bool:
    world = SimWorld(spec)
    if spec.mode == "tabletop":
        return len(world.render(world.home_camera()).segments) == len(spec.objects)
    return _instances_visible(world, world.keyframe_cameras())


def _instances_visible(world: SimWorld, cams) -> bool:
    names_seen: set[str] = set()
    for cam in cams:
        frame = world.render(cam)
        for seg in frame.segments:
            # identify the instance by its closest object cloud centroid
            c = seg.point_cloud.mean(axis=0)
            best = min(world.visible_objects(),
                       key=lambda n: float(np.linalg.norm(world.cloud(n).mean(axis=0) - c)))
            names_seen.add(best)
    return names_seen == set(world.visible_objects())


def _tabletop(template: str, seed: int, objects: list[ObjectSpec], task: TaskSpec) -> SceneSpec:
    return SceneSpec(template, seed, "tabletop", objects, task, HOME_CAMERA.to_list())


def _finish_tabletop(template, seed, rng, make) -> SceneSpec:
    for _ in range(200):
        spec = make(rng)
        if spec is not None and _all_visible(spec):
            return spec
    raise RuntimeError(f"could not place a visible {template} scene for seed {seed}")


def _distractor_objects(rng, entries, positions, start: int = 0) -> list[ObjectSpec]:
    out = []
    for k, ((label, build, _), (x, y)) in enumerate(zip(entries, positions)):
        yaw = round(float(rng.uniform(0, math.pi)), 4)
        out.append(ObjectSpec(f"distractor_{start + k}", label, [x, y, 0.0], build(), yaw))
    return out


# tabletop templates ---------------------------------------------------------

def _tabletop_pick(seed: int) -> SceneSpec:
    rng = np.random.default_rng([seed, 11])

    def make(rng):
        label, noun, build, rad = PICK_ITEMS[int(rng.integers(len(PICK_ITEMS)))]
        clabel, cnoun, sx, sy, sz = PICK_CONTAINERS[int(rng.integers(len(PICK_CONTAINERS)))]
        dis = _pick_distractors(rng, int(rng.integers(2, 5)), _tokens(label, clabel))
        radii = [rad, 0.5 * math.hypot(sx, sy)] + [d[2] for d in dis]
        pos = _scatter(rng, radii, TABLE_REGION)
        if pos is None:
            return None
        objs = [ObjectSpec("item", label, [*pos[0], 0.0], build(),
                           round(float(rng.uniform(0, math.pi)), 4)),
                _container("container", clabel, sx, sy, sz, [*pos[1], 0.0])]
        objs += _distractor_objects(rng, dis, pos[2:])
        task = TaskSpec(f"Put the {noun} in the {cnoun}", "contained",
                        {"objects": ["item"], "container": "container"}, family="pick_place",
                        hints={"item_query": noun, "container_query": cnoun,
                               "pick_action": f"pick up the {noun}",
                               "place_action": f"place the {noun} in the {cnoun}"})
        return _tabletop("tabletop-pick", seed, objs, task)

    return _finish_tabletop("tabletop-pick", seed, rng, make)


def _duckie(scale: float) -> np.ndarray:
    return np.vstack([shapes.sphere(0.03 * scale, 0.007, (0, 0, 0.03 * scale)),
                      shapes.sphere(0.018 * scale, 0.007, (0.02 * scale, 0, 0.065 * scale))])


def _duckie_pair(seed: int) -> SceneSpec:
    rng = np.random.default_rng([seed, 12])

    def make(rng):
        big = round(float(rng.uniform(1.6, 1.9)), 3)
        dis = _pick_distractors(rng, int(rng.integers(1, 4)), _tokens("yellow rubber duckie"))
        radii = [0.04 * big, 0.04] + [d[2] for d in dis]
        pos = _scatter(rng, radii, TABLE_REGION, gap=0.06)
        if pos is None:
            return None
        # shuffle which duckie comes first in the scene listing
        order = ["duckie_big", "duckie_small"]
        if rng.random() < 0.5:
            order.reverse()
        bodies = {"duckie_big": (_duckie(big), pos[0]), "duckie_small": (_duckie(1.0), pos[1])}
        objs = [ObjectSpec(n, "yellow rubber duckie", [*bodies[n][1], 0.0], bodies[n][0],
                           round(float(rng.uniform(0, 2 * math.pi)), 4)) for n in order]
        objs += _distractor_objects(rng, dis, pos[2:])
        task = TaskSpec("Pick up the larger rubber duckie", "held", {"object": "duckie_big"},
                        family="pick_larger",
                        hints={"query": "rubber duckie", "relation": "larger",
                               "action": "pick up the duckie"})
        return _tabletop("duckie-pair", seed, objs, task)

    return _finish_tabletop("duckie-pair", seed, rng, make)


KEY_ROWS = ["qwertyui", "asdfghjk", "zxcvbnm,"]


def _keyboard_object(name: str, pos, yaw) -> ObjectSpec:
    base = shapes.box(0.13, 0.34, 0.015, 0.01)
    parts = []
    key = 0.016
    for r, row in enumerate(KEY_ROWS):
        x = 0.042 - r * 0.022
        for c, ch in enumerate(row):
            y = -0.105 + c * 0.03
            label = "comma key" if ch == "," else f"{ch} key"
            parts.append(PartSpec(label, shapes.hplate(key, key, 0.023, 0.004, x, y), "tip_push",
                                  ["press", "type", "push", "hit"], pressable=True))
    front_x = -0.036
    parts.append(PartSpec("space bar", shapes.hplate(key, 0.12, 0.023, 0.004, front_x, 0.0),
                          "tip_push", ["press", "type", "push", "hit"], pressable=True))
    parts.append(PartSpec("enter key", shapes.hplate(key, 0.03, 0.023, 0.004, front_x, 0.12),
                          "tip_push", ["press", "type", "push", "hit"], pressable=True))
    parts.append(PartSpec("alt key", shapes.hplate(key, 0.03, 0.023, 0.004, front_x, -0.12),
                          "tip_push", ["press", "type", "push", "hit"], pressable=True))
    return ObjectSpec(name, "black computer keyboard", list(pos), base, yaw, parts,
                      graspable=False)


def _keyboard(seed: int) -> SceneSpec:
    rng = np.random.default_rng([seed, 13])

    def make(rng):
        dis = _pick_distractors(rng, int(rng.integers(1, 4)), _tokens("black computer keyboard"))
        kx = round(float(rng.uniform(0.50, 0.58)), 4)
        ky = round(float(rng.uniform(-0.08, 0.08)), 4)
        pos = _scatter(rng, [d[2] for d in dis], ((0.30, 0.75), (-0.40, 0.40)),
                       fixed=[(kx, ky, 0.18)])
        if pos is None:
            return None
        yaw = round(float(rng.uniform(-0.3, 0.3)), 4)
        objs = [_keyboard_object("keyboard", [kx, ky, 0.0], yaw)]
        objs += _distractor_objects(rng, dis, pos)
        task = TaskSpec("Press the space bar on the keyboard", "pressed",
                        {"object": "keyboard", "part": "space bar"}, family="press",
                        hints={"query": "keyboard", "action": "press the space bar"})
        return _tabletop("keyboard", seed, objs, task)

    return _finish_tabletop("keyboard", seed, rng, make)


def _desk_bell(seed: int) -> SceneSpec:
    rng = np.random.default_rng([seed, 14])

    def make(rng):
        dis = _pick_distractors(rng, int(rng.integers(1, 4)), _tokens("silver desk bell"))
        pos = _scatter(rng, [0.05] + [d[2] for d in dis], TABLE_REGION)
        if pos is None:
            return None
        body = np.vstack([shapes.cylinder(0.045, 0.012, 0.006),
                          shapes.sphere(0.035, 0.006, (0, 0, 0.012))])
        body = body[body[:, 2] >= 0.0]
        button = np.vstack([shapes.disk(0.012, 0.003, z=0.052),
                            shapes.cylinder(0.012, 0.004, 0.003, top=False, bottom=False,
                                            z0=0.047)])
        bell = ObjectSpec("bell", "silver desk bell", [*pos[0], 0.0], body, 0.0,
                          [PartSpec("top button", button, "tip_push",
                                    ["ring", "press", "push", "ding"], pressable=True)],
                          graspable=True)
        objs = [bell] + _distractor_objects(rng, dis, pos[1:])
        task = TaskSpec("Ring the desk bell", "pressed", {"object": "bell", "part": "top button"},
                        family="press", hints={"query": "desk bell", "action": "ring the bell"})
        return _tabletop("desk-bell", seed, objs, task)

    return _finish_tabletop("desk-bell", seed, rng, make)


def _rot_xy(x, y, yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return x * c - y * s, x * s + y * c


def _pinned_scene(template: str, seed: int, salt: int, fixture_label: str, item_label: str,
                  item_body: np.ndarray, item_part: PartSpec, item_height: float,
                  task_query: str, hints: dict) -> SceneSpec:
    """A vertical fixture facing the robot with one item pinned into it."""
    rng = np.random.default_rng([seed, salt])

    def make(rng):
        fx = round(float(rng.uniform(0.62, 0.70)), 4)
        fy = round(float(rng.uniform(-0.12, 0.12)), 4)
        yaw = round(float(rng.uniform(-0.25, 0.25)), 4)
        board = np.vstack([shapes.vplate_x(0.30, 0.25, 0.0, 0.01, cz=0.145),
                           shapes.vplate_x(0.30, 0.25, 0.012, 0.01, cz=0.145)])
        offset = round(float(rng.uniform(0.05, 0.10)) * (1 if rng.random() < 0.5 else -1), 4)
        ix, iy = _rot_xy(-0.001, offset, yaw)
        fixture = ObjectSpec("fixture", fixture_label, [fx, fy, 0.0], board, yaw,
                             graspable=False, fixed=True)
        item = ObjectSpec("item", item_label, [round(fx + ix, 5), round(fy + iy, 5), item_height],
                          item_body, yaw, [item_part], detach_axis=[-1.0, 0.0, 0.0])
        dis = _pick_distractors(rng, int(rng.integers(1, 3)), _tokens(fixture_label, item_label))
        region = ((0.36, 0.52), TABLE_REGION[1])
        pos = _scatter(rng, [d[2] for d in dis], region)
        if pos is None:
            return None
        objs = [fixture, item] + _distractor_objects(rng, dis, pos)
        task = TaskSpec(task_query, "detached", {"object": "item"}, family="remove", hints=hints)
        return _tabletop(template, seed, objs, task)

    return _finish_tabletop(template, seed, rng, make)


def _thumbtack(seed: int) -> SceneSpec:
    body = shapes.rotate_to_x(shapes.cylinder(0.004, 0.03, 0.002, top=False, bottom=False))
    body = body * np.array([-1.0, 1.0, 1.0]) + np.array([-0.003, 0.0, 0.0])
    head = shapes.rotate_to_x(shapes.disk(0.007, 0.002)) + np.array([-0.035, 0.0, 0.0])
    part = PartSpec("thumbtack head", head, "pinch_pull",
                    ["remove", "pull", "unpin", "extract", "take"], grip_modes=["pinch"])
    return _pinned_scene("thumbtack", seed, 15, "cork board", "red thumbtack", body, part, 0.16,
                         "Remove the thumbtack",
                         {"query": "thumbtack", "action": "remove the thumbtack"})


def _power_adapter(seed: int) -> SceneSpec:
    box = shapes.box(0.04, 0.045, 0.055, 0.005) + np.array([-0.02, 0.0, 0.0])
    front = box[:, 0] <= -0.04 + 1e-9
    part = PartSpec("adapter grip", box[front], "pinch_pull", ["unplug", "pull", "remove"],
                    grip_modes=["pinch"])
    return _pinned_scene("power-adapter", seed, 16, "wall socket", "white power adapter",
                         box[~front], part, 0.10, "Unplug the power adapter",
                         {"query": "power adapter", "action": "unplug the adapter"})


def _drawer_object(name: str, label: str, pos, yaw, size, handle: str,
                   spacing: float, handle_z: float) -> ObjectSpec:
    """Cabinet with one drawer whose front faces local -x."""
    sx, sy, sz = size
    body = shapes.box(sx, sy, sz, spacing)
    body = body[body[:, 0] > -sx / 2 + 1e-9]
    front = shapes.vplate_x(sy * 0.9, sz * 0.7, -sx / 2 - 0.002, spacing * 0.5, cz=sz * 0.5)
    hx = -sx / 2 - 0.025
    if handle == "bar":
        hpts = shapes.vplate_x(0.10, 0.02, hx, 0.004, cz=handle_z)
        skill, modes = "pinch_pull", ["pinch", "hook"]
    else:
        hpts = shapes.vplate_x(0.14, 0.014, hx, 0.004, cz=handle_z)
        skill, modes = "hook_pull", ["hook"]
    parts = [PartSpec("drawer front", front, None, moving=True),
             PartSpec("drawer handle", hpts, skill, ["open", "pull"], grip_modes=modes,
                      moving=True)]
    return ObjectSpec(name, label, list(pos), body, yaw, parts, graspable=False, fixed=True,
                      joint=JointSpec([-1.0, 0.0, 0.0], 0.3))


def _drawer(seed: int) -> SceneSpec:
    rng = np.random.default_rng([seed, 17])

    def make(rng):
        style = "bar" if rng.random() < 0.5 else "lip"
        yaw = round(float(rng.uniform(-0.25, 0.25)), 4)
        cx = round(float(rng.uniform(0.60, 0.66)), 4)
        cy = round(float(rng.uniform(-0.1, 0.1)), 4)
        cab = _drawer_object("cabinet", "small wooden drawer", [cx, cy, 0.0], yaw,
                             (0.30, 0.36, 0.20), style, 0.01, 0.13)
        dis = _pick_distractors(rng, int(rng.integers(1, 3)), _tokens("small wooden drawer"))
        pos = _scatter(rng, [d[2] for d in dis], ((0.30, 0.56), TABLE_REGION[1]),
                       fixed=[(cx, cy, 0.26)])
        if pos is None:
            return None
        objs = [cab] + _distractor_objects(rng, dis, pos)
        task = TaskSpec("Open the drawer", "open_fraction",
                        {"object": "cabinet", "threshold": 0.4}, family="open",
                        hints={"query": "drawer", "action": "open the drawer", "style": style})
        return _tabletop("drawer", seed, objs, task)

    return _finish_tabletop("drawer", seed, rng, make)


def _mug_handle(seed: int) -> SceneSpec:
    rng = np.random.default_rng([seed, 18])

    def make(rng):
        dis = _pick_distractors(rng, int(rng.integers(1, 4)), _tokens("blue mug"))
        pos = _scatter(rng, [0.08] + [d[2] for d in dis], TABLE_REGION)
        if pos is None:
            return None
        body = shapes.cylinder(0.04, 0.10, 0.007, top=False)
        handle = shapes.arc_handle(0.028, 0.006, 0.005, 0.04, 0.05)
        handle = handle[handle[:, 0] > 0.043]
        yaw = round(float(rng.uniform(-math.pi / 2, math.pi / 2)), 4)
        mug = ObjectSpec("mug", "blue mug", [*pos[0], 0.0], body, yaw,
                         [PartSpec("handle", handle, "grasp_part", ["handle", "hold", "grab"])])
        objs = [mug] + _distractor_objects(rng, dis, pos[1:])
        task = TaskSpec("Pick up the mug by the handle", "held",
                        {"object": "mug", "part": "handle"}, family="handle_pick",
                        hints={"query": "mug", "action": "pick up the mug by the handle"})
        return _tabletop("mug-handle", seed, objs, task)

    return _finish_tabletop("mug-handle", seed, rng, make)


CLUTTER_TARGETS = ["toy egg", "red apple", "rubber duck", "tea cup", "golf ball"]


def _clutter(seed: int) -> SceneSpec:
    """One to three instances of a target among distractors (retrieval tests)."""
    rng = np.random.default_rng([seed, 19])

    def make(rng):
        label = CLUTTER_TARGETS[int(rng.integers(len(CLUTTER_TARGETS)))]
        n_target = int(rng.integers(1, 4))
        dis = _pick_distractors(rng, int(rng.integers(2, 6)), _tokens(label))
        pos = _scatter(rng, [0.035] * n_target + [d[2] for d in dis], TABLE_REGION)
        if pos is None:
            return None
        objs = [ObjectSpec(f"target_{k}", label, [*pos[k], 0.0], shapes.sphere(0.028, 0.008,
                                                                              (0, 0, 0.028)))
                for k in range(n_target)]
        objs += _distractor_objects(rng, dis, pos[n_target:])
        noun = label.split()[-1]
        task = TaskSpec(f"Pick up the {noun}", "held",
                        {"object": "target_0", "any_of": [f"target_{k}" for k in range(n_target)]},
                        family="pick", hints={"query": noun, "action": f"pick up the {noun}"})
        return _tabletop("clutter", seed, objs, task)

    return _finish_tabletop("clutter", seed, rng, make)


# room templates -------------------------------------------------------------

def _room_grid(objects: list[ObjectSpec], world: SimWorld) -> OccupancyGrid:
    grid = OccupancyGrid.empty(ROOM, ROOM, GRID_RES)
    t = 0.1
    for x0, y0, x1, y1 in [(0, 0, ROOM, t), (0, ROOM - t, ROOM, ROOM), (0, 0, t, ROOM),
                           (ROOM - t, 0, ROOM, ROOM)]:
        grid.fill_rect(x0, y0, x1, y1, LETHAL)
    for o in objects:
        if not (o.fixed or o.container or o.support):
            continue
        pts = world.cloud(o.name)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        grid.fill_rect(lo[0], lo[1], hi[0], hi[1], LETHAL)
    return grid.inflate(INFLATION, INFLATION_COST)


def _keyframes() -> list[list[float]]:
    m = 0.4
    corners = [(m, m), (ROOM - m, m), (ROOM - m, ROOM - m), (m, ROOM - m)]
    c = ROOM / 2
    return [camera_pose([x, y, KEYFRAME_HEIGHT], math.atan2(c - y, c - x),
                        KEYFRAME_PITCH).to_list() for x, y in corners]


def _tables(rng) -> list[ObjectSpec]:
    tx = round(float(rng.uniform(2.0, 4.0)), 3)
    ty = round(float(rng.uniform(2.0, 4.0)), 3)
    top = shapes.hplate(0.9, 0.6, 0.5, 0.03)
    return [ObjectSpec("table_north", "wooden table", [tx, 5.35, 0.0], top, 0.0,
                       graspable=False, support=True, fixed=True),
            ObjectSpec("table_west", "wooden table", [0.65, ty, 0.0], top, math.pi / 2,
                       graspable=False, support=True, fixed=True)]


def _table_spot(rng, table: ObjectSpec) -> list[float]:
    u = float(rng.uniform(-0.3, 0.3))
    v = float(rng.uniform(-0.12, 0.12))
    dx, dy = _rot_xy(u, v, table.yaw)
    return [round(table.position[0] + dx, 4), round(table.position[1] + dy, 4), 0.5]


FLOOR_REGION = ((1.5, 4.9), (0.7, 4.6))


def _room_scene(template: str, seed: int, salt: int, populate) -> SceneSpec:
    rng = np.random.default_rng([seed, salt])
    for _ in range(200):
        tables = _tables(rng)
        out = populate(rng, tables)
        if out is None:
            continue
        objects, task = out
        base = [3.0, 0.6, math.pi / 2]
        probe = SceneSpec(template, seed, "mobile", objects, task, _keyframes()[0], base,
                          keyframes=_keyframes(), grid=OccupancyGrid.empty(ROOM, ROOM, GRID_RES))
        world = SimWorld(probe)
        grid = _room_grid(objects, world)
        r, c = grid.cell_of(base[0], base[1])
        if grid.cells[r, c] >= LETHAL:
            continue
        spec = SceneSpec(template, seed, "mobile", objects, task, _keyframes()[0], base,
                         ee_home=[base[0], base[1] + 0.3, 0.8], keyframes=_keyframes(),
                         grid=grid)
        if _instances_visible(SimWorld(spec), SimWorld(spec).keyframe_cameras()):
            return spec
    raise RuntimeError(f"could not build a {template} scene for seed {seed}")


def _floor_fixed(tables, extra=()):
    fixed = [(t.position[0], t.position[1], 0.6) for t in tables]
    return fixed + list(extra)


def _room_distractors(rng, tables, avoid: set[str], n: int, floor_fixed) -> list[ObjectSpec] | None:
    pool = [d for d in ROOM_ITEMS if not (_tokens(d[0]) & avoid)]
    idx = rng.choice(len(pool), size=min(n, len(pool)), replace=False)
    out = []
    on_floor = []
    for k, i in enumerate(sorted(idx)):
        label, build = pool[i]
        if rng.random() < 0.5:
            t = tables[int(rng.integers(len(tables)))]
            out.append(ObjectSpec(f"distractor_{k}", label, _table_spot(rng, t), build(),
                                  round(float(rng.uniform(0, math.pi)), 4), supported_by=t.name))
        else:
            on_floor.append((k, label, build))
    pos = _scatter(rng, [0.25] * len(on_floor), FLOOR_REGION, fixed=floor_fixed, gap=0.3)
    if pos is None:
        return None
    for (k, label, build), (x, y) in zip(on_floor, pos):
        out.append(ObjectSpec(f"distractor_{k}", label, [x, y, 0.0], build(),
                              round(float(rng.uniform(0, math.pi)), 4)))
    return out


def _mobile_room(seed: int) -> SceneSpec:
    def populate(rng, tables):
        pos = _scatter(rng, [0.9], ((2.0, 4.2), (1.8, 3.9)),
                       fixed=_floor_fixed(tables), gap=0.5)
        if pos is None:
            return None
        yaw = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2][int(rng.integers(4))]
        cab = _drawer_object("cabinet", "metal cabinet", [*pos[0], 0.0], yaw,
                             (0.5, 0.5, 0.7), "bar", 0.03, 0.5)
        fixed = _floor_fixed(tables, [(pos[0][0], pos[0][1], 1.0)])
        dis = _room_distractors(rng, tables, _tokens("metal cabinet"), int(rng.integers(2, 4)),
                                fixed)
        if dis is None:
            return None
        task = TaskSpec("Open the metal cabinet", "open_fraction",
                        {"object": "cabinet", "threshold": 0.4}, family="mobile_open",
                        hints={"query": "metal cabinet", "action": "open the drawer",
                               "facing": [round(-math.cos(yaw), 9), round(-math.sin(yaw), 9)]})
        return tables + [cab] + dis, task

    return _room_scene("mobile-room", seed, 21, populate)


def _room_container(rng, fixed):
    clabel, cquery, sx, sy, sz = ROOM_CONTAINERS[int(rng.integers(len(ROOM_CONTAINERS)))]
    pos = _scatter(rng, [0.4], FLOOR_REGION, fixed=fixed, gap=0.5)
    if pos is None:
        return None
    return _container("container", clabel, sx, sy, sz, [*pos[0], 0.0], spacing=0.02), cquery


def _mobile_double_pick(seed: int) -> SceneSpec:
    def populate(rng, tables):
        fixed = _floor_fixed(tables)
        made = _room_container(rng, fixed)
        if made is None:
            return None
        cont, cquery = made
        fixed.append((cont.position[0], cont.position[1], 0.6))
        picks = rng.choice(len(ROOM_ITEMS), size=2, replace=False)
        items = []
        floor_items = []
        for k, i in enumerate(picks):
            label, build = ROOM_ITEMS[int(i)]
            if rng.random() < 0.5:
                t = tables[k % len(tables)]
                items.append(ObjectSpec(f"item_{k}", label, _table_spot(rng, t), build(),
                                        round(float(rng.uniform(0, math.pi)), 4),
                                        supported_by=t.name))
            else:
                floor_items.append((k, label, build))
        pos = _scatter(rng, [0.25] * len(floor_items), FLOOR_REGION, fixed=fixed, gap=0.3)
        if pos is None:
            return None
        for (k, label, build), (x, y) in zip(floor_items, pos):
            items.append(ObjectSpec(f"item_{k}", label, [x, y, 0.0], build(),
                                    round(float(rng.uniform(0, math.pi)), 4)))
            fixed.append((x, y, 0.25))
        items.sort(key=lambda o: o.name)
        labels = [o.label for o in items]
        dis = _room_distractors(rng, tables, _tokens(*labels, cont.label), int(rng.integers(1, 3)),
                                fixed)
        if dis is None:
            return None
        task = TaskSpec(f"Put the {labels[0]} and the {labels[1]} in the {cquery}", "contained",
                        {"objects": [o.name for o in items], "container": "container"},
                        scoring="per_object", family="double_pick",
                        hints={"items": labels, "container_query": cquery,
                               "pick_action": "pick up", "drop_action": f"drop it in the {cquery}"})
        return tables + [cont] + items + dis, task

    return _room_scene("mobile-double-pick", seed, 22, populate)


def _mobile_spatial(seed: int) -> SceneSpec:
    def populate(rng, tables):
        fixed = _floor_fixed(tables)
        made = _room_container(rng, fixed)
        if made is None:
            return None
        cont, cquery = made
        fixed.append((cont.position[0], cont.position[1], 0.6))
        pos = _scatter(rng, [0.5, 0.5], FLOOR_REGION, fixed=fixed, gap=0.2)
        if pos is None:
            return None
        egg = shapes.sphere(0.025, 0.008, (0, 0, 0.025))
        eggs = [ObjectSpec(f"egg_{k}", "egg", [*pos[k], 0.0], egg.copy()) for k in range(2)]
        near = int(rng.integers(2))
        ang = float(rng.uniform(0, 2 * math.pi))
        tx = round(pos[near][0] + 0.2 * math.cos(ang), 4)
        ty = round(pos[near][1] + 0.2 * math.sin(ang), 4)
        tomato = ObjectSpec("tomato", "tomato", [tx, ty, 0.0],
                            shapes.sphere(0.035, 0.008, (0, 0, 0.035)))
        fixed += [(p[0], p[1], 0.5) for p in pos]
        dis = _room_distractors(rng, tables, _tokens("egg", "tomato", cont.label),
                                int(rng.integers(1, 3)), fixed)
        if dis is None:
            return None
        task = TaskSpec(f"Place the egg that is near the tomato in the {cquery}", "contained",
                        {"objects": [f"egg_{near}"], "container": "container"},
                        family="spatial_near",
                        hints={"target_query": "egg", "anchor_query": "tomato",
                               "container_query": cquery, "pick_action": "pick up",
                               "drop_action": f"place it in the {cquery}"})
        return tables + [cont] + eggs + [tomato] + dis, task

    return _room_scene("mobile-spatial", seed, 23, populate)


TEMPLATES: dict[str, Callable[[int], SceneSpec]] = {
    "tabletop-pick": _tabletop_pick,
    "duckie-pair": _duckie_pair,
    "keyboard": _keyboard,
    "desk-bell": _desk_bell,
    "thumbtack": _thumbtack,
    "power-adapter": _power_adapter,
    "drawer": _drawer,
    "mug-handle": _mug_handle,
    "clutter": _clutter,
    "mobile-room": _mobile_room,
    "mobile-double-pick": _mobile_double_pick,
    "mobile-spatial": _mobile_spatial,
}


def template_names() -> list[str]:
    return sorted(TEMPLATES)


def generate_scene(template: str, seed: int = 0) -> SceneSpec:
    """Deterministic scene for ``template``; placement varies with ``seed``."""
    try:
        make = TEMPLATES[template]
    except KeyError:
        raise UnknownTemplate(f"unknown template {template!r}; "
                              f"choose from {', '.join(template_names())}") from None
    return make(int(seed))
