"""Goal predicates and task scoring."""

from __future__ import annotations

from .scene import TaskSpec
from .world import SimWorld


def _contained(world: SimWorld, name: str, container: str) -> bool:
    s = world.states[name]
    return not s.held and s.contained_in == container


def judge(world: SimWorld, task: TaskSpec) -> float:
    """Score in {0, 0.5, 1} (fractions of objects for ``per_object``)."""
    a = task.args
    if task.kind == "contained":
        objs = list(a["objects"])
        hits = sum(_contained(world, o, a["container"]) for o in objs)
        if task.scoring == "per_object":
            return hits / len(objs)
        return 1.0 if hits == len(objs) else 0.0
    if task.kind == "pressed":
        return 1.0 if world.states[a["object"]].pressed.get(a["part"], False) else 0.0
    if task.kind == "open_fraction":
        return 1.0 if world.states[a["object"]].open_fraction >= a["threshold"] else 0.0
    if task.kind == "held":
        allowed = a.get("any_of", [a["object"]])
        if world.held not in allowed:
            return 0.0
        part = a.get("part")
        return 1.0 if part is None or world.grasped_part(a["object"], part) else 0.0
    if task.kind == "detached":
        return 0.0 if world.states[a["object"]].pinned else 1.0
    if task.kind == "placed_on":
        s = world.states[a["object"]]
        return 1.0 if (not s.held and s.supported_by == a["support"]) else 0.0
    raise ValueError(f"unknown task kind {task.kind!r}")


def check_references(world: SimWorld, task: TaskSpec) -> None:
    """Raise KeyError when the task names an object or part the scene lacks."""
    a = task.args
    names = list(a.get("objects", [])) + list(a.get("any_of", []))
    names += [a[k] for k in ("object", "container", "support") if k in a]
    for n in names:
        if n not in world.specs:
            raise KeyError(f"task references unknown object {n!r}")
    if "part" in a and a["part"] is not None:
        if a["part"] not in {p.name for p in world.specs[a["object"]].parts}:
            raise KeyError(f"task references unknown part {a['part']!r}")
