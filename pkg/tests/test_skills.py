import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asp import geom
from asp.sim import NoiseConfig, SimWorld, generate_scene
from asp.skills import (MockGraspProposer, RejectAllChecker, ScriptedChecker, SimMotionChecker,
                        SkillConfig, SkillKind, context_cloud, pull_axis, skill_drop, skill_grasp,
                        skill_grasp_part, skill_hook_pull, skill_pinch_pull, skill_place,
                        skill_tip_push, verify_held)


class Permissive:
    def __init__(self):
        self.calls = 0

    def feasible(self, goal, world):
        self.calls += 1
        return True, ""


class CountingReject(RejectAllChecker):
    def __init__(self):
        self.calls = 0

    def feasible(self, goal, world):
        self.calls += 1
        return super().feasible(goal, world)


class FakeWorld:
    """Grips whatever it is asked to; can be told to slip."""

    def __init__(self, slip=False):
        self.base_pose = geom.Pose2D(0.0, 0.0, 0.0)
        self.slip = slip
        self.held = None
        self.grasps = []

    def grasp_at(self, pose):
        self.grasps.append(pose)
        if not self.slip:
            self.held = "cube"
        return self.held

    def holding(self):
        return self.held is not None

    def open_gripper(self):
        pass


def _cube(center=(0.5, 0.0, 0.0), size=0.05, step=0.008):
    g = np.arange(0, size + 1e-9, step)
    pts = np.array([[x, y, z] for x in g for y in g for z in g])
    shell = (np.isclose(pts, 0) | np.isclose(pts, g[-1])).any(axis=1)
    return pts[shell] - [g[-1] / 2, g[-1] / 2, 0] + np.asarray(center)


def test_isolated_cube_first_candidate():
    w = FakeWorld()
    res = skill_grasp(_cube(), w, MockGraspProposer(), Permissive())
    assert res.success and res.attempts == 1
    assert res.kind is SkillKind.GRASP
    assert verify_held(w)


def test_tenth_candidate_succeeds():
    w = FakeWorld()
    chk = ScriptedChecker(9)
    res = skill_grasp(_cube(), w, MockGraspProposer(), chk)
    assert res.success
    assert res.attempts == 10
    assert res.to_log()["attempts"] == 10


def test_all_rejected_fails_without_remap():
    w = FakeWorld()
    chk = CountingReject()
    res = skill_grasp(_cube(), w, MockGraspProposer(), chk)
    assert not res.success
    assert "motion planning" in res.reason
    assert not res.remap
    assert w.grasps == [] and not w.holding()
    # "top 10": no more than ten candidates are ever tried
    assert chk.calls == res.attempts == 10


@given(st.integers(0, 30))
def test_never_more_than_ten_attempts(reject):
    w = FakeWorld()
    chk = ScriptedChecker(reject)
    res = skill_grasp(_cube(), w, MockGraspProposer(), chk)
    assert chk.calls <= 10
    assert res.success == (reject < 10)


def test_slip_reports_failure_and_remap():
    w = FakeWorld(slip=True)
    res = skill_grasp(_cube(), w, MockGraspProposer(), Permissive())
    assert not res.success and res.remap
    assert "slipped" in res.reason
    assert not verify_held(w)


def test_proposer_deterministic_and_sorted():
    p = MockGraspProposer()
    a, b = p.propose(_cube()), p.propose(_cube())
    assert [c.score for c in a] == [c.score for c in b]
    scores = [c.score for c in a]
    assert scores == sorted(scores, reverse=True)
    assert all(c.width >= 0 for c in a)


def test_context_cloud_box():
    target = _cube()
    far = np.array([[5.0, 5.0, 5.0]])
    near = target.max(axis=0) + 0.05
    ctx = context_cloud([target, far, near[None]], target, 0.10)
    assert ctx.shape[0] == target.shape[0] + 1
    # nothing inside the box: the target itself is used
    assert context_cloud([far], target, 0.1) is target


def test_part_grasp_far_affordance_fails():
    w = FakeWorld()
    res = skill_grasp_part(_cube(), _cube((3.0, 3.0, 0.0)), w, MockGraspProposer(), Permissive())
    assert not res.success
    assert "no grasp candidates" in res.reason


# -- simulated scenes ------------------------------------------------------

def _mug_world(seed=0):
    spec = generate_scene("mug-handle", seed)
    return SimWorld(spec, seed=seed)


def test_mug_handle_grasp_lands_on_handle():
    w = _mug_world()
    body, handle = w.cloud("mug"), w.part_cloud("mug", "handle")
    res = skill_grasp_part(body, handle, w, MockGraspProposer(), SimMotionChecker())
    assert res.success, res.reason
    d = float(geom.nearest_distances(res.goal.position[None], handle)[0])
    assert d <= 0.03
    assert w.held == "mug" and w.grasped_part("mug", "handle")


def test_whole_object_grasp_takes_the_rim():
    # with the whole mug as the "affordance" the best-scoring grasp is on the rim
    w = _mug_world()
    body, handle = w.cloud("mug"), w.part_cloud("mug", "handle")
    res = skill_grasp_part(body, body, w, MockGraspProposer(), SimMotionChecker())
    assert res.success
    d = float(geom.nearest_distances(res.goal.position[None], handle)[0])
    assert d > 0.03
    assert not w.grasped_part("mug", "handle")


def test_pick_and_drop_into_container():
    spec = generate_scene("tabletop-pick", 0)
    w = SimWorld(spec)
    res = skill_grasp(w.cloud("item"), w, MockGraspProposer(), SimMotionChecker())
    assert res.success and verify_held(w)
    res = skill_drop(w.cloud("container"), w, SimMotionChecker())
    assert res.success and res.released
    cont = w.cloud("container")
    assert res.goal.position[2] == pytest.approx(cont[:, 2].max() + 0.10)
    assert not verify_held(w)
    assert w.states["item"].contained_in == "container"


def test_place_height_and_support():
    spec = generate_scene("tabletop-pick", 1)
    w = SimWorld(spec)
    skill_grasp(w.cloud("item"), w, MockGraspProposer(), SimMotionChecker())
    others = [n for n in w.order if n not in ("item", "container")]
    target = w.cloud(others[0])
    res = skill_place(target, w, SimMotionChecker())
    assert res.success
    assert res.goal.position[2] == pytest.approx(target[:, 2].max() + 0.02)
    assert w.states["item"].supported_by == others[0]


def test_release_with_empty_hand_fails():
    w = SimWorld(generate_scene("tabletop-pick", 0))
    res = skill_place(w.cloud("container"), w, SimMotionChecker())
    assert not res.success and "empty" in res.reason


def test_release_infeasible():
    w = SimWorld(generate_scene("tabletop-pick", 0))
    res = skill_drop(w.cloud("container"), w, RejectAllChecker())
    assert not res.success and "motion planning" in res.reason


def test_desk_bell_press():
    w = SimWorld(generate_scene("desk-bell", 0))
    res = skill_tip_push(w.cloud("bell"), w.part_cloud("bell", "top button"), w,
                         SimMotionChecker())
    assert res.success, res.reason
    assert res.detail["pressed"] == "bell:top button"
    assert w.states["bell"].pressed["top button"]


def test_keyboard_space_bar_press():
    w = SimWorld(generate_scene("keyboard", 2))
    res = skill_tip_push(w.cloud("keyboard"), w.part_cloud("keyboard", "space bar"), w,
                         SimMotionChecker())
    assert res.success
    assert res.detail["pressed"] == "keyboard:space bar"
    assert [k for k, v in w.states["keyboard"].pressed.items() if v] == ["space bar"]


def test_keyboard_wrong_location_presses_wrong_key():
    w = SimWorld(generate_scene("keyboard", 2))
    res = skill_tip_push(w.cloud("keyboard"), w.part_cloud("keyboard", "q key"), w,
                         SimMotionChecker())
    assert res.detail["pressed"] == "keyboard:q key"
    assert not w.states["keyboard"].pressed["space bar"]


def _drawer(style):
    for seed in range(40):
        spec = generate_scene("drawer", seed)
        if spec.task.hints["style"] == style:
            return SimWorld(spec)
    raise AssertionError(style)


def test_drawer_pull_opens_half_range():
    w = _drawer("bar")
    handle = w.part_cloud("cabinet", "drawer handle")
    res = skill_pinch_pull(w.cloud("cabinet"), handle, w, Permissive())
    assert res.success, res.reason
    # pull 0.15 m on a 0.3 m joint; the axis is the handle's outward normal
    assert w.states["cabinet"].open_fraction == pytest.approx(0.5, abs=1e-6)
    assert not w.holding()


def test_drawer_hook_pull():
    w = _drawer("lip")
    res = skill_hook_pull(w.cloud("cabinet"), w.part_cloud("cabinet", "drawer handle"), w,
                          Permissive())
    assert res.success
    assert w.states["cabinet"].open_fraction == pytest.approx(0.5, abs=1e-6)
    assert abs(res.detail["axis"][2]) < 1e-9


def test_thumbtack_detaches_into_hand():
    w = SimWorld(generate_scene("thumbtack", 0))
    res = skill_pinch_pull(w.cloud("item"), w.part_cloud("item", "thumbtack head"), w,
                           SimMotionChecker())
    assert res.success, res.reason
    assert res.attached == "item" and w.held == "item"
    assert not w.states["item"].pinned


def test_pinch_slip_triggers_remap():
    spec = generate_scene("drawer", 0)
    w = SimWorld(spec)
    w.open_gripper()
    far = w.part_cloud("cabinet", "drawer handle") + [0.0, 0.0, 0.5]
    res = skill_pinch_pull(w.cloud("cabinet") + [0.0, 0.0, 0.5], far, w, Permissive())
    assert not res.success and res.remap
    assert "slipped" in res.reason


def test_upward_part_has_no_pull_axis():
    plate = _cube(size=0.05)
    top = plate[np.isclose(plate[:, 2], plate[:, 2].max())]
    res = skill_hook_pull(plate, top, FakeWorld(), Permissive())
    assert not res.success
    assert "horizontal pulling axis" in res.reason


def test_vertical_face_axis_exact():
    ys, zs = np.meshgrid(np.linspace(-0.05, 0.05, 6), np.linspace(0, 0.1, 6))
    face = np.column_stack([np.full(ys.size, 0.1), ys.ravel(), zs.ravel()])
    axis = pull_axis(face, np.array([0.0, 0.0, 0.05]))
    assert np.allclose(axis, [1.0, 0.0, 0.0], rtol=0, atol=1e-15)


@given(st.floats(0, 2 * math.pi), st.floats(-1.2, 1.2))
def test_pull_axis_horizontal_unit(yaw, tilt):
    u, v = np.meshgrid(np.linspace(-0.05, 0.05, 5), np.linspace(-0.05, 0.05, 5))
    n = np.array([math.cos(yaw) * math.cos(tilt), math.sin(yaw) * math.cos(tilt), math.sin(tilt)])
    a = np.cross(n, [0.0, 0.0, 1.0])
    a /= np.linalg.norm(a)
    b = np.cross(n, a)
    plate = u.ravel()[:, None] * a + v.ravel()[:, None] * b + 0.2 * n
    axis = pull_axis(plate, np.zeros(3))
    assert axis is not None
    assert abs(axis[2]) <= 1e-9
    assert np.linalg.norm(axis) == pytest.approx(1.0, abs=1e-12)
    # outward: points away from the object centroid
    assert np.dot(axis[:2], n[:2]) > 0


def test_verify_held_lifecycle_and_slip_injection():
    spec = generate_scene("tabletop-pick", 0)
    w = SimWorld(spec)
    assert not verify_held(w)
    skill_grasp(w.cloud("item"), w, MockGraspProposer(), SimMotionChecker())
    assert verify_held(w)
    skill_drop(w.cloud("container"), w, SimMotionChecker())
    assert not verify_held(w)
    slippy = SimWorld(spec, noise=NoiseConfig(p_slip=1.0))
    res = skill_grasp(slippy.cloud("item"), slippy, MockGraspProposer(), SimMotionChecker())
    assert not verify_held(slippy)
    assert not res.success and res.remap


def test_checker_reach_and_facing():
    chk = SimMotionChecker()
    w = FakeWorld()
    rot_down = geom.Pose3D.from_axes(np.array([0.5, 0, 0.1]),
                                     np.array([[1, 0, 0], [0, -1, 0], [0, 0, -1]], float))
    assert chk.feasible(rot_down, w)[0]
    far = geom.Pose3D.from_axes(np.array([2.0, 0, 0.1]), rot_down.rotation)
    ok, why = chk.feasible(far, w)
    assert not ok and "reach" in why
    # approach pointing back at the base (-x) is rejected
    back = np.array([[0, 0, -1], [0, 1, 0], [1, 0, 0]], float)
    ok, why = chk.feasible(geom.Pose3D.from_axes(np.array([0.5, 0, 0.1]), back), w)
    assert not ok and "faces the robot" in why


def test_skill_config_defaults():
    cfg = SkillConfig()
    assert (cfg.max_grasps, cfg.proximity, cfg.context_margin) == (10, 0.03, 0.10)
    assert (cfg.pull_distance, cfg.place_clearance, cfg.drop_height) == (0.15, 0.02, 0.10)
