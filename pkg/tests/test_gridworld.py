import math

import numpy as np
import pytest

from capnav.core import Aabb, GridIndex, Pose, Vec3
from capnav.gridworld import (
    ALL_STOP,
    Action,
    BadActionError,
    EpisodeDoneError,
    action_to_vec10,
    apply_actions,
    build_navspace,
    make_episode,
    move_basis,
    start_pose,
    step,
    vec10_to_action,
)
from capnav.scenegen import Instance, Scene


def box_scene(*boxes: Aabb) -> Scene:
    """Synthetic scene; instance count invariants don't apply to hand-builds."""
    instances = tuple(
        Instance(f"box{i}", "box", b, 0.0, (0.5, 0.5, 0.5)) for i, b in enumerate(boxes)
    )
    center = boxes[0].center() if boxes else Vec3(0, 0, 0)
    return Scene("synthetic", 0, instances, center)


EMPTY = Scene("empty", 0, (), Vec3(0, 0, 0.25))


class TestNavSpace:
    def test_empty_scene_all_navigable(self):
        assert build_navspace(EMPTY).navigable_count() == 4851

    def test_single_box_enumeration(self):
        # box [-0.3,0.3]^3 inflates to [-0.5,0.5]^3: 3x3 lattice in x,y and
        # z in {0, 0.4} -> 18 occupied points
        scene = box_scene(Aabb(Vec3(-0.3, -0.3, -0.3), Vec3(0.3, 0.3, 0.3)))
        nav = build_navspace(scene)
        assert 4851 - nav.navigable_count() == 18

    def test_monotone_in_inflation(self, scene42):
        import capnav.gridworld as gw

        nav = build_navspace(scene42)
        bigger = gw.inflated_boxes(scene42, radius=0.4)
        # every occupied point stays occupied under a larger radius
        occ = nav.occupancy
        pts = np.argwhere(occ)
        world = np.column_stack([-4 + 0.4 * pts[:, 0], -4 + 0.4 * pts[:, 1], 0.4 * pts[:, 2]])
        inside = (
            (world[:, None, :] >= bigger[None, :, :3] - 1e-12)
            & (world[:, None, :] <= bigger[None, :, 3:] + 1e-12)
        ).all(axis=2).any(axis=1)
        assert inside.all()


class TestMoveBasis:
    def test_heading_zero(self):
        f, r, u = move_basis(0.0)
        assert (f - Vec3(1, 0, 0)).norm() < 1e-12
        assert (r - Vec3(0, -1, 0)).norm() < 1e-12
        assert (u - Vec3(0, 0, 1)).norm() < 1e-12

    def test_heading_quarter(self):
        f, r, _ = move_basis(math.pi / 2)
        assert (f - Vec3(0, 1, 0)).norm() < 1e-12
        assert (r - Vec3(1, 0, 0)).norm() < 1e-12

    def test_orthonormal_random(self, rng):
        for h in rng.uniform(-math.pi, math.pi, 100):
            f, r, u = move_basis(float(h))
            for v in (f, r, u):
                assert v.norm() == pytest.approx(1.0, abs=1e-12)
            assert abs(f.dot(r)) < 1e-12
            assert abs(f.dot(u)) < 1e-12
            assert abs(r.dot(u)) < 1e-12


class TestActionCodec:
    def test_all_stop_is_zero_vector(self):
        assert action_to_vec10(ALL_STOP) == [0.0] * 10

    def test_forward_full(self):
        a = Action(move_fb=("forward", 1.6))
        assert action_to_vec10(a) == [1.0, 0, 0, 0, 0, 1.0, 0, 0, 0, 0]

    def test_signs(self):
        a = Action(move_lr=("right", 0.8), rot_heading=("left", math.pi / 2),
                   rot_elevation=("down", 0.25))
        v = action_to_vec10(a)
        assert v[1] == -1.0 and v[3] == 1.0 and v[4] == -1.0
        assert v[6] == pytest.approx(0.5)
        assert v[8] == pytest.approx(0.5)

    def test_round_trip_random(self, rng):
        dirs = {
            "move_fb": ("forward", "backward"),
            "move_lr": ("left", "right"),
            "move_ud": ("up", "down"),
            "rot_heading": ("left", "right"),
            "rot_elevation": ("up", "down"),
        }
        for _ in range(1000):
            parts = {}
            for name, opts in dirs.items():
                roll = rng.integers(0, 3)
                if roll == 0:
                    parts[name] = ("stop", 0.0)
                else:
                    hi = 1.6 if name.startswith("move") else math.pi
                    parts[name] = (opts[roll - 1], float(rng.uniform(1e-6, hi)))
            a = Action(**parts)
            b = vec10_to_action(action_to_vec10(a))
            for name in dirs:
                da, ma = getattr(a, name)
                db, mb = getattr(b, name)
                assert da == db
                assert mb == pytest.approx(ma, rel=4e-16, abs=0.0)

    def test_invalid_vectors(self):
        with pytest.raises(BadActionError):
            vec10_to_action([0.5] + [0.0] * 9)  # direction not in {-1,0,1}
        with pytest.raises(BadActionError):
            vec10_to_action([0.0] * 5 + [0.5] + [0.0] * 4)  # stop with magnitude
        with pytest.raises(BadActionError):
            vec10_to_action([1.0] + [0.0] * 9)  # direction with zero magnitude
        with pytest.raises(BadActionError):
            vec10_to_action([1.0, 0, 0, 0, 0, 1.5, 0, 0, 0, 0])  # move norm > 1
        with pytest.raises(BadActionError):
            vec10_to_action([0.0] * 9)  # wrong length

    def test_invalid_actions(self):
        with pytest.raises(BadActionError):
            Action(move_fb=("forward", 0.0))
        with pytest.raises(BadActionError):
            Action(move_fb=("stop", 0.5))
        with pytest.raises(BadActionError):
            Action(move_fb=("forward", 1.7))
        with pytest.raises(BadActionError):
            Action(move_fb=("left", 0.5))  # wrong vocabulary for the slot


class TestStep:
    def test_forward_moves_along_heading(self):
        state = make_episode(EMPTY, Pose(Vec3(0, 0, 2), 0.0, 0.0))
        step(state, Action(move_fb=("forward", 0.8)))
        assert (state.pose.position - Vec3(0.8, 0, 2)).norm() < 1e-12

    def test_all_stop_marks_done(self):
        state = make_episode(EMPTY, Pose(Vec3(0, 0, 2), 0.3, 0.1))
        step(state, ALL_STOP)
        assert state.done
        assert state.pose == state.pose_history[0]
        with pytest.raises(EpisodeDoneError):
            step(state, ALL_STOP)

    def test_truncation_hand_walk(self):
        # box entry (inflated) exactly 0.3 m ahead: samples 0.1, 0.2 free,
        # 0.3 on the boundary counts blocked -> stop at 0.2
        scene = box_scene(Aabb(Vec3(0.5, -1, 1), Vec3(1.5, 1, 3)))
        state = make_episode(scene, Pose(Vec3(0, 0, 2), 0.0, 0.0))
        step(state, Action(move_fb=("forward", 1.6)))
        assert state.pose.position.x == pytest.approx(0.2, abs=1e-12)

    def test_clamped_to_environment(self):
        state = make_episode(EMPTY, Pose(Vec3(3.5, 0, 2), 0.0, 0.0))
        step(state, Action(move_fb=("forward", 1.6)))
        assert state.pose.position.x == 4.0

    def test_rotation_wrap_and_clamp(self):
        state = make_episode(EMPTY, Pose(Vec3(0, 0, 2), math.pi * 0.9, 1.4))
        step(state, Action(rot_heading=("left", math.pi * 0.2), rot_elevation=("up", 0.5)))
        assert state.pose.heading == pytest.approx(-math.pi * 0.9)
        assert state.pose.elevation == math.pi / 2

    def test_max_steps_termination(self):
        state = make_episode(EMPTY, Pose(Vec3(0, 0, 2), 0.0, 0.0), max_steps=12)
        for n in range(12):
            step(state, Action(rot_heading=("left", 0.1)))
        assert state.done and state.step_count == 12
        with pytest.raises(EpisodeDoneError):
            step(state, ALL_STOP)

    def test_replay_determinism(self, scene42, rng):
        actions = []
        for _ in range(8):
            actions.append(Action(
                move_fb=("forward", float(rng.uniform(0.1, 1.6))),
                rot_heading=("left", float(rng.uniform(0.0, 1.0)) + 1e-6),
            ))
        start = start_pose(scene42, GridIndex(2, 2, 6))
        h1 = apply_actions(scene42, start, actions)
        h2 = apply_actions(scene42, start, actions)
        assert h1 == h2  # bit-for-bit

    def test_never_inside_inflated_box_random_walk(self, scenes20):
        import capnav.gridworld as gw

        rng = np.random.default_rng(11)
        dirs = {
            "move_fb": ("forward", "backward"),
            "move_lr": ("left", "right"),
            "move_ud": ("up", "down"),
        }
        checked = 0
        for scene in scenes20[:10]:
            boxes = gw.inflated_boxes(scene)
            nav = build_navspace(scene)
            free = nav.navigable_points()
            g = free[int(rng.integers(0, len(free)))]
            state = make_episode(scene, GridIndex(*(int(v) for v in g)), max_steps=10**9)
            taken = 0
            while taken < 1000:
                parts = {}
                for name, opts in dirs.items():
                    roll = rng.integers(0, 4)
                    if roll == 0:
                        parts[name] = ("stop", 0.0)
                    else:
                        parts[name] = (opts[roll % 2], float(rng.uniform(0.05, 1.6)))
                if all(v[0] == "stop" for v in parts.values()):
                    continue
                taken += 1
                step(state, Action(**parts))
                p = state.pose.position
                assert -4 <= p.x <= 4 and -4 <= p.y <= 4 and 0 <= p.z <= 4
                pt = np.array([p.as_tuple()])
                inside = ((pt >= boxes[:, :3]) & (pt <= boxes[:, 3:])).all(axis=1)
                assert not inside.any()
                checked += 1
        assert checked == 10_000
