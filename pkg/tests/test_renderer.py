import math

import numpy as np
import pytest

from capnav import _raycast_py, kernels
from capnav.core import Aabb, CameraIntrinsics, Pose, Vec3, camera_ray
from capnav.pngcodec import decode_rgb
from capnav.renderer import (
    Frame,
    category_grid_bytes,
    category_grid_from_bytes,
    detect,
    frame_to_png,
    ray_grid,
    render,
    scene_boxes,
    seg_stats,
)
from capnav.scenegen import Instance, Scene

CAM = CameraIntrinsics(64, 64, math.radians(60))


def box_scene(*specs) -> Scene:
    instances = tuple(
        Instance(f"b{i}", cat, box, 0.0, color) for i, (cat, box, color) in enumerate(specs)
    )
    return Scene("synthetic", 0, instances, instances[0].box.center() if instances else Vec3(0, 0, 0))


EMPTY = Scene("empty", 0, (), Vec3(0, 0, 0.5))


def slab_entry(origin, direction, lo, hi):
    """Independent interval-arithmetic ray/box entry for the oracle."""
    t0, t1 = -math.inf, math.inf
    for o, d, a, b in zip(origin, direction, lo, hi):
        if d == 0.0:
            if o < a or o > b:
                return None
            continue
        lo_t, hi_t = sorted(((a - o) / d, (b - o) / d))
        t0, t1 = max(t0, lo_t), min(t1, hi_t)
    if t1 < t0 or t1 < 0:
        return None
    return max(t0, 0.0)


class TestRender:
    def test_empty_scene_all_background(self):
        frame = render(EMPTY, Pose(Vec3(0, 0, 2), 0.0, 0.0), CAM)
        assert (frame.instance_index == -1).all()
        assert (frame.rgb == np.float32(0.8)).all()
        assert np.isinf(frame.depth).all()

    def test_center_pixel_depth_is_near_face(self):
        # camera 2 m from the near face of a box straddling the optical axis
        scene = box_scene(("box", Aabb(Vec3(2.0, -0.5, 1.5), Vec3(3.0, 0.5, 2.5)), (1.0, 0.2, 0.2)))
        cam = CameraIntrinsics(65, 65, math.radians(60))
        frame = render(scene, Pose(Vec3(0, 0, 2), 0.0, 0.0), cam)
        assert frame.instance_index[32, 32] == 0
        assert frame.depth[32, 32] == pytest.approx(2.0, abs=1e-6)

    def test_determinism(self, scene42):
        pose = Pose(Vec3(-2, -2, 2), 0.6, -0.3)
        a = render(scene42, pose, CAM)
        b = render(scene42, pose, CAM)
        assert np.array_equal(a.rgb, b.rgb)
        assert np.array_equal(a.depth, b.depth)
        assert np.array_equal(a.instance_index, b.instance_index)
        assert frame_to_png(a) == frame_to_png(b)

    def test_matches_bruteforce_oracle(self, scenes20):
        """Nearest hit per pixel equals an exhaustive per-instance check."""
        rng = np.random.default_rng(2024)
        for scene in scenes20:
            pose = Pose(Vec3(*rng.uniform(-3, 3, 2), rng.uniform(0.5, 3.5)),
                        float(rng.uniform(-math.pi, math.pi)), float(rng.uniform(-1.2, 1.2)))
            frame = render(scene, pose, CAM)
            boxes = scene_boxes(scene)
            for _ in range(100):
                px, py = int(rng.integers(0, CAM.width)), int(rng.integers(0, CAM.height))
                origin, d = camera_ray(pose, CAM, px, py)
                best_t, best_i = math.inf, -1
                for i in range(len(boxes)):
                    t = slab_entry(origin.as_tuple(), d.as_tuple(), boxes[i, :3], boxes[i, 3:])
                    if t is not None and t < best_t:
                        best_t, best_i = t, i
                assert frame.instance_index[py, px] == best_i
                if best_i >= 0:
                    assert frame.depth[py, px] == pytest.approx(best_t, abs=1e-5)

    def test_depth_ordering_no_closer_box(self, scene42):
        pose = Pose(Vec3(-2.4, -2.4, 2.0), 0.8, -0.4)
        frame = render(scene42, pose, CAM)
        dirs = ray_grid(pose, CAM)
        boxes = scene_boxes(scene42)
        origin = np.array(pose.position.as_tuple())
        ys, xs = np.nonzero(frame.instance_index >= 0)
        rng = np.random.default_rng(3)
        picks = rng.choice(len(ys), size=min(200, len(ys)), replace=False)
        for p in picks:
            y, x = int(ys[p]), int(xs[p])
            t_hit = float(frame.depth[y, x])
            for i in range(len(boxes)):
                t = slab_entry(origin, dirs[y, x], boxes[i, :3], boxes[i, 3:])
                if t is not None:
                    assert t >= t_hit - 1e-5


class TestKernels:
    def test_backends_bit_identical(self, scene42):
        impls = kernels.available_backends()
        if len(impls) < 2:
            pytest.skip("compiled kernel not built")
        pose = Pose(Vec3(-2, 1.5, 1.2), 2.2, -0.5)
        dirs = ray_grid(pose, CAM)
        origin = np.array(pose.position.as_tuple())
        boxes = scene_boxes(scene42)
        results = [kernels.raycast_grid(origin, dirs, boxes, impl=impl)
                   for impl in impls.values()]
        for a, b in zip(results[0], results[1]):
            assert np.array_equal(a, b)

    def test_env_var_forces_python_backend(self):
        import subprocess
        import sys

        out = subprocess.run(
            [sys.executable, "-c", "from capnav import kernels; print(kernels.BACKEND)"],
            env={**__import__("os").environ, "CAPNAV_PURE_PYTHON": "1"},
            capture_output=True, text=True, check=True,
        )
        assert out.stdout.strip() == "numpy"

    def test_python_fallback_direct(self):
        h = w = 8
        dirs = np.zeros((h, w, 3))
        dirs[:, :, 0] = 1.0
        boxes = np.array([[1.0, -1, -1, 2.0, 1, 1], [0.5, -1, -1, 3.0, 1, 1]])
        out_t = np.empty((h, w))
        out_idx = np.empty((h, w), dtype=np.int32)
        out_axis = np.empty((h, w), dtype=np.int8)
        _raycast_py.raycast_into(np.zeros(3), dirs, boxes, out_t, out_idx, out_axis)
        assert (out_idx == 1).all()  # nearer box wins
        assert (out_t == 0.5).all()
        assert (out_axis == 0).all()


class TestSegStats:
    def test_empty(self):
        frame = render(EMPTY, Pose(Vec3(0, 0, 2), 0.0, 0.0), CAM)
        assert seg_stats(frame) == {}

    def test_fraction_counts(self):
        # synthetic frame: 25% of pixels are 'table'
        ci = np.full((8, 8), -1, dtype=np.int16)
        ci[:4, :4] = 0
        frame = Frame(8, 8, np.zeros((8, 8, 3), np.float32), np.zeros((8, 8), np.float32),
                      ci.copy(), ci, ("table",))
        assert seg_stats(frame) == {"table": 0.25}

    def test_same_category_sums(self):
        scene = box_scene(
            ("cup", Aabb(Vec3(1.5, -1.0, 1.8), Vec3(2.0, -0.6, 2.2)), (1, 0, 0)),
            ("cup", Aabb(Vec3(1.5, 0.6, 1.8), Vec3(2.0, 1.0, 2.2)), (0, 1, 0)),
        )
        frame = render(scene, Pose(Vec3(0, 0, 2), 0.0, 0.0), CAM)
        per_instance = [(frame.instance_index == i).mean() for i in range(2)]
        assert seg_stats(frame)["cup"] == pytest.approx(sum(per_instance))

    def test_ratios_plus_background_is_one(self, scenes20):
        for scene in scenes20[:5]:
            frame = render(scene, Pose(Vec3(-2, -2, 2), 0.8, -0.3), CAM)
            total = sum(seg_stats(frame).values()) + frame.background_fraction()
            assert total == pytest.approx(1.0, abs=1e-12)


class TestDetect:
    def test_unoccluded_confidence_one(self):
        scene = box_scene(("box", Aabb(Vec3(1.5, -0.5, 1.5), Vec3(2.5, 0.5, 2.5)), (1, 0, 0)))
        dets = detect(scene, Pose(Vec3(0, 0, 2), 0.0, 0.0), CAM)
        assert len(dets) == 1
        assert dets[0].confidence == 1.0

    def test_half_occluded_confidence(self):
        # occluder covers exactly the left half of the target's visible extent
        scene = box_scene(
            ("target", Aabb(Vec3(2.0, -0.8, 1.6), Vec3(2.4, 0.8, 2.4)), (1, 0, 0)),
            ("wall", Aabb(Vec3(1.0, -0.8, 1.6), Vec3(1.2, 0.0, 2.4)), (0, 0, 1)),
        )
        dets = detect(scene, Pose(Vec3(0, 0, 2), 0.0, 0.0), CAM)
        target = next(d for d in dets if d.category == "target")
        assert target.confidence == pytest.approx(0.5, abs=0.05)  # one pixel-quantum slack

    def test_offscreen_absent(self):
        scene = box_scene(("box", Aabb(Vec3(-2.5, -0.5, 1.5), Vec3(-1.5, 0.5, 2.5)), (1, 0, 0)))
        dets = detect(scene, Pose(Vec3(0, 0, 2), 0.0, 0.0), CAM)  # box is behind
        assert dets == []

    def test_bbox_within_image(self, scene42):
        for d in detect(scene42, Pose(Vec3(-2, -2, 2), 0.8, -0.3), CAM):
            x0, y0, x1, y1 = d.bbox
            assert 0 <= x0 <= x1 < CAM.width
            assert 0 <= y0 <= y1 < CAM.height
            assert d.visible_pixels >= 1
            assert d.confidence <= 1.0


class TestExports:
    def test_png_round_trip(self, scene42):
        frame = render(scene42, Pose(Vec3(-2, -2, 2), 0.8, -0.3), CAM)
        decoded = decode_rgb(frame_to_png(frame))
        want = np.clip(np.rint(frame.rgb * 255.0), 0, 255).astype(np.uint8)
        assert np.array_equal(decoded, want)

    def test_category_grid_round_trip(self, scene42):
        frame = render(scene42, Pose(Vec3(-2, -2, 2), 0.8, -0.3), CAM)
        data = category_grid_bytes(frame)
        assert len(data) == CAM.width * CAM.height * 2
        grid = category_grid_from_bytes(data, frame.width, frame.height)
        assert np.array_equal(grid, frame.category_ids)
