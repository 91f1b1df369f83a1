"""Compare the compiled raycast kernel against the numpy fallback.

Usage: python benchmarks/render_benchmark.py [--frames 200] [--size 128]

Renders the same pose sweep through both backends, reports per-frame times
and verifies the outputs are bit-identical.
"""

import argparse
import math
import time

import numpy as np

from capnav import kernels
from capnav.core import CameraIntrinsics, Pose, Vec3
from capnav.renderer import ray_grid, scene_boxes
from capnav.scenegen import generate_scene, load_catalog


def run(frames: int, size: int) -> None:
    scene = generate_scene(7, load_catalog())
    cam = CameraIntrinsics(size, size, math.radians(60))
    boxes = scene_boxes(scene)
    poses = [
        Pose(Vec3(-3.0 + 0.01 * n, -2.5, 2.0), math.radians(40.0), -0.3)
        for n in range(frames)
    ]
    grids = [ray_grid(p, cam) for p in poses]

    impls = kernels.available_backends()
    results = {}
    for name, impl in impls.items():
        start = time.perf_counter()
        outs = []
        for pose, dirs in zip(poses, grids):
            origin = np.array(pose.position.as_tuple())
            outs.append(kernels.raycast_grid(origin, dirs, boxes, impl=impl))
        elapsed = time.perf_counter() - start
        results[name] = (elapsed, outs)
        print(f"{name:>8}: {elapsed / frames * 1e3:7.3f} ms/frame "
              f"({frames} frames of {size}x{size}, {len(boxes)} boxes)")

    if len(results) == 2:
        (_, a), (_, b) = results.values()
        identical = all(
            np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) and np.array_equal(x[2], y[2])
            for x, y in zip(a, b)
        )
        print(f"outputs bit-identical: {identical}")
        names = list(results)
        t0, t1 = results[names[0]][0], results[names[1]][0]
        slow, fast = max(t0, t1), min(t0, t1)
        winner = names[0] if t0 < t1 else names[1]
        print(f"speedup: {slow / fast:.1f}x ({winner} faster)")
    else:
        print("compiled backend not built; only the numpy fallback was timed")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--frames", type=int, default=200)
    parser.add_argument("--size", type=int, default=128)
    args = parser.parse_args()
    run(args.frames, args.size)
