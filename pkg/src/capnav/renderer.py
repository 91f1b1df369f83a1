"""Deterministic ray-cast renderer over scene boxes.

Per pixel: nearest slab-test hit across instance boxes (lowest instance
index wins ties), flat shading color * max(0.3, |n . ray|) on the hit face,
fixed light-gray background. Output channels: rgb, depth, instance index,
category id. Everything is a pure function of (scene, pose, camera).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from capnav import kernels, pngcodec
from capnav.core import CameraIntrinsics, DEFAULT_CAMERA, Pose, camera_basis
from capnav.scenegen import Scene

BACKGROUND_RGB = (0.8, 0.8, 0.8)
LAMBERT_FLOOR = 0.3
CATEGORY_GRID_BACKGROUND = 0xFFFF  # u16 export value for background pixels


@dataclass
class Frame:
    """One rendered observation; arrays are (height, width[, 3])."""

    width: int
    height: int
    rgb: np.ndarray  # float32 in [0, 1]
    depth: np.ndarray  # float32 meters, +inf at background
    instance_index: np.ndarray  # int16, -1 at background
    category_ids: np.ndarray  # int16 into category_names, -1 at background
    category_names: tuple[str, ...]
    frame_id: str | None = None

    def background_fraction(self) -> float:
        return float((self.instance_index < 0).mean())


@dataclass(frozen=True)
class Detection:
    """Ground-truth detection; confidence is the unoccluded-visibility ratio."""

    instance_index: int
    category: str
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive pixel bounds
    visible_pixels: int
    confidence: float
    mean_rgb: tuple[float, float, float]


def ray_grid(pose: Pose, cam: CameraIntrinsics) -> np.ndarray:
    """(H, W, 3) unit ray directions through every pixel center."""
    pitch = cam.vertical_fov / cam.height
    alpha = (np.arange(cam.width, dtype=np.float64) - (cam.width - 1) / 2.0) * pitch
    beta = ((cam.height - 1) / 2.0 - np.arange(cam.height, dtype=np.float64)) * pitch
    ca, sa = np.cos(alpha)[None, :], np.sin(alpha)[None, :]
    cb, sb = np.cos(beta)[:, None], np.sin(beta)[:, None]
    f, r, u = camera_basis(pose)
    dirs = np.empty((cam.height, cam.width, 3), dtype=np.float64)
    for ax, (fc, rc, uc) in enumerate(zip(f.as_tuple(), r.as_tuple(), u.as_tuple())):
        dirs[:, :, ax] = fc * (cb * ca) + rc * (cb * sa) + uc * sb
    return dirs


def scene_boxes(scene: Scene) -> np.ndarray:
    out = np.empty((len(scene.instances), 6), dtype=np.float64)
    for n, inst in enumerate(scene.instances):
        b = inst.box
        out[n] = (b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z)
    return out


def render(scene: Scene, pose: Pose, cam: CameraIntrinsics = DEFAULT_CAMERA,
           frame_id: str | None = None) -> Frame:
    """Render one frame; deterministic down to the byte."""
    dirs = ray_grid(pose, cam)
    origin = np.array(pose.position.as_tuple())
    t, idx, axis = kernels.raycast_grid(origin, dirs, scene_boxes(scene))

    names = scene.category_names()
    cat_of_instance = np.array([names.index(inst.category) for inst in scene.instances],
                               dtype=np.int16)
    colors = np.array([inst.color for inst in scene.instances], dtype=np.float64)

    hit = idx >= 0
    rgb = np.empty((cam.height, cam.width, 3), dtype=np.float64)
    rgb[:] = BACKGROUND_RGB
    if hit.any():
        ax = axis[hit].astype(np.intp)
        d_axis = np.take_along_axis(dirs[hit], ax[:, None], axis=1)[:, 0]
        factor = np.maximum(LAMBERT_FLOOR, np.abs(d_axis))
        rgb[hit] = colors[idx[hit]] * factor[:, None]

    category_ids = np.full((cam.height, cam.width), -1, dtype=np.int16)
    category_ids[hit] = cat_of_instance[idx[hit]]
    return Frame(
        width=cam.width,
        height=cam.height,
        rgb=rgb.astype(np.float32),
        depth=t.astype(np.float32),
        instance_index=idx.astype(np.int16),
        category_ids=category_ids,
        category_names=names,
        frame_id=frame_id,
    )


def seg_stats(frame: Frame) -> dict[str, float]:
    """Per-category visible pixel fraction; background excluded."""
    total = frame.width * frame.height
    out: dict[str, float] = {}
    for cid, count in zip(*np.unique(frame.category_ids, return_counts=True)):
        if cid >= 0:
            out[frame.category_names[cid]] = float(count) / total
    return out


def detect(scene: Scene, pose: Pose, cam: CameraIntrinsics = DEFAULT_CAMERA) -> list[Detection]:
    """One Detection per instance with at least one visible pixel.

    Confidence = visible pixels / pixels the instance covers when rendered
    alone at the same pose (occlusion analog of a detector score).
    """
    frame = render(scene, pose, cam)
    dirs = ray_grid(pose, cam)
    origin = np.array(pose.position.as_tuple())
    boxes = scene_boxes(scene)
    out = []
    for n, inst in enumerate(scene.instances):
        mask = frame.instance_index == n
        visible = int(mask.sum())
        if visible == 0:
            continue
        _, solo_idx, _ = kernels.raycast_grid(origin, dirs, boxes[n : n + 1])
        solo = int((solo_idx == 0).sum())
        ys, xs = np.nonzero(mask)
        out.append(
            Detection(
                instance_index=n,
                category=inst.category,
                bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
                visible_pixels=visible,
                confidence=visible / solo,
                mean_rgb=tuple(float(v) for v in frame.rgb[mask].mean(axis=0)),
            )
        )
    return out


def frame_to_png(frame: Frame) -> bytes:
    """RGB channel as PNG bytes (deterministic encoder)."""
    u8 = np.clip(np.rint(frame.rgb * 255.0), 0, 255).astype(np.uint8)
    return pngcodec.encode_rgb(u8)


def category_grid_bytes(frame: Frame) -> bytes:
    """Category ids as row-major little-endian u16; background = 0xFFFF."""
    grid = frame.category_ids.astype(np.int32)
    grid[grid < 0] = CATEGORY_GRID_BACKGROUND
    return grid.astype("<u2").tobytes()


def category_grid_from_bytes(data: bytes, width: int, height: int) -> np.ndarray:
    grid = np.frombuffer(data, dtype="<u2").reshape(height, width).astype(np.int32)
    grid[grid == CATEGORY_GRID_BACKGROUND] = -1
    return grid.astype(np.int16)


def world_hits(frame: Frame, pose: Pose, cam: CameraIntrinsics) -> np.ndarray:
    """(M, 3) world-space hit points of all instance pixels (for aiming heuristics)."""
    mask = frame.instance_index >= 0
    if not mask.any():
        return np.empty((0, 3))
    dirs = ray_grid(pose, cam)
    t = frame.depth.astype(np.float64)[mask]
    origin = np.array(pose.position.as_tuple())
    return origin + dirs[mask] * t[:, None]


def visible_instances(frame: Frame) -> list[int]:
    """Sorted instance indices with at least one visible pixel."""
    return [int(v) for v in np.unique(frame.instance_index[frame.instance_index >= 0])]


def visible_instance_count(frame: Frame) -> int:
    return int(np.unique(frame.instance_index[frame.instance_index >= 0]).size)


def score_components(frame: Frame) -> tuple[int, float]:
    """(visible instance count, background fraction) used by viewpoint scoring."""
    return visible_instance_count(frame), frame.background_fraction()


def shading_factor(view_axis_component: float) -> float:
    """Scalar twin of the kernel shading rule (used by tests)."""
    return max(LAMBERT_FLOOR, abs(view_axis_component))
