"""Non-neural baselines: a rule-based navigator and a template captioner.

The navigator steers by the distribution of instance pixels in the current
frame (up/down halves, left/middle/right thirds), probes forward moves for
visibility loss, and re-aims after each move by trying four 90-degree-left
headings. The captioner fills sentence templates from ground-truth
detections: largest object first, then each smaller object related to a
random already-mentioned larger one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from capnav.core import (
    DEFAULT_CAMERA,
    CameraIntrinsics,
    GridIndex,
    Pose,
    Vec3,
    look_at,
    wrap_angle,
)
from capnav.gridworld import (
    ALL_STOP,
    Action,
    EpisodeState,
    make_episode,
    move_basis,
    step,
)
from capnav.oracle import Trajectory, axial_path_length
from capnav.renderer import Detection, detect, render, visible_instance_count, world_hits
from capnav.scenegen import Instance, Scene

RULE_MOVE_M = 0.8
CONFIDENCE_THRESHOLD = 0.9
MAX_CAPTION_TOKENS = 77
VERTICAL_CONTACT_M = 0.1
DOMINANCE_MARGIN_M = 0.15

RELATIONS = ("on", "above", "below", "left of", "right of", "in front of", "behind", "next to")

# 11 basic color terms with RGB anchors; objects are named by nearest anchor.
_COLOR_ANCHORS = (
    ("red", (0.80, 0.10, 0.10)),
    ("orange", (0.90, 0.55, 0.10)),
    ("yellow", (0.90, 0.85, 0.15)),
    ("green", (0.15, 0.65, 0.20)),
    ("blue", (0.15, 0.30, 0.80)),
    ("purple", (0.55, 0.20, 0.70)),
    ("pink", (0.95, 0.60, 0.75)),
    ("brown", (0.45, 0.30, 0.15)),
    ("black", (0.08, 0.08, 0.08)),
    ("white", (0.95, 0.95, 0.95)),
    ("gray", (0.50, 0.50, 0.50)),
)


@dataclass(frozen=True)
class TemplateBank:
    largest: tuple[str, ...]
    relation: tuple[str, ...]
    leftover: str


def load_templates(path: str | None = None) -> TemplateBank:
    if path is None:
        raw = resources.files("capnav").joinpath("data/templates.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            raw = f.read()
    doc = json.loads(raw)
    return TemplateBank(tuple(doc["largest"]), tuple(doc["relation"]), doc["leftover"])


def color_name(rgb: Sequence[float]) -> str:
    r, g, b = rgb
    return min(
        _COLOR_ANCHORS,
        key=lambda item: (r - item[1][0]) ** 2 + (g - item[1][1]) ** 2 + (b - item[1][2]) ** 2,
    )[0]


def _with_article(phrase: str) -> str:
    article = "an" if phrase[0] in "aeiou" else "a"
    return f"{article} {phrase}"


def _object_phrase(inst: Instance) -> str:
    return f"{color_name(inst.color)} {inst.category.replace('_', ' ')}"


def _sentence(text: str) -> str:
    return text[0].upper() + text[1:]


def relation_of(small: Instance, large: Instance, pose: Pose) -> str:
    """Spatial relation of `small` w.r.t. `large` as seen from `pose`."""
    overlap_x = min(small.box.max.x, large.box.max.x) - max(small.box.min.x, large.box.min.x)
    overlap_y = min(small.box.max.y, large.box.max.y) - max(small.box.min.y, large.box.min.y)
    footprints_overlap = overlap_x > 0.0 and overlap_y > 0.0
    if footprints_overlap:
        if abs(small.box.min.z - large.box.max.z) <= VERTICAL_CONTACT_M:
            return "on"
        if small.box.min.z - large.box.max.z > VERTICAL_CONTACT_M:
            return "above"
        if large.box.min.z - small.box.max.z > VERTICAL_CONTACT_M:
            return "below"
    offset = small.box.center() - large.box.center()
    f, r, _ = move_basis(pose.heading)
    lateral = offset.dot(r)  # positive = camera right
    depth = offset.dot(f)  # positive = farther from camera
    if abs(lateral) < DOMINANCE_MARGIN_M and abs(depth) < DOMINANCE_MARGIN_M:
        return "next to"
    if abs(lateral) >= abs(depth):
        return "left of" if lateral < 0.0 else "right of"
    return "in front of" if depth < 0.0 else "behind"


def caption_view(
    scene: Scene,
    pose: Pose,
    detections: Sequence[Detection],
    bank: TemplateBank,
    rng: np.random.Generator,
    confidence_threshold: float = CONFIDENCE_THRESHOLD,
) -> list[str]:
    """One sentence per confidently detected object, largest first."""
    dets = [d for d in detections if d.confidence > confidence_threshold]
    if not dets:
        return ["The view is empty."]
    ordered = sorted(
        dets,
        key=lambda d: (-(d.bbox[2] - d.bbox[0] + 1) * (d.bbox[3] - d.bbox[1] + 1), d.instance_index),
    )
    sentences = []
    largest = scene.instances[ordered[0].instance_index]
    template = bank.largest[int(rng.integers(0, len(bank.largest)))]
    sentences.append(_sentence(template.format(obj=_with_article(_object_phrase(largest)))))
    mentioned = [ordered[0]]
    for det in ordered[1:]:
        anchor = mentioned[int(rng.integers(0, len(mentioned)))]
        small = scene.instances[det.instance_index]
        large = scene.instances[anchor.instance_index]
        rel = relation_of(small, large, pose)
        template = bank.relation[int(rng.integers(0, len(bank.relation)))]
        sentences.append(
            _sentence(
                template.format(
                    small=_with_article(_object_phrase(small)),
                    large=_object_phrase(large),
                    rel=rel,
                )
            )
        )
        mentioned.append(det)
    return sentences


def caption_trajectory(
    scene: Scene,
    poses: Sequence[Pose],
    per_view_detections: Sequence[Sequence[Detection]],
    bank: TemplateBank,
    rng: np.random.Generator,
    confidence_threshold: float = CONFIDENCE_THRESHOLD,
    max_tokens: int = MAX_CAPTION_TOKENS,
) -> str:
    """Best-view caption plus a leftover sentence for objects seen elsewhere."""
    if not per_view_detections:
        raise ValueError("need at least one view")
    sums = [sum(d.confidence for d in dets) for dets in per_view_detections]
    best = int(np.argmax(sums))
    sentences = caption_view(
        scene, poses[best], per_view_detections[best], bank, rng, confidence_threshold
    )
    in_best = {
        d.instance_index
        for d in per_view_detections[best]
        if d.confidence > confidence_threshold
    }
    elsewhere = sorted(
        {
            d.instance_index
            for dets in per_view_detections
            for d in dets
            if d.confidence > confidence_threshold and d.instance_index not in in_best
        }
    )
    if elsewhere:
        phrases = [_with_article(_object_phrase(scene.instances[i])) for i in elsewhere]
        if len(phrases) == 1:
            filler = phrases[0]
        else:
            filler = ", ".join(phrases[:-1]) + ", and " + phrases[-1]
        sentences.append(_sentence(bank.leftover.format(objs=filler)))
    words = " ".join(sentences).split()
    return " ".join(words[:max_tokens])


def _probe_pose(state: EpisodeState, action: Action) -> Pose:
    """Pose after `action` without touching the real episode."""
    scratch = EpisodeState(
        scene=state.scene,
        pose=state.pose,
        max_steps=state.max_steps + 1,
        pose_history=[state.pose],
        _boxes=state.boxes(),
    )
    return step(scratch, action).pose


def _instance_pixels(frame) -> int:
    return int((frame.instance_index >= 0).sum())


def rule_navigate(
    scene: Scene,
    start: GridIndex | Pose,
    max_steps: int = 12,
    cam: CameraIntrinsics = DEFAULT_CAMERA,
    move_m: float = RULE_MOVE_M,
) -> Trajectory:
    """Pixel-mass steering baseline; runs exactly max_steps then stops.

    Per step: move up/down toward the half with more instance pixels,
    forward if the middle third dominates (backward instead when a probe
    shows fewer visible instances after the move), else sideways toward the
    dominant third; then keep the best of four 90-degree-left headings by
    instance pixel area and re-aim elevation at the visible-pixel centroid.
    An empty view rotates 90 degrees left instead.
    """
    state = make_episode(scene, start, max_steps)
    for _ in range(max_steps):
        frame = render(scene, state.pose, cam)
        inst = frame.instance_index >= 0
        if not inst.any():
            step(state, Action(rot_heading=("left", math.pi / 2)))
            continue
        h2 = cam.height // 2
        upper, lower = int(inst[:h2].sum()), int(inst[h2:].sum())
        if upper > lower:
            ud = ("up", move_m)
        elif lower > upper:
            ud = ("down", move_m)
        else:
            ud = ("stop", 0.0)
        third_cols = np.array_split(np.arange(cam.width), 3)
        left_a, mid_a, right_a = (int(inst[:, cols].sum()) for cols in third_cols)
        fb, lr = ("stop", 0.0), ("stop", 0.0)
        if (mid_a >= left_a and mid_a >= right_a) or left_a == right_a:
            fb = ("forward", move_m)
        elif left_a > right_a:
            lr = ("left", move_m)
        else:
            lr = ("right", move_m)
        if fb[0] == "forward":
            move_only = Action(move_fb=fb, move_lr=lr, move_ud=ud)
            probe = render(scene, _probe_pose(state, move_only), cam)
            if visible_instance_count(probe) < visible_instance_count(frame):
                fb = ("backward", move_m)

        # orientation search happens at the post-move position
        move_only = Action(move_fb=fb, move_lr=lr, move_ud=ud)
        moved = _probe_pose(state, move_only)
        best_turn, best_area, best_frame = 0, -1, None
        for turn in range(4):
            cand = Pose(
                moved.position,
                wrap_angle(state.pose.heading + turn * math.pi / 2),
                moved.elevation,
            )
            cand_frame = render(scene, cand, cam)
            area = _instance_pixels(cand_frame)
            if area > best_area:
                best_turn, best_area, best_frame = turn, area, cand_frame
        target_heading = wrap_angle(state.pose.heading + best_turn * math.pi / 2)
        target_elevation = moved.elevation
        if best_area > 0:
            aim_pose = Pose(moved.position, target_heading, moved.elevation)
            hits = world_hits(best_frame, aim_pose, cam)
            centroid = hits.mean(axis=0)
            centroid_v = Vec3(float(centroid[0]), float(centroid[1]), float(centroid[2]))
            if centroid_v != aim_pose.position:
                _, target_elevation = look_at(aim_pose.position, centroid_v, target_heading)

        dh = wrap_angle(target_heading - state.pose.heading)
        de = target_elevation - state.pose.elevation
        rot_h = ("left", dh) if dh > 0 else ("right", -dh) if dh < 0 else ("stop", 0.0)
        rot_e = ("up", de) if de > 0 else ("down", -de) if de < 0 else ("stop", 0.0)
        step(state, Action(move_fb=fb, move_lr=lr, move_ud=ud, rot_heading=rot_h, rot_elevation=rot_e))

    start_grid = start if isinstance(start, GridIndex) else None
    return Trajectory(
        scene_id=scene.scene_id,
        start=start_grid,
        target=None,
        poses=tuple(state.pose_history),
        actions=tuple(state.action_history) + (ALL_STOP,),
        path_length_m=axial_path_length(state.pose_history),
    )


def random_navigate(
    scene: Scene,
    start: GridIndex | Pose,
    rng: np.random.Generator,
    max_steps: int = 12,
) -> Trajectory:
    """Uniform-random agent: independent direction draws per component."""
    state = make_episode(scene, start, max_steps)
    move_dirs = {"move_fb": ("forward", "backward"), "move_lr": ("left", "right"),
                 "move_ud": ("up", "down")}
    rot_dirs = {"rot_heading": ("left", "right"), "rot_elevation": ("up", "down")}
    while not state.done:
        parts = {}
        for name, options in move_dirs.items():
            roll = int(rng.integers(0, 3))
            parts[name] = ("stop", 0.0) if roll == 0 else (options[roll - 1], float(rng.uniform(0.1, 1.6)))
        for name, options in rot_dirs.items():
            roll = int(rng.integers(0, 3))
            parts[name] = ("stop", 0.0) if roll == 0 else (options[roll - 1], float(rng.uniform(0.1, math.pi / 2)))
        step(state, Action(**parts))
    poses = list(state.pose_history)
    actions = tuple(state.action_history)
    if actions and actions[-1].is_all_stop:
        poses.pop()  # the executed stop only duplicated the final pose
    else:
        actions = actions + (ALL_STOP,)
    start_grid = start if isinstance(start, GridIndex) else None
    return Trajectory(
        scene_id=scene.scene_id,
        start=start_grid,
        target=None,
        poses=tuple(poses),
        actions=actions,
        path_length_m=axial_path_length(poses),
    )


def caption_for_trajectory(
    scene: Scene,
    traj: Trajectory,
    bank: TemplateBank,
    rng: np.random.Generator,
    cam: CameraIntrinsics = DEFAULT_CAMERA,
) -> str:
    """Detect along the trajectory and produce the merged paragraph."""
    dets = [detect(scene, pose, cam) for pose in traj.poses]
    return caption_trajectory(scene, list(traj.poses), dets, bank, rng)
