"""Persistence, schema validation and split assignment.

Directory layout: scenes/, annotations/, trajectories/, splits.json,
manifest.json. All files are UTF-8 JSON with sorted keys, so identical
records are byte-identical on disk. Loading is strict: unknown or
ill-typed fields fail with the JSON pointer of the offending field.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from capnav.core import Aabb, GridIndex, Pose, Vec3
from capnav.gridworld import Action
from capnav.oracle import GoodViewpoint, Trajectory, replay_errors
from capnav.scenegen import Catalog, Instance, Scene

_ACTION_COMPONENTS = ("move_fb", "move_lr", "move_ud", "rot_heading", "rot_elevation")


class SchemaError(ValueError):
    """Record violates the on-disk schema; message carries the JSON pointer."""


def _fail(path: str, message: str):
    raise SchemaError(f"{path}: {message}")


def _expect_keys(obj: dict, path: str, required: dict[str, type], optional: dict[str, type] = {}):
    if not isinstance(obj, dict):
        _fail(path, f"expected object, got {type(obj).__name__}")
    for key in obj:
        if key not in required and key not in optional:
            _fail(f"{path}/{key}", "unknown field")
    for key, typ in required.items():
        if key not in obj:
            _fail(f"{path}/{key}", "missing field")
        if typ is not Any and not isinstance(obj[key], typ):
            _fail(f"{path}/{key}", f"expected {typ.__name__}")
    for key, typ in optional.items():
        if key in obj and obj[key] is not None and typ is not Any and not isinstance(obj[key], typ):
            _fail(f"{path}/{key}", f"expected {typ.__name__}")


def _floats(values, path: str, n: int) -> list[float]:
    if not isinstance(values, list) or len(values) != n:
        _fail(path, f"expected list of {n} numbers")
    out = []
    for i, v in enumerate(values):
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            _fail(f"{path}/{i}", "expected finite number")
        out.append(float(v))
    return out


def _ints(values, path: str, n: int) -> list[int]:
    if not isinstance(values, list) or len(values) != n:
        _fail(path, f"expected list of {n} integers")
    for i, v in enumerate(values):
        if not isinstance(v, int) or isinstance(v, bool):
            _fail(f"{path}/{i}", "expected integer")
    return list(values)


def save_json(doc: dict, path: str):
    """Byte-stable write: sorted keys, 1-space indent, trailing newline."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=1)
        f.write("\n")


def load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


# ---------------------------------------------------------------- scenes

def scene_to_record(scene: Scene, catalog_version: str) -> dict:
    return {
        "kind": "scene",
        "scene_id": scene.scene_id,
        "seed": scene.seed,
        "catalog_version": catalog_version,
        "center": list(scene.center.as_tuple()),
        "instances": [
            {
                "asset_id": inst.asset_id,
                "category": inst.category,
                "box": {"min": list(inst.box.min.as_tuple()), "max": list(inst.box.max.as_tuple())},
                "yaw": inst.yaw,
                "color": list(inst.color),
            }
            for inst in scene.instances
        ],
    }


def scene_from_record(doc: dict) -> Scene:
    _expect_keys(doc, "", {"kind": str, "scene_id": str, "seed": int,
                           "catalog_version": str, "center": list, "instances": list})
    if doc["kind"] != "scene":
        _fail("/kind", f"expected 'scene', got {doc['kind']!r}")
    center = Vec3(*_floats(doc["center"], "/center", 3))
    instances = []
    for n, rec in enumerate(doc["instances"]):
        path = f"/instances/{n}"
        _expect_keys(rec, path, {"asset_id": str, "category": str, "box": dict,
                                 "yaw": (int, float), "color": list})
        _expect_keys(rec["box"], f"{path}/box", {"min": list, "max": list})
        bmin = Vec3(*_floats(rec["box"]["min"], f"{path}/box/min", 3))
        bmax = Vec3(*_floats(rec["box"]["max"], f"{path}/box/max", 3))
        color = tuple(_floats(rec["color"], f"{path}/color", 3))
        instances.append(Instance(rec["asset_id"], rec["category"], Aabb(bmin, bmax),
                                  float(rec["yaw"]), color))
    if not instances:
        _fail("/instances", "scene has no instances")
    return Scene(doc["scene_id"], doc["seed"], tuple(instances), center)


# ---------------------------------------------------------- trajectories

def _pose_to_list(p: Pose) -> list[float]:
    return [p.position.x, p.position.y, p.position.z, p.heading, p.elevation]


def _pose_from_list(values, path: str) -> Pose:
    x, y, z, heading, elevation = _floats(values, path, 5)
    return Pose(Vec3(x, y, z), heading, elevation)


def _action_to_obj(a: Action) -> dict:
    return {name: [getattr(a, name)[0], getattr(a, name)[1]] for name in _ACTION_COMPONENTS}


def _action_from_obj(doc, path: str) -> Action:
    _expect_keys(doc, path, {name: list for name in _ACTION_COMPONENTS})
    parts = {}
    for name in _ACTION_COMPONENTS:
        pair = doc[name]
        if len(pair) != 2 or not isinstance(pair[0], str) \
                or not isinstance(pair[1], (int, float)) or isinstance(pair[1], bool):
            _fail(f"{path}/{name}", "expected [direction, magnitude]")
        parts[name] = (pair[0], float(pair[1]))
    try:
        return Action(**parts)
    except ValueError as exc:
        _fail(path, str(exc))


def trajectory_to_record(traj: Trajectory, trajectory_id: str) -> dict:
    return {
        "kind": "trajectory",
        "trajectory_id": trajectory_id,
        "scene_id": traj.scene_id,
        "start": list(traj.start.as_tuple()) if traj.start else None,
        "target": list(traj.target.as_tuple()) if traj.target else None,
        "poses": [_pose_to_list(p) for p in traj.poses],
        "actions": [_action_to_obj(a) for a in traj.actions],
        "path_length_m": traj.path_length_m,
    }


def trajectory_from_record(doc: dict) -> tuple[str, Trajectory]:
    _expect_keys(doc, "", {"kind": str, "trajectory_id": str, "scene_id": str,
                           "poses": list, "actions": list, "path_length_m": (int, float)},
                 optional={"start": list, "target": list})
    if doc["kind"] != "trajectory":
        _fail("/kind", f"expected 'trajectory', got {doc['kind']!r}")
    poses = tuple(_pose_from_list(p, f"/poses/{n}") for n, p in enumerate(doc["poses"]))
    if not poses:
        _fail("/poses", "empty pose list")
    actions = tuple(_action_from_obj(a, f"/actions/{n}") for n, a in enumerate(doc["actions"]))
    if len(actions) != len(poses):
        _fail("/actions", f"expected {len(poses)} actions (moves plus terminal stop)")
    start = doc.get("start")
    target = doc.get("target")
    traj = Trajectory(
        scene_id=doc["scene_id"],
        start=GridIndex(*_ints(start, "/start", 3)) if start else None,
        target=GridIndex(*_ints(target, "/target", 3)) if target else None,
        poses=poses,
        actions=actions,
        path_length_m=float(doc["path_length_m"]),
    )
    return doc["trajectory_id"], traj


def validate_trajectory_record(doc: dict, scene: Scene, tol: float = 1e-9):
    """Replay check used by loaders: actions must reproduce the stored poses."""
    _, traj = trajectory_from_record(doc)
    pos_err, ang_err = replay_errors(scene, traj)
    if pos_err > tol or ang_err > tol:
        raise SchemaError(
            f"trajectory {doc['trajectory_id']} does not replay: "
            f"pos err {pos_err:.3g} m, ang err {ang_err:.3g} rad"
        )


# ----------------------------------------------------------- annotations

def annotation_to_record(scene_id: str, good_vps: Sequence[GoodViewpoint],
                         captions: Sequence[str]) -> dict:
    return {
        "kind": "annotation",
        "scene_id": scene_id,
        "good_viewpoints": [
            {
                "grid": list(vp.grid.as_tuple()),
                "pose": _pose_to_list(vp.pose),
                "score": vp.score,
                "frame_ref": f"{scene_id}/good/{n}",
            }
            for n, vp in enumerate(good_vps)
        ],
        "captions": list(captions),
    }


def annotation_from_record(doc: dict) -> dict:
    _expect_keys(doc, "", {"kind": str, "scene_id": str, "good_viewpoints": list,
                           "captions": list})
    if doc["kind"] != "annotation":
        _fail("/kind", f"expected 'annotation', got {doc['kind']!r}")
    views = []
    for n, rec in enumerate(doc["good_viewpoints"]):
        path = f"/good_viewpoints/{n}"
        _expect_keys(rec, path, {"grid": list, "pose": list, "score": (int, float),
                                 "frame_ref": str})
        views.append({
            "grid": GridIndex(*_ints(rec["grid"], f"{path}/grid", 3)),
            "pose": _pose_from_list(rec["pose"], f"{path}/pose"),
            "score": float(rec["score"]),
            "frame_ref": rec["frame_ref"],
        })
    if not views:
        _fail("/good_viewpoints", "annotation with no good viewpoints")
    captions = doc["captions"]
    if not captions or not all(isinstance(c, str) and c.strip() for c in captions):
        _fail("/captions", "expected at least one non-empty caption")
    return {"scene_id": doc["scene_id"], "good_viewpoints": views, "captions": list(captions)}


# ---------------------------------------------------------------- splits

SPLITS = ("train", "val_common", "val_novel_instance", "val_novel_category",
          "test_common", "test_novel_instance", "test_novel_category")


def assign_split(scene: Scene, train_asset_ids: set[str], train_categories: set[str]) -> str:
    """Generalization label for a held-out scene.

    Any unseen category wins (novel_category), else more than half unseen
    instances is novel_instance, else common.
    """
    if any(inst.category not in train_categories for inst in scene.instances):
        return "novel_category"
    unseen = sum(1 for inst in scene.instances if inst.asset_id not in train_asset_ids)
    if unseen / len(scene.instances) > 0.5:
        return "novel_instance"
    return "common"


# ---------------------------------------------------------------- dataset

@dataclass
class DatasetConfig:
    train: int = 10
    val: int = 4
    test: int = 4
    base_seed: int = 0
    candidates: int = 20
    good_viewpoints: int = 3
    starts_per_viewpoint: int = 3
    captions_per_scene: int = 3
    cam_width: int = 128
    cam_height: int = 128
    cam_fov_deg: float = 60.0

    def as_dict(self) -> dict:
        return dict(vars(self))


def _progress(callback: Callable[[str], None] | None, message: str):
    if callback:
        callback(message)


def make_dataset(
    out_dir: str,
    catalog: Catalog,
    config: DatasetConfig,
    progress: Callable[[str], None] | None = None,
) -> dict:
    """Generate scenes, annotations, trajectories, captions and splits on disk.

    Deterministic: everything derives from config.base_seed. Returns the
    manifest (also written to manifest.json).
    """
    from capnav.baselines import caption_view, load_templates
    from capnav.core import CameraIntrinsics
    from capnav.oracle import gen_ground_truth, sample_candidates, select_good_viewpoints
    from capnav.gridworld import build_navspace
    from capnav.renderer import detect

    cam = CameraIntrinsics(config.cam_width, config.cam_height,
                           math.radians(config.cam_fov_deg))
    bank = load_templates()
    n_total = config.train + config.val + config.test
    seeds = [config.base_seed + i for i in range(n_total)]
    roles = ["train"] * config.train + ["val"] * config.val + ["test"] * config.test

    splits: dict[str, str] = {}
    train_assets: set[str] = set()
    train_categories: set[str] = set()
    scene_ids = []
    trajectory_counts = {}

    from capnav.scenegen import generate_scene

    for seed, role in zip(seeds, roles):
        scene = generate_scene(seed, catalog)
        scene_ids.append(scene.scene_id)
        rng = np.random.default_rng(seed + 1)
        nav = build_navspace(scene)
        candidates = sample_candidates(scene, rng, config.candidates, cam, nav)
        good = select_good_viewpoints(candidates, config.good_viewpoints)
        trajs = gen_ground_truth(scene, good, rng, config.starts_per_viewpoint, nav=nav)
        # machine reference captions: one view description per good viewpoint
        captions = []
        for i in range(config.captions_per_scene):
            vp = good[min(i, len(good) - 1)]
            sentences = caption_view(scene, vp.pose, detect(scene, vp.pose, cam), bank,
                                     np.random.default_rng(seed + 100 + i))
            captions.append(" ".join(sentences))
        save_json(scene_to_record(scene, catalog.version),
                  os.path.join(out_dir, "scenes", f"{scene.scene_id}.json"))
        save_json(annotation_to_record(scene.scene_id, good, captions),
                  os.path.join(out_dir, "annotations", f"{scene.scene_id}.json"))
        for n, traj in enumerate(trajs):
            vp, s = divmod(n, config.starts_per_viewpoint)
            tid = f"{scene.scene_id}_vp{vp}_t{s}"
            save_json(trajectory_to_record(traj, tid),
                      os.path.join(out_dir, "trajectories", f"{tid}.json"))
        trajectory_counts[scene.scene_id] = len(trajs)

        if role == "train":
            splits[scene.scene_id] = "train"
            train_assets.update(inst.asset_id for inst in scene.instances)
            train_categories.update(inst.category for inst in scene.instances)
        else:
            splits[scene.scene_id] = f"{role}_{assign_split(scene, train_assets, train_categories)}"
        _progress(progress, f"{scene.scene_id}: {splits[scene.scene_id]}, "
                            f"{trajectory_counts[scene.scene_id]} trajectories")

    save_json({"kind": "splits", "assignment": splits}, os.path.join(out_dir, "splits.json"))
    manifest = {
        "kind": "manifest",
        "catalog_version": catalog.version,
        "config": config.as_dict(),
        "seeds": seeds,
        "scene_ids": scene_ids,
        "trajectory_counts": trajectory_counts,
    }
    save_json(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest


@dataclass
class DatasetDir:
    """Read access to an on-disk dataset."""

    root: str
    _scenes: dict[str, Scene] = field(default_factory=dict)

    def scene_ids(self) -> list[str]:
        files = sorted(os.listdir(os.path.join(self.root, "scenes")))
        return [f[: -len(".json")] for f in files if f.endswith(".json")]

    def scene(self, scene_id: str) -> Scene:
        if scene_id not in self._scenes:
            doc = load_json(os.path.join(self.root, "scenes", f"{scene_id}.json"))
            self._scenes[scene_id] = scene_from_record(doc)
        return self._scenes[scene_id]

    def annotation(self, scene_id: str) -> dict:
        return annotation_from_record(
            load_json(os.path.join(self.root, "annotations", f"{scene_id}.json")))

    def trajectory_ids(self, scene_id: str | None = None) -> list[str]:
        files = sorted(os.listdir(os.path.join(self.root, "trajectories")))
        ids = [f[: -len(".json")] for f in files if f.endswith(".json")]
        if scene_id is not None:
            ids = [t for t in ids if t.startswith(scene_id + "_")]
        return ids

    def trajectory(self, trajectory_id: str, validate_replay: bool = False) -> Trajectory:
        doc = load_json(os.path.join(self.root, "trajectories", f"{trajectory_id}.json"))
        tid, traj = trajectory_from_record(doc)
        if validate_replay:
            validate_trajectory_record(doc, self.scene(traj.scene_id))
        return traj

    def splits(self) -> dict[str, str]:
        doc = load_json(os.path.join(self.root, "splits.json"))
        _expect_keys(doc, "", {"kind": str, "assignment": dict})
        return dict(doc["assignment"])
