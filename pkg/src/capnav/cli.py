"""Batch entry points: scene generation, annotation, trajectories, baselines,
evaluation, rendering, statistics, and the environment server.

Every subcommand is reproducible from (--seed, flags); each output file
embeds the invocation config. ET_SIM_THREADS caps worker threads.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from capnav import __version__
from capnav.core import CameraIntrinsics, GridIndex, Pose, grid_to_world, look_at
from capnav.dataset import (
    DatasetConfig,
    DatasetDir,
    annotation_to_record,
    load_json,
    make_dataset,
    save_json,
    scene_to_record,
    trajectory_to_record,
)
from capnav.scenegen import load_catalog, generate_scene

_ACTION_COMPONENTS = ("move_fb", "move_lr", "move_ud", "rot_heading", "rot_elevation")


def worker_count(tasks: int) -> int:
    cap = os.environ.get("ET_SIM_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, tasks))


def _config_dict(args: argparse.Namespace) -> dict:
    skip = {"func"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _out_doc(kind: str, args: argparse.Namespace, payload: dict) -> dict:
    return {"kind": kind, "tool_version": __version__, "config": _config_dict(args), **payload}


# ------------------------------------------------------------ subcommands

def cmd_gen_scenes(args) -> int:
    catalog = load_catalog(args.catalog)
    seeds = [args.seed + i for i in range(args.count)]

    def build(seed: int) -> str:
        scene = generate_scene(seed, catalog)
        save_json(scene_to_record(scene, catalog.version),
                  os.path.join(args.out, "scenes", f"{scene.scene_id}.json"))
        return scene.scene_id

    with ThreadPoolExecutor(max_workers=worker_count(len(seeds))) as pool:
        scene_ids = list(pool.map(build, seeds))
    save_json(_out_doc("manifest", args, {"seeds": seeds, "scene_ids": scene_ids}),
              os.path.join(args.out, "manifest.json"))
    print(f"wrote {len(scene_ids)} scenes to {args.out}")
    return 0


def cmd_annotate(args) -> int:
    from capnav.baselines import caption_view, load_templates
    from capnav.gridworld import build_navspace
    from capnav.oracle import sample_candidates, select_good_viewpoints
    from capnav.renderer import detect

    ds = DatasetDir(args.dataset)
    cam = CameraIntrinsics(args.width, args.height, math.radians(args.fov_deg))
    bank = load_templates()
    for scene_id in ds.scene_ids():
        scene = ds.scene(scene_id)
        rng = np.random.default_rng(args.seed + scene.seed)
        nav = build_navspace(scene)
        candidates = sample_candidates(scene, rng, args.candidates, cam, nav)
        good = select_good_viewpoints(candidates, args.select)
        captions = []
        for i, vp in enumerate(good):
            sentences = caption_view(scene, vp.pose, detect(scene, vp.pose, cam), bank,
                                     np.random.default_rng(args.seed + scene.seed + 100 + i))
            captions.append(" ".join(sentences))
        save_json(annotation_to_record(scene_id, good, captions),
                  os.path.join(args.dataset, "annotations", f"{scene_id}.json"))
        print(f"{scene_id}: {len(good)} good viewpoints")
    return 0


def _good_viewpoints_from_annotation(ann: dict):
    from capnav.oracle import GoodViewpoint

    return [GoodViewpoint(v["grid"], v["pose"], v["score"], None)
            for v in ann["good_viewpoints"]]


def cmd_gen_trajectories(args) -> int:
    from capnav.gridworld import build_navspace
    from capnav.oracle import gen_ground_truth

    ds = DatasetDir(args.dataset)
    total = 0
    for scene_id in ds.scene_ids():
        scene = ds.scene(scene_id)
        ann = ds.annotation(scene_id)
        good = _good_viewpoints_from_annotation(ann)
        rng = np.random.default_rng(args.seed + scene.seed)
        trajs = gen_ground_truth(scene, good, rng, args.starts_per_viewpoint,
                                 nav=build_navspace(scene))
        for n, traj in enumerate(trajs):
            vp, s = divmod(n, args.starts_per_viewpoint)
            tid = f"{scene_id}_vp{vp}_t{s}"
            save_json(trajectory_to_record(traj, tid),
                      os.path.join(args.dataset, "trajectories", f"{tid}.json"))
        total += len(trajs)
        print(f"{scene_id}: {len(trajs)} trajectories")
    print(f"wrote {total} trajectories")
    return 0


def cmd_make_dataset(args) -> int:
    catalog = load_catalog(args.catalog)
    config = DatasetConfig(
        train=args.train, val=args.val, test=args.test, base_seed=args.seed,
        candidates=args.candidates, good_viewpoints=args.select,
        starts_per_viewpoint=args.starts_per_viewpoint,
        cam_width=args.width, cam_height=args.height, cam_fov_deg=args.fov_deg,
    )
    manifest = make_dataset(args.out, catalog, config, progress=print)
    print(f"dataset with {len(manifest['scene_ids'])} scenes at {args.out}")
    return 0


def cmd_run_baseline(args) -> int:
    import zlib

    from capnav import baselines

    ds = DatasetDir(args.dataset)
    cam = CameraIntrinsics(args.width, args.height, math.radians(args.fov_deg))
    bank = baselines.load_templates()
    items = []
    for scene_id in ds.scene_ids():
        scene = ds.scene(scene_id)
        for tid in ds.trajectory_ids(scene_id):
            gt = ds.trajectory(tid)
            rng = np.random.default_rng(args.seed + zlib.crc32(tid.encode()))
            if args.nav == "rule":
                traj = baselines.rule_navigate(scene, gt.start, args.max_steps, cam)
            else:
                traj = baselines.random_navigate(scene, gt.start, rng, args.max_steps)
            item = {
                "scene_id": scene_id,
                "gt_id": tid,
                "start": list(gt.start.as_tuple()),
                "trajectory": trajectory_to_record(traj, f"{tid}_pred"),
            }
            if args.cap == "template":
                item["caption"] = baselines.caption_for_trajectory(scene, traj, bank, rng, cam)
            items.append(item)
        print(f"{scene_id}: {sum(1 for i in items if i['scene_id'] == scene_id)} episodes")
    save_json(_out_doc("predictions", args, {"items": items}), args.out)
    print(f"wrote {len(items)} predictions to {args.out}")
    return 0


def _camera_from_args(args) -> CameraIntrinsics:
    return CameraIntrinsics(args.width, args.height, math.radians(args.fov_deg))


def cmd_eval_nav(args) -> int:
    from capnav.dataset import trajectory_from_record
    from capnav.metrics_nav import (
        SemanticProfileEmbedder,
        load_external_embeddings,
        trajectory_scores,
    )
    from capnav.oracle import GoodViewpoint
    from capnav.renderer import render

    ds = DatasetDir(args.dataset)
    cam = _camera_from_args(args)
    pred_doc = load_json(args.pred)
    catalog = load_catalog(args.catalog)
    if args.embeddings:
        embedder = load_external_embeddings(args.embeddings)
    else:
        embedder = SemanticProfileEmbedder(catalog.category_names())

    per_item = []
    for item in pred_doc["items"]:
        scene = ds.scene(item["scene_id"])
        ann = ds.annotation(item["scene_id"])
        good = [
            GoodViewpoint(v["grid"], v["pose"], v["score"],
                          render(scene, v["pose"], cam, frame_id=v["frame_ref"]))
            for v in ann["good_viewpoints"]
        ]
        gt = ds.trajectory(item["gt_id"])
        _, traj = trajectory_from_record(item["trajectory"])
        # frame ids: "<scene>/good/<n>" for annotations, "<gt_id>_pred/<n>" for
        # prediction steps (the keys external embedding files must carry)
        frames = [render(scene, pose, cam, frame_id=f"{item['gt_id']}_pred/{n}")
                  for n, pose in enumerate(traj.poses)]
        scores = trajectory_scores(frames, list(traj.poses), good, gt.path_length_m, embedder)
        per_item.append({"scene_id": item["scene_id"], "gt_id": item["gt_id"],
                         **scores.as_dict()})
    means = {}
    if per_item:
        for key in per_item[0]:
            if key not in ("scene_id", "gt_id"):
                means[key] = float(np.mean([r[key] for r in per_item]))
    save_json(_out_doc("nav_scores", args, {"items": per_item, "mean": means}), args.out)
    print(json.dumps(means, sort_keys=True))
    return 0


def cmd_eval_cap(args) -> int:
    from capnav.metrics_cap import CorpusIdf, bleu, cider_d, penalized, rouge_l

    ds = DatasetDir(args.dataset)
    pred_doc = load_json(args.pred)
    items = [item for item in pred_doc["items"] if "caption" in item]
    if not items:
        print("no captions in predictions", file=sys.stderr)
        return 1
    candidates = [item["caption"] for item in items]
    references = [ds.annotation(item["scene_id"])["captions"] for item in items]
    cider_mean, cider_scores = cider_d(candidates, references)
    per_item = []
    for item, cand, refs, cd in zip(items, candidates, references, cider_scores):
        scores = {"BLEU1": 0.0, "BLEU2": 0.0, "BLEU3": 0.0, "BLEU4": 0.0}
        b = bleu(cand, refs)
        for n, value in enumerate(b, 1):
            scores[f"BLEU{n}"] = value
        scores["ROUGE_L"] = rouge_l(cand, refs)
        scores["CIDEr"] = cd
        gt = ds.trajectory(item["gt_id"])
        l_pred = item["trajectory"]["path_length_m"]
        pen = penalized(scores, gt.path_length_m, l_pred)
        per_item.append({"scene_id": item["scene_id"], "gt_id": item["gt_id"],
                         **scores, **{f"{k}_l": v for k, v in pen.items()}})
    means = {k: float(np.mean([r[k] for r in per_item]))
             for k in per_item[0] if k not in ("scene_id", "gt_id")}
    means["CIDEr_corpus"] = cider_mean
    save_json(_out_doc("cap_scores", args, {"items": per_item, "mean": means}), args.out)
    print(json.dumps({k: round(v, 4) for k, v in means.items()}, sort_keys=True))
    return 0


def cmd_render(args) -> int:
    from capnav.renderer import category_grid_bytes, frame_to_png, render

    ds = DatasetDir(args.dataset)
    scene = ds.scene(args.scene)
    grid = GridIndex(*args.grid)
    pos = grid_to_world(grid)
    if args.heading is None or args.elevation is None:
        heading, elevation = look_at(pos, scene.center, 0.0)
    else:
        heading, elevation = args.heading, args.elevation
    frame = render(scene, Pose(pos, heading, elevation), _camera_from_args(args))
    with open(args.out, "wb") as f:
        f.write(frame_to_png(frame))
    if args.category_grid:
        with open(args.category_grid, "wb") as f:
            f.write(category_grid_bytes(frame))
    print(f"rendered {args.scene} at {grid.as_tuple()} -> {args.out}")
    return 0


def _svg_histogram(hist: dict[str, dict[str, int]]) -> str:
    bar_w, group_gap, height = 40, 30, 160
    groups = list(hist.items())
    width = sum(len(d) * bar_w + group_gap for _, d in groups) + group_gap
    peak = max((v for _, d in groups for v in d.values()), default=1) or 1
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height + 40}">']
    x = group_gap
    for name, dirs in groups:
        for direction, count in dirs.items():
            h = int(height * count / peak)
            parts.append(f'<rect x="{x}" y="{height - h}" width="{bar_w - 6}" height="{h}" fill="#4878a8"/>')
            parts.append(f'<text x="{x}" y="{height + 14}" font-size="9">{direction}</text>')
            x += bar_w
        parts.append(f'<text x="{x - len(dirs) * bar_w}" y="{height + 30}" font-size="11">{name}</text>')
        x += group_gap
    parts.append("</svg>")
    return "\n".join(parts)


def cmd_stats(args) -> int:
    ds = DatasetDir(args.dataset)
    hist = {name: {} for name in _ACTION_COMPONENTS}
    n_traj = 0
    for tid in ds.trajectory_ids():
        doc = load_json(os.path.join(args.dataset, "trajectories", f"{tid}.json"))
        n_traj += 1
        for action in doc["actions"]:
            for name in _ACTION_COMPONENTS:
                direction = action[name][0]
                hist[name][direction] = hist[name].get(direction, 0) + 1
    save_json(_out_doc("action_stats", args, {"trajectories": n_traj, "histogram": hist}),
              args.out)
    if args.svg:
        with open(args.svg, "w", encoding="utf-8") as f:
            f.write(_svg_histogram(hist))
    print(json.dumps(hist, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    from capnav.envserver import EnvService, serve

    host, _, port = args.addr.rpartition(":")
    service = EnvService.from_dataset(
        args.dataset,
        cam=_camera_from_args(args),
        max_steps=args.max_steps,
        privileged=args.privileged,
        seed=args.seed,
    )
    serve((host or "127.0.0.1", int(port)), service)
    return 0


# ----------------------------------------------------------------- parser

def _add_camera_flags(p: argparse.ArgumentParser):
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--fov-deg", type=float, default=60.0, dest="fov_deg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capnav", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenes", help="generate procedural scenes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--catalog", default=None)
    p.set_defaults(func=cmd_gen_scenes)

    p = sub.add_parser("annotate", help="auto-select good viewpoints + reference captions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--candidates", type=int, default=20)
    p.add_argument("--select", type=int, default=3)
    _add_camera_flags(p)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("gen-trajectories", help="plan ground-truth trajectories")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--starts-per-viewpoint", type=int, default=3, dest="starts_per_viewpoint")
    p.set_defaults(func=cmd_gen_trajectories)

    p = sub.add_parser("make-dataset", help="full pipeline: scenes+annotations+trajectories+splits")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", type=int, default=10)
    p.add_argument("--val", type=int, default=4)
    p.add_argument("--test", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--catalog", default=None)
    p.add_argument("--candidates", type=int, default=20)
    p.add_argument("--select", type=int, default=3)
    p.add_argument("--starts-per-viewpoint", type=int, default=3, dest="starts_per_viewpoint")
    _add_camera_flags(p)
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("run-baseline", help="run navigator/captioner baselines from gt starts")
    p.add_argument("--dataset", required=True)
    p.add_argument("--nav", choices=("rule", "random"), default="rule")
    p.add_argument("--cap", choices=("template", "none"), default="template")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=12, dest="max_steps")
    p.add_argument("--out", required=True)
    _add_camera_flags(p)
    p.set_defaults(func=cmd_run_baseline)

    p = sub.add_parser("eval-nav", help="navigation metrics for predicted trajectories")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", default=None,
                   help="external frame-id -> vector JSON; keys '<scene>/good/<n>' for "
                        "annotation frames and '<gt_id>_pred/<n>' for prediction steps")
    p.add_argument("--catalog", default=None)
    _add_camera_flags(p)
    p.set_defaults(func=cmd_eval_nav)

    p = sub.add_parser("eval-cap", help="caption metrics for predicted captions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_cap)

    p = sub.add_parser("render", help="render one viewpoint to PNG")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--grid", type=int, nargs=3, required=True, metavar=("I", "J", "K"))
    p.add_argument("--heading", type=float, default=None)
    p.add_argument("--elevation", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--category-grid", default=None, dest="category_grid")
    _add_camera_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("stats", help="action-direction histograms over trajectories")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("serve", help="run the TCP environment server")
    p.add_argument("--addr", default="127.0.0.1:7780")
    p.add_argument("--dataset", required=True)
    p.add_argument("--privileged", action="store_true")
    p.add_argument("--max-steps", type=int, default=12, dest="max_steps")
    p.add_argument("--seed", type=int, default=0)
    _add_camera_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # runtime failure -> exit 1, message on stderr
        print(f"capnav: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
