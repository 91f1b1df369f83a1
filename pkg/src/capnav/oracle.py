"""Viewpoint oracles and ground-truth trajectory generation.

Good viewpoints are picked automatically: candidates are sampled from a
shell around the scene center, scored by how much of the scene they show,
and the top-k become the annotation targets. Trajectories are planned with
Dijkstra on the navigable lattice (6-connected, 0.4 m edges), greedily
merged into macro steps of at most 1.6 m per world axis, and converted to
camera-frame actions that replay exactly through the episode stepper.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from capnav.core import (
    CameraIntrinsics,
    DEFAULT_CAMERA,
    GridIndex,
    Pose,
    Vec3,
    grid_to_world,
    look_at,
    wrap_angle,
)
from capnav.gridworld import (
    ALL_STOP,
    Action,
    NavSpace,
    apply_actions,
    build_navspace,
    inflated_boxes,
    move_basis,
    start_pose,
    _truncated_target,
)
from capnav.renderer import Frame, render, score_components
from capnav.scenegen import Scene

# Candidate shell: horizontal distance from the scene center and absolute
# height, both in meters. Values are configurable per call.
SHELL_RADIUS_M = (1.2, 3.2)
SHELL_HEIGHT_M = (0.8, 3.2)
MIN_START_PATH_M = 2.0
MAX_SEGMENT_CELLS = 4  # 4 * 0.4 m = the 1.6 m per-axis move cap
MAX_PLAN_POSES = 13

_NEIGHBOR_OFFSETS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))


class NoPathError(Exception):
    """Start and target are valid but not connected."""


@dataclass(frozen=True)
class Candidate:
    grid: GridIndex
    pose: Pose
    score: float
    frame: Frame | None = None  # the render the score came from


@dataclass(frozen=True)
class GoodViewpoint:
    grid: GridIndex
    pose: Pose
    score: float
    frame: Frame | None


@dataclass
class Trajectory:
    """Pose sequence plus the actions that reproduce it.

    `actions` holds one Action per move plus a terminal all-stop, so
    len(actions) == len(poses). `path_length_m` sums per-axis travel (the
    planned cell path length for oracle trajectories).
    """

    scene_id: str
    start: GridIndex
    target: GridIndex | None
    poses: tuple[Pose, ...]
    actions: tuple[Action, ...]
    path_length_m: float


def score_viewpoint(scene: Scene, pose: Pose, cam: CameraIntrinsics = DEFAULT_CAMERA) -> float:
    """(visible instances / all instances) * sqrt(1 - background fraction)."""
    visible, bg = score_components(render(scene, pose, cam))
    return (visible / len(scene.instances)) * math.sqrt(max(0.0, 1.0 - bg))


def sample_candidates(
    scene: Scene,
    rng: np.random.Generator,
    n: int = 20,
    cam: CameraIntrinsics = DEFAULT_CAMERA,
    nav: NavSpace | None = None,
    shell_radius: tuple[float, float] = SHELL_RADIUS_M,
    shell_height: tuple[float, float] = SHELL_HEIGHT_M,
) -> list[Candidate]:
    """Distinct navigable lattice poses in the shell, aimed at the center, scored."""
    nav = nav if nav is not None else build_navspace(scene)
    pts = nav.navigable_points()
    xyz = np.column_stack([-4.0 + 0.4 * pts[:, 0], -4.0 + 0.4 * pts[:, 1], 0.4 * pts[:, 2]])
    horiz = np.hypot(xyz[:, 0] - scene.center.x, xyz[:, 1] - scene.center.y)
    keep = (
        (horiz >= shell_radius[0])
        & (horiz <= shell_radius[1])
        & (xyz[:, 2] >= shell_height[0])
        & (xyz[:, 2] <= shell_height[1])
    )
    shell = pts[keep]
    m = min(n, len(shell))
    chosen = rng.choice(len(shell), size=m, replace=False) if m else []
    out = []
    for row in chosen:
        g = GridIndex(*(int(v) for v in shell[row]))
        pose = start_pose(scene, g)
        frame = render(scene, pose, cam)
        visible, bg = score_components(frame)
        score = (visible / len(scene.instances)) * math.sqrt(max(0.0, 1.0 - bg))
        out.append(Candidate(g, pose, score, frame))
    return out


def select_good_viewpoints(candidates: Sequence[Candidate], k: int = 3) -> list[GoodViewpoint]:
    """Top-k candidates by score, ties to lower lattice index."""
    if not candidates:
        raise ValueError("no candidates to select from")
    ranked = sorted(candidates, key=lambda c: (-c.score, c.grid.as_tuple()))
    return [GoodViewpoint(c.grid, c.pose, c.score, c.frame) for c in ranked[: min(k, len(ranked))]]


def _flat(i: int, j: int, k: int) -> int:
    return (i * 21 + j) * 11 + k


def _dijkstra_cells(nav: NavSpace, start: GridIndex, target: GridIndex) -> list[tuple[int, int, int]]:
    """Minimum-cost cell path on the 6-connected navigable lattice.

    Unit edges; deterministic: fixed neighbor order, first-found
    predecessors, insertion-ordered heap ties.
    """
    occ = nav.occupancy
    dist = np.full(21 * 21 * 11, -1, dtype=np.int32)
    pred = np.full(21 * 21 * 11, -1, dtype=np.int32)
    s = start.as_tuple()
    t = target.as_tuple()
    heap = [(0, 0, s)]
    dist[_flat(*s)] = 0
    counter = 1
    while heap:
        d, _, cell = heapq.heappop(heap)
        f = _flat(*cell)
        if d > dist[f]:
            continue
        if cell == t:
            break
        ci, cj, ck = cell
        for di, dj, dk in _NEIGHBOR_OFFSETS:
            ni, nj, nk = ci + di, cj + dj, ck + dk
            if not (0 <= ni <= 20 and 0 <= nj <= 20 and 0 <= nk <= 10):
                continue
            if occ[ni, nj, nk]:
                continue
            nf = _flat(ni, nj, nk)
            if dist[nf] < 0 or d + 1 < dist[nf]:
                dist[nf] = d + 1
                pred[nf] = f
                heapq.heappush(heap, (d + 1, counter, (ni, nj, nk)))
                counter += 1
    tf = _flat(*t)
    if dist[tf] < 0:
        raise NoPathError(f"no path from {s} to {t}")
    path = []
    cur = tf
    while cur >= 0:
        cur = int(cur)
        path.append((cur // (11 * 21), (cur // 11) % 21, cur % 11))
        cur = pred[cur]
    path.reverse()
    return path


def _cell_world(cell: tuple[int, int, int]) -> Vec3:
    return grid_to_world(GridIndex(*cell))


def _merge_waypoints(scene: Scene, cells: list[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
    """Fuse the unit-move path into macro steps.

    Pass 1 chunks collinear runs into segments of <= 4 cells. Pass 2 greedily
    absorbs following segments on other axes into one straight step when the
    combined segment is collision-free under the episode sampler and the
    agent-frame decomposition stays within the 1.6 m move cap.
    """
    if len(cells) < 2:
        return list(cells)
    # pass 1: collinear runs chopped at 4 cells
    segments: list[tuple[int, int]] = []  # (axis, signed cell count)
    prev = cells[0]
    for cur in cells[1:]:
        delta = tuple(c - p for c, p in zip(cur, prev))
        axis = next(ax for ax in range(3) if delta[ax] != 0)
        sign = delta[axis]
        if segments and segments[-1][0] == axis and (segments[-1][1] > 0) == (sign > 0) \
                and abs(segments[-1][1]) < MAX_SEGMENT_CELLS:
            segments[-1] = (axis, segments[-1][1] + sign)
        else:
            segments.append((axis, sign))
        prev = cur

    boxes = inflated_boxes(scene)
    waypoints = [cells[0]]
    cursor = list(cells[0])
    # heading at the current step start, built with the same look-at fallback
    # chain plan_trajectory uses for the poses
    cursor_heading = start_pose(scene, GridIndex(*cells[0])).heading
    pending_axes: set[int] = set()
    pending = [0, 0, 0]

    def flush():
        nonlocal cursor, cursor_heading
        if pending_axes:
            cursor = [c + d for c, d in zip(cursor, pending)]
            waypoints.append(tuple(cursor))
            cursor_heading = _aim(tuple(cursor), scene, fallback=cursor_heading)[0]
            pending[:] = [0, 0, 0]
            pending_axes.clear()

    for axis, signed_cells in segments:
        if axis in pending_axes:
            flush()
        if pending_axes:
            trial = pending.copy()
            trial[axis] += signed_cells
            a = _cell_world(tuple(cursor))
            b = _cell_world(tuple(c + d for c, d in zip(cursor, trial)))
            if _segment_clear(boxes, a, b) and _fits_move_cap(a, b, cursor_heading):
                pending[:] = trial
                pending_axes.add(axis)
                continue
            flush()
        pending[axis] += signed_cells
        pending_axes.add(axis)
    flush()
    return waypoints


def _aim(cell: tuple[int, int, int], scene: Scene, fallback: float = 0.0) -> tuple[float, float]:
    pos = _cell_world(cell)
    try:
        return look_at(pos, scene.center, fallback)
    except ValueError:
        return wrap_angle(fallback), 0.0


def _segment_clear(boxes: np.ndarray, a: Vec3, b: Vec3) -> bool:
    return _truncated_target(boxes, a, b) == b


def _fits_move_cap(a: Vec3, b: Vec3, heading: float) -> bool:
    d = b - a
    f, r, _ = move_basis(heading)
    return abs(d.dot(f)) <= 1.6 and abs(d.dot(r)) <= 1.6 and abs(d.z) <= 1.6


def _clamp_cap(v: float) -> float:
    # dot-product noise can land a hair above the 1.6 m cap; real violations raise
    if 1.6 < abs(v) <= 1.6 + 1e-9:
        return math.copysign(1.6, v)
    return v


def _decompose_action(prev: Pose, nxt: Pose) -> Action:
    """World displacement + aim change expressed in prev's action frame."""
    d = nxt.position - prev.position
    f, r, _ = move_basis(prev.heading)
    fb = _clamp_cap(d.dot(f))
    lr = _clamp_cap(-d.dot(r))  # positive = left
    ud = _clamp_cap(d.z)
    dh = wrap_angle(nxt.heading - prev.heading)
    de = nxt.elevation - prev.elevation

    def move(value: float, pos_dir: str, neg_dir: str) -> tuple[str, float]:
        if value > 0.0:
            return (pos_dir, value)
        if value < 0.0:
            return (neg_dir, -value)
        return ("stop", 0.0)

    return Action(
        move_fb=move(fb, "forward", "backward"),
        move_lr=move(lr, "left", "right"),
        move_ud=move(ud, "up", "down"),
        rot_heading=move(dh, "left", "right"),
        rot_elevation=move(de, "up", "down"),
    )


def plan_trajectory(
    scene: Scene,
    start: GridIndex,
    target: GridIndex,
    nav: NavSpace | None = None,
) -> Trajectory:
    """Shortest-path oracle trajectory from start to target, aimed at the center."""
    nav = nav if nav is not None else build_navspace(scene)
    if not nav.is_navigable(start):
        raise ValueError(f"start {start.as_tuple()} is not navigable")
    if not nav.is_navigable(target):
        raise ValueError(f"target {target.as_tuple()} is not navigable")
    cells = _dijkstra_cells(nav, start, target)
    waypoints = _merge_waypoints(scene, cells)

    poses = [start_pose(scene, GridIndex(*waypoints[0]))]
    for wp in waypoints[1:]:
        heading, elevation = _aim(wp, scene, fallback=poses[-1].heading)
        poses.append(Pose(_cell_world(wp), heading, elevation))

    actions = [_decompose_action(a, b) for a, b in zip(poses, poses[1:])]
    actions.append(ALL_STOP)
    return Trajectory(
        scene_id=scene.scene_id,
        start=GridIndex(*waypoints[0]),
        target=GridIndex(*waypoints[-1]),
        poses=tuple(poses),
        actions=tuple(actions),
        path_length_m=0.4 * (len(cells) - 1),
    )


def bfs_distances(nav: NavSpace, src: GridIndex) -> np.ndarray:
    """(21,21,11) int array of cell distances from src; -1 unreachable."""
    dist = np.full((21, 21, 11), -1, dtype=np.int32)
    if not nav.is_navigable(src):
        return dist
    occ = nav.occupancy
    dist[src.i, src.j, src.k] = 0
    q = deque([src.as_tuple()])
    while q:
        ci, cj, ck = q.popleft()
        d = dist[ci, cj, ck]
        for di, dj, dk in _NEIGHBOR_OFFSETS:
            ni, nj, nk = ci + di, cj + dj, ck + dk
            if 0 <= ni <= 20 and 0 <= nj <= 20 and 0 <= nk <= 10 \
                    and not occ[ni, nj, nk] and dist[ni, nj, nk] < 0:
                dist[ni, nj, nk] = d + 1
                q.append((ni, nj, nk))
    return dist


def gen_ground_truth(
    scene: Scene,
    good_vps: Sequence[GoodViewpoint],
    rng: np.random.Generator,
    starts_per_viewpoint: int = 3,
    min_path_m: float = MIN_START_PATH_M,
    nav: NavSpace | None = None,
) -> list[Trajectory]:
    """Per good viewpoint: trajectories from random starts at least 2 m away (path metric)."""
    if not good_vps:
        raise ValueError("no good viewpoints")
    nav = nav if nav is not None else build_navspace(scene)
    free = nav.navigable_points()
    min_cells = math.ceil(min_path_m / 0.4)
    out = []
    for vp in good_vps:
        dist = bfs_distances(nav, vp.grid)
        for _ in range(starts_per_viewpoint):
            traj = None
            for _attempt in range(20):
                row = free[int(rng.integers(0, len(free)))]
                d = int(dist[row[0], row[1], row[2]])
                if d < min_cells:
                    continue
                candidate = plan_trajectory(scene, GridIndex(*(int(v) for v in row)), vp.grid, nav)
                if len(candidate.poses) > MAX_PLAN_POSES:
                    continue
                traj = candidate
                break
            if traj is None:
                raise NoPathError(
                    f"no start at least {min_path_m} m from {vp.grid.as_tuple()} after 20 draws"
                )
            out.append(traj)
    return out


def axial_path_length(poses: Sequence[Pose]) -> float:
    """Per-axis travel summed over steps (agent frame), matching action magnitudes."""
    total = 0.0
    for prev, nxt in zip(poses, poses[1:]):
        d = nxt.position - prev.position
        f, r, _ = move_basis(prev.heading)
        total += abs(d.dot(f)) + abs(d.dot(r)) + abs(d.z)
    return total


def euclidean_path_length(poses: Sequence[Pose]) -> float:
    """Straight-line meters between consecutive poses (metric trajectory length)."""
    return sum((b.position - a.position).norm() for a, b in zip(poses, poses[1:]))


def replay_errors(scene: Scene, traj: Trajectory, max_steps: int = 12) -> tuple[float, float]:
    """(max position error m, max angle error rad) of replaying traj's actions.

    When the terminal all-stop executes (episodes shorter than the step cap)
    the history gains one final no-op entry, which must equal the last pose.
    """
    replayed = apply_actions(scene, traj.poses[0], traj.actions, max_steps)
    want = list(traj.poses)
    if len(replayed) == len(want) + 1:
        want.append(want[-1])
    if len(replayed) != len(want):
        return math.inf, math.inf
    pos_err = ang_err = 0.0
    for got, expect in zip(replayed, want):
        pos_err = max(pos_err, (got.position - expect.position).norm())
        ang_err = max(ang_err, abs(wrap_angle(got.heading - expect.heading)),
                      abs(got.elevation - expect.elevation))
    return pos_err, ang_err
