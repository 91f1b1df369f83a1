"""Navigation space, the five-component action model, and episode stepping.

Moves decompose in the agent's yaw frame (heading only, world-vertical up):
positive = forward / left / up. Rotations: positive = left (CCW) / up.
Straight move segments are sampled every 0.1 m against instance boxes
inflated by the agent radius; the position truncates at the last free
sample on contact. Boundary contact counts as a collision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from capnav.core import GridIndex, Pose, Vec3, grid_to_world, look_at, wrap_angle
from capnav.scenegen import Scene

AGENT_RADIUS_M = 0.2
MAX_MOVE_M = 1.6
SAMPLE_SPACING_M = 0.1
DEFAULT_MAX_STEPS = 12

# direction vocabulary per component; index 1 is the positive sense in ActionVec10
_DIRS = {
    "move_fb": ("stop", "forward", "backward"),
    "move_lr": ("stop", "left", "right"),
    "move_ud": ("stop", "up", "down"),
    "rot_heading": ("stop", "left", "right"),
    "rot_elevation": ("stop", "up", "down"),
}
_COMPONENTS = tuple(_DIRS)
_MOVE_COMPONENTS = ("move_fb", "move_lr", "move_ud")


class BadActionError(ValueError):
    pass


class EpisodeDoneError(RuntimeError):
    pass


@dataclass(frozen=True)
class Action:
    """One agent step: three moves (meters) and two rotations (radians >= 0)."""

    move_fb: tuple[str, float] = ("stop", 0.0)
    move_lr: tuple[str, float] = ("stop", 0.0)
    move_ud: tuple[str, float] = ("stop", 0.0)
    rot_heading: tuple[str, float] = ("stop", 0.0)
    rot_elevation: tuple[str, float] = ("stop", 0.0)

    def __post_init__(self):
        for name in _COMPONENTS:
            direction, mag = getattr(self, name)
            if direction not in _DIRS[name]:
                raise BadActionError(f"{name}: unknown direction {direction!r}")
            if not (math.isfinite(mag) and mag >= 0.0):
                raise BadActionError(f"{name}: bad magnitude {mag!r}")
            if (direction == "stop") != (mag == 0.0):
                raise BadActionError(f"{name}: direction {direction!r} with magnitude {mag}")
            if name in _MOVE_COMPONENTS and mag > MAX_MOVE_M:
                raise BadActionError(f"{name}: magnitude {mag} exceeds {MAX_MOVE_M} m")

    @property
    def is_all_stop(self) -> bool:
        return all(getattr(self, name)[0] == "stop" for name in _COMPONENTS)

    def signed(self, name: str) -> float:
        """Magnitude with the ActionVec10 sign convention applied."""
        direction, mag = getattr(self, name)
        if direction == "stop":
            return 0.0
        return mag if direction == _DIRS[name][1] else -mag


ALL_STOP = Action()


def action_to_vec10(a: Action) -> list[float]:
    """[5 signed directions, 5 magnitudes]; moves normalized by 1.6 m, angles by pi."""
    dirs, mags = [], []
    for name in _COMPONENTS:
        direction, mag = getattr(a, name)
        if direction == "stop":
            dirs.append(0.0)
        else:
            dirs.append(1.0 if direction == _DIRS[name][1] else -1.0)
        mags.append(mag / MAX_MOVE_M if name in _MOVE_COMPONENTS else mag / math.pi)
    return dirs + mags


def vec10_to_action(v) -> Action:
    """Inverse of action_to_vec10 with full wire validation."""
    vals = [float(x) for x in v]
    if len(vals) != 10:
        raise BadActionError(f"action vector has {len(vals)} entries, expected 10")
    parts = {}
    for slot, name in enumerate(_COMPONENTS):
        d, m = vals[slot], vals[slot + 5]
        if d not in (-1.0, 0.0, 1.0):
            raise BadActionError(f"{name}: direction value {d} not in {{-1, 0, 1}}")
        if not math.isfinite(m) or m < 0.0:
            raise BadActionError(f"{name}: bad magnitude {m}")
        if d == 0.0 and m != 0.0:
            raise BadActionError(f"{name}: stop direction with magnitude {m}")
        if d != 0.0 and m == 0.0:
            raise BadActionError(f"{name}: direction set with zero magnitude")
        if name in _MOVE_COMPONENTS:
            if m > 1.0:
                raise BadActionError(f"{name}: normalized move magnitude {m} > 1")
            mag = m * MAX_MOVE_M
        else:
            mag = m * math.pi
        direction = "stop" if d == 0.0 else (_DIRS[name][1] if d > 0.0 else _DIRS[name][2])
        parts[name] = (direction, mag)
    return Action(**parts)


def move_basis(heading: float) -> tuple[Vec3, Vec3, Vec3]:
    """(forward, right, up) move axes for a heading; moves ignore elevation."""
    ch, sh = math.cos(heading), math.sin(heading)
    return Vec3(ch, sh, 0.0), Vec3(sh, -ch, 0.0), Vec3(0.0, 0.0, 1.0)


def inflated_boxes(scene: Scene, radius: float = AGENT_RADIUS_M) -> np.ndarray:
    """(N, 6) array of instance boxes grown by the agent radius."""
    out = np.empty((len(scene.instances), 6), dtype=np.float64)
    for n, inst in enumerate(scene.instances):
        b = inst.box
        out[n] = (b.min.x - radius, b.min.y - radius, b.min.z - radius,
                  b.max.x + radius, b.max.y + radius, b.max.z + radius)
    return out


@dataclass
class NavSpace:
    """Boolean occupancy over the 21x21x11 lattice (True = blocked)."""

    occupancy: np.ndarray
    scene: Scene

    def is_navigable(self, g: GridIndex) -> bool:
        return not self.occupancy[g.i, g.j, g.k]

    def navigable_count(self) -> int:
        return int(self.occupancy.size - self.occupancy.sum())

    def navigable_points(self) -> np.ndarray:
        """(M, 3) int array of free lattice indices, lexicographic order."""
        return np.argwhere(~self.occupancy)


def build_navspace(scene: Scene) -> NavSpace:
    """Mark every lattice point inside an inflated instance box as occupied.

    Index bounds use a 1e-9 (index units) tolerance, so exact boundary
    contact counts as occupied regardless of float noise.
    """
    occ = np.zeros((21, 21, 11), dtype=bool)
    for row in inflated_boxes(scene):
        ilo = max(0, math.ceil((row[0] + 4.0) / 0.4 - 1e-9))
        jlo = max(0, math.ceil((row[1] + 4.0) / 0.4 - 1e-9))
        klo = max(0, math.ceil(row[2] / 0.4 - 1e-9))
        ihi = min(20, math.floor((row[3] + 4.0) / 0.4 + 1e-9))
        jhi = min(20, math.floor((row[4] + 4.0) / 0.4 + 1e-9))
        khi = min(10, math.floor(row[5] / 0.4 + 1e-9))
        if ilo <= ihi and jlo <= jhi and klo <= khi:
            occ[ilo : ihi + 1, jlo : jhi + 1, klo : khi + 1] = True
    return NavSpace(occ, scene)


@dataclass
class EpisodeState:
    """Single-owner mutable episode; scenes/navspaces stay shared read-only."""

    scene: Scene
    pose: Pose
    step_count: int = 0
    done: bool = False
    max_steps: int = DEFAULT_MAX_STEPS
    pose_history: list[Pose] = field(default_factory=list)
    action_history: list[Action] = field(default_factory=list)
    _boxes: np.ndarray | None = None

    def boxes(self) -> np.ndarray:
        if self._boxes is None:
            self._boxes = inflated_boxes(self.scene)
        return self._boxes


def start_pose(scene: Scene, g: GridIndex) -> Pose:
    """Pose at a lattice point aimed at the scene center."""
    pos = grid_to_world(g)
    try:
        heading, elevation = look_at(pos, scene.center, 0.0)
    except ValueError:
        heading, elevation = 0.0, 0.0
    return Pose(pos, heading, elevation)


def make_episode(scene: Scene, start: GridIndex | Pose, max_steps: int = DEFAULT_MAX_STEPS) -> EpisodeState:
    pose = start if isinstance(start, Pose) else start_pose(scene, start)
    return EpisodeState(scene=scene, pose=pose, max_steps=max_steps, pose_history=[pose])


def _points_blocked(boxes: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Closed-interval inside-any-box test for (S, 3) points."""
    if boxes.shape[0] == 0:
        return np.zeros(len(pts), dtype=bool)
    ge = pts[:, None, :] >= boxes[None, :, :3]
    le = pts[:, None, :] <= boxes[None, :, 3:]
    return (ge & le).all(axis=2).any(axis=1)


def _truncated_target(boxes: np.ndarray, start: Vec3, target: Vec3) -> Vec3:
    seg = np.array(target.as_tuple()) - np.array(start.as_tuple())
    length = float(np.linalg.norm(seg))
    if length == 0.0:
        return start
    n = int(length / SAMPLE_SPACING_M + 1e-9)
    fracs = np.minimum(np.arange(1, n + 1) * (SAMPLE_SPACING_M / length), 1.0)
    fracs = np.append(fracs, 1.0)
    pts = np.array(start.as_tuple()) + fracs[:, None] * seg
    blocked = _points_blocked(boxes, pts)
    if not blocked.any():
        return target
    first = int(np.argmax(blocked))
    if first == 0:
        return start
    free = pts[first - 1]
    return Vec3(float(free[0]), float(free[1]), float(free[2]))


def step(state: EpisodeState, action: Action) -> EpisodeState:
    """Advance one step, mutating `state`; raises EpisodeDoneError once done."""
    if state.done:
        raise EpisodeDoneError("episode is done")
    pose = state.pose
    ch, sh = math.cos(pose.heading), math.sin(pose.heading)
    s_fb = action.signed("move_fb")
    s_lr = action.signed("move_lr")  # positive = left = (-sin h, cos h, 0)
    s_ud = action.signed("move_ud")
    disp = Vec3(s_fb * ch - s_lr * sh, s_fb * sh + s_lr * ch, s_ud)
    p = pose.position
    target = Vec3(
        min(4.0, max(-4.0, p.x + disp.x)),
        min(4.0, max(-4.0, p.y + disp.y)),
        min(4.0, max(0.0, p.z + disp.z)),
    )
    new_pos = _truncated_target(state.boxes(), p, target)
    heading = wrap_angle(pose.heading + action.signed("rot_heading"))
    elevation = max(-math.pi / 2, min(math.pi / 2, pose.elevation + action.signed("rot_elevation")))
    state.pose = Pose(new_pos, heading, elevation)
    state.step_count += 1
    state.done = action.is_all_stop or state.step_count >= state.max_steps
    state.pose_history.append(state.pose)
    state.action_history.append(action)
    return state


def apply_actions(
    scene: Scene,
    start: GridIndex | Pose,
    actions,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> list[Pose]:
    """Run a scripted action list from a start; returns the pose history.

    Stops early once the episode is done (all-stop action or step cap), so a
    terminal all-stop after a full-length trajectory is accepted silently.
    """
    state = make_episode(scene, start, max_steps)
    for action in actions:
        if state.done:
            break
        step(state, action)
    return state.pose_history
