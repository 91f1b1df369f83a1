"""Geometry primitives shared by every other module.

World frame: meters, z up, scene center at x=y=0, ground plane at z=0.
The environment is an 8x8x4 m box discretized by a 0.4 m lattice whose
points carry integer indices (i, j, k) with i, j in [0, 20] and k in [0, 10].
Heading is measured CCW from +x in the xy-plane and lives in [-pi, pi);
elevation is in [-pi/2, pi/2], positive up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Environment extents and lattice geometry.
ENV_MIN = (-4.0, -4.0, 0.0)
ENV_MAX = (4.0, 4.0, 4.0)
CELL_M = 0.4
GRID_SHAPE = (21, 21, 11)
TOTAL_LATTICE_POINTS = 21 * 21 * 11  # 4851


@dataclass(frozen=True)
class Vec3:
    """Point or direction in world coordinates (meters)."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite Vec3 components: ({self.x}, {self.y}, {self.z})")

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class GridIndex:
    """Lattice point index; validated against the 21x21x11 grid at construction."""

    i: int
    j: int
    k: int

    def __post_init__(self):
        if not (0 <= self.i <= 20 and 0 <= self.j <= 20 and 0 <= self.k <= 10):
            raise ValueError(f"grid index out of range: ({self.i}, {self.j}, {self.k})")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.i, self.j, self.k)


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi); exact identity for in-range inputs."""
    if -math.pi <= a < math.pi:
        return a
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w < 0.0:
        w += 2.0 * math.pi
    w -= math.pi
    if w >= math.pi:  # rounding at the seam can land exactly on +pi
        w = -math.pi
    return w


@dataclass(frozen=True)
class Pose:
    """Camera state: position plus heading/elevation aim."""

    position: Vec3
    heading: float
    elevation: float

    def __post_init__(self):
        if not -math.pi <= self.heading < math.pi:
            raise ValueError(f"heading {self.heading} outside [-pi, pi)")
        if not -math.pi / 2 <= self.elevation <= math.pi / 2:
            raise ValueError(f"elevation {self.elevation} outside [-pi/2, pi/2]")

    def view_dir(self) -> Vec3:
        ce = math.cos(self.elevation)
        return Vec3(
            ce * math.cos(self.heading),
            ce * math.sin(self.heading),
            math.sin(self.elevation),
        )


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box, min <= max componentwise."""

    min: Vec3
    max: Vec3

    def __post_init__(self):
        if self.min.x > self.max.x or self.min.y > self.max.y or self.min.z > self.max.z:
            raise ValueError("Aabb min exceeds max")

    def center(self) -> Vec3:
        return Vec3(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
            0.5 * (self.min.z + self.max.z),
        )

    def size(self) -> Vec3:
        return self.max - self.min

    def inflated(self, r: float) -> "Aabb":
        d = Vec3(r, r, r)
        return Aabb(self.min - d, self.max + d)

    def contains(self, p: Vec3) -> bool:
        return (
            self.min.x <= p.x <= self.max.x
            and self.min.y <= p.y <= self.max.y
            and self.min.z <= p.z <= self.max.z
        )


@dataclass(frozen=True)
class CameraIntrinsics:
    """Image size and vertical field of view.

    Pixels subtend a uniform angular pitch of fov/height in both axes,
    measured from the middle of the pixel index range, so the middle pixel
    of an odd-sized image looks exactly along the pose view direction and a
    top-center pixel sits fov/2*(1 - 1/height) above it.
    """

    width: int = 128
    height: int = 128
    vertical_fov: float = math.radians(60.0)

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueError("camera smaller than 16x16")
        if not 0.0 < self.vertical_fov < math.pi:
            raise ValueError("vertical fov outside (0, pi)")


DEFAULT_CAMERA = CameraIntrinsics()


def grid_to_world(g: GridIndex) -> Vec3:
    """Affine lattice-to-world map: (i,j,k) -> (-4+0.4i, -4+0.4j, 0.4k)."""
    return Vec3(-4.0 + CELL_M * g.i, -4.0 + CELL_M * g.j, CELL_M * g.k)


def world_to_grid(p: Vec3) -> GridIndex:
    """Nearest lattice point to a world point inside the environment.

    Exact half-cell ties break toward the lower index. Raises ValueError for
    points outside [-4,4]^2 x [0,4].
    """
    if not (-4.0 <= p.x <= 4.0 and -4.0 <= p.y <= 4.0 and 0.0 <= p.z <= 4.0):
        raise ValueError(f"point outside environment: ({p.x}, {p.y}, {p.z})")

    def nearest(v: float) -> int:
        return math.ceil(v - 0.5)

    return GridIndex(
        nearest((p.x + 4.0) / CELL_M),
        nearest((p.y + 4.0) / CELL_M),
        nearest(p.z / CELL_M),
    )


def look_at(origin: Vec3, target: Vec3, fallback_heading: float = 0.0) -> tuple[float, float]:
    """Heading/elevation aiming a camera at `target` from `origin`.

    Looking straight up or down leaves heading undefined; the caller's
    fallback heading is used there.
    """
    d = target - origin
    n = d.norm()
    if n == 0.0:
        raise ValueError("look_at: origin equals target")
    if d.x == 0.0 and d.y == 0.0:
        heading = wrap_angle(fallback_heading)
    else:
        heading = wrap_angle(math.atan2(d.y, d.x))
    elevation = math.asin(max(-1.0, min(1.0, d.z / n)))
    return heading, elevation


def camera_basis(pose: Pose) -> tuple[Vec3, Vec3, Vec3]:
    """Orthonormal (forward, right, up) triplet for a camera at `pose`."""
    f = pose.view_dir()
    sh, ch = math.sin(pose.heading), math.cos(pose.heading)
    se, ce = math.sin(pose.elevation), math.cos(pose.elevation)
    right = Vec3(sh, -ch, 0.0)
    up = Vec3(-se * ch, -se * sh, ce)
    return f, right, up


def camera_ray(pose: Pose, cam: CameraIntrinsics, px: int, py: int) -> tuple[Vec3, Vec3]:
    """Unit ray through the center of pixel (px, py); py counts down from the top row."""
    if not (0 <= px < cam.width and 0 <= py < cam.height):
        raise ValueError(f"pixel ({px}, {py}) outside {cam.width}x{cam.height} image")
    pitch = cam.vertical_fov / cam.height
    alpha = (px - (cam.width - 1) / 2.0) * pitch  # positive to the right
    beta = ((cam.height - 1) / 2.0 - py) * pitch  # positive up
    f, r, u = camera_basis(pose)
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    d = f * (cb * ca) + r * (cb * sa) + u * sb
    return pose.position, d


def ray_aabb(origin: Vec3, direction: Vec3, box: Aabb) -> float | None:
    """Smallest nonnegative ray parameter where the ray enters `box`, or None.

    Slab method with closed boundaries; an origin inside (or on) the box
    yields t = 0. `direction` is assumed unit length.
    """
    tlo, thi = -math.inf, math.inf
    for o, d, lo, hi in (
        (origin.x, direction.x, box.min.x, box.max.x),
        (origin.y, direction.y, box.min.y, box.max.y),
        (origin.z, direction.z, box.min.z, box.max.z),
    ):
        if d == 0.0:
            if o < lo or o > hi:
                return None
            continue
        t1 = (lo - o) / d
        t2 = (hi - o) / d
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tlo:
            tlo = t1
        if t2 < thi:
            thi = t2
    if thi < tlo or thi < 0.0:
        return None
    return tlo if tlo > 0.0 else 0.0
