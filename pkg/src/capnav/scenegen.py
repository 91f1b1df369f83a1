"""Procedural scene construction.

A scene is one large base instance centered on the ground plus 2..6 smaller
placing instances dropped around/onto it. Assets are colored boxes drawn
from finite per-category pools so datasets can share instances across
splits. Physics is replaced by a deterministic straight-drop settle rule.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from capnav.core import Aabb, Vec3

HALF_PI = 1.5707963267948966

# Placement tuning: offsets are drawn from the base footprint inflated by
# 0.3 m, an instance is supported by a surface overlapping >= 25% of its
# footprint, and an offset is retried up to 50 times before the instance is
# dropped from the scene.
OFFSET_INFLATION_M = 0.3
SUPPORT_OVERLAP_FRAC = 0.25
MAX_OFFSET_RETRIES = 50
_PENETRATION_EPS = 1e-9


class SceneGenerationError(Exception):
    pass


@dataclass(frozen=True)
class ResizeRule:
    """Uniform rescale targets: longest horizontal extent, optional height cap."""

    longest_horizontal: float
    max_height: float | None = None


@dataclass(frozen=True)
class Category:
    name: str
    kind: str  # "base" | "placing"
    dims_range: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]
    resize_rule: ResizeRule
    sampling_cap: float
    weight: float = 1.0
    pool_size: int = 16

    def __post_init__(self):
        if self.kind not in ("base", "placing"):
            raise ValueError(f"bad category kind {self.kind!r}")
        if not 0.0 < self.sampling_cap <= 1.0:
            raise ValueError("sampling_cap outside (0, 1]")


@dataclass(frozen=True)
class Catalog:
    version: str
    categories: tuple[Category, ...]

    def bases(self) -> tuple[Category, ...]:
        return tuple(c for c in self.categories if c.kind == "base")

    def placings(self) -> tuple[Category, ...]:
        return tuple(c for c in self.categories if c.kind == "placing")

    def by_name(self, name: str) -> Category:
        for c in self.categories:
            if c.name == name:
                return c
        raise KeyError(name)

    def category_names(self) -> tuple[str, ...]:
        return tuple(sorted(c.name for c in self.categories))


@dataclass(frozen=True)
class InstanceAsset:
    """Un-resized box asset; dims/color are a pure function of its id."""

    asset_id: str
    category: str
    raw_dims: Vec3
    color: tuple[float, float, float]

    def __post_init__(self):
        if min(self.raw_dims.as_tuple()) <= 0.0:
            raise ValueError("asset dims must be positive")


@dataclass(frozen=True)
class SizedAsset:
    """Asset after category resizing, ready for placement."""

    asset_id: str
    category: str
    dims: Vec3
    color: tuple[float, float, float]


@dataclass(frozen=True)
class Instance:
    asset_id: str
    category: str
    box: Aabb
    yaw: float
    color: tuple[float, float, float]


@dataclass(frozen=True)
class Scene:
    scene_id: str
    seed: int
    instances: tuple[Instance, ...]  # index 0 is the base instance
    center: Vec3  # base-instance box center

    @property
    def base(self) -> Instance:
        return self.instances[0]

    def category_names(self) -> tuple[str, ...]:
        return tuple(sorted({inst.category for inst in self.instances}))


def load_catalog(path: str | None = None) -> Catalog:
    """Load a catalog JSON file; the packaged default has 10 base + 47 placing categories."""
    if path is None:
        raw = resources.files("capnav").joinpath("data/catalog.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            raw = f.read()
    doc = json.loads(raw)
    cats = []
    for c in doc["categories"]:
        rr = c["resize_rule"]
        cats.append(
            Category(
                name=c["name"],
                kind=c["kind"],
                dims_range=tuple(tuple(c["dims_range"][ax]) for ax in ("x", "y", "z")),
                resize_rule=ResizeRule(rr["longest_horizontal"], rr.get("max_height")),
                sampling_cap=c["sampling_cap"],
                weight=c.get("weight", 1.0),
                pool_size=c.get("pool_size", 16),
            )
        )
    return Catalog(version=doc["version"], categories=tuple(cats))


def _stable_rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def make_asset(catalog: Catalog, category: Category, variant: int) -> InstanceAsset:
    """Deterministic pool asset: dims within the category range, stable color."""
    if not 0 <= variant < category.pool_size:
        raise ValueError(f"variant {variant} outside pool of {category.pool_size}")
    rng = _stable_rng(catalog.version, category.name, variant)
    (xl, xh), (yl, yh), (zl, zh) = category.dims_range
    dims = Vec3(rng.uniform(xl, xh), rng.uniform(yl, yh), rng.uniform(zl, zh))
    color = tuple(round(float(v), 6) for v in rng.uniform(0.05, 0.95, 3))
    return InstanceAsset(f"{category.name}-{variant:03d}", category.name, dims, color)


def resize_asset(asset: InstanceAsset, category: Category) -> Vec3:
    """Uniform scale so the longest horizontal extent meets the category target.

    If the rule carries a height cap and the scaled height exceeds it, a
    second uniform scale-down is applied; aspect ratio is preserved by both.
    """
    rule = category.resize_rule
    s = rule.longest_horizontal / max(asset.raw_dims.x, asset.raw_dims.y)
    dims = asset.raw_dims * s
    if rule.max_height is not None and dims.z > rule.max_height:
        dims = dims * (rule.max_height / dims.z)
    return dims


def prepare_asset(catalog: Catalog, category: Category, variant: int) -> SizedAsset:
    asset = make_asset(catalog, category, variant)
    return SizedAsset(asset.asset_id, asset.category, resize_asset(asset, category), asset.color)


@lru_cache(maxsize=4096)
def _capped_probs(cats: tuple[Category, ...]) -> np.ndarray:
    """Selection probabilities: proportional to weight, clamped at each cap.

    Water-filling: categories whose proportional share exceeds their cap are
    pinned there and the remaining mass is redistributed by weight. If the
    caps sum to <= 1 no feasible distribution exists and probabilities fall
    back to cap-proportional (a single category is then always selected).
    """
    w = np.array([c.weight for c in cats], dtype=np.float64)
    cap = np.array([c.sampling_cap for c in cats], dtype=np.float64)
    if len(cats) == 1:
        return np.array([1.0])
    if cap.sum() <= 1.0:
        return cap / cap.sum()
    p = w / w.sum()
    fixed = np.zeros(len(cats), dtype=bool)
    while True:
        over = ~fixed & (p > cap + 1e-15)
        if not over.any():
            break
        fixed |= over
        remaining = 1.0 - cap[fixed].sum()
        free = ~fixed
        p[free] = w[free] / w[free].sum() * remaining
    p[fixed] = cap[fixed]
    return p / p.sum()


def select_categories(
    rng: np.random.Generator, catalog: Catalog, k_placing: int
) -> tuple[Category, list[Category]]:
    """One base category plus k distinct placing categories, cap-respecting."""
    bases = catalog.bases()
    placings = list(catalog.placings())
    if not bases:
        raise ValueError("catalog has no base categories")
    if len(placings) < k_placing:
        raise ValueError(f"catalog has {len(placings)} placing categories, need {k_placing}")
    base = bases[int(rng.choice(len(bases), p=_capped_probs(bases)))]
    chosen: list[Category] = []
    for _ in range(k_placing):
        p = _capped_probs(tuple(placings))
        chosen.append(placings.pop(int(rng.choice(len(placings), p=p))))
    return base, chosen


def _footprint(cx: float, cy: float, dims: Vec3, yaw: float) -> tuple[float, float, float, float]:
    """(xmin, ymin, xmax, ymax) of a yawed box footprint; yaw in {0, pi/2} swaps extents."""
    fx, fy = (dims.x, dims.y) if yaw == 0.0 else (dims.y, dims.x)
    return (cx - fx / 2.0, cy - fy / 2.0, cx + fx / 2.0, cy + fy / 2.0)


def _overlap_area(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    return max(0.0, w) * max(0.0, h)


def _boxes_interpenetrate(a: Aabb, b: Aabb) -> bool:
    ox = min(a.max.x, b.max.x) - max(a.min.x, b.min.x)
    oy = min(a.max.y, b.max.y) - max(a.min.y, b.min.y)
    oz = min(a.max.z, b.max.z) - max(a.min.z, b.min.z)
    return ox > _PENETRATION_EPS and oy > _PENETRATION_EPS and oz > _PENETRATION_EPS


def place_instances(
    rng: np.random.Generator,
    base: SizedAsset,
    placings: Sequence[SizedAsset],
    scene_id: str = "scene",
    seed: int = 0,
) -> Scene:
    """Drop-settle placement.

    The base is centered at the origin on the ground. Each placing instance
    gets a random yaw in {0, pi/2} and a random center offset inside the
    base footprint inflated by 0.3 m, then falls straight down onto the
    highest surface under its footprint: the ground, or the top of any
    settled box overlapping at least 25% of the footprint. Placements that
    would interpenetrate a settled box are retried with a fresh offset up to
    50 times, after which the instance is dropped from the scene.
    """
    half_x, half_y = base.dims.x / 2.0, base.dims.y / 2.0
    if half_x > 4.0 or half_y > 4.0 or base.dims.z > 4.0:
        raise SceneGenerationError(f"base instance {base.asset_id} does not fit the environment")
    base_box = Aabb(Vec3(-half_x, -half_y, 0.0), Vec3(half_x, half_y, base.dims.z))
    placed = [Instance(base.asset_id, base.category, base_box, 0.0, base.color)]

    lo_x, lo_y = base_box.min.x - OFFSET_INFLATION_M, base_box.min.y - OFFSET_INFLATION_M
    hi_x, hi_y = base_box.max.x + OFFSET_INFLATION_M, base_box.max.y + OFFSET_INFLATION_M

    for item in placings:
        yaw = HALF_PI * int(rng.integers(0, 2))
        for _ in range(MAX_OFFSET_RETRIES):
            cx = float(rng.uniform(lo_x, hi_x))
            cy = float(rng.uniform(lo_y, hi_y))
            foot = _footprint(cx, cy, item.dims, yaw)
            if foot[0] < -4.0 or foot[1] < -4.0 or foot[2] > 4.0 or foot[3] > 4.0:
                continue
            area = (foot[2] - foot[0]) * (foot[3] - foot[1])
            support = 0.0
            for other in placed:
                other_foot = (other.box.min.x, other.box.min.y, other.box.max.x, other.box.max.y)
                if _overlap_area(foot, other_foot) >= SUPPORT_OVERLAP_FRAC * area:
                    support = max(support, other.box.max.z)
            box = Aabb(
                Vec3(foot[0], foot[1], support),
                Vec3(foot[2], foot[3], support + item.dims.z),
            )
            if box.max.z > 4.0:
                continue
            if any(_boxes_interpenetrate(box, other.box) for other in placed):
                continue
            placed.append(Instance(item.asset_id, item.category, box, yaw, item.color))
            break

    if len(placed) < 3:
        raise SceneGenerationError(f"only {len(placed)} instances could be placed")
    return Scene(scene_id, seed, tuple(placed), base_box.center())


def generate_scene(seed: int, catalog: Catalog) -> Scene:
    """Full pipeline: size -> select -> place; pure function of (seed, catalog)."""
    rng = np.random.default_rng(seed)
    n_instances = int(rng.integers(3, 8))
    base_cat, placing_cats = select_categories(rng, catalog, n_instances - 1)
    base = prepare_asset(catalog, base_cat, int(rng.integers(0, base_cat.pool_size)))
    placings = [
        prepare_asset(catalog, cat, int(rng.integers(0, cat.pool_size))) for cat in placing_cats
    ]
    return place_instances(rng, base, placings, scene_id=f"s{seed:08d}", seed=seed)
