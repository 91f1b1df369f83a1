"""Navigation metrics: NE, image similarity, segmentation similarity.

All three are evaluated at every trajectory viewpoint (start and end
included) and averaged. Image similarity compares unit embeddings through
(cos - 0.7) / 0.3, clamped to [0, 1]; the default embedder is a
deterministic per-category area/color profile, with CLIP-style vectors
supported via external embedding files. The length penalty is
r = L_gt / max(L_gt, L_pred) on geometric path length.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from capnav.core import Pose, Vec3
from capnav.oracle import euclidean_path_length
from capnav.renderer import Frame, seg_stats

GAMMA = 0.7  # background-influence floor in the image-similarity rescale


class Embedder(Protocol):
    def embed(self, frame) -> np.ndarray: ...


@dataclass(frozen=True)
class SemanticProfileEmbedder:
    """Deterministic stand-in embedder: per category (area ratio, mean rgb).

    Dimension = 4 * len(categories), L2-normalized; an all-background frame
    maps to the first basis vector so every embedding has unit norm.
    """

    categories: tuple[str, ...]

    def embed(self, frame: Frame) -> np.ndarray:
        v = np.zeros(4 * len(self.categories), dtype=np.float64)
        total = frame.width * frame.height
        for n, name in enumerate(self.categories):
            try:
                cid = frame.category_names.index(name)
            except ValueError:
                continue
            mask = frame.category_ids == cid
            count = int(mask.sum())
            if count == 0:
                continue
            v[4 * n] = count / total
            v[4 * n + 1 : 4 * n + 4] = frame.rgb[mask].mean(axis=0)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            v[0] = 1.0
            return v
        return v / norm


class ExternalEmbedder:
    """Looks up precomputed unit vectors by frame id (str or Frame.frame_id)."""

    def __init__(self, vectors: Mapping[str, np.ndarray]):
        self.vectors = dict(vectors)

    def embed(self, frame) -> np.ndarray:
        key = frame if isinstance(frame, str) else frame.frame_id
        if key is None:
            raise KeyError("frame has no frame_id to look up")
        if key not in self.vectors:
            raise KeyError(f"no embedding stored for frame id {key!r}")
        return self.vectors[key]


def load_external_embeddings(path: str) -> ExternalEmbedder:
    """JSON map frame-id -> float array; non-unit vectors renormalized with a warning."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    vectors = {}
    for key, values in raw.items():
        v = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise ValueError(f"embedding for {key!r} is the zero vector")
        if abs(norm - 1.0) > 1e-6:
            warnings.warn(f"embedding for {key!r} has norm {norm:.6g}; renormalizing")
            v = v / norm
        vectors[key] = v
    return ExternalEmbedder(vectors)


@dataclass(frozen=True)
class NavScores:
    ne: float
    image_sim: float
    seg_sim: float
    ne_penalized: float
    image_sim_penalized: float
    seg_sim_penalized: float
    length_ratio: float

    def as_dict(self) -> dict[str, float]:
        return {
            "NE": self.ne,
            "IS": self.image_sim,
            "SS": self.seg_sim,
            "NE_l": self.ne_penalized,
            "IS_l": self.image_sim_penalized,
            "SS_l": self.seg_sim_penalized,
            "r_l": self.length_ratio,
        }


def ne_step(pose: Pose, good_positions: Sequence[Vec3]) -> float:
    """Minimum Manhattan distance (meters) to the good-viewpoint positions."""
    if not good_positions:
        raise ValueError("empty good-viewpoint set")
    p = pose.position
    return min(abs(p.x - g.x) + abs(p.y - g.y) + abs(p.z - g.z) for g in good_positions)


def is_step(frame, good_frames: Sequence, embedder: Embedder, gamma: float = GAMMA) -> float:
    """max over goods of (cos(e(v), e(v')) - gamma) / (1 - gamma), clamped to [0, 1]."""
    if not good_frames:
        raise ValueError("empty good-viewpoint set")
    e = embedder.embed(frame)
    best = 0.0
    for good in good_frames:
        g = embedder.embed(good)
        # identical embeddings have cosine 1 by definition; the raw dot of a
        # nearly-unit vector with itself can fall an ulp short
        cos = 1.0 if np.array_equal(e, g) else float(np.dot(e, g))
        score = (cos - gamma) / (1.0 - gamma)
        best = max(best, min(1.0, max(0.0, score)))
    return best


def _stats_of(frame_or_stats) -> Mapping[str, float]:
    if isinstance(frame_or_stats, Mapping):
        return frame_or_stats
    return seg_stats(frame_or_stats)


def ss_step(frame, good_frames: Sequence) -> float:
    """max over goods of mean_c min(A(v,c)/A(v',c), 1) over the good frame's categories.

    Accepts Frames or precomputed {category: area ratio} mappings. A good
    frame with no categories constrains nothing and scores 1.
    """
    if not good_frames:
        raise ValueError("empty good-viewpoint set")
    pred = _stats_of(frame)
    best = 0.0
    for good in good_frames:
        ref = _stats_of(good)
        if not ref:
            return 1.0
        score = sum(min(pred.get(c, 0.0) / a, 1.0) for c, a in ref.items()) / len(ref)
        best = max(best, score)
    return best


def length_ratio(l_gt: float, l_pred: float) -> float:
    """r = L_gt / max(L_gt, L_pred), in (0, 1]."""
    if l_gt <= 0.0:
        raise ValueError("ground-truth trajectory length must be positive")
    return l_gt / max(l_gt, l_pred)


def trajectory_scores(
    frames: Sequence[Frame],
    poses: Sequence[Pose],
    good_viewpoints: Sequence,
    l_gt: float,
    embedder: Embedder,
) -> NavScores:
    """Per-step metrics averaged over every viewpoint, plus penalized variants.

    `good_viewpoints` items need .pose and .frame attributes (oracle
    GoodViewpoint fits). L_pred is the geometric path length of `poses`.
    """
    if not frames or len(frames) != len(poses):
        raise ValueError("need one frame per pose")
    good_positions = [g.pose.position for g in good_viewpoints]
    good_frames = [g.frame for g in good_viewpoints]
    ne = float(np.mean([ne_step(p, good_positions) for p in poses]))
    im = float(np.mean([is_step(f, good_frames, embedder) for f in frames]))
    ss = float(np.mean([ss_step(f, good_frames) for f in frames]))
    r = length_ratio(l_gt, euclidean_path_length(poses))
    return NavScores(
        ne=ne,
        image_sim=im,
        seg_sim=ss,
        ne_penalized=ne / r,
        image_sim_penalized=im * r,
        seg_sim_penalized=ss * r,
        length_ratio=r,
    )
