import json
import math

import numpy as np
import pytest

from capnav.core import Pose, Vec3
from capnav.metrics_nav import (
    SemanticProfileEmbedder,
    is_step,
    length_ratio,
    load_external_embeddings,
    ne_step,
    ss_step,
    trajectory_scores,
)
from capnav.oracle import GoodViewpoint, sample_candidates, select_good_viewpoints
from capnav.renderer import render, seg_stats


def pose_at(x, y, z):
    return Pose(Vec3(x, y, z), 0.0, 0.0)


class StubEmbedder:
    """Returns preset vectors keyed by the frame's tag (or the frame itself)."""

    def __init__(self, table):
        self.table = table

    def embed(self, frame):
        return np.asarray(self.table[getattr(frame, "tag", frame)], dtype=np.float64)


class TaggedStats(dict):
    """Segmentation-stats mapping that also carries an embedder tag."""

    def __init__(self, stats, tag):
        super().__init__(stats)
        self.tag = tag


class TestNE:
    def test_at_good_viewpoint(self):
        assert ne_step(pose_at(1, 2, 3), [Vec3(1, 2, 3)]) == 0.0

    def test_manhattan_arithmetic(self):
        assert ne_step(pose_at(0.4, 0.8, 1.2), [Vec3(0, 0, 1.2)]) == pytest.approx(1.2)

    def test_min_over_goods(self):
        goods = [Vec3(0, 0, 1.2)]
        base = ne_step(pose_at(0.4, 0.8, 1.2), goods)
        goods.append(Vec3(4, 4, 4))
        assert ne_step(pose_at(0.4, 0.8, 1.2), goods) == base

    def test_empty_goods(self):
        with pytest.raises(ValueError):
            ne_step(pose_at(0, 0, 0), [])


class TestIS:
    def embedder(self):
        c85 = math.sqrt(1 - 0.85**2)
        c60 = math.sqrt(1 - 0.6**2)
        return StubEmbedder({
            "ref": [1.0, 0.0, 0.0],
            "same": [1.0, 0.0, 0.0],
            "c85": [0.85, c85, 0.0],
            "c70": [0.7, math.sqrt(1 - 0.49), 0.0],
            "c60": [0.6, 0.0, c60],  # orthogonal leftovers: poor match to c85 too
        })

    def test_identical_is_one(self):
        assert is_step("same", ["ref"], self.embedder()) == 1.0

    def test_eq_arithmetic(self):
        assert is_step("c85", ["ref"], self.embedder()) == 0.5

    def test_at_gamma_is_zero(self):
        assert is_step("c70", ["ref"], self.embedder()) == 0.0

    def test_below_gamma_clamps(self):
        assert is_step("c60", ["ref"], self.embedder()) == 0.0

    def test_max_over_goods(self):
        emb = self.embedder()
        assert is_step("c85", ["c60", "ref"], emb) == 0.5

    def test_enlarging_goods_never_decreases(self):
        emb = self.embedder()
        base = is_step("c85", ["ref"], emb)
        assert is_step("c85", ["ref", "c60"], emb) >= base
        assert is_step("c85", ["ref", "same"], emb) >= base


class TestSS:
    def test_identical(self):
        stats = {"table": 0.2, "cup": 0.05}
        assert ss_step(stats, [dict(stats)]) == 1.0

    def test_formula_arithmetic(self):
        pred = {"table": 0.10, "cup": 0.05}
        good = {"table": 0.20, "cup": 0.05}
        assert ss_step(pred, [good]) == pytest.approx(0.75, abs=1e-15)

    def test_missing_category_scores_zero_term(self):
        pred = {"table": 0.2}
        good = {"table": 0.2, "cup": 0.1}
        assert ss_step(pred, [good]) == pytest.approx(0.5)

    def test_empty_good_categories_vacuous(self):
        assert ss_step({"table": 0.5}, [{}]) == 1.0

    def test_overshoot_clipped(self):
        assert ss_step({"table": 0.4}, [{"table": 0.2}]) == 1.0

    def test_permutation_invariance(self, scene42):
        # SS depends only on area ratios: shuffling pixels changes nothing
        frame = render(scene42, pose_at(-2, -2, 2))
        stats = seg_stats(frame)
        rng = np.random.default_rng(0)
        flat = frame.category_ids.ravel().copy()
        rng.shuffle(flat)
        shuffled = dict(stats)  # recompute via counts of the shuffled grid
        counts = {}
        for cid in flat[flat >= 0]:
            counts[cid] = counts.get(cid, 0) + 1
        total = frame.width * frame.height
        recomputed = {frame.category_names[c]: n / total for c, n in counts.items()}
        assert recomputed == shuffled

    def test_monotone_in_good_set(self):
        pred = {"table": 0.1}
        goods = [{"table": 0.4}]
        base = ss_step(pred, goods)
        assert ss_step(pred, goods + [{"table": 0.1}]) >= base


class TestTrajectoryScores:
    def test_length_ratio(self):
        assert length_ratio(6.0, 8.0) == 0.75
        assert length_ratio(6.0, 5.0) == 1.0
        with pytest.raises(ValueError):
            length_ratio(0.0, 1.0)

    def test_one_step_at_good_viewpoint(self, scene42, rng):
        good = select_good_viewpoints(sample_candidates(scene42, rng), 2)
        vp = good[0]
        emb = SemanticProfileEmbedder(scene42.category_names())
        scores = trajectory_scores([vp.frame], [vp.pose], good, l_gt=4.0, embedder=emb)
        assert scores.image_sim == 1.0
        assert scores.seg_sim == 1.0
        assert scores.ne == 0.0
        assert scores.length_ratio == 1.0  # zero-length prediction
        assert scores.image_sim_penalized == scores.image_sim
        assert scores.ne_penalized == scores.ne

    def test_penalty_directions(self, scene42, rng):
        good = select_good_viewpoints(sample_candidates(scene42, rng), 2)
        poses = [good[0].pose, good[1].pose]
        frames = [good[0].frame, good[1].frame]
        emb = SemanticProfileEmbedder(scene42.category_names())
        l_pred = (poses[1].position - poses[0].position).norm()
        scores = trajectory_scores(frames, poses, good, l_gt=l_pred / 2, embedder=emb)
        assert scores.length_ratio == pytest.approx(0.5)
        assert scores.ne_penalized == pytest.approx(scores.ne * 2)
        assert scores.image_sim_penalized == pytest.approx(scores.image_sim * 0.5)
        assert scores.seg_sim_penalized == pytest.approx(scores.seg_sim * 0.5)

    def test_per_step_averaging(self):
        emb = StubEmbedder({"a": [1.0, 0.0], "b": [0.0, 1.0], "g": [1.0, 0.0]})
        good = [GoodViewpoint(None, pose_at(0, 0, 1), 1.0, TaggedStats({"cup": 0.1}, "g"))]
        frames = [TaggedStats({"cup": 0.1}, "a"), TaggedStats({}, "b")]
        scores = trajectory_scores(frames, [pose_at(0, 0, 1), pose_at(1, 0, 1)],
                                   good, l_gt=10.0, embedder=emb)
        # IS: mean of 1.0 and clamp((0-.7)/.3)=0 -> 0.5; same shape for SS and NE
        assert scores.image_sim == pytest.approx(0.5)
        assert scores.seg_sim == pytest.approx(0.5)
        assert scores.ne == pytest.approx(0.5)  # mean of 0 and 1


class TestSemanticProfileEmbedder:
    def test_unit_norm_and_determinism(self, scene42):
        emb = SemanticProfileEmbedder(scene42.category_names())
        frame = render(scene42, pose_at(-2, -2, 2))
        v1, v2 = emb.embed(frame), emb.embed(frame)
        assert np.array_equal(v1, v2)
        assert np.linalg.norm(v1) == pytest.approx(1.0, abs=1e-9)

    def test_empty_frame_basis_vector(self, scene42):
        from capnav.scenegen import Scene

        empty = Scene("e", 0, (), Vec3(0, 0, 0.5))
        emb = SemanticProfileEmbedder(("cup", "table"))
        v = emb.embed(render(empty, pose_at(0, 0, 2)))
        assert v[0] == 1.0 and np.count_nonzero(v) == 1


class TestExternalEmbeddings:
    def test_lookup_and_renormalize(self, tmp_path):
        path = tmp_path / "emb.json"
        path.write_text(json.dumps({"f1": [2.0, 0.0], "f2": [0.0, 1.0]}))
        with pytest.warns(UserWarning):
            emb = load_external_embeddings(str(path))
        assert np.allclose(emb.embed("f1"), [1.0, 0.0])
        assert np.linalg.norm(emb.embed("f1")) == pytest.approx(1.0)

    def test_missing_key(self, tmp_path):
        path = tmp_path / "emb.json"
        path.write_text(json.dumps({"f1": [1.0, 0.0]}))
        emb = load_external_embeddings(str(path))
        with pytest.raises(KeyError):
            emb.embed("nope")

    def test_frame_id_plumbing(self, tmp_path, scene42):
        path = tmp_path / "emb.json"
        path.write_text(json.dumps({"sc/good/0": [0.0, 1.0]}))
        emb = load_external_embeddings(str(path))
        frame = render(scene42, pose_at(-2, -2, 2), frame_id="sc/good/0")
        assert np.allclose(emb.embed(frame), [0.0, 1.0])
        frame_noid = render(scene42, pose_at(-2, -2, 2))
        with pytest.raises(KeyError):
            emb.embed(frame_noid)
