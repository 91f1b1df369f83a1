import json
import os

import numpy as np
import pytest

from capnav.core import Aabb, GridIndex, Vec3
from capnav.dataset import (
    DatasetConfig,
    DatasetDir,
    SchemaError,
    assign_split,
    load_json,
    make_dataset,
    save_json,
    scene_from_record,
    scene_to_record,
    trajectory_from_record,
    trajectory_to_record,
    validate_trajectory_record,
)
from capnav.scenegen import Instance, Scene, generate_scene


class TestSceneRoundTrip:
    def test_save_load_equal(self, catalog, scene42, tmp_path):
        rec = scene_to_record(scene42, catalog.version)
        path = tmp_path / "scene.json"
        save_json(rec, str(path))
        loaded = scene_from_record(load_json(str(path)))
        assert loaded == scene42

    def test_byte_stable(self, catalog, scene42, tmp_path):
        rec = scene_to_record(scene42, catalog.version)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_json(rec, str(p1))
        save_json(scene_from_record(load_json(str(p1))) and rec, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_file_fails(self, catalog, scene42, tmp_path):
        rec = scene_to_record(scene42, catalog.version)
        path = tmp_path / "scene.json"
        save_json(rec, str(path))
        path.write_bytes(path.read_bytes()[:50])
        with pytest.raises(json.JSONDecodeError):
            load_json(str(path))

    def test_unknown_field_json_pointer(self, catalog, scene42):
        rec = scene_to_record(scene42, catalog.version)
        rec["instances"][0]["colr"] = [1, 0, 0]
        with pytest.raises(SchemaError) as err:
            scene_from_record(rec)
        assert "/instances/0/colr" in str(err.value)

    def test_bad_type_path(self, catalog, scene42):
        rec = scene_to_record(scene42, catalog.version)
        rec["center"] = [0.0, "x", 0.0]
        with pytest.raises(SchemaError) as err:
            scene_from_record(rec)
        assert "/center/1" in str(err.value)


class TestTrajectoryRoundTrip:
    def test_save_load_and_replay_validate(self, scene42, rng, tmp_path):
        from capnav.oracle import gen_ground_truth, sample_candidates, select_good_viewpoints

        good = select_good_viewpoints(sample_candidates(scene42, rng), 1)
        traj = gen_ground_truth(scene42, good, rng)[0]
        rec = trajectory_to_record(traj, "t0")
        path = tmp_path / "t0.json"
        save_json(rec, str(path))
        tid, loaded = trajectory_from_record(load_json(str(path)))
        assert tid == "t0"
        assert loaded.poses == traj.poses
        assert loaded.actions == traj.actions
        assert loaded.path_length_m == traj.path_length_m
        validate_trajectory_record(load_json(str(path)), scene42)

    def test_replay_validation_catches_corruption(self, scene42, rng):
        from capnav.oracle import gen_ground_truth, sample_candidates, select_good_viewpoints

        good = select_good_viewpoints(sample_candidates(scene42, rng), 1)
        traj = gen_ground_truth(scene42, good, rng)[0]
        rec = trajectory_to_record(traj, "t0")
        rec["poses"][-1][0] += 0.5  # corrupt the final pose
        with pytest.raises(SchemaError):
            validate_trajectory_record(rec, scene42)

    def test_action_invariant_checked_on_load(self, scene42, rng):
        from capnav.oracle import gen_ground_truth, sample_candidates, select_good_viewpoints

        good = select_good_viewpoints(sample_candidates(scene42, rng), 1)
        traj = gen_ground_truth(scene42, good, rng)[0]
        rec = trajectory_to_record(traj, "t0")
        rec["actions"][0]["move_fb"] = ["stop", 0.5]
        with pytest.raises(SchemaError) as err:
            trajectory_from_record(rec)
        assert "/actions/0" in str(err.value)


def _mini_scene(assets):
    instances = tuple(
        Instance(a, c, Aabb(Vec3(i, 0, 0), Vec3(i + 0.5, 0.5, 0.5)), 0.0, (0.5, 0.5, 0.5))
        for i, (a, c) in enumerate(assets)
    )
    return Scene("m", 0, instances, Vec3(0, 0, 0.25))


class TestAssignSplit:
    TRAIN_ASSETS = {"table-1", "cup-1", "mug-1"}
    TRAIN_CATS = {"table", "cup", "mug"}

    def test_all_seen_common(self):
        scene = _mini_scene([("table-1", "table"), ("cup-1", "cup"), ("mug-1", "mug")])
        assert assign_split(scene, self.TRAIN_ASSETS, self.TRAIN_CATS) == "common"

    def test_majority_unseen_instances(self):
        scene = _mini_scene([("table-9", "table"), ("cup-9", "cup"), ("mug-1", "mug")])
        assert assign_split(scene, self.TRAIN_ASSETS, self.TRAIN_CATS) == "novel_instance"

    def test_half_unseen_is_still_common(self):
        scene = _mini_scene([("table-9", "table"), ("cup-1", "cup")])
        assert assign_split(scene, self.TRAIN_ASSETS, self.TRAIN_CATS) == "common"

    def test_novel_category_takes_precedence(self):
        scene = _mini_scene([("table-1", "table"), ("cup-1", "cup"), ("lamp-1", "lamp")])
        assert assign_split(scene, self.TRAIN_ASSETS, self.TRAIN_CATS) == "novel_category"


class TestMakeDataset:
    def test_small_dataset_properties(self, catalog, tmp_path):
        out = str(tmp_path / "ds")
        config = DatasetConfig(train=3, val=1, test=1, base_seed=400,
                               candidates=12, good_viewpoints=2, starts_per_viewpoint=3)
        manifest = make_dataset(out, catalog, config)
        assert len(manifest["scene_ids"]) == 5
        ds = DatasetDir(out)
        splits = ds.splits()
        assert set(splits) == set(manifest["scene_ids"])  # partition over scenes
        assert sum(1 for v in splits.values() if v == "train") == 3
        for scene_id in manifest["scene_ids"]:
            ann = ds.annotation(scene_id)
            ids = ds.trajectory_ids(scene_id)
            assert len(ids) == 3 * len(ann["good_viewpoints"])
            assert len(ann["captions"]) == config.captions_per_scene
        # every stored trajectory replays
        for tid in ds.trajectory_ids():
            ds.trajectory(tid, validate_replay=True)

    def test_determinism(self, catalog, tmp_path):
        config = DatasetConfig(train=2, val=0, test=0, base_seed=500,
                               candidates=8, good_viewpoints=1)
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        make_dataset(a, catalog, config)
        make_dataset(b, catalog, config)
        for sub in ("scenes", "annotations", "trajectories"):
            fa = sorted(os.listdir(os.path.join(a, sub)))
            fb = sorted(os.listdir(os.path.join(b, sub)))
            assert fa == fb
            for f in fa:
                with open(os.path.join(a, sub, f), "rb") as fh_a, \
                        open(os.path.join(b, sub, f), "rb") as fh_b:
                    assert fh_a.read() == fh_b.read()
