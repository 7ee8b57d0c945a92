import json
import math

import numpy as np
import pytest
import torch

from gain_surrogate.data import (
    DatasetError,
    PairDataset,
    load_manifest,
    split_by_map,
)
from gain_surrogate.rfa import write_rfa
from gain_surrogate.train import TrainConfig, evaluate, load_model, train


class TestManifest:
    def test_load(self, pair_dir):
        manifest = load_manifest(pair_dir)
        assert manifest["n_pairs"] == 6
        assert len(manifest["pairs"]) == 6

    def test_missing(self, tmp_path):
        with pytest.raises(DatasetError, match="cannot load"):
            load_manifest(tmp_path)

    def test_wrong_format_tag(self, pair_dir):
        manifest = json.loads((pair_dir / "manifest.json").read_text())
        manifest["format"] = "somebody-elses-pairs-v9"
        (pair_dir / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(DatasetError, match="format"):
            load_manifest(pair_dir)

    def test_empty_pairs(self, pair_dir):
        manifest = json.loads((pair_dir / "manifest.json").read_text())
        manifest["pairs"] = []
        (pair_dir / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(DatasetError, match="no pairs"):
            load_manifest(pair_dir)


class TestSplit:
    def test_by_map_is_disjoint(self, pair_dir):
        manifest = load_manifest(pair_dir)
        tr, va = split_by_map(manifest, 1)
        assert len(tr) == 4 and len(va) == 2
        assert {p["map"] for p in tr} == {0, 1}
        assert {p["map"] for p in va} == {2}

    def test_zero_holdout(self, pair_dir):
        tr, va = split_by_map(load_manifest(pair_dir), 0)
        assert len(tr) == 6 and va == []

    @pytest.mark.parametrize("k", [-1, 3, 7])
    def test_bad_holdout(self, pair_dir, k):
        with pytest.raises(DatasetError, match="hold out"):
            split_by_map(load_manifest(pair_dir), k)


class TestPairDataset:
    def test_tensors(self, pair_dir):
        entries = load_manifest(pair_dir)["pairs"]
        ds = PairDataset(pair_dir, entries)
        assert len(ds) == 6
        x, t = ds[0]
        assert x.shape == (2, 64, 64) and t.shape == (1, 64, 64)
        assert x.dtype == torch.float32
        assert float(x[0].min()) >= -1.0 and float(x[0].max()) <= 1.0
        assert float(t.min()) >= 0.0 and float(t.max()) <= 1.0

    def test_geometry_mismatch(self, pair_dir):
        write_rfa(np.zeros((32, 32)), 1.0, pair_dir / "pair_00001.psi.rfa")
        entries = load_manifest(pair_dir)["pairs"]
        with pytest.raises(DatasetError, match="grid"):
            PairDataset(pair_dir, entries)

    def test_spacing_mismatch(self, pair_dir):
        psi = np.zeros((64, 64))
        write_rfa(psi, 0.5, pair_dir / "pair_00002.psi.rfa")
        entries = load_manifest(pair_dir)["pairs"]
        with pytest.raises(DatasetError, match="grid"):
            PairDataset(pair_dir, entries)

    def test_empty_entries(self, pair_dir):
        with pytest.raises(DatasetError, match="empty"):
            PairDataset(pair_dir, [])


class TestTrainConfig:
    @pytest.mark.parametrize("kwargs", [
        {"epochs": 0}, {"batch_size": 0}, {"lr": 0.0}, {"lr": -1.0},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestTraining:
    def test_untrained_validation_loss_is_log_two(self, pair_dir, tmp_path):
        # zero-initialized head -> sigmoid 0.5 -> cross entropy log 2,
        # independent of the targets
        ckpt = train(pair_dir, None,
                     TrainConfig(epochs=1, holdout_maps=1, seed=0),
                     tmp_path / "m.pt", log=lambda *_: None)
        assert abs(ckpt["history"]["val_init"] - math.log(2.0)) < 1e-5

    @pytest.mark.slow
    def test_single_pair_overfit(self, tmp_path):
        # batch norm needs > 1 value per channel, so a lone 128x128 pair
        # (2x2 bottleneck) is the smallest batch-of-one training input;
        # an exactly binary target keeps the cross-entropy floor at zero
        from conftest import synth_pair
        from gain_surrogate.rfa import write_rfa as _write

        psi, bnd, _ = synth_pair((128, 128), seed=0)
        tgt = np.zeros_like(psi)
        tgt[40:56, 72:88] = 1.0
        data = tmp_path / "one"
        data.mkdir()
        _write(psi, 1.0, data / "pair_00000.psi.rfa")
        _write(bnd, 1.0, data / "pair_00000.bnd.rfa")
        _write(tgt, 1.0, data / "pair_00000.tgt.rfa")
        manifest = {
            "format": "visplan-pairs-v1", "n_pairs": 1, "seed": 0,
            "config": {}, "pairs": [{
                "psi": "pair_00000.psi.rfa", "boundary": "pair_00000.bnd.rfa",
                "target": "pair_00000.tgt.rfa", "map": 0, "map_seed": 0,
                "episode": 0, "k": 1, "x0": [0, 0], "normalization": 1.0,
            }],
        }
        (data / "manifest.json").write_text(json.dumps(manifest))
        ckpt = train(data, None,
                     TrainConfig(epochs=500, batch_size=1, lr=3e-3, seed=0),
                     tmp_path / "m.pt", log=lambda *_: None)
        first, last = ckpt["history"]["train"][0], ckpt["history"]["train"][-1]
        assert last < 0.1 * math.log(2.0)
        assert last < first

    def test_checkpoint_contents_and_reload(self, pair_dir, tmp_path):
        config = TrainConfig(epochs=2, holdout_maps=1, seed=7)
        ckpt = train(pair_dir, None, config, tmp_path / "m.pt",
                     log=lambda *_: None)
        assert ckpt["spec"]["dim"] == 2 and ckpt["spec"]["blocks"] == 6
        assert ckpt["config"]["seed"] == 7
        assert ckpt["n_train"] == 4 and ckpt["n_val"] == 2
        assert len(ckpt["data_digest"]) == 64
        assert len(ckpt["history"]["train"]) == 2
        assert len(ckpt["history"]["val"]) == 2
        assert ckpt["dx"] == 1.0

        model, loaded = load_model(tmp_path / "m.pt")
        assert not model.training
        assert loaded["data_digest"] == ckpt["data_digest"]
        x = torch.randn(1, 2, 64, 64, generator=torch.Generator().manual_seed(1))
        with torch.no_grad():
            y = model(x)
        assert tuple(y.shape) == (1, 1, 64, 64)

    def test_seed_controls_training(self, pair_dir, tmp_path):
        cfg = TrainConfig(epochs=1, seed=3)
        c1 = train(pair_dir, None, cfg, tmp_path / "a.pt", log=lambda *_: None)
        c2 = train(pair_dir, None, cfg, tmp_path / "b.pt", log=lambda *_: None)
        assert c1["history"]["train"] == c2["history"]["train"]

    def test_evaluate_matches_history(self, pair_dir, tmp_path):
        config = TrainConfig(epochs=1, holdout_maps=1, seed=0)
        ckpt = train(pair_dir, None, config, tmp_path / "m.pt",
                     log=lambda *_: None)
        model, _ = load_model(tmp_path / "m.pt")
        entries = split_by_map(load_manifest(pair_dir), 1)[1]
        val = PairDataset(pair_dir, entries)
        assert abs(evaluate(model, val) - ckpt["history"]["val"][-1]) < 1e-6
