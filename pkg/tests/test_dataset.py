"""Field serialization and training-pair emission: byte-level format checks,
quantization contracts, per-pair invariants, and whole-dataset determinism."""

import hashlib
import json

import numpy as np
import pytest

from visplan import (
    ScalarField,
    accumulate,
    exact_gain_field,
    initial_state,
    read_rfa,
    visibility_field,
    write_rfa,
)
from visplan.dataset import MAGIC, TrainingPair, emit_pair, generate_dataset
from visplan.errors import FormatError, GenerationFailureError
from visplan.grid import GridGeometry
from visplan.scenes import SceneRecipe

from conftest import two_disk_map


def write_bytes(tmp_path, blob, name="field.rfa"):
    p = tmp_path / name
    p.write_bytes(blob)
    return p


def valid_blob(shape=(4, 4), dx=1.0, payload=None):
    header = {
        "shape": list(shape),
        "dtype": "f32le",
        "order": "row-major",
        "dx": dx,
        "origin": [0.0] * len(shape),
    }
    if payload is None:
        payload = np.zeros(shape, dtype="<f4").tobytes()
    return MAGIC + json.dumps(header).encode() + b"\n" + payload


# ---------------------------------------------------------------------------
# RFA round trips


class TestRfaRoundTrip:
    def test_f32_values_survive_exactly(self, tmp_path):
        rng = np.random.default_rng(0)
        geom = GridGeometry((17, 23), 0.25, (-2.0, 3.5))
        vals = rng.normal(size=geom.shape).astype("<f4").astype(np.float64)
        p = tmp_path / "f.rfa"
        write_rfa(ScalarField(geom, vals), p)
        back = read_rfa(p)
        assert back.geometry == geom
        assert np.array_equal(back.values, vals)

    def test_f64_values_quantize_once(self, tmp_path):
        geom = GridGeometry((5, 5), 1.0, (0.0, 0.0))
        vals = np.full(geom.shape, np.pi)
        p = tmp_path / "f.rfa"
        write_rfa(ScalarField(geom, vals), p)
        want = vals.astype("<f4").astype(np.float64)
        assert np.array_equal(read_rfa(p).values, want)

    def test_3d_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        geom = GridGeometry((6, 7, 8), 0.5, (1.0, 2.0, 3.0))
        vals = rng.normal(size=geom.shape).astype("<f4").astype(np.float64)
        p = tmp_path / "f.rfa"
        write_rfa(ScalarField(geom, vals), p)
        back = read_rfa(p)
        assert back.geometry == geom
        assert np.array_equal(back.values, vals)

    def test_file_layout(self, tmp_path):
        geom = GridGeometry((6, 7, 8), 2.0, (0.0, 0.0, 0.0))
        p = tmp_path / "f.rfa"
        write_rfa(ScalarField.full(geom, 1.0), p)
        blob = p.read_bytes()
        assert blob.startswith(MAGIC)
        nl = blob.index(b"\n", len(MAGIC))
        header = json.loads(blob[len(MAGIC) : nl])
        assert header == {
            "shape": [6, 7, 8],
            "dtype": "f32le",
            "order": "row-major",
            "dx": 2.0,
            "origin": [0.0, 0.0, 0.0],
        }
        assert len(blob) - (nl + 1) == 4 * 6 * 7 * 8

    def test_write_rejects_f32_overflow(self, tmp_path):
        geom = GridGeometry((4, 4), 1.0, (0.0, 0.0))
        with pytest.raises(ValueError):
            write_rfa(ScalarField.full(geom, 1e39), tmp_path / "f.rfa")


class TestRfaRejects:
    def test_bad_magic(self, tmp_path):
        with pytest.raises(FormatError):
            read_rfa(write_bytes(tmp_path, b"RFA2\n" + valid_blob()[5:]))

    def test_truncated_header(self, tmp_path):
        with pytest.raises(FormatError):
            read_rfa(write_bytes(tmp_path, MAGIC + b'{"shape": [3'))

    def test_header_not_json(self, tmp_path):
        with pytest.raises(FormatError):
            read_rfa(write_bytes(tmp_path, MAGIC + b"not json\n"))

    def test_header_not_object(self, tmp_path):
        with pytest.raises(FormatError):
            read_rfa(write_bytes(tmp_path, MAGIC + b"[1, 2]\n"))

    @pytest.mark.parametrize("drop", ["shape", "dtype", "order", "dx", "origin"])
    def test_missing_header_key(self, tmp_path, drop):
        header = json.loads(valid_blob()[5:].split(b"\n", 1)[0])
        del header[drop]
        blob = MAGIC + json.dumps(header).encode() + b"\n" + b"\0" * 64
        with pytest.raises(FormatError):
            read_rfa(write_bytes(tmp_path, blob))

    def test_unsupported_dtype_and_order(self, tmp_path):
        for k, v in (("dtype", "f64le"), ("order", "column-major")):
            header = json.loads(valid_blob()[5:].split(b"\n", 1)[0])
            header[k] = v
            blob = MAGIC + json.dumps(header).encode() + b"\n" + b"\0" * 64
            with pytest.raises(FormatError):
                read_rfa(write_bytes(tmp_path, blob))

    @pytest.mark.parametrize("shape", [[0, 4], [4, -1], [4.5, 4], "nope", [4]])
    def test_bad_shapes(self, tmp_path, shape):
        header = json.loads(valid_blob()[5:].split(b"\n", 1)[0])
        header["shape"] = shape
        blob = MAGIC + json.dumps(header).encode() + b"\n" + b"\0" * 64
        with pytest.raises(FormatError):
            read_rfa(write_bytes(tmp_path, blob))

    def test_short_and_long_payloads(self, tmp_path):
        good = valid_blob()
        with pytest.raises(FormatError):
            read_rfa(write_bytes(tmp_path, good[:-4]))
        with pytest.raises(FormatError):
            read_rfa(write_bytes(tmp_path, good + b"\0\0\0\0"))

    def test_non_finite_payload(self, tmp_path):
        payload = np.full((4, 4), np.inf, dtype="<f4").tobytes()
        with pytest.raises(FormatError):
            read_rfa(write_bytes(tmp_path, valid_blob(payload=payload)))

    def test_bad_geometry(self, tmp_path):
        with pytest.raises(FormatError):
            read_rfa(write_bytes(tmp_path, valid_blob(dx=-1.0)))


# ---------------------------------------------------------------------------
# training pairs


class TestTrainingPair:
    geom = GridGeometry((4, 4), 1.0, (0.0, 0.0))

    def fields(self, target_vals):
        psi = ScalarField.full(self.geom, 1.0)
        bnd = ScalarField.full(self.geom, 0.0)
        return psi, bnd, ScalarField(self.geom, target_vals)

    def test_accepts_unit_interval_target(self):
        psi, bnd, tgt = self.fields(np.full((4, 4), 0.5))
        TrainingPair(psi, bnd, tgt, {})

    def test_rejects_out_of_range_target(self):
        psi, bnd, tgt = self.fields(np.full((4, 4), 1.5))
        with pytest.raises(ValueError):
            TrainingPair(psi, bnd, tgt, {})

    def test_rejects_gain_outside_the_seen_region(self):
        psi, bnd, tgt = self.fields(np.full((4, 4), 0.5))
        hidden = ScalarField.full(self.geom, -1.0)
        with pytest.raises(ValueError):
            TrainingPair(hidden, bnd, tgt, {})

    def test_rejects_mixed_geometries(self):
        psi, bnd, tgt = self.fields(np.zeros((4, 4)))
        other = ScalarField.full(GridGeometry((5, 5), 1.0, (0.0, 0.0)), 0.0)
        with pytest.raises(ValueError):
            TrainingPair(psi, other, tgt, {})


class TestEmitPair:
    def test_target_is_gain_scaled_by_its_max(self):
        omap = two_disk_map()
        state = initial_state(omap, (32, 4))
        pair = emit_pair(omap, state, map_id="m0", seed=3)
        raw = exact_gain_field(omap, state, "exploration").values.values
        peak = pair.meta["normalization"]
        assert peak == float(raw.max()) > 0.0
        assert float(pair.target.values.max()) == 1.0
        assert np.allclose(pair.target.values * peak, raw, atol=1e-9)
        assert pair.meta["map_id"] == "m0"
        assert pair.meta["seed"] == 3
        assert pair.meta["k"] == 0

    def test_fully_covered_state_yields_zero_target(self):
        free = np.zeros((4, 8), dtype=bool)
        free[2, 1:7] = True
        from visplan.grid import signed_distance

        omap = signed_distance(free, GridGeometry((4, 8), 1.0, (0.0, 0.0)))
        state = initial_state(omap, (2, 1))
        for c in range(2, 7):
            v = visibility_field(omap, (2, c))
            from visplan.visibility import as_vantage

            state = accumulate(state, v, as_vantage(omap.geometry, (2, c)))
        pair = emit_pair(omap, state)
        assert not pair.target.values.any()
        assert pair.meta["normalization"] == 0.0

    def test_precomputed_field_must_match_geometry(self):
        omap = two_disk_map()
        state = initial_state(omap, (32, 4))
        other = two_disk_map(shape=(32, 32))
        foreign = exact_gain_field(other, initial_state(other, (4, 4)),
                                   "exploration")
        with pytest.raises(ValueError):
            emit_pair(omap, state, gain_field=foreign)


# ---------------------------------------------------------------------------
# dataset generation


def dir_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.iterdir()):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


class TestGenerateDataset:
    recipes = [SceneRecipe("radial", s, (32, 32)) for s in (5, 6)]

    def test_layout_and_invariants(self, tmp_path):
        out = tmp_path / "ds"
        manifest = generate_dataset(self.recipes, 1, 3, out, seed=11)
        assert manifest["format"] == "visplan-pairs-v1"
        assert manifest["n_pairs"] == len(manifest["pairs"]) <= 6
        assert manifest["config"]["steps_per_episode"] == 3
        on_disk = json.loads((out / "manifest.json").read_text())
        assert on_disk == json.loads(json.dumps(manifest))  # tuples -> lists
        for entry in manifest["pairs"]:
            for key in ("psi", "boundary", "target"):
                assert "/" not in entry[key]  # names stay relative
                assert (out / entry[key]).is_file()
            tgt = read_rfa(out / entry["target"])
            assert 0.0 <= tgt.values.min() and tgt.values.max() <= 1.0
            psi = read_rfa(out / entry["psi"])
            assert psi.geometry == self.recipes[entry["map"]].geometry
            if entry["normalization"] > 0.0:
                assert float(tgt.values.max()) == 1.0

    def test_byte_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        ma = generate_dataset(self.recipes, 1, 2, a, seed=4)
        mb = generate_dataset(self.recipes, 1, 2, b, seed=4)
        assert ma == mb
        assert dir_digest(a) == dir_digest(b)

    def test_seed_changes_the_episodes(self, tmp_path):
        a = generate_dataset(self.recipes, 1, 2, tmp_path / "a", seed=1)
        b = generate_dataset(self.recipes, 1, 2, tmp_path / "b", seed=2)
        assert a["pairs"][0]["x0"] != b["pairs"][0]["x0"] or a != b

    def test_validation(self, tmp_path):
        with pytest.raises(ValueError):
            generate_dataset(self.recipes, 0, 3, tmp_path / "x")
        with pytest.raises(ValueError):
            generate_dataset(self.recipes, 1, 0, tmp_path / "x")

    def test_failure_removes_partial_output(self, tmp_path):
        out = tmp_path / "ds"
        bad = SceneRecipe(
            "primitives3d",
            0,
            (12, 12, 12),
            params={"count": (1, 1), "obstacle_frac": (0.99, 1.0)},
        )
        with pytest.raises(GenerationFailureError):
            generate_dataset([self.recipes[0], bad], 1, 2, out, seed=0)
        assert list(out.iterdir()) == []
