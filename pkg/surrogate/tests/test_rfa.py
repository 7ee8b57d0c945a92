import json

import numpy as np
import pytest

from gain_surrogate.rfa import MAGIC, FormatError, read_rfa, write_rfa


def write_blob(path, magic=MAGIC, header=None, payload=None):
    if header is None:
        header = {"shape": [4, 4], "dtype": "f32le", "order": "row-major",
                  "dx": 1.0, "origin": [0.0, 0.0]}
    if payload is None:
        payload = np.zeros(16, dtype="<f4").tobytes()
    raw = magic + (json.dumps(header) + "\n").encode() + payload
    path.write_bytes(raw)
    return path


class TestRoundTrip:
    def test_values_dx_origin(self, tmp_path):
        rng = np.random.default_rng(5)
        values = rng.normal(size=(9, 13)).astype(np.float32).astype(float)
        p = tmp_path / "f.rfa"
        write_rfa(values, 0.25, p, origin=(-2.0, 3.5))
        back, dx, origin = read_rfa(p)
        assert np.array_equal(back, values)
        assert dx == 0.25
        assert origin == (-2.0, 3.5)

    def test_f32_quantization_happens_once(self, tmp_path):
        p = tmp_path / "f.rfa"
        write_rfa(np.full((4, 4), np.pi), 1.0, p)
        back, _, _ = read_rfa(p)
        assert np.all(back == np.float32(np.pi))
        write_rfa(back, 1.0, p)
        again, _, _ = read_rfa(p)
        assert np.array_equal(again, back)

    def test_3d(self, tmp_path):
        values = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
        write_rfa(values, 0.5, tmp_path / "g.rfa")
        back, dx, origin = read_rfa(tmp_path / "g.rfa")
        assert np.array_equal(back, values)
        assert origin == (0.0, 0.0, 0.0)

    def test_default_origin_is_zero(self, tmp_path):
        write_rfa(np.zeros((4, 4)), 1.0, tmp_path / "h.rfa")
        _, _, origin = read_rfa(tmp_path / "h.rfa")
        assert origin == (0.0, 0.0)


class TestRejects:
    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            read_rfa(tmp_path / "nope.rfa")

    def test_bad_magic(self, tmp_path):
        p = write_blob(tmp_path / "f.rfa", magic=b"RFB1\n")
        with pytest.raises(FormatError, match="magic"):
            read_rfa(p)

    def test_header_without_newline(self, tmp_path):
        (tmp_path / "f.rfa").write_bytes(MAGIC + b'{"shape": [4, 4]')
        with pytest.raises(FormatError, match="terminator"):
            read_rfa(tmp_path / "f.rfa")

    def test_header_not_json(self, tmp_path):
        (tmp_path / "f.rfa").write_bytes(MAGIC + b"not json at all\n")
        with pytest.raises(FormatError, match="header"):
            read_rfa(tmp_path / "f.rfa")

    @pytest.mark.parametrize("key", ["shape", "dtype", "order", "dx", "origin"])
    def test_missing_key(self, tmp_path, key):
        header = {"shape": [4, 4], "dtype": "f32le", "order": "row-major",
                  "dx": 1.0, "origin": [0.0, 0.0]}
        del header[key]
        p = write_blob(tmp_path / "f.rfa", header=header)
        with pytest.raises(FormatError, match="header"):
            read_rfa(p)

    @pytest.mark.parametrize("patch", [{"dtype": "f64le"},
                                       {"order": "column-major"}])
    def test_wrong_layout(self, tmp_path, patch):
        header = {"shape": [4, 4], "dtype": "f32le", "order": "row-major",
                  "dx": 1.0, "origin": [0.0, 0.0], **patch}
        p = write_blob(tmp_path / "f.rfa", header=header)
        with pytest.raises(FormatError, match="layout"):
            read_rfa(p)

    @pytest.mark.parametrize("shape", [[0, 4], [4, -1], [4.5, 4], "nope", []])
    def test_bad_shape(self, tmp_path, shape):
        header = {"shape": shape, "dtype": "f32le", "order": "row-major",
                  "dx": 1.0, "origin": [0.0, 0.0]}
        p = write_blob(tmp_path / "f.rfa", header=header)
        with pytest.raises(FormatError, match="shape"):
            read_rfa(p)

    @pytest.mark.parametrize("dx", [0.0, -1.0, "wide", None])
    def test_bad_spacing(self, tmp_path, dx):
        header = {"shape": [4, 4], "dtype": "f32le", "order": "row-major",
                  "dx": dx, "origin": [0.0, 0.0]}
        p = write_blob(tmp_path / "f.rfa", header=header)
        with pytest.raises(FormatError, match="spacing"):
            read_rfa(p)

    @pytest.mark.parametrize("n_bytes", [0, 63, 65])
    def test_wrong_payload_length(self, tmp_path, n_bytes):
        p = write_blob(tmp_path / "f.rfa", payload=b"\x00" * n_bytes)
        with pytest.raises(FormatError, match="payload"):
            read_rfa(p)

    def test_non_finite_payload(self, tmp_path):
        payload = np.full(16, np.inf, dtype="<f4").tobytes()
        p = write_blob(tmp_path / "f.rfa", payload=payload)
        with pytest.raises(FormatError, match="finite"):
            read_rfa(p)


class TestWriteRejects:
    def test_nan(self, tmp_path):
        values = np.zeros((4, 4))
        values[1, 1] = np.nan
        with pytest.raises(ValueError, match="finite"):
            write_rfa(values, 1.0, tmp_path / "f.rfa")

    def test_f32_overflow(self, tmp_path):
        with pytest.raises(ValueError, match="overflow"):
            write_rfa(np.full((4, 4), 1e39), 1.0, tmp_path / "f.rfa")
