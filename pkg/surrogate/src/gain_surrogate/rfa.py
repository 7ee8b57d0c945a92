"""Flat-array exchange files: the only thing this package shares with the
planner is this on-disk format, so the reader is deliberately strict."""

import json

import numpy as np

MAGIC = b"RFA1\n"
_HEADER_KEYS = {"shape", "dtype", "order", "dx", "origin"}


class FormatError(Exception):
    pass


def read_rfa(path):
    """Return (values, dx, origin) from a flat-array file.

    values is float64 C-order with the header's shape; any structural
    problem raises FormatError rather than propagating parser internals.
    """
    try:
        blob = open(path, "rb").read()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    if not blob.startswith(MAGIC):
        raise FormatError("bad magic")
    nl = blob.find(b"\n", len(MAGIC))
    if nl < 0:
        raise FormatError("header line missing terminator")
    try:
        header = json.loads(blob[len(MAGIC): nl + 1].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"unparseable header: {e}") from e
    if not isinstance(header, dict) or set(header) != _HEADER_KEYS:
        raise FormatError("header must carry exactly shape/dtype/order/dx/origin")
    if header["dtype"] != "f32le" or header["order"] != "row-major":
        raise FormatError("unsupported layout")
    shape = header["shape"]
    if (not isinstance(shape, list) or not shape
            or any(not isinstance(n, int) or n < 1 for n in shape)):
        raise FormatError(f"bad shape {shape!r}")
    dx = header["dx"]
    if not isinstance(dx, (int, float)) or not np.isfinite(dx) or dx <= 0:
        raise FormatError(f"bad spacing {dx!r}")
    n = int(np.prod(shape))
    payload = blob[nl + 1:]
    if len(payload) != 4 * n:
        raise FormatError(f"payload holds {len(payload)} bytes, expected {4 * n}")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise FormatError("non-finite payload values")
    return values.reshape(shape), float(dx), tuple(header["origin"])


def write_rfa(values, dx, path, origin=None):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("refusing to write non-finite values")
    with np.errstate(over="ignore"):  # the finiteness check below reports it
        as32 = values.astype("<f4")
    if not np.all(np.isfinite(as32)):
        raise ValueError("values overflow float32")
    header = {
        "shape": list(values.shape),
        "dtype": "f32le",
        "order": "row-major",
        "dx": float(dx),
        "origin": list(origin) if origin is not None else [0.0] * values.ndim,
    }
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write((json.dumps(header) + "\n").encode("utf-8"))
        f.write(as32.tobytes())
