"""Field serialization (RFA) and training-pair emission.

RFA is the cross-component exchange format: the 5-byte magic "RFA1\\n", one
JSON header line {"shape":…, "dtype":"f32le", "order":"row-major", "dx":…,
"origin":…}, then the row-major payload as little-endian 32-bit floats.
Training pairs map an exploration state (Psi_k, b_k) to the exploration-mode
exact gain field normalized by its own maximum, which preserves the argmax,
the only thing the greedy selection rule consumes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .gain import GainField, exact_gain_field
from .grid import GridGeometry, OccupancyMap, ScalarField, signed_distance
from .scenes import SceneRecipe, derive_seed, generate_scene
from .visibility import ExplorationState, accumulate, initial_state, visibility_field

MAGIC = b"RFA1\n"


def write_rfa(field: ScalarField, path) -> None:
    """Serialize a field.  Values are stored at float32 precision; anything
    that overflows that range is rejected rather than silently saturated."""
    geom = field.geometry
    with np.errstate(over="ignore"):  # the finiteness check below reports it
        payload = np.ascontiguousarray(field.values, dtype="<f4")
    if not np.all(np.isfinite(payload)):
        raise ValueError("field values exceed float32 range")
    header = {
        "shape": list(geom.shape),
        "dtype": "f32le",
        "order": "row-major",
        "dx": geom.spacing,
        "origin": list(geom.origin),
    }
    line = json.dumps(header, separators=(",", ":")).encode("ascii")
    with open(Path(path), "wb") as f:
        f.write(MAGIC)
        f.write(line + b"\n")
        f.write(payload.tobytes())


def read_rfa(path) -> ScalarField:
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        line = f.readline()
        if not line.endswith(b"\n"):
            raise FormatError(f"{path}: truncated header")
        try:
            header = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: header is not JSON: {e}")
        payload = f.read()
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header must be a JSON object")
    for key in ("shape", "dtype", "order", "dx", "origin"):
        if key not in header:
            raise FormatError(f"{path}: header missing {key!r}")
    if header["dtype"] != "f32le":
        raise FormatError(f"{path}: unsupported dtype {header['dtype']!r}")
    if header["order"] != "row-major":
        raise FormatError(f"{path}: unsupported order {header['order']!r}")
    shape = header["shape"]
    if not (
        isinstance(shape, list)
        and all(isinstance(m, int) and m > 0 for m in shape)
    ):
        raise FormatError(f"{path}: bad shape {shape!r}")
    n = int(np.prod(shape))
    if len(payload) != 4 * n:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {4 * n}"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(shape)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{path}: payload contains non-finite values")
    try:
        geom = GridGeometry(tuple(shape), header["dx"], tuple(header["origin"]))
    except (TypeError, ValueError) as e:
        raise FormatError(f"{path}: bad geometry: {e}")
    return ScalarField(geom, values)


@dataclass(frozen=True)
class TrainingPair:
    """One supervised example: inputs (psi, boundary), target in [0, 1]."""

    psi: ScalarField
    boundary: ScalarField
    target: ScalarField
    meta: dict

    def __post_init__(self):
        geom = self.psi.geometry
        if self.boundary.geometry != geom or self.target.geometry != geom:
            raise ValueError("pair fields span different geometries")
        t = self.target.values
        if float(t.min()) < 0.0 or float(t.max()) > 1.0:
            raise ValueError("target values must lie in [0, 1]")
        if np.any(t[self.psi.values <= 0.0] != 0.0):
            raise ValueError("target must vanish where psi <= 0")


def emit_pair(
    omap: OccupancyMap,
    state: ExplorationState,
    map_id: str = "",
    seed: int = 0,
    gain_field: GainField | None = None,
) -> TrainingPair:
    """Build the training pair for the current state.

    The target is the exploration-mode exact gain field scaled by its maximum
    (stored in meta as "normalization" so raw volumes are recoverable; 0.0
    marks an all-zero target).  A precomputed gain field may be passed to
    avoid recomputation inside episode loops.
    """
    if gain_field is None:
        gain_field = exact_gain_field(omap, state, "exploration")
    elif gain_field.values.geometry != state.geometry:
        raise ValueError("gain field geometry does not match state")
    raw = gain_field.values.values
    peak = float(raw.max())
    target = raw / peak if peak > 0.0 else np.zeros_like(raw)
    meta = {
        "map_id": map_id,
        "k": state.k,
        "seed": int(seed),
        "normalization": peak,
    }
    return TrainingPair(
        state.psi_cum, state.boundary, ScalarField(state.geometry, target), meta
    )


def _pair_paths(out_dir: Path, idx: int) -> dict[str, Path]:
    stem = f"pair_{idx:05d}"
    return {
        "psi": out_dir / f"{stem}.psi.rfa",
        "boundary": out_dir / f"{stem}.bnd.rfa",
        "target": out_dir / f"{stem}.tgt.rfa",
    }


def generate_dataset(
    recipes: list[SceneRecipe],
    episodes_per_map: int,
    steps_per_episode: int,
    out_dir,
    seed: int = 0,
) -> dict:
    """Run exact-greedy episodes over the recipe list and emit RFA triplets.

    Each episode starts at a uniformly drawn free node (seeded from the
    global seed, the map index, and the episode index) and emits one pair per
    step from the state before each selection.  An episode ends early once
    nothing more can be gained, so the pair count is at most maps × episodes
    × steps.  Output bytes are fully determined by (recipes, seed); on any
    failure the files written so far are removed.
    """
    from .planner import select_next  # deferred: planner imports our RFA IO

    if episodes_per_map < 1 or steps_per_episode < 1:
        raise ValueError("episodes_per_map and steps_per_episode must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    pairs: list[dict] = []
    written: list[Path] = [manifest_path]
    idx = 0
    try:
        for mi, recipe in enumerate(recipes):
            free = generate_scene(recipe)
            omap = signed_distance(free, recipe.geometry)
            geom = omap.geometry
            free_flat = np.flatnonzero(omap.free_mask)
            for ep in range(episodes_per_map):
                rng = np.random.default_rng(derive_seed(seed, mi, ep))
                x0_flat = int(free_flat[int(rng.integers(free_flat.size))])
                x0 = np.unravel_index(x0_flat, geom.shape)
                state = initial_state(omap, x0)
                visited = np.zeros(geom.n_nodes, dtype=bool)
                visited[x0_flat] = True
                for _step in range(steps_per_episode):
                    gf = exact_gain_field(omap, state, "exploration")
                    pair = emit_pair(
                        omap, state, map_id=f"map{mi:03d}", seed=seed, gain_field=gf
                    )
                    paths = _pair_paths(out_dir, idx)
                    written.extend(paths.values())
                    write_rfa(pair.psi, paths["psi"])
                    write_rfa(pair.boundary, paths["boundary"])
                    write_rfa(pair.target, paths["target"])
                    pairs.append(
                        {
                            "psi": paths["psi"].name,
                            "boundary": paths["boundary"].name,
                            "target": paths["target"].name,
                            "map": mi,
                            "map_seed": recipe.seed,
                            "episode": ep,
                            "k": state.k,
                            "x0": [int(i) for i in x0],
                            "normalization": pair.meta["normalization"],
                        }
                    )
                    idx += 1
                    vals = gf.values.values.copy()
                    cand = gf.candidate_mask & ~visited.reshape(geom.shape)
                    vals[~cand] = 0.0
                    if not cand.any() or float(vals.max()) <= 0.0:
                        break
                    nxt = select_next(
                        GainField(ScalarField(geom, vals), cand), state.vantages[-1]
                    )
                    state = accumulate(state, visibility_field(omap, nxt), nxt)
                    visited[geom.flat_index(nxt.node)] = True
        manifest = {
            "format": "visplan-pairs-v1",
            "n_pairs": idx,
            "seed": int(seed),
            "config": {
                "episodes_per_map": int(episodes_per_map),
                "steps_per_episode": int(steps_per_episode),
                "recipes": [asdict(r) for r in recipes],
            },
            "pairs": pairs,
        }
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return manifest
