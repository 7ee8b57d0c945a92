"""Greedy vantage-point selection over a pluggable gain estimator.

One loop serves surveillance, exploration, the random-walker baseline, and
externally served gain predictions: estimate a gain field, zero out nodes
already visited, take the argmax (ties resolved toward the current vantage,
then by row-major order), sense, fold the new visibility in, repeat until a
stop rule fires.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EstimatorError, FormatError, NoCandidateError
from .gain import ExactGainTracker, GainField, VisibilityTable, exact_gain_field
from .grid import GridGeometry, OccupancyMap, ScalarField
from .visibility import (
    ExplorationState,
    Vantage,
    accumulate,
    as_vantage,
    initial_state,
    visibility_field,
)

# A boundary field whose maximum sits below this is treated as identically
# zero; smeared-delta dust from far-field pockets should not keep a finished
# episode alive.
BOUNDARY_TOL = 1e-12

# Relative tolerance within which gain values count as tied at the max.
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class StopRule:
    """Termination criteria; whichever fires first ends the episode.

    eps_gain is compared against the normalized max gain (see run_episode);
    delta_residual against the unseen fraction; max_steps bounds the total
    number of vantage points including the start.  Zero disables the first
    two (the comparisons are strict).
    """

    max_steps: int
    eps_gain: float = 0.0
    delta_residual: float = 0.0

    def __post_init__(self):
        if int(self.max_steps) < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        object.__setattr__(self, "max_steps", int(self.max_steps))
        if not 0.0 <= float(self.eps_gain):
            raise ValueError(f"eps_gain must be >= 0, got {self.eps_gain}")
        if not 0.0 <= float(self.delta_residual) <= 1.0:
            raise ValueError(
                f"delta_residual must be in [0,1], got {self.delta_residual}"
            )
        object.__setattr__(self, "eps_gain", float(self.eps_gain))
        object.__setattr__(self, "delta_residual", float(self.delta_residual))


@dataclass
class PlanTrace:
    """Episode record.  residuals[i] is the unseen fraction after vantage i;
    max_gains[j] / max_gains_normalized[j] describe the estimated field that
    drove iteration j (after repeat-suppression), so they have one entry per
    estimator call.  wall_ms[j] times iteration j end to end."""

    geometry: GridGeometry
    vantages: list[Vantage] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    max_gains: list[float] = field(default_factory=list)
    max_gains_normalized: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    stop_reason: str = ""


class GainEstimator:
    """Interface: estimate(map, state, rng) -> GainField on the same geometry.

    `normalized` declares the value scale: True means values are already
    dimensionless in [0,1]; False means volume units that the episode loop
    divides by |Omega_k| before testing the gain threshold.
    """

    kind = "abstract"
    normalized = False

    def estimate(
        self, omap: OccupancyMap, state: ExplorationState, rng: np.random.Generator
    ) -> GainField:
        raise NotImplementedError


class ExactEstimator(GainEstimator):
    """Ground-truth gain, incrementally tracked across an episode.

    Fields are bit-identical to exact_gain_field on every call; the tracker
    only avoids re-marching sight lines whose answer cannot have changed.
    Passing a prebuilt VisibilityTable for the map replaces marching with
    table popcounts, which pays off when many episodes share one map.
    """

    normalized = False

    def __init__(
        self,
        mode: str = "exploration",
        workers: int | None = None,
        table: VisibilityTable | None = None,
    ):
        self.kind = "exact"
        self.mode = mode
        self.workers = workers
        self.table = table
        self._tracker = ExactGainTracker()

    def estimate(self, omap, state, rng):
        if self.table is not None:
            if self.table.omap is not omap:
                raise ValueError("estimator table was built for a different map")
            return self.table.gain_field(state, self.mode)
        return self._tracker.field(omap, state, self.mode, workers=self.workers)


def random_gain_field(
    state: ExplorationState, omap: OccupancyMap, rng
) -> GainField:
    """The random-walker baseline as a gain field: a unit spike at one node
    drawn uniformly from the visible region, zero elsewhere.  Routing the
    draw through select_next keeps the baseline inside the same episode
    machinery."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    visible = np.flatnonzero(state.psi_cum.values > 0.0)
    if visible.size == 0:
        raise NoCandidateError("visible region is empty")
    pick = int(visible[int(rng.integers(visible.size))])
    vals = np.zeros(state.geometry.shape, dtype=np.float64)
    vals.flat[pick] = 1.0
    mask = state.psi_cum.values > 0.0
    return GainField(ScalarField(state.geometry, vals), mask)


class RandomEstimator(GainEstimator):
    normalized = True

    def __init__(self):
        self.kind = "random"

    def estimate(self, omap, state, rng):
        return random_gain_field(state, omap, rng)


class ExternalEstimator(GainEstimator):
    """Runs `<command> --psi <in> --boundary <in> --out <out>` per step.

    The command receives Psi_k and b_k as RFA files and must write one RFA
    field of the same geometry with values in [0,1].  Any protocol violation
    aborts the episode; there is no silent fallback.
    """

    normalized = True

    def __init__(self, command: str, exchange_dir=None):
        self.kind = "external"
        self.argv = shlex.split(command)
        if not self.argv:
            raise ValueError("external estimator command is empty")
        if exchange_dir is None:
            exchange_dir = tempfile.mkdtemp(prefix="visplan-estimator-")
        self.exchange_dir = Path(exchange_dir)
        self.exchange_dir.mkdir(parents=True, exist_ok=True)

    def estimate(self, omap, state, rng):
        from .dataset import read_rfa, write_rfa  # deferred: dataset imports us

        psi_path = self.exchange_dir / "psi.rfa"
        bnd_path = self.exchange_dir / "boundary.rfa"
        out_path = self.exchange_dir / "gain.rfa"
        write_rfa(state.psi_cum, psi_path)
        write_rfa(state.boundary, bnd_path)
        out_path.unlink(missing_ok=True)
        argv = self.argv + [
            "--psi", str(psi_path), "--boundary", str(bnd_path), "--out", str(out_path),
        ]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except OSError as e:
            raise EstimatorError(f"could not launch estimator {self.argv[0]!r}: {e}")
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-5:]
            raise EstimatorError(
                f"estimator exited with status {proc.returncode}: "
                + " | ".join(tail)
            )
        try:
            out = read_rfa(out_path)
        except (OSError, FormatError) as e:
            raise EstimatorError(f"estimator output unreadable: {e}")
        if out.geometry != state.geometry:
            raise EstimatorError(
                f"estimator returned geometry {out.geometry.shape}, "
                f"expected {state.geometry.shape}"
            )
        vals = out.values
        if float(vals.min()) < 0.0 or float(vals.max()) > 1.0:
            raise EstimatorError("estimator values outside [0, 1]")
        mask = state.psi_cum.values > 0.0
        return GainField(ScalarField(state.geometry, np.where(mask, vals, 0.0)), mask)


def make_estimator(spec: str, workers: int | None = None) -> GainEstimator:
    """Parse an estimator spec: 'exact', 'random', or 'external:<command>'."""
    if spec == "exact":
        return ExactEstimator(workers=workers)
    if spec == "random":
        return RandomEstimator()
    if spec.startswith("external:"):
        return ExternalEstimator(spec[len("external:"):])
    raise ValueError(f"unknown estimator spec {spec!r}")


def select_next(gain: GainField, current: Vantage) -> Vantage:
    """Argmax of the gain field with deterministic tie-breaking.

    Nodes within relative tolerance 1e-12 of the maximum tie; the tie closest
    (Euclidean, world units) to the current vantage wins; exact distance ties
    fall back to the smallest row-major index.
    """
    geom = gain.values.geometry
    vals = gain.values.values
    cand = np.flatnonzero(gain.candidate_mask)
    if cand.size == 0:
        raise NoCandidateError("gain field has no candidate nodes")
    cvals = vals.flat[cand]
    vmax = float(cvals.max())
    ties = cand[cvals >= vmax - abs(vmax) * TIE_RTOL]
    nodes = np.column_stack(np.unravel_index(ties, geom.shape)).astype(np.float64)
    world = np.asarray(geom.origin) + geom.spacing * nodes
    d2 = ((world - np.asarray(current.world)) ** 2).sum(axis=1)
    # ties are in ascending flat order, so argmin's first-hit rule is the
    # row-major fallback.
    best = int(ties[int(np.argmin(d2))])
    return Vantage.at(geom, np.unravel_index(best, geom.shape))


def run_episode(
    omap: OccupancyMap,
    estimator: GainEstimator,
    x0,
    stop: StopRule,
    seed: int = 0,
    eps: float | None = None,
    observer=None,
) -> PlanTrace:
    """Run the greedy loop from x0 until a stop rule fires.

    Stop reasons, in the order checked each iteration: "residual" (unseen
    fraction below delta_residual), "boundary" (shadow boundary identically
    zero, max below 1e-12), "max_steps", "no_candidates" (every candidate
    already visited), "gain" (normalized max gain below eps_gain).  The
    normalized max gain is the raw max divided by |Omega_k| for volume-valued
    estimators, or taken as-is for estimators that already return values in
    [0, 1].  Deterministic given (map, estimator, x0, seed); worker counts
    never change the outcome.

    `observer(state)` is called after the initial sensing and after each
    accumulate, for snapshotting.
    """
    geom = omap.geometry
    x0 = as_vantage(geom, x0)
    rng = np.random.default_rng(seed)
    state = initial_state(omap, x0, eps=eps)
    if observer is not None:
        observer(state)
    trace = PlanTrace(geometry=geom)
    trace.vantages.append(x0)
    trace.residuals.append(state.residual)
    visited = np.zeros(geom.n_nodes, dtype=bool)
    visited[geom.flat_index(x0.node)] = True

    while True:
        if trace.residuals[-1] < stop.delta_residual:
            trace.stop_reason = "residual"
            break
        if state.boundary.max() < BOUNDARY_TOL:
            trace.stop_reason = "boundary"
            break
        if len(trace.vantages) >= stop.max_steps:
            trace.stop_reason = "max_steps"
            break
        t0 = time.perf_counter()
        raw_field = estimator.estimate(omap, state, rng)
        vals = raw_field.values.values.copy()
        mask = raw_field.candidate_mask & ~visited.reshape(geom.shape)
        vals[~mask] = 0.0
        if not mask.any():
            trace.stop_reason = "no_candidates"
            break
        raw_max = float(vals.max())
        norm_max = raw_max if estimator.normalized else raw_max / state.seen_volume
        trace.max_gains.append(raw_max)
        trace.max_gains_normalized.append(norm_max)
        if norm_max < stop.eps_gain:
            trace.wall_ms.append((time.perf_counter() - t0) * 1e3)
            trace.stop_reason = "gain"
            break
        nxt = select_next(GainField(ScalarField(geom, vals), mask), trace.vantages[-1])
        state = accumulate(state, visibility_field(omap, nxt), nxt)
        if observer is not None:
            observer(state)
        visited[geom.flat_index(nxt.node)] = True
        trace.vantages.append(nxt)
        trace.residuals.append(state.residual)
        trace.wall_ms.append((time.perf_counter() - t0) * 1e3)

    return trace


def frequency_map(traces: list[PlanTrace], sigma: float) -> ScalarField:
    """Superpose a unit Gaussian per vantage point over all traces."""
    if not traces:
        raise ValueError("need at least one trace")
    sigma = float(sigma)
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    geom = traces[0].geometry
    for t in traces:
        if t.geometry != geom:
            raise ValueError("traces span different geometries")
    mesh = np.meshgrid(*geom.axis_coordinates(), indexing="ij")
    acc = np.zeros(geom.shape, dtype=np.float64)
    inv = 1.0 / (2.0 * sigma * sigma)
    for t in traces:
        for v in t.vantages:
            d2 = np.zeros(geom.shape, dtype=np.float64)
            for ax, w in zip(mesh, v.world):
                d2 += (ax - w) ** 2
            acc += np.exp(-d2 * inv)
    return ScalarField(geom, acc)
