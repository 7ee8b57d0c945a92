"""Exact information gain: how much unseen free volume a candidate vantage
would reveal.

The pointwise routine is the reference semantics: evaluate the full
visibility field of the candidate and count nodes that flip from unseen to
seen.  The field routine answers the same question for every candidate at
once by marching candidate-to-unseen sight lines directly, skipping the rest
of the domain.  The two must agree bit for bit; tests enforce it.  The field
routine's inner loops live in _kernels, use the reference path's sample
positions and interpolation arithmetic, and hop over samples only where a
Lipschitz bound on the signed distance proves the sign decision unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid import OccupancyMap, ScalarField
from .visibility import ExplorationState, as_vantage, visibility_field

MODES = ("surveillance", "exploration")


@dataclass(frozen=True)
class GainField:
    """Per-node gain in volume units, zero outside the candidate mask."""

    values: ScalarField
    candidate_mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.candidate_mask)
        if mask.dtype != np.bool_:
            raise ValueError(f"candidate mask must be boolean, got {mask.dtype}")
        if mask.shape != self.values.geometry.shape:
            raise ValueError("candidate mask shape does not match geometry")
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "candidate_mask", mask)
        vals = self.values.values
        if np.any(vals < 0.0):
            raise ValueError("gain values must be nonnegative")
        if np.any(vals[~mask] != 0.0):
            raise ValueError("gain values must vanish outside the candidate mask")

    @property
    def max(self) -> float:
        return float(self.values.values.max(initial=0.0, where=self.candidate_mask))


def exact_gain_at(omap: OccupancyMap, state: ExplorationState, x) -> float:
    """Volume newly visible from x given what the state has already seen.

    Reference path: one full visibility field, then a node count of
    {psi_x > 0 and Psi_k <= 0}, scaled by the cell volume.
    """
    if state.geometry != omap.geometry:
        raise ValueError("state and map geometries differ")
    psi_x = visibility_field(omap, x)  # raises InvalidVantageError off free space
    newly = (psi_x.values > 0.0) & (state.psi_cum.values <= 0.0)
    return int(np.count_nonzero(newly)) * omap.geometry.cell_volume


def exact_gain_field(
    omap: OccupancyMap,
    state: ExplorationState,
    mode: str = "exploration",
    workers: int | None = None,
) -> GainField:
    """Exact gain at every candidate node.

    Candidates are free nodes in surveillance mode (the whole map is known)
    and already-seen nodes in exploration mode (the agent may only move
    through surveyed space).  `workers` caps the parallel worker count for
    this call; the result is identical for any value.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if state.geometry != omap.geometry:
        raise ValueError("state and map geometries differ")
    geom = omap.geometry
    phi = omap.phi.values
    psi = state.psi_cum.values
    if mode == "surveillance":
        cand = phi > 0.0
    else:
        cand = psi > 0.0
    # Only unseen free nodes can contribute: psi_x(y) > 0 forces phi(y) > 0
    # because the segment minimum never exceeds the endpoint value.
    unseen = (psi <= 0.0) & (phi > 0.0)
    cand_flat = np.flatnonzero(cand).astype(np.int64)
    unseen_flat = np.flatnonzero(unseen).astype(np.int64)
    counts = np.zeros(cand_flat.size, dtype=np.int64)

    # Hop scale for the sign kernels; sound because phi bounds the world
    # distance to every non-positive node (see _seg_visible2).
    inv = 1.0 / geom.spacing

    prev = _kernels.current_workers()
    if workers is not None:
        _kernels.set_workers(workers)
    try:
        if cand_flat.size:
            if geom.dim == 2:
                _kernels._gain_counts2(
                    phi, cand_flat, unseen_flat, _kernels.MARCH_RATE, inv, counts
                )
            else:
                _kernels._gain_counts3(
                    phi, cand_flat, unseen_flat, _kernels.MARCH_RATE, inv, counts
                )
    finally:
        if workers is not None:
            _kernels.set_workers(prev)

    vals = np.zeros(geom.shape, dtype=np.float64)
    vals.flat[cand_flat] = counts * geom.cell_volume
    return GainField(ScalarField(geom, vals), cand)


class VisibilityTable:
    """All-pairs sight-line table for one map.

    One bit per ordered free-node pair: whether the straight segment between
    the two nodes stays in free space, marched exactly as the gain kernels
    march it.  Building costs one pass over free_count^2 / 2 segments; after
    that, the exact gain field of any state on this map is a masked popcount
    per candidate, so running many episodes on one map no longer re-marches
    anything.  Fields are bit-identical to exact_gain_field.

    Memory is free_count^2 / 8 bytes; construction refuses maps whose table
    would exceed `memory_cap` bytes.
    """

    def __init__(
        self,
        omap: OccupancyMap,
        workers: int | None = None,
        memory_cap: int = 512 * 1024 * 1024,
    ):
        geom = omap.geometry
        free_flat = np.flatnonzero(omap.free_mask).astype(np.int64)
        nf = free_flat.size
        words = max(1, (nf + 63) // 64)
        need = nf * words * 8
        if need > memory_cap:
            raise ValueError(
                f"visibility table needs {need} bytes for {nf} free nodes, "
                f"cap is {memory_cap}"
            )
        self.omap = omap
        self._free_flat = free_flat
        self._words = words
        self._pos = np.full(geom.n_nodes, -1, dtype=np.int64)
        self._pos[free_flat] = np.arange(nf, dtype=np.int64)
        self._rows = np.zeros((nf, words), dtype=np.uint64)
        inv = 1.0 / geom.spacing
        phi = omap.phi.values
        prev = _kernels.current_workers()
        if workers is not None:
            _kernels.set_workers(workers)
        try:
            fill = _kernels._pairs_fill2 if geom.dim == 2 else _kernels._pairs_fill3
            fill(phi, free_flat, _kernels.MARCH_RATE, inv, self._rows)
        finally:
            if workers is not None:
                _kernels.set_workers(prev)
        _kernels._pairs_mirror(self._rows)

    def gain_field(
        self, state: ExplorationState, mode: str = "exploration"
    ) -> GainField:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if state.omap is not self.omap:
            raise ValueError("state belongs to a different map than this table")
        geom = self.omap.geometry
        phi = self.omap.phi.values
        psi = state.psi_cum.values
        if mode == "surveillance":
            cand = phi > 0.0
        else:
            cand = psi > 0.0
        cand_flat = np.flatnonzero(cand).astype(np.int64)
        unseen_flat = np.flatnonzero((psi <= 0.0) & (phi > 0.0))
        live = np.zeros(self._words, dtype=np.uint64)
        upos = self._pos[unseen_flat]
        np.bitwise_or.at(
            live, upos >> 6, np.uint64(1) << (upos & 63).astype(np.uint64)
        )
        counts = np.zeros(cand_flat.size, dtype=np.int64)
        if cand_flat.size:
            _kernels._table_counts(self._rows, self._pos[cand_flat], live, counts)
        vals = np.zeros(geom.shape, dtype=np.float64)
        vals.flat[cand_flat] = counts * geom.cell_volume
        return GainField(ScalarField(geom, vals), cand)


class ExactGainTracker:
    """Exact gain fields maintained incrementally along one exploration run.

    Per candidate node, a bit row records which initially-unseen nodes its
    sight lines reach.  When the state advances, nodes that became seen are
    struck from every row by bit tests instead of re-marching, and only
    first-time candidates march at all.  Counts stay integers throughout, so
    every returned field is bit-identical to exact_gain_field on the same
    state; a state that is not a monotone successor of the previous call
    (or a different map) transparently resets the tracker.

    Row storage is candidates x unseen bits; when the map would need more
    than `memory_cap` bytes the tracker skips caching and delegates each
    call to exact_gain_field.
    """

    def __init__(self, memory_cap: int = 256 * 1024 * 1024):
        self.memory_cap = int(memory_cap)
        self._omap = None
        self._last_psi = None

    def _reset(self, omap: OccupancyMap, psi: np.ndarray) -> None:
        geom = omap.geometry
        self._omap = omap
        cmax = int(omap.free_count)
        unseen = (psi <= 0.0) & (omap.phi.values > 0.0)
        self._u_flat = np.flatnonzero(unseen).astype(np.int64)
        words = max(1, (self._u_flat.size + 63) // 64)
        self._big = cmax * words * 8 > self.memory_cap
        if self._big:
            return
        self._alive = np.ones(self._u_flat.size, dtype=np.uint8)
        self._rows = np.zeros((cmax, words), dtype=np.uint64)
        self._counts = np.zeros(cmax, dtype=np.int64)
        self._slot = np.full(geom.n_nodes, -1, dtype=np.int32)
        self._n_rows = 0

    def field(
        self,
        omap: OccupancyMap,
        state: ExplorationState,
        mode: str = "exploration",
        workers: int | None = None,
    ) -> GainField:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if state.geometry != omap.geometry:
            raise ValueError("state and map geometries differ")
        psi = state.psi_cum.values
        if (
            self._omap is not omap
            or self._last_psi is None
            or not np.all(psi >= self._last_psi)
        ):
            self._reset(omap, psi)
        self._last_psi = psi
        if self._big:
            return exact_gain_field(omap, state, mode, workers)

        geom = omap.geometry
        phi = omap.phi.values
        # Strike universe positions that the state has seen since last call.
        live = np.flatnonzero(self._alive)
        if live.size:
            dead = live[psi.flat[self._u_flat[live]] > 0.0].astype(np.int64)
            if dead.size:
                if self._n_rows:
                    _kernels._row_drop(self._rows, self._counts, self._n_rows, dead)
                self._alive[dead] = 0

        if mode == "surveillance":
            cand = phi > 0.0
        else:
            cand = psi > 0.0
        cand_flat = np.flatnonzero(cand).astype(np.int64)
        new_flat = cand_flat[self._slot[cand_flat] < 0]
        if new_flat.size:
            slots = np.arange(
                self._n_rows, self._n_rows + new_flat.size, dtype=np.int32
            )
            self._slot[new_flat] = slots
            self._n_rows += new_flat.size
            inv = 1.0 / geom.spacing
            prev = _kernels.current_workers()
            if workers is not None:
                _kernels.set_workers(workers)
            try:
                fill = _kernels._row_fill2 if geom.dim == 2 else _kernels._row_fill3
                fill(
                    phi, new_flat, slots, self._u_flat, self._alive,
                    _kernels.MARCH_RATE, inv, self._rows, self._counts,
                )
            finally:
                if workers is not None:
                    _kernels.set_workers(prev)

        vals = np.zeros(geom.shape, dtype=np.float64)
        vals.flat[cand_flat] = (
            self._counts[self._slot[cand_flat]] * geom.cell_volume
        )
        return GainField(ScalarField(geom, vals), cand)
