"""Per-vantage visibility level sets, cumulative visibility, and shadow boundaries.

The visibility level set of a vantage x assigns to every node y the minimum
of phi along the straight segment from x to y, sampled at arc-length steps of
at most half the grid spacing with both endpoints included.  Its sign encodes
line-of-sight: psi_x(y) > 0 iff y is visible from x.  Sensor range is
unlimited; only occlusion removes visibility.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import DegenerateMapError, InvalidVantageError
from .grid import (
    GridGeometry,
    OccupancyMap,
    ScalarField,
    heaviside_field,
    smeared_delta_field,
)


@dataclass(frozen=True)
class Vantage:
    """A sensing location pinned to a grid node."""

    node: tuple[int, ...]
    world: tuple[float, ...]

    @classmethod
    def at(cls, geometry: GridGeometry, node) -> "Vantage":
        node = tuple(int(i) for i in node)
        return cls(node, geometry.node_to_world(node))


def as_vantage(geometry: GridGeometry, x) -> Vantage:
    """Coerce a node index (or pass through a Vantage) after bounds-checking."""
    if isinstance(x, Vantage):
        if not geometry.contains_node(x.node):
            raise InvalidVantageError(f"vantage node {x.node} outside grid")
        return x
    return Vantage.at(geometry, x)


def visibility_field(omap: OccupancyMap, x) -> ScalarField:
    """psi_x: segment-minimum of phi from the vantage to every node.

    Raises InvalidVantageError if the vantage sits in an obstacle.  The
    returned field satisfies psi_x <= phi pointwise and psi_x(x) = phi(x).
    """
    geom = omap.geometry
    x = as_vantage(geom, x)
    phi = omap.phi.values
    if phi[x.node] <= 0.0:
        raise InvalidVantageError(f"vantage {x.node} has phi = {phi[x.node]} <= 0")
    out = np.empty(geom.shape, dtype=np.float64)
    if geom.dim == 2:
        _kernels._vis_field2(phi, x.node[0], x.node[1], _kernels.MARCH_RATE, out)
    else:
        _kernels._vis_field3(
            phi, x.node[0], x.node[1], x.node[2], _kernels.MARCH_RATE, out
        )
    return ScalarField(geom, out)


def shadow_boundary(
    psi_cum: ScalarField, omap: OccupancyMap, eps: float | None = None
) -> ScalarField:
    """Smeared-delta field of the seen/unseen frontier, excluding obstacle bands.

    b(n) = delta_eps(Psi(n)) * (1 - H(delta_eps(phi(n)))): nonzero only where
    Psi crosses zero away from the obstacle interface, i.e. where unseen free
    space genuinely borders seen free space.
    """
    if psi_cum.geometry != omap.geometry:
        raise ValueError("psi field and map geometries differ")
    if eps is None:
        eps = omap.delta_eps
    d_psi = smeared_delta_field(psi_cum.values, eps)
    d_phi = smeared_delta_field(omap.phi.values, eps)
    b = d_psi * (1.0 - heaviside_field(d_phi))
    return ScalarField(omap.geometry, b)


def residual(psi_cum: ScalarField, omap: OccupancyMap) -> float:
    """Fraction of free nodes not yet seen: |{phi>0, Psi<=0}| / |{phi>0}|."""
    if psi_cum.geometry != omap.geometry:
        raise ValueError("psi field and map geometries differ")
    free = omap.free_mask
    n_free = int(np.count_nonzero(free))
    if n_free == 0:
        raise DegenerateMapError("map has no free nodes")
    unseen = int(np.count_nonzero(free & (psi_cum.values <= 0.0)))
    return unseen / n_free


@dataclass(frozen=True)
class ExplorationState:
    """Cumulative visibility Psi_k, its shadow boundary b_k, and the vantage
    history.  Immutable; accumulate() returns a new state."""

    omap: OccupancyMap
    psi_cum: ScalarField
    boundary: ScalarField
    vantages: tuple[Vantage, ...]
    eps: float

    @property
    def geometry(self) -> GridGeometry:
        return self.psi_cum.geometry

    @property
    def k(self) -> int:
        """Step index; k = 0 after the initial vantage."""
        return len(self.vantages) - 1

    @cached_property
    def seen_mask(self) -> np.ndarray:
        m = self.psi_cum.values > 0.0
        m.setflags(write=False)
        return m

    @property
    def seen_count(self) -> int:
        return int(np.count_nonzero(self.seen_mask))

    @property
    def seen_volume(self) -> float:
        """|Omega_k| in volume units."""
        return self.seen_count * self.geometry.cell_volume

    @property
    def residual(self) -> float:
        return residual(self.psi_cum, self.omap)


def initial_state(omap: OccupancyMap, x0, eps: float | None = None) -> ExplorationState:
    """State after the first vantage: Psi_0 = psi_{x0}."""
    x0 = as_vantage(omap.geometry, x0)
    if eps is None:
        eps = omap.delta_eps
    eps = float(eps)
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    psi = visibility_field(omap, x0)
    return ExplorationState(omap, psi, shadow_boundary(psi, omap, eps), (x0,), eps)


def accumulate(
    state: ExplorationState, psi_new: ScalarField, vantage
) -> ExplorationState:
    """Fold one more visibility field in: Psi_k = max(Psi_{k-1}, psi_new).

    The vantage that produced psi_new is appended to the history; the shadow
    boundary is recomputed for the merged field.
    """
    if psi_new.geometry != state.geometry:
        raise ValueError("psi field and state geometries differ")
    vantage = as_vantage(state.geometry, vantage)
    merged = ScalarField(
        state.geometry, np.maximum(state.psi_cum.values, psi_new.values)
    )
    return ExplorationState(
        state.omap,
        merged,
        shadow_boundary(merged, state.omap, state.eps),
        state.vantages + (vantage,),
        state.eps,
    )
