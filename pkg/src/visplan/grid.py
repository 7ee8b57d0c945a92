"""Uniform node-centered grids, scalar fields, and level-set embeddings.

The occupancy level set puts node i at world position origin + i * spacing,
carries phi > 0 on free space and phi < 0 inside obstacles, and |phi| equal
to the Euclidean distance to the nearest node of the opposite class.  All
downstream visibility machinery only ever reads phi through nodal values or
multilinear interpolation between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import DegenerateMapError, OutOfDomainError

# Support half-width of the smeared delta, in units of the grid spacing.
# Narrower smearing under-resolves the interface at nodal resolution; wider
# smearing bleeds the shadow boundary into the obstacle band.
DELTA_EPS_FACTOR = 3.0


def _as_float_tuple(xs) -> tuple[float, ...]:
    return tuple(float(x) for x in xs)


@dataclass(frozen=True)
class GridGeometry:
    """Shape, isotropic spacing, and world origin of a node-centered grid."""

    shape: tuple[int, ...]
    spacing: float
    origin: tuple[float, ...]

    def __post_init__(self):
        shape = tuple(int(m) for m in self.shape)
        if len(shape) not in (2, 3):
            raise ValueError(f"grid must be 2-D or 3-D, got shape {shape}")
        if any(m < 4 for m in shape):
            raise ValueError(f"need at least 4 nodes per axis, got {shape}")
        spacing = float(self.spacing)
        if not math.isfinite(spacing) or spacing <= 0.0:
            raise ValueError(f"spacing must be finite and positive, got {spacing}")
        origin = _as_float_tuple(self.origin)
        if len(origin) != len(shape):
            raise ValueError("origin dimensionality does not match shape")
        if not all(math.isfinite(c) for c in origin):
            raise ValueError("origin must be finite")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        """Measure Delta_x^d carried by each node in counting sums."""
        return self.spacing ** self.dim

    @property
    def diameter(self) -> float:
        """World-space diagonal of the node bounding box."""
        return self.spacing * math.sqrt(sum((m - 1) ** 2 for m in self.shape))

    def contains_node(self, node) -> bool:
        node = tuple(int(i) for i in node)
        return len(node) == self.dim and all(
            0 <= i < m for i, m in zip(node, self.shape)
        )

    def node_to_world(self, node) -> tuple[float, ...]:
        if not self.contains_node(node):
            raise ValueError(f"node {tuple(node)} outside grid of shape {self.shape}")
        return tuple(o + self.spacing * int(i) for o, i in zip(self.origin, node))

    def world_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.origin, dtype=np.float64)
        hi = lo + self.spacing * (np.asarray(self.shape, dtype=np.float64) - 1.0)
        return lo, hi

    def axis_coordinates(self) -> list[np.ndarray]:
        """Per-axis world coordinates of the nodes."""
        return [
            o + self.spacing * np.arange(m, dtype=np.float64)
            for o, m in zip(self.origin, self.shape)
        ]

    def flat_index(self, node) -> int:
        """Row-major rank of a node; the canonical total order on nodes."""
        if not self.contains_node(node):
            raise ValueError(f"node {tuple(node)} outside grid of shape {self.shape}")
        return int(np.ravel_multi_index(tuple(int(i) for i in node), self.shape))


@dataclass(frozen=True)
class ScalarField:
    """A float64 nodal field bound to its geometry.  Values are read-only."""

    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.size != self.geometry.n_nodes:
            raise ValueError(
                f"field has {arr.size} values for a grid of {self.geometry.n_nodes} nodes"
            )
        arr = arr.reshape(self.geometry.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def full(cls, geometry: GridGeometry, value: float) -> "ScalarField":
        return cls(geometry, np.full(geometry.shape, float(value)))

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


def smeared_delta(t: float, eps: float) -> float:
    """Raised-cosine approximation of the Dirac delta.

    Support is |t| <= eps/2, total mass 1, peak 2/eps at t = 0.  Outside the
    support, and at its edge where the cosine vanishes, the value is exactly
    zero.
    """
    t = float(t)
    eps = float(eps)
    if not math.isfinite(t):
        raise ValueError(f"argument must be finite, got {t}")
    if not math.isfinite(eps) or eps <= 0.0:
        raise ValueError(f"width must be finite and positive, got {eps}")
    if abs(t) >= eps / 2.0:
        return 0.0
    c = math.cos(math.pi * t / eps)
    return (2.0 / eps) * c * c


def smeared_delta_field(values: np.ndarray, eps: float) -> np.ndarray:
    """Vectorized smeared_delta over an array."""
    eps = float(eps)
    if not math.isfinite(eps) or eps <= 0.0:
        raise ValueError(f"width must be finite and positive, got {eps}")
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("arguments must be finite")
    out = np.zeros_like(values)
    inside = np.abs(values) < eps / 2.0
    c = np.cos(np.pi * values[inside] / eps)
    out[inside] = (2.0 / eps) * c * c
    return out


def heaviside(t: float) -> int:
    """Sharp step: 1 for t > 0, else 0.  The convention H(0) = 0 matters:
    visibility counts demand psi strictly positive."""
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"argument must be finite, got {t}")
    return 1 if t > 0.0 else 0


def heaviside_field(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("arguments must be finite")
    return (values > 0.0).astype(np.float64)


def sample(field: ScalarField, point) -> float:
    """Multilinear interpolation of a nodal field at a world-space point.

    Uses the difference form v0 + f * (v1 - v0) on each axis so constant
    fields are reproduced exactly, and reads points that land on a node
    straight from the nodal array, so nodal values are exact as well (the
    difference form alone would round at the far face, where f = 1).
    """
    geom = field.geometry
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (geom.dim,):
        raise ValueError(f"expected a {geom.dim}-vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    lo, hi = geom.world_bounds()
    if np.any(p < lo) or np.any(p > hi):
        raise OutOfDomainError(f"point {tuple(p)} outside bounds {lo} .. {hi}")
    # Grid coordinates in [0, m-1] per axis.
    g = (p - lo) / geom.spacing
    g_round = np.rint(g)
    if np.all(g == g_round):
        return float(field.values[tuple(g_round.astype(np.int64))])
    base = np.minimum(np.floor(g).astype(np.int64), np.asarray(geom.shape) - 2)
    base = np.maximum(base, 0)
    frac = g - base
    v = field.values
    if geom.dim == 2:
        i, j = base
        fi, fj = frac
        v0 = v[i, j] + fj * (v[i, j + 1] - v[i, j])
        v1 = v[i + 1, j] + fj * (v[i + 1, j + 1] - v[i + 1, j])
        return float(v0 + fi * (v1 - v0))
    i, j, k = base
    fi, fj, fk = frac
    v00 = v[i, j, k] + fk * (v[i, j, k + 1] - v[i, j, k])
    v01 = v[i, j + 1, k] + fk * (v[i, j + 1, k + 1] - v[i, j + 1, k])
    v10 = v[i + 1, j, k] + fk * (v[i + 1, j, k + 1] - v[i + 1, j, k])
    v11 = v[i + 1, j + 1, k] + fk * (v[i + 1, j + 1, k + 1] - v[i + 1, j + 1, k])
    v0 = v00 + fj * (v01 - v00)
    v1 = v10 + fj * (v11 - v10)
    return float(v0 + fi * (v1 - v0))


@dataclass(frozen=True)
class OccupancyMap:
    """Signed-distance embedding of a boolean occupancy mask."""

    phi: ScalarField

    @property
    def geometry(self) -> GridGeometry:
        return self.phi.geometry

    @cached_property
    def free_mask(self) -> np.ndarray:
        m = self.phi.values > 0.0
        m.setflags(write=False)
        return m

    @property
    def free_count(self) -> int:
        return int(np.count_nonzero(self.free_mask))

    @property
    def free_volume(self) -> float:
        """Counting measure of free space, |Omega| = Delta_x^d * #free."""
        return self.free_count * self.geometry.cell_volume

    @property
    def delta_eps(self) -> float:
        """Default smearing width tied to the grid resolution."""
        return DELTA_EPS_FACTOR * self.geometry.spacing


def signed_distance(free_mask: np.ndarray, geometry: GridGeometry) -> OccupancyMap:
    """Exact Euclidean signed distance to the free/obstacle interface.

    Free nodes get the (positive) distance to the nearest obstacle node,
    obstacle nodes the negated distance to the nearest free node, both in
    world units.  A mask with no obstacles has no interface; it is embedded
    as the constant 10 * diameter so that every node reads as deep free
    space.  A mask with no free nodes is not embeddable.
    """
    mask = np.asarray(free_mask)
    if mask.dtype != np.bool_:
        raise ValueError(f"free mask must be boolean, got dtype {mask.dtype}")
    if mask.shape != geometry.shape:
        raise ValueError(
            f"mask shape {mask.shape} does not match grid shape {geometry.shape}"
        )
    if not mask.any():
        raise DegenerateMapError("occupancy mask has no free nodes")
    if mask.all():
        return OccupancyMap(ScalarField.full(geometry, 10.0 * geometry.diameter))
    dist_free = ndimage.distance_transform_edt(mask, sampling=geometry.spacing)
    dist_obst = ndimage.distance_transform_edt(~mask, sampling=geometry.spacing)
    phi = np.where(mask, dist_free, -dist_obst)
    return OccupancyMap(ScalarField(geometry, phi))
