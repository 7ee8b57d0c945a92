"""Shared fixtures and reference oracles.

The oracles here deliberately take different code paths from the package:
brute-force nearest-neighbour scans instead of the distance transform,
product-form bilinear weights instead of the kernels' difference form, and
dense ray sampling at a fixed world-space step instead of adaptive marching.
Agreement between the two is the point of most tests.
"""

import numpy as np
import pytest

from visplan import OccupancyMap, signed_distance
from visplan.grid import GridGeometry


# ---------------------------------------------------------------------------
# map builders


def disk_free_mask(shape, disks, dtype=bool):
    """Open room with solid disk obstacles: disks = [(ci, cj, r), ...]."""
    free = np.ones(shape, dtype=bool)
    ii, jj = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    for ci, cj, r in disks:
        free &= (ii - ci) ** 2 + (jj - cj) ** 2 > r * r
    return free.astype(dtype)


def two_disk_map(shape=(64, 64), spacing=1.0) -> OccupancyMap:
    """Standard occlusion workbench: two disks whose far sides shadow each
    other from any single vantage near the left wall."""
    free = disk_free_mask(shape, [(22, 26, 7), (44, 38, 7)])
    geom = GridGeometry(shape, spacing, (0.0,) * len(shape))
    return signed_distance(free, geom)


def empty_map(shape=(32, 32), spacing=1.0) -> OccupancyMap:
    geom = GridGeometry(shape, spacing, (0.0,) * len(shape))
    return signed_distance(np.ones(shape, dtype=bool), geom)


def random_map(seed, shape=(32, 32), spacing=1.0, p_block=0.12) -> OccupancyMap:
    """Random blobby obstacles; always keeps at least one free node."""
    rng = np.random.default_rng(seed)
    free = rng.random(shape) > p_block
    # dilate obstacles once so they are not salt-and-pepper single nodes
    occ = ~free
    grown = occ.copy()
    for ax in range(len(shape)):
        grown |= np.roll(occ, 1, axis=ax) | np.roll(occ, -1, axis=ax)
    free = ~grown
    if not free.any():
        free.flat[0] = True
    geom = GridGeometry(shape, spacing, (0.0,) * len(shape))
    return signed_distance(free, geom)


def any_free_node(omap: OccupancyMap, seed=0):
    free_flat = np.flatnonzero(omap.free_mask)
    rng = np.random.default_rng(seed)
    pick = int(free_flat[int(rng.integers(free_flat.size))])
    return tuple(int(i) for i in np.unravel_index(pick, omap.geometry.shape))


# ---------------------------------------------------------------------------
# independent numerical oracles


def brute_signed_distance(free: np.ndarray, spacing: float) -> np.ndarray:
    """Nearest opposite-sign node by exhaustive scan."""
    free = free.astype(bool)
    pos = np.argwhere(free).astype(np.float64)
    neg = np.argwhere(~free).astype(np.float64)
    out = np.empty(free.shape, dtype=np.float64)
    for idx in np.ndindex(free.shape):
        here = np.asarray(idx, dtype=np.float64)
        if free[idx]:
            d = np.sqrt(((neg - here) ** 2).sum(axis=1).min()) if len(neg) else np.inf
            out[idx] = d * spacing
        else:
            d = np.sqrt(((pos - here) ** 2).sum(axis=1).min()) if len(pos) else np.inf
            out[idx] = -d * spacing
    return out


def interp_product_form(values: np.ndarray, point) -> float:
    """Multilinear interpolation via explicit corner-weight products."""
    point = np.asarray(point, dtype=np.float64)
    lo = np.floor(point).astype(int)
    lo = np.minimum(np.maximum(lo, 0), np.asarray(values.shape) - 2)
    frac = point - lo
    total = 0.0
    for corner in np.ndindex(*(2,) * values.ndim):
        w = 1.0
        for ax, c in enumerate(corner):
            w *= frac[ax] if c else 1.0 - frac[ax]
        total += w * values[tuple(lo + np.asarray(corner))]
    return total


def interp_batch(values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Vectorized product-form multilinear interpolation at (N, dim) points."""
    pts = np.asarray(pts, dtype=np.float64)
    lo = np.floor(pts).astype(int)
    lo = np.minimum(np.maximum(lo, 0), np.asarray(values.shape) - 2)
    frac = pts - lo
    out = np.zeros(len(pts))
    for corner in np.ndindex(*(2,) * values.ndim):
        w = np.ones(len(pts))
        for ax, c in enumerate(corner):
            w *= frac[:, ax] if c else 1.0 - frac[:, ax]
        idx = tuple((lo[:, ax] + c) for ax, c in enumerate(corner))
        out += w * values[idx]
    return out


def ray_min_oracle(omap: OccupancyMap, a, b, step_frac=0.125) -> float:
    """Segment minimum of interpolated phi, sampled every step_frac * dx of
    arc length, endpoints included."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dist = float(np.linalg.norm(b - a))  # grid units; spacing cancels in t
    n = max(1, int(np.ceil(dist / step_frac)))
    t = np.linspace(0.0, 1.0, n + 1)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return float(interp_batch(omap.phi.values, pts).min())


def psi_oracle_field(omap: OccupancyMap, x, step_frac=0.125) -> np.ndarray:
    """Dense-sampling visibility oracle over the whole grid."""
    out = np.empty(omap.geometry.shape)
    for node in np.ndindex(omap.geometry.shape):
        out[node] = ray_min_oracle(omap, x, node, step_frac)
    return out


def seen_set(omap: OccupancyMap, psi: np.ndarray) -> np.ndarray:
    """Boolean mask of free nodes with positive accumulated visibility."""
    return omap.free_mask & (psi > 0.0)
