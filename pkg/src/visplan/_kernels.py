"""Compiled ray-marching kernels.

Everything here works in grid coordinates (node indices as floats) so the
sample positions along a segment are independent of spacing and origin, and
endpoint samples hit nodes exactly.  Each segment is always marched from its
lower row-major endpoint to the higher one, which makes the sampled position
sequence, and therefore every sign decision, a function of the unordered
node pair alone.  The counting kernels below rely on that: they must agree
bit for bit with the reference path that evaluates full visibility fields.

_seg_min* and _seg_visible* are manually kept in lockstep: identical sample
positions, identical interpolation arithmetic, no fastmath.  Touch one, touch
both.  The visible kernels may hop over samples that a distance bound proves
positive (see _seg_visible2); that changes which samples they evaluate but
provably never the boolean they return, so sign agreement with the min
kernels stays exact.
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np

# The thread cap is fixed when numba first initializes; raise it before the
# import so worker counts above the detected CPU count remain selectable.
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(os.cpu_count() or 1, 8)))
# workqueue never depends on system TBB/OpenMP versions and keeps scheduling
# out of the determinism story entirely (results are worker-independent by
# construction, but quiet logs matter too).
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    import numba

from numba import njit, prange

# Samples per unit of grid distance along a sight line.  Two per node step
# keeps the arc-length spacing at or below half the grid spacing.
MARCH_RATE = 2.0

MAX_WORKERS = int(numba.config.NUMBA_NUM_THREADS)

# Hop margins for the sign kernels, in grid units: 1.5 * sqrt(dim).  See the
# derivation in _seg_visible2.
HOP_MARGIN2 = 1.5 * math.sqrt(2.0)
HOP_MARGIN3 = 1.5 * math.sqrt(3.0)


def set_workers(n: int) -> int:
    """Set the parallel worker count, clamped to the available cap.

    Returns the effective count.  Results of every kernel are independent of
    this setting; it only affects wall time.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    eff = min(n, MAX_WORKERS)
    numba.set_num_threads(eff)
    return eff


def current_workers() -> int:
    return int(numba.get_num_threads())


@njit(cache=True, inline="always")
def _interp2(v, pr, pc):
    n0, n1 = v.shape
    i = int(math.floor(pr))
    j = int(math.floor(pc))
    if i < 0:
        i = 0
    elif i > n0 - 2:
        i = n0 - 2
    if j < 0:
        j = 0
    elif j > n1 - 2:
        j = n1 - 2
    fi = pr - i
    fj = pc - j
    v0 = v[i, j] + fj * (v[i, j + 1] - v[i, j])
    v1 = v[i + 1, j] + fj * (v[i + 1, j + 1] - v[i + 1, j])
    return v0 + fi * (v1 - v0)


@njit(cache=True, inline="always")
def _interp3(v, pr, pc, pd):
    n0, n1, n2 = v.shape
    i = int(math.floor(pr))
    j = int(math.floor(pc))
    k = int(math.floor(pd))
    if i < 0:
        i = 0
    elif i > n0 - 2:
        i = n0 - 2
    if j < 0:
        j = 0
    elif j > n1 - 2:
        j = n1 - 2
    if k < 0:
        k = 0
    elif k > n2 - 2:
        k = n2 - 2
    fi = pr - i
    fj = pc - j
    fk = pd - k
    v00 = v[i, j, k] + fk * (v[i, j, k + 1] - v[i, j, k])
    v01 = v[i, j + 1, k] + fk * (v[i, j + 1, k + 1] - v[i, j + 1, k])
    v10 = v[i + 1, j, k] + fk * (v[i + 1, j, k + 1] - v[i + 1, j, k])
    v11 = v[i + 1, j + 1, k] + fk * (v[i + 1, j + 1, k + 1] - v[i + 1, j + 1, k])
    v0 = v00 + fj * (v01 - v00)
    v1 = v10 + fj * (v11 - v10)
    return v0 + fi * (v1 - v0)


@njit(cache=True)
def _seg_min2(v, ar, ac, br, bc, rate):
    m = v[ar, ac]
    vb = v[br, bc]
    if vb < m:
        m = vb
    dr = float(br - ar)
    dc = float(bc - ac)
    n = int(math.ceil(rate * math.sqrt(dr * dr + dc * dc)))
    for i in range(1, n):
        t = i / n
        val = _interp2(v, ar + t * dr, ac + t * dc)
        if val < m:
            m = val
    return m


@njit(cache=True)
def _seg_visible2(v, ar, ac, br, bc, rate, inv):
    # inv = 1/dx; pass 0.0 to disable hopping.  Requires v to be a signed
    # distance field in world units, so every node value is bounded above by
    # the world distance to every non-positive node.  A sample at p with
    # interpolated value val is a convex combination of its cell corners,
    # whose mean distance from p is at most sqrt(2)/2 grid units, so every
    # non-positive node sits at grid distance >= val/dx - sqrt(2)/2 from p.
    # A sample within val/dx - 1.5*sqrt(2) of p therefore has all four cell
    # corners positive (they are within sqrt(2) of it), which makes its
    # interpolant positive: its sign never needs checking.
    if v[ar, ac] <= 0.0:
        return False
    if v[br, bc] <= 0.0:
        return False
    dr = float(br - ar)
    dc = float(bc - ac)
    dist = math.sqrt(dr * dr + dc * dc)
    n = int(math.ceil(rate * dist))
    if n <= 1:
        return True
    nod = n / dist
    i = 1
    while i < n:
        t = i / n
        val = _interp2(v, ar + t * dr, ac + t * dc)
        if val <= 0.0:
            return False
        skip = int((val * inv - HOP_MARGIN2) * nod)
        if skip > 0:
            i += skip
        i += 1
    return True


@njit(cache=True)
def _seg_min3(v, ar, ac, ad, br, bc, bd, rate):
    m = v[ar, ac, ad]
    vb = v[br, bc, bd]
    if vb < m:
        m = vb
    dr = float(br - ar)
    dc = float(bc - ac)
    dd = float(bd - ad)
    n = int(math.ceil(rate * math.sqrt(dr * dr + dc * dc + dd * dd)))
    for i in range(1, n):
        t = i / n
        val = _interp3(v, ar + t * dr, ac + t * dc, ad + t * dd)
        if val < m:
            m = val
    return m


@njit(cache=True)
def _seg_visible3(v, ar, ac, ad, br, bc, bd, rate, inv):
    # inv = 1/dx; same hop bound as _seg_visible2 with sqrt(3) margins.
    if v[ar, ac, ad] <= 0.0:
        return False
    if v[br, bc, bd] <= 0.0:
        return False
    dr = float(br - ar)
    dc = float(bc - ac)
    dd = float(bd - ad)
    dist = math.sqrt(dr * dr + dc * dc + dd * dd)
    n = int(math.ceil(rate * dist))
    if n <= 1:
        return True
    nod = n / dist
    i = 1
    while i < n:
        t = i / n
        val = _interp3(v, ar + t * dr, ac + t * dc, ad + t * dd)
        if val <= 0.0:
            return False
        skip = int((val * inv - HOP_MARGIN3) * nod)
        if skip > 0:
            i += skip
        i += 1
    return True


@njit(cache=True, parallel=True)
def _vis_field2(v, xr, xc, rate, out):
    n0, n1 = v.shape
    xf = xr * n1 + xc
    for f in prange(n0 * n1):
        r = f // n1
        c = f % n1
        if xf <= f:
            out[r, c] = _seg_min2(v, xr, xc, r, c, rate)
        else:
            out[r, c] = _seg_min2(v, r, c, xr, xc, rate)


@njit(cache=True, parallel=True)
def _vis_field3(v, xr, xc, xd, rate, out):
    n0, n1, n2 = v.shape
    xf = (xr * n1 + xc) * n2 + xd
    for f in prange(n0 * n1 * n2):
        r = f // (n1 * n2)
        rem = f % (n1 * n2)
        c = rem // n2
        d = rem % n2
        if xf <= f:
            out[r, c, d] = _seg_min3(v, xr, xc, xd, r, c, d, rate)
        else:
            out[r, c, d] = _seg_min3(v, r, c, d, xr, xc, xd, rate)


@njit(cache=True, parallel=True)
def _gain_counts2(v, cand_flat, unseen_flat, rate, inv, out):
    n1 = v.shape[1]
    nu = unseen_flat.shape[0]
    u_r = np.empty(nu, dtype=np.int64)
    u_c = np.empty(nu, dtype=np.int64)
    for ui in range(nu):
        uf = unseen_flat[ui]
        u_r[ui] = uf // n1
        u_c[ui] = uf % n1
    for ci in prange(cand_flat.shape[0]):
        cf = cand_flat[ci]
        cr = cf // n1
        cc = cf % n1
        cnt = 0
        for ui in range(nu):
            uf = unseen_flat[ui]
            if cf <= uf:
                vis = _seg_visible2(v, cr, cc, u_r[ui], u_c[ui], rate, inv)
            else:
                vis = _seg_visible2(v, u_r[ui], u_c[ui], cr, cc, rate, inv)
            if vis:
                cnt += 1
        out[ci] = cnt


@njit(cache=True, parallel=True)
def _gain_counts3(v, cand_flat, unseen_flat, rate, inv, out):
    n1 = v.shape[1]
    n2 = v.shape[2]
    nu = unseen_flat.shape[0]
    u_r = np.empty(nu, dtype=np.int64)
    u_c = np.empty(nu, dtype=np.int64)
    u_d = np.empty(nu, dtype=np.int64)
    for ui in range(nu):
        uf = unseen_flat[ui]
        u_r[ui] = uf // (n1 * n2)
        rem = uf % (n1 * n2)
        u_c[ui] = rem // n2
        u_d[ui] = rem % n2
    for ci in prange(cand_flat.shape[0]):
        cf = cand_flat[ci]
        cr = cf // (n1 * n2)
        crem = cf % (n1 * n2)
        cc = crem // n2
        cd = crem % n2
        cnt = 0
        for ui in range(nu):
            uf = unseen_flat[ui]
            if cf <= uf:
                vis = _seg_visible3(v, cr, cc, cd, u_r[ui], u_c[ui], u_d[ui], rate, inv)
            else:
                vis = _seg_visible3(v, u_r[ui], u_c[ui], u_d[ui], cr, cc, cd, rate, inv)
            if vis:
                cnt += 1
        out[ci] = cnt


@njit(cache=True, parallel=True)
def _row_fill2(v, new_flat, slots, u_flat, alive, rate, inv, rows, counts):
    # March each first-time candidate against the still-unseen universe and
    # record which nodes it sees as bits (universe position -> bit index).
    n1 = v.shape[1]
    nu = u_flat.shape[0]
    u_r = np.empty(nu, dtype=np.int64)
    u_c = np.empty(nu, dtype=np.int64)
    for j in range(nu):
        uf = u_flat[j]
        u_r[j] = uf // n1
        u_c[j] = uf % n1
    for ci in prange(new_flat.shape[0]):
        cf = new_flat[ci]
        r = slots[ci]
        cr = cf // n1
        cc = cf % n1
        cnt = 0
        for j in range(nu):
            if alive[j] == 0:
                continue
            uf = u_flat[j]
            if cf <= uf:
                vis = _seg_visible2(v, cr, cc, u_r[j], u_c[j], rate, inv)
            else:
                vis = _seg_visible2(v, u_r[j], u_c[j], cr, cc, rate, inv)
            if vis:
                rows[r, j >> 6] |= np.uint64(1) << np.uint64(j & 63)
                cnt += 1
        counts[r] = cnt


@njit(cache=True, parallel=True)
def _row_fill3(v, new_flat, slots, u_flat, alive, rate, inv, rows, counts):
    n1 = v.shape[1]
    n2 = v.shape[2]
    nu = u_flat.shape[0]
    u_r = np.empty(nu, dtype=np.int64)
    u_c = np.empty(nu, dtype=np.int64)
    u_d = np.empty(nu, dtype=np.int64)
    for j in range(nu):
        uf = u_flat[j]
        u_r[j] = uf // (n1 * n2)
        rem = uf % (n1 * n2)
        u_c[j] = rem // n2
        u_d[j] = rem % n2
    for ci in prange(new_flat.shape[0]):
        cf = new_flat[ci]
        r = slots[ci]
        cr = cf // (n1 * n2)
        crem = cf % (n1 * n2)
        cc = crem // n2
        cd = crem % n2
        cnt = 0
        for j in range(nu):
            if alive[j] == 0:
                continue
            uf = u_flat[j]
            if cf <= uf:
                vis = _seg_visible3(v, cr, cc, cd, u_r[j], u_c[j], u_d[j], rate, inv)
            else:
                vis = _seg_visible3(v, u_r[j], u_c[j], u_d[j], cr, cc, cd, rate, inv)
            if vis:
                rows[r, j >> 6] |= np.uint64(1) << np.uint64(j & 63)
                cnt += 1
        counts[r] = cnt


@njit(cache=True, parallel=True)
def _row_drop(rows, counts, n_rows, dead):
    # Strike newly seen universe positions from every existing row.
    for r in prange(n_rows):
        c = 0
        for t in range(dead.shape[0]):
            j = dead[t]
            if (rows[r, j >> 6] >> np.uint64(j & 63)) & np.uint64(1):
                c += 1
        counts[r] -= c


@njit(cache=True, parallel=True)
def _pairs_fill2(v, free_flat, rate, inv, rows):
    # Upper triangle of the all-pairs sight table: row i gets bits for j > i.
    # Each prange iteration writes only its own row, so no write races.
    n1 = v.shape[1]
    nf = free_flat.shape[0]
    f_r = np.empty(nf, dtype=np.int64)
    f_c = np.empty(nf, dtype=np.int64)
    for j in range(nf):
        ff = free_flat[j]
        f_r[j] = ff // n1
        f_c[j] = ff % n1
    for i in prange(nf):
        for j in range(i + 1, nf):
            if _seg_visible2(v, f_r[i], f_c[i], f_r[j], f_c[j], rate, inv):
                rows[i, j >> 6] |= np.uint64(1) << np.uint64(j & 63)


@njit(cache=True, parallel=True)
def _pairs_fill3(v, free_flat, rate, inv, rows):
    n1 = v.shape[1]
    n2 = v.shape[2]
    nf = free_flat.shape[0]
    f_r = np.empty(nf, dtype=np.int64)
    f_c = np.empty(nf, dtype=np.int64)
    f_d = np.empty(nf, dtype=np.int64)
    for j in range(nf):
        ff = free_flat[j]
        f_r[j] = ff // (n1 * n2)
        rem = ff % (n1 * n2)
        f_c[j] = rem // n2
        f_d[j] = rem % n2
    for i in prange(nf):
        for j in range(i + 1, nf):
            if _seg_visible3(
                v, f_r[i], f_c[i], f_d[i], f_r[j], f_c[j], f_d[j], rate, inv
            ):
                rows[i, j >> 6] |= np.uint64(1) << np.uint64(j & 63)


@njit(cache=True)
def _pairs_mirror(rows):
    # Fill the lower triangle from the upper one, plus the diagonal: a free
    # node always sees itself.  Serial on purpose; bit tests are cheap and
    # this keeps every word single-writer.
    nf = rows.shape[0]
    for j in range(nf):
        for i in range(j):
            if (rows[i, j >> 6] >> np.uint64(j & 63)) & np.uint64(1):
                rows[j, i >> 6] |= np.uint64(1) << np.uint64(i & 63)
        rows[j, j >> 6] |= np.uint64(1) << np.uint64(j & 63)


@njit(cache=True, inline="always")
def _popcnt64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + (
        (x >> np.uint64(2)) & np.uint64(0x3333333333333333)
    )
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True, parallel=True)
def _table_counts(rows, cand_pos, live_words, out):
    nw = live_words.shape[0]
    for ci in prange(cand_pos.shape[0]):
        r = cand_pos[ci]
        s = np.uint64(0)
        for w in range(nw):
            s += _popcnt64(rows[r, w] & live_words[w])
        out[ci] = np.int64(s)


def warmup() -> None:
    """Force-compile every kernel on a tiny field (noop after numba caching)."""
    v2 = np.ones((4, 4), dtype=np.float64)
    out2 = np.empty((4, 4), dtype=np.float64)
    _vis_field2(v2, 0, 0, MARCH_RATE, out2)
    _gain_counts2(
        v2,
        np.zeros(1, dtype=np.int64),
        np.arange(16, dtype=np.int64),
        MARCH_RATE,
        1.0,
        np.empty(1, dtype=np.int64),
    )
    v3 = np.ones((4, 4, 4), dtype=np.float64)
    out3 = np.empty((4, 4, 4), dtype=np.float64)
    _vis_field3(v3, 0, 0, 0, MARCH_RATE, out3)
    _gain_counts3(
        v3,
        np.zeros(1, dtype=np.int64),
        np.arange(64, dtype=np.int64),
        MARCH_RATE,
        1.0,
        np.empty(1, dtype=np.int64),
    )
    rows = np.zeros((1, 1), dtype=np.uint64)
    cnts = np.zeros(1, dtype=np.int64)
    one = np.zeros(1, dtype=np.int64)
    alive = np.ones(16, dtype=np.uint8)
    _row_fill2(v2, one, one.astype(np.int32), np.arange(16, dtype=np.int64),
               alive, MARCH_RATE, 1.0, rows, cnts)
    rows3 = np.zeros((1, 1), dtype=np.uint64)
    _row_fill3(v3, one, one.astype(np.int32), np.arange(64, dtype=np.int64)[:16],
               alive, MARCH_RATE, 1.0, rows3, cnts)
    _row_drop(rows, cnts, 1, np.arange(4, dtype=np.int64))
