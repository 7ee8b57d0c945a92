"""Environment ingestion and synthesis.

Covers binary occupancy images (PGM/PNG), polygon galleries with even-odd
rasterization and art-gallery combinatorics, and seeded random scene
families used for benchmarks and training data.  All masks returned here use
the convention True = free space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import (
    DegenerateMapError,
    FormatError,
    GenerationFailureError,
    InvalidPolygonError,
)
from .grid import GridGeometry

FAMILIES = ("radial", "disks", "blocks", "primitives3d")

# Connectivity invariant every generated mask must satisfy.
MIN_FREE_FRACTION = 0.10
GENERATION_ATTEMPTS = 100

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(x: int) -> int:
    """splitmix64 finalizer."""
    x &= _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def derive_seed(root: int, *indices) -> int:
    """Fold indices (ints or short strings) into a child seed, splitmix-style."""
    s = _mix64(int(root) ^ _GOLDEN)
    for ix in indices:
        if isinstance(ix, str):
            ix = int.from_bytes(ix.encode()[:8].ljust(8, b"\0"), "little")
        s = _mix64(s ^ ((int(ix) + 1) * _GOLDEN & _M64))
    return s


# ---------------------------------------------------------------------------
# image masks


def load_mask(path, threshold: int = 127) -> np.ndarray:
    """Read a single-channel image as a free-space mask.

    Pixels strictly above the threshold are obstacles (building convention for
    label rasters); everything else is free.  Row 0 of the mask is the top
    image row.
    """
    path = Path(path)
    try:
        img = Image.open(path)
    except (OSError, ValueError) as e:
        raise FormatError(f"cannot read image {path}: {e}")
    with img:
        if getattr(img, "n_frames", 1) != 1:
            raise FormatError(f"{path} is multi-frame; expected a single image")
        if img.mode not in ("1", "L", "I", "I;16", "P"):
            try:
                img = img.convert("L")
            except ValueError as e:
                raise FormatError(f"{path}: cannot convert mode {img.mode}: {e}")
        elif img.mode != "L":
            img = img.convert("L")
        arr = np.asarray(img)
    return arr <= threshold


def write_mask(free_mask: np.ndarray, path) -> None:
    """Write a mask as a binary PGM, obstacles white.  Inverse of load_mask."""
    mask = np.asarray(free_mask)
    if mask.dtype != np.bool_ or mask.ndim != 2:
        raise ValueError("expected a 2-D boolean mask")
    img = Image.fromarray(np.where(mask, 0, 255).astype(np.uint8), mode="L")
    img.save(Path(path))


def write_pgm(values: np.ndarray, path) -> None:
    """Min-max scale a 2-D field to 8 bits and write a PGM, for quick looks."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 2:
        raise ValueError("PGM export needs a 2-D array")
    lo, hi = float(vals.min()), float(vals.max())
    scaled = np.zeros(vals.shape) if hi == lo else (vals - lo) / (hi - lo)
    Image.fromarray((scaled * 255).round().astype(np.uint8), mode="L").save(Path(path))


# ---------------------------------------------------------------------------
# polygons


def _loop_array(vertices, name: str) -> np.ndarray:
    arr = np.asarray(vertices, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise InvalidPolygonError(f"{name} must be >= 3 planar points")
    if not np.all(np.isfinite(arr)):
        raise InvalidPolygonError(f"{name} has non-finite coordinates")
    if np.any(np.all(arr == np.roll(arr, -1, axis=0), axis=1)):
        raise InvalidPolygonError(f"{name} has repeated consecutive vertices")
    return arr


def _signed_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def _segments_intersect(a, b, c, d) -> bool:
    """True if closed segments ab and cd share any point."""
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) and o1 != 0 and o2 != 0 \
            and o3 != 0 and o4 != 0:
        return True
    if o1 == 0 and _on_segment(a, b, c):
        return True
    if o2 == 0 and _on_segment(a, b, d):
        return True
    if o3 == 0 and _on_segment(c, d, a):
        return True
    if o4 == 0 and _on_segment(c, d, b):
        return True
    return False


def _loop_edges(loop: np.ndarray):
    return [(loop[i], loop[(i + 1) % len(loop)]) for i in range(len(loop))]


def _check_simple(loop: np.ndarray, name: str) -> None:
    edges = _loop_edges(loop)
    n = len(edges)
    for i in range(n):
        for j in range(i + 1, n):
            adjacent = j == i + 1 or (i == 0 and j == n - 1)
            if adjacent:
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                raise InvalidPolygonError(f"{name} self-intersects (edges {i}, {j})")


def _even_odd_inside(points: np.ndarray, loop: np.ndarray) -> np.ndarray:
    """Even-odd rule membership for an array of points, vectorized per edge."""
    x = points[:, 0]
    y = points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    x0, y0 = loop[-1]
    for x1, y1 in loop:
        crosses = (y0 > y) != (y1 > y)
        if np.any(crosses):
            xi = x0 + (y[crosses] - y0) * (x1 - x0) / (y1 - y0)
            hit = np.zeros(len(points), dtype=bool)
            hit[crosses] = x[crosses] < xi
            inside ^= hit
        x0, y0 = x1, y1
    return inside


def _point_inside(p, loop: np.ndarray) -> bool:
    return bool(_even_odd_inside(np.asarray([p], dtype=np.float64), loop)[0])


@dataclass(frozen=True)
class PolygonGallery:
    """A simple polygon, optionally with holes.

    Orientation is normalized at construction: outer loop counter-clockwise,
    holes clockwise, so that walking any loop keeps the free interior on the
    left.
    """

    outer: np.ndarray
    holes: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        outer = _loop_array(self.outer, "outer loop")
        if abs(_signed_area(outer)) < 1e-12:
            raise InvalidPolygonError("outer loop has zero area")
        _check_simple(outer, "outer loop")
        if _signed_area(outer) < 0:
            outer = outer[::-1].copy()
        holes = []
        for hi, hole in enumerate(self.holes):
            h = _loop_array(hole, f"hole {hi}")
            if abs(_signed_area(h)) < 1e-12:
                raise InvalidPolygonError(f"hole {hi} has zero area")
            _check_simple(h, f"hole {hi}")
            if _signed_area(h) > 0:
                h = h[::-1].copy()
            holes.append(h)
        outer_edges = _loop_edges(outer)
        all_loops = [outer] + holes
        for hi, h in enumerate(holes):
            for v in h:
                if not _point_inside(v, outer):
                    raise InvalidPolygonError(f"hole {hi} is not strictly inside")
            for e in _loop_edges(h):
                for oe in outer_edges:
                    if _segments_intersect(*e, *oe):
                        raise InvalidPolygonError(f"hole {hi} touches the outer loop")
                for hj in range(hi):
                    for e2 in _loop_edges(holes[hj]):
                        if _segments_intersect(*e, *e2):
                            raise InvalidPolygonError(f"holes {hj}, {hi} intersect")
        for loop in all_loops:
            loop.setflags(write=False)
        object.__setattr__(self, "outer", outer)
        object.__setattr__(self, "holes", tuple(holes))

    @property
    def n_vertices(self) -> int:
        return len(self.outer) + sum(len(h) for h in self.holes)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.vstack([self.outer, *self.holes])
        return pts.min(axis=0), pts.max(axis=0)


def save_polygon(poly: PolygonGallery, path) -> None:
    doc = {
        "outer": poly.outer.tolist(),
        "holes": [h.tolist() for h in poly.holes],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_polygon(path) -> PolygonGallery:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read polygon {path}: {e}")
    if not isinstance(doc, dict) or "outer" not in doc:
        raise FormatError(f"{path}: expected an object with an 'outer' loop")
    return PolygonGallery(doc["outer"], tuple(doc.get("holes", [])))


def rasterize_gallery(poly: PolygonGallery, geometry: GridGeometry) -> np.ndarray:
    """Free mask of node centers inside the outer loop and outside all holes."""
    if geometry.dim != 2:
        raise ValueError("polygon rasterization is 2-D only")
    lo, hi = poly.bbox()  # (x, y); grid bounds are (y, x)
    glo, ghi = geometry.world_bounds()
    margin = 2.0 * geometry.spacing
    if np.any(lo[::-1] - glo < margin) or np.any(ghi - hi[::-1] < margin):
        raise ValueError(
            f"polygon bbox {lo}..{hi} needs a {margin} margin inside {glo}..{ghi}"
        )
    # Axis 0 of the grid is y here so masks print like images.
    yy, xx = np.meshgrid(*geometry.axis_coordinates(), indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    free = _even_odd_inside(pts, poly.outer)
    for hole in poly.holes:
        free &= ~_even_odd_inside(pts, hole)
    free = free.reshape(geometry.shape)
    if not free.any():
        raise DegenerateMapError("polygon rasterizes to no free nodes")
    return free


def geometry_for_polygon(
    poly: PolygonGallery, spacing: float, margin_nodes: int = 3
) -> GridGeometry:
    """Smallest node-aligned grid holding the polygon with the given margin."""
    spacing = float(spacing)
    lo, hi = poly.bbox()
    lo_n = np.floor(lo / spacing).astype(int) - margin_nodes
    hi_n = np.ceil(hi / spacing).astype(int) + margin_nodes
    # grid axis 0 = y, axis 1 = x
    shape = (int(hi_n[1] - lo_n[1] + 1), int(hi_n[0] - lo_n[0] + 1))
    origin = (lo_n[1] * spacing, lo_n[0] * spacing)
    return GridGeometry(shape, spacing, origin)


@dataclass(frozen=True)
class GalleryBounds:
    n: int
    h: int
    reflex: int
    chvatal: int
    frontier: int


def _reflex_count(loop: np.ndarray) -> int:
    """Right turns while walking a loop with the interior on the left."""
    prev = np.roll(loop, 1, axis=0)
    nxt = np.roll(loop, -1, axis=0)
    cross = (loop[:, 0] - prev[:, 0]) * (nxt[:, 1] - loop[:, 1]) - (
        loop[:, 1] - prev[:, 1]
    ) * (nxt[:, 0] - loop[:, 0])
    return int(np.count_nonzero(cross < 0.0))


def gallery_bounds(poly: PolygonGallery) -> GalleryBounds:
    """Vertex/reflex counts and the classical guard-number bounds."""
    n = poly.n_vertices
    h = len(poly.holes)
    reflex = _reflex_count(poly.outer) + sum(_reflex_count(hl) for hl in poly.holes)
    return GalleryBounds(
        n=n, h=h, reflex=reflex, chvatal=(n + h) // 3, frontier=reflex + 1
    )


def convex_room(width: float = 20.0, height: float = 12.0) -> PolygonGallery:
    """Axis-aligned rectangular room, edges off the integer lattice so no node
    center lands on the boundary."""
    w, h = float(width), float(height)
    return PolygonGallery(
        [[0.5, 0.5], [w + 0.5, 0.5], [w + 0.5, h + 0.5], [0.5, h + 0.5]]
    )


def comb_gallery(
    teeth: int = 10,
    tooth_w: float = 7.0,
    notch_depth: float = 22.0,
    body_h: float = 26.0,
    jog_w: float = 8.0,
    jog_h: float = 20.0,
    arc_vertices: int = 16,
    arc_depth: float = 2.0,
) -> PolygonGallery:
    """Comb-shaped gallery: notched top edge, a jog on the right flank, and a
    gently bowed bottom wall.

    Defaults give 58 vertices with 19 reflex angles: 2 reflex per notch mouth
    floor (9 notches), plus 1 at the jog.  The bottom arc only adds convex
    vertices, padding the count without touching the reflex budget.
    """
    if teeth < 2:
        raise ValueError("need at least 2 teeth")
    notches = teeth - 1
    span = (2 * teeth - 1) * tooth_w  # teeth and notches alternate, equal width
    w = span + jog_w
    h = notch_depth + body_h
    off = 0.5  # keep every edge off node centers at unit spacing

    verts: list[list[float]] = [[off, off]]
    for i in range(1, arc_vertices + 1):
        x = w * i / (arc_vertices + 1)
        verts.append([off + x, off - arc_depth * math.sin(math.pi * i / (arc_vertices + 1))])
    verts.append([off + w, off])            # bottom-right
    verts.append([off + w, off + jog_h])    # jog outer corner
    verts.append([off + span, off + jog_h])  # jog inner corner (reflex)
    verts.append([off + span, off + h])     # top-right
    for j in range(notches - 1, -1, -1):    # walk the top edge right to left
        x_r = (2 * j + 2) * tooth_w
        x_l = (2 * j + 1) * tooth_w
        verts.append([off + x_r, off + h])
        verts.append([off + x_r, off + body_h])
        verts.append([off + x_l, off + body_h])
        verts.append([off + x_l, off + h])
    verts.append([off, off + h])            # top-left
    return PolygonGallery(verts)


# ---------------------------------------------------------------------------
# random scene families


@dataclass(frozen=True)
class SceneRecipe:
    """Seeded description of one synthetic map."""

    family: str
    seed: int
    shape: tuple[int, ...]
    spacing: float = 1.0
    origin: tuple[float, ...] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        shape = tuple(int(m) for m in self.shape)
        want_dim = 3 if self.family == "primitives3d" else 2
        if len(shape) != want_dim:
            raise ValueError(f"{self.family} wants {want_dim}-D shapes, got {shape}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "seed", int(self.seed))
        # geometry ctor re-validates spacing/origin
        object.__setattr__(self, "origin", None if self.origin is None
                           else tuple(float(c) for c in self.origin))
        _ = self.geometry

    @property
    def geometry(self) -> GridGeometry:
        origin = self.origin if self.origin is not None else (0.0,) * len(self.shape)
        return GridGeometry(self.shape, self.spacing, origin)


def _rint(rng: np.random.Generator, lohi) -> int:
    """Inclusive integer range draw; (a, a) is a valid degenerate range."""
    lo, hi = int(lohi[0]), int(lohi[1])
    return int(rng.integers(lo, hi + 1))


def _free_ok(free: np.ndarray) -> bool:
    n_free = int(np.count_nonzero(free))
    if n_free < MIN_FREE_FRACTION * free.size:
        return False
    _, n_comp = ndimage.label(free)
    return n_comp == 1


def _gen_radial(rng: np.random.Generator, shape, params) -> np.ndarray:
    n0, n1 = shape
    lobes = _rint(rng, params.get("lobes", (3, 8)))
    base = rng.uniform(*params.get("base_frac", (0.35, 0.6)))
    cy, cx = (n0 - 1) / 2.0, (n1 - 1) / 2.0
    radius = min(n0, n1) / 2.0 - 3.0
    amps = rng.uniform(0.0, 1.0, lobes) * 0.5 ** np.arange(1, lobes + 1)
    phases = rng.uniform(0.0, 2.0 * np.pi, lobes)
    yy, xx = np.indices(shape, dtype=np.float64)
    theta = np.arctan2(yy - cy, xx - cx)
    dist = np.hypot(yy - cy, xx - cx)
    profile = base * np.ones(shape)
    for j in range(lobes):
        profile += base * amps[j] * np.cos((j + 1) * theta + phases[j])
    r_theta = np.clip(profile, 0.10, 0.92) * radius
    return ~(dist <= r_theta)


def _gen_disks(rng: np.random.Generator, shape, params) -> np.ndarray:
    n0, n1 = shape
    count = _rint(rng, params.get("count", (2, 6)))
    r_lo, r_hi = params.get("radius_frac", (0.05, 0.16))
    gap = 3.0  # free corridor between disks and off the border, in nodes
    placed: list[tuple[float, float, float]] = []
    for _ in range(count):
        for _try in range(60):
            r = rng.uniform(r_lo, r_hi) * min(n0, n1)
            margin = r + gap
            if 2 * margin >= min(n0, n1):
                continue
            cy = rng.uniform(margin, n0 - 1 - margin)
            cx = rng.uniform(margin, n1 - 1 - margin)
            if all(
                math.hypot(cy - py, cx - px) >= r + pr + gap for py, px, pr in placed
            ):
                placed.append((cy, cx, r))
                break
    obst = np.zeros(shape, dtype=bool)
    yy, xx = np.indices(shape, dtype=np.float64)
    for cy, cx, r in placed:
        obst |= np.hypot(yy - cy, xx - cx) <= r
    return ~obst


def _gen_blocks(rng: np.random.Generator, shape, params) -> np.ndarray:
    n0, n1 = shape
    pitch = _rint(rng, params.get("pitch", (18, 30)))
    street = _rint(rng, params.get("street", (4, 7)))
    p_keep = params.get("p_block", 0.8)
    max_inset = int(params.get("max_inset", 2))
    border = 2
    off0 = int(rng.integers(0, pitch))
    off1 = int(rng.integers(0, pitch))
    street_r = ((np.arange(n0) - off0) % pitch) < street
    street_c = ((np.arange(n1) - off1) % pitch) < street
    obst = np.ones(shape, dtype=bool)
    obst[street_r, :] = False
    obst[:, street_c] = False
    obst[:border, :] = obst[-border:, :] = False
    obst[:, :border] = obst[:, -border:] = False
    labels, n_blocks = ndimage.label(obst)
    slices = ndimage.find_objects(labels)
    for bi in range(n_blocks):
        sl = slices[bi]
        if rng.uniform() > p_keep:
            obst[sl] = False
            continue
        ins = rng.integers(0, max_inset + 1, size=4)
        r0, r1 = sl[0].start + ins[0], sl[0].stop - ins[1]
        c0, c1 = sl[1].start + ins[2], sl[1].stop - ins[3]
        obst[sl] = False
        if r1 > r0 and c1 > c0:
            obst[r0:r1, c0:c1] = True
    return ~obst


def _rand_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _gen_primitives3d(rng: np.random.Generator, shape, params) -> np.ndarray:
    count = _rint(rng, params.get("count", (3, 8)))
    s_lo, s_hi = params.get("size_frac", (0.10, 0.26))
    frac_lo, frac_hi = params.get("obstacle_frac", (0.02, 0.50))
    ext = min(shape)
    coords = np.stack(np.indices(shape, dtype=np.float64), axis=-1).reshape(-1, 3)
    obst = np.zeros(coords.shape[0], dtype=bool)
    for _ in range(count):
        kind = int(rng.integers(0, 4))
        half = rng.uniform(s_lo, s_hi, size=3) * ext / 2.0
        margin = float(half.max()) + 2.0
        c = np.array([rng.uniform(margin, m - 1 - margin) for m in shape])
        rot = _rand_rotation(rng)
        local = (coords - c) @ rot.T
        if kind == 0:  # cuboid
            inside = np.all(np.abs(local) <= half, axis=1)
        elif kind == 1:  # ellipsoid
            inside = ((local / half) ** 2).sum(axis=1) <= 1.0
        elif kind == 2:  # cylinder along the local z axis
            inside = (np.abs(local[:, 2]) <= half[2]) & (
                np.hypot(local[:, 0], local[:, 1]) <= half[0]
            )
        else:  # tetrahedron spanned by 4 random corners of the local box
            corners = rng.uniform(-1.0, 1.0, size=(4, 3)) * half
            inside = np.ones(coords.shape[0], dtype=bool)
            for f in range(4):
                face = np.delete(corners, f, axis=0)
                normal = np.cross(face[1] - face[0], face[2] - face[0])
                side = np.dot(corners[f] - face[0], normal)
                if side == 0.0:
                    inside[:] = False
                    break
                vals = (local - face[0]) @ normal
                inside &= (vals * side) >= 0.0
        obst |= inside
    obst = obst.reshape(shape)
    frac = obst.mean()
    if not frac_lo <= frac <= frac_hi:
        return None  # caller retries
    return ~obst


_GENERATORS = {
    "radial": _gen_radial,
    "disks": _gen_disks,
    "blocks": _gen_blocks,
    "primitives3d": _gen_primitives3d,
}


def generate_scene(recipe: SceneRecipe) -> np.ndarray:
    """Seeded-deterministic free mask for the recipe's family.

    The result always has a single connected free component holding at least
    10% of the nodes; recipes whose parameter ranges cannot deliver that
    within 100 attempts raise GenerationFailureError.
    """
    gen = _GENERATORS[recipe.family]
    for attempt in range(GENERATION_ATTEMPTS):
        rng = np.random.default_rng(derive_seed(recipe.seed, attempt))
        free = gen(rng, recipe.shape, recipe.params)
        if free is not None and _free_ok(free):
            return free
    raise GenerationFailureError(
        f"no admissible {recipe.family} scene after {GENERATION_ATTEMPTS} attempts "
        f"(seed {recipe.seed})"
    )
