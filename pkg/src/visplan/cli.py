"""Command-line surface: reproducible survey/explore runs, gain-field dumps,
dataset generation, frequency aggregation, and the art-gallery comparison.

Exit codes: 0 success, 1 runtime failure (diagnostic on stderr), 2 usage
error.  Trace files are byte-stable across identical invocations; wall-clock
entries are written as zeros unless --timing is passed, so determinism checks
can hash the output directly.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .dataset import generate_dataset, write_rfa
from .errors import VisPlanError
from .gain import exact_gain_field
from .grid import GridGeometry, OccupancyMap, signed_distance
from .planner import (
    PlanTrace,
    StopRule,
    frequency_map,
    make_estimator,
    run_episode,
)
from .scenes import (
    FAMILIES,
    SceneRecipe,
    derive_seed,
    generate_scene,
    gallery_bounds,
    geometry_for_polygon,
    load_mask,
    load_polygon,
    rasterize_gallery,
    write_pgm,
)
from .visibility import accumulate, initial_state, residual, visibility_field

# Gain threshold defaults per estimator kind: the exact estimator's volume
# gain is compared after normalization by |Omega_k|, the others are already
# in [0, 1]; random walks should not self-terminate on low gain at all.
DEFAULT_EPS_GAIN = {"exact": 1e-3, "random": 0.0, "external": 1e-3}


def _parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_map_source(p: argparse.ArgumentParser, families=FAMILIES) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--map", help="occupancy image (PGM/PNG), dark = free")
    src.add_argument("--polygon", help="gallery polygon JSON")
    src.add_argument("--recipe", choices=families, help="generate a scene family")
    p.add_argument("--shape", type=_parse_ints, default=(128, 128),
                   help="grid shape for --recipe (default 128,128)")
    p.add_argument("--map-seed", type=int, default=None,
                   help="scene seed for --recipe (default: derived from --seed)")
    p.add_argument("--threshold", type=int, default=127,
                   help="obstacle threshold for --map (default 127)")
    p.add_argument("--dx", type=float, default=1.0, help="grid spacing (default 1)")


def _add_planner_flags(p: argparse.ArgumentParser, max_steps: int = 64,
                       delta_res: float = 0.0) -> None:
    p.add_argument("--eps-gain", type=float, default=None,
                   help="stop when normalized max gain drops below this "
                        "(default: 1e-3 exact/external, 0 random)")
    p.add_argument("--delta-res", type=float, default=delta_res,
                   help=f"stop when residual drops below this (default {delta_res})")
    p.add_argument("--max-steps", type=int, default=max_steps,
                   help=f"vantage budget including the start (default {max_steps})")
    p.add_argument("--x0", type=_parse_ints, default=None,
                   help="start node as i,j(,k); default: seeded random free node")
    p.add_argument("--snapshot-every", type=int, default=0, metavar="N",
                   help="write psi/boundary RFA snapshots every N steps")
    p.add_argument("--timing", action="store_true",
                   help="record real wall-clock times in the trace "
                        "(off by default to keep outputs byte-stable)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel worker cap (results never depend on it)")
    p.add_argument("--out-dir", default=".", help="output directory (default .)")
    p.add_argument("--pgm", action="store_true",
                   help="also write min-max scaled PGM previews (2-D only)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="visplan",
        description="Level-set visibility planning: greedy vantage-point "
                    "selection over exact or estimated gain fields.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("survey", help="known-map greedy coverage (exact gain)")
    _add_map_source(p)
    _add_planner_flags(p)
    _add_common(p)

    p = sub.add_parser("explore", help="unknown-map greedy with a chosen estimator")
    _add_map_source(p)
    p.add_argument("--estimator", default="exact",
                   help="exact | random | external:<command> (default exact)")
    _add_planner_flags(p)
    _add_common(p)

    p = sub.add_parser("gainmap", help="one-shot exact gain field for a vantage list")
    _add_map_source(p)
    p.add_argument("--vantage", type=_parse_ints, action="append", required=True,
                   help="vantage node i,j(,k); repeat for several")
    p.add_argument("--mode", choices=("surveillance", "exploration"),
                   default="surveillance")
    _add_common(p)

    p = sub.add_parser("dataset", help="emit training pairs from greedy episodes")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--maps", type=int, default=10, help="number of maps (default 10)")
    p.add_argument("--episodes", type=int, default=1, help="episodes per map")
    p.add_argument("--steps", type=int, default=4, help="steps (pairs) per episode")
    p.add_argument("--shape", type=_parse_ints, default=(128, 128))
    p.add_argument("--dx", type=float, default=1.0)
    _add_common(p)

    p = sub.add_parser("frequency", help="aggregate many explore runs into a "
                                         "vantage frequency map")
    _add_map_source(p)
    p.add_argument("--estimator", default="random")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--sigma", type=float, default=None,
                   help="Gaussian width in world units (default 2*dx)")
    _add_planner_flags(p, max_steps=16)
    _add_common(p)

    p = sub.add_parser("gallery", help="art-gallery bounds vs greedy vantage count")
    p.add_argument("--polygon", required=True)
    p.add_argument("--dx", type=float, default=1.0)
    _add_planner_flags(p, max_steps=40, delta_res=1e-3)
    _add_common(p)

    return ap


def _build_map(args) -> tuple[OccupancyMap, dict]:
    """Resolve the map source flags into an OccupancyMap plus config echo."""
    dx = args.dx
    if args.map:
        free = load_mask(args.map, args.threshold)
        geom = GridGeometry(free.shape, dx, (0.0,) * free.ndim)
        return signed_distance(free, geom), {"map": args.map, "dx": dx,
                                             "threshold": args.threshold}
    if args.polygon:
        poly = load_polygon(args.polygon)
        geom = geometry_for_polygon(poly, dx)
        free = rasterize_gallery(poly, geom)
        return signed_distance(free, geom), {"polygon": args.polygon, "dx": dx}
    map_seed = args.map_seed if args.map_seed is not None else derive_seed(args.seed, "map")
    recipe = SceneRecipe(args.recipe, map_seed, tuple(args.shape), spacing=dx)
    free = generate_scene(recipe)
    return signed_distance(free, recipe.geometry), {
        "recipe": args.recipe, "shape": list(recipe.shape),
        "map_seed": map_seed, "dx": dx,
    }


def _pick_x0(args, omap: OccupancyMap) -> tuple[int, ...]:
    if args.x0 is not None:
        return tuple(args.x0)
    free_flat = np.flatnonzero(omap.free_mask)
    rng = np.random.default_rng(derive_seed(args.seed, "x0"))
    pick = int(free_flat[int(rng.integers(free_flat.size))])
    return tuple(int(i) for i in np.unravel_index(pick, omap.geometry.shape))


def _resolve_stop(args, estimator_kind: str) -> StopRule:
    eps = args.eps_gain
    if eps is None:
        eps = DEFAULT_EPS_GAIN[estimator_kind]
    return StopRule(max_steps=args.max_steps, eps_gain=eps,
                    delta_residual=args.delta_res)


def _trace_json(trace: PlanTrace, config: dict, timing: bool) -> str:
    doc = {
        "config": config,
        "vantages": [list(v.node) for v in trace.vantages],
        "residuals": trace.residuals,
        "max_gains": trace.max_gains,
        "stop_reason": trace.stop_reason,
        "wall_ms": trace.wall_ms if timing else [0.0] * len(trace.wall_ms),
    }
    return json.dumps(doc, indent=2) + "\n"


def _snapshot_observer(out_dir: Path, every: int):
    if every <= 0:
        return None

    def observer(state):
        if state.k % every == 0:
            write_rfa(state.psi_cum, out_dir / f"psi_{state.k:04d}.rfa")
            write_rfa(state.boundary, out_dir / f"bnd_{state.k:04d}.rfa")

    return observer


def _episode_config(args, extra: dict) -> dict:
    cfg = {
        "command": args.command,
        "seed": args.seed,
        "eps_gain": args.eps_gain,
        "delta_residual": args.delta_res,
        "max_steps": args.max_steps,
        "workers": args.workers,
    }
    cfg.update(extra)
    return cfg


def _run_planner_command(args, mode: str) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    omap, map_cfg = _build_map(args)
    if mode == "surveillance":
        estimator = make_estimator("exact", workers=args.workers)
        estimator.mode = "surveillance"
        spec = "exact"
    else:
        spec = args.estimator
        estimator = make_estimator(spec, workers=args.workers)
    stop = _resolve_stop(args, estimator.kind)
    x0 = _pick_x0(args, omap)
    config = _episode_config(args, {
        **map_cfg, "estimator": spec, "mode": mode, "x0": list(x0),
        "eps_gain": stop.eps_gain,
    })
    trace = run_episode(
        omap, estimator, x0, stop, seed=args.seed,
        observer=_snapshot_observer(out_dir, args.snapshot_every),
    )
    (out_dir / "trace.json").write_text(_trace_json(trace, config, args.timing))
    print(f"{len(trace.vantages)} vantage points, residual {trace.residuals[-1]:.6e}, "
          f"stopped by {trace.stop_reason}")
    return 0


def _cmd_gainmap(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    omap, map_cfg = _build_map(args)
    vantages = [tuple(v) for v in args.vantage]
    state = initial_state(omap, vantages[0])
    for v in vantages[1:]:
        state = accumulate(state, visibility_field(omap, v), v)
    field = exact_gain_field(omap, state, args.mode, workers=args.workers)
    write_rfa(field.values, out_dir / "gain.rfa")
    write_rfa(state.psi_cum, out_dir / "psi.rfa")
    write_rfa(state.boundary, out_dir / "boundary.rfa")
    config = {
        "command": "gainmap", "seed": args.seed, **map_cfg,
        "vantages": [list(v) for v in vantages], "mode": args.mode,
        "workers": args.workers,
    }
    (out_dir / "run.json").write_text(json.dumps(config, indent=2) + "\n")
    if args.pgm:
        if omap.geometry.dim == 2:
            write_pgm(field.values.values, out_dir / "gain.pgm")
            write_pgm(state.psi_cum.values, out_dir / "psi.pgm")
        else:
            print("--pgm ignored for 3-D fields", file=sys.stderr)
    print(f"gain field written; max gain {field.max:.6g}, "
          f"residual {residual(state.psi_cum, omap):.6e}")
    return 0


def _cmd_dataset(args) -> int:
    shape = tuple(args.shape)
    recipes = [
        SceneRecipe(args.family, derive_seed(args.seed, "map", i), shape,
                    spacing=args.dx)
        for i in range(args.maps)
    ]
    manifest = generate_dataset(
        recipes, args.episodes, args.steps, args.out_dir, seed=args.seed
    )
    print(f"{manifest['n_pairs']} pairs written to {args.out_dir}")
    return 0


def _cmd_frequency(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    omap, map_cfg = _build_map(args)
    estimator = make_estimator(args.estimator, workers=args.workers)
    stop = _resolve_stop(args, estimator.kind)
    sigma = args.sigma if args.sigma is not None else 2.0 * args.dx
    free_flat = np.flatnonzero(omap.free_mask)
    traces = []
    for run in range(args.runs):
        run_seed = derive_seed(args.seed, "run", run)
        rng = np.random.default_rng(run_seed)
        x0 = np.unravel_index(int(free_flat[int(rng.integers(free_flat.size))]),
                              omap.geometry.shape)
        traces.append(run_episode(omap, estimator, x0, stop, seed=run_seed))
    freq = frequency_map(traces, sigma)
    write_rfa(freq, out_dir / "frequency.rfa")
    config = _episode_config(args, {
        **map_cfg, "estimator": args.estimator, "runs": args.runs,
        "sigma": sigma, "eps_gain": stop.eps_gain,
    })
    (out_dir / "run.json").write_text(json.dumps(config, indent=2) + "\n")
    if args.pgm and omap.geometry.dim == 2:
        write_pgm(freq.values, out_dir / "frequency.pgm")
    print(f"frequency map over {args.runs} runs written; peak {freq.max():.4f}")
    return 0


def _cmd_gallery(args) -> int:
    poly = load_polygon(args.polygon)
    bounds = gallery_bounds(poly)
    geom = geometry_for_polygon(poly, args.dx)
    free = rasterize_gallery(poly, geom)
    omap = signed_distance(free, geom)
    if args.x0 is not None:
        x0 = tuple(args.x0)
    else:
        # deterministic default: the free node nearest the free-space centroid
        nodes = np.argwhere(omap.free_mask)
        centroid = nodes.mean(axis=0)
        x0 = tuple(int(i) for i in nodes[np.argmin(((nodes - centroid) ** 2).sum(1))])
    estimator = make_estimator("exact", workers=args.workers)
    stop = _resolve_stop(args, "exact")
    trace = run_episode(omap, estimator, x0, stop, seed=args.seed)
    print(
        f"n={bounds.n} h={bounds.h} reflex={bounds.reflex} "
        f"chvatal={bounds.chvatal} frontier={bounds.frontier} "
        f"greedy={len(trace.vantages)} residual={trace.residuals[-1]:.6e} "
        f"stop={trace.stop_reason}"
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers is not None:
        try:
            _kernels.set_workers(args.workers)
        except ValueError as e:
            parser.error(str(e))
    try:
        if args.command == "survey":
            return _run_planner_command(args, "surveillance")
        if args.command == "explore":
            return _run_planner_command(args, "exploration")
        if args.command == "gainmap":
            return _cmd_gainmap(args)
        if args.command == "dataset":
            return _cmd_dataset(args)
        if args.command == "frequency":
            return _cmd_frequency(args)
        if args.command == "gallery":
            return _cmd_gallery(args)
        parser.error(f"unknown command {args.command!r}")
    except (VisPlanError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
