#!/usr/bin/env python3
"""Mean residual curves: exact greedy vs uniform-random vantage selection.

For each generated map, runs paired episodes (same start node) with the
exact estimator and the random one, then averages r_k = |unseen|/|free|
over maps x seeds at each step.  Writes curves.json and, when matplotlib
is importable, curves.png.  A VisibilityTable is shared by all greedy
episodes on a map, which is what makes the sweep tractable.
"""

import argparse
import json
import pathlib

import numpy as np

from visplan import (
    ExactEstimator,
    RandomEstimator,
    StopRule,
    VisibilityTable,
    run_episode,
)
from visplan.grid import signed_distance
from visplan.scenes import SceneRecipe, derive_seed, generate_scene


def residual_at(trace, step):
    return trace.residuals[min(step, len(trace.residuals) - 1)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--family", default="blocks")
    ap.add_argument("--shape", type=int, default=128, help="square side (nodes)")
    ap.add_argument("--maps", type=int, default=5)
    ap.add_argument("--seeds", type=int, default=20, help="starts per map")
    ap.add_argument("--steps", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="runs/greedy_vs_random")
    args = ap.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shape = (args.shape, args.shape)

    greedy, random_ = [], []
    for mi in range(args.maps):
        recipe = SceneRecipe(args.family, derive_seed(args.seed, "map", mi), shape)
        omap = signed_distance(generate_scene(recipe), recipe.geometry)
        table = VisibilityTable(omap)
        estimator = ExactEstimator(mode="exploration", table=table)
        free_flat = np.flatnonzero(omap.free_mask)
        for si in range(args.seeds):
            rng = np.random.default_rng(derive_seed(args.seed, "x0", mi, si))
            x0 = tuple(int(i) for i in np.unravel_index(
                int(free_flat[rng.integers(free_flat.size)]), shape))
            greedy.append(run_episode(
                omap, estimator, x0,
                StopRule(max_steps=args.steps + 10, delta_residual=1e-3)))
            random_.append(run_episode(
                omap, RandomEstimator(), x0, StopRule(max_steps=args.steps),
                seed=derive_seed(args.seed, "rng", mi, si)))
        print(f"map {mi}: {args.seeds} paired episodes done")

    steps = list(range(args.steps + 1))
    mg = [float(np.mean([residual_at(t, s) for t in greedy])) for s in steps]
    mr = [float(np.mean([residual_at(t, s) for t in random_])) for s in steps]
    curves = {"steps": steps, "greedy_mean_residual": mg,
              "random_mean_residual": mr,
              "episodes": len(greedy), "family": args.family}
    (out / "curves.json").write_text(json.dumps(curves, indent=1))

    print(f"\n{'step':>4} {'greedy':>10} {'random':>10}")
    for s in steps[1::max(1, args.steps // 10)]:
        print(f"{s:>4} {mg[s]:>10.4f} {mr[s]:>10.4f}")
    print(f"\nwrote {out / 'curves.json'}")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.semilogy(steps, mg, "o-", ms=3, label="exact greedy")
    ax.semilogy(steps, mr, "s--", ms=3, label="random")
    ax.set_xlabel("vantage points placed")
    ax.set_ylabel("mean unseen fraction")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out / "curves.png", dpi=150)
    print(f"wrote {out / 'curves.png'}")


if __name__ == "__main__":
    main()
