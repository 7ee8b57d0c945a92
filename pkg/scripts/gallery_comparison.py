#!/usr/bin/env python3
"""Greedy vantage counts vs art-gallery bounds on the built-in galleries.

Runs exact greedy from the free-space centroid of each gallery and prints
the vertex/reflex counts, the floor(n/3) and reflex+1 bounds, and the
number of vantages greedy actually needed.  The comb is the interesting
row: it is the classic worst case where floor(n/3) is tight for *static*
guards, yet the reflex+1 bound still caps the sequential policy.
"""

import argparse

import numpy as np

from visplan import ExactEstimator, StopRule, run_episode
from visplan.grid import signed_distance
from visplan.scenes import (
    comb_gallery,
    convex_room,
    gallery_bounds,
    geometry_for_polygon,
    rasterize_gallery,
)


def centroid_node(omap):
    nodes = np.argwhere(omap.free_mask)
    c = nodes.mean(axis=0)
    return tuple(int(i) for i in nodes[np.argmin(((nodes - c) ** 2).sum(1))])


def run_gallery(name, poly, dx, max_steps):
    bounds = gallery_bounds(poly)
    geom = geometry_for_polygon(poly, dx)
    omap = signed_distance(rasterize_gallery(poly, geom), geom)
    trace = run_episode(
        omap, ExactEstimator(mode="exploration"), centroid_node(omap),
        StopRule(max_steps=max_steps, delta_residual=1e-3),
    )
    print(f"{name:<14} n={bounds.n:<4} reflex={bounds.reflex:<4} "
          f"floor(n/3)={bounds.chvatal:<4} reflex+1={bounds.frontier:<4} "
          f"greedy={len(trace.vantages):<4} residual={trace.residuals[-1]:.2e} "
          f"stop={trace.stop_reason}")
    return bounds, trace


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dx", type=float, default=1.0)
    ap.add_argument("--teeth", type=int, default=10, help="comb teeth (default 10)")
    ap.add_argument("--max-steps", type=int, default=60)
    args = ap.parse_args()

    run_gallery("convex_room", convex_room(), args.dx, args.max_steps)
    bounds, trace = run_gallery("comb", comb_gallery(teeth=args.teeth),
                                args.dx, args.max_steps)
    assert len(trace.vantages) <= bounds.frontier, "frontier bound violated"


if __name__ == "__main__":
    main()
