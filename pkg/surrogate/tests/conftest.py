import json

import numpy as np
import pytest

from gain_surrogate.rfa import write_rfa


def disk(shape, center, radius):
    rr, cc = np.mgrid[: shape[0], : shape[1]]
    return (rr - center[0]) ** 2 + (cc - center[1]) ** 2 <= radius**2


def synth_pair(shape, seed, dx=1.0):
    """A plausible (psi, boundary, target) triplet without running a planner.

    psi is positive inside a random disk and falls off outside; boundary
    rings the disk edge; the target is a normalized bump on the near
    outside of the ring. Enough structure to train against.
    """
    rng = np.random.default_rng(seed)
    center = rng.integers(shape[0] // 4, 3 * shape[0] // 4, size=2)
    radius = int(rng.integers(shape[0] // 6, shape[0] // 3))
    rr, cc = np.mgrid[: shape[0], : shape[1]]
    dist = np.sqrt((rr - center[0]) ** 2 + (cc - center[1]) ** 2) * dx
    psi = radius * dx - dist
    ring = np.abs(dist - radius * dx)
    eps = 3.0 * dx
    boundary = np.where(ring < eps / 2,
                        (1.0 + np.cos(np.pi * ring / (eps / 2))) / eps, 0.0)
    target = np.exp(-((dist - (radius + 2) * dx) ** 2) / (4 * dx**2))
    target[psi <= 0] *= 0.3
    target /= target.max()
    return psi, boundary, target


@pytest.fixture
def pair_dir(tmp_path):
    """Tiny on-disk dataset: 3 maps x 2 steps of synthetic 64x64 pairs."""
    shape, dx = (64, 64), 1.0
    pairs = []
    idx = 0
    for mi in range(3):
        for k in range(2):
            psi, bnd, tgt = synth_pair(shape, seed=10 * mi + k, dx=dx)
            stem = f"pair_{idx:05d}"
            write_rfa(psi, dx, tmp_path / f"{stem}.psi.rfa")
            write_rfa(bnd, dx, tmp_path / f"{stem}.bnd.rfa")
            write_rfa(tgt, dx, tmp_path / f"{stem}.tgt.rfa")
            pairs.append({
                "psi": f"{stem}.psi.rfa",
                "boundary": f"{stem}.bnd.rfa",
                "target": f"{stem}.tgt.rfa",
                "map": mi,
                "map_seed": mi,
                "episode": 0,
                "k": k + 1,
                "x0": [int(c) for c in (5, 5)],
                "normalization": 1.0,
            })
            idx += 1
    manifest = {
        "format": "visplan-pairs-v1",
        "n_pairs": idx,
        "seed": 0,
        "config": {"synthetic": True},
        "pairs": pairs,
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return tmp_path
