"""Loading of planner-emitted training pairs.

A dataset directory holds a manifest.json plus one psi/boundary/target
triplet of flat-array files per pair.  All pairs must share one grid; the
manifest is hashed so checkpoints can name the exact data they saw.
"""

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .model import standardize
from .rfa import read_rfa

PAIR_FORMAT = "visplan-pairs-v1"


class DatasetError(Exception):
    pass


def load_manifest(data_dir):
    path = Path(data_dir) / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetError(f"cannot load {path}: {e}") from e
    if manifest.get("format") != PAIR_FORMAT:
        raise DatasetError(f"unknown pair format {manifest.get('format')!r}")
    if not manifest.get("pairs"):
        raise DatasetError("manifest lists no pairs")
    return manifest


def manifest_digest(data_dir):
    blob = (Path(data_dir) / "manifest.json").read_bytes()
    return hashlib.sha256(blob).hexdigest()


class PairDataset(torch.utils.data.Dataset):
    """Materialized (input, target) tensors for a slice of the manifest."""

    def __init__(self, data_dir, entries, psi_clip=1.0):
        data_dir = Path(data_dir)
        self.inputs = []
        self.targets = []
        self.dx = None
        shape = None
        for entry in entries:
            psi, dx, _ = read_rfa(data_dir / entry["psi"])
            bnd, dxb, _ = read_rfa(data_dir / entry["boundary"])
            tgt, dxt, _ = read_rfa(data_dir / entry["target"])
            if self.dx is None:
                self.dx, shape = dx, psi.shape
            if (dx, dxb, dxt) != (self.dx,) * 3 or not (
                psi.shape == bnd.shape == tgt.shape == shape
            ):
                raise DatasetError(
                    f"pair {entry['psi']} does not share the dataset grid"
                )
            self.inputs.append(
                torch.from_numpy(standardize(psi, bnd, dx, psi_clip))
            )
            self.targets.append(
                torch.from_numpy(np.asarray(tgt, dtype=np.float32)[None])
            )
        if not self.inputs:
            raise DatasetError("empty pair list")

    def __len__(self):
        return len(self.inputs)

    def __getitem__(self, i):
        return self.inputs[i], self.targets[i]


def split_by_map(manifest, holdout_maps):
    """Train/validation split on map identity, never on episode steps.

    The last `holdout_maps` distinct map indices become validation so the
    held-out states come from scenes the model never saw.
    """
    pairs = manifest["pairs"]
    maps = sorted({p["map"] for p in pairs})
    if not 0 <= holdout_maps < len(maps):
        raise DatasetError(
            f"cannot hold out {holdout_maps} of {len(maps)} maps"
        )
    held = set(maps[len(maps) - holdout_maps:])
    train = [p for p in pairs if p["map"] not in held]
    val = [p for p in pairs if p["map"] in held]
    return train, val
