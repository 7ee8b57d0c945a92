"""Command-line entry points.

`gain-surrogate train` fits a checkpoint from a pair directory;
`gain-surrogate predict` is the planner-facing half: it speaks the
external-estimator protocol (--psi/--boundary/--out flat-array files) and
is safe to invoke once per planning step.
"""

import argparse
import sys

import numpy as np
import torch

from .data import DatasetError
from .model import standardize
from .rfa import FormatError, read_rfa, write_rfa
from .train import TrainConfig, load_model, train


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="gain-surrogate",
        description="convolutional stand-in for exact visibility gain",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a checkpoint from planner pairs")
    p.add_argument("--data", required=True, help="pair directory with manifest.json")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--holdout-maps", type=int, default=0,
                   help="reserve the last N maps for validation")
    p.add_argument("--psi-clip", type=float, default=1.0,
                   help="visibility clip in mollifier widths (default 1)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("predict", help="score one state through the "
                       "external-estimator protocol")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--psi", required=True, help="cumulative visibility field")
    p.add_argument("--boundary", required=True, help="shadow boundary field")
    p.add_argument("--out", required=True, help="where to write the gain field")
    p.add_argument("--zero-boundary", action="store_true",
                   help="ablate: feed a zeroed boundary channel")
    return ap


def _cmd_train(args):
    config = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        holdout_maps=args.holdout_maps, psi_clip=args.psi_clip,
        seed=args.seed,
    )
    ckpt = train(args.data, None, config, args.out)
    print(f"wrote {args.out} ({ckpt['n_train']} train / "
          f"{ckpt['n_val']} val pairs)")
    return 0


def _cmd_predict(args):
    model, ckpt = load_model(args.checkpoint)
    psi, dx, origin = read_rfa(args.psi)
    boundary, dxb, _ = read_rfa(args.boundary)
    if boundary.shape != psi.shape or dxb != dx:
        raise FormatError("psi and boundary fields disagree on geometry")
    if psi.ndim != model.spec.dim:
        raise FormatError(
            f"checkpoint is {model.spec.dim}-D, input is {psi.ndim}-D"
        )
    if args.zero_boundary:
        boundary = np.zeros_like(boundary)
    x = standardize(psi, boundary, dx, ckpt["config"]["psi_clip"])
    with torch.no_grad():
        pred = model(torch.from_numpy(x)[None])[0, 0].numpy()
    write_rfa(pred.astype(np.float64), dx, args.out, origin)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_train(args)
        return _cmd_predict(args)
    except (DatasetError, FormatError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
