"""Fully-convolutional gain surrogate.

Input is two channels, the cumulative visibility field and the shadow
boundary weight; output is one sigmoid channel approximating the
peak-normalized exact gain field.  Encoder blocks double the channel
count and halve resolution, decoder blocks mirror that with skip
concatenation, so everything is shape-covariant once the input is padded
to a multiple of 2**blocks.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


@dataclass(frozen=True)
class SurrogateSpec:
    dim: int = 2
    blocks: int = 6
    base_channels: int = 4
    kernel: int = 3
    in_channels: int = 2
    leak: float = 0.01

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.blocks < 1:
            raise ValueError("need at least one block")
        if self.kernel % 2 != 1:
            raise ValueError("kernel size must be odd")

    @property
    def stride_total(self) -> int:
        return 2**self.blocks


def default_spec(dim: int = 2) -> SurrogateSpec:
    # one fewer halving in 3-D keeps the bottleneck non-degenerate at 64^3
    return SurrogateSpec(dim=dim, blocks=6 if dim == 2 else 5)


def _ops(dim):
    conv = nn.Conv2d if dim == 2 else nn.Conv3d
    bn = nn.BatchNorm2d if dim == 2 else nn.BatchNorm3d
    up = "bilinear" if dim == 2 else "trilinear"
    return conv, bn, up


class _Down(nn.Module):
    """conv + BN + leaky relu, then the stride-2 copy of the same."""

    def __init__(self, spec, c_in, c_out):
        super().__init__()
        conv, bn, _ = _ops(spec.dim)
        pad = spec.kernel // 2
        self.full = nn.Sequential(
            conv(c_in, c_out, spec.kernel, padding=pad),
            bn(c_out),
            nn.LeakyReLU(spec.leak),
        )
        self.down = nn.Sequential(
            conv(c_out, c_out, spec.kernel, stride=2, padding=pad),
            bn(c_out),
            nn.LeakyReLU(spec.leak),
        )

    def forward(self, x):
        skip = self.full(x)
        return skip, self.down(skip)


class _Up(nn.Module):
    """2x upsample, concatenate the skip, conv + BN + leaky relu."""

    def __init__(self, spec, c_in, c_skip, c_out):
        super().__init__()
        conv, bn, self.mode = _ops(spec.dim)
        pad = spec.kernel // 2
        self.fuse = nn.Sequential(
            conv(c_in + c_skip, c_out, spec.kernel, padding=pad),
            bn(c_out),
            nn.LeakyReLU(spec.leak),
        )

    def forward(self, x, skip):
        x = F.interpolate(x, scale_factor=2, mode=self.mode,
                          align_corners=False)
        return self.fuse(torch.cat([x, skip], dim=1))


class GainUNet(nn.Module):
    def __init__(self, spec: SurrogateSpec | None = None):
        super().__init__()
        self.spec = spec = spec or default_spec()
        conv, _, _ = _ops(spec.dim)
        enc_ch = [spec.base_channels * 2**i for i in range(spec.blocks)]
        self.encoder = nn.ModuleList(
            _Down(spec, c_in, c_out)
            for c_in, c_out in zip([spec.in_channels] + enc_ch[:-1], enc_ch)
        )
        dec_ch = [c // 2 for c in reversed(enc_ch)]
        prev = enc_ch[-1]
        ups = []
        for c_skip, c_out in zip(reversed(enc_ch), dec_ch):
            ups.append(_Up(spec, prev, c_skip, c_out))
            prev = c_out
        self.decoder = nn.ModuleList(ups)
        self.head = conv(dec_ch[-1], 1, 1)
        # zero head => sigmoid starts at exactly 0.5 everywhere
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x):
        if x.ndim != self.spec.dim + 2:
            raise ValueError(
                f"expected batched {self.spec.dim}-D input, got shape "
                f"{tuple(x.shape)}"
            )
        spatial = x.shape[2:]
        x, pads = _pad_to_multiple(x, self.spec.stride_total)
        skips = []
        for block in self.encoder:
            skip, x = block(x)
            skips.append(skip)
        for block, skip in zip(self.decoder, reversed(skips)):
            x = block(x, skip)
        x = torch.sigmoid(self.head(x))
        return _crop(x, pads, spatial)


def _pad_to_multiple(x, multiple):
    sizes = list(reversed(x.shape[2:]))  # F.pad wants last-dim-first
    pads = []
    for size in sizes:
        short = (-size) % multiple
        pads += [short // 2, short - short // 2]
    if not any(pads):
        return x, pads
    # reflect needs pad < size; replicate covers inputs below the stride
    fits = all(p < size
               for size, lo, hi in zip(sizes, pads[::2], pads[1::2])
               for p in (lo, hi))
    return F.pad(x, pads, mode="reflect" if fits else "replicate"), pads


def _crop(x, pads, spatial):
    if not any(pads):
        return x
    index = [slice(None), slice(None)]
    lows = pads[::2][::-1]  # undo the last-dim-first ordering
    for size, low in zip(spatial, lows):
        index.append(slice(low, low + size))
    return x[tuple(index)]


def standardize(psi, boundary, dx, psi_clip=1.0):
    """Scale raw planner fields into the network's input ranges.

    The visibility field is clipped at +-(3 dx psi_clip) and mapped to
    [-1, 1]; distances beyond a few cells carry no occlusion information.
    The boundary weight's sharp upper bound is 2/(3 dx), so scaling by
    half the mollifier width lands it in [0, 1].
    """
    eps = 3.0 * float(dx)
    clip = eps * float(psi_clip)
    a = np.clip(np.asarray(psi, dtype=np.float32), -clip, clip) / clip
    b = np.asarray(boundary, dtype=np.float32) * (eps / 2.0)
    return np.stack([a, b])


def bce_loss(pred, target):
    """Mean negated cross-entropy with the usual clamp away from {0, 1}."""
    p = pred.clamp(1e-6, 1.0 - 1e-6)
    return -(target * torch.log(p) + (1.0 - target) * torch.log1p(-p)).mean()
