"""Sparse depth maps and their learned multi-scale pooling.

A coarse level aggregates valid measurements inside each non-overlapping
2^i x 2^i patch using positive per-pixel weights produced by a learned
convolution followed by exp. A coarse pixel stays valid iff its source
patch contained at least one measurement; invalid pixels carry depth 0.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .layers import Conv
from .ops import patch_sum
from .tensor import Tensor, add_scalar, concat_channels, div, exp, mul

POOL_EPS = 1e-8
PYRAMID_LEVELS = 4  # scales 1/2 .. 1/16 on top of the full-resolution input


@dataclass
class SparseDepth:
    """Depth in meters (0 where invalid) plus a {0,1} validity mask."""

    depth: Tensor  # (N,1,H,W)
    mask: Tensor   # (N,1,H,W), never tracked for gradients

    def __post_init__(self):
        if self.depth.data.shape != self.mask.data.shape:
            raise ShapeError("SparseDepth",
                             f"depth {self.depth.data.shape} vs mask {self.mask.data.shape}")
        if self.depth.data.ndim != 4 or self.depth.data.shape[1] != 1:
            raise ShapeError("SparseDepth", f"expected (N,1,H,W), got {self.depth.data.shape}")
        m = self.mask.data
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ShapeError("SparseDepth", "mask must be exactly 0/1 valued")
        d = self.depth.data
        if np.any(d < 0.0):
            raise ShapeError("SparseDepth", "depth must be non-negative")
        if np.any(d[m == 0.0] != 0.0):
            raise ShapeError("SparseDepth", "invalid pixels must carry depth 0")

    @classmethod
    def from_arrays(cls, depth, mask):
        return cls(Tensor(depth), Tensor(mask))

    @property
    def shape(self):
        return self.depth.data.shape

    def valid_count(self):
        return int(self.mask.data.sum())


@dataclass
class PooledPyramid:
    """Sparse depth at scales 1/1 .. 1/2^{PYRAMID_LEVELS}; level 0 is the input."""

    levels: list

    def __getitem__(self, i):
        return self.levels[i]


class PoolingParams:
    """One weight-logit convolution per pyramid level, applied at full
    resolution on cat(depth, mask).

    Initialized near zero so fresh weights start close to 1: a lone
    measurement then passes through a patch within ~eps/weight of its
    value instead of being diluted by the division guard.
    """

    def __init__(self, rng, kernel=3):
        self.convs = [Conv(rng, 2, 1, k=kernel, w_std=0.01) for _ in range(PYRAMID_LEVELS)]

    def named_params(self, prefix):
        for i, conv in enumerate(self.convs):
            yield from conv.named_params(f"{prefix}.level{i + 1}")


def weighted_pool(s, level, conv):
    """Pool s down by 2**level with learned positive weights.

    Ratio of patch sums: sum(w * depth) / (sum(w * mask) + eps). Purely
    empty patches come out exactly 0 with mask 0.
    """
    if level < 1:
        raise ShapeError("weighted_pool", f"level must be >= 1, got {level}")
    patch = 1 << level
    n, _, h, w = s.shape
    if h % patch or w % patch:
        raise ShapeError("weighted_pool", f"dims {h}x{w} not divisible by {patch}")

    logits = conv(concat_channels([s.depth, s.mask]))
    weights = exp(logits)  # exp clamps its input, keeping weights bounded
    num = patch_sum(mul(weights, s.depth), patch)
    den = add_scalar(patch_sum(mul(weights, s.mask), patch), POOL_EPS)
    pooled = div(num, den)

    out_mask = (patch_sum(s.mask, patch).data > 0.0).astype(np.float64)
    return SparseDepth(pooled, Tensor(out_mask))


def build_pyramid(s, params):
    """Level 0 is s itself; levels 1..4 pool the full-resolution input with
    patch sizes 2, 4, 8, 16."""
    n, _, h, w = s.shape
    factor = 1 << PYRAMID_LEVELS
    if h % factor or w % factor:
        raise ShapeError("build_pyramid", f"dims {h}x{w} not divisible by {factor}")
    levels = [s]
    for i in range(1, PYRAMID_LEVELS + 1):
        levels.append(weighted_pool(s, i, params.convs[i - 1]))
    return PooledPyramid(levels)


def sparsity_sample(s, keep_fraction, seed):
    """Keep floor(keep_fraction * valid) measurements per sample, chosen
    uniformly without replacement by a seeded generator."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ShapeError("sparsity_sample", f"keep_fraction {keep_fraction} outside (0, 1]")
    if keep_fraction == 1.0:
        return SparseDepth(Tensor(s.depth.data.copy()), Tensor(s.mask.data.copy()))
    rng = np.random.Generator(np.random.PCG64(seed))
    depth = np.zeros_like(s.depth.data)
    mask = np.zeros_like(s.mask.data)
    n = s.shape[0]
    for b in range(n):
        valid = np.flatnonzero(s.mask.data[b, 0])
        keep = int(np.floor(keep_fraction * valid.size))
        chosen = rng.choice(valid, size=keep, replace=False) if keep else np.empty(0, dtype=int)
        flat_d = depth[b, 0].ravel()
        flat_m = mask[b, 0].ravel()
        flat_d[chosen] = s.depth.data[b, 0].ravel()[chosen]
        flat_m[chosen] = 1.0
    return SparseDepth(Tensor(depth), Tensor(mask))
