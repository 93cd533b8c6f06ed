"""Selective depth filtering: learned deformable smoothness and sharpness
kernels plus an attention blend.

Both kernels sample the depth map at k*k fractional positions (regular grid
plus learned per-tap offsets, bilinear reads, clamp-to-edge). Smoothness
weights are softmax-normalized (unit sum); sharpness weights are tanh-squashed
and mean-subtracted (zero sum), and their response is added to the input so
the result stays in depth units while boundaries gain contrast. The center
tap's offset is structurally forced to (0,0), so the unmodified pixel always
participates. Each filter is applied exactly once; there is no iterative
propagation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .layers import Conv
from .ops import sample_bilinear_at, softmax_channel
from .tensor import (Tensor, add, concat_channels, mul, narrow_channels,
                     rsub_scalar, sigmoid, sub_channel_mean, tanh)

SMOOTHNESS = "smoothness"
SHARPNESS = "sharpness"


@dataclass
class KernelField:
    """Per-pixel deformable kernel: weights (N,k^2,H,W) and offsets
    (N,2k^2,H,W) laid out as k^2 dy channels followed by k^2 dx channels."""

    weights: Tensor
    offsets: Tensor
    kind: str
    k: int


class SDFParams:
    """Weight/offset convolutions for both filters plus the attention conv.

    Offset convolutions start at exactly zero so filtering begins on the
    regular grid, the standard deformable initialization.
    """

    def __init__(self, rng, feature_channels, k=3):
        if k % 2 == 0 or k < 1:
            raise ShapeError("SDFParams", f"kernel size must be odd, got {k}")
        self.k = k
        in_ch = feature_channels + 1
        self.weight_conv_m = Conv(rng, in_ch, k * k, k=3)
        self.offset_conv_m = Conv(rng, in_ch, 2 * k * k, k=3, zero_init=True)
        self.weight_conv_a = Conv(rng, in_ch, k * k, k=3)
        self.offset_conv_a = Conv(rng, in_ch, 2 * k * k, k=3, zero_init=True)
        self.attn_conv = Conv(rng, feature_channels + 2, 1, k=3)

    def named_params(self, prefix):
        yield from self.weight_conv_m.named_params(f"{prefix}.weight_m")
        yield from self.offset_conv_m.named_params(f"{prefix}.offset_m")
        yield from self.weight_conv_a.named_params(f"{prefix}.weight_a")
        yield from self.offset_conv_a.named_params(f"{prefix}.offset_a")
        yield from self.attn_conv.named_params(f"{prefix}.attn")


_CENTER_MASKS = {}


def _center_mask(n, k, h, w):
    key = (n, k, h, w)
    m = _CENTER_MASKS.get(key)
    if m is None:
        arr = np.ones((n, 2 * k * k, h, w))
        center = (k * k - 1) // 2
        arr[:, center] = 0.0
        arr[:, k * k + center] = 0.0
        m = Tensor(arr)
        _CENTER_MASKS[key] = m
    return m


def gen_kernel_field(depth_in, f_dec, params, kind):
    if depth_in.data.shape[2:] != f_dec.data.shape[2:]:
        raise ShapeError("gen_kernel_field",
                         f"spatial mismatch {depth_in.data.shape} vs {f_dec.data.shape}")
    x = concat_channels([depth_in, f_dec])
    if kind == SMOOTHNESS:
        raw_w = params.weight_conv_m(x)
        raw_o = params.offset_conv_m(x)
        weights = softmax_channel(raw_w)
    elif kind == SHARPNESS:
        raw_w = params.weight_conv_a(x)
        raw_o = params.offset_conv_a(x)
        weights = sub_channel_mean(tanh(raw_w))
    else:
        raise ShapeError("gen_kernel_field", f"unknown kind {kind!r}")
    n, _, h, w = raw_o.data.shape
    offsets = mul(raw_o, _center_mask(n, params.k, h, w))
    return KernelField(weights=weights, offsets=offsets, kind=kind, k=params.k)


_GRIDS = {}


def _base_grid(n, h, w):
    key = (n, h, w)
    g = _GRIDS.get(key)
    if g is None:
        ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
        g = (np.broadcast_to(ys, (n, 1, h, w)).copy(),
             np.broadcast_to(xs, (n, 1, h, w)).copy())
        _GRIDS[key] = g
    return g


def apply_kernel_field(depth, kf):
    """Deformable response: sum_j w_j(p) * depth(p + g_j + o_j(p))."""
    n, _, h, w = depth.data.shape
    k = kf.k
    r = k // 2
    base_y, base_x = _base_grid(n, h, w)
    out = None
    for j in range(k * k):
        gy, gx = j // k - r, j % k - r
        coord_y = add(Tensor(base_y + gy), narrow_channels(kf.offsets, j, 1))
        coord_x = add(Tensor(base_x + gx), narrow_channels(kf.offsets, k * k + j, 1))
        sampled = sample_bilinear_at(depth, concat_channels([coord_y, coord_x]))
        term = mul(narrow_channels(kf.weights, j, 1), sampled)
        out = term if out is None else add(out, term)
    return out


def smoothness_filter(depth, kf):
    """Convex deformable average; exactly once, no iteration."""
    if kf.kind != SMOOTHNESS:
        raise ShapeError("smoothness_filter", f"wrong kernel kind {kf.kind!r}")
    return apply_kernel_field(depth, kf)


def sharpness_filter(depth, kf):
    """Input plus a zero-sum deformable response: a detail residual that
    boosts boundary contrast while leaving flat regions untouched."""
    if kf.kind != SHARPNESS:
        raise ShapeError("sharpness_filter", f"wrong kernel kind {kf.kind!r}")
    return add(depth, apply_kernel_field(depth, kf))


def selective_blend(d_m, d_a, f_dec, params):
    """Sigmoid attention between the two filtered maps; returns (depth, map)."""
    if d_m.data.shape != d_a.data.shape:
        raise ShapeError("selective_blend", f"{d_m.data.shape} vs {d_a.data.shape}")
    a = sigmoid(params.attn_conv(concat_channels([f_dec, d_m, d_a])))
    out = add(mul(a, d_m), mul(rsub_scalar(a, 1.0), d_a))
    return out, a


def sdf_forward(depth_in, f_dec, params):
    """Smooth, then sharpen the smoothed map, then blend; returns
    (refined depth, selection map)."""
    kf_m = gen_kernel_field(depth_in, f_dec, params, SMOOTHNESS)
    d_m = smoothness_filter(depth_in, kf_m)
    kf_a = gen_kernel_field(depth_in, f_dec, params, SHARPNESS)
    d_a = sharpness_filter(d_m, kf_a)
    return selective_blend(d_m, d_a, f_dec, params)
