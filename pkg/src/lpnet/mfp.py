"""Multi-path feature enhancement at the bottleneck.

Split the feature map into p channel groups; group i passes through i
stride-2 convolutions (each followed by leaky_relu), comes back to the
input resolution by bilinear interpolation, and the concatenated paths are
merged by one convolution and added residually to the input. Path i
therefore aggregates context from a 2^i-times-coarser view.
"""

from .errors import ShapeError
from .layers import LEAKY_SLOPE, Conv
from .ops import bilinear_resize
from .tensor import add, concat_channels, leaky_relu, split_channels


class MFPParams:
    """path_convs[i] holds the i+1 stride-2 convs of path i+1 (1-indexed)."""

    def __init__(self, rng, channels, paths):
        if paths < 1:
            raise ShapeError("MFPParams", f"paths must be >= 1, got {paths}")
        if channels % paths:
            raise ShapeError("MFPParams", f"{channels} channels not divisible by {paths} paths")
        self.paths = paths
        self.channels = channels
        group = channels // paths
        self.path_convs = [
            [Conv(rng, group, group, k=3, stride=2) for _ in range(i + 1)]
            for i in range(paths)
        ]
        self.merge = Conv(rng, channels, channels, k=3)

    def named_params(self, prefix):
        for i, convs in enumerate(self.path_convs):
            for j, conv in enumerate(convs):
                yield from conv.named_params(f"{prefix}.path{i + 1}.conv{j}")
        yield from self.merge.named_params(f"{prefix}.merge")


def mfp_forward(f_e, params):
    """Enhance f_e (N,C,H,W) in place of shape; output shape equals input."""
    n, c, h, w = f_e.data.shape
    if c != params.channels:
        raise ShapeError("mfp_forward", f"expected {params.channels} channels, got {c}")
    if h < (1 << params.paths) or w < (1 << params.paths):
        raise ShapeError("mfp_forward",
                         f"spatial dims {h}x{w} too small for {params.paths} paths")
    groups = split_channels(f_e, [c // params.paths] * params.paths)
    outs = []
    for group, convs in zip(groups, params.path_convs):
        x = group
        for conv in convs:
            x = leaky_relu(conv(x), LEAKY_SLOPE)
        outs.append(bilinear_resize(x, h, w))
    merged = params.merge(concat_channels(outs))
    return add(merged, f_e)
