"""Confidence-gated fusion of predicted depth with pooled measurements.

Confidence comes from a per-scale convolution over the decoder feature and
the pooled sparse depth, squashed by a sigmoid and then forced to zero
wherever no measurement exists, so fusion can never blend toward the
zero-filled placeholder depths.
"""

from .errors import ShapeError
from .layers import Conv
from .tensor import add, concat_channels, mul, rsub_scalar, sigmoid


class ConfidenceHead:
    """3x3 convolution on cat(decoder feature, pooled depth) -> 1 channel."""

    def __init__(self, rng, feature_channels):
        self.conv = Conv(rng, feature_channels + 1, 1, k=3)

    def named_params(self, prefix):
        yield from self.conv.named_params(prefix)


def estimate_confidence(f_dec, s_level, head):
    if f_dec.data.shape[2:] != s_level.depth.data.shape[2:]:
        raise ShapeError("estimate_confidence",
                         f"spatial mismatch {f_dec.data.shape} vs {s_level.depth.data.shape}")
    c = sigmoid(head.conv(concat_channels([f_dec, s_level.depth])))
    return mul(c, s_level.mask)


def fuse_depth(coarse, s_level, c):
    """c * measurement + (1 - c) * coarse, elementwise."""
    if coarse.data.shape != s_level.depth.data.shape or coarse.data.shape != c.data.shape:
        raise ShapeError("fuse_depth",
                         f"shape mismatch {coarse.data.shape} / {s_level.depth.data.shape} / {c.data.shape}")
    return add(mul(c, s_level.depth), mul(rsub_scalar(c, 1.0), coarse))
