"""Parameterized building blocks: plain convs, stride-2 deconvs, and
residual blocks. No normalization layers anywhere; activations are
leaky_relu(0.1) throughout.

Each block exposes named_params(prefix) so the model can enumerate every
parameter deterministically for the optimizer and the checkpoint writer.
"""

import numpy as np

from .ops import conv2d, conv2d_transpose
from .tensor import Tensor, add, leaky_relu

LEAKY_SLOPE = 0.1


def _he_weights(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)


class Conv:
    """3x3 (or kxk) convolution with bias, same-padding by default."""

    def __init__(self, rng, in_ch, out_ch, k=3, stride=1, padding=None,
                 zero_init=False, bias_init=0.0, w_std=None):
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        if zero_init:
            w = np.zeros((out_ch, in_ch, k, k))
        elif w_std is not None:
            w = rng.normal(0.0, w_std, (out_ch, in_ch, k, k))
        else:
            w = _he_weights(rng, (out_ch, in_ch, k, k), in_ch * k * k)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.full(out_ch, float(bias_init)), requires_grad=True)

    def __call__(self, x):
        return conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)

    def named_params(self, prefix):
        yield f"{prefix}.w", self.w
        yield f"{prefix}.b", self.b


class Deconv:
    """2x2 stride-2 transposed convolution; exact x2 upsampling."""

    def __init__(self, rng, in_ch, out_ch, k=2):
        self.stride = k
        w = _he_weights(rng, (in_ch, out_ch, k, k), in_ch * k * k)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(out_ch), requires_grad=True)

    def __call__(self, x):
        return conv2d_transpose(x, self.w, self.b, stride=self.stride, padding=0)

    def named_params(self, prefix):
        yield f"{prefix}.w", self.w
        yield f"{prefix}.b", self.b


class ResidualBlock:
    """conv-act-conv plus shortcut, activated after the join. The shortcut
    becomes a 1x1 strided conv whenever channels or resolution change."""

    def __init__(self, rng, in_ch, out_ch, stride=1):
        self.conv1 = Conv(rng, in_ch, out_ch, k=3, stride=stride)
        self.conv2 = Conv(rng, out_ch, out_ch, k=3)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = Conv(rng, in_ch, out_ch, k=1, stride=stride, padding=0)
        else:
            self.shortcut = None

    def __call__(self, x):
        h = leaky_relu(self.conv1(x), LEAKY_SLOPE)
        h = self.conv2(h)
        sc = x if self.shortcut is None else self.shortcut(x)
        return leaky_relu(add(h, sc), LEAKY_SLOPE)

    def named_params(self, prefix):
        yield from self.conv1.named_params(f"{prefix}.conv1")
        yield from self.conv2.named_params(f"{prefix}.conv2")
        if self.shortcut is not None:
            yield from self.shortcut.named_params(f"{prefix}.shortcut")
