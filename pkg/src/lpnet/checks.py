"""Finite-difference verification batteries: every primitive op, and the
whole network through the multi-scale loss.

The full-model check runs at a generic parameter point: all parameters get
a small seeded perturbation so deformable sampling coordinates sit away
from the piecewise-linear kinks at integer positions, where two-sided
differences would disagree with any one-sided derivative choice.
"""

import numpy as np

from . import ops
from . import tensor as T
from .gradcheck import gradcheck
from .network import ArchConfig, LPNetModel
from .scenes import SceneSpec, generate_scene
from .sparse import SparseDepth
from .tensor import Tensor
from .training import multiscale_loss


def _rand(shape, seed, scale=1.0, offset=0.0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.normal(offset, scale, shape), requires_grad=True)


def _sum_sq(x):
    return T.tsum(T.square(x))


def _probe(shape, seed):
    return Tensor(np.random.default_rng(seed).normal(size=shape))


def primitive_op_reports():
    """(name, GradCheckReport) for each differentiable primitive, full
    element coverage on fixed seeds."""
    entries = []

    def run(name, f, params):
        entries.append((name, gradcheck(f, params)))

    a = _rand((2, 3, 4, 4), 1)
    b = _rand((2, 3, 4, 4), 2, scale=0.7, offset=1.5)
    run("add", lambda ps: _sum_sq(T.add(ps[0], ps[1])), [a, b])
    run("mul", lambda ps: _sum_sq(T.mul(ps[0], ps[1])), [a, b])
    run("div", lambda ps: _sum_sq(T.div(ps[0], T.add_scalar(T.square(ps[1]), 1.0))), [a, b])
    run("neg", lambda ps: _sum_sq(T.neg(ps[0])), [a])
    run("add_scalar", lambda ps: _sum_sq(T.add_scalar(ps[0], 2.5)), [a])
    run("rsub_scalar", lambda ps: _sum_sq(T.rsub_scalar(ps[0], 1.0)), [a])
    run("mul_scalar", lambda ps: _sum_sq(T.mul_scalar(ps[0], -1.75)), [a])
    run("square", lambda ps: T.tsum(T.square(ps[0])), [a])
    run("abs", lambda ps: T.tsum(T.absolute(ps[0])), [a])
    run("sum", lambda ps: T.tsum(ps[0]), [a])
    run("sigmoid", lambda ps: T.tsum(T.sigmoid(ps[0])), [a])
    run("tanh", lambda ps: T.tsum(T.tanh(ps[0])), [a])
    run("exp", lambda ps: T.tsum(T.exp(T.mul_scalar(ps[0], 0.5))), [a])
    run("leaky_relu", lambda ps: T.tsum(T.leaky_relu(ps[0], 0.1)), [a])
    run("softplus", lambda ps: T.tsum(T.softplus(ps[0])), [a])
    run("sub_channel_mean", lambda ps: _sum_sq(T.sub_channel_mean(ps[0])), [a])

    c = _rand((1, 2, 3, 3), 3)
    d = _rand((1, 4, 3, 3), 4)
    run("concat_channels", lambda ps: _sum_sq(T.concat_channels([ps[0], ps[1]])), [c, d])
    run("narrow_channels", lambda ps: _sum_sq(T.narrow_channels(ps[0], 1, 2)), [d])

    x = _rand((1, 2, 6, 6), 5)
    w = _rand((3, 2, 3, 3), 6, scale=0.5)
    bias = _rand((3,), 7)
    run("conv2d", lambda ps: _sum_sq(ops.conv2d(ps[0], ps[1], ps[2], 2, 1)), [x, w, bias])

    y = _rand((1, 3, 3, 3), 8)
    wt = _rand((3, 2, 3, 3), 9, scale=0.5)
    bt = _rand((2,), 10)
    run("conv2d_transpose",
        lambda ps: _sum_sq(ops.conv2d_transpose(ps[0], ps[1], ps[2], 2, 1)), [y, wt, bt])

    r = _rand((1, 2, 4, 5), 11)
    run("bilinear_resize", lambda ps: _sum_sq(ops.bilinear_resize(ps[0], 7, 9)), [r])

    s = _rand((1, 5, 3, 3), 12)
    probe = _probe((1, 5, 3, 3), 13)
    run("softmax_channel", lambda ps: T.tsum(T.mul(ops.softmax_channel(ps[0]), probe)), [s])

    img = _rand((1, 1, 5, 5), 14)
    rng = np.random.default_rng(15)
    ys = rng.uniform(0.3, 3.6, size=(1, 3, 3))
    xs = rng.uniform(0.3, 3.6, size=(1, 3, 3))
    coords = Tensor(np.stack([ys, xs], axis=1), requires_grad=True)
    run("sample_bilinear_at",
        lambda ps: _sum_sq(ops.sample_bilinear_at(ps[0], ps[1])), [img, coords])

    p = _rand((1, 2, 6, 6), 16)
    run("patch_sum", lambda ps: _sum_sq(ops.patch_sum(ps[0], 3)), [p])

    return entries


def full_model_report(seed=0, size=32, max_per_param=4):
    """Gradcheck of the multi-scale training loss through the whole network
    on a size x size synthetic scene, probing a seeded sample of elements
    in every parameter tensor.

    The instance is deliberately generic: parameters carry a small seeded
    perturbation, the measurement mask is fully dense, and the image gets
    per-pixel jitter. Sparse masks would leave large exactly-constant
    activation regions whose shared kinks break finite differencing at any
    fixed step size, without indicating a wrong gradient.
    """
    config = ArchConfig(base_channels=2, channel_multipliers=(1, 2, 4, 8, 8), mfp_paths=1)
    model = LPNetModel(config, seed=seed)
    params = model.named_parameters()

    noise = np.random.default_rng(seed + 1)
    for tensor in params.values():
        tensor.data += noise.normal(0.0, 0.05, tensor.data.shape)

    spec = SceneSpec.random(seed + 2, size, size)
    image, gt, _ = generate_scene(spec)
    image = image + noise.uniform(0.0, 0.02, image.shape)
    sparse = SparseDepth(Tensor(gt[None, None].copy()), Tensor(np.ones((1, 1, size, size))))
    image_t = Tensor(image[None])
    gt_t = Tensor(gt[None, None])
    mask_t = Tensor(np.ones_like(gt_t.data))

    def f(_params):
        pyr = model.progressive_predict(image_t, sparse)
        total, _ = multiscale_loss(pyr, gt_t, mask_t)
        return total

    names = list(params.keys())
    return gradcheck(f, list(params.values()), names=names,
                     max_per_param=max_per_param, sample_seed=seed + 3)
