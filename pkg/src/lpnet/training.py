"""Multi-scale training loss, Adam, and the training loop.

The loss sums, over all five scales, the mean squared plus mean absolute
error between the bilinearly upsampled prediction and the ground truth over
its valid pixels. Each scale's sums are normalized by the valid-pixel count
so the magnitude is resolution independent; optional per-scale weights
default to ones.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError, ShapeError
from .network import SCALES
from .ops import bilinear_resize
from .rng import stream
from .sparse import SparseDepth
from .tensor import GradTape, Tensor, absolute, add, mul, mul_scalar, square, tsum


@dataclass
class LossReport:
    total: float
    per_scale_mse: list
    per_scale_mae: list
    valid_count: int


def multiscale_loss(pyr, gt_depth, gt_mask, scale_weights=None):
    """Differentiable total loss plus a float report.

    gt_depth/gt_mask are (N,1,H,W); every prediction in the pyramid is
    upsampled to that resolution before comparison.
    """
    n, _, h, w = gt_depth.data.shape
    if gt_mask.data.shape != gt_depth.data.shape:
        raise ShapeError("multiscale_loss",
                         f"mask {gt_mask.data.shape} vs depth {gt_depth.data.shape}")
    valid = float(gt_mask.data.sum())
    if valid < 1:
        raise EmptyMaskError("multiscale_loss: no valid ground-truth pixels")
    if scale_weights is None:
        scale_weights = [1.0] * SCALES
    if len(scale_weights) != SCALES:
        raise ShapeError("multiscale_loss", f"need {SCALES} scale weights")

    total = None
    mses, maes = [], []
    inv = 1.0 / valid
    for scale in range(SCALES):
        pred = pyr.preds[scale]
        if pred is None:
            raise ShapeError("multiscale_loss", f"pyramid is missing scale {scale}")
        up = pred if pred.data.shape[2:] == (h, w) else bilinear_resize(pred, h, w)
        diff = add(up, mul_scalar(gt_depth, -1.0))
        masked_sq = mul(gt_mask, square(diff))
        masked_abs = mul(gt_mask, absolute(diff))
        mse = mul_scalar(tsum(masked_sq), inv)
        mae = mul_scalar(tsum(masked_abs), inv)
        term = mul_scalar(add(mse, mae), float(scale_weights[scale]))
        total = term if total is None else add(total, term)
        mses.append(mse.item())
        maes.append(mae.item())

    return total, LossReport(total=total.item(), per_scale_mse=mses,
                             per_scale_mae=maes, valid_count=int(valid))


class Adam:
    """Standard Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params  # OrderedDict name -> Tensor
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, tensor in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / (1.0 - b1 ** self.t)
            v_hat = v / (1.0 - b2 ** self.t)
            tensor.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _flip_sample(image, gt, sparse_depth, sparse_mask):
    return (image[:, :, ::-1].copy(), gt[:, ::-1].copy(),
            sparse_depth[:, :, ::-1].copy(), sparse_mask[:, :, ::-1].copy())


def make_batch(scenes, indices, flip_flags):
    """Stack scene triples into batch tensors, flipping where flagged."""
    images, gts, sds, sms = [], [], [], []
    for idx, flip in zip(indices, flip_flags):
        image, gt, sparse = scenes[idx]
        sd, sm = sparse.depth.data[0], sparse.mask.data[0]
        if flip:
            image, gt, sd, sm = _flip_sample(image, gt, sd, sm)
        images.append(image)
        gts.append(gt[None])
        sds.append(sd)
        sms.append(sm)
    return (Tensor(np.stack(images)),
            Tensor(np.stack(gts)),
            SparseDepth(Tensor(np.stack(sds)), Tensor(np.stack(sms))))


def train_model(model, scenes, steps, batch_size, lr, seed,
                hflip=True, scale_weights=None, on_step=None):
    """Seeded mini-batch training; returns the per-step loss history."""
    if batch_size < 1 or batch_size > len(scenes):
        raise ShapeError("train_model", f"batch_size {batch_size} vs {len(scenes)} scenes")
    order_rng = stream(seed, "batching")
    aug_rng = stream(seed, "augment")
    params = model.named_parameters()
    opt = Adam(params, lr=lr)
    history = []
    queue = []
    for step in range(1, steps + 1):
        while len(queue) < batch_size:
            queue.extend(order_rng.permutation(len(scenes)).tolist())
        indices = [queue.pop(0) for _ in range(batch_size)]
        flips = (aug_rng.random(batch_size) < 0.5) if hflip else [False] * batch_size
        image, gt, sparse = make_batch(scenes, indices, flips)
        mask = Tensor(np.ones_like(gt.data))

        with GradTape() as tape:
            pyr = model.progressive_predict(image, sparse)
            total, report = multiscale_loss(pyr, gt, mask, scale_weights)
            tape.backward(total)
        grads = {name: tape.grad(t) for name, t in params.items()}
        opt.step(grads)
        history.append((step, report.total))
        if on_step is not None:
            on_step(step, report)
    return history
