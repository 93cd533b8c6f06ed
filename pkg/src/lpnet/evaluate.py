"""Evaluation over scene sets, the sparse-interpolation baseline, and the
sparsity / progressive-steps sweep harnesses."""

import time

import numpy as np
from scipy.interpolate import griddata

from .metrics import compute_metrics
from .rng import stream_seed
from .sparse import sparsity_sample
from .tensor import Tensor


def predict_dense(model, image, sparse, steps=5):
    """Full-resolution numpy prediction for one scene triple."""
    out = model.infer_steps(Tensor(image[None]), sparse, steps=steps)
    return out.data[0, 0]


def baseline_sparse_interpolation(sparse):
    """Dense depth from linear interpolation of the scattered measurements
    (nearest-neighbor fill outside the convex hull). Serves as the reference
    any trained model must beat."""
    depth = sparse.depth.data[0, 0]
    mask = sparse.mask.data[0, 0]
    h, w = depth.shape
    points = np.argwhere(mask > 0)
    values = depth[mask > 0]
    if points.shape[0] == 0:
        return np.zeros_like(depth)
    if points.shape[0] == 1:
        return np.full_like(depth, values[0])
    grid_y, grid_x = np.mgrid[0:h, 0:w]
    dense = griddata(points, values, (grid_y, grid_x), method="linear")
    holes = ~np.isfinite(dense)
    if np.any(holes):
        nearest = griddata(points, values, (grid_y, grid_x), method="nearest")
        dense[holes] = nearest[holes]
    return dense


def _pooled_metrics(preds, gts):
    pred = np.concatenate([p.ravel() for p in preds])
    gt = np.concatenate([g.ravel() for g in gts])
    return compute_metrics(pred, gt, np.ones_like(gt))


def evaluate_model(model, scenes, steps=5):
    """Metrics pooled over every pixel of every scene."""
    preds, gts = [], []
    for image, gt, sparse in scenes:
        preds.append(predict_dense(model, image, sparse, steps=steps))
        gts.append(gt)
    return _pooled_metrics(preds, gts)


def evaluate_baseline(scenes):
    preds = [baseline_sparse_interpolation(sparse) for _, _, sparse in scenes]
    return _pooled_metrics(preds, [gt for _, gt, _ in scenes])


def run_sparsity_sweep(model, scenes, fractions, seed, steps=5):
    """Rows of (fraction, MetricReport) with the model held fixed while the
    input measurements are thinned."""
    rows = []
    for fraction in fractions:
        preds, gts = [], []
        for i, (image, gt, sparse) in enumerate(scenes):
            thinned = sparsity_sample(sparse, fraction,
                                      seed=stream_seed(seed, f"sparsity-{fraction}-{i}"))
            preds.append(predict_dense(model, image, thinned, steps=steps))
            gts.append(gt)
        rows.append((fraction, _pooled_metrics(preds, gts)))
    return rows


def run_steps_sweep(model, scenes, repeats=5):
    """Rows of (steps, rmse_mm, median wall-time ms) for steps 1..5.

    Timing covers the full forward over all scenes; the median over
    `repeats` runs absorbs scheduler noise.
    """
    rows = []
    for steps in range(1, 6):
        preds, gts = [], []
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            preds = [predict_dense(model, image, sparse, steps=steps)
                     for image, _, sparse in scenes]
            times.append((time.perf_counter() - start) * 1000.0)
        gts = [gt for _, gt, _ in scenes]
        report = _pooled_metrics(preds, gts)
        rows.append((steps, report.rmse_mm, float(np.median(times))))
    return rows
