"""The eight depth evaluation metrics.

Linear errors are reported in millimeters, inverse errors in 1/km, REL as a
ratio, and threshold accuracies as percentages. Predictions are clamped at 0
before any comparison, and at 1e-3 m wherever they appear in a denominator.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError

PRED_FLOOR_M = 1e-3


@dataclass
class MetricReport:
    rmse_mm: float
    mae_mm: float
    irmse_per_km: float
    imae_per_km: float
    rel: float
    delta1: float
    delta2: float
    delta3: float

    FIELDS = ("rmse_mm", "mae_mm", "irmse_per_km", "imae_per_km",
              "rel", "delta1", "delta2", "delta3")

    def as_dict(self):
        return {name: getattr(self, name) for name in self.FIELDS}


def compute_metrics(pred, gt, mask):
    """Evaluate pred against gt over mask; all arrays (or tensors) must share
    shape, gt must be positive on valid pixels."""
    pred = np.asarray(getattr(pred, "data", pred), dtype=np.float64)
    gt = np.asarray(getattr(gt, "data", gt), dtype=np.float64)
    mask = np.asarray(getattr(mask, "data", mask), dtype=np.float64)
    valid = mask > 0
    n = int(valid.sum())
    if n == 0:
        raise EmptyMaskError("compute_metrics: no valid pixels")
    p = np.maximum(pred[valid], 0.0)
    g = gt[valid]
    if np.any(g <= 0):
        raise EmptyMaskError("compute_metrics: ground truth must be positive on valid pixels")

    err = p - g
    rmse = float(np.sqrt(np.mean(err ** 2)))
    mae = float(np.mean(np.abs(err)))

    pc = np.maximum(p, PRED_FLOOR_M)
    ierr = 1.0 / pc - 1.0 / g
    irmse = float(np.sqrt(np.mean(ierr ** 2)))
    imae = float(np.mean(np.abs(ierr)))

    rel = float(np.mean(np.abs(err) / g))
    ratio = np.maximum(pc / g, g / pc)
    deltas = [float(np.mean(ratio < 1.25 ** i) * 100.0) for i in (1, 2, 3)]

    return MetricReport(rmse_mm=rmse * 1000.0, mae_mm=mae * 1000.0,
                        irmse_per_km=irmse * 1000.0, imae_per_km=imae * 1000.0,
                        rel=rel, delta1=deltas[0], delta2=deltas[1], delta3=deltas[2])
