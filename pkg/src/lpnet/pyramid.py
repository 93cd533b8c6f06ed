"""Laplacian pyramid decomposition and reconstruction.

The canonical scale operators are 2x2 average pooling (down) and bilinear
x2 interpolation (up). Both are linear, so reconstruction inverts the
decomposition algebraically: each bandpass level stores exactly what its
down/up round trip discarded.
"""

from dataclasses import dataclass

from .errors import ShapeError
from .ops import bilinear_resize, patch_sum
from .tensor import Tensor, add, mul_scalar, neg


@dataclass
class LaplacianLevels:
    """Bandpass images at descending resolution plus the coarse residual."""

    bandpass: list  # [full-res detail, half-res detail, ...]
    residual: Tensor

    @property
    def level_count(self):
        return len(self.bandpass)


def down(x):
    """Halve H and W by averaging non-overlapping 2x2 blocks."""
    h, w = x.data.shape[2], x.data.shape[3]
    if h < 2 or w < 2:
        raise ShapeError("down", f"need at least 2x2 input, got {h}x{w}")
    return mul_scalar(patch_sum(x, 2), 0.25)


def up(x):
    """Double H and W by bilinear interpolation."""
    return bilinear_resize(x, 2 * x.data.shape[2], 2 * x.data.shape[3])


def laplacian_decompose(x, levels):
    """Split x into `levels` bandpass images and a low-frequency residual.

    Dimensions must be divisible by 2**levels; odd intermediate sizes are
    rejected rather than padded.
    """
    if levels < 0:
        raise ShapeError("laplacian_decompose", f"levels must be >= 0, got {levels}")
    h, w = x.data.shape[2], x.data.shape[3]
    factor = 1 << levels
    if h % factor or w % factor:
        raise ShapeError("laplacian_decompose",
                         f"dims {h}x{w} not divisible by 2^{levels}")
    bandpass = []
    current = x
    for _ in range(levels):
        coarse = down(current)
        bandpass.append(add(current, neg(up(coarse))))
        current = coarse
    return LaplacianLevels(bandpass=bandpass, residual=current)


def laplacian_reconstruct(levels):
    """Invert laplacian_decompose: fold the residual back up through the
    bandpass stack."""
    current = levels.residual
    for band in reversed(levels.bandpass):
        upped = up(current)
        if upped.data.shape != band.data.shape:
            raise ShapeError("laplacian_reconstruct",
                             f"level shape chain broken: {upped.data.shape} vs {band.data.shape}")
        current = add(upped, band)
    return current
