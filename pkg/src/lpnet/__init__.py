"""Progressive multi-scale depth completion with a self-contained autodiff core."""

from .tensor import Tensor, GradTape

__all__ = ["Tensor", "GradTape"]
__version__ = "0.1.0"
