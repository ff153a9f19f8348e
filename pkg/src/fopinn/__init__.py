"""First-order physics-informed neural networks on a small tape-based autodiff core."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
