"""Elementwise kernels, compiled when available.

The Cython extension ``fopinn._kernels`` is used if it was built; otherwise the
numpy implementations in ``fopinn._kernels_py`` are used. Set
``FOPINN_PURE_PYTHON=1`` to force the fallback.
"""

import os

BACKEND = "python"

if os.environ.get("FOPINN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import adam_update, sigmoid, swish, swish_derivative  # noqa: F401

        BACKEND = "cython"
    except ImportError:
        pass

if BACKEND == "python":
    from ._kernels_py import adam_update, sigmoid, swish, swish_derivative  # noqa: F401
