"""Hot numerical kernels with a compiled core and a numpy fallback.

The compiled Cython core is preferred when importable; setting the
environment variable ``VISCOFRAC_PURE`` (to any non-empty value) forces the
numpy fallback. ``BACKEND`` records which one is active.
"""

import os

if os.environ.get("VISCOFRAC_PURE"):
    from ._fallback import bounds_sweep, eigen_split_batch, elem_stiffness_batch

    BACKEND = "numpy"
else:
    try:
        from ._core import bounds_sweep, eigen_split_batch, elem_stiffness_batch

        BACKEND = "compiled"
    except ImportError:
        from ._fallback import bounds_sweep, eigen_split_batch, elem_stiffness_batch

        BACKEND = "numpy"

__all__ = ["BACKEND", "bounds_sweep", "eigen_split_batch", "elem_stiffness_batch"]
