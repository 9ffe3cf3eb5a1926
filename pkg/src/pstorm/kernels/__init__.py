"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

The compiled extension (``pstorm.kernels._cy``) is preferred when it imports;
otherwise the numpy implementations in ``pstorm.kernels._np`` are used.  Set
``PSTORM_BACKEND=numpy`` (or ``cython``) to force a backend, and call
``use_backend()`` to switch at runtime (used by the backend benchmark).

Callers must access kernels as module attributes (``kernels.soft_threshold``)
rather than importing the names, so that ``use_backend`` takes effect.
"""

import os

from . import _np

_KERNEL_NAMES = (
    "soft_threshold",
    "project_nonneg_ball",
    "neg_corr_grad",
    "neg_corr_grad_pair",
    "momentum_update",
    "normalize_rows_inplace",
)

try:
    from . import _cy
except ImportError:
    _cy = None

BACKEND = None


def available_backends():
    return ("numpy", "cython") if _cy is not None else ("numpy",)


def get_backend(name):
    """Return the backend module for ``name`` ('numpy' or 'cython')."""
    if name == "numpy":
        return _np
    if name == "cython":
        if _cy is None:
            raise RuntimeError("compiled kernel extension is not available")
        return _cy
    raise ValueError(f"unknown backend {name!r}")


def use_backend(name):
    """Bind the module-level kernel functions to the given backend."""
    global BACKEND
    impl = get_backend(name)
    for fn in _KERNEL_NAMES:
        globals()[fn] = getattr(impl, fn)
    BACKEND = name


_requested = os.environ.get("PSTORM_BACKEND", "auto")
if _requested == "auto":
    use_backend("cython" if _cy is not None else "numpy")
else:
    use_backend(_requested)
