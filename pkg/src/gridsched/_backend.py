"""Kernel backend selection.

The compiled extension is preferred; the pure-Python module is a drop-in
fallback.  Set GRIDSCHED_PURE=1 to force the fallback (used by the
equivalence tests and the benchmark).  Callers bind late through
``impl`` so tests can swap backends on the fly.
"""

import os

from . import _kernels_py

if os.environ.get("GRIDSCHED_PURE") == "1":
    impl = _kernels_py
else:
    try:
        from . import _kernels as impl  # type: ignore[no-redef]
    except ImportError:
        impl = _kernels_py


def kernel_kind():
    """Name of the active backend: "cython" or "python"."""
    return impl.KERNEL_KIND
