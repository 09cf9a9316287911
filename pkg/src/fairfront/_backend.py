"""Selects the estimator kernel backend at import time.

The compiled Cython kernels cover the two hot paths (hard plug-in CMI
counting and the soft CMI value/gradient); everything else is numpy. The
pure-numpy fallback gives identical results up to float summation order and
is used automatically when the extension is absent.

Set FAIRFRONT_BACKEND=numpy to force the fallback, or =cython to fail loudly
when the extension is missing.
"""

import os

_requested = os.environ.get("FAIRFRONT_BACKEND", "").strip().lower()

try:
    from . import _kernels  # compiled extension
except ImportError:
    _kernels = None

if _requested == "numpy":
    _kernels = None
elif _requested == "cython" and _kernels is None:
    raise ImportError(
        "FAIRFRONT_BACKEND=cython requested but the fairfront._kernels "
        "extension is not built; reinstall with a C compiler available"
    )
elif _requested not in ("", "numpy", "cython"):
    raise ValueError(f"unknown FAIRFRONT_BACKEND {_requested!r}")

BACKEND = "cython" if _kernels is not None else "numpy"
kernels = _kernels
