"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``VARIETYFD_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by the test-suite to cover both paths).
"""

from __future__ import annotations

import os

from varietyfd import _kernels_py
from varietyfd._kernels_py import SingularPivotError

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("VARIETYFD_PURE_PYTHON"):
    try:
        from varietyfd import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

poly_eval = _impl.poly_eval
poly_eval_many = _impl.poly_eval_many
cyclic_tridiag_solve = _impl.cyclic_tridiag_solve

__all__ = [
    "BACKEND",
    "SingularPivotError",
    "cyclic_tridiag_solve",
    "poly_eval",
    "poly_eval_many",
]
