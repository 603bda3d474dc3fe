"""Pure-Python/numpy versions of the hot kernels.

These mirror ``_kernels.pyx`` exactly in signature and semantics and are used
whenever the compiled extension is unavailable.
"""

from __future__ import annotations

import numpy as np


class SingularPivotError(ArithmeticError):
    pass


def poly_eval(coeffs: np.ndarray, exps: np.ndarray, x: np.ndarray) -> float:
    if coeffs.shape[0] == 0:
        return 0.0
    return float(np.dot(coeffs, np.prod(x[None, :] ** exps, axis=1)))


def poly_eval_many(coeffs: np.ndarray, exps: np.ndarray, pts: np.ndarray) -> np.ndarray:
    if coeffs.shape[0] == 0:
        return np.zeros(pts.shape[0])
    mono = np.prod(pts[:, None, :] ** exps[None, :, :], axis=2)
    return mono @ coeffs


def _thomas(lower, diag, upper, rhs):
    n = diag.shape[0]
    cp = np.empty(n)
    dp = np.empty(rhs.shape)
    scale = max(np.max(np.abs(diag)), 1e-300)
    piv = diag[0]
    if abs(piv) < 1e-14 * scale:
        raise SingularPivotError("zero pivot at row 0")
    cp[0] = upper[0] / piv
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i] * cp[i - 1]
        if abs(piv) < 1e-14 * scale:
            raise SingularPivotError(f"zero pivot at row {i}")
        cp[i] = upper[i] / piv
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / piv
    out = np.empty(rhs.shape)
    out[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]
    return out


def cyclic_tridiag_solve(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray,
                         rhs: np.ndarray) -> np.ndarray:
    """Solve a periodic tridiagonal system by Sherman-Morrison.

    Row ``i`` reads ``lower[i]*u[i-1] + diag[i]*u[i] + upper[i]*u[i+1] = rhs[i]``
    with indices taken modulo ``n``; ``lower[0]`` and ``upper[n-1]`` are the
    corner entries.
    """
    n = diag.shape[0]
    if n < 3:
        raise ValueError("cyclic tridiagonal solve needs n >= 3")
    beta = lower[0]        # A[0, n-1]
    alpha = upper[n - 1]   # A[n-1, 0]
    gamma = -diag[0] if diag[0] != 0.0 else -1.0
    bb = diag.astype(float).copy()
    bb[0] = diag[0] - gamma
    bb[n - 1] = diag[n - 1] - alpha * beta / gamma
    rhs2 = np.zeros((n, 2))
    rhs2[:, 0] = rhs
    rhs2[0, 1] = gamma
    rhs2[n - 1, 1] = alpha
    sol = _thomas(lower, bb, upper, rhs2)
    x, z = sol[:, 0], sol[:, 1]
    denom = 1.0 + z[0] + beta * z[n - 1] / gamma
    if abs(denom) < 1e-14:
        raise SingularPivotError("singular Sherman-Morrison correction")
    fact = (x[0] + beta * x[n - 1] / gamma) / denom
    return x - fact * z
