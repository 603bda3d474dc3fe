"""Generalised finite-difference weights on scattered planar stencils."""

from __future__ import annotations

import numpy as np

from varietyfd.errors import StencilError

COND_LIMIT = 1e12
# monomials t1^i t2^j with i + j <= 2
QUAD_EXPONENTS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def _design(s: np.ndarray, h: float, periodic: bool) -> np.ndarray:
    if not periodic:
        return np.column_stack([s[:, 0] ** i * s[:, 1] ** j for i, j in QUAD_EXPONENTS])
    # angle column: sin and 2 (1 - cos) agree with t2, t2^2 to second order
    a = s[:, 1] * h
    sn = np.sin(a) / h
    cs = 2.0 * (1.0 - np.cos(a)) / h**2
    return np.column_stack([np.ones(len(s)), s[:, 0], sn, s[:, 0] ** 2, s[:, 0] * sn, cs])


def quadratic_fit_operator(coords, eps: float | None = None, weights=None,
                           periodic: bool = False):
    """``(M, VT, h)``: ``a = M u`` is the weighted least-squares quadratic fit.

    ``M`` is 6 x n, ``VT`` spans the resolved coefficient directions in the
    coordinates scaled by the stencil size ``h``.
    Coefficients follow :data:`QUAD_EXPONENTS`.  Default weights are
    ``1 / (eps + |t|^2)`` with ``eps = 1e-2 (median |t|)^2``.  Directions the
    data cannot resolve (for instance ``t1 t2`` on a five-point cross) get the
    minimum-norm coefficient; the normal-equation condition number is checked
    on the resolved part only.

    With ``periodic=True`` the second coordinate is an angle and the
    ``t2`` columns are replaced by ``sin t2`` and ``2 (1 - cos t2)``: same
    derivatives at the centre, but well behaved over wide angular spreads.
    """
    t = np.asarray(coords, dtype=float)
    if t.ndim != 2 or t.shape[1] != 2 or len(t) < 5:
        raise StencilError("need at least 5 two-dimensional stencil points")
    r2 = np.einsum("ij,ij->i", t, t)
    h = np.sqrt(np.median(r2[r2 > 0])) if np.any(r2 > 0) else 0.0
    if h == 0.0:
        raise StencilError("all stencil points coincide")
    if weights is None:
        e = 1e-2 * h * h if eps is None else eps
        weights = 1.0 / (e + r2)
    s = t / h
    V = _design(s, h, periodic)
    sw = np.sqrt(np.asarray(weights, dtype=float) / np.max(weights))
    B = V * sw[:, None]
    U, sig, VT = np.linalg.svd(B, full_matrices=False)
    keep = sig > sig[0] / np.sqrt(COND_LIMIT)
    M = (VT[keep].T / sig[keep]) @ U[:, keep].T * sw[None, :]
    scale = np.array([h ** -(i + j) for i, j in QUAD_EXPONENTS])
    return M * scale[:, None], VT[keep], h


def _resolved(VT_kept: np.ndarray, functional: np.ndarray) -> bool:
    proj = VT_kept.T @ (VT_kept @ functional)
    return np.linalg.norm(functional - proj) <= 1e-8 * np.linalg.norm(functional)


def derivative_weights_2d(coords, functional, eps: float | None = None, weights=None,
                          periodic: bool = False):
    """Weights for ``sum_k functional[k] * a_k`` over the fitted coefficients."""
    t = np.asarray(coords, dtype=float)
    M, VT, h = quadratic_fit_operator(t, eps, weights, periodic)
    functional = np.asarray(functional, dtype=float)
    scaled = functional * np.array([h ** -(i + j) for i, j in QUAD_EXPONENTS])
    if not _resolved(VT, scaled / np.linalg.norm(scaled)):
        raise StencilError("degenerate stencil: the requested derivatives are not resolved "
                           f"(normal-equation condition above {COND_LIMIT:g})")
    return functional @ M


def laplacian_weights_2d(coords, eps: float | None = None, weights=None) -> np.ndarray:
    """Weights ``w`` with ``sum_j w_j q(t_j) = 2 a20 + 2 a02`` for every quadratic ``q``."""
    return derivative_weights_2d(coords, [0, 0, 0, 2, 0, 2], eps, weights)
