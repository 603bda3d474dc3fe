"""One-dimensional finite-difference weights on scattered nodes."""

from __future__ import annotations

import numpy as np

from varietyfd.errors import StencilError

COND_LIMIT = 1e12


def fornberg_weights(nodes, z: float, m: int) -> np.ndarray:
    """Weights ``W[k, j]`` with ``sum_j W[k, j] q(nodes[j]) = q^(k)(z)``.

    Exact for polynomials of degree ``len(nodes) - 1``; ``k = 0..m``.
    """
    x = np.asarray(nodes, dtype=float)
    n = len(x)
    c = np.zeros((m + 1, n))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - z
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def scaled_vandermonde_cond(nodes, z: float = 0.0) -> float:
    x = np.asarray(nodes, dtype=float) - z
    h = np.max(np.abs(x))
    if h == 0.0:
        return np.inf
    t = x / h
    V = np.vander(t, increasing=True).T
    return float(np.linalg.cond(V))


def _check_nodes(x: np.ndarray, z: float) -> None:
    if len(np.unique(x)) != len(x):
        raise StencilError(f"duplicated stencil coordinates {x.tolist()}")
    cond = scaled_vandermonde_cond(x, z)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise StencilError(f"ill-conditioned stencil (scaled Vandermonde condition {cond:.3g})")


def stencil_weights_1d(alphas, derivative_order: int = 2, z: float = 0.0) -> np.ndarray:
    """Weights for ``d^k/dt^k`` at ``z`` from values at ``alphas``.

    With three nodes ``(a_-, 0, a_+)`` the second-derivative weights are
    ``2/(a_-(a_- - a_+))``, ``2/(a_- a_+)`` and ``2/(a_+(a_+ - a_-))``.
    """
    x = np.asarray(alphas, dtype=float)
    if len(x) < derivative_order + 1:
        raise StencilError("too few stencil nodes for the derivative order")
    _check_nodes(x, z)
    return fornberg_weights(x, z, derivative_order)[derivative_order]


def moment_weights(nodes, targets, z: float = 0.0, scale_power: int = 2) -> np.ndarray:
    """Weights ``w`` with ``sum_j w_j (nodes_j - z)**k = targets[k]``.

    Solves the Vandermonde system after scaling nodes to ``[-1, 1]``.  The
    functional is assumed to scale like a derivative of order
    ``scale_power`` (second order by default).
    """
    x = np.asarray(nodes, dtype=float) - z
    n = len(x)
    targets = np.asarray(targets, dtype=float)
    if len(targets) != n:
        raise ValueError("need one moment target per node")
    _check_nodes(x, 0.0)
    h = np.max(np.abs(x))
    t = x / h
    V = np.vander(t, increasing=True).T
    rhs = targets * h ** (scale_power - np.arange(n, dtype=float))
    omega = np.linalg.solve(V, rhs)
    return omega / h**scale_power

