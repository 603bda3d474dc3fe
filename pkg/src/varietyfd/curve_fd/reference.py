"""Comparing mesh solutions with a fine global-parameterisation reference.

Each mesh node is located on the reference parameter interval (the tangent
direction disambiguates passages through a self-intersection) and the
reference values are interpolated there with high-order periodic Lagrange
interpolation.
"""

from __future__ import annotations

import numpy as np

from varietyfd.curve_fd.global_scheme import GlobalParam
from varietyfd.errors import NumericalError


def locate_parameters(gp: GlobalParam, pts: np.ndarray, tangents: np.ndarray | None = None,
                      samples: int = 4096) -> np.ndarray:
    """Parameter ``t`` with ``X(t) = p`` for each row of ``pts``."""
    a, b = gp.domain
    tt = np.linspace(a, b, samples, endpoint=False)
    X = gp.point(tt)
    V = gp.velocity(tt)
    step = np.max(np.linalg.norm(np.diff(X, axis=0), axis=1))
    out = np.empty(len(pts))
    for k, p in enumerate(np.asarray(pts, dtype=float)):
        d = np.linalg.norm(X - p, axis=1)
        cand = np.nonzero(d <= d.min() + 2.0 * step)[0]
        if tangents is not None and len(cand) > 1:
            v = tangents[k]
            align = np.abs(V[cand] @ v) / np.linalg.norm(V[cand], axis=1)
            # prefer the best tangent alignment among the nearest candidates
            score = d[cand] / step - 4.0 * align
            j = cand[np.argmin(score)]
        else:
            j = int(np.argmin(d))
        t = tt[j]
        for _ in range(30):
            x, v1, v2 = gp.point(t)[0], gp.velocity(t)[0], gp.acceleration(t)[0]
            r = x - p
            phi = r @ v1
            dphi = v1 @ v1 + r @ v2
            dt = phi / dphi
            t -= dt
            if abs(dt) < 1e-15 * max(1.0, abs(t)):
                break
        if np.linalg.norm(gp.point(t)[0] - p) > 1e-7:
            raise NumericalError(f"point {tuple(p)} is not on the reference parameterisation")
        out[k] = a + (t - a) % (b - a)
    return out


def periodic_lagrange(values: np.ndarray, domain: tuple[float, float], t, order: int = 8):
    """Interpolate periodic grid values (``t_i = a + i (b-a)/n``) at ``t``."""
    a, b = domain
    n = len(values)
    dt = (b - a) / n
    t = np.atleast_1d(np.asarray(t, dtype=float))
    pos = (t - a) / dt
    base = np.floor(pos).astype(int) - (order // 2 - 1)
    idx = (base[:, None] + np.arange(order)[None, :]) % n
    x0 = pos - base
    out = np.zeros(len(t))
    for j in range(order):
        lj = np.ones(len(t))
        for m in range(order):
            if m != j:
                lj *= (x0 - m) / (j - m)
        out += lj * values[idx[:, j]]
    return out
