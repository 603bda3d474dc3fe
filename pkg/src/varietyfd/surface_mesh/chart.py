"""Closed-form charts at isolated surface singularities.

Convention: the chart ``(t1, t2) -> X`` maps ``t1 = 0`` (any ``t2``) to the
singular point, ``t1`` is a signed radial coordinate and ``t2`` is an angle
(2 pi periodic).  The validity region is ``|t1| <= valid_radius``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from varietyfd.errors import ChartError, ConfigError
from varietyfd.poly import Polynomial, ScalarExpr

CHART_TOL = 1e-8


def wrap_angle(a):
    """Map angles to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


@dataclass
class SurfaceSingularChart:
    location: np.ndarray
    X: tuple[ScalarExpr, ...]
    dX: tuple[tuple[ScalarExpr, ...], ...]      # [d/dt1, d/dt2]
    ddX: tuple[tuple[ScalarExpr, ...], ...]     # [d2/dt1^2, d2/dt1dt2, d2/dt2^2]
    valid_radius: float
    params: tuple[str, str] = ("t1", "t2")

    @classmethod
    def from_config(cls, location, cfg: dict) -> "SurfaceSingularChart":
        params = tuple(cfg.get("params", ("t1", "t2")))
        mk = lambda comps: tuple(ScalarExpr(c, list(params)) for c in comps)  # noqa: E731
        if len(cfg["X"]) != 3 or len(cfg["dX"]) != 2 or len(cfg["ddX"]) != 3:
            raise ConfigError("surface chart needs X (3 comps), dX (2 x 3) and ddX (3 x 3)")
        return cls(np.asarray(location, dtype=float), mk(cfg["X"]),
                   tuple(mk(d) for d in cfg["dX"]), tuple(mk(d) for d in cfg["ddX"]),
                   float(cfg["valid_radius"]), params)

    def _eval(self, comps, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        env = {self.params[0]: t[:, 0], self.params[1]: t[:, 1]}
        return np.column_stack([np.broadcast_to(e.evaluate(env), (len(t),)) for e in comps])

    def point(self, t) -> np.ndarray:
        return self._eval(self.X, t)

    def first(self, t) -> np.ndarray:
        """``(n, 2, 3)``: partials with respect to ``t1`` and ``t2``."""
        return np.stack([self._eval(d, t) for d in self.dX], axis=1)

    def second(self, t) -> np.ndarray:
        """``(n, 3, 3)``: ``X_11, X_12, X_22``."""
        return np.stack([self._eval(d, t) for d in self.ddX], axis=1)

    def check(self, F: Polynomial, samples: int = 24) -> float:
        """Largest ``|F(X(t))|`` on a grid over the validity region."""
        R = self.valid_radius
        g1, g2 = np.meshgrid(np.linspace(-R, R, samples), np.linspace(0, 2 * np.pi, samples))
        t = np.column_stack([g1.ravel(), g2.ravel()])
        res = float(np.max(np.abs(F.eval_many(self.point(t)))))
        if np.linalg.norm(self.point([[0.0, 0.3]])[0] - self.location) > CHART_TOL:
            raise ChartError("chart does not map t1 = 0 to the singular point")
        if res > CHART_TOL:
            raise ChartError(f"chart leaves the surface: |F(X(t))| = {res:.3g}")
        return res

    def laplace_coefficients(self, t):
        """``(A, b)`` with ``Delta u = A_ij u_ij + b_j u_j`` at chart points ``t``.

        ``A = G^{-1}`` and ``b_j = d_i(G^{ij}) + G^{ij} d_i log sqrt(g)``.
        """
        D1 = self.first(t)
        D2 = self.second(t)
        G = np.einsum("nic,njc->nij", D1, D1)
        Ginv = np.linalg.inv(G)
        # dG[n, k, i, j] = d_k G_ij
        idx = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 2}
        Xkl = lambda k, l: D2[:, idx[(k, l)]]  # noqa: E731
        dG = np.empty((len(G), 2, 2, 2))
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    dG[:, k, i, j] = (np.einsum("nc,nc->n", Xkl(k, i), D1[:, j])
                                      + np.einsum("nc,nc->n", D1[:, i], Xkl(k, j)))
        dGinv = -np.einsum("nia,nkab,nbj->nkij", Ginv, dG, Ginv)
        dlogsq = 0.5 * np.einsum("nij,nkji->nk", Ginv, dG)
        b = np.einsum("niij->nj", dGinv) + np.einsum("nij,ni->nj", Ginv, dlogsq)
        return Ginv, b

    def param_of(self, q, guess=None, iters: int = 40) -> np.ndarray:
        """Chart parameters of surface points ``q`` (Gauss-Newton).

        Starts from ``guess`` when given; points that fail from there are
        retried from the nearest sample of a grid over the validity region.
        """
        q = np.atleast_2d(np.asarray(q, dtype=float))
        if guess is None:
            t = self._gauss_newton(q, self._grid_guess(q), iters)
        else:
            t = self._gauss_newton(q, np.atleast_2d(np.asarray(guess, dtype=float)), iters)
            bad = np.linalg.norm(self.point(t) - q, axis=1) > 1e-9
            if np.any(bad):
                t[bad] = self._gauss_newton(q[bad], self._grid_guess(q[bad]), iters)
        err = np.linalg.norm(self.point(t) - q, axis=1)
        if np.any(err > 1e-9):
            raise ChartError(f"chart inversion failed (residual {err.max():.3g})")
        return t

    def _grid_guess(self, q: np.ndarray) -> np.ndarray:
        R = self.valid_radius
        g1, g2 = np.meshgrid(np.linspace(-1.2 * R, 1.2 * R, 97),
                             np.linspace(0, 2 * np.pi, 72, endpoint=False))
        grid = np.column_stack([g1.ravel(), g2.ravel()])
        gx = self.point(grid)
        near = np.array([np.argmin(((gx - p) ** 2).sum(-1)) for p in q], dtype=int)
        return grid[near].copy()

    def _gauss_newton(self, q: np.ndarray, t: np.ndarray, iters: int) -> np.ndarray:
        t = t.copy()
        for _ in range(iters):
            r = self.point(t) - q
            JT = self.first(t)                            # (n, 2, 3)
            H = JT @ JT.transpose(0, 2, 1)
            gvec = np.einsum("nij,nj->ni", JT, r)
            # guard the polar degeneracy at t1 = 0
            H[:, 1, 1] += 1e-14
            dt = np.linalg.solve(H, gvec[..., None])[..., 0]
            t -= dt
            if np.max(np.abs(dt)) < 1e-14:
                break
        t[:, 1] = np.mod(t[:, 1], 2.0 * np.pi)
        return t
