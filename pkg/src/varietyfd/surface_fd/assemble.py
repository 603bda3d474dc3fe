"""Surface systems: tangent-plane rows at smooth nodes, chart rows near singularities.

Smooth node ``p`` with frame ``(w1, w2)``: the Laplace-Beltrami operator at
``p`` is the flat Laplacian in ``t = ((q - p).w1, (q - p).w2)``, read off a
weighted quadratic fit over the nine-point stencil.

Nodes with chart parameter ``|t1| <= valid_radius / 2`` use the full operator
``G^{ij} u_ij + b^j u_j`` of the chart metric, with the same neighbours
mapped into chart coordinates.  The singular node itself (``t1 = 0``) uses a
radial fit ``u ~ sum_p a_p t1^p`` over its neighbours and the finite parts
``lim Delta(t1^p)`` (angular average, odd terms cancel across ``t1 = 0``).
"""

from __future__ import annotations

import numpy as np

from varietyfd.curve_fd.global_scheme import eval_field
from varietyfd.curve_fd.system import DiscreteSystem, RowBuilder
from varietyfd.errors import StencilError
from varietyfd.poly import ScalarExpr
from varietyfd.surface_fd.weights import derivative_weights_2d, laplacian_weights_2d
from varietyfd.surface_mesh.chart import SurfaceSingularChart, wrap_angle
from varietyfd.surface_mesh.mesh import SurfaceMesh, stencil_local_coords

ORIGIN_DEGREE = 4


def radial_targets(chart: SurfaceSingularChart, degree: int = ORIGIN_DEGREE,
                   eps: float = 1e-3, angles: int = 16) -> np.ndarray:
    """Finite parts of ``Delta(t1^p)`` at ``t1 = 0`` for ``p = 0..degree``.

    Averages over ``t1 = +-e`` and ``angles`` values of ``t2`` at two radii and
    Richardson-extrapolates (the symmetric average is even in ``e``).
    """
    out = np.zeros(degree + 1)
    est = []
    for e in (eps, 2 * eps):
        t2 = 2 * np.pi * np.arange(angles) / angles
        t = np.vstack([np.column_stack([np.full(angles, s * e), t2]) for s in (1.0, -1.0)])
        A, b = chart.laplace_coefficients(t)
        t1 = t[:, 0]
        row = np.zeros(degree + 1)
        for p in range(1, degree + 1):
            d1 = p * t1 ** (p - 1)
            d2 = p * (p - 1) * t1 ** (p - 2) if p >= 2 else np.zeros_like(t1)
            row[p] = np.mean(A[:, 0, 0] * d2 + b[:, 0] * d1)
        est.append(row)
    out[:] = (4.0 * est[0] - est[1]) / 3.0
    return out


def _chart_params(mesh: SurfaceMesh) -> dict[int, tuple[int, np.ndarray]]:
    """``node -> (singular node, chart parameter)`` for nodes inside half the radius."""
    out = {}
    for s, chart in mesh.singular_nodes.items():
        near = np.nonzero(np.linalg.norm(mesh.nodes - chart.location, axis=1)
                          <= _ambient_radius(chart))[0]
        near = np.array([j for j in near if j not in mesh.singular_nodes], dtype=int)
        if len(near) == 0:
            continue
        t = chart.param_of(mesh.nodes[near])
        for j, tj in zip(near, t):
            out[int(j)] = (s, tj)
    return out


def _ambient_radius(chart: SurfaceSingularChart) -> float:
    """Ambient radius enclosing the chart image of ``|t1| <= valid_radius``."""
    R = chart.valid_radius
    g1, g2 = np.meshgrid(np.linspace(-R, R, 41), np.linspace(0, 2 * np.pi, 16))
    pts = chart.point(np.column_stack([g1.ravel(), g2.ravel()]))
    return float(np.max(np.linalg.norm(pts - chart.location, axis=1)))


def _chart_row(mesh: SurfaceMesh, i: int, chart: SurfaceSingularChart, ti: np.ndarray):
    idx = np.concatenate([[i], mesh.neighbor_lists[i]])
    tj = np.tile(ti, (len(idx) - 1, 1))
    smooth = np.array([j not in mesh.singular_nodes for j in idx[1:]])
    tj[smooth] = chart.param_of(mesh.nodes[idx[1:][smooth]], guess=tj[smooth])
    # the singular point is t1 = 0 at every angle; take the centre's
    tj[~smooth, 0] = 0.0
    d = np.column_stack([tj[:, 0] - ti[0], wrap_angle(tj[:, 1] - ti[1])])
    coords = np.vstack([[0.0, 0.0], d])
    r2 = np.sum((mesh.nodes[idx] - mesh.nodes[i]) ** 2, axis=1)
    wts = 1.0 / (1e-2 * mesh.spacing**2 + r2)
    A, b = chart.laplace_coefficients(ti[None, :])
    A, b = A[0], b[0]
    # coefficient order: 1, t1, t2, t1^2, t1 t2, t2^2
    functional = [0.0, b[0], b[1], 2 * A[0, 0], 2 * A[0, 1], 2 * A[1, 1]]
    return idx, derivative_weights_2d(coords, functional, weights=wts, periodic=True)


def _origin_row(mesh: SurfaceMesh, i: int, chart: SurfaceSingularChart,
                degree: int = ORIGIN_DEGREE):
    """Radial fit over the nearest nodes spanning ``degree`` distinct ``t1`` values.

    Whole rings are taken (every node at least as close as the last new
    ``t1``), so angular content averages out of the fitted coefficients.
    """
    d = np.linalg.norm(mesh.nodes - mesh.nodes[i], axis=1)
    order = np.argsort(d, kind="stable")
    inside = _ambient_radius(chart)
    order = np.array([j for j in order
                      if j not in mesh.singular_nodes and d[j] <= inside], dtype=int)
    t1 = chart.param_of(mesh.nodes[order])[:, 0]
    seen: list[float] = []
    last = None
    for n, v in enumerate(t1):
        if all(abs(v - w) > 1e-9 * max(1.0, abs(v)) for w in seen):
            seen.append(v)
            if len(seen) == degree:
                last = d[order[n]]
                break
    if last is None:
        raise StencilError(f"fewer than {degree} distinct radii around singular node {i}")
    take = np.nonzero(d[order] <= last * (1 + 1e-9))[0]
    idx = np.concatenate([[i], order[take]])
    r = np.concatenate([[0.0], t1[take]])
    h = np.max(np.abs(r))
    V = np.column_stack([(r / h) ** p for p in range(degree + 1)])
    wts = 1.0 / (1e-2 * mesh.spacing**2 + d[idx] ** 2)
    sw = np.sqrt(wts / wts.max())
    M = np.linalg.pinv(V * sw[:, None]) * sw[None, :]
    kappa = radial_targets(chart, degree) * h ** -np.arange(degree + 1)
    return idx, kappa @ M


def check_quadratic_exactness(t: np.ndarray, w: np.ndarray, tol: float = 1e-9) -> None:
    """Raise unless ``w`` maps every quadratic in ``t`` to its Laplacian."""
    h = np.sqrt(np.median(np.einsum("ij,ij->i", t[1:], t[1:])))
    s, ws = t / h, np.asarray(w) * h * h
    tests = [(np.ones(len(s)), 0.0), (s[:, 0], 0.0), (s[:, 1], 0.0),
             (s[:, 0] ** 2, 2.0), (s[:, 0] * s[:, 1], 0.0), (s[:, 1] ** 2, 2.0)]
    for q, target in tests:
        err = abs(ws @ q - target)
        if err > tol * np.abs(ws).sum():
            raise StencilError(f"weights miss a quadratic moment by {err:.3g}")


def assemble_surface(mesh: SurfaceMesh, c: ScalarExpr, f: ScalarExpr,
                     variables=("x", "y", "z"), k: int = 8,
                     debug: bool = False) -> DiscreteSystem:
    """One row ``-Delta_h u + c u = f`` per node; unknowns follow node order.

    ``debug=True`` re-checks quadratic exactness of every tangent-plane row.
    """
    cv = eval_field(c, variables, mesh.nodes, "c")
    fv = eval_field(f, variables, mesh.nodes, "f")
    charted = _chart_params(mesh)
    rb = RowBuilder(mesh.N)
    for i in range(mesh.N):
        if i in mesh.singular_nodes:
            idx, w = _origin_row(mesh, i, mesh.singular_nodes[i])
        elif i in charted and abs(charted[i][1][0]) <= 0.5 * mesh.singular_nodes[charted[i][0]].valid_radius:
            s, ti = charted[i]
            idx, w = _chart_row(mesh, i, mesh.singular_nodes[s], ti)
        else:
            idx, t = stencil_local_coords(mesh, i, k)
            w = laplacian_weights_2d(t)
            if debug:
                check_quadratic_exactness(t, w)
        if -w[0] <= 0.0:
            raise StencilError(f"non-elliptic row at node {i}: centre weight {w[0]:.3g}")
        vals = -np.asarray(w, dtype=float)
        vals[0] += cv[i]
        rb.add(i, idx, vals, fv[i])
    return rb.build([(i, -1) for i in range(mesh.N)])
