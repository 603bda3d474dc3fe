"""Local tangential finite differences on an arc-length mesh.

At node ``p_i`` with unit tangent ``v_i`` the coordinate ``alpha_i(p) =
(p - p_i) . v_i`` parameterises the curve with identity metric and
vanishing metric derivative at ``p_i``, so the Laplace-Beltrami operator
there is the plain second derivative in ``alpha_i``.

Every passage of the traversal through a singular point is its own unknown.
Near a power-series branch (a cusp) rows switch to the branch chart ``X(s)``
and discretise ``U''/g - g' U'/(2 g^2)``; at the singular point itself, where
``g`` vanishes, the row uses finite-part moments of that operator.
"""

from __future__ import annotations

import numpy as np

from varietyfd.curve_fd.global_scheme import eval_field
from varietyfd.curve_fd.stencils import fornberg_weights, moment_weights, stencil_weights_1d
from varietyfd.curve_fd.system import DiscreteSystem, RowBuilder
from varietyfd.curve_mesh.charts import BranchChart, _series_inv, _series_mul
from varietyfd.curve_mesh.mesh import CurveMesh
from varietyfd.errors import ConfigError, StencilError


def _barriers(mesh: CurveMesh) -> set[int]:
    """Passages through power-series branches: tangential windows avoid them."""
    out = set()
    for i, sn in mesh.singular_nodes.items():
        if sn.branches[mesh.branch_id(i)].kind == "power-series":
            out.add(i)
    return out


def stencil_window(mesh: CurveMesh, i: int, width: int, barriers=frozenset()) -> np.ndarray:
    """``width`` consecutive node indices containing ``i``, centred when possible."""
    N = mesh.N
    if width > N:
        raise StencilError(f"stencil width {width} exceeds N={N}")
    k = width // 2
    for shift in sorted(range(-k, k + 1), key=lambda d: (abs(d), d)):
        idx = (i - k + shift + np.arange(width)) % N
        if not any(int(j) in barriers for j in idx if j != i):
            return idx
    raise StencilError(f"no stencil window of width {width} at node {i} avoids singular nodes")


def tangential_coordinates(mesh: CurveMesh, i: int, width: int = 3, window=None):
    """``(indices, alpha)`` for the stencil at node ``i``.

    ``alpha`` must increase strictly along the traversal, otherwise the mesh
    is too coarse for the tangential chart and :class:`StencilError` is raised.
    """
    idx = stencil_window(mesh, i, width) if window is None else np.asarray(window)
    alpha = (mesh.nodes[idx] - mesh.nodes[i]) @ mesh.tangents[i]
    if np.any(np.diff(alpha) <= 0.0):
        raise StencilError(
            f"tangential coordinates not monotone at node {i}; increase N")
    return idx, alpha


def finite_part_moments(chart: BranchChart, n: int) -> np.ndarray:
    """Values of ``Delta s^k`` at ``s = 0`` (finite part), ``k = 0..n-1``.

    With ``g = s^(2r) G(s)``, ``Delta s^k = s^(k-2-2r) H_k(s)`` where
    ``H_k = (k(k-1-r) G - (k/2) s G') / G^2``.
    """
    m = 2 * n + 4
    g = chart.metric_series(m)
    nz = np.nonzero(np.abs(g) > 1e-14 * np.max(np.abs(g)))[0]
    two_r = int(nz[0])
    if two_r % 2:
        raise StencilError("metric vanishes to odd order at the chart centre")
    r = two_r // 2
    G = g[two_r:]
    L = len(G)
    dG = np.zeros(L)
    dG[:-1] = np.arange(1, L) * G[1:]
    sdG = np.concatenate([[0.0], dG[:-1]])
    invG2 = _series_inv(_series_mul(G, G, L), L)
    out = np.zeros(n)
    for k in range(n):
        p = two_r + 2 - k
        if p < 0:
            continue
        H = _series_mul(k * (k - 1 - r) * G - 0.5 * k * sdG, invG2, L)
        out[k] = H[p]
    return out


def _arclength_row(mesh: CurveMesh, i: int, width: int):
    """Second derivative in signed arc length (the weak, flux-continuous reading)."""
    idx = stencil_window(mesh, i, width)
    L = mesh.total_length
    d = (mesh.arclength[idx] - mesh.arclength[i] + 0.5 * L) % L - 0.5 * L
    return idx, stencil_weights_1d(d, 2)


def _chart_row(mesh: CurveMesh, i: int, width: int):
    a, b, s_i = mesh.chart_params[i]
    sn = mesh.singular_list[a]
    chart = sn.branches[b]
    idx = stencil_window(mesh, i, width)
    s = np.empty(width)
    for k, j in enumerate(idx):
        j = int(j)
        if j in mesh.singular_nodes and mesh.singular_nodes[j] is sn:
            s[k] = 0.0
        elif j in mesh.chart_params and mesh.chart_params[j][:2] == (a, b):
            s[k] = mesh.chart_params[j][2]
        else:
            raise StencilError(
                f"chart stencil at node {i} leaves the chart range; raise N or the chart order")
    ds = np.diff(s)
    if not (np.all(ds > 0) or np.all(ds < 0)):
        raise StencilError(f"chart parameters not monotone in the stencil at node {i}")
    if s_i == 0.0:
        w = moment_weights(s, finite_part_moments(chart, width))
    else:
        W = fornberg_weights(s, s_i, 2)
        # the moment check guards conditioning as for tangential stencils
        stencil_weights_1d(s, 2, z=s_i)
        d1 = chart.derivative(s_i, 1)
        d2 = chart.derivative(s_i, 2)
        g = float(d1 @ d1)
        dg = 2.0 * float(d1 @ d2)
        w = W[2] / g - dg / (2.0 * g * g) * W[1]
    return idx, w


def assemble_local_tangential(mesh: CurveMesh, c, f, stencil: int = 3,
                              chart_stencil: int = 11, switch_fraction: float = 1.0,
                              cusp_rows: str = "series",
                              variables=("x", "y")) -> DiscreteSystem:
    """One row per mesh node (so one unknown per branch passage).

    Nodes whose chart parameter satisfies ``|s| <= switch_fraction *
    valid_radius`` of a power-series branch use chart rows with
    ``chart_stencil`` points; all other nodes use tangential rows with
    ``stencil`` points, shifted so that they never straddle a cusp.

    ``cusp_rows="series"`` discretises the operator in the chart variable
    (solutions smooth in ``s``); ``"arclength"`` uses signed arc length
    instead, which yields the flux-continuous weak solution.
    """
    if cusp_rows not in ("series", "arclength"):
        raise ConfigError(f"unknown cusp_rows {cusp_rows!r}")
    if stencil < 3 or stencil % 2 == 0:
        raise ConfigError("stencil must be an odd integer >= 3")
    N = mesh.N
    cv = eval_field(c, variables, mesh.nodes, "c")
    fv = eval_field(f, variables, mesh.nodes, "f")
    barriers = _barriers(mesh)
    rb = RowBuilder(N)
    for i in range(N):
        cp = mesh.chart_params.get(i)
        if cp is not None:
            chart = mesh.singular_list[cp[0]].branches[cp[1]]
            use_chart = abs(cp[2]) <= switch_fraction * chart.valid_radius
        else:
            use_chart = False
        if use_chart:
            row = _chart_row if cusp_rows == "series" else _arclength_row
            idx, w = row(mesh, i, chart_stencil)
        else:
            if i in barriers:
                raise StencilError(f"node {i} sits on a cusp but has no chart row")
            window = stencil_window(mesh, i, stencil, barriers)
            idx, alpha = tangential_coordinates(mesh, i, stencil, window)
            w = stencil_weights_1d(alpha, 2)
        vals = -np.asarray(w, dtype=float)
        centre = int(np.nonzero(idx == i)[0][0])
        vals[centre] += cv[i]
        rb.add(i, idx, vals, fv[i])
    return rb.build([(i, mesh.branch_id(i)) for i in range(N)])
