import csv
import json
import types

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from varietyfd.errors import ChartError, ConfigError, StencilError
from varietyfd.harness import solve
from varietyfd.poly import parse_polynomial
from varietyfd.problem import load_problem
from varietyfd.surface_fd import assemble_surface, radial_targets
from varietyfd.surface_fd.assemble import check_quadratic_exactness
from varietyfd.surface_fd.solve import (
    dump_system_json,
    export_surface_solution_csv,
    problem_surface_mesh,
    solve_surface_problem,
)
from varietyfd.surface_fd.weights import derivative_weights_2d, laplacian_weights_2d
from varietyfd.surface_mesh import (
    RevolutionGenerator,
    SurfaceSingularChart,
    sample_surface,
    stencil_local_coords,
    tangent_basis,
)
from varietyfd.surface_mesh.mesh import export_adjacency_csv, export_surface_mesh_csv

XYZ = ["x", "y", "z"]
SPHERE = parse_polynomial("x^2 + y^2 + z^2 - 1", XYZ)
ELLIPSOID10 = parse_polynomial("x^2 + 10*y^2 + 10*z^2 - 1", XYZ)
HORN = parse_polynomial("(x^2 + y^2 + z^2)^2 - 4*(x^2 + y^2)", XYZ)


@pytest.fixture(scope="module")
def horn_problem():
    return load_problem("horn_torus")


@pytest.fixture(scope="module")
def horn_mesh(horn_problem):
    return problem_surface_mesh(horn_problem, 40)


# ---------------------------------------------------------------- frames

def test_tangent_basis_examples():
    w1, w2 = tangent_basis(SPHERE, (0, 0, -1))
    for w in (w1, w2):
        assert abs(w[2]) < 1e-15
    w1, w2 = tangent_basis(ELLIPSOID10, (1, 0, 0))
    assert abs(w1[0]) < 1e-15 and abs(w2[0]) < 1e-15
    assert abs(np.linalg.det(np.array([w1[1:], w2[1:]]))) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, np.pi - 0.05), st.floats(0, 2 * np.pi))
def test_tangent_basis_orthonormal(v, phi):
    p = np.array([np.cos(v), np.sin(v) * np.cos(phi) / np.sqrt(10),
                  np.sin(v) * np.sin(phi) / np.sqrt(10)])
    w1, w2 = tangent_basis(ELLIPSOID10, p)
    g = ELLIPSOID10.grad_at(p)
    W = np.array([w1, w2])
    np.testing.assert_allclose(W @ W.T, np.eye(2), atol=1e-12)
    assert np.max(np.abs(W @ g)) <= 1e-10 * np.linalg.norm(g)


def test_tangent_basis_rejects_singular_point():
    with pytest.raises(StencilError):
        tangent_basis(HORN, (0, 0, 0))


def test_tangent_plane_chart_metric_is_identity():
    # graph chart over the tangent plane at (1, 0, 0), built by projecting
    # along the normal: G(0) = I and first derivatives of G vanish
    p = np.array([1.0, 0.0, 0.0])
    w1, w2 = tangent_basis(ELLIPSOID10, p)
    n = np.cross(w1, w2)

    def X(t):
        base = p + t[0] * w1 + t[1] * w2
        lam = 0.0
        for _ in range(50):
            q = base + lam * n
            lam -= ELLIPSOID10(q) / (ELLIPSOID10.grad_at(q) @ n)
        return base + lam * n

    def G(t, h=1e-5):
        J = np.array([(X(t + h * e) - X(t - h * e)) / (2 * h) for e in np.eye(2)])
        return J @ J.T

    np.testing.assert_allclose(G(np.zeros(2)), np.eye(2), atol=1e-8)
    h = 1e-3
    for e in np.eye(2):
        dG = (G(h * e) - G(-h * e)) / (2 * h)
        assert np.max(np.abs(dG)) < 1e-6


# ---------------------------------------------------------------- sampling

def test_sphere_sample_count_and_spacing():
    gen = load_problem("sphere").generator
    pts, _, stats = sample_surface(SPHERE, gen, 20)
    assert abs(len(pts) - 400) <= 0.05 * 400
    assert stats["ratio"] <= 1.8
    assert np.max(np.abs(SPHERE.eval_many(pts))) <= 1e-10


def test_ellipsoid_a1_is_the_sphere():
    a = load_problem("ellipsoid_a1")
    pts, _, _ = sample_surface(a.polynomial, a.generator, 20)
    assert abs(len(pts) - 400) <= 20
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)


def test_generator_config_validation():
    with pytest.raises(ConfigError):
        RevolutionGenerator.from_config({"kind": "revolution", "axis": "z", "param": "v",
                                         "radius": "sin(v)", "height": "cos(v)",
                                         "domain": [0, "pi"], "rings": "hexagonal"})


def test_product_grids_nest(horn_problem):
    gen = RevolutionGenerator.from_config(horn_problem.generator)
    coarse, _ = gen.samples(20)
    fine, _ = gen.samples(40)
    d, _ = cKDTree(fine).query(coarse)
    assert np.max(d) < 1e-12


def test_horn_mesh_single_origin_node(horn_mesh):
    assert list(horn_mesh.singular_nodes) == [int(np.argmin(np.linalg.norm(horn_mesh.nodes, axis=1)))]
    (s,) = horn_mesh.singular_nodes
    d = np.linalg.norm(horn_mesh.nodes, axis=1)
    d[s] = np.inf
    assert np.min(d) >= horn_mesh.spacing / 2
    assert np.max(np.abs(HORN.eval_many(horn_mesh.nodes))) <= 1e-10


def test_horn_chart(horn_mesh):
    (chart,) = horn_mesh.singular_nodes.values()
    assert chart.check(HORN) <= 1e-8
    t = np.array([[0.3, 1.1], [-0.5, 4.0], [0.8, 0.2]])
    np.testing.assert_allclose(chart.param_of(chart.point(t)), t, atol=1e-10)
    # G = diag(4 t1^2 + (2 - 2 t1^2)^2/(2 - t1^2), t1^4): G^22 = 1 / t1^4
    A, _ = chart.laplace_coefficients(t)
    np.testing.assert_allclose(A[:, 1, 1], 1 / t[:, 0] ** 4, rtol=1e-12)
    np.testing.assert_allclose(A[:, 0, 1], 0.0, atol=1e-12)


def test_chart_rejects_wrong_surface():
    cfg = {"X": ["t1", "t2", "0"], "dX": [["1", "0", "0"], ["0", "1", "0"]],
           "ddX": [["0", "0", "0"]] * 3, "valid_radius": 0.5}
    chart = SurfaceSingularChart.from_config((0, 0, 0), cfg)
    with pytest.raises(ChartError):
        chart.check(HORN)


def test_mesh_invariants_sphere():
    m = problem_surface_mesh(load_problem("sphere"), 20)
    W = m.tangent_bases
    np.testing.assert_allclose(np.einsum("nic,njc->nij", W, W), np.broadcast_to(np.eye(2), (m.N, 2, 2)),
                               atol=1e-12)
    g = np.column_stack([gp.eval_many(m.nodes) for gp in SPHERE.gradient])
    assert np.max(np.abs(np.einsum("nic,nc->ni", W, g))) <= 1e-8
    assert all(len(nb) >= 8 for nb in m.neighbor_lists)
    assert np.min(m.neighbor_symmetry()) >= 4


def test_stencil_local_coords_sphere():
    m = problem_surface_mesh(load_problem("sphere"), 20)
    for i in range(m.N):
        idx, t = stencil_local_coords(m, i, 8)
        assert idx[0] == i and np.all(t[0] == 0)
        # ring offsets on the latitude grid put the eighth neighbour up to ~1.96 spacings out
        assert np.max(np.linalg.norm(t[1:], axis=1)) <= 2.0 * m.spacing


def _plane_mesh(h=0.1):
    g = np.array([(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)], dtype=float) * h
    nodes = np.column_stack([g, np.zeros(9)])
    centre = 4
    nb = np.array([j for j in range(9) if j != centre])
    return types.SimpleNamespace(
        nodes=nodes, neighbor_lists={centre: nb}, singular_nodes={},
        tangent_bases={centre: np.array([[1.0, 0, 0], [0, 1.0, 0]])},
        is_singular=lambda i: False), centre


def test_stencil_local_coords_plane():
    mesh, c = _plane_mesh(0.1)
    idx, t = stencil_local_coords(mesh, c, 8)
    got = {tuple(np.round(v / 0.1).astype(int)) for v in t}
    assert got == {(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)}


def test_stencil_local_coords_degenerate_spread():
    mesh, c = _plane_mesh(0.1)
    mesh.nodes[:, 1] = np.abs(mesh.nodes[:, 1]) + 1e-3 * np.arange(9)
    mesh.nodes[:, 0] = np.abs(mesh.nodes[:, 0]) + 1e-3
    mesh.nodes[c] = 0.0
    with pytest.raises(StencilError):
        stencil_local_coords(mesh, c, 8)


def test_horn_neighbours_skip_singular_node(horn_mesh):
    (s,) = horn_mesh.singular_nodes
    near = [i for i in range(horn_mesh.N) if s in horn_mesh.neighbor_lists[i]]
    assert near
    for i in near:
        idx, _ = stencil_local_coords(horn_mesh, i, None, min_sectors=1)
        assert s not in idx


# ---------------------------------------------------------------- weights

def test_cross_weights():
    h = 0.2
    t = np.array([[0, 0], [h, 0], [-h, 0], [0, h], [0, -h]], dtype=float)
    np.testing.assert_allclose(laplacian_weights_2d(t), np.array([-4, 1, 1, 1, 1]) / h**2,
                               rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(8, 14))
def test_weights_exact_on_quadratics(seed, k):
    rng = np.random.default_rng(seed)
    ang = np.sort(rng.uniform(0, 2 * np.pi, k))
    r = rng.uniform(0.5, 1.5, k) * 0.1
    t = np.vstack([[0.0, 0.0], np.column_stack([r * np.cos(ang), r * np.sin(ang)])])
    if len({int(a // (np.pi / 2)) for a in ang}) < 4:
        return
    w = laplacian_weights_2d(t)
    check_quadratic_exactness(t, w, tol=1e-9)
    fx = derivative_weights_2d(t, [0, 1, 0, 0, 0, 0])
    assert fx @ t[:, 0] == pytest.approx(1.0, rel=1e-9)
    assert abs(fx @ t[:, 1]) <= 1e-9 * np.abs(fx).sum() * 0.1


def test_unresolved_derivative_rejected():
    t = np.array([[0, 0], [1, 0], [-1, 0], [2, 0], [-2, 0], [3, 0]], dtype=float)
    with pytest.raises(StencilError):
        laplacian_weights_2d(t)


def test_exactness_checker_flags_bad_weights():
    h = 0.2
    t = np.array([[0, 0], [h, 0], [-h, 0], [0, h], [0, -h]], dtype=float)
    with pytest.raises(StencilError):
        check_quadratic_exactness(t, np.array([-4, 1, 1, 1, 1.1]) / h**2)


def test_radial_targets_horn(horn_mesh):
    (chart,) = horn_mesh.singular_nodes.values()
    kappa = radial_targets(chart)
    assert kappa[0] == 0.0
    assert kappa[1] == pytest.approx(0.0, abs=1e-8)
    assert kappa[2] == pytest.approx(3.0, rel=1e-6)


# ---------------------------------------------------------------- solves

def test_sphere_solution_and_outputs(tmp_path):
    sol = solve_surface_problem(load_problem("sphere"), 20, debug=True)
    assert sol.linf_error < 2e-2
    assert sol.residual <= 1e-10
    assert sol.meta["nodes"] == sol.N
    path = tmp_path / "s.csv"
    export_surface_solution_csv(sol, path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["index", "x", "y", "z", "u", "exact_u", "abs_error"]
    export_surface_mesh_csv(sol.mesh, tmp_path / "m.csv")
    export_adjacency_csv(sol.mesh, tmp_path / "a.csv")
    assert next(csv.reader(open(tmp_path / "m.csv"))) == ["index", "x", "y", "z", "is_singular"]
    dump_system_json(sol.system, tmp_path / "sys.json")
    data = json.load(open(tmp_path / "sys.json"))
    assert isinstance(data, dict) and data


def test_surface_rows_are_elliptic(horn_mesh, horn_problem):
    sys = assemble_surface(horn_mesh, horn_problem.c, horn_problem.f)
    A = sys.matrix()
    assert np.all(A.diagonal() > 0)
    # constants: operator part annihilates 1, so row sums equal c = 1
    np.testing.assert_allclose(np.asarray(A.sum(axis=1)).ravel(), 1.0, atol=1e-8)


def _horn_oracle(M=20000):
    """u = U(v) cos(phi) on the meridian r = 1 + cos v, z = sin v (unit speed in v)."""
    v = np.linspace(np.pi, 3 * np.pi, M + 1)
    h = v[1] - v[0]
    vi = v[1:-1]
    r, dr = 1 + np.cos(vi), -np.sin(vi)
    # -U'' - (r'/r) U' + (1/r^2 + 1) U = r,  U = 0 at the pinch
    main = 2 / h**2 + 1 / r**2 + 1
    lo = -1 / h**2 + dr / (2 * h * r)
    up = -1 / h**2 - dr / (2 * h * r)
    A = sp.diags([lo[1:], main, up[:-1]], [-1, 0, 1], format="csc")
    U = np.zeros(M + 1)
    U[1:-1] = spla.spsolve(A, r)
    return v, U


def test_horn_torus_against_ode_oracle(horn_problem):
    v, U = _horn_oracle()
    errs = []
    for N in (20, 40):
        sol = solve(horn_problem, N)
        x, y, z = sol.nodes.T
        rr = np.hypot(x, y)
        vv = np.mod(np.arctan2(z, rr - 1) - np.pi, 2 * np.pi) + np.pi
        cosphi = np.divide(x, rr, out=np.zeros_like(x), where=rr > 0)
        errs.append(np.max(np.abs(sol.values - np.interp(vv, v, U) * cosphi)))
    assert errs[1] < 5e-3
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.2)
