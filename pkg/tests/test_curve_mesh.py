import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from varietyfd.curve_mesh.charts import branch_tangents, fit_power_series_chart
from varietyfd.curve_mesh.mesh import curve_mesh, export_mesh_csv, find_singular_points
from varietyfd.curve_mesh.tracing import project_to_curve, trace_closed_curve
from varietyfd.errors import ConfigError, RankDeficiencyError
from varietyfd.poly import parse_polynomial

XY = ["x", "y"]
CIRCLE = parse_polynomial("x^2 + y^2 - 1", XY)
LEMNISCATE = parse_polynomial("x^4 - x^2 + y^2", XY)
CARDIOID = parse_polynomial("(x^2+y^2)^2 + 4*x*(x^2+y^2) - 4*y^2", XY)
ELLIPSE50 = parse_polynomial("x^2 + 50*y^2 - 1", XY)


def ellipse_arclength(theta):
    # oracle: X(t) = (sin t, cos t / sqrt 50), |X'| = sqrt(cos^2 + sin^2 / 50)
    return quad(lambda t: np.sqrt(np.cos(t) ** 2 + np.sin(t) ** 2 / 50), 0, theta,
                epsabs=1e-13, epsrel=1e-13, limit=400)[0]


# ---------------------------------------------------------------- projection

def test_projection_examples():
    np.testing.assert_allclose(project_to_curve(CIRCLE, (1.1, 0.0)), [1.0, 0.0], atol=1e-12)
    p = project_to_curve(CIRCLE, np.array([3.0, 4.0]) * 1.01 / 5)
    np.testing.assert_allclose(p, [0.6, 0.8], atol=1e-10)


def test_projection_near_node_reports_rank_deficiency():
    with pytest.raises(RankDeficiencyError):
        project_to_curve(LEMNISCATE, (1e-4, 1e-4))


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0.9, 1.1))
def test_projection_lands_on_circle(theta, r):
    p = project_to_curve(CIRCLE, (r * np.cos(theta), r * np.sin(theta)))
    assert abs(CIRCLE(p)) <= 1e-10
    # minimal-norm Gauss-Newton steps keep the circle projection radial
    assert np.arctan2(p[1], p[0]) == pytest.approx(np.arctan2(np.sin(theta), np.cos(theta)),
                                                   abs=1e-9)


# ---------------------------------------------------------------- tracing

def test_trace_circle_length():
    edges = trace_closed_curve(CIRCLE, (1.0, 0.0))
    assert len(edges) == 1
    assert sum(e.length for e in edges) == pytest.approx(2 * np.pi, abs=1e-8)
    e = edges[0]
    assert e.cumulative_arclength[0] == 0.0
    assert np.all(np.diff(e.cumulative_arclength) > 0)
    assert np.max(np.abs(CIRCLE.eval_many(e.samples))) <= 1e-10


def test_trace_ellipse_matches_quadrature():
    edges = trace_closed_curve(ELLIPSE50, (1.0, 0.0))
    assert len(edges) == 1
    assert edges[0].length == pytest.approx(ellipse_arclength(2 * np.pi), abs=1e-8)


def test_lemniscate_length_through_origin():
    mesh = curve_mesh(LEMNISCATE, 160, singular_points=[(0.0, 0.0)])
    oracle = quad(lambda t: np.hypot(np.sin(t), np.cos(2 * t)), 0, 2 * np.pi,
                  epsabs=1e-12, limit=400)[0]
    assert oracle == pytest.approx(6.09722, abs=1e-5)
    assert mesh.total_length == pytest.approx(oracle, abs=1e-7)


# ---------------------------------------------------------------- singular points

def test_find_singular_points():
    pts = find_singular_points(LEMNISCATE, bbox=((-1.1, -0.4), (1.1, 0.4)))
    assert len(pts) == 1 and np.allclose(pts[0], 0.0, atol=1e-10)
    assert find_singular_points(CIRCLE, bbox=((-1.1, -1.1), (1.1, 1.1))) == []
    pts = find_singular_points(CARDIOID, bbox=((-4.1, -2.7), (0.5, 2.7)))
    assert len(pts) == 1 and np.allclose(pts[0], 0.0, atol=1e-10)


def test_declared_point_must_be_singular():
    with pytest.raises(ConfigError):
        find_singular_points(CIRCLE, declared=[(1.0, 0.0)])


def test_undeclared_singular_point_is_reported():
    with pytest.raises(ConfigError, match="undeclared"):
        curve_mesh(LEMNISCATE, 160)


def _dirs(result):
    return sorted((tuple(np.round(np.abs(d), 12)), m) for d, m in result)


def test_branch_tangents():
    r = 1 / np.sqrt(2)
    r12 = round(r, 12)
    assert _dirs(branch_tangents(LEMNISCATE, (0, 0))) == [((r12, r12), 1), ((r12, r12), 1)]
    for d, _ in branch_tangents(LEMNISCATE, (0, 0)):
        assert abs(abs(d[0]) - r) < 1e-12 and abs(abs(d[1]) - r) < 1e-12
    (d, m), = branch_tangents(CARDIOID, (0, 0))
    assert m == 2 and np.allclose(np.abs(d), [1, 0])
    node = parse_polynomial("y^2 - x^2 - x^3", XY)
    assert [m for _, m in branch_tangents(node, (0, 0))] == [1, 1]


def test_branch_tangent_at_smooth_point_is_kernel_of_gradient():
    (d, m), = branch_tangents(CIRCLE, (0.6, 0.8))
    assert m == 1
    assert abs(d @ CIRCLE.grad_at((0.6, 0.8))) < 1e-12


# ---------------------------------------------------------------- charts

def test_cardioid_series_coefficients():
    ch = fit_power_series_chart(CARDIOID, (0, 0), 3, 58)
    np.testing.assert_allclose(ch.coeffs[[2, 4, 6, 8]], [1, -5 / 12, -1 / 16, -91 / 5184],
                               atol=1e-13)
    assert np.all(ch.coeffs[1::2] == 0)
    s = np.linspace(-ch.valid_radius, ch.valid_radius, 101)
    assert np.max(ch.residual(s)) <= 1e-8


def test_trivial_charts():
    ch = fit_power_series_chart(parse_polynomial("y - x^2", XY), (0, 0), 1, 6, series_var="x")
    np.testing.assert_allclose(ch.coeffs, [0, 0, 1, 0, 0, 0, 0], atol=1e-15)
    cusp = fit_power_series_chart(parse_polynomial("y^2 - x^3", XY), (0, 0), 2, 8,
                                  series_var="x")
    np.testing.assert_allclose(cusp.coeffs, np.eye(9)[3], atol=1e-15)
    s = np.linspace(-1, 1, 21)
    assert np.max(cusp.residual(s)) <= 1e-15


def test_wrong_exponent_is_rejected():
    with pytest.raises(Exception):
        fit_power_series_chart(CARDIOID, (0, 0), 2, 12)


# ---------------------------------------------------------------- meshes

def test_circle_mesh_spacing():
    mesh = curve_mesh(CIRCLE, 8)
    ang = np.unwrap(np.arctan2(mesh.nodes[:, 1], mesh.nodes[:, 0]))
    np.testing.assert_allclose(np.abs(np.diff(ang)), np.pi / 4, atol=1e-8)


def test_too_few_nodes():
    with pytest.raises(ConfigError):
        curve_mesh(CIRCLE, 4)


def test_ellipse_mesh_invariants():
    mesh = curve_mesh(ELLIPSE50, 160)
    assert np.max(np.abs(ELLIPSE50.eval_many(mesh.nodes))) <= 1e-10
    grads = np.array([ELLIPSE50.grad_at(p) for p in mesh.nodes])
    assert np.max(np.abs(np.einsum("ij,ij->i", grads, mesh.tangents))
                  / np.linalg.norm(grads, axis=1)) <= 1e-8
    np.testing.assert_allclose(np.linalg.norm(mesh.tangents, axis=1), 1.0, atol=1e-14)
    assert np.all(np.einsum("ij,ij->i", mesh.tangents, np.roll(mesh.tangents, -1, 0)) > 0)
    # independent arc length of every node from the trigonometric parameterisation
    theta = np.mod(np.arctan2(mesh.nodes[:, 0], mesh.nodes[:, 1] * np.sqrt(50)), 2 * np.pi)
    order = np.argsort(theta)
    s = np.array([ellipse_arclength(t) for t in theta[order]])
    gaps = np.diff(np.concatenate([s, [s[0] + ellipse_arclength(2 * np.pi)]]))
    h = ellipse_arclength(2 * np.pi) / 160
    assert np.max(np.abs(gaps - h)) < 0.01 * h


def test_lemniscate_origin_visited_twice():
    mesh = curve_mesh(LEMNISCATE, 160, singular_points=[(0.0, 0.0)])
    assert len(mesh.singular_nodes) == 2
    (sn,) = {id(v): v for v in mesh.singular_nodes.values()}.values()
    assert sorted(sn.passages) == sorted(mesh.singular_nodes)
    assert sorted(mesh.branch_id(i) for i in sn.passages) == [0, 1]
    for i in sn.passages:
        np.testing.assert_array_equal(mesh.nodes[i], [0.0, 0.0])
    smooth = [i for i in range(mesh.N) if i not in mesh.singular_nodes]
    gaps = mesh.gaps()
    h = mesh.arclength_gap
    near = {(i + d) % mesh.N for i in sn.passages for d in (-1, 0)}
    assert np.max(np.abs(gaps[[i for i in smooth if i not in near]] - h)) < 0.01 * h
    assert np.max(np.abs(gaps - h)) < 0.05 * h


def test_mesh_csv(tmp_path):
    mesh = curve_mesh(LEMNISCATE, 40, singular_points=[(0.0, 0.0)])
    path = tmp_path / "m.csv"
    export_mesh_csv(mesh, path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["index", "x", "y", "arclength", "is_singular", "branch_id"]
    assert len(rows) == 40
    assert sum(int(r["is_singular"]) for r in rows) == 2
