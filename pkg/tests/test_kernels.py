"""Both kernel backends: compiled (when built) and the numpy fallback."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varietyfd import _kernels_py, kernels
from varietyfd.poly import parse_polynomial

try:
    from varietyfd import _kernels as _compiled
except ImportError:  # pragma: no cover - extension not built
    _compiled = None

BACKENDS = [pytest.param(_kernels_py, id="python"),
            pytest.param(_compiled, id="cython",
                         marks=pytest.mark.skipif(_compiled is None, reason="not built"))]


def dense_cyclic(lower, diag, upper):
    n = len(diag)
    A = np.diag(diag)
    for i in range(n):
        A[i, (i - 1) % n] += lower[i]
        A[i, (i + 1) % n] += upper[i]
    return A


@pytest.mark.parametrize("impl", BACKENDS)
def test_poly_eval(impl):
    p = parse_polynomial("(x^2+y^2)^2 + 4*x*(x^2+y^2) - 4*y^2 + 0.5", ["x", "y"])
    pts = np.random.default_rng(1).uniform(-2, 2, (50, 2))
    ref = [((x * x + y * y) ** 2 + 4 * x * (x * x + y * y) - 4 * y * y + 0.5) for x, y in pts]
    np.testing.assert_allclose(impl.poly_eval_many(p._coeffs, p._exps, pts), ref, rtol=1e-13)
    assert impl.poly_eval(p._coeffs, p._exps, pts[0]) == pytest.approx(ref[0], rel=1e-13)


@pytest.mark.parametrize("impl", BACKENDS)
def test_empty_polynomial(impl):
    c, e = np.zeros(0), np.zeros((0, 2), dtype=np.int64)
    assert impl.poly_eval(c, e, np.array([1.0, 2.0])) == 0.0
    np.testing.assert_array_equal(impl.poly_eval_many(c, e, np.ones((3, 2))), 0.0)


@pytest.mark.parametrize("impl", BACKENDS)
@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 200), seed=st.integers(0, 2**32 - 1))
def test_cyclic_solve_matches_dense(impl, n, seed):
    rng = np.random.default_rng(seed)
    lo, up = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    d = np.abs(lo) + np.abs(up) + rng.uniform(0.05, 3, n)
    rhs = rng.normal(size=n)
    u = impl.cyclic_tridiag_solve(lo, d, up, rhs)
    ref = np.linalg.solve(dense_cyclic(lo, d, up), rhs)
    assert np.max(np.abs(u - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


@pytest.mark.parametrize("impl", BACKENDS)
def test_cyclic_solve_singular(impl):
    n = 6
    # graph Laplacian of a cycle: constants span the kernel
    lo, up, d = -np.ones(n), -np.ones(n), 2 * np.ones(n)
    with pytest.raises((kernels.SingularPivotError, ArithmeticError)):
        u = impl.cyclic_tridiag_solve(lo, d, up, np.ones(n))
        if not np.all(np.isfinite(u)):
            raise ArithmeticError("non-finite")


@pytest.mark.skipif(_compiled is None, reason="compiled kernels not built")
def test_backends_agree():
    rng = np.random.default_rng(5)
    n = 500
    lo, up = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    d = np.abs(lo) + np.abs(up) + 1.0
    rhs = rng.normal(size=n)
    np.testing.assert_allclose(_compiled.cyclic_tridiag_solve(lo, d, up, rhs),
                               _kernels_py.cyclic_tridiag_solve(lo, d, up, rhs), atol=1e-13)


def test_env_var_forces_fallback():
    code = "from varietyfd import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, VARIETYFD_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout.strip()
    assert out == "python"
    env.pop("VARIETYFD_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout.strip()
    assert out == ("cython" if _compiled is not None else "python")


def test_fallback_solves_a_problem():
    code = ("from varietyfd.harness import solve; from varietyfd.problem import load_problem; "
            "s = solve(load_problem('circle_manufactured'), 320, 'local', 3); "
            "print(repr(s.linf_error))")
    env = dict(os.environ, VARIETYFD_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout.strip()
    assert float(out) < 5e-5
