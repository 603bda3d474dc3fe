# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: sparse polynomial evaluation and the periodic
tridiagonal (Sherman-Morrison) solve."""

import numpy as np
cimport numpy as cnp

from varietyfd._kernels_py import SingularPivotError

cnp.import_array()

ctypedef cnp.int64_t i64


cdef inline double _mono(const double[::1] c, const i64[:, ::1] e,
                         Py_ssize_t t, const double* x) noexcept nogil:
    cdef double m = c[t]
    cdef Py_ssize_t j, k
    for j in range(e.shape[1]):
        for k in range(e[t, j]):
            m *= x[j]
    return m


def poly_eval(const double[::1] coeffs, const i64[:, ::1] exps, const double[::1] x):
    cdef double total = 0.0
    cdef Py_ssize_t t
    if coeffs.shape[0] == 0:
        return 0.0
    with nogil:
        for t in range(coeffs.shape[0]):
            total += _mono(coeffs, exps, t, &x[0])
    return total


def poly_eval_many(const double[::1] coeffs, const i64[:, ::1] exps, const double[:, ::1] pts):
    cdef Py_ssize_t p, t, npts = pts.shape[0]
    out = np.zeros(npts)
    cdef double[::1] o = out
    cdef double acc
    if coeffs.shape[0] == 0:
        return out
    with nogil:
        for p in range(npts):
            acc = 0.0
            for t in range(coeffs.shape[0]):
                acc += _mono(coeffs, exps, t, &pts[p, 0])
            o[p] = acc
    return out


def cyclic_tridiag_solve(const double[::1] lower, const double[::1] diag,
                         const double[::1] upper, const double[::1] rhs):
    cdef Py_ssize_t n = diag.shape[0], i
    if n < 3:
        raise ValueError("cyclic tridiagonal solve needs n >= 3")
    cdef double beta = lower[0]
    cdef double alpha = upper[n - 1]
    cdef double gamma = -diag[0] if diag[0] != 0.0 else -1.0
    cdef double scale = 1e-300, piv, fact, denom
    for i in range(n):
        if abs(diag[i]) > scale:
            scale = abs(diag[i])
    cp_arr = np.empty(n)
    x_arr = np.empty(n)
    z_arr = np.empty(n)
    cdef double[::1] cp = cp_arr
    cdef double[::1] x = x_arr
    cdef double[::1] z = z_arr
    cdef double bi
    cdef Py_ssize_t bad = -1
    with nogil:
        for i in range(n):
            bi = diag[i]
            if i == 0:
                bi = diag[0] - gamma
            elif i == n - 1:
                bi = diag[n - 1] - alpha * beta / gamma
            if i == 0:
                piv = bi
                if abs(piv) < 1e-14 * scale:
                    bad = 0
                    break
                cp[0] = upper[0] / piv
                x[0] = rhs[0] / piv
                z[0] = gamma / piv
            else:
                piv = bi - lower[i] * cp[i - 1]
                if abs(piv) < 1e-14 * scale:
                    bad = i
                    break
                cp[i] = upper[i] / piv
                x[i] = (rhs[i] - lower[i] * x[i - 1]) / piv
                z[i] = ((alpha if i == n - 1 else 0.0) - lower[i] * z[i - 1]) / piv
        if bad < 0:
            for i in range(n - 2, -1, -1):
                x[i] -= cp[i] * x[i + 1]
                z[i] -= cp[i] * z[i + 1]
    if bad >= 0:
        raise SingularPivotError(f"zero pivot at row {bad}")
    denom = 1.0 + z[0] + beta * z[n - 1] / gamma
    if abs(denom) < 1e-14:
        raise SingularPivotError("singular Sherman-Morrison correction")
    fact = (x[0] + beta * x[n - 1] / gamma) / denom
    for i in range(n):
        x[i] -= fact * z[i]
    return x_arr
