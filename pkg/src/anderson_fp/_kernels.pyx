# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: tridiagonal elimination and P1 quasilinear assembly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, tanh

cnp.import_array()


def thomas_solve(double[::1] sub, double[::1] diag, double[::1] sup,
                 double[::1] rhs, double pivot_tol=1e-14):
    cdef Py_ssize_t n = diag.shape[0]
    cdef Py_ssize_t i
    cdef double piv, scale, m
    out = np.empty(n, dtype=np.float64)
    cp = np.empty(n, dtype=np.float64)
    cdef double[::1] x = out
    cdef double[::1] c = cp

    scale = fabs(diag[0]) + (fabs(sup[0]) if n > 1 else 0.0)
    piv = diag[0]
    if fabs(piv) <= pivot_tol * scale:
        return None, 0
    c[0] = sup[0] / piv if n > 1 else 0.0
    x[0] = rhs[0] / piv
    for i in range(1, n):
        scale = fabs(sub[i - 1]) + fabs(diag[i])
        if i < n - 1:
            scale += fabs(sup[i])
        piv = diag[i] - sub[i - 1] * c[i - 1]
        if fabs(piv) <= pivot_tol * scale:
            return None, i
        m = 1.0 / piv
        c[i] = sup[i] * m if i < n - 1 else 0.0
        x[i] = (rhs[i] - sub[i - 1] * x[i - 1]) * m
    for i in range(n - 2, -1, -1):
        x[i] -= c[i] * x[i + 1]
    return out, -1


def assemble_quasilinear(double[::1] u_full, double h, double k_coef,
                         double u0, double eps):
    """Stiffness diagonals for a(u) = k + tanh((u - u0)/eps), 2-point Gauss.

    ``u_full`` holds all mesh nodes including the two Dirichlet ends.
    Returns (diag, off) over interior nodes.
    """
    cdef Py_ssize_t ne = u_full.shape[0] - 1
    cdef Py_ssize_t n = ne - 1
    cdef Py_ssize_t e
    cdef double g1 = 0.5 - 0.5 / 3.0 ** 0.5
    cdef double g2 = 0.5 + 0.5 / 3.0 ** 0.5
    cdef double ua, ub, a1, a2, ke
    d_arr = np.zeros(n, dtype=np.float64)
    o_arr = np.zeros(n - 1 if n > 1 else 0, dtype=np.float64)
    cdef double[::1] d = d_arr
    cdef double[::1] o = o_arr
    for e in range(ne):
        ua = u_full[e]
        ub = u_full[e + 1]
        a1 = k_coef + tanh((ua + g1 * (ub - ua) - u0) / eps)
        a2 = k_coef + tanh((ua + g2 * (ub - ua) - u0) / eps)
        ke = 0.5 * (a1 + a2) / h
        # element e couples nodes e and e+1; interior index = node - 1
        if e >= 1:
            d[e - 1] += ke
        if e + 1 <= n:
            d[e] += ke
        if e >= 1 and e + 1 <= n:
            o[e - 1] -= ke
    return d_arr, o_arr
