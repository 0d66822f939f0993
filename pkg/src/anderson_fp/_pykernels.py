"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

_G1 = 0.5 - 0.5 / np.sqrt(3.0)
_G2 = 0.5 + 0.5 / np.sqrt(3.0)


def thomas_solve(sub, diag, sup, rhs, pivot_tol=1e-14):
    n = len(diag)
    x = np.empty(n)
    c = np.empty(n)
    scale = abs(diag[0]) + (abs(sup[0]) if n > 1 else 0.0)
    piv = diag[0]
    if abs(piv) <= pivot_tol * scale:
        return None, 0
    c[0] = sup[0] / piv if n > 1 else 0.0
    x[0] = rhs[0] / piv
    for i in range(1, n):
        scale = abs(sub[i - 1]) + abs(diag[i])
        if i < n - 1:
            scale += abs(sup[i])
        piv = diag[i] - sub[i - 1] * c[i - 1]
        if abs(piv) <= pivot_tol * scale:
            return None, i
        m = 1.0 / piv
        c[i] = sup[i] * m if i < n - 1 else 0.0
        x[i] = (rhs[i] - sub[i - 1] * x[i - 1]) * m
    for i in range(n - 2, -1, -1):
        x[i] -= c[i] * x[i + 1]
    return x, -1


def assemble_quasilinear(u_full, h, k_coef, u0, eps):
    u_full = np.asarray(u_full, dtype=float)
    ua = u_full[:-1]
    ub = u_full[1:]
    a1 = k_coef + np.tanh((ua + _G1 * (ub - ua) - u0) / eps)
    a2 = k_coef + np.tanh((ua + _G2 * (ub - ua) - u0) / eps)
    ke = 0.5 * (a1 + a2) / h
    # interior node i (0-based) sits between elements i and i+1
    diag = ke[:-1] + ke[1:]
    off = -ke[1:-1]
    return diag, off
