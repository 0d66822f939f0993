import numpy as np
import pytest

from anderson_fp import kernels
from anderson_fp.problems import GAUSS_2

BACKENDS = kernels.backends()


def test_default_backend_is_importable():
    assert kernels.BACKEND in BACKENDS


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_thomas_against_dense(name):
    mod = BACKENDS[name]
    rng = np.random.default_rng(7)
    n = 50
    sub, sup = rng.standard_normal(n - 1), rng.standard_normal(n - 1)
    diag = 4.0 + rng.random(n)
    rhs = rng.standard_normal(n)
    x, bad = mod.thomas_solve(sub, diag, sup, rhs)
    assert bad == -1
    A = np.diag(diag) + np.diag(sub, -1) + np.diag(sup, 1)
    assert np.allclose(np.asarray(x), np.linalg.solve(A, rhs), atol=1e-12)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_thomas_reports_breakdown_row(name):
    mod = BACKENDS[name]
    sub = np.array([1.0, 0.0])
    diag = np.array([1.0, 1.0, 2.0])
    sup = np.array([1.0, 0.0])
    x, bad = mod.thomas_solve(sub, diag, sup, np.ones(3))
    assert x is None and bad == 1


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_thomas_single_unknown(name):
    x, bad = BACKENDS[name].thomas_solve(np.zeros(0), np.array([2.0]), np.zeros(0), np.array([3.0]))
    assert bad == -1 and np.asarray(x)[0] == 1.5


def _dense_assembly(u_full, h, k, u0, eps):
    # element-by-element reference with explicit local matrices
    n = len(u_full) - 1
    K = np.zeros((n + 1, n + 1))
    for e in range(n):
        ua, ub = u_full[e], u_full[e + 1]
        aval = sum(0.5 * (k + np.tanh((ua + g * (ub - ua) - u0) / eps)) for g in GAUSS_2)
        K[e:e + 2, e:e + 2] += aval / h * np.array([[1.0, -1.0], [-1.0, 1.0]])
    return K[1:-1, 1:-1]


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_assembly_against_element_loop(name):
    rng = np.random.default_rng(11)
    n = 12
    u_full = np.concatenate([[0.0], rng.uniform(-1, 2, n - 1), [0.0]])
    diag, off = BACKENDS[name].assemble_quasilinear(u_full, 1.0 / n, 1.01, 0.5, 0.1)
    K = _dense_assembly(u_full, 1.0 / n, 1.01, 0.5, 0.1)
    assert np.allclose(np.asarray(diag), np.diag(K), rtol=1e-13)
    assert np.allclose(np.asarray(off), np.diag(K, 1), rtol=1e-13)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
def test_backends_agree_bitwise_on_assembly():
    rng = np.random.default_rng(5)
    u_full = np.concatenate([[0.0], rng.uniform(0, 10, 255), [0.0]])
    a = BACKENDS["compiled"].assemble_quasilinear(u_full, 1 / 256, 1.01, 0.5, 0.1)
    b = BACKENDS["python"].assemble_quasilinear(u_full, 1 / 256, 1.01, 0.5, 0.1)
    assert np.allclose(np.asarray(a[0]), b[0], rtol=1e-14)
    assert np.allclose(np.asarray(a[1]), b[1], rtol=1e-14)
