import math

import numpy as np
import pytest
from scipy import integrate

from nlmg.errors import DomainError
from nlmg.kernel import kernel_constants
from nlmg.mesh import generate_interval_mesh
from nlmg.quadrature import (PairClass, QuadratureConfig, classify_pair, compact_rule,
                             farfield_tail, gauss_jacobi01, pair_integral, simplex_rule)


def test_gauss_jacobi_weight():
    t, w = gauss_jacobi01(6, 0.0, -0.4)
    for k in range(8):
        assert np.sum(w * t ** k) == pytest.approx(1.0 / (k + 0.6), rel=1e-13)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_simplex_rule_exactness(n):
    lam, w = simplex_rule(2, n)
    x, y = lam[:, 1], lam[:, 2]
    deg = 2 * n - 1
    for i in range(deg + 1):
        for j in range(deg + 1 - i):
            # int over the unit triangle of x^i y^j is i! j! / (i+j+2)!, rule weights sum to 1
            exact = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2) * 2.0
            assert np.sum(w * x ** i * y ** j) == pytest.approx(exact, rel=1e-12, abs=1e-15)


def test_compact_rules():
    lam, w = compact_rule(2, 3)
    assert len(w) == 7
    x, y = lam[:, 1], lam[:, 2]
    for i in range(6):
        for j in range(6 - i):
            exact = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2) * 2.0
            assert np.sum(w * x ** i * y ** j) == pytest.approx(exact, rel=1e-12, abs=1e-15)
    lam, w = compact_rule(2, 2)
    assert len(w) == 3 and np.sum(w) == pytest.approx(1.0)


def test_classify():
    assert classify_pair((0, 1, 2), (2, 1, 0)) == PairClass.IDENTICAL
    assert classify_pair((0, 1, 2), (1, 2, 3)) == PairClass.SHARED_EDGE
    assert classify_pair((0, 1, 2), (2, 3, 4)) == PairClass.SHARED_VERTEX
    assert classify_pair((0, 1, 2), (3, 4, 5)) == PairClass.DISJOINT
    assert classify_pair((0, 1), (1, 2)) == PairClass.SHARED_VERTEX


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.95])
def test_touching_1d_exact(alpha):
    """int int_{[0,1]^2} |x-y|^(2-alpha) and the neighbouring-interval analogue."""
    T = np.array([[0.0], [1.0]])
    f = lambda x, y: np.sum((x - y) ** 2, axis=1)
    got = pair_integral(T, T, PairClass.IDENTICAL, f, alpha, QuadratureConfig())
    assert got == pytest.approx(2.0 / ((3 - alpha) * (4 - alpha)), rel=1e-12)
    Tp = np.array([[1.0], [2.0]])
    got = pair_integral(T, Tp, PairClass.SHARED_VERTEX, f, alpha, QuadratureConfig())
    p = 3.0 - alpha
    exact = (2 ** (p + 1) - 2) / (p * (p + 1))       # int_0^1 int_1^2 (y-x)^(p-1)
    assert got == pytest.approx(exact, rel=1e-10)   # exact only up to the r^(p-1) remainder


TRIS = {
    PairClass.IDENTICAL: (np.array([[0, 0], [1, 0], [0.2, 0.9]]),
                          np.array([[0, 0], [1, 0], [0.2, 0.9]])),
    PairClass.SHARED_EDGE: (np.array([[0, 0], [1, 0], [0.2, 0.9]]),
                            np.array([[1, 0], [0, 0], [0.6, -0.7]])),
    PairClass.SHARED_VERTEX: (np.array([[0, 0], [1, 0], [0.2, 0.9]]),
                              np.array([[0, 0], [-0.8, 0.1], [-0.3, -0.9]])),
}


def _tensor_reference(X, Y, f, n=12):
    lam, w = simplex_rule(2, n)
    x, y = lam @ X, lam @ Y
    xx = np.repeat(x, len(y), 0)
    yy = np.tile(y, (len(x), 1))
    vol = lambda Z: abs(np.linalg.det(np.array([Z[1] - Z[0], Z[2] - Z[0]]))) / 2
    return np.sum(np.outer(w, w).ravel() * f(xx, yy)) * vol(X) * vol(Y)


@pytest.mark.parametrize("cls", list(TRIS))
def test_touching_2d_polynomial(cls):
    """alpha = 0 with polynomial integrands: compare with a high-order tensor rule."""
    X, Y = TRIS[cls]
    f = lambda x, y: 1.0 + np.sum((x - y) ** 2, axis=1) + x[:, 0] * y[:, 1]
    got = pair_integral(X, Y, cls, f, 0.0, QuadratureConfig(n_sing=6))
    assert got == pytest.approx(_tensor_reference(X, Y, f), rel=1e-11)


@pytest.mark.parametrize("cls", list(TRIS))
def test_touching_2d_singular_converges(cls):
    X, Y = TRIS[cls]
    f = lambda x, y: np.sum((x - y) ** 2, axis=1) * (1 + x[:, 0])
    vals = [pair_integral(X, Y, cls, f, 1.9, QuadratureConfig(n_sing=n)) for n in (5, 8, 12, 16)]
    err = [abs(v - vals[-1]) / abs(vals[-1]) for v in vals[:-1]]
    assert err[0] > err[1] > err[2]
    assert err[0] < 1e-5 and err[2] < 1e-10


def test_disjoint_pair():
    X = np.array([[0, 0], [1, 0], [0, 1]])
    Y = X + np.array([3.0, 0.5])
    f = lambda x, y: np.ones(len(x))
    got = pair_integral(X, Y, PairClass.DISJOINT, f, 1.0, QuadratureConfig(n_reg=6))
    ref = _tensor_reference(X, Y, lambda x, y: 1.0 / np.linalg.norm(x - y, axis=1), 14)
    assert got == pytest.approx(ref, rel=1e-9)
    with pytest.raises(ValueError):
        pair_integral(X, Y, PairClass.IDENTICAL, f, 1.0)


@pytest.mark.parametrize("kind", ["F", "G", "Gtilde"])
def test_farfield_tail_1d(kind):
    s = 0.3
    p = kernel_constants(1, s)
    mesh = generate_interval_mesh(-1.0, 1.0, 2.0, 4)
    x, c = 0.4, 0.7
    fn = getattr(p.closed_form, kind)
    power = {"F": 2 * s, "G": 1 + 2 * s, "Gtilde": 2 + 2 * s}[kind]
    g = lambda r: float(fn(np.array([c / r]))[0]) * r ** (-power)
    ref = integrate.quad(g, 2.0 - x, np.inf, epsrel=1e-12)[0] + \
        integrate.quad(g, 2.0 + x, np.inf, epsrel=1e-12)[0]
    got = farfield_tail(np.array([x]), c, kind, mesh, p)
    assert got == pytest.approx(ref, rel=1e-8)
    with pytest.raises(DomainError):
        farfield_tail(np.array([2.5]), c, kind, mesh, p)


def test_config_validation():
    with pytest.raises(DomainError):
        QuadratureConfig(n_sing=0)
    with pytest.raises(DomainError):
        QuadratureConfig(far_factor=1.5)
    cfg = QuadratureConfig()
    assert cfg.reg_points(1) == 6 and cfg.reg_points(2) == 3
    assert cfg.far_points(1) == 3 and cfg.far_points(2) == 1
    assert QuadratureConfig(n_reg=4, n_far=2).reg_points(2) == 4
