import math

import numpy as np
import pytest
from scipy import integrate

from nlmg.errors import DomainError
from nlmg.kernel import TABLE_MAX, kernel_constants, kernel_eval

S_VALUES = (0.1, 0.25, 0.4, 0.49)
POINTS = np.array([0.0, 1e-6, 1e-3, 0.07, 0.5, 1.0, 2.3, 7.5, 15.9, 16.1, 40.0, 1e3, 1e5])


def quad_K(d, s):
    q = 0.5 * (d + 1 + 2 * s)
    val, _ = integrate.quad(lambda r: (1 + r * r) ** -q, 0, np.inf, epsabs=0, epsrel=1e-13)
    return val


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("s", S_VALUES)
def test_K_matches_quadrature(d, s):
    p = kernel_constants(d, s)
    assert p.K == pytest.approx(quad_K(d, s), rel=1e-10)
    # q and Cds from their definitions
    assert p.q == pytest.approx((d + 1 + 2 * s) / 2)
    assert p.Cds == pytest.approx((1 - 2 * s) / (2.0 if d == 1 else math.pi))


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("s", S_VALUES)
def test_closed_form_against_reference(d, s):
    p = kernel_constants(d, s)
    cf = p.closed_form
    for kind in ("G", "F", "Gtilde", "Fpp"):
        ref = np.array([kernel_eval(p, kind, r) for r in POINTS])
        got = getattr(cf, kind)(POINTS)
        assert np.allclose(got, ref, rtol=1e-10, atol=1e-300), kind


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("s", (0.1, 0.49))
def test_fast_tables_against_closed_form(d, s):
    p = kernel_constants(d, s)
    x = np.concatenate([np.linspace(-30, 30, 4001), POINTS, -POINTS])
    for kind in ("G", "F", "Gtilde", "Fpp"):
        a = p.fast(kind, x)
        b = getattr(p.closed_form, kind)(x)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14), kind


@pytest.mark.parametrize("s", S_VALUES)
def test_symmetries_and_bounds(s):
    p = kernel_constants(2, s)
    x = np.linspace(0, 50, 501)
    cf = p.closed_form
    assert np.allclose(cf.G(-x), -cf.G(x))
    assert np.allclose(cf.F(-x), cf.F(x))
    assert np.all(np.abs(cf.G(x)) < p.K)
    assert np.all(np.diff(cf.G(x)) > 0)                 # F convex
    assert np.allclose(x * cf.Gtilde(x), cf.G(x), rtol=1e-14, atol=0)
    assert cf.Gtilde(np.array([0.0]))[0] == pytest.approx(1.0)
    assert cf.F(np.array([0.0]))[0] == 0.0


def test_continuity_at_table_end():
    p = kernel_constants(1, 0.3)
    eps = 1e-9
    for kind in ("G", "F", "Gtilde"):
        lo, hi = p.fast(kind, np.array([TABLE_MAX - eps, TABLE_MAX + eps]))
        assert abs(lo - hi) <= 1e-8 * abs(lo)


def test_domain_errors():
    with pytest.raises(DomainError):
        kernel_constants(1, 0.5)
    with pytest.raises(DomainError):
        kernel_constants(1, 0.0)
    with pytest.raises(DomainError):
        kernel_constants(3, 0.2)
    p = kernel_constants(1, 0.2)
    with pytest.raises(DomainError):
        kernel_eval(p, "G", float("nan"))
    with pytest.raises(ValueError):
        kernel_eval(p, "H", 1.0)
