import numpy as np
import pytest
from scipy import integrate

from conftest import band_datum, random_p1
from nlmg.assembly import get_assembler
from nlmg.errors import DomainError
from nlmg.femspace import initial_guess
from nlmg.kernel import kernel_constants
from nlmg.mesh import generate_interval_mesh
from nlmg.oracle import (BruteForceConfig, _phi, beta_F, beta_G, beta_K,
                         brute_force_energy_1d, brute_force_perimeter_1d,
                         exhaustive_minimize_small, fd_gradient, monte_carlo_energy_1d,
                         write_report)
from nlmg.solvers import damped_newton


@pytest.mark.parametrize("s", [0.1, 0.3, 0.49])
def test_beta_kernel_matches_closed_form(s):
    p = kernel_constants(1, s)
    z = np.array([-7.0, -0.4, 0.0, 0.01, 1.3, 25.0])
    assert beta_K(s) == pytest.approx(p.K, rel=1e-12)
    assert np.allclose(beta_G(z, s), p.closed_form.G(z), rtol=1e-11, atol=1e-15)
    assert np.allclose(beta_F(z, s), p.closed_form.F(z), rtol=1e-10, atol=1e-15)


def test_phi_against_dblquad():
    s, rho = 0.3, 0.7
    q = (2 + 2 * s) / 2
    ref = integrate.dblquad(lambda r, t: (r * r + rho * rho) ** -q, -0.4, 0.9,
                            lambda t: -t, lambda t: np.inf, epsabs=1e-13)[0]
    assert _phi(-0.4, 0.9, rho, s, 24) == pytest.approx(ref, rel=1e-9)


def test_brute_force_self_convergence_and_mc():
    m = generate_interval_mesh(-1.0, 1.0, 2.0, 4)
    u = random_p1(m, np.random.default_rng(3))
    a = brute_force_energy_1d(u, None, 0.25, BruteForceConfig(grid_n=8, levels=8))
    b = brute_force_energy_1d(u, None, 0.25)
    assert a == pytest.approx(b, rel=1e-6)
    mc, se = monte_carlo_energy_1d(u, None, 0.25, BruteForceConfig(mc_samples=400000))
    # Monte Carlo leaves out pairs with |x - y| > L = 2.5, where u(y) = 0 and
    # the pair counts twice; add that part by adaptive quadrature
    F = kernel_constants(1, 0.25).closed_form.F
    inner = lambda x: integrate.quad(
        lambda r: float(F(np.array([u(np.array([[x]]))[0] / r]))[0]) * r ** -0.5, 2.5, np.inf)[0]
    knots = m.vertices[:, 0][np.abs(m.vertices[:, 0]) <= 1.0]
    omitted = 4.0 * sum(integrate.quad(inner, a, c)[0] for a, c in zip(knots[:-1], knots[1:]))
    assert abs(mc + omitted - b) <= 5 * se


def test_assembly_matches_brute_force():
    m = generate_interval_mesh(-1.0, 1.0, 2.0, 4)
    u = random_p1(m, np.random.default_rng(7))
    for s in (0.1, 0.4):
        Ea = get_assembler(m, s).energy(u)
        Eb = brute_force_energy_1d(u, None, s)
        assert Ea == pytest.approx(Eb, rel=1e-4)


def test_perimeter_rejects_small_M():
    m = generate_interval_mesh(-1.0, 1.0, 2.0, 4)
    u = initial_guess(band_datum(), m)
    with pytest.raises(DomainError):
        brute_force_perimeter_1d(u, None, M=0.1, s=0.25)
    with pytest.raises(DomainError):
        brute_force_energy_1d(u, None, 0.5)


def test_fd_gradient_matches_residual(rng):
    m = generate_interval_mesh(-1.0, 1.0, 2.0, 8)
    u = random_p1(m, rng)
    r = get_assembler(m, 0.25).residual(u)
    assert np.allclose(fd_gradient(u, 0.25), r, rtol=0, atol=1e-8 * np.abs(r).max())


def test_exhaustive_minimizer_agrees_with_newton():
    m = generate_interval_mesh(-1.0, 1.0, 2.0, 4)
    g = band_datum()
    ex = exhaustive_minimize_small(m, g, 0.25)
    un, _ = damped_newton(initial_guess(g, m), 0.25, tol=1e-12)
    assert np.allclose(ex.values, un.values, atol=1e-6)
    big = generate_interval_mesh(-1.0, 1.0, 2.0, 8)
    with pytest.raises(DomainError):
        exhaustive_minimize_small(big, g, 0.25)


def test_report(tmp_path):
    write_report([{"s": 0.1, "value": 1.5, "tag": "a"}], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == "s,value,tag\n0.1,1.5,a\n"
    with pytest.raises(ValueError):
        write_report([], tmp_path / "x.csv")
