import math

import numpy as np
import pytest
from scipy import integrate

from conftest import band_datum, random_p1
from nlmg.errors import DomainError
from nlmg.femspace import DiscreteFunction, initial_guess, prolongate
from nlmg.kernel import kernel_constants
from nlmg.mesh import generate_interval_mesh
from nlmg.metrics import (StudyTable, catenary_reference, classical_error_e, classical_form,
                          classical_normal, energy_bound_check, geometric_error_bound,
                          geometric_error_es, nonlocal_normal, nonlocal_seminorm, norm_errors)
from nlmg.solvers import damped_newton


@pytest.fixture(scope="module")
def mesh16():
    return generate_interval_mesh(-1.0, 1.0, 2.0, 16)


def test_catenary_reference():
    c = catenary_reference(0.4)
    assert c(0.5) == pytest.approx(0.4, abs=1e-10)
    assert c(1.0) == pytest.approx(0.0, abs=1e-14)
    # r u' / sqrt(1 + u'^2) is constant for the radial minimal graph
    r = np.linspace(0.55, 0.95, 9)
    du = np.array([(c(x + 1e-6) - c(x - 1e-6)) / 2e-6 for x in r])
    flux = r * du / np.sqrt(1 + du ** 2)
    assert np.ptp(flux) < 1e-7
    assert np.allclose(c.at_points(np.array([[0.6, 0.0], [0.0, 0.6]])), c(0.6))
    with pytest.raises(DomainError):
        catenary_reference(0.7)
    assert catenary_reference(0.0)(0.7) == 0.0


def test_norm_errors(mesh16):
    u = DiscreteFunction(mesh16, mesh16.vertices[:, 0])
    n = norm_errors(u)
    assert n["L1"] == pytest.approx(1.0) and n["L2"] == pytest.approx(math.sqrt(2 / 3))
    assert n["Linf"] == pytest.approx(1.0)
    assert norm_errors(u, lambda p: p[:, 0])["L1"] == pytest.approx(0.0, abs=1e-15)


def test_classical_quantities(mesh16, rng):
    u = random_p1(mesh16, rng)
    v = random_p1(mesh16, rng)
    assert classical_error_e(u, v) == pytest.approx(classical_error_e(u, v, "inner"), rel=1e-12)
    assert classical_error_e(u, u) == 0.0
    # a_0 form: for the zero function the form vanishes, and it is linear in v
    assert classical_form(u, 2.0 * v) == pytest.approx(2.0 * classical_form(u, v))
    w = DiscreteFunction(mesh16, 0.5 * mesh16.vertices[:, 0])
    assert classical_normal(w, 0.3)[0] == pytest.approx(0.5 / math.sqrt(1.25))
    with pytest.raises(ValueError):
        classical_error_e(u, v, "other")


def _bump(mesh, a):
    x = mesh.vertices[:, 0]
    return DiscreteFunction(mesh, np.where(np.abs(x) < 1, a * (1 - x * x) ** 2, 0.0))


def test_nonlocal_normal_1d_reference(mesh16):
    """Compare with adaptive quadrature of C int G(d_u) sign(x-y) |x-y|^-2s dy."""
    s = 0.3
    u = _bump(mesh16, 0.6)
    p = kernel_constants(1, s)
    x = 0.3
    ux = float(u(np.array([[x]]))[0])

    def f(y):
        return float(p.closed_form.G(np.array([(ux - u(np.array([[y]]))[0]) / abs(x - y)]))[0]) \
            * np.sign(x - y) * abs(x - y) ** (-2 * s)
    pts = list(mesh16.vertices[:, 0])
    ref = sum(integrate.quad(f, a, b, epsabs=1e-13, limit=200)[0]
              for a, b in zip(pts[:-1], pts[1:]) if b <= x or a >= x)
    el = [(a, b) for a, b in zip(pts[:-1], pts[1:]) if a < x < b][0]
    ref += integrate.quad(f, el[0], x, epsabs=1e-13, limit=200)[0]
    ref += integrate.quad(f, x, el[1], epsabs=1e-13, limit=200)[0]
    # beyond Lambda u = 0: d_u = u(x)/(x-y)
    g = lambda y: float(p.closed_form.G(np.array([ux / abs(x - y)]))[0]) * np.sign(x - y) * abs(x - y) ** (-2 * s)
    ref += integrate.quad(g, 2.0, np.inf, epsabs=1e-13)[0] + integrate.quad(g, -np.inf, -2.0, epsabs=1e-13)[0]
    got = nonlocal_normal(u, x, s)
    assert got[0] == pytest.approx(p.Cds * ref, rel=1e-8)
    assert nonlocal_normal(u, 0.0, s)[0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        nonlocal_normal(u, 1.5, s)


def test_geometric_error(mesh16, rng):
    s = 0.3
    g = band_datum()
    u = random_p1(mesh16, rng, g=g)
    v = random_p1(mesh16, rng, g=g)
    br = geometric_error_es(u, v, s)
    assert br.es_squared_direct > 0
    assert sum(br.components.values()) == pytest.approx(br.es_squared_direct, rel=1e-12)
    assert geometric_error_es(u, u, s).es_squared_direct == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DomainError):
        geometric_error_es(u, DiscreteFunction.zeros(mesh16) + 0.3, s)


def test_orthogonality_on_nested_solutions():
    s = 0.3
    g = band_datum()
    coarse = generate_interval_mesh(-1.0, 1.0, 2.0, 8)
    fine = generate_interval_mesh(-1.0, 1.0, 2.0, 16)
    uh, _ = damped_newton(initial_guess(g, coarse), s, tol=1e-12)
    # nested exterior data: the fine exterior is the prolongated coarse one
    uf, _ = damped_newton(prolongate(initial_guess(g, coarse), fine).with_interior(
        np.zeros(fine.interior_nodes.size)), s, tol=1e-12)
    br = geometric_error_es(uf, uh, s)
    assert br.ortho_gap < 1e-6
    assert br.es_squared_direct <= geometric_error_bound(uf, uh, s)


def test_seminorm_and_energy_bound(mesh16, rng):
    u = random_p1(mesh16, rng)
    a = nonlocal_seminorm(u, 0.5)
    assert a > 0 and nonlocal_seminorm(2.0 * u, 0.5) == pytest.approx(2 * a)
    assert nonlocal_seminorm(u, 0.5, omega_only=True) < a
    with pytest.raises(DomainError):
        nonlocal_seminorm(u, 0.5, p=2)
    with pytest.raises(DomainError):
        nonlocal_seminorm(u, 1.0)
    chk = energy_bound_check(u, 0.3)
    assert chk["holds"]


def test_study_table(tmp_path):
    t = StudyTable()
    t.add("a", 0.3, 0.1, 1.0, 1.5)
    t.add("b", 0.3, 0.1, 2.0, 2.0)
    assert t.column("a", "gap").tolist() == [0.5]
    t.to_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "quantity,s,h,value,reference,gap"
    t.to_dat(tmp_path / "t.dat")
    assert "\n\n\n# b\n" in (tmp_path / "t.dat").read_text()
