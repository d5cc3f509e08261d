import numpy as np
import pytest

from conftest import random_p1
from nlmg.assembly import Assembler, Scaling, get_assembler, gram_matrix, mass_matrix
from nlmg.errors import DomainError
from nlmg.femspace import DiscreteFunction
from nlmg.kernel import kernel_constants
from nlmg.mesh import generate_annulus_mesh, generate_interval_mesh


@pytest.fixture(scope="module")
def mesh8():
    return generate_interval_mesh(-1.0, 1.0, 2.0, 8)


@pytest.mark.parametrize("s", [0.1, 0.3, 0.45])
def test_kernel_mass_1d(mesh8, s):
    # int int_{(-1,1)^2} |x-y|^(-2s) = 2 L^(2-2s) / ((1-2s)(2-2s)) with L = 2
    exact = 2.0 * 2.0 ** (2 - 2 * s) / ((1 - 2 * s) * (2 - 2 * s))
    assert get_assembler(mesh8, s).kernel_mass() == pytest.approx(exact, rel=1e-8)


def test_frozen_relation(mesh8, rng):
    asm = get_assembler(mesh8, 0.25)
    u = random_p1(mesh8, rng)
    sys = asm.frozen_matrix(u)
    r = asm.residual(u)
    assert np.allclose(sys.matrix @ u.interior_values - sys.rhs, r, rtol=0, atol=1e-12)
    assert np.allclose(sys.matrix, sys.matrix.T)
    assert np.linalg.eigvalsh(sys.matrix).min() > 0
    # linearize returns the same pieces in one sweep
    E, r2, sys2 = asm.linearize(u, "frozen")
    assert E == pytest.approx(asm.energy(u), rel=1e-13)
    assert np.allclose(r2, r) and np.allclose(sys2.matrix, sys.matrix)


def test_matvec_matches_frozen_matrix(mesh8, rng):
    asm = get_assembler(mesh8, 0.25)
    u = random_p1(mesh8, rng)
    w = DiscreteFunction.zeros(mesh8).with_interior(rng.normal(size=asm.n))
    A = asm.frozen_matrix(u).matrix
    got = asm.frozen_apply(u, w)[mesh8.interior_nodes]
    assert np.allclose(got, A @ w.interior_values, atol=1e-12)


@pytest.mark.parametrize("s", [0.1, 0.4])
def test_newton_matrix_fd(mesh8, rng, s):
    asm = get_assembler(mesh8, s)
    u = random_p1(mesh8, rng, amp=0.5)
    J = asm.newton_matrix(u).matrix
    h = 1e-6
    I = mesh8.interior_nodes
    fd = np.zeros_like(J)
    for k, i in enumerate(I):
        e = np.zeros(mesh8.n_vertices)
        e[i] = h
        fd[:, k] = (asm.residual(u.values + e) - asm.residual(u.values - e)) / (2 * h)
    assert np.linalg.norm(J - fd) <= 1e-6 * np.linalg.norm(J)
    assert np.linalg.eigvalsh(J).min() > 0


def test_energy_change_matches_difference(mesh8, rng):
    asm = get_assembler(mesh8, 0.25)
    u = random_p1(mesh8, rng)
    w = np.zeros(mesh8.n_vertices)
    w[mesh8.interior_nodes] = rng.normal(size=mesh8.interior_nodes.size)
    for beta in (1.0, 0.1):
        dE = asm.energy_change(u, w, beta)
        ref = asm.energy(u.values + beta * w) - asm.energy(u)
        assert dE == pytest.approx(ref, rel=1e-10, abs=1e-13)
    # small increments are resolved linearly
    r = asm.full_residual(u)
    beta = 1e-9
    assert asm.energy_change(u, w, beta) / beta == pytest.approx(r @ w, rel=1e-6)


def test_scaling_and_constants(mesh8, rng):
    asm = get_assembler(mesh8, 0.3)
    u = random_p1(mesh8, rng)
    Cds = kernel_constants(1, 0.3).Cds
    assert asm.energy(u, Scaling.CDS_SCALED) == pytest.approx(Cds * asm.energy(u), rel=1e-14)
    assert np.allclose(asm.residual(u, Scaling.CDS_SCALED), Cds * asm.residual(u))
    assert asm.energy(np.zeros(mesh8.n_vertices)) == 0.0
    assert get_assembler(mesh8, 0.3) is asm


def test_quadratic_kernel(mesh8, rng):
    """With F(r) = r^2/2 the energy is half the form a_u(u, u)."""
    asm = Assembler(mesh8, 0.3, kernel="quadratic")
    u = random_p1(mesh8, rng)
    assert asm.energy(u) == pytest.approx(0.5 * asm.form(u, u), rel=1e-12)
    A = asm.frozen_matrix(u).matrix
    A2 = asm.frozen_matrix(u * 3.0).matrix
    assert np.allclose(A, A2)              # weights do not depend on u
    with pytest.raises(DomainError):
        Assembler(mesh8, 0.3, kernel="cubic")


def test_newton_matrix_2d_spd():
    m = generate_annulus_mesh(0.5, 1.0, 2.0, 0.5)
    asm = get_assembler(m, 0.25)
    x = m.vertices
    u = DiscreteFunction(m, np.where(np.linalg.norm(x, axis=1) < 1.9, 0.2 * x[:, 0], 0.0))
    assert asm.energy(u) > 0
    J = asm.newton_matrix(u).matrix
    assert np.allclose(J, J.T) and np.linalg.eigvalsh(J).min() > 0
    assert np.isfinite(asm.residual(u)).all()


def test_mass_and_gram(mesh8):
    M = mass_matrix(mesh8)
    n = mesh8.interior_nodes.size
    assert M.shape == (n, n)
    one = np.ones(n)
    # hat functions of the 7 interior nodes sum to 1 except on the two end elements
    assert one @ M @ one == pytest.approx(2.0 - 2 * 0.25 + 2 * 0.25 / 3.0)
    G = gram_matrix(0.25, mesh8).matrix
    assert np.linalg.eigvalsh(G - M).min() > 0
    with pytest.raises(DomainError):
        gram_matrix(1.0, mesh8)


def test_wrong_mesh_rejected(mesh8):
    other = generate_interval_mesh(-1.0, 1.0, 2.0, 4)
    asm = get_assembler(mesh8, 0.25)
    with pytest.raises(DomainError):
        asm.energy(DiscreteFunction.zeros(other))
    with pytest.raises(ValueError):
        asm.energy(np.zeros(3))
