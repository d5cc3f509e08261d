"""Nonlinear solvers: semi-implicit gradient flow and damped Newton."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import linalg
from scipy.sparse import linalg as splinalg

from .assembly import AssembledSystem, Scaling, gram_matrix, get_assembler
from .errors import DomainError, SolverError
from .femspace import DiscreteFunction
from .quadrature import QuadratureConfig

log = logging.getLogger(__name__)

CHOLESKY_MAX_N = 5000
CG_RTOL = 1e-10
ARMIJO_C = 1e-4
MIN_STEP_EXP = 20


class Status(Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    LINE_SEARCH_FAIL = "line_search_fail"


@dataclass
class SolverReport:
    """Per-iteration telemetry; entry k belongs to iterate u^k."""

    method: str
    energy_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    step_history: list = field(default_factory=list)
    iterates: list | None = None
    status: Status = Status.MAX_ITERS
    wall_time: float = 0.0
    bounds: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        """Number of updates performed (histories include the initial state)."""
        return max(len(self.residual_history) - 1, 0)

    @property
    def converged(self) -> bool:
        return self.status == Status.CONVERGED

    def record(self, energy: float, res: float, step: float, u=None) -> None:
        self.energy_history.append(float(energy))
        self.residual_history.append(float(res))
        self.step_history.append(float(step))
        if self.iterates is not None and u is not None:
            self.iterates.append(u)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["iteration", "energy", "residual", "step"])
            for k, (e, r, b) in enumerate(zip(self.energy_history, self.residual_history,
                                              self.step_history)):
                w.writerow([k, repr(e), repr(r), repr(b)])


# ---------------------------------------------------------------------------
# linear algebra

def linear_solve(system: AssembledSystem | np.ndarray, rhs: np.ndarray | None = None,
                 route: str = "auto") -> np.ndarray:
    """Solve a symmetric positive definite system.

    Dense Cholesky for N <= 5000, Jacobi-preconditioned conjugate gradients
    beyond (or when ``route`` forces one of "cholesky" / "cg").
    """
    if isinstance(system, AssembledSystem):
        A, b = system.matrix, system.rhs if rhs is None else rhs
    else:
        A, b = np.asarray(system, dtype=float), np.asarray(rhs, dtype=float)
    n = b.size
    if A.shape != (n, n):
        raise SolverError(f"matrix shape {A.shape} does not match rhs of length {n}")
    if n == 0:
        return np.zeros(0)
    if route == "auto":
        route = "cholesky" if n <= CHOLESKY_MAX_N else "cg"
    if route == "cholesky":
        try:
            c = linalg.cho_factor(A, lower=True, check_finite=True)
        except linalg.LinAlgError as exc:
            raise SolverError(f"cholesky route: matrix is not positive definite ({exc})") from None
        return linalg.cho_solve(c, b)
    if route == "cg":
        diag = np.diag(A).copy()
        if np.any(diag <= 0):
            raise SolverError("cg route: nonpositive diagonal entry, matrix is not SPD")
        M = splinalg.LinearOperator((n, n), matvec=lambda x: x / diag, dtype=float)
        x, info = splinalg.cg(A, b, rtol=CG_RTOL, atol=0.0, M=M, maxiter=10 * n)
        if info != 0:
            raise SolverError(f"cg route: no convergence after {info} iterations")
        return x
    raise DomainError(f"unknown linear solver route {route!r}")


# ---------------------------------------------------------------------------
# nonlinear solvers

def _bounds(u: DiscreteFunction, lo: float | None, hi: float | None, tol: float = 1e-8) -> dict:
    vals = u.interior_values
    if vals.size == 0 or lo is None or hi is None:
        return {}
    out = {"min": float(vals.min()), "max": float(vals.max()), "lower": lo, "upper": hi}
    out["holds"] = bool(out["min"] >= lo - tol and out["max"] <= hi + tol)
    if not out["holds"]:
        log.warning("discrete maximum principle violated: range [%g, %g] vs [%g, %g]",
                    out["min"], out["max"], lo, hi)
    return out


def _exterior_range(u: DiscreteFunction):
    ext = u.values[u.mesh.exterior_nodes]
    return (float(min(ext.min(), 0.0)), float(max(ext.max(), 0.0))) if ext.size else (None, None)


def gradient_flow(u0: DiscreteFunction, s: float, tau: float = 1.0, alpha: float = 0.0,
                  tol: float = 1e-8, max_iters: int = 200,
                  config: QuadratureConfig | None = None,
                  scaling: Scaling = Scaling.UNSCALED, kernel: str = "minimal",
                  store_iterates: bool = False) -> tuple[DiscreteFunction, SolverReport]:
    """Semi-implicit gradient flow.

    Each step solves (G/tau + A(u^k)) U = G/tau U^k - B(u^k), where G is the
    H^alpha Gram matrix, A the frozen-weight matrix and B the coupling to
    the fixed exterior values. Stops when the residual norm is <= ``tol``.
    """
    if tau <= 0:
        raise DomainError(f"step size tau={tau} must be positive")
    t0 = time.perf_counter()
    asm = get_assembler(u0.mesh, s, config, kernel)
    G = gram_matrix(alpha, u0.mesh, config).matrix
    report = SolverReport("gradient_flow", iterates=[] if store_iterates else None)
    u = u0
    for k in range(max_iters + 1):
        E, r, sys = asm.linearize(u, "frozen", scaling)
        rn = float(np.linalg.norm(r))
        report.record(E, rn, tau if k else 0.0, u)
        log.info("gf k=%d energy=%.12g residual=%.3e", k, E, rn)
        if rn <= tol:
            report.status = Status.CONVERGED
            break
        if k == max_iters:
            break
        lhs = G / tau + sys.matrix
        rhs = G @ u.interior_values / tau + sys.rhs
        u = u.with_interior(linear_solve(lhs, rhs))
    report.wall_time = time.perf_counter() - t0
    report.bounds = _bounds(u, *_exterior_range(u))
    return u, report


def damped_newton(u0: DiscreteFunction, s: float, tol: float = 1e-8, max_iters: int = 50,
                  config: QuadratureConfig | None = None,
                  scaling: Scaling = Scaling.UNSCALED, kernel: str = "minimal",
                  store_iterates: bool = False) -> tuple[DiscreteFunction, SolverReport]:
    """Damped Newton with backtracking on the energy.

    The step w solves J(u) w = -r(u); the largest beta in {1, 1/2, ..., 2^-20}
    with I[u + beta w] <= I[u] - c beta |r| |w| (c = 1e-4) is taken.
    Energy differences are evaluated sample by sample without cancellation;
    a decrease is still accepted when it is within rounding of the
    absolute contributions (this only matters once |r| |w| is near 1e-16 E).
    """
    t0 = time.perf_counter()
    asm = get_assembler(u0.mesh, s, config, kernel)
    f = asm._factor(scaling)
    report = SolverReport("damped_newton", iterates=[] if store_iterates else None)
    u = u0
    beta = 0.0
    for k in range(max_iters + 1):
        E, r, sys = asm.linearize(u, "newton", scaling)
        rn = float(np.linalg.norm(r))
        report.record(E, rn, beta, u)
        log.info("newton k=%d energy=%.12g residual=%.3e step=%g", k, E, rn, beta)
        if rn <= tol:
            report.status = Status.CONVERGED
            break
        if k == max_iters:
            break
        w_int = linear_solve(sys)
        w = np.zeros(u.mesh.n_vertices)
        w[u.mesh.interior_nodes] = w_int
        slope = ARMIJO_C * rn * float(np.linalg.norm(w_int))
        beta = 1.0
        accepted = False
        for _ in range(MIN_STEP_EXP + 1):
            dE, scale = asm.energy_change(u, w, beta, with_scale=True)
            dE *= f
            if dE <= -slope * beta or abs(dE) <= 1e-12 * scale * f:
                accepted = True
                break
            beta *= 0.5
        if not accepted:
            report.status = Status.LINE_SEARCH_FAIL
            break
        u = u.with_interior(u.interior_values + beta * w_int)
    report.wall_time = time.perf_counter() - t0
    report.bounds = _bounds(u, *_exterior_range(u))
    return u, report
