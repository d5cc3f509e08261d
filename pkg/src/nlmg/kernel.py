"""Scalar kernel functions of the nonlocal area functional.

With q = (d+1+2s)/2 the kernel functions are

    Fpp(r) = (1 + r^2)^(-q)
    G(r)   = int_0^r Fpp                      (odd, |G| < K)
    F(r)   = int_0^r G = int_0^r (r - t) Fpp(t) dt   (even, convex)
    Gt(r)  = G(r) / r,  Gt(0) = 1

Three evaluation routes are provided:

* :func:`kernel_eval` -- scalar reference by adaptive quadrature, with an
  asymptotic tail beyond ``TAIL_CROSSOVER``.
* ``KernelParams.closed_form`` -- vectorized scipy special functions.
* ``KernelParams.fast`` -- piecewise Chebyshev tables compiled with numba,
  used by the assembly loops where tens of millions of evaluations occur.

The routes are cross-checked in the test-suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np
from numpy.polynomial import chebyshev
from scipy import integrate, special

from . import parallel  # noqa: F401  (selects the threading layer)
from .errors import DomainError

KINDS = ("F", "G", "Gtilde", "Fpp")

# reference route switches to the asymptotic tail here
TAIL_CROSSOVER = 1.0e4

# fast route: Chebyshev panels on [0, TABLE_MAX], asymptotic series beyond
TABLE_MAX = 16.0
PANEL_WIDTH = 0.0625
CHEB_DEGREE = 8
N_ASYMPTOTIC = 8


@dataclass(frozen=True)
class KernelParams:
    """Dimension, fractional order and derived constants."""

    d: int
    s: float
    q: float
    K: float
    Cds: float
    alpha_d: float

    @cached_property
    def tail_coefficients(self) -> np.ndarray:
        """c_k with int_r^inf Fpp = r^(1-2q) sum_k c_k r^(-2k), valid for r > 1."""
        q = self.q
        k = np.arange(N_ASYMPTOTIC)
        return special.binom(-q, k) / (2.0 * q + 2.0 * k - 1.0)

    @cached_property
    def closed_form(self) -> "ClosedFormKernel":
        return ClosedFormKernel(self)

    @cached_property
    def fast(self) -> "FastKernel":
        return FastKernel(self)

    def with_s(self, s: float) -> "KernelParams":
        return kernel_constants(self.d, s)


def kernel_constants(d: int, s: float) -> KernelParams:
    """Build :class:`KernelParams` for dimension ``d`` and order ``s``."""
    if d not in (1, 2):
        raise DomainError(f"dimension d={d} not supported; expected 1 or 2")
    s = float(s)
    if not (0.0 < s < 0.5):
        raise DomainError(f"fractional order s={s} outside (0, 1/2)")
    q = 0.5 * (d + 1 + 2 * s)
    K = math.exp(math.lgamma(0.5 * (d + 2 * s)) - math.lgamma(q)) * math.sqrt(math.pi) / 2.0
    alpha_d = 2.0 if d == 1 else math.pi
    return KernelParams(d=d, s=s, q=q, K=K, Cds=(1.0 - 2.0 * s) / alpha_d, alpha_d=alpha_d)


# ---------------------------------------------------------------------------
# reference route

def _tail_G(params: KernelParams, a: float) -> float:
    c = params.tail_coefficients
    inv2 = 1.0 / (a * a)
    series = c[0] + c[1] * inv2 + c[2] * inv2 * inv2
    return params.K - a ** (1.0 - 2.0 * params.q) * series


def _ref_G(params: KernelParams, a: float) -> float:
    if a >= TAIL_CROSSOVER:
        return _tail_G(params, a)
    p = 2.0 * params.q - 2.0
    val, _ = integrate.quad(lambda phi: math.cos(phi) ** p, 0.0, math.atan(a),
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def _ref_F(params: KernelParams, a: float) -> float:
    q = params.q
    if a < 1e-3:
        a2 = a * a
        return a2 * (0.5 - q * a2 / 12.0 + q * (q + 1.0) * a2 * a2 / 60.0)
    if a >= TAIL_CROSSOVER:
        return a * _tail_G(params, a) - (1.0 - (1.0 + a * a) ** (1.0 - q)) / (2.0 * (q - 1.0))
    p = 2.0 * q - 2.0
    val, _ = integrate.quad(lambda phi: (a - math.tan(phi)) * math.cos(phi) ** p,
                            0.0, math.atan(a), epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def kernel_eval(params: KernelParams, kind: str, rho: float) -> float:
    """Reference evaluation of ``F``, ``G``, ``Gtilde`` or ``Fpp`` at a scalar.

    G and F use adaptive Gauss-Kronrod quadrature in the angle
    phi = arctan(r), where the integrand cos(phi)^(2q-2) is bounded and smooth.
    For ``|rho| >= TAIL_CROSSOVER`` G switches to its asymptotic tail.
    Oddness of G is exact: the value at ``|rho|`` is computed and the sign
    restored.
    """
    rho = float(rho)
    if not math.isfinite(rho):
        raise DomainError(f"kernel argument must be finite, got {rho}")
    if kind not in KINDS:
        raise ValueError(f"unknown kernel kind {kind!r}; expected one of {KINDS}")
    a = abs(rho)
    if kind == "Fpp":
        return (1.0 + a * a) ** (-params.q)
    if kind == "F":
        return _ref_F(params, a)
    if kind == "G":
        return math.copysign(_ref_G(params, a), rho) if a > 0 else 0.0
    # Gtilde
    if a <= 1.0:
        val, _ = integrate.quad(lambda t: (1.0 + a * a * t * t) ** (-params.q), 0.0, 1.0,
                                epsabs=0.0, epsrel=1e-13)
        return val
    return _ref_G(params, a) / a


# ---------------------------------------------------------------------------
# closed forms through scipy special functions

class ClosedFormKernel:
    """Vectorized kernel functions from hypergeometric closed forms.

    Gt(r) = 2F1(1/2, q; 3/2; -r^2). F uses its closed form
    r G(r) - (1 - (1+r^2)^(1-q)) / (2(q-1)) away from zero and a Taylor
    series near zero, where the closed form cancels.
    """

    def __init__(self, params: KernelParams):
        self.params = params

    def Gtilde(self, rho):
        a = np.abs(np.asarray(rho, dtype=float))
        out = np.empty_like(a)
        big = a > TABLE_MAX
        out[~big] = special.hyp2f1(0.5, self.params.q, 1.5, -a[~big] ** 2)
        out[big] = _asymptotic_G(self.params, a[big]) / a[big]
        return out

    def G(self, rho):
        rho = np.asarray(rho, dtype=float)
        return rho * self.Gtilde(rho)

    def Ftilde(self, rho):
        """F(r) / r^2, an even function with value 1/2 at zero."""
        q = self.params.q
        a = np.abs(np.asarray(rho, dtype=float))
        out = np.empty_like(a)
        small = a < 0.5
        a2 = a[small] ** 2
        k = np.arange(40)
        coef = special.binom(-q, k) / ((2 * k + 1.0) * (2 * k + 2.0))
        out[small] = np.polynomial.polynomial.polyval(a2, coef)
        ab = a[~small]
        F = ab * ab * self.Gtilde(ab) - (1.0 - (1.0 + ab * ab) ** (1.0 - q)) / (2.0 * (q - 1.0))
        out[~small] = F / (ab * ab)
        return out

    def F(self, rho):
        rho = np.asarray(rho, dtype=float)
        return rho * rho * self.Ftilde(rho)

    def Fpp(self, rho):
        rho = np.asarray(rho, dtype=float)
        return (1.0 + rho * rho) ** (-self.params.q)


def _asymptotic_G(params: KernelParams, a):
    c = params.tail_coefficients
    inv2 = 1.0 / (a * a)
    series = np.polynomial.polynomial.polyval(inv2, c)
    return params.K - a ** (1.0 - 2.0 * params.q) * series


# ---------------------------------------------------------------------------
# fast tabulated route

def _panel_coefficients(func) -> np.ndarray:
    n_panels = int(round(TABLE_MAX / PANEL_WIDTH))
    coefs = np.empty((n_panels, CHEB_DEGREE + 1))
    for i in range(n_panels):
        lo = i * PANEL_WIDTH

        def local(t, lo=lo):
            return func(lo + 0.5 * PANEL_WIDTH * (t + 1.0))

        coefs[i] = chebyshev.chebinterpolate(local, CHEB_DEGREE)
    return coefs


@numba.njit(cache=True, inline="always")
def _clenshaw(c, t):
    b1 = 0.0
    b2 = 0.0
    t2 = 2.0 * t
    for k in range(c.shape[0] - 1, 0, -1):
        b1, b2 = t2 * b1 - b2 + c[k], b1
    return t * b1 - b2 + c[0]


@numba.njit(cache=True, inline="always")
def _tail_scalar(a, K, q, tail):
    inv2 = 1.0 / (a * a)
    acc = 0.0
    for k in range(tail.shape[0] - 1, -1, -1):
        acc = acc * inv2 + tail[k]
    return K - a ** (1.0 - 2.0 * q) * acc


@numba.njit(cache=True, inline="always")
def fast_scalar(r, mode, gt_tab, ft_tab, K, q, tail):
    """Kernel function at one point; mode 0: Gtilde, 1: G, 2: F, 3: Fpp."""
    a = abs(r)
    if mode == 3:
        return (1.0 + a * a) ** (-q)
    if a < TABLE_MAX:
        j = int(a / PANEL_WIDTH)
        if j >= gt_tab.shape[0]:
            j = gt_tab.shape[0] - 1
        t = 2.0 * (a - j * PANEL_WIDTH) / PANEL_WIDTH - 1.0
        if mode == 2:
            return a * a * _clenshaw(ft_tab[j], t)
        gt = _clenshaw(gt_tab[j], t)
        return gt if mode == 0 else r * gt
    g = _tail_scalar(a, K, q, tail)
    if mode == 0:
        return g / a
    if mode == 1:
        return r * (g / a)
    return a * g - (1.0 - (1.0 + a * a) ** (1.0 - q)) / (2.0 * (q - 1.0))


@numba.njit(cache=True, parallel=True)
def _fast_eval(x, mode, gt_tab, ft_tab, K, q, tail):
    out = np.empty(x.size)
    xf = x.ravel()
    for i in numba.prange(xf.size):
        out[i] = fast_scalar(xf[i], mode, gt_tab, ft_tab, K, q, tail)
    return out.reshape(x.shape)


class FastKernel:
    """Tabulated kernel functions for bulk evaluation.

    G and Gtilde share one table so that ``G(r) == r * Gtilde(r)`` holds
    bit-for-bit; this keeps the frozen-weight matrix and the residual exactly
    consistent. Accuracy against the reference route is about 1e-14.
    """

    def __init__(self, params: KernelParams):
        self.params = params
        cf = params.closed_form
        self._gt = _panel_coefficients(cf.Gtilde)
        self._ft = _panel_coefficients(cf.Ftilde)
        self._tail = np.ascontiguousarray(params.tail_coefficients)

    def _eval(self, rho, mode):
        x = np.ascontiguousarray(rho, dtype=float)
        return _fast_eval(x, mode, self._gt, self._ft, self.params.K, self.params.q,
                          self._tail)

    @property
    def tables(self):
        """Arguments for :func:`fast_scalar` after ``mode``."""
        return self._gt, self._ft, self.params.K, self.params.q, self._tail

    def Gtilde(self, rho):
        return self._eval(rho, 0)

    def G(self, rho):
        return self._eval(rho, 1)

    def F(self, rho):
        return self._eval(rho, 2)

    def Fpp(self, rho):
        return self._eval(rho, 3)

    def __call__(self, kind, rho):
        mode = {"Gtilde": 0, "G": 1, "F": 2, "Fpp": 3}[kind]
        return self._eval(rho, mode)
