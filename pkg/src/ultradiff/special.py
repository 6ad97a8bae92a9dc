"""Special functions used by the Laplace-domain formulas.

Real gamma, the McDonald function K_nu (modified Bessel, second kind) of
complex argument for the four half-integer/integer orders the radial
Green's functions need, and the lower incomplete gamma function of complex
argument.

K_nu evaluation strategy per order:

- nu = +-1/2: closed form sqrt(pi/(2z)) * exp(-z), exact on |arg z| < pi.
- nu in {0, 1}, |z| < 2: ascending series (cancellation-free there).
- nu in {0, 1}, |z| >= 2: the Laplace-type representation
  K_nu(z) = sqrt(pi/(2z)) e^{-z} * (2/Gamma(nu+1/2)) *
            int_0^inf e^{-v^2} v^{2 nu} (1 + v^2/(2z))^{nu-1/2} dv
  whose integrand is analytic in z off the negative real axis, so the same
  branch covers the full |arg z| < pi domain.  A fixed composite Gauss rule
  handles |arg z| <= 2.2 (all that deformed inversion contours can produce,
  since |arg z| < pi/2 there); closer to the cut the algebraic factor
  develops a sharp feature near v = sqrt(2|z|) and the integral is done
  adaptively per point.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exceptions import BranchCutError, ConvergenceError, DomainError

__all__ = ["McdonaldOrder", "gamma", "mcdonald_k", "lower_incomplete_gamma"]

_ALLOWED_ORDERS = (-0.5, 0.0, 0.5, 1.0)
_EULER_GAMMA = 0.5772156649015328606

# switch radius between ascending series and the integral branch
SERIES_RADIUS = 2.0
_ADAPTIVE_ANGLE = 2.2


@dataclass(frozen=True)
class McdonaldOrder:
    """Order nu = n/2 - 1 of the McDonald function, n the spatial dimension.

    Only nu in {-1/2, 0, 1/2, 1} is constructible; the radial formulas in
    dimensions 1..4 need exactly these (nu = 1 also feeds dK_0/dz = -K_1).
    """

    nu: float

    def __post_init__(self):
        if self.nu not in _ALLOWED_ORDERS:
            raise DomainError(
                f"McDonald order {self.nu} unsupported; allowed: {_ALLOWED_ORDERS}")

    @classmethod
    def for_dimension(cls, n: int) -> "McdonaldOrder":
        if n not in (1, 2, 3, 4):
            raise DomainError(f"dimension {n} outside 1..4")
        return cls(n / 2.0 - 1.0)


def gamma(x: float) -> float:
    """Gamma(x) for real x > 0 (libm implementation, ~1 ulp)."""
    if x <= 0.0:
        raise DomainError(f"gamma pole/domain error at x={x}")
    return math.gamma(x)


# -- McDonald function -------------------------------------------------------


def _as_order(nu) -> float:
    if isinstance(nu, McdonaldOrder):
        return nu.nu
    v = float(nu)
    if v not in _ALLOWED_ORDERS:
        raise DomainError(f"McDonald order {v} unsupported; allowed: {_ALLOWED_ORDERS}")
    return v


def _check_domain(z: np.ndarray) -> None:
    if np.any(z == 0):
        raise BranchCutError("McDonald function undefined at z = 0")
    on_cut = (z.real < 0) & (z.imag == 0)
    if np.any(on_cut):
        raise BranchCutError("McDonald function evaluated on the branch cut arg z = pi")


def _k_half_many(z: np.ndarray) -> np.ndarray:
    return np.sqrt(np.pi / (2.0 * z)) * np.exp(-z)


def _i_series_many(n: int, z: np.ndarray, terms: int = 40) -> np.ndarray:
    """I_n(z) by ascending series (integer n >= 0)."""
    q = 0.25 * z * z
    term = np.full(z.shape, 1.0 / math.factorial(n), dtype=complex)
    total = term.copy()
    for k in range(1, terms):
        term = term * q / (k * (n + k))
        total += term
    return total * (0.5 * z) ** n


def _k_series_many(n: int, z: np.ndarray, terms: int = 36) -> np.ndarray:
    """K_n(z), n in {0, 1}, ascending series; intended for |z| < ~4."""
    q = 0.25 * z * z
    logf = np.log(0.5 * z)
    if n == 0:
        term = np.ones(z.shape, dtype=complex)     # q^k / (k!)^2
        psi = -_EULER_GAMMA                        # psi(k+1)
        total = psi - logf
        for k in range(1, terms):
            term = term * q / (k * k)
            psi += 1.0 / k
            total = total + term * (psi - logf)
        return total
    # n = 1
    ifac = _i_series_many(1, z, terms=terms)
    term = np.ones(z.shape, dtype=complex)         # q^k / (k! (k+1)!)
    psi_a = -_EULER_GAMMA                          # psi(k+1)
    psi_b = 1.0 - _EULER_GAMMA                     # psi(k+2)
    total = (psi_a + psi_b) * term
    for k in range(1, terms):
        term = term * q / (k * (k + 1))
        psi_a += 1.0 / k
        psi_b += 1.0 / (k + 1)
        total = total + term * (psi_a + psi_b)
    return 1.0 / z + logf * ifac - 0.25 * z * total


_LARGE_RULE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _large_rule(nodes_per_panel: int = 16, vmax: float = 7.5, panels: int = 12):
    key = nodes_per_panel
    if key not in _LARGE_RULE:
        x, w = leggauss(nodes_per_panel)
        edges = np.linspace(0.0, vmax, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1:] - edges[:-1])
        v = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        wv = (half[:, None] * w[None, :]).ravel()
        _LARGE_RULE[key] = (v, wv)
    return _LARGE_RULE[key]


def _k_large_many(nu: float, z: np.ndarray, nodes_per_panel: int = 16) -> np.ndarray:
    """Laplace-integral branch, valid off the cut; used for |z| >= 2."""
    v, wv = _large_rule(nodes_per_panel)
    ev = np.exp(-v * v) * v ** (2.0 * nu) * wv
    factor = (1.0 + (v * v)[None, :] / (2.0 * z[:, None])) ** (nu - 0.5)
    integral = factor @ ev
    pref = np.sqrt(np.pi / (2.0 * z)) * np.exp(-z) * (2.0 / math.gamma(nu + 0.5))
    return pref * integral


def _k_large_adaptive(nu: float, z: complex) -> complex:
    """Same representation as :func:`_k_large_many`, adaptively, |arg z| near pi."""
    from scipy.integrate import quad

    def g(v):
        return np.exp(-v * v) * v ** (2.0 * nu) * (1.0 + v * v / (2.0 * z)) ** (nu - 0.5)

    vstar = math.sqrt(2.0 * abs(z))
    pts = [p for p in (0.5 * vstar, vstar, 1.5 * vstar) if p < 7.5]
    re = quad(lambda v: g(v).real, 0.0, 7.5, points=pts, limit=200)[0]
    im = quad(lambda v: g(v).imag, 0.0, 7.5, points=pts, limit=200)[0]
    pref = cmath.sqrt(np.pi / (2.0 * z)) * cmath.exp(-z) * (2.0 / math.gamma(nu + 0.5))
    return pref * (re + 1j * im)


def mcdonald_k_many(nu, z: np.ndarray) -> np.ndarray:
    """Vectorized K_nu over an array of complex arguments off the cut."""
    v = _as_order(nu)
    z = np.asarray(z, dtype=complex)
    _check_domain(z)
    if v in (-0.5, 0.5):
        return _k_half_many(z)
    if z.size > 40000:
        # keep the (n_z, n_quad) work matrix of the integral branch bounded
        out = np.empty(z.shape, dtype=complex)
        flat = z.ravel()
        for lo in range(0, flat.size, 40000):
            out.ravel()[lo:lo + 40000] = mcdonald_k_many(v, flat[lo:lo + 40000])
        return out
    out = np.empty(z.shape, dtype=complex)
    mod = np.abs(z)
    near_cut = np.abs(np.angle(z)) > _ADAPTIVE_ANGLE
    # the series stays cancellation-free to |z| ~ 6 and beats quadrature
    # hugging the cut, where the integrand's feature sharpens
    small = (mod < SERIES_RADIUS) | (near_cut & (mod < 6.0))
    wide = (~small) & near_cut
    bulk = ~(small | wide)
    if np.any(small):
        out[small] = _k_series_many(int(v), z[small])
    if np.any(bulk):
        out[bulk] = _k_large_many(v, z[bulk])
    for idx in np.flatnonzero(wide):
        out[idx] = _k_large_adaptive(v, complex(z[idx]))
    return out


def mcdonald_k(nu, z: complex) -> complex:
    """McDonald function K_nu(z), nu in {-1/2, 0, 1/2, 1}, |arg z| < pi."""
    return complex(mcdonald_k_many(nu, np.array([complex(z)]))[0])


# -- incomplete gamma ---------------------------------------------------------


def _gamma_p_series(s: float, z: complex, max_terms: int = 500) -> complex:
    # regularized P(s, z) = gamma(s, z)/Gamma(s), stable as s -> 0
    term = 1.0 / s if s > 0 else None
    ap = s
    total = 1.0
    term = 1.0
    for _ in range(max_terms):
        ap += 1.0
        term *= z / ap
        total += term
        if abs(term) < 1e-17 * abs(total):
            prefactor = cmath.exp(s * cmath.log(z) - z) / math.gamma(s + 1.0)
            return prefactor * total
    raise ConvergenceError("incomplete gamma series did not converge")


def _upper_gamma_cf(s: float, z: complex, max_iter: int = 2000) -> complex:
    # modified Lentz continued fraction for Gamma(s, z), Re z > 0
    tiny = 1e-300
    b = z + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, max_iter):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return cmath.exp(s * cmath.log(z) - z) * h
    raise ConvergenceError("incomplete gamma continued fraction did not converge")


def lower_incomplete_gamma(s: float, z: complex) -> complex:
    """gamma(s, z) = int_0^z t^(s-1) e^(-t) dt for s in (0, 1], Re z > 0.

    Series below |z| = s + 10, continued fraction for the upper tail above.
    """
    s = float(s)
    if not 0.0 < s <= 1.0:
        raise DomainError(f"s={s} outside (0, 1]")
    z = complex(z)
    if z.real <= 0.0:
        raise DomainError("lower_incomplete_gamma requires Re z > 0")
    if abs(z) < s + 10.0:
        return _gamma_p_series(s, z) * math.gamma(s)
    return math.gamma(s) - _upper_gamma_cf(s, z)


def regularized_gamma_p(s: float, z: complex) -> complex:
    """P(s, z) = gamma(s, z)/Gamma(s); remains finite as s -> 0+."""
    s = float(s)
    if s < 0.0:
        raise DomainError(f"s={s} negative")
    z = complex(z)
    if z.real <= 0.0:
        raise DomainError("regularized_gamma_p requires Re z > 0")
    if s == 0.0:
        return 1.0 + 0.0j
    if abs(z) < s + 10.0:
        return _gamma_p_series(s, z)
    return 1.0 - _upper_gamma_cf(s, z) / math.gamma(s)


def regularized_gamma_p_many(s: np.ndarray, z: complex) -> np.ndarray:
    """P(s_i, z) over an array of orders at one complex point, Re z > 0."""
    return np.array([regularized_gamma_p(float(si), z) for si in np.atleast_1d(s)])
