"""Weight functions mu(alpha) on [0, 1] and quadrature in the order variable.

Every kernel in this package is an average of classical fractional-order
quantities over alpha in [0, 1] against a nonnegative weight mu.  The
:class:`Weight` type carries the weight itself plus the metadata the
asymptotic theory needs (vanishing order ``nu`` at alpha = 0, the value
mu(1), and the lower bound ``rho`` of the regular factor for product
weights).  :func:`order_integral` is the one quadrature everything else is
built on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as npoly
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import PchipInterpolator

from .exceptions import ConvergenceError, DomainError

__all__ = ["Weight", "evaluate", "order_integral"]

_KINDS = ("constant", "power_law", "product", "tabulated")

_gauss_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    try:
        return _gauss_cache[n]
    except KeyError:
        nodes, wts = leggauss(n)
        _gauss_cache[n] = (nodes, wts)
        return nodes, wts


@dataclass(frozen=True)
class Weight:
    """Nonnegative weight mu(alpha) over the order variable alpha in [0, 1].

    Construct through the factory classmethods rather than directly:

    - ``Weight.constant(c)``            mu(alpha) = c
    - ``Weight.power_law(a, nu)``       mu(alpha) = a * alpha**nu
    - ``Weight.product(nu, coeffs)``    mu(alpha) = alpha**nu * mu1(alpha),
      mu1 a polynomial (ascending coefficients) bounded below by rho > 0
    - ``Weight.tabulated(samples, nu)`` shape-preserving cubic through
      samples on a uniform grid over [0, 1]; nu must be declared by the
      caller, it is never inferred from the samples

    ``smoothness`` records the declared continuity class; it is metadata
    only and is never enforced.
    """

    kind: str
    nu: float = 0.0
    coeffs: tuple = ()
    samples: tuple = ()
    smoothness: str = "C3"
    # derived at construction
    mu_at_1: float = field(init=False, default=0.0)
    mu_at_0: float = field(init=False, default=0.0)
    rho: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown weight kind {self.kind!r}")
        if self.nu < 0:
            raise DomainError("vanishing order nu must be >= 0")
        if self.kind == "tabulated":
            vals = np.asarray(self.samples, dtype=float)
            if vals.ndim != 1 or vals.size < 4:
                raise DomainError("tabulated weight needs >= 4 samples on [0, 1]")
            if np.any(vals < 0):
                raise DomainError("weight samples must be nonnegative")
            if not np.any(vals > 0):
                raise DomainError("weight must be nonzero on a set of positive measure")
            grid = np.linspace(0.0, 1.0, vals.size)
            interp = PchipInterpolator(grid, vals)
            object.__setattr__(self, "_interp", interp)
        elif self.kind == "product":
            c = np.asarray(self.coeffs, dtype=float)
            if c.size == 0:
                raise DomainError("product weight needs mu1 polynomial coefficients")
            aa = np.linspace(0.0, 1.0, 2049)
            mu1 = npoly.polyval(aa, c)
            lo = float(mu1.min())
            if lo <= 0:
                raise DomainError("product weight requires mu1(alpha) >= rho > 0 on [0, 1]")
            object.__setattr__(self, "rho", lo)
        elif self.kind == "constant":
            (c,) = self.coeffs
            if c <= 0:
                raise DomainError("constant weight must be positive")
        elif self.kind == "power_law":
            (a,) = self.coeffs
            if a <= 0:
                raise DomainError("power-law amplitude must be positive")

        object.__setattr__(self, "mu_at_1", float(self._evaluate_array(np.array([1.0]))[0]))
        object.__setattr__(self, "mu_at_0", float(self._evaluate_array(np.array([0.0]))[0]))
        # mu(1) > 0 is a hypothesis of the k/K asymptotics, not of the
        # definitions; a zero value is allowed and downstream checks gate on it.

    # -- constructors ----------------------------------------------------

    @classmethod
    def constant(cls, c: float = 1.0) -> "Weight":
        return cls(kind="constant", nu=0.0, coeffs=(float(c),))

    @classmethod
    def power_law(cls, a: float = 1.0, nu: float = 1.0) -> "Weight":
        return cls(kind="power_law", nu=float(nu), coeffs=(float(a),))

    @classmethod
    def product(cls, nu: float, coeffs, smoothness: str = "C3") -> "Weight":
        return cls(kind="product", nu=float(nu), coeffs=tuple(float(c) for c in coeffs),
                   smoothness=smoothness)

    @classmethod
    def tabulated(cls, samples, nu: float, smoothness: str = "C1") -> "Weight":
        return cls(kind="tabulated", nu=float(nu),
                   samples=tuple(float(v) for v in samples), smoothness=smoothness)

    @classmethod
    def bump(cls, center: float, width: float = 0.02, mass: float = 1.0,
             n: int = 257) -> "Weight":
        """Narrow tabulated bump at ``center``, approximating a single order.

        The bump integrates to ``mass`` so that kernels degenerate to the
        classical single-order ones scaled by the mass.
        """
        grid = np.linspace(0.0, 1.0, n)
        vals = np.exp(-0.5 * ((grid - center) / width) ** 2)
        vals[vals < 1e-12] = 0.0
        step = grid[1] - grid[0]
        vals *= mass / (np.sum(vals) * step)
        return cls.tabulated(vals, nu=0.0)

    # -- evaluation -------------------------------------------------------

    def _evaluate_array(self, alpha: np.ndarray) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        if self.kind == "constant":
            return np.full_like(alpha, self.coeffs[0])
        if self.kind == "power_law":
            return self.coeffs[0] * np.power(alpha, self.nu)
        if self.kind == "product":
            return np.power(alpha, self.nu) * npoly.polyval(alpha, np.asarray(self.coeffs))
        return np.maximum(self._interp(alpha), 0.0)

    def __call__(self, alpha: float) -> float:
        return evaluate(self, alpha)

    def derivative_at_1(self) -> float:
        """mu'(1), analytic where the representation allows, spline otherwise."""
        if self.kind == "constant":
            return 0.0
        if self.kind == "power_law":
            return self.coeffs[0] * self.nu
        if self.kind == "product":
            c = np.asarray(self.coeffs)
            mu1 = npoly.polyval(1.0, c)
            dmu1 = npoly.polyval(1.0, npoly.polyder(c))
            return float(self.nu * mu1 + dmu1)
        return float(self._interp.derivative()(1.0))

    @property
    def vanishing_amplitude(self) -> float:
        """Amplitude a in mu(alpha) ~ a * alpha**nu near alpha = 0."""
        return self.small_alpha_expansion()[1][0]

    def small_alpha_expansion(self):
        """(nu, (c0, c1, c2)) with mu(alpha) = alpha**nu (c0 + c1 a + c2 a^2 + ...).

        Feeds the Watson asymptotics of the order averages at p -> 0; exact
        for the parametric kinds, spline-based (and leading-order only for
        nu > 0) for tabulated weights.
        """
        if self.kind == "constant":
            return 0.0, (self.coeffs[0], 0.0, 0.0)
        if self.kind == "power_law":
            return self.nu, (self.coeffs[0], 0.0, 0.0)
        if self.kind == "product":
            c = np.asarray(self.coeffs, dtype=float)
            c = np.concatenate([c, np.zeros(max(0, 3 - c.size))])
            return self.nu, (float(c[0]), float(c[1]), float(c[2]))
        if self.nu == 0.0:
            d1 = float(self._interp.derivative(1)(0.0))
            d2 = float(self._interp.derivative(2)(0.0))
            return 0.0, (self.mu_at_0, d1, 0.5 * d2)
        a0 = 1e-3
        amp = float(self._evaluate_array(np.array([a0]))[0] / a0**self.nu)
        return self.nu, (amp, 0.0, 0.0)

    # -- serialization ----------------------------------------------------

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind, "nu": self.nu}
        if self.coeffs:
            out["coeffs"] = list(self.coeffs)
        if self.samples:
            out["samples"] = list(self.samples)
        if self.smoothness != "C3":
            out["smoothness"] = self.smoothness
        return out

    @classmethod
    def from_json(cls, obj) -> "Weight":
        if isinstance(obj, str):
            obj = json.loads(obj)
        kind = obj.get("kind")
        nu = float(obj.get("nu", 0.0))
        coeffs = tuple(obj.get("coeffs", ()))
        samples = tuple(obj.get("samples", ()))
        smoothness = obj.get("smoothness", "C3")
        if kind == "constant":
            return cls.constant(coeffs[0] if coeffs else 1.0)
        if kind == "power_law":
            return cls.power_law(coeffs[0] if coeffs else 1.0, nu)
        if kind == "product":
            return cls.product(nu, coeffs, smoothness)
        if kind == "tabulated":
            return cls.tabulated(samples, nu, smoothness)
        raise DomainError(f"unknown weight kind {kind!r}")


def evaluate(weight: Weight, alpha: float) -> float:
    """mu(alpha); exact for the parametric kinds, cubic for tabulated."""
    a = float(alpha)
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"order alpha={a} outside [0, 1]")
    return float(weight._evaluate_array(np.array([a]))[0])


def order_integral(weight: Weight, f: Callable[[np.ndarray], np.ndarray], *,
                   rtol: float = 1e-12, max_depth: int = 9,
                   return_error: bool = False):
    """Integrate f(alpha) * mu(alpha) over alpha in [0, 1].

    ``f`` receives an array of alpha nodes and must return values with the
    node axis last, so matrix-valued integrands (one row per Laplace node,
    say) are integrated in one call.

    Composite 64-point Gauss-Legendre, panels bisected adaptively until two
    successive dyadic refinements agree to ``rtol``.  The integrands used in
    this package are analytic in alpha (p**alpha type), so convergence is
    spectral; the bisection guards large |log p|.

    Raises :class:`ConvergenceError` carrying the achieved estimate when the
    depth budget is exhausted.
    """
    nodes, wts = _gauss(64)

    def composite(depth: int):
        m = 1 << depth
        half = 0.5 / m
        centers = (np.arange(m) + 0.5) / m
        alpha = (centers[:, None] + half * nodes[None, :]).ravel()
        wq = np.tile(wts * half, m) * weight._evaluate_array(alpha)
        fv = np.asarray(f(alpha))
        return fv @ wq, np.abs(fv) @ wq

    prev, _ = composite(0)
    for depth in range(1, max_depth + 1):
        cur, l1 = composite(depth)
        diff = np.abs(cur - prev)
        scale = np.maximum(np.abs(cur), 1e-3 * l1) + 1e-300
        if np.all(diff <= rtol * scale):
            if return_error:
                return cur, float(np.max(diff))
            return cur
        prev = cur
    raise ConvergenceError(
        f"order integral did not reach rtol={rtol} at depth {max_depth}",
        estimate=float(np.max(np.abs(diff / scale))),
    )
