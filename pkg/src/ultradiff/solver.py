"""Cauchy-problem solvers for the ultraslow diffusion equation.

Three routes:

- :func:`solve_homogeneous` convolves the fundamental solution with the
  initial datum, using the subtracted form
  u = phi(x) + int Z(t, x - xi) [phi(xi) - phi(x)] dxi
  so the kernel's concentration at xi = x meets a Holder-damped bracket.
- :func:`solve_inhomogeneous` builds the heat potential with kernel E,
  split into the local part I^(mu) f(., x) plus a bracketed remainder, the
  same subtraction device in the source variable.
- :func:`solve_fd` is an independent cross-check: product-integration of
  the time memory (full history, no truncation) with an implicit 1-d
  Laplacian on a truncated interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import quad, simpson
from scipy.linalg import solve_banded

from .calculus import DistributedCalculus, Grid1D
from .exceptions import DomainError, GrowthRateError
from .green import EProfile, ZProfile
from .kernels import KernelSet

__all__ = ["CauchyProblem", "Field", "SolveResult",
           "solve_homogeneous", "solve_inhomogeneous", "solve_fd"]


class SolveResult(NamedTuple):
    value: float
    err: float


@dataclass
class CauchyProblem:
    """Problem data: kernels, dimension, initial datum and/or source.

    ``phi_growth = (C_b, b)`` declares |phi(x)| <= C_b e^{b|x|};
    ``phi_holder = (lambda_H, C_H)`` declares the local Holder regularity.
    Both are declared, not verified; the growth bound is checked against
    the fitted spatial decay of Z before quadrature.
    """

    kernels: KernelSet
    dim: int = 1
    phi: Callable = None
    f: Callable = None
    T: float = 1.0
    phi_growth: tuple = (1.0, 0.0)
    phi_holder: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise DomainError("dimension must be 1, 2 or 3")
        if self.T <= 0:
            raise DomainError("horizon T must be positive")
        if self.phi_growth[1] < 0:
            raise DomainError("growth rate b must be >= 0")

    @property
    def epsilon(self) -> float:
        """Exponent in the |D^(mu) u| <= C t^(-1+eps) bound: lambda_H / 2."""
        return 0.5 * self.phi_holder[0]


@dataclass
class Field:
    """Sampled space-time solution u(t_i, x_j) on a rectangular grid."""

    ts: np.ndarray
    xs: np.ndarray
    values: np.ndarray
    manifest: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "value"])
            for i, t in enumerate(self.ts):
                for j, x in enumerate(self.xs):
                    w.writerow([repr(float(t)), repr(float(x)),
                                repr(float(self.values[i, j]))])

    def at(self, t: float, x: float) -> float:
        i = int(np.argmin(np.abs(self.ts - t)))
        j = int(np.argmin(np.abs(self.xs - x)))
        return float(self.values[i, j])


# -- homogeneous problem --------------------------------------------------------


def _angular_average(phi, x, r: float, dim: int) -> float:
    """Mean of phi over the sphere |y - x| = r."""
    if dim == 1:
        pts = np.array([[x[0] - r], [x[0] + r]])
        return float(np.mean(phi(pts)))
    if dim == 2:
        th = np.linspace(0.0, 2.0 * math.pi, 33)[:-1]
        pts = x[None, :] + r * np.stack([np.cos(th), np.sin(th)], axis=1)
        return float(np.mean(phi(pts)))
    # dim == 3: product rule, Gauss in cos(theta), trapezoid in azimuth
    from .weights import _gauss
    cz, wz = _gauss(12)
    ph = np.linspace(0.0, 2.0 * math.pi, 25)[:-1]
    cz_, ph_ = np.meshgrid(cz, ph, indexing="ij")
    sz = np.sqrt(1.0 - cz_ ** 2)
    pts = x[None, :] + r * np.stack(
        [sz.ravel() * np.cos(ph_.ravel()),
         sz.ravel() * np.sin(ph_.ravel()),
         cz_.ravel()], axis=1)
    vals = phi(pts).reshape(cz_.shape)
    return float(np.sum(vals.mean(axis=1) * wz) / 2.0)


def _as_point(x, dim: int) -> np.ndarray:
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.size != dim:
        raise DomainError(f"evaluation point has size {pt.size}, expected {dim}")
    return pt


def solve_homogeneous(prob: CauchyProblem, t: float, x, *,
                      profile: ZProfile = None, tol: float = 1e-7) -> SolveResult:
    """u(t, x) for the homogeneous problem with initial datum phi."""
    if prob.phi is None:
        raise DomainError("problem has no initial datum")
    if not 0.0 < t <= prob.T:
        raise DomainError(f"t={t} outside (0, T={prob.T}]")
    pt = _as_point(x, prob.dim)
    prof = profile if profile is not None and profile.t == t else \
        ZProfile(prob.kernels, prob.dim, t)
    b = prob.phi_growth[1]
    if b >= prof.decay_rate:
        raise GrowthRateError(
            f"declared growth rate b={b} >= fitted Z decay {prof.decay_rate:.3f}")
    phix = float(prob.phi(pt[None, :])[0])
    R = prof.x_max

    if prob.dim == 1:
        x0 = float(pt[0])

        def f(xi):
            return prof(abs(xi - x0)) * (float(prob.phi(np.array([[xi]]))[0]) - phix)

        left, le = quad(f, x0 - R, x0, limit=200)
        right, re_ = quad(f, x0, x0 + R, limit=200)
        core, qerr = left + right, le + re_
    else:
        surface = {2: 2.0 * math.pi, 3: 4.0 * math.pi}[prob.dim]

        def g(r):
            avg = _angular_average(prob.phi, pt, r, prob.dim)
            return surface * r ** (prob.dim - 1) * prof(r) * (avg - phix)

        core, qerr = quad(g, 0.0, R, limit=200)

    # truncation: |phi(xi) - phi(x)| <= C_b e^{b|x|}(e^{bR'} + 1) outside
    a = prof.decay_rate
    cb = prob.phi_growth[0]
    tail_mass = prof.values[-1] / max(a - b, 1e-3)
    tail = tail_mass * _SURFACE_AREA[prob.dim](R) * (
        cb * math.exp(b * (np.linalg.norm(pt) + R)) + abs(phix))
    return SolveResult(phix + core, qerr + abs(tail))


_SURFACE_AREA = {
    1: lambda r: 2.0,
    2: lambda r: 2.0 * math.pi * r,
    3: lambda r: 4.0 * math.pi * r * r,
}


# -- inhomogeneous problem -------------------------------------------------------


class _EProfileCache:
    def __init__(self, ks: KernelSet, dim: int):
        self.ks, self.dim = ks, dim
        self.cache: dict[float, EProfile] = {}

    def get(self, sigma: float) -> EProfile:
        key = round(float(sigma), 14)
        prof = self.cache.get(key)
        if prof is None:
            prof = EProfile(self.ks, self.dim, float(sigma), points=300)
            self.cache[key] = prof
        return prof


def solve_inhomogeneous(prob: CauchyProblem, t: float, x, *,
                        n_time: int = 192, sigma_panels: int = 12,
                        cache: _EProfileCache = None) -> SolveResult:
    """Heat-potential solution with zero initial condition.

    u = u1 + u2 with u2 = (I^(mu) f)(., x) exactly (kappa product
    integration in time) and u1 the bracketed remainder integrated over
    sigma = t - tau with a mesh graded toward sigma = 0.
    """
    if prob.f is None:
        raise DomainError("problem has no source term")
    if not 0.0 < t <= prob.T:
        raise DomainError(f"t={t} outside (0, T={prob.T}]")
    pt = _as_point(x, prob.dim)
    ks = prob.kernels

    # u2: time-local part through the distributed-order integral
    tgrid = np.linspace(0.0, t, n_time + 1)
    fvals = np.array([float(prob.f(tt, pt)) for tt in tgrid])
    u2_grid = DistributedCalculus(ks, Grid1D(tgrid, fvals)).integral()
    u2 = float(u2_grid.values[-1])
    coarse = DistributedCalculus(
        ks, Grid1D(tgrid[::2], fvals[::2])).integral()
    u2_err = abs(u2 - float(coarse.values[-1]))

    # u1: bracketed remainder, graded in sigma toward 0
    cache = cache or _EProfileCache(ks, prob.dim)
    edges = t * (np.arange(sigma_panels + 1) / sigma_panels) ** 3
    from .weights import _gauss
    gx, gw = _gauss(4)

    def bracket_integral(sigma: float) -> float:
        prof = cache.get(sigma)
        tau = t - sigma
        fx = float(prob.f(tau, pt))
        R = prof.x_max
        if prob.dim == 1:
            x0 = float(pt[0])

            def h(xi):
                return prof(abs(xi - x0)) * (float(prob.f(tau, np.array([xi]))) - fx)

            v1 = quad(h, x0 - R, x0, limit=100)[0]
            v2 = quad(h, x0, x0 + R, limit=100)[0]
            return v1 + v2
        surface = {2: 2.0 * math.pi, 3: 4.0 * math.pi}[prob.dim]

        def g(r):
            avg = _angular_average(lambda ys: np.array(
                [float(prob.f(tau, y)) for y in ys]), pt, r, prob.dim)
            return surface * r ** (prob.dim - 1) * prof(r) * (avg - fx)

        return quad(g, 0.0, R, limit=100)[0]

    u1 = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        for xi, wi in zip(gx, gw):
            sig = mid + half * xi
            if sig <= 0:
                continue
            u1 += half * wi * bracket_integral(sig)

    # first panel's sigma -> 0 behavior contributes O(sigma^(1+lam/2))
    u1_err = abs(edges[1]) * 0.1 * max(abs(u1), 1e-12) + 1e-12
    return SolveResult(u1 + u2, u1_err + u2_err)


# -- finite-difference cross-check ------------------------------------------------


def solve_fd(prob: CauchyProblem, *, nx: int = 257, nt: int = 128,
             L: float = 12.0) -> Field:
    """Implicit product-integration scheme on [-L, L], n = 1 only.

    Full-memory history sums (no short-memory truncation).  Boundary values
    are frozen at phi(+-L); L must be large enough that the solution's
    boundary influence is below tolerance, which holds when phi and f are
    negligible near the boundary or constant.
    """
    if prob.dim != 1:
        raise DomainError("the finite-difference scheme is 1-d only")
    if prob.phi is None and prob.f is None:
        raise DomainError("nothing to solve: no datum, no source")
    if nx < 8 or nt < 2:
        raise DomainError("mesh too small to be meaningful")
    ks = prob.kernels
    xs = np.linspace(-L, L, nx)
    dx = xs[1] - xs[0]
    dt = prob.T / nt
    ts = dt * np.arange(nt + 1)

    edges = dt * np.arange(nt + 1)
    a_w = ks.k_moments(edges[:-1], edges[1:], upto=1) / dt   # a_1 .. a_nt

    u = np.zeros((nt + 1, nx))
    if prob.phi is not None:
        u[0] = prob.phi(xs[:, None])
    bc_lo, bc_hi = u[0, 0], u[0, -1]

    # banded matrix for a1*I - Laplacian on interior nodes
    a1 = a_w[0]
    n_in = nx - 2
    ab = np.zeros((3, n_in))
    ab[0, 1:] = -1.0 / dx**2
    ab[1, :] = a1 + 2.0 / dx**2
    ab[2, :-1] = -1.0 / dx**2

    diffs = np.zeros((nt + 1, nx))     # u_j - u_{j-1}
    for m in range(1, nt + 1):
        hist = np.zeros(nx)
        if m > 1:
            # sum_{j=1}^{m-1} a_{m-j+1} (u_j - u_{j-1})
            hist = np.tensordot(a_w[m - 1:0:-1], diffs[1:m], axes=(0, 0))
        rhs = a1 * u[m - 1] - hist
        if prob.f is not None:
            rhs = rhs + np.array([float(prob.f(ts[m], np.array([xx])))
                                  for xx in xs])
        b = rhs[1:-1].copy()
        b[0] += bc_lo / dx**2
        b[-1] += bc_hi / dx**2
        sol = solve_banded((1, 1), ab, b)
        u[m, 1:-1] = sol
        u[m, 0] = bc_lo
        u[m, -1] = bc_hi
        diffs[m] = u[m] - u[m - 1]

    manifest = {
        "nx": nx, "nt": nt, "L": L, "dt": dt, "dx": dx,
        "weight": ks.weight.to_json(), "scheme": "implicit product integration",
    }
    return Field(ts, xs, u, manifest)
