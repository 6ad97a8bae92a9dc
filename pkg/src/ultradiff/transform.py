"""Laplace-inversion engines.

Two routes are provided and deliberately kept independent:

- :func:`invert_on_contour` integrates e^{pt} F(p) over the deformed contour
  made of the arc |p| = gamma, |arg p| <= omega*pi and two rays
  arg p = +-omega*pi, oriented in the direction of growing arg p.  Since
  cos(omega*pi) < 0, the integrand decays exponentially along the rays for
  t > 0.
- :func:`invert_bromwich` integrates along the vertical line Re p = gamma
  with Filon-type treatment of the oscillation, plus an integration-by-parts
  tail expansion.  It is the route of choice as t -> 0+, where ray
  truncation on the deformed contour degrades.

Both return a value with an a-posteriori error estimate obtained from node
doubling (no analytic constants are available), with a roundoff floor
proportional to the L1 mass of the quadrature terms.

The module also houses the real-axis spectral densities obtained by
collapsing the contour onto the negative half-axis (the omega -> 1 limit),
which represent the relaxation function and the kernel kappa as Laplace
transforms of nonnegative densities, and a reusable quadrature rule for
integrating those densities against e^{-t r}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exceptions import ContourError, ConvergenceError, DomainError, TailTruncationError
from .weights import Weight, order_integral

__all__ = [
    "Contour",
    "ContourEvaluation",
    "InversionResult",
    "contour_for",
    "invert_on_contour",
    "invert_bromwich",
    "real_axis_limit_density",
    "SpectralRule",
]


class InversionResult(NamedTuple):
    value: complex
    err: float

    @property
    def real(self) -> float:
        return self.value.real


_gauss_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(n: int):
    if n not in _gauss_cache:
        _gauss_cache[n] = leggauss(n)
    return _gauss_cache[n]


def _panel_nodes(edges: np.ndarray, n: int):
    """Gauss nodes/weights on a sequence of panels given by ``edges``."""
    x, w = _gauss(n)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return nodes, wts


@dataclass(eq=False)
class Contour:
    """Deformed inversion contour with precomputed quadrature nodes.

    Nodes are stored at two resolutions; the coarse set (half the points per
    panel) feeds the node-doubling error estimate.  ``r_max`` is the ray
    truncation radius; the tail beyond it is bounded at integration time
    using the known exponential decay rate t*|cos(omega*pi)|.
    """

    gamma: float
    omega: float
    r_max: float
    # fine and coarse node/weight arrays over the whole oriented path
    p_f: np.ndarray = field(repr=False, default=None)
    w_f: np.ndarray = field(repr=False, default=None)
    p_c: np.ndarray = field(repr=False, default=None)
    w_c: np.ndarray = field(repr=False, default=None)
    # indices of the outermost fine nodes of each ray (for tail bounds)
    _tail_idx: tuple = field(repr=False, default=())

    @classmethod
    def build(cls, gamma: float, omega: float = 0.9, *, t: float = None,
              r_max: float = None, nodes_per_panel: int = 16,
              arc_panels: int = 8, tail_cut: float = 1e-18,
              extra_decay: float = 0.0, ray_panel_width: float = 1.0) -> "Contour":
        """Build a contour sized for inversion at time ``t``.

        ``extra_decay`` may declare additional known decay of F along the
        rays (rate per unit r) to shorten them; ``ray_panel_width`` shrinks
        the log-radial panels when F oscillates along the rays.
        """
        if gamma <= 0:
            raise DomainError("contour radius gamma must be positive")
        if not 0.5 < omega < 1.0:
            raise DomainError("ray angle parameter omega must lie in (1/2, 1)")
        c = abs(math.cos(omega * math.pi))
        if r_max is None:
            if t is None:
                raise DomainError("Contour.build needs either t or r_max")
            rate = t * c + extra_decay
            r_max = gamma + (-math.log(tail_cut)) / rate

        def path(nper):
            # arc, theta in [-omega*pi, omega*pi]
            th_edges = np.linspace(-omega * math.pi, omega * math.pi, arc_panels + 1)
            th, wth = _panel_nodes(th_edges, nper)
            p_arc = gamma * np.exp(1j * th)
            w_arc = 1j * p_arc * wth
            # rays, substitution r = gamma + e^s
            s_lo = math.log(gamma) - 26.0
            s_hi = math.log(r_max - gamma)
            n_pan = max(4, int(math.ceil((s_hi - s_lo) / ray_panel_width)))
            s_edges = np.linspace(s_lo, s_hi, n_pan + 1)
            s, ws = _panel_nodes(s_edges, nper)
            r = gamma + np.exp(s)
            wr = np.exp(s) * ws
            e_plus = np.exp(1j * omega * math.pi)
            e_minus = np.conj(e_plus)
            # oriented: down the minus ray, around the arc, up the plus ray
            p = np.concatenate([r[::-1] * e_minus, p_arc, r * e_plus])
            w = np.concatenate([-e_minus * wr[::-1], w_arc, e_plus * wr])
            return p, w

        p_f, w_f = path(nodes_per_panel)
        p_c, w_c = path(max(4, nodes_per_panel // 2))
        return cls(gamma=gamma, omega=omega, r_max=r_max, p_f=p_f, w_f=w_f,
                   p_c=p_c, w_c=w_c, _tail_idx=(0, len(p_f) - 1))

    @property
    def arc_nodes(self):
        """(p, w) pairs on the arc part of the fine rule."""
        mask = np.isclose(np.abs(self.p_f), self.gamma, rtol=1e-12)
        return list(zip(self.p_f[mask], self.w_f[mask]))

    @property
    def ray_nodes(self):
        """(r, w) radial pairs on the plus ray of the fine rule."""
        n = len(self.p_f)
        mask = np.abs(self.p_f) > self.gamma * (1 + 1e-12)
        upper = np.zeros(n, dtype=bool)
        upper[n // 2:] = True
        sel = mask & upper
        return list(zip(np.abs(self.p_f[sel]), np.abs(self.w_f[sel])))


def _contour_sum(p, w, Fv, t):
    terms = w * np.exp(p * t) * Fv
    total = np.sum(terms) / (2j * math.pi)
    l1 = np.sum(np.abs(terms)) / (2.0 * math.pi)
    return total, l1


def _screen_blowup(p, Fv, gamma):
    mod = np.abs(Fv)
    on_ray = np.abs(p) > gamma * (1 + 1e-9)
    m = mod[on_ray]
    if m.size < 3:
        return
    sig = m > 1e-200
    ratio = m[1:][sig[1:] & sig[:-1]] / m[:-1][sig[1:] & sig[:-1]]
    if ratio.size and (ratio.max() > 1e10 or ratio.min() < 1e-10):
        # geometric node spacing makes smooth decay look steep; only a
        # jump of ten orders between adjacent nodes is deemed singular
        raise ContourError("suspected singularity between adjacent contour nodes")


class ContourEvaluation:
    """F evaluated once on a contour, invertible at many times t."""

    def __init__(self, contour: Contour, F: Callable[[np.ndarray], np.ndarray]):
        self.contour = contour
        self.Ff = np.asarray(F(contour.p_f), dtype=complex)
        self.Fc = np.asarray(F(contour.p_c), dtype=complex)
        _screen_blowup(contour.p_f, self.Ff, contour.gamma)

    def at(self, t: float, *, tol: float = 1e-8) -> InversionResult:
        if t <= 0:
            raise DomainError("contour inversion requires t > 0")
        c = self.contour
        fine, l1 = _contour_sum(c.p_f, c.w_f, self.Ff, t)
        coarse, _ = _contour_sum(c.p_c, c.w_c, self.Fc, t)
        decay = t * abs(math.cos(c.omega * math.pi))
        i0, i1 = c._tail_idx
        tail_amp = max(abs(self.Ff[i0]), abs(self.Ff[i1]))
        tail = tail_amp * math.exp(-decay * c.r_max) / (math.pi * decay)
        err = abs(fine - coarse) + 1e-15 * l1 + tail
        scale = max(abs(fine), err)
        if tail > max(tol * scale, 1e-280) * 10.0:
            raise TailTruncationError(
                f"ray truncation tail {tail:.2e} above tolerance at t={t}",
                estimate=tail)
        return InversionResult(complex(fine), float(err))


def invert_on_contour(F: Callable[[np.ndarray], np.ndarray], contour: Contour,
                      t: float, *, tol: float = 1e-8) -> InversionResult:
    """(1/2 pi i) * int_contour e^{pt} F(p) dp with an error estimate.

    ``F`` must accept an ndarray of complex p.  The estimate combines node
    doubling, a roundoff floor from the L1 mass of the terms, and the ray
    tail bound.
    """
    return ContourEvaluation(contour, F).at(t, tol=tol)


def contour_for(t: float, *, gamma: float = None, omega: float = 0.9,
                nodes_per_panel: int = 16, extra_decay: float = 0.0,
                gamma_min: float = 0.0) -> Contour:
    """Reasonable default contour for inversion at time t."""
    if gamma is None:
        gamma = max(2.0 / t, gamma_min * 1.0001, 1e-8)
    return Contour.build(gamma, omega, t=t, nodes_per_panel=nodes_per_panel,
                         extra_decay=extra_decay)


# -- Bromwich line with Filon treatment --------------------------------------


def _filon_moments(h: float, t: float):
    """int_{-h}^{h} u^k e^{i u t} du for k = 0, 1, 2."""
    phi = h * t
    if abs(phi) < 0.5:
        p2 = phi * phi
        m0 = 2.0 * h * (1.0 - p2 / 6.0 + p2 * p2 / 120.0 - p2 ** 3 / 5040.0)
        m1 = 2j * (phi ** 3 / 3.0 - phi ** 5 / 30.0 + phi ** 7 / 840.0) / (t * t)
        m2 = 2.0 * (phi ** 3 / 3.0 - phi ** 5 / 10.0 + phi ** 7 / 168.0) / (t ** 3)
        return m0, m1, m2
    s, c = math.sin(phi), math.cos(phi)
    m0 = 2.0 * s / t
    m1 = 2j * (s - phi * c) / (t * t)
    m2 = 2.0 * ((phi * phi - 2.0) * s + 2.0 * phi * c) / (t ** 3)
    return m0, m1, m2


class _FilonWorker:
    def __init__(self, F, gamma, t):
        self.F = F
        self.gamma = gamma
        self.t = t
        self.cache: dict[float, complex] = {}
        self.l1 = 0.0

    def f(self, tau: float) -> complex:
        v = self.cache.get(tau)
        if v is None:
            v = complex(self.F(complex(self.gamma, tau)))
            self.cache[tau] = v
        return v

    def panel(self, a: float, b: float) -> complex:
        m = 0.5 * (a + b)
        h = 0.5 * (b - a)
        fa, fm, fb = self.f(a), self.f(m), self.f(b)
        c0 = fm
        c1 = (fb - fa) / (2.0 * h)
        c2 = (fb - 2.0 * fm + fa) / (2.0 * h * h)
        m0, m1, m2 = _filon_moments(h, self.t)
        val = np.exp(1j * m * self.t) * (c0 * m0 + c1 * m1 + c2 * m2)
        self.l1 += abs(fm) * min(2.0 * h, 2.0 / self.t)
        return val

    def adaptive(self, a: float, b: float, tol: float, depth: int = 0):
        whole = self.panel(a, b)
        m = 0.5 * (a + b)
        split = self.panel(a, m) + self.panel(m, b)
        err = abs(whole - split)
        if err <= tol or depth >= 24 or (b - a) <= 1e-12 * max(1.0, b):
            return split, err
        lv, le = self.adaptive(a, m, tol / 2.0, depth + 1)
        rv, re = self.adaptive(m, b, tol / 2.0, depth + 1)
        return lv + rv, le + re

    def tail(self, A: float):
        """IBP expansion of int_A^inf e^{i tau t} F dtau, with residual size."""
        dA = 1e-4 * A
        f0 = self.f(A)
        fp = (self.f(A + dA) - self.f(A - dA)) / (2.0 * dA)
        fpp = (self.f(A + dA) - 2.0 * f0 + self.f(A - dA)) / (dA * dA)
        it = 1j * self.t
        t0 = -f0 / it
        t1 = fp / (it * it)
        t2 = -fpp / (it ** 3)
        value = np.exp(1j * A * self.t) * (t0 + t1 + t2)
        resid = abs(t2) * 3.0 / max(self.t * A, 1.0) + abs(t2) * 0.1
        return value, resid


def invert_bromwich(F: Callable[[complex], complex], gamma: float, t: float,
                    tau_max: float = None, *, tol: float = 1e-8,
                    max_doublings: int = 60) -> InversionResult:
    """Truncated vertical-line inversion at Re p = gamma.

    Assumes the transform of a real function, F(conj p) = conj F(p), so only
    the upper half-line is integrated.  Oscillation is handled with
    Filon-type panels (exact moments of e^{i tau t} against quadratics) and
    the truncated tail is completed with a three-term integration-by-parts
    expansion using numerical derivatives of F.

    Raises :class:`ConvergenceError` when the running estimate stalls above
    tolerance (oscillatory non-convergence).
    """
    if t <= 0:
        raise DomainError("invert_bromwich requires t > 0")
    if gamma <= 0:
        raise DomainError("invert_bromwich requires gamma > 0")
    w = _FilonWorker(F, gamma, t)
    pref = math.exp(gamma * t) / math.pi

    total = 0.0 + 0.0j
    quad_err = 0.0
    a = 0.0
    b = gamma
    prev_value = None
    stable = 0
    for k in range(max_doublings):
        val, err = w.adaptive(a, b, tol * max(abs(total), 1.0) * 1e-2)
        total += val
        quad_err += err
        a, b = b, 2.0 * b
        tail_val, tail_resid = w.tail(a)
        value = pref * (total + tail_val).real
        est = pref * (quad_err + tail_resid + 1e-15 * w.l1)
        if tau_max is not None and a >= tau_max:
            return InversionResult(complex(value), float(est))
        scale = max(abs(value), est, 1e-300)
        if prev_value is not None and abs(value - prev_value) <= tol * scale \
                and tail_resid * pref <= tol * scale:
            stable += 1
            if stable >= 2:
                return InversionResult(complex(value), float(est))
        else:
            stable = 0
        prev_value = value
    raise ConvergenceError(
        f"Bromwich inversion stalled after {max_doublings} doublings at t={t}",
        estimate=float(pref * (quad_err + tail_resid)))


# -- real-axis spectral densities ---------------------------------------------

_WATSON_Y = -300.0


def _order_average_at(weight: Weight, y: np.ndarray) -> np.ndarray:
    """A(y) = int_0^1 e^{alpha(y + i pi)} mu(alpha) dalpha = C + iS.

    This is p*K(p) on the upper edge of the cut, p = e^y * e^{i pi}.  For
    y below the Watson threshold the Gauss rule can no longer resolve the
    boundary layer at alpha ~ 1/|y| and the asymptotic expansion
    A ~ sum_j c_j Gamma(nu+j+1) w^{-(nu+j+1)}, w = |y| - i pi, takes over.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty(y.shape, dtype=complex)
    near = y >= _WATSON_Y
    if np.any(near):
        yy = y[near]

        def f(alpha):
            return np.exp(np.outer(yy, alpha) + (1j * np.pi * alpha)[None, :])

        out[near] = order_integral(weight, f)
    if np.any(~near):
        w = -y[~near] - 1j * np.pi
        nu, coeffs = weight.small_alpha_expansion()
        acc = np.zeros(w.shape, dtype=complex)
        for j, cj in enumerate(coeffs):
            if cj:
                acc += cj * math.gamma(nu + j + 1.0) * w ** (-(nu + j + 1.0))
        out[~near] = acc
    return out


def log_axis_density(weight: Weight, y, *, mode: str = "kappa",
                     lam: float = None) -> np.ndarray:
    """Mass-in-log density rho_hat(y) = rho(e^y) e^y (y = log r).

    target(t) = int rho_hat(y) exp(-t e^y) dy; working in y keeps the
    exponentially-small-r region (where r itself underflows but relaxation
    densities still carry 1/y^2 mass) representable.
    """
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    A = _order_average_at(weight, y_arr)
    C, S = A.real, A.imag
    if mode == "kappa":
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = np.exp(y_arr) / math.pi * S / (C * C + S * S)
    elif mode == "relaxation":
        if lam is None or lam >= 0:
            raise DomainError("relaxation density requires lam < 0")
        dens = (-lam / math.pi) * S / ((C - lam) ** 2 + S * S)
    else:
        raise DomainError(f"unknown density mode {mode!r}")
    dens = np.where(S == 0.0, 0.0, dens)
    return dens if np.ndim(y) else float(dens[0])


def real_axis_limit_density(weight: Weight, r, *, mode: str = "kappa",
                            lam: float = None):
    """Nonnegative density rho(r) with target(t) = int_0^inf e^{-tr} rho(r) dr.

    mode "kappa": the kernel kappa;
    mode "relaxation": the relaxation function for rate lam < 0.
    """
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr <= 0):
        raise DomainError("density argument r must be positive")
    y = np.log(r_arr)
    dens = log_axis_density(weight, y, mode=mode, lam=lam) / r_arr
    if np.isscalar(r) or np.ndim(r) == 0:
        return float(dens[0])
    return dens


@dataclass(eq=False)
class SpectralRule:
    """Fixed quadrature in y = log r for t in [t_min, t_max] Laplace averages.

    Node layout: unit panels for y in [-1, y_max] cover the bulk; the
    substitution y = -e^v reaches the exponentially small r where relaxation
    densities keep 1/y^2 mass, with panels refined at small v where the
    e^{-t e^y} boundary layer sits for large t.  Node weights are in the
    y measure, so densities are the mass-in-log kind
    (:func:`log_axis_density`).
    """

    t_min: float
    t_max: float
    y_f: np.ndarray = field(repr=False, default=None)
    w_f: np.ndarray = field(repr=False, default=None)
    y_c: np.ndarray = field(repr=False, default=None)
    w_c: np.ndarray = field(repr=False, default=None)
    r_f: np.ndarray = field(repr=False, default=None)   # exp(y), may underflow
    r_c: np.ndarray = field(repr=False, default=None)

    @classmethod
    def build(cls, t_min: float = 1e-7, t_max: float = 1e7,
              nodes_per_panel: int = 16) -> "SpectralRule":
        y_max = math.log(45.0 / t_min) + 1.0
        v_hi = max(math.log(max(math.log(max(t_max, 3.0)), 3.0)) + 1.5, 4.0)

        def rule(nper):
            y_edges = np.arange(-1.0, y_max + 1.0, 1.0)
            y1, w1 = _panel_nodes(y_edges, nper)
            v_edges = np.concatenate([
                np.arange(0.0, v_hi, 0.125), [v_hi],
                np.arange(math.ceil(v_hi) + 1.0, 51.0, 1.0),
            ])
            v, wv = _panel_nodes(np.unique(v_edges), nper)
            y2 = -np.exp(v)
            w2 = np.exp(v) * wv
            y = np.concatenate([y2[::-1], y1])
            w = np.concatenate([w2[::-1], w1])
            return y, w

        y_f, w_f = rule(nodes_per_panel)
        y_c, w_c = rule(max(4, nodes_per_panel // 2))
        with np.errstate(under="ignore"):
            r_f = np.exp(y_f)
            r_c = np.exp(y_c)
        return cls(t_min=t_min, t_max=t_max, y_f=y_f, w_f=w_f, y_c=y_c, w_c=w_c,
                   r_f=r_f, r_c=r_c)

    def laplace(self, dens_f: np.ndarray, dens_c: np.ndarray, t):
        """int rho_hat(y) exp(-t e^y) dy for scalar or array t, with estimates."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(ts < 0):
            raise DomainError("Laplace average needs t >= 0")
        Ef = np.exp(-np.outer(ts, self.r_f))
        Ec = np.exp(-np.outer(ts, self.r_c))
        vf = Ef @ (self.w_f * dens_f)
        vc = Ec @ (self.w_c * dens_c)
        l1 = Ef @ np.abs(self.w_f * dens_f)
        err = np.abs(vf - vc) + 1e-15 * l1
        if np.isscalar(t) or np.ndim(t) == 0:
            return float(vf[0]), float(err[0])
        return vf, err

    def weighted(self, dens_f: np.ndarray, dens_c: np.ndarray,
                 g: Callable[[np.ndarray], np.ndarray]):
        """int g(r) rho_hat(y) dy for a caller-supplied factor g(r)."""
        vf = np.sum(g(self.r_f) * self.w_f * dens_f)
        vc = np.sum(g(self.r_c) * self.w_c * dens_c)
        l1 = np.sum(np.abs(g(self.r_f) * self.w_f * dens_f))
        return float(vf), float(abs(vf - vc) + 1e-15 * l1)
