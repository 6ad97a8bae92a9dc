"""Fundamental solution Z, potential kernel E, subordination density G.

Laplace-domain formulas (principal square root of p*K(p) throughout):

- n = 1:  Z~(p, x) = (1/2) K(p) / sqrt(pK) * exp(-|x| sqrt(pK))
- n = 2:  Z~(p, x) = (1/(2 pi)) K(p) * K_0(|x| sqrt(pK))
- n = 3:  Z~(p, x) = K(p) exp(-|x| sqrt(pK)) / (4 pi |x|)
- E~ = Z~ / K(p)  (the volume-potential kernel)
- G(u, .) inverts g(u, p) = K(p) exp(-u p K(p))

Z and E are inverted on the standard deformed contour.  G gets a dedicated
contour flavor: a small ray angle tames the near-exponential growth of
|exp(-u pK)| along the rays, and narrow log-radial panels resolve its
oscillation; the error estimates stay honest either way because every
inversion carries a node-doubling difference plus an L1 roundoff floor.

Profiles (ZProfile, GProfile) evaluate a whole radial or u grid against one
shared contour evaluation; all spatial integrals (normalization, moments,
the Cauchy solvers) run over profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import PchipInterpolator

from .exceptions import BranchCutError, DomainError, PositivityError
from .kernels import KernelSet
from .special import mcdonald_k_many
from .transform import Contour, contour_for, invert_bromwich

__all__ = [
    "GreenEval", "z_laplace", "e_laplace", "z_eval", "e_eval", "g_density",
    "z_subordinate", "msd", "msd_direct", "z_at_origin", "ZProfile", "GProfile",
]

_SURFACE = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


@dataclass(frozen=True)
class GreenEval:
    """Point evaluation with error estimate and the path that produced it."""

    value: float
    err: float
    path: str

    def __post_init__(self):
        if not np.isfinite(self.value) or not np.isfinite(self.err):
            raise PositivityError("green evaluation produced a non-finite value")
        if self.value < -(self.err + 1e-300):
            raise PositivityError(
                f"nonnegative quantity evaluated to {self.value} "
                f"with error bar {self.err}")


def _check_dim(n: int) -> None:
    if n not in (1, 2, 3):
        raise DomainError(f"dimension n={n} outside 1..3")


def _absx(x) -> float:
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    return r


def _sqrt_pk(ks: KernelSet, p: np.ndarray):
    K = ks.K_eval_many(p)
    pK = np.atleast_1d(np.asarray(p, dtype=complex)) * K
    s = np.sqrt(pK)
    if np.any(s.real <= 0):
        raise BranchCutError(
            "Re sqrt(p K(p)) <= 0 on requested points; outside the contour geometry")
    return K, pK, s


def _kernel_rows(ks: KernelSet, n: int, p: np.ndarray, absx, *,
                 include_K: bool = True) -> np.ndarray:
    """Z~ (or E~) at each (x row, p column)."""
    K, pK, s = _sqrt_pk(ks, p)
    X = np.atleast_1d(np.asarray(absx, dtype=float))[:, None]
    if np.any(X <= 0) and n != 1:
        raise DomainError("x = 0 requires the dedicated origin routine")
    if n == 1:
        pref = 0.5 * (K / s if include_K else 1.0 / s)
        return pref[None, :] * np.exp(-X * s[None, :])
    if n == 3:
        pref = (K if include_K else np.ones_like(K))
        return pref[None, :] * np.exp(-X * s[None, :]) / (4.0 * math.pi * X)
    kv = mcdonald_k_many(0.0, (X * s[None, :]).ravel()).reshape(X.shape[0], -1)
    pref = (K if include_K else np.ones_like(K)) / (2.0 * math.pi)
    return pref[None, :] * kv


def z_laplace(ks: KernelSet, n: int, p: complex, x) -> complex:
    """Z~(p, x), the Laplace transform of the fundamental solution."""
    _check_dim(n)
    r = _absx(x)
    if r == 0:
        raise DomainError("z_laplace requires x != 0")
    row = _kernel_rows(ks, n, np.array([complex(p)]), r)
    return complex(row[0, 0])


def e_laplace(ks: KernelSet, n: int, p: complex, x) -> complex:
    """E~(p, x) = Z~(p, x) / K(p), the volume-potential kernel transform."""
    _check_dim(n)
    r = _absx(x)
    if r == 0:
        raise DomainError("e_laplace requires x != 0")
    row = _kernel_rows(ks, n, np.array([complex(p)]), r, include_K=False)
    return complex(row[0, 0])


def _invert_rows(Mf: np.ndarray, Mc: np.ndarray, contour: Contour, t: float):
    """Invert many transforms sharing one contour; returns (values, errs)."""
    ef = contour.w_f * np.exp(contour.p_f * t)
    ec = contour.w_c * np.exp(contour.p_c * t)
    vf = (Mf @ ef) / (2j * math.pi)
    vc = (Mc @ ec) / (2j * math.pi)
    l1 = (np.abs(Mf) @ np.abs(ef)) / (2.0 * math.pi)
    decay = t * abs(math.cos(contour.omega * math.pi))
    edge = np.maximum(np.abs(Mf[:, 0]), np.abs(Mf[:, -1]))
    tail = edge * math.exp(-decay * contour.r_max) / (math.pi * decay)
    err = np.abs(vf - vc) + 1e-15 * l1 + tail + np.abs(vf.imag)
    return vf.real, err


def _green_contour(ks: KernelSet, t: float) -> Contour:
    return contour_for(t)


def z_eval(ks: KernelSet, n: int, t: float, x, *, contour: Contour = None,
           tol: float = 1e-8) -> GreenEval:
    """Z(t, x) by contour inversion; value >= -err or PositivityError."""
    _check_dim(n)
    if t <= 0:
        raise DomainError("z_eval requires t > 0")
    r = _absx(x)
    if r == 0:
        raise DomainError("z_eval requires x != 0; use z_at_origin for n = 1")
    c = contour or _green_contour(ks, t)
    Mf = _kernel_rows(ks, n, c.p_f, r)
    Mc = _kernel_rows(ks, n, c.p_c, r)
    vals, errs = _invert_rows(Mf, Mc, c, t)
    path = "closed-form-n1" if n == 1 else "contour"
    return GreenEval(float(vals[0]), float(errs[0]), path)


def e_eval(ks: KernelSet, n: int, t: float, x, *, contour: Contour = None,
           tol: float = 1e-8) -> GreenEval:
    """E(t, x) >= 0, the heat-potential kernel."""
    _check_dim(n)
    if t <= 0:
        raise DomainError("e_eval requires t > 0")
    r = _absx(x)
    if r == 0:
        raise DomainError("e_eval requires x != 0")
    c = contour or _green_contour(ks, t)
    Mf = _kernel_rows(ks, n, c.p_f, r, include_K=False)
    Mc = _kernel_rows(ks, n, c.p_c, r, include_K=False)
    vals, errs = _invert_rows(Mf, Mc, c, t)
    path = "closed-form-n1" if n == 1 else "contour"
    return GreenEval(float(vals[0]), float(errs[0]), path)


# -- radial profiles -----------------------------------------------------------


class ZProfile:
    """Z(t, .) (or E(t, .)) sampled on a radial grid with one contour pass.

    Supplies interpolation, the full-space integral, the second moment, and
    a fitted exponential decay rate; this is what the normalization checks
    and the Cauchy solvers integrate against.
    """

    def __init__(self, ks: KernelSet, n: int, t: float, *,
                 include_K: bool = True, points: int = 420,
                 x_max: float = None, contour: Contour = None):
        _check_dim(n)
        if t <= 0:
            raise DomainError("profile needs t > 0")
        self.ks, self.n, self.t = ks, n, t
        self.include_K = include_K
        c = contour or _green_contour(ks, t)
        self._contour = c
        if x_max is None:
            x_max = self._find_support(c)
        self.x_max = x_max
        inner = np.geomspace(1e-4, x_max, points)
        self.x = np.concatenate([[0.0], inner]) if n == 1 else inner
        Mf = _kernel_rows(ks, n, c.p_f, np.maximum(self.x, 1e-300),
                          include_K=include_K)
        Mc = _kernel_rows(ks, n, c.p_c, np.maximum(self.x, 1e-300),
                          include_K=include_K)
        self.values, self.errs = _invert_rows(Mf, Mc, c, t)
        floor = max(self.values.max(), 1e-300) * 1e-250
        self._loginterp = PchipInterpolator(
            self.x, np.log(np.maximum(self.values, floor)))
        self.decay_rate = self._fit_decay()

    def _find_support(self, c: Contour) -> float:
        xs = np.array([0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
        while True:
            Mf = _kernel_rows(self.ks, self.n, c.p_f, xs, include_K=self.include_K)
            Mc = _kernel_rows(self.ks, self.n, c.p_c, xs, include_K=self.include_K)
            vals, _ = _invert_rows(Mf, Mc, c, self.t)
            top = np.max(np.abs(vals))
            small = np.abs(vals) < max(top, 1e-300) * 1e-12
            if np.any(small):
                return float(xs[np.argmax(small)])
            if xs[-1] > 400.0:
                return float(xs[-1])
            xs = xs * 2.0

    def _fit_decay(self) -> float:
        v = self.values
        good = v > max(v.max(), 1e-300) * 1e-10
        xs = self.x[good][-60:]
        ys = np.log(v[good][-60:])
        if len(xs) < 8:
            return 1.0
        slope = np.polyfit(xs, ys, 1)[0]
        return float(max(-slope, 1e-3))

    def __call__(self, absx):
        r = np.abs(np.asarray(absx, dtype=float))
        out = np.exp(self._loginterp(np.minimum(r, self.x_max)))
        beyond = r > self.x_max
        if np.any(beyond):
            tail = self.values[-1] * np.exp(-self.decay_rate * (r - self.x_max))
            out = np.where(beyond, tail, out)
        if self.n == 1:
            return out if np.ndim(absx) else float(out)
        lo = r < self.x[0]
        if np.any(lo):
            # inside the innermost sample: freeze at the first sampled value
            out = np.where(lo, self.values[0], out)
        return out if np.ndim(absx) else float(out)

    def _radial_integral(self, power: int):
        xs, vs = self.x, self.values
        w = xs ** power if power else np.ones_like(xs)
        if self.n > 1 and xs[0] > 0:
            head = vs[0] * xs[0] ** (power + 1) / max(power + 1, 1)
        else:
            head = 0.0
        core = simpson(vs * w, x=xs)
        disc = abs(core - simpson((vs * w)[::2], x=xs[::2]))
        a = self.decay_rate
        # int_xmax^inf x^power e^{-a(x - xmax)} dx, two-term expansion
        tail = vs[-1] * (self.x_max ** power / a) * (1.0 + power / (a * self.x_max))
        err = simpson(self.errs * w, x=xs) + abs(tail) * 0.5 + abs(head) * 0.5 + disc
        return head + core + tail, err

    def integral(self):
        """int over R^n of the profile, with error estimate."""
        val, err = self._radial_integral(self.n - 1)
        return _SURFACE[self.n] * val, _SURFACE[self.n] * err

    def second_moment(self):
        """int |x|^2 * profile dx over R^n."""
        val, err = self._radial_integral(self.n + 1)
        return _SURFACE[self.n] * val, _SURFACE[self.n] * err


class EProfile(ZProfile):
    def __init__(self, ks, n, t, **kw):
        super().__init__(ks, n, t, include_K=False, **kw)


# -- subordination density ----------------------------------------------------


def _g_contour(ks: KernelSet, t: float) -> Contour:
    return Contour.build(max(1.0, 2.0 / t), 0.55, t=t, nodes_per_panel=20,
                         arc_panels=12, ray_panel_width=0.125)


def _g_rows(ks: KernelSet, p: np.ndarray, us: np.ndarray) -> np.ndarray:
    K = ks.K_eval_many(p)
    pK = np.atleast_1d(np.asarray(p, dtype=complex)) * K
    expo = -np.multiply.outer(us, pK)
    expo = np.clip(expo.real, None, 700.0) + 1j * expo.imag
    return K[None, :] * np.exp(expo)


class GProfile:
    """G(., t) on a u grid sharing one contour evaluation.

    The grid extends until G has decayed ten orders below its peak (the
    decay beyond the bulk is super-exponential), which is all that the
    normalization and subordination integrals can see at their tolerances.
    """

    def __init__(self, ks: KernelSet, t: float, *, points: int = 260,
                 u_min: float = None, u_max: float = None):
        if t <= 0:
            raise DomainError("GProfile needs t > 0")
        self.ks, self.t = ks, t
        c = _g_contour(ks, t)
        self._contour = c
        if u_min is None:
            u_min = 1e-4 * max(1.0, t)
        if u_max is None:
            u_max = self._find_support(c, u_min)
        self.u_min, self.u_max = u_min, u_max
        self.u = np.geomspace(u_min, u_max, points)
        Mf = _g_rows(ks, c.p_f, self.u)
        Mc = _g_rows(ks, c.p_c, self.u)
        self.values, self.errs = _invert_rows(Mf, Mc, c, t)

    def _find_support(self, c: Contour, u_min: float) -> float:
        u_hi = max(4.0, 2.0 * self.t)
        while u_hi < 600.0:
            us = np.array([u_min, 0.5 * u_hi, u_hi])
            vals, errs = _invert_rows(_g_rows(self.ks, c.p_f, us),
                                      _g_rows(self.ks, c.p_c, us), c, self.t)
            top = max(vals.max(), 1e-300)
            if vals[-1] < top * 1e-10 or errs[-1] > max(vals[-1], 1e-300):
                return u_hi
            u_hi *= 1.6
        return u_hi

    def __call__(self, u):
        return np.interp(np.asarray(u, dtype=float), self.u, self.values,
                         left=self.values[0], right=0.0)

    def normalization(self):
        """int_0^inf G(u, t) du; equals 1 exactly."""
        core = simpson(self.values, x=self.u)
        disc = abs(core - simpson(self.values[::2], x=self.u[::2]))
        head = self.values[0] * self.u_min
        tail = max(self.values[-1], 0.0) * self.u_max
        err = simpson(self.errs, x=self.u) + head + abs(tail) + disc
        return core + head, err

    def subordinate(self, n: int, absx: float):
        """int G(u, t) (4 pi u)^{-n/2} e^{-|x|^2/(4u)} du."""
        _check_dim(n)
        r = float(absx)
        if r <= 0:
            raise DomainError("subordination point needs x != 0")
        gauss = (4.0 * math.pi * self.u) ** (-n / 2.0) * np.exp(
            -r * r / (4.0 * self.u))
        core = simpson(self.values * gauss, x=self.u)
        disc = abs(core - simpson((self.values * gauss)[::2], x=self.u[::2]))
        err = simpson(self.errs * gauss, x=self.u) + disc
        # u below u_min: the gaussian factor is double-exponentially small
        head = self.values[0] * float((4 * math.pi * self.u_min) ** (-n / 2.0)
                                      * math.exp(-r * r / (4 * self.u_min))) * self.u_min
        tail = max(self.values[-1], 0.0) * float(
            (4 * math.pi * self.u_max) ** (-n / 2.0)) * self.u_max
        return core, err + head + tail


def g_density(ks: KernelSet, u: float, t: float) -> float:
    """Subordination density G(u, t) >= 0 (up to the reported estimate)."""
    return g_density_eval(ks, u, t).value


def g_density_eval(ks: KernelSet, u: float, t: float, *,
                   contour: Contour = None) -> GreenEval:
    if u <= 0 or t <= 0:
        raise DomainError("g_density needs u > 0 and t > 0")
    c = contour or _g_contour(ks, t)
    us = np.array([float(u)])
    vals, errs = _invert_rows(_g_rows(ks, c.p_f, us), _g_rows(ks, c.p_c, us), c, t)
    return GreenEval(float(vals[0]), float(errs[0]), "contour")


def z_subordinate(ks: KernelSet, n: int, t: float, x, *,
                  profile: GProfile = None) -> GreenEval:
    """Z through the subordination mixture of heat kernels; the independent
    route against z_eval."""
    _check_dim(n)
    r = _absx(x)
    if r == 0:
        raise DomainError("z_subordinate requires x != 0")
    prof = profile if profile is not None and profile.t == t else GProfile(ks, t)
    val, err = prof.subordinate(n, r)
    return GreenEval(float(val), float(err), "subordination")


# -- moments and the origin ----------------------------------------------------


def msd(ks: KernelSet, n: int, t: float) -> float:
    """Mean square displacement m(t) = 2 n int_0^t kappa.

    The direct-moment route (:func:`msd_direct`) settles the normalization:
    the transform algebra gives m~(p) = 2n / (p^2 K(p)) with no extra
    angular factor, and the acceptance suite pins the two routes together.
    """
    _check_dim(n)
    if t <= 0:
        raise DomainError("msd needs t > 0")
    return 2.0 * n * float(ks.kappa_integral(t))


def msd_direct(ks: KernelSet, n: int, t: float):
    """int |x|^2 Z(t, x) dx by radial quadrature of a Z profile."""
    prof = ZProfile(ks, n, t)
    return prof.second_moment()


def z_at_origin(ks: KernelSet, t: float, *, tol: float = 1e-7) -> float:
    """Z(t, 0) for n = 1, via the Bromwich route on (1/2) sqrt(K(p)/p).

    The x != 0 contour representation loses its McDonald decay at the
    origin, so the vertical line with Filon treatment is used instead.
    """
    if t <= 0:
        raise DomainError("z_at_origin needs t > 0")

    def F(p):
        return 0.5 * np.sqrt(ks.K_eval(p) / p)

    gamma = max(1.0, 3.0 / t)
    res = invert_bromwich(F, gamma, t, tol=tol)
    return float(res.value.real)
