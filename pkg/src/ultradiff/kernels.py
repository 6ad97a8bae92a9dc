"""The kernel triple k(s), K(p), kappa(t) attached to one weight.

k is the time-convolution kernel of the distributed-order derivative,
K its Laplace transform, and kappa the Sonine partner with transform
1/(p K(p)); convolving k with kappa gives identically 1, which is the
library's strongest internal consistency check.

kappa is always evaluated along two independent routes, a nonnegative
real-axis spectral density integrated against e^{-tr} (primary) and
contour inversion of 1/(p K(p)) (secondary).  Disagreement beyond the
combined error estimates raises; it is never averaged away.
"""

from __future__ import annotations

import math
import threading
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq
from scipy.special import rgamma

from .exceptions import (BranchCutError, DomainError, PathDisagreementError)
from .transform import (Contour, ContourEvaluation, SpectralRule, contour_for,
                        log_axis_density)
from .weights import Weight, order_integral

__all__ = ["KernelSet", "k_eval", "K_eval", "pK_eval", "kappa_eval", "k_prime_eval"]

_S_FLOOR = 1e-300


def _check_offcut(p: np.ndarray) -> None:
    if np.any(p == 0):
        raise DomainError("K(p) undefined at p = 0")
    if np.any((p.real < 0) & (p.imag == 0)):
        raise BranchCutError("K(p) evaluated on the branch cut R_-")


class KernelSet:
    """Coherent (k, K, kappa) triple for one :class:`Weight`.

    Immutable after construction apart from internal caches (spectral
    density values, per-decade contour evaluations, and the optional
    monotone kappa table).  Caches are built under a lock and published
    atomically, so concurrent readers never observe partial state.
    """

    def __init__(self, weight: Weight, *, rtol: float = 1e-8,
                 t_range: tuple[float, float] = (1e-7, 1e7),
                 contour: Contour = None):
        self.weight = weight
        self.rtol = float(rtol)
        self.t_range = (float(t_range[0]), float(t_range[1]))
        self.contour = contour  # optional user-pinned default for kappa
        self._lock = threading.Lock()
        self._rule: SpectralRule = None
        self._dens: tuple[np.ndarray, np.ndarray] = None
        self._contour_evals: dict[int, ContourEvaluation] = {}
        self._kappa_table = None

    # -- direct kernel evaluations ----------------------------------------

    def k_eval_many(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s <= 0):
            raise DomainError("k(s) requires s > 0")
        if np.any(s < _S_FLOOR):
            raise DomainError("k(s): s below 1e-300 overflows the s^-alpha factor")
        logs = np.log(s)

        def f(alpha):
            return np.exp(np.outer(-logs, alpha)) * rgamma(1.0 - alpha)[None, :]

        return order_integral(self.weight, f, rtol=1e-12).real

    def k_eval(self, s: float) -> float:
        """k(s) = int_0^1 s^-alpha / Gamma(1-alpha) mu(alpha) dalpha."""
        return float(self.k_eval_many(s)[0])

    def k_prime_eval_many(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s <= 0) or np.any(s < _S_FLOOR):
            raise DomainError("k'(s) requires 1e-300 < s")
        logs = np.log(s)

        def f(alpha):
            return (-alpha)[None, :] * np.exp(np.outer(-logs, alpha + 1.0)) \
                * rgamma(1.0 - alpha)[None, :]

        return order_integral(self.weight, f, rtol=1e-12).real

    def k_prime_eval(self, s: float) -> float:
        """k'(s), strictly negative for s > 0."""
        return float(self.k_prime_eval_many(s)[0])

    def K_eval_many(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=complex))
        _check_offcut(p)
        logp = np.log(p)

        def f(alpha):
            return np.exp(np.outer(logp, alpha - 1.0))

        return order_integral(self.weight, f, rtol=1e-12)

    def K_eval(self, p: complex) -> complex:
        """K(p) = int_0^1 p^(alpha-1) mu(alpha) dalpha, principal branch."""
        return complex(self.K_eval_many(p)[0])

    def pK_eval_many(self, p) -> np.ndarray:
        p = np.atleast_1d(np.asarray(p, dtype=complex))
        _check_offcut(p)
        logp = np.log(p)

        def f(alpha):
            return np.exp(np.outer(logp, alpha))

        return order_integral(self.weight, f, rtol=1e-12)

    def pK_eval(self, p: complex) -> complex:
        """p*K(p) = int_0^1 p^alpha mu(alpha) dalpha; argument of every sqrt."""
        return complex(self.pK_eval_many(p)[0])

    # -- spectral machinery -------------------------------------------------

    def _ensure_rule(self):
        if self._dens is not None:
            return
        with self._lock:
            if self._dens is not None:
                return
            rule = SpectralRule.build(self.t_range[0], self.t_range[1])
            dens_f = log_axis_density(self.weight, rule.y_f, mode="kappa")
            dens_c = log_axis_density(self.weight, rule.y_c, mode="kappa")
            self._rule = rule
            self._dens = (dens_f, dens_c)

    def _kappa_contour(self, t: float) -> ContourEvaluation:
        """Per-octave cached contour evaluation of 1/(pK(p))."""
        bucket = int(math.floor(math.log2(t)))
        ev = self._contour_evals.get(bucket)
        if ev is None:
            with self._lock:
                ev = self._contour_evals.get(bucket)
                if ev is None:
                    t_lo = 2.0 ** bucket
                    c = self.contour or contour_for(t_lo)
                    ev = ContourEvaluation(c, lambda p: 1.0 / self.pK_eval_many(p))
                    self._contour_evals[bucket] = ev
        return ev

    def kappa_spectral(self, t):
        """Primary route: int_0^inf e^{-tr} rho(r) dr with its estimate."""
        self._ensure_rule()
        return self._rule.laplace(self._dens[0], self._dens[1], t)

    def kappa_contour(self, t: float):
        res = self._kappa_contour(t).at(t, tol=self.rtol)
        return res.value.real, res.err

    def kappa_eval(self, t: float, *, check: bool = True) -> float:
        """kappa(t) >= 0 via the spectral density, contour cross-checked.

        Raises :class:`PathDisagreementError` when the two routes differ by
        more than ten times the combined error estimates.
        """
        t = float(t)
        if t <= 0:
            raise DomainError("kappa(t) requires t > 0")
        if not self.t_range[0] <= t <= self.t_range[1]:
            raise DomainError(f"t={t} outside this KernelSet's range {self.t_range}")
        val, err = self.kappa_spectral(t)
        if check:
            val2, err2 = self.kappa_contour(t)
            combined = err + err2 + 1e-13 * max(abs(val), abs(val2))
            if abs(val - val2) > 10.0 * combined:
                raise PathDisagreementError(
                    f"kappa paths disagree at t={t}: {val} vs {val2}",
                    val, val2, combined)
        return float(val)

    def kappa_eval_many(self, ts, *, check: bool = True) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        vals, errs = self.kappa_spectral(ts)
        if check:
            # cross-check one point per octave rather than every grid node
            buckets = np.unique(np.floor(np.log2(ts)).astype(int))
            for b in buckets:
                sel = int(np.argmax(np.floor(np.log2(ts)).astype(int) == b))
                self.kappa_eval(float(ts[sel]))
        return vals

    def kappa_integral(self, t, *, lower: float = 0.0):
        """int_lower^t kappa(s) ds through the spectral representation."""
        return self.kappa_moment0(lower, t)

    # exact kappa panel moments: int_a^b sigma^j kappa(sigma) dsigma, j = 0, 1, 2
    def _kappa_moment(self, a, b, j: int):
        self._ensure_rule()
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        rule, (df, _) = self._rule, self._dens
        r = rule.r_f
        A = a[..., None] if a.ndim else a
        B = b[..., None] if b.ndim else b
        ar = A * r
        br = B * r
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            if j == 0:
                g = -np.exp(-ar) * np.expm1(-(br - ar)) / r
                g = np.where(r < 1e-290, (B - A) * np.ones_like(ar), g)
            elif j == 1:
                direct = ((1.0 + ar) * np.exp(-ar) - (1.0 + br) * np.exp(-br)) / r**2
                series = ((B**2 - A**2) / 2.0 - (B**3 - A**3) * r / 3.0
                          + (B**4 - A**4) * r**2 / 8.0 - (B**5 - A**5) * r**3 / 30.0)
                g = np.where(br < 1e-3, series, direct)
            elif j == 2:
                g2a = (ar * ar + 2.0 * ar + 2.0) * np.exp(-ar)
                g2b = (br * br + 2.0 * br + 2.0) * np.exp(-br)
                direct = (g2a - g2b) / r**3
                series = ((B**3 - A**3) / 3.0 - (B**4 - A**4) * r / 4.0
                          + (B**5 - A**5) * r**2 / 10.0 - (B**6 - A**6) * r**3 / 36.0)
                g = np.where(br < 1e-3, series, direct)
            else:
                raise DomainError("kappa moments implemented for j <= 2")
        vf = g @ (rule.w_f * df)
        return vf if np.ndim(vf) else float(vf)

    def kappa_moment0(self, a, b):
        return self._kappa_moment(a, b, 0)

    def kappa_moment1(self, a, b):
        return self._kappa_moment(a, b, 1)

    def kappa_moment2(self, a, b):
        return self._kappa_moment(a, b, 2)

    # exact k panel moments: int_a^b sigma^j k(sigma) dsigma, j = 0, 1, 2
    def k_moments(self, a, b, upto: int = 1):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if np.any(a < 0) or np.any(b <= a):
            raise DomainError("k moments need 0 <= a < b")

        def power_diff(alpha, j):
            # b^(j-alpha) - a^(j-alpha) = a^(j-alpha) expm1((j-alpha) log(b/a)),
            # stable when a is close to b; plain power for a = 0
            e = j - alpha[None, :]
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                la = np.log(np.maximum(a, 1e-320))[:, None]
                lb = np.log(b)[:, None]
                out = np.exp(e * lb)
                pos = a[:, None] > 0
                ratio = np.where(pos, np.exp(e * la), 0.0)
                return np.where(pos, ratio * np.expm1(e * (lb - la)), out)

        results = []

        def f1(alpha):
            return power_diff(alpha, 1) * rgamma(2.0 - alpha)[None, :]

        results.append(order_integral(self.weight, f1, rtol=1e-12).real)
        if upto >= 2:
            def f2(alpha):
                return (1.0 - alpha)[None, :] * power_diff(alpha, 2) \
                    * rgamma(3.0 - alpha)[None, :]
            results.append(order_integral(self.weight, f2, rtol=1e-12).real)
        if upto >= 3:
            def f3(alpha):
                return ((1.0 - alpha) * (2.0 - alpha))[None, :] * power_diff(alpha, 3) \
                    * rgamma(4.0 - alpha)[None, :]
            results.append(order_integral(self.weight, f3, rtol=1e-12).real)
        return results[0] if upto == 1 else results

    # -- roots and caches ---------------------------------------------------

    def positive_real_root(self, lam: float) -> float:
        """The unique p > 0 with p*K(p) = lam, for lam > 0."""
        if lam <= 0:
            raise DomainError("p*K(p) = lam has a positive root only for lam > 0")

        def g(x):
            return float(self.pK_eval_many(np.array([math.exp(x)]))[0].real) - lam

        lo, hi = -60.0, 4.0
        while g(hi) < 0 and hi < 700.0:
            hi += 4.0
        while g(lo) > 0 and lo > -700.0:
            lo -= 40.0
        return math.exp(brentq(g, lo, hi, xtol=1e-13))

    def kappa_cached(self, t):
        """kappa through the monotone interpolation table (accelerator)."""
        table = self._kappa_table
        if table is None:
            with self._lock:
                table = self._kappa_table
                if table is None:
                    lo = max(self.t_range[0], 1e-7)
                    hi = min(self.t_range[1], 1e4)
                    grid = np.exp(np.linspace(math.log(lo), math.log(hi), 400))
                    vals, _ = self.kappa_spectral(grid)
                    table = PchipInterpolator(np.log(grid), vals)
                    self._kappa_table = table
        return table(np.log(np.asarray(t, dtype=float)))

    def sonine_residual(self, t: float, n_panels: int = 256) -> float:
        """(k * kappa)(t) - 1 by graded product integration.

        The convolution is split at t/2.  On [0, t/2] (k singular at 0,
        kappa smooth) exact k moments integrate a quadratic interpolant of
        kappa; on the mirrored half (kappa log-singular at 0, k smooth)
        exact kappa moments integrate a quadratic interpolant of k.  Panels
        are graded with exponent 3 toward the singular endpoints.
        """
        m = n_panels // 2
        frac = (np.arange(m + 1) / m) ** 3
        edges = 0.5 * t * frac
        a, b = edges[:-1], edges[1:]
        mid = 0.5 * (a + b)
        h = 0.5 * (b - a)
        self._ensure_rule()

        total = 0.0

        # left half: sigma in [0, t/2], integrand k(sigma) * kappa(t - sigma)
        kap = {}
        for tag, sig in (("a", a), ("m", mid), ("b", b)):
            kap[tag], _ = self._rule.laplace(self._dens[0], self._dens[1], t - sig)
        q0 = kap["m"]
        q1 = (kap["b"] - kap["a"]) / (2.0 * h)
        q2 = (kap["b"] - 2.0 * kap["m"] + kap["a"]) / (2.0 * h * h)
        near = a < (b - a) * 4.0
        far = ~near
        if np.any(near):
            k1, k2, k3 = self.k_moments(a[near], b[near], upto=3)
            mm = mid[near]
            d0 = q0[near] - q1[near] * mm + q2[near] * mm * mm
            d1 = q1[near] - 2.0 * q2[near] * mm
            d2 = q2[near]
            total += float(np.sum(d0 * k1 + d1 * k2 + d2 * k3))
        if np.any(far):
            from .weights import _gauss
            x, wx = _gauss(12)
            sig = mid[far][:, None] + h[far][:, None] * x[None, :]
            wq = h[far][:, None] * wx[None, :]
            kv = self.k_eval_many(sig.ravel()).reshape(sig.shape)
            ds = sig - mid[far][:, None]
            qv = q0[far][:, None] + q1[far][:, None] * ds + q2[far][:, None] * ds * ds
            total += float(np.sum(kv * qv * wq))

        # right half mirrored: tau in [0, t/2], integrand k(t - tau) * kappa(tau)
        kv = {}
        for tag, tau in (("a", a), ("m", mid), ("b", b)):
            arg = np.maximum(t - tau, 1e-300)
            kv[tag] = self.k_eval_many(arg)
        q0 = kv["m"]
        q1 = (kv["b"] - kv["a"]) / (2.0 * h)
        q2 = (kv["b"] - 2.0 * kv["m"] + kv["a"]) / (2.0 * h * h)
        m0 = self._kappa_moment(a, b, 0)
        m1c = self._kappa_moment(a, b, 1) - mid * m0
        m2c = self._kappa_moment(a, b, 2) - 2.0 * mid * self._kappa_moment(a, b, 1) \
            + mid * mid * m0
        total += float(np.sum(q0 * m0 + q1 * m1c + q2 * m2c))
        return total - 1.0


# -- module-level conveniences matching the operation names -------------------


def k_eval(ks: KernelSet, s: float) -> float:
    return ks.k_eval(s)


def K_eval(ks: KernelSet, p: complex) -> complex:
    return ks.K_eval(p)


def pK_eval(ks: KernelSet, p: complex) -> complex:
    return ks.pK_eval(p)


def kappa_eval(ks: KernelSet, t: float) -> float:
    return ks.kappa_eval(t)


def k_prime_eval(ks: KernelSet, s: float) -> float:
    return ks.k_prime_eval(s)
