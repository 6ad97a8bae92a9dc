"""The relaxation function u_lambda: the distributed-order analogue of exp.

u_lambda solves D^(mu) u = lambda * u with u(0) = 1.  For lambda < 0 it is
completely monotone and is computed primarily as the Laplace transform of a
nonnegative spectral density, with contour inversion of
K(p)/(p K(p) - lambda) as a cross-check.  For lambda > 0 the transform has
a pole at the unique positive root of p K(p) = lambda, so only the contour
route exists and the contour radius must exceed that root.
"""

from __future__ import annotations

import math
import threading

import numpy as np

from .exceptions import ContourError, DomainError, PathDisagreementError
from .kernels import KernelSet
from .transform import ContourEvaluation, contour_for, log_axis_density

__all__ = ["RelaxationProblem", "u_lambda", "u_lambda_longtime_ratio"]


class RelaxationProblem:
    """Kernel set plus rate lambda, with the contour-radius bound gamma_min."""

    def __init__(self, kernels: KernelSet, lam: float, *,
                 pole_tol: float = 1e-6, rtol: float = 1e-8):
        self.kernels = kernels
        self.lam = float(lam)
        self.pole_tol = float(pole_tol)
        self.rtol = float(rtol)
        if self.lam > 0:
            self.gamma_min = kernels.positive_real_root(self.lam)
        else:
            self.gamma_min = 0.0
        self._lock = threading.Lock()
        self._dens = None
        self._contour_evals: dict[int, ContourEvaluation] = {}

    # transformed solution, Laplace domain
    def transform(self, p) -> np.ndarray:
        K = self.kernels.K_eval_many(p)
        pK = np.atleast_1d(np.asarray(p, dtype=complex)) * K
        denom = pK - self.lam
        if self.lam != 0 and np.any(np.abs(denom) < self.pole_tol * abs(self.lam)):
            raise ContourError(
                "contour node too close to the pole p K(p) = lambda")
        return K / denom

    def _ensure_density(self):
        if self._dens is not None:
            return
        self.kernels._ensure_rule()
        rule = self.kernels._rule
        with self._lock:
            if self._dens is None:
                df = log_axis_density(self.kernels.weight, rule.y_f,
                                      mode="relaxation", lam=self.lam)
                dc = log_axis_density(self.kernels.weight, rule.y_c,
                                      mode="relaxation", lam=self.lam)
                self._dens = (df, dc)

    def _contour_at(self, t: float) -> ContourEvaluation:
        bucket = int(math.floor(math.log2(t)))
        ev = self._contour_evals.get(bucket)
        if ev is None:
            with self._lock:
                ev = self._contour_evals.get(bucket)
                if ev is None:
                    t_lo = 2.0 ** bucket
                    gamma = None
                    if self.lam > 0:
                        gamma = max(1.5 * self.gamma_min, self.gamma_min + 0.5,
                                    2.0 / t_lo)
                    c = contour_for(t_lo, gamma=gamma)
                    ev = ContourEvaluation(c, self.transform)
                    self._contour_evals[bucket] = ev
        return ev

    def spectral(self, t):
        """lambda < 0 only: int_0^inf e^{-tr} dens(r) dr with estimate."""
        if self.lam >= 0:
            raise DomainError("spectral representation exists only for lambda < 0")
        self._ensure_density()
        rule = self.kernels._rule
        return rule.laplace(self._dens[0], self._dens[1], t)

    def contour(self, t: float):
        res = self._contour_at(t).at(t, tol=self.rtol)
        return res.value.real, res.err

    def value(self, t: float, *, check: bool = True) -> float:
        if t < 0:
            raise DomainError("relaxation function defined for t >= 0")
        if self.lam == 0 or t == 0.0:
            # u_0 is identically 1; t = 0 returns 1 by continuity rather
            # than by inversion, which degrades there
            return 1.0
        if self.lam > 0:
            val, _ = self.contour(t)
            return float(val)
        val, err = self.spectral(t)
        if check:
            val2, err2 = self.contour(t)
            combined = err + err2 + 1e-12 * max(abs(val), abs(val2))
            if abs(val - val2) > 10.0 * combined:
                raise PathDisagreementError(
                    f"relaxation paths disagree at t={t}: {val} vs {val2}",
                    val, val2, combined)
        return float(val)

    def values(self, ts, *, check: bool = True) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        out = np.empty(ts.shape)
        zero = ts == 0.0
        out[zero] = 1.0
        rest = ~zero
        if self.lam == 0:
            out[:] = 1.0
            return out
        if self.lam < 0:
            vals, _ = self.spectral(ts[rest])
            out[rest] = vals
            if check and np.any(rest):
                sample = float(ts[rest][len(ts[rest]) // 2])
                self.value(sample)
            return out
        # lambda > 0: group by octave so contour F-values are reused
        tr = ts[rest]
        vals = np.empty(tr.shape)
        buckets = np.floor(np.log2(tr)).astype(int)
        for b in np.unique(buckets):
            sel = buckets == b
            ev = self._contour_at(float(2.0 ** b))
            vals[sel] = [ev.at(float(t), tol=self.rtol).value.real for t in tr[sel]]
        out[rest] = vals
        return out


def u_lambda(prob: RelaxationProblem, t: float) -> float:
    """u_lambda(t); exact 1 for lambda = 0 and at t = 0."""
    return prob.value(t)


def u_lambda_longtime_ratio(prob: RelaxationProblem, t: float) -> float:
    """u_lambda(t) * (log t)^(1 + nu_eff) for the long-time trend tests.

    nu_eff is 0 when mu(0) != 0 and the weight's vanishing order nu
    otherwise; the ratio should flatten as t grows.
    """
    if prob.lam >= 0:
        raise DomainError("long-time ratio defined for lambda < 0")
    if t < 10.0:
        raise DomainError("long-time ratio intended for t >= 10")
    w = prob.kernels.weight
    nu_eff = 0.0 if w.mu_at_0 != 0.0 else w.nu
    return prob.value(t) * math.log(t) ** (1.0 + nu_eff)
