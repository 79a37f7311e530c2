"""Tests of parameter homogeneity in Gaussian location mixtures.

Statistics provided:

* ``kw_lrt`` -- likelihood ratio of the gridded Kiefer-Wolfowitz NPMLE
  against the best single normal location;
* ``parametric_lrt`` -- likelihood ratio within a one-parameter mixing
  family (two-point Chen family, uniform, Gaussian scale), location known;
* ``calpha_zn`` / ``calpha_general`` -- Neyman C(alpha) statistics built
  from the second-order score;
* ``ks_stat`` -- Kolmogorov-Smirnov distance to the fitted normal.

All return plain floats except the ``*_test`` wrappers and ``kw_lrt``, which
return a :class:`TestResult`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import log_ndtr, ndtr
from scipy.stats import chi2

from .exceptions import ConvergenceError, InvalidArgumentError
from .model import GAUSSIAN, Grid, Kernel, Sample, likelihood_matrix, log_likelihood
from .npmle import DEFAULT_TOL, solve_npmle

TEST_NAMES = ("kw_lrt", "chen_lrt", "uniform_lrt", "gauss_scale_lrt", "calpha", "ks")
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TestResult:
    """A statistic with the critical value it was compared against.

    ``critical_value`` is NaN when no decision was requested; ``reject`` is
    then false.
    """

    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    critical_value: float = float("nan")
    nuisance: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def reject(self) -> bool:
        return bool(self.statistic > self.critical_value)


def null_mle(sample: Sample) -> float:
    """Weighted sample mean, the null MLE of the common location."""
    if not sample.total_count > 0:
        raise InvalidArgumentError("sample has no mass")
    return float(sample.weights @ sample.support / sample.total_count)


# --------------------------------------------------------------------------
# nonparametric LRT
# --------------------------------------------------------------------------


def kw_lrt(sample: Sample, grid: Grid, kernel: Kernel = GAUSSIAN, tol: float = DEFAULT_TOL,
           critical_value: float = float("nan")) -> TestResult:
    """Twice the log-likelihood gain of the NPMLE over the fitted point mass."""
    A = likelihood_matrix(sample, grid, kernel)
    fit = solve_npmle(A, tol=tol)
    theta0 = null_mle(sample)
    stat = 2.0 * (fit.log_likelihood - log_likelihood(sample, theta0, kernel))
    return TestResult(
        "kw_lrt", stat, float(critical_value), nuisance=theta0,
        diagnostics={"gap": fit.gap, "converged": fit.converged, "iterations": fit.report.iterations},
    )


# --------------------------------------------------------------------------
# parametric LRTs (location known, theta0 = 0)
# --------------------------------------------------------------------------


def _log_phi(z):
    return -0.5 * z * z - _LOG_SQRT_2PI


def chen_loglik(sample: Sample, h: float, lam: float) -> float:
    """Log-likelihood of ``(1-lam) N(h/(1-lam), 1) + lam N(-h/lam, 1)``."""
    x = sample.support
    a = math.log1p(-lam) + _log_phi(x - h / (1.0 - lam))
    b = math.log(lam) + _log_phi(x + h / lam)
    return float(sample.weights @ np.logaddexp(a, b))


def uniform_loglik(sample: Sample, h: float) -> float:
    """Log-likelihood of ``N(theta, 1)`` with ``theta ~ U(-h, h)``."""
    x = sample.support
    h = abs(h)
    if h < 1e-8:
        return float(sample.weights @ _log_phi(x))
    # P(x-h < Z < x+h) computed on the side away from the tails
    s = np.abs(x)
    upper = log_ndtr(h - s)
    lower = log_ndtr(-h - s)
    logdiff = upper + np.log1p(-np.exp(np.minimum(lower - upper, 0.0)))
    return float(sample.weights @ (logdiff - math.log(2.0 * h)))


def gauss_scale_loglik(sample: Sample, h: float) -> float:
    """Log-likelihood of ``N(0, 1 + h^2)``."""
    v = 1.0 + h * h
    x = sample.support
    return float(sample.weights @ (-0.5 * x * x / v - 0.5 * math.log(v) - _LOG_SQRT_2PI))


def _maximise_on(fun: Callable[[float], float], lo: float, hi: float, xatol: float = 1e-8):
    """Global-ish maximiser of a 1-d function on ``[lo, hi]``.

    A coarse scan picks the best bracket, which bounded Brent (golden section
    with parabolic steps) then refines.
    """
    grid = np.linspace(lo, hi, 201)
    vals = np.array([fun(h) for h in grid])
    k = int(np.argmax(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    best_h, best_v = float(grid[k]), float(vals[k])
    res = minimize_scalar(lambda h: -fun(h), bounds=(a, b), method="bounded",
                          options={"xatol": xatol, "maxiter": 500})
    if not res.success:
        raise ConvergenceError(f"1-d likelihood maximisation failed on [{a}, {b}]: {res.message}")
    if -res.fun > best_v:
        best_h, best_v = float(res.x), float(-res.fun)
    return best_h, best_v


def parametric_lrt(sample: Sample, family: str, h_max: float = 10.0, lam: float | None = None,
                   critical_value: float = float("nan")) -> TestResult:
    """Likelihood ratio for ``h = 0`` within a one-parameter mixing family.

    ``family`` is one of ``"chen"`` (needs ``lam``), ``"uniform"`` or
    ``"gauss_scale"``.  The location is fixed at zero.
    """
    if not h_max > 0:
        raise InvalidArgumentError(f"h_max must be positive, got {h_max}")
    if family == "chen":
        if lam is None or not 0 < lam < 1:
            raise InvalidArgumentError(f"chen family needs lam in (0, 1), got {lam}")
        null = chen_loglik(sample, 0.0, lam)
        h_pos, v_pos = _maximise_on(lambda h: chen_loglik(sample, h, lam), 0.0, h_max)
        h_neg, v_neg = _maximise_on(lambda h: chen_loglik(sample, h, lam), -h_max, 0.0)
        h_hat, best = (h_pos, v_pos) if v_pos >= v_neg else (h_neg, v_neg)
        name = "chen_lrt"
    elif family == "uniform":
        null = uniform_loglik(sample, 0.0)
        h_hat, best = _maximise_on(lambda h: uniform_loglik(sample, h), 0.0, h_max)
        name = "uniform_lrt"
    elif family == "gauss_scale":
        n = sample.total_count
        s2 = max(1.0, float(sample.weights @ sample.support**2) / n)
        stat = n * (s2 - 1.0 - math.log(s2))
        return TestResult("gauss_scale_lrt", stat, float(critical_value),
                          diagnostics={"h_hat": math.sqrt(s2 - 1.0)})
    else:
        raise InvalidArgumentError(f"unknown parametric family {family!r}")
    if best < null:
        h_hat, best = 0.0, null
    return TestResult(name, 2.0 * (best - null), float(critical_value), diagnostics={"h_hat": h_hat})


# --------------------------------------------------------------------------
# C(alpha)
# --------------------------------------------------------------------------


def calpha_zn(sample: Sample) -> float:
    """Standardised second-order score ``(2n)^(-1/2) sum w ((x - xbar)^2 - 1)``."""
    n = sample.total_count
    if n < 2:
        raise InvalidArgumentError("C(alpha) statistic needs at least two observations")
    xbar = null_mle(sample)
    dev = sample.support - xbar
    return float(sample.weights @ (dev * dev - 1.0)) / math.sqrt(2.0 * n)


@dataclass(frozen=True)
class CAlphaSpec:
    """Ingredients of a C(alpha) statistic for a scalar heterogeneity parameter.

    ``score2(x, theta)`` is the per-observation second-order score for the
    heterogeneity parameter and ``score1(x, theta)`` the ``(n, p)`` array of
    first-order nuisance scores, both at unit scale ``tau``.  ``J11``,
    ``J12`` and ``J22`` are the corresponding information blocks.  The
    statistic does not depend on ``tau``; it is carried for completeness.
    """

    score2: Callable
    score1: Callable
    J11: float
    J12: np.ndarray
    J22: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        J12 = np.atleast_1d(np.asarray(self.J12, dtype=float))
        J22 = np.atleast_2d(np.asarray(self.J22, dtype=float))
        if J22.shape != (J12.size, J12.size):
            raise InvalidArgumentError("J22 must be p x p with p = len(J12)")
        if not np.allclose(J22, J22.T):
            raise InvalidArgumentError("J22 must be symmetric")
        object.__setattr__(self, "J12", J12)
        object.__setattr__(self, "J22", J22)


def gaussian_location_spec(tau: float = 1.0) -> CAlphaSpec:
    """C(alpha) ingredients for homogeneity of a unit-variance normal location."""
    return CAlphaSpec(
        score2=lambda x, th: (x - th) ** 2 - 1.0,
        score1=lambda x, th: (x - th)[:, None],
        J11=2.0,
        J12=np.zeros(1),
        J22=np.eye(1),
        tau=tau,
    )


def calpha_general(spec: CAlphaSpec, sample: Sample, theta_hat) -> float:
    """Effective-score statistic ``(J11 - J12 J22^-1 J21)^(-1/2) (S1 - J12 J22^-1 S2)``."""
    n = sample.total_count
    x, w = sample.support, sample.weights
    t2 = spec.tau * spec.tau
    s1 = t2 * float(w @ np.asarray(spec.score2(x, theta_hat), dtype=float)) / math.sqrt(n)
    s2 = (w @ np.asarray(spec.score1(x, theta_hat), dtype=float).reshape(x.size, -1)) / math.sqrt(n)
    J11 = t2 * t2 * float(spec.J11)
    J12 = t2 * spec.J12
    try:
        proj = np.linalg.solve(spec.J22, J12)
    except np.linalg.LinAlgError:
        raise InvalidArgumentError("J22 is singular") from None
    schur = J11 - float(J12 @ proj)
    if not schur > 0:
        raise InvalidArgumentError("effective information J11 - J12 J22^-1 J21 must be positive")
    return (s1 - float(proj @ s2)) / math.sqrt(schur)


def chibar_critical(alpha: float) -> float:
    """``(1 - alpha)`` quantile of ``0.5 chi2_0 + 0.5 chi2_1``."""
    if not alpha > 0:
        raise InvalidArgumentError(f"alpha must be positive, got {alpha}")
    if alpha >= 0.5:
        warnings.warn("alpha >= 1/2: the chi-bar quantile sits on the atom at zero", stacklevel=2)
        return 0.0
    return float(chi2.isf(2.0 * alpha, 1))


def calpha_test(sample: Sample, alpha: float = 0.05, critical_value: float | None = None) -> TestResult:
    """One-sided C(alpha) test: reject when ``max(Z, 0)^2`` exceeds the critical value."""
    z = calpha_zn(sample)
    c = chibar_critical(alpha) if critical_value is None else float(critical_value)
    return TestResult("calpha", max(z, 0.0) ** 2, c, nuisance=null_mle(sample), diagnostics={"z": z})


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov
# --------------------------------------------------------------------------


def ks_stat(sample: Sample) -> float:
    """``sup |F_n(x) - Phi(x - xbar)|`` over the order statistics."""
    if not sample.is_raw:
        raise InvalidArgumentError("the KS statistic needs a raw (unbinned) sample")
    x = np.sort(sample.support)
    n = x.size
    F = ndtr(x - x.mean())
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_test(sample: Sample, critical_value: float = float("nan")) -> TestResult:
    return TestResult("ks", ks_stat(sample), float(critical_value), nuisance=float(sample.support.mean()))
