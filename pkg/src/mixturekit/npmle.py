"""Kiefer-Wolfowitz nonparametric MLE of a mixing distribution on a grid.

The primal problem maximises ``sum_i w_i log g_i`` over ``g = A f`` with ``f``
in the unit simplex.  Its dual maximises ``sum_i w_i log nu_i`` subject to
``sum_i w_i nu_i A_ij <= n`` and ``nu >= 0``; at the optimum ``nu_i = 1/g_i``.

:func:`solve_npmle` runs a log-barrier interior-point method on the dual and
finishes with a support-restricted Newton polish on the primal, so the
returned fit satisfies the duality-gap certificate to near machine precision.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .exceptions import ConvergenceError, EmptySupportError, InvalidArgumentError, NumericDomainError
from .model import LikelihoodMatrix, MixingMeasure
from .qpsolve import QPProblem, solve_nn_qp

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    gap: float
    max_dual_violation: float
    converged: bool
    barrier_iterations: int = 0
    polish_iterations: int = 0


@dataclass(frozen=True)
class NpmleFit:
    """Solution of the gridded Kiefer-Wolfowitz problem.

    Attributes
    ----------
    grid : ndarray, shape (m,)
        Parameter grid the mixing weights live on.
    primal_weights : ndarray, shape (m,)
        Mixing weights ``f`` (on the unit simplex).
    fitted_mixture : ndarray, shape (n,)
        Mixture density ``g = A f`` at each support point.
    dual : ndarray, shape (n,)
        Dual-feasible ``nu``; equals ``1/g`` at the optimum.
    log_likelihood : float
        ``sum_i w_i log g_i``.
    report : SolverReport
    """

    grid: np.ndarray
    primal_weights: np.ndarray
    fitted_mixture: np.ndarray
    dual: np.ndarray
    log_likelihood: float
    report: SolverReport

    @property
    def converged(self) -> bool:
        return self.report.converged

    @property
    def gap(self) -> float:
        return self.report.gap


def _gradient_ratio(entries, p, g):
    """``d_j = sum_i p_i A_ij / g_i`` with ``p`` normalised to sum one."""
    return (p / g) @ entries


def duality_gap(fit: NpmleFit, A: LikelihoodMatrix) -> float:
    """Certified bound on the log-likelihood shortfall of ``fit``.

    Scaling ``nu_i = 1/g_i`` into dual feasibility gives an upper bound on the
    optimal log-likelihood; the distance from the current value is
    ``n log(max_j sum_i w_i A_ij / (n g_i))``.
    """
    g = np.asarray(fit.fitted_mixture, dtype=float)
    if np.any(g <= 0):
        raise NumericDomainError("fitted mixture must be strictly positive")
    n = A.total_count
    d = _gradient_ratio(A.entries, A.weights / n, g)
    return float(n * np.log(d.max()))


def _make_fit(A, f, iterations, barrier_its, polish_its, tol):
    n = A.total_count
    p = A.weights / n
    g = A.entries @ f
    d = _gradient_ratio(A.entries, p, g)
    dmax = float(d.max())
    gap = float(n * np.log(dmax))
    # nu = 1/g scaled into feasibility: sum_i w_i nu_i A_ij <= n for all j
    nu = 1.0 / (g * max(dmax, 1.0))
    violation = float(max(dmax - 1.0, 0.0))
    report = SolverReport(
        iterations=iterations,
        gap=gap,
        max_dual_violation=violation,
        converged=bool(gap <= tol),
        barrier_iterations=barrier_its,
        polish_iterations=polish_its,
    )
    return NpmleFit(
        grid=A.grid,
        primal_weights=f,
        fitted_mixture=g,
        dual=nu,
        log_likelihood=float(A.weights @ np.log(g)),
        report=report,
    )


# --------------------------------------------------------------------------
# barrier phase
# --------------------------------------------------------------------------


def _barrier_phase(entries, p, mu_stop, max_iter, center_tol=0.05):
    """Damped Newton on ``max sum p log nu + mu sum log(1 - B^T nu)``.

    ``B = diag(p) A``.  Returns the normalised primal estimate ``f_j = mu/s_j``
    and the number of Newton steps taken.
    """
    B = p[:, None] * entries
    nu = np.full(p.size, 0.5 / (p @ entries).max())
    mu = 1.0
    its = 0

    def phi(v, mu):
        s = 1.0 - v @ B
        if np.any(v <= 0) or np.any(s <= 0):
            return -np.inf, s
        return float(p @ np.log(v) + mu * np.log(s).sum()), s

    val, s = phi(nu, mu)
    while its < max_iter:
        for _ in range(50):
            if its >= max_iter:
                break
            inv_s = 1.0 / s
            grad = p / nu - mu * (B @ inv_s)
            Bs = B * inv_s
            H = mu * (Bs @ Bs.T)
            H[np.diag_indices_from(H)] += p / (nu * nu)
            try:
                step = cho_solve(cho_factor(H, check_finite=False), grad, check_finite=False)
            except LinAlgError:
                step = np.linalg.lstsq(H, grad, rcond=None)[0]
            its += 1
            decrement = float(grad @ step)
            # largest step keeping nu > 0 and s > 0
            ds = -(step @ B)
            t = 1.0
            neg = step < 0
            if np.any(neg):
                t = min(t, 0.99 * float(np.min(-nu[neg] / step[neg])))
            neg = ds < 0
            if np.any(neg):
                t = min(t, 0.99 * float(np.min(-s[neg] / ds[neg])))
            while True:
                cand = nu + t * step
                cval, cs = phi(cand, mu)
                if cval >= val + 0.25 * t * decrement or t < 1e-12:
                    break
                t *= 0.5
            nu, val, s = cand, cval, cs
            # loose centring: path-following only needs to stay near the path
            if decrement < center_tol * mu:
                break
        if mu <= mu_stop:
            break
        mu *= 0.1
        val, s = phi(nu, mu)

    f = mu / s
    return f / f.sum(), its


# --------------------------------------------------------------------------
# polish phase
# --------------------------------------------------------------------------


def _local_maxima(d):
    """Indices of local maxima of ``d`` along the grid (plateaus: left end)."""
    left = np.r_[-np.inf, d[:-1]]
    right = np.r_[d[1:], -np.inf]
    return np.flatnonzero((d > left) & (d >= right))


def _polish_phase(entries, p, f, n, tol, max_iter):
    """Support-restricted Newton iterations on the primal.

    Around the current ``g`` the log-likelihood has the quadratic model
    ``2 d'a - a'Qa/2`` with ``d_j = sum_i p_i A_ij/g_i`` and
    ``Q = S' diag(p) S``, ``S = A/g``.  The model is maximised over the
    simplex restricted to the current support, grown by the local maxima of
    ``d`` above one, with the active-set QP solver; the step is then
    backtracked on the true objective.
    """
    m = entries.shape[1]
    # barrier weights are dense; keep only the mass that matters
    f = np.where(f > 1e-3 * f.max(), f, 0.0)
    f /= f.sum()
    g = entries @ f
    loglik = float(p @ np.log(g))
    sq = np.sqrt(p)
    its = 0
    while its < max_iter:
        d = _gradient_ratio(entries, p, g)
        if n * np.log(d.max()) <= tol:
            break
        its += 1
        cand = _local_maxima(d)
        support = np.union1d(np.flatnonzero(f > 0), cand[d[cand] > 1.0])
        # on the simplex 2 sqrt(p) = 2 sqrt(p) 1'a, so the model becomes the
        # homogeneous problem min |C a|^2 with C = S - 2 sqrt(p) 1'
        C = entries[:, support] * (sq / g)[:, None] - 2.0 * sq[:, None]
        try:
            coef = solve_nn_qp(QPProblem(C.T @ C, np.ones(support.size)), tol=1e-9).p
        except ConvergenceError as exc:
            coef = exc.best.p if exc.best is not None else None
        if coef is None or not coef.sum() > 0:
            break
        target = np.zeros(m)
        target[support] = coef / coef.sum()
        # near the optimum the gain drops below rounding of the objective;
        # ties within that noise are accepted and the gap decides
        floor = loglik - 8 * np.finfo(float).eps * max(1.0, abs(loglik))
        t = 1.0
        while True:
            f_new = f + t * (target - f)
            g_new = entries @ f_new
            new_loglik = float(p @ np.log(g_new)) if np.all(g_new > 0) else -np.inf
            if new_loglik >= floor or t < 1e-10:
                break
            t *= 0.5
        if not new_loglik >= floor:
            break
        f_new[f_new < 1e-14 * f_new.max()] = 0.0
        f = f_new / f_new.sum()
        g = entries @ f
        loglik = float(p @ np.log(g))
    return f, its


# --------------------------------------------------------------------------
# public entry points
# --------------------------------------------------------------------------


def solve_npmle(A: LikelihoodMatrix, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                *, barrier_stop: float = 1e-3) -> NpmleFit:
    """Maximise the (weighted) mixture log-likelihood over the grid simplex.

    Parameters
    ----------
    A : LikelihoodMatrix
        Likelihood matrix and row weights (counts for binned data).
    tol : float
        Target for :func:`duality_gap`.
    max_iter : int
        Cap on the total number of Newton-type steps (barrier plus polish).
    barrier_stop : float
        Barrier parameter at which the interior-point phase hands over to
        the polish phase.

    Returns
    -------
    NpmleFit
        The best iterate.  ``report.converged`` is false when the gap target
        was not met within ``max_iter`` steps; no exception is raised so that
        Monte Carlo loops can count such cases.
    """
    if not tol > 0:
        raise InvalidArgumentError(f"tol must be positive, got {tol}")
    entries = A.entries
    if not np.all(np.isfinite(entries)):
        raise NumericDomainError("likelihood matrix has non-finite entries")
    n = A.total_count
    p = A.weights / n

    f, barrier_its = _barrier_phase(entries, p, barrier_stop, max_iter)
    f, polish_its = _polish_phase(entries, p, f, n, tol, max_iter - barrier_its)
    fit = _make_fit(A, f, barrier_its + polish_its, barrier_its, polish_its, tol)
    if not fit.converged:
        log.debug("npmle stopped with gap %.3g after %d steps", fit.gap, fit.report.iterations)
    return fit


def em_npmle(A: LikelihoodMatrix, iterations: int = 500, f0=None) -> np.ndarray:
    """Plain EM fixed-point iterations ``f_j <- f_j sum_i (w_i/n) A_ij / g_i``.

    Slow; kept as an independent reference for testing the main solver.
    """
    entries = A.entries
    p = A.weights / A.total_count
    m = entries.shape[1]
    f = np.full(m, 1.0 / m) if f0 is None else np.asarray(f0, dtype=float).copy()
    for _ in range(iterations):
        f = f * _gradient_ratio(entries, p, entries @ f)
        f /= f.sum()
    return f


def fit_from_weights(A: LikelihoodMatrix, f, tol: float = DEFAULT_TOL) -> NpmleFit:
    """Wrap arbitrary simplex weights as an :class:`NpmleFit` (no solving)."""
    f = np.asarray(f, dtype=float)
    return _make_fit(A, f / f.sum(), 0, 0, 0, tol)


def extract_support(fit: NpmleFit, eps: float | None = None) -> MixingMeasure:
    """Grid points carrying mass above ``eps`` (default ``1e-6 / m``), renormalised."""
    f = np.asarray(fit.primal_weights)
    if eps is None:
        eps = 1e-6 / f.size
    keep = f > eps
    if not np.any(keep):
        raise EmptySupportError(f"no grid weight exceeds eps={eps:g}")
    w = f[keep]
    return MixingMeasure(np.asarray(fit.grid)[keep], w / w.sum())
