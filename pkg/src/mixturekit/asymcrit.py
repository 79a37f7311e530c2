"""Asymptotic null law of the Kiefer-Wolfowitz likelihood-ratio statistic.

Under homogeneity of a unit-variance Gaussian location mixture with mixing
support ``M = [L, U]``, the limit of the LRT is the supremum, over mixing
measures on ``M``, of ``((sum_k Y_k kappa_k / sqrt(k!))_+)^2 / sum_k kappa_k^2 / k!``
with ``k`` running from 2 and ``kappa_k`` the ``k``-th raw moment.  On a grid
``m_1..m_N`` this is ``1 / min{p'Ap : p >= 0, b'p = 1}`` with

    A_ij = sum_{k=2}^K (m_i m_j)^k / k!        b_i = sum_{k=2}^K Y_k m_i^k / sqrt(k!)

and zero whenever every ``b_i <= 0``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError
from .model import Grid, build_grid
from .montecarlo import empirical_quantile, run_replications, stream_key, substream
from .qpsolve import QPProblem, solve_nn_qp

DEFAULT_LEVELS = (0.90, 0.95, 0.99)
CSV_FIELDS = ("domain_lo", "domain_hi", "grid_points", "cutoff", "reps", "seed", "level", "critical_value")


def moment_features(grid: Grid, K: int) -> np.ndarray:
    """Rows ``u_i = (m_i^k / sqrt(k!))_{k=2..K}``, built by running products."""
    K = int(K)
    if K < 2:
        raise InvalidArgumentError(f"cutoff K must be at least 2, got {K}")
    m = np.asarray(grid.points if isinstance(grid, Grid) else grid, dtype=float)
    U = np.empty((m.size, K - 1))
    term = m * m / np.sqrt(2.0)
    U[:, 0] = term
    for col, k in enumerate(range(3, K + 1), start=1):
        term = term * m / np.sqrt(k)
        U[:, col] = term
    return U


def moment_matrix(grid: Grid, K: int = 25, closed_form: bool = False) -> np.ndarray:
    """Truncated moment Gram matrix; PSD by construction.

    With ``closed_form`` the untruncated ``exp(z) - 1 - z`` at ``z = m_i m_j``
    is returned instead (``K`` is then ignored).
    """
    if closed_form:
        m = np.asarray(grid.points if isinstance(grid, Grid) else grid, dtype=float)
        z = np.outer(m, m)
        return np.expm1(z) - z
    U = moment_features(grid, K)
    return U @ U.T


def b_from_normals(grid: Grid, K: int, y) -> np.ndarray:
    """``b_i = sum_{k=2}^K y_k m_i^k / sqrt(k!)`` for a given ``(y_2, ..., y_K)``."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != int(K) - 1:
        raise InvalidArgumentError(f"need {int(K) - 1} normal deviates, got {y.size}")
    return moment_features(grid, K) @ y


def draw_b(grid: Grid, K: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``Y_2..Y_K`` once and load them onto every grid point."""
    return b_from_normals(grid, K, rng.standard_normal(int(K) - 1))


def d_from_b(A: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> float:
    """Discretised supremum ``1 / min p'Ap`` (zero when ``max b <= 0``)."""
    if not np.any(b > 0):
        return 0.0
    sol = solve_nn_qp(QPProblem(A, b), tol=tol)
    return 1.0 / sol.value


def simulate_D_once(A: np.ndarray, grid: Grid, K: int, rng: np.random.Generator,
                    tol: float = 1e-10) -> float:
    """One draw of the limiting statistic for a precomputed moment matrix."""
    return d_from_b(A, draw_b(grid, K, rng), tol=tol)


@dataclass(frozen=True)
class CritSimConfig:
    """Settings for simulating asymptotic critical values."""

    domains: tuple = ((-1.0, 1.0), (-2.0, 2.0), (-3.0, 3.0), (-4.0, 4.0))
    grid_points: int = 200
    cutoff: int = 25
    reps: int = 10000
    seed: int = 42
    levels: tuple = DEFAULT_LEVELS
    closed_form: bool = False
    qp_tol: float = 1e-10

    def __post_init__(self):
        doms = tuple((float(lo), float(hi)) for lo, hi in self.domains)
        object.__setattr__(self, "domains", doms)
        object.__setattr__(self, "levels", tuple(float(q) for q in self.levels))
        if not doms or any(lo >= hi for lo, hi in doms):
            raise InvalidArgumentError("each domain needs lo < hi")
        if self.grid_points < 2 or self.cutoff < 2 or self.reps < 1:
            raise InvalidArgumentError("need grid_points >= 2, cutoff >= 2 and reps >= 1")
        if not all(0 < q < 1 for q in self.levels):
            raise InvalidArgumentError("quantile levels must lie in (0, 1)")


@dataclass(frozen=True)
class CritRow:
    domain_lo: float
    domain_hi: float
    grid_points: int
    cutoff: int
    reps: int
    seed: int
    level: float
    critical_value: float


@dataclass(frozen=True)
class CritTable:
    rows: tuple
    config: CritSimConfig
    failures: dict = field(default_factory=dict)

    def value(self, domain, level) -> float:
        lo, hi = map(float, domain)
        for row in self.rows:
            if row.domain_lo == lo and row.domain_hi == hi and abs(row.level - level) < 1e-12:
                return row.critical_value
        raise KeyError((domain, level))


def critical_grid(lo: float, hi: float, points: int) -> Grid:
    """``points`` equally spaced values on ``[lo, hi]`` avoiding zero."""
    return build_grid(lo, hi, count=points, exclude_zero=True)


def _replicate_D(r, *, seed, key, grid, K, A, tol):
    return d_from_b(A, draw_b(grid, K, substream(seed, key, r)), tol=tol)


def simulate_D(lo: float, hi: float, *, grid_points: int = 200, cutoff: int = 25,
               reps: int = 10000, seed: int = 42, closed_form: bool = False,
               qp_tol: float = 1e-10, workers: int | None = None):
    """All replications of ``D`` for one domain, in replication order.

    Returns the replication outcome; failed replications hold ``None``.
    """
    grid = critical_grid(lo, hi, grid_points)
    A = moment_matrix(grid, cutoff, closed_form=closed_form)
    key = stream_key(f"critvals:{float(lo)!r}:{float(hi)!r}")
    task = functools.partial(_replicate_D, seed=seed, key=key, grid=grid, K=cutoff, A=A, tol=qp_tol)
    return run_replications(task, reps, workers=workers)


def critical_values(config: CritSimConfig, workers: int | None = None) -> CritTable:
    """Empirical quantiles of the simulated limit law for each domain."""
    rows = []
    failures = {}
    for lo, hi in config.domains:
        outcome = simulate_D(lo, hi, grid_points=config.grid_points, cutoff=config.cutoff,
                             reps=config.reps, seed=config.seed, closed_form=config.closed_form,
                             qp_tol=config.qp_tol, workers=workers)
        draws = [v for v in outcome.values if v is not None]
        failures[(lo, hi)] = outcome.n_failed
        for q in config.levels:
            rows.append(CritRow(lo, hi, config.grid_points, config.cutoff, config.reps,
                                config.seed, q, empirical_quantile(draws, q)))
    return CritTable(tuple(rows), config, failures)
