"""Monte Carlo size and power studies for the homogeneity tests.

Every replication draws from its own substream, and all tests in a study
are evaluated on the same simulated samples.  Tables are therefore
bit-identical for a given seed whatever the worker count.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError
from .homogeneity import calpha_zn, kw_lrt, ks_stat, parametric_lrt
from .model import Sample, bin_sample, build_grid
from .montecarlo import empirical_quantile, run_replications, stream_key, substream

__all__ = [
    "MixingFamily", "draw_mixture_sample", "empirical_quantile",
    "SizeConfig", "SizeRow", "SizeTable", "size_experiment", "default_bins",
    "calibrate_null", "PowerConfig", "PowerRow", "PowerTable", "power_experiment",
    "default_h_grid", "POWER_TESTS",
]

POWER_TESTS = ("calpha", "parametric_lrt", "kw_lrt", "ks")
FAMILIES = ("point", "chen", "uniform", "gauss")


@dataclass(frozen=True)
class MixingFamily:
    """Mixing law of the location parameter.

    ``chen``: ``(1-lam) delta_{h/(1-lam)} + lam delta_{-h/lam}``;
    ``uniform``: ``U(-h, h)``; ``gauss``: ``N(0, h^2)``; ``point``: ``delta_theta0``.
    """

    kind: str
    h: float = 0.0
    lam: float | None = None
    theta0: float = 0.0

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise InvalidArgumentError(f"unknown mixing family {self.kind!r}")
        if self.h < 0:
            raise InvalidArgumentError(f"h must be nonnegative, got {self.h}")
        if self.kind == "chen" and (self.lam is None or not 0 < self.lam < 1):
            raise InvalidArgumentError(f"chen family needs lam in (0, 1), got {self.lam}")

    def atoms(self):
        """Atoms and weights of the two-point chen law."""
        lam = self.lam
        return np.array([-self.h / lam, self.h / (1.0 - lam)]), np.array([lam, 1.0 - lam])


def draw_mixture_sample(family: MixingFamily, n: int, rng: np.random.Generator) -> Sample:
    """``x_i = theta_i + z_i`` with ``theta_i`` from the mixing family.

    The noise ``z`` is drawn first, so for every family with ``h = 0`` the
    sample coincides with the point-mass sample from the same stream.
    """
    n = int(n)
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    z = rng.standard_normal(n)
    if family.kind == "point":
        theta = family.theta0
    elif family.kind == "chen":
        u = rng.random(n)
        lam, h = family.lam, family.h
        theta = np.where(u < lam, -h / lam, h / (1.0 - lam))
    elif family.kind == "uniform":
        theta = rng.uniform(-family.h, family.h, n)
    else:
        theta = family.h * rng.standard_normal(n)
    return Sample.from_observations(theta + z)


# --------------------------------------------------------------------------
# size study
# --------------------------------------------------------------------------


def default_bins(n: int):
    """Bin count used for a sample of size ``n`` (``None``: unbinned)."""
    if n < 1000:
        return None
    if n < 10000:
        return 300
    return 500


@dataclass(frozen=True)
class SizeConfig:
    sizes: tuple = (100, 500, 1000, 5000, 10000)
    domains: tuple = ((-1.0, 1.0), (-2.0, 2.0), (-3.0, 3.0), (-4.0, 4.0))
    spacing: float = 0.01
    reps: int = 10000
    seed: int = 42
    levels: tuple = (0.90, 0.95, 0.99)
    binning: dict | None = None  # n -> bins (None for raw); default_bins otherwise
    tol: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        object.__setattr__(self, "domains", tuple((float(a), float(b)) for a, b in self.domains))
        object.__setattr__(self, "levels", tuple(float(q) for q in self.levels))
        if self.binning is not None:
            object.__setattr__(self, "binning", {int(k): (None if v is None else int(v))
                                                 for k, v in self.binning.items()})
        if not self.sizes or min(self.sizes) < 2 or self.reps < 1:
            raise InvalidArgumentError("need sizes >= 2 and reps >= 1")

    def bins_for(self, n: int):
        if self.binning is not None and n in self.binning:
            return self.binning[n]
        return default_bins(n)


@dataclass(frozen=True)
class SizeRow:
    n: int
    domain_lo: float
    domain_hi: float
    level: float
    empirical_critical_value: float
    reps: int
    seed: int
    nonconverged: int


@dataclass(frozen=True)
class SizeTable:
    rows: tuple
    config: SizeConfig

    def value(self, n, domain, level) -> float:
        for r in self.rows:
            if r.n == n and (r.domain_lo, r.domain_hi) == tuple(map(float, domain)) and abs(r.level - level) < 1e-12:
                return r.empirical_critical_value
        raise KeyError((n, domain, level))


def _size_replication(r, *, seed, key, n, bins, grids, tol):
    sample = draw_mixture_sample(MixingFamily("point"), n, substream(seed, key, r))
    if bins is not None:
        sample = bin_sample(sample, bins)
    out = []
    for grid in grids:
        res = kw_lrt(sample, grid, tol=tol)
        out.append((res.statistic, bool(res.diagnostics["converged"])))
    return out


def size_experiment(cfg: SizeConfig, workers: int | None = None) -> SizeTable:
    """Empirical null quantiles of the KW-LRT for each sample size and domain."""
    grids = [build_grid(lo, hi, spacing=cfg.spacing) for lo, hi in cfg.domains]
    rows = []
    for n in cfg.sizes:
        task = functools.partial(_size_replication, seed=cfg.seed, key=stream_key(f"size:n={n}"),
                                 n=n, bins=cfg.bins_for(n), grids=grids, tol=cfg.tol)
        outcome = run_replications(task, cfg.reps, workers=workers)
        done = [v for v in outcome.values if v is not None]
        for d, (lo, hi) in enumerate(cfg.domains):
            stats = [v[d][0] for v in done]
            nonconv = sum(not v[d][1] for v in done)
            for q in cfg.levels:
                rows.append(SizeRow(n, lo, hi, q, empirical_quantile(stats, q), len(done), cfg.seed, nonconv))
    return SizeTable(tuple(rows), cfg)


# --------------------------------------------------------------------------
# power study
# --------------------------------------------------------------------------


def default_h_grid(kind: str, lam: float | None = None) -> tuple:
    """21 equally spaced alternatives; the upper end depends on the family."""
    if kind == "chen":
        top = 0.6 if lam is None or lam > 0.2 else 0.15
    else:
        top = 1.0
    return tuple(float(h) for h in np.linspace(0.0, top, 21))


def _parametric_family(kind: str) -> str:
    return {"chen": "chen", "uniform": "uniform", "gauss": "gauss_scale"}[kind]


def _statistics(sample, tests, *, kind, lam, h_max, kw_points, tol):
    """All requested statistics on one sample, plus the KW convergence flag."""
    out = {}
    converged = True
    for test in tests:
        if test == "calpha":
            out[test] = max(calpha_zn(sample), 0.0) ** 2
        elif test == "ks":
            out[test] = ks_stat(sample)
        elif test == "parametric_lrt":
            out[test] = parametric_lrt(sample, _parametric_family(kind), h_max=h_max, lam=lam).statistic
        elif test == "kw_lrt":
            x = sample.support
            grid = build_grid(float(x.min()), float(x.max()), count=kw_points)
            res = kw_lrt(sample, grid, tol=tol)
            out[test] = res.statistic
            converged = bool(res.diagnostics["converged"])
        else:
            raise InvalidArgumentError(f"unknown test {test!r}")
    return out, converged


def _power_replication(r, *, seed, key, family, n, tests, stat_kw):
    sample = draw_mixture_sample(family, n, substream(seed, key, r))
    return _statistics(sample, tests, **stat_kw)


def _null_key(n: int) -> int:
    return stream_key(f"null:n={n}")


def null_statistics(tests, n: int, reps: int, seed: int, *, kind: str = "chen", lam: float | None = None,
                    h_max: float = 10.0, kw_points: int = 300, tol: float = 1e-8,
                    workers: int | None = None) -> dict:
    """Null (N(0,1)) draws of each statistic; one shared sample per replication."""
    stat_kw = dict(kind=kind, lam=lam, h_max=h_max, kw_points=kw_points, tol=tol)
    task = functools.partial(_power_replication, seed=seed, key=_null_key(n), family=MixingFamily("point"),
                             n=n, tests=tuple(tests), stat_kw=stat_kw)
    outcome = run_replications(task, reps, workers=workers)
    done = [v for v in outcome.values if v is not None]
    return {t: [v[0][t] for v in done] for t in tests}


def calibrate_null(test: str, n: int, reps: int, alpha: float, seed: int, *, kind: str = "chen",
                   lam: float | None = None, h_max: float = 10.0, kw_points: int = 300,
                   tol: float = 1e-8, workers: int | None = None) -> float:
    """Size-adjusted critical value: the empirical ``1 - alpha`` null quantile.

    ``kind``/``lam`` select the parametric family for ``parametric_lrt``.
    """
    if not 0 < alpha < 1:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    stats = null_statistics((test,), n, reps, seed, kind=kind, lam=lam, h_max=h_max,
                            kw_points=kw_points, tol=tol, workers=workers)[test]
    return empirical_quantile(stats, 1.0 - alpha)


@dataclass(frozen=True)
class PowerConfig:
    family: str = "chen"
    lam: float | None = 1.0 / 3.0
    h_grid: tuple | None = None
    n: int = 200
    reps: int = 10000
    tests: tuple = POWER_TESTS
    seed: int = 42
    alpha: float = 0.05
    calibration_reps: int | None = None
    kw_grid_points: int = 300
    h_max: float = 10.0
    tol: float = 1e-8
    critical_values: dict | None = None  # test -> value; skips calibration for those tests

    def __post_init__(self):
        if self.family not in ("chen", "uniform", "gauss"):
            raise InvalidArgumentError(f"power family must be chen, uniform or gauss, got {self.family!r}")
        if self.family != "chen":
            object.__setattr__(self, "lam", None)
        elif self.lam is None or not 0 < self.lam < 1:
            raise InvalidArgumentError("chen family needs lam in (0, 1)")
        if self.h_grid is None:
            object.__setattr__(self, "h_grid", default_h_grid(self.family, self.lam))
        object.__setattr__(self, "h_grid", tuple(float(h) for h in self.h_grid))
        object.__setattr__(self, "tests", tuple(self.tests))
        unknown = set(self.tests) - set(POWER_TESTS)
        if unknown:
            raise InvalidArgumentError(f"unknown tests {sorted(unknown)}")
        if not 0 < self.alpha < 1 or self.reps < 1 or self.n < 2:
            raise InvalidArgumentError("need 0 < alpha < 1, reps >= 1 and n >= 2")


@dataclass(frozen=True)
class PowerRow:
    family: str
    lam: float | None
    h: float
    test: str
    rejections: int
    reps: int
    power: float
    mc_se: float
    critical_value: float
    seed: int


@dataclass(frozen=True)
class PowerTable:
    rows: tuple
    config: PowerConfig | None = None
    nonconverged: int = 0
    critical_values: dict = field(default_factory=dict)

    def cell(self, h: float, test: str) -> PowerRow:
        for r in self.rows:
            if r.test == test and abs(r.h - h) < 1e-12:
                return r
        raise KeyError((h, test))

    @property
    def tests(self) -> tuple:
        seen = []
        for r in self.rows:
            if r.test not in seen:
                seen.append(r.test)
        return tuple(seen)


def power_experiment(cfg: PowerConfig, workers: int | None = None) -> PowerTable:
    """Size-adjusted rejection rates of each test along the ``h`` grid."""
    stat_kw = dict(kind=cfg.family, lam=cfg.lam, h_max=cfg.h_max, kw_points=cfg.kw_grid_points, tol=cfg.tol)
    crit = dict(cfg.critical_values or {})
    missing = [t for t in cfg.tests if t not in crit]
    if missing:
        cal_reps = cfg.calibration_reps or cfg.reps
        null = null_statistics(missing, cfg.n, cal_reps, cfg.seed, workers=workers, **stat_kw)
        for t in missing:
            crit[t] = empirical_quantile(null[t], 1.0 - cfg.alpha)

    rows = []
    nonconv = 0
    for k, h in enumerate(cfg.h_grid):
        family = MixingFamily(cfg.family, h=h, lam=cfg.lam)
        key = stream_key(f"power:{cfg.family}:{cfg.lam!r}:{k}:{h!r}")
        task = functools.partial(_power_replication, seed=cfg.seed, key=key, family=family,
                                 n=cfg.n, tests=cfg.tests, stat_kw=stat_kw)
        outcome = run_replications(task, cfg.reps, workers=workers)
        done = [v for v in outcome.values if v is not None]
        nonconv += sum(not conv for _, conv in done)
        R = len(done)
        for t in cfg.tests:
            rej = sum(stats[t] > crit[t] for stats, _ in done)
            power = rej / R
            rows.append(PowerRow(cfg.family, cfg.lam, h, t, int(rej), R, power,
                                 math.sqrt(power * (1.0 - power) / R), float(crit[t]), cfg.seed))
    return PowerTable(tuple(rows), cfg, nonconv, crit)
