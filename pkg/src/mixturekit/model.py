"""Component kernels, parameter grids, samples and likelihood assembly.

Everything here is a pure function of immutable inputs.  Arrays held by the
dataclasses are made read-only on construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DegenerateSampleError, InvalidArgumentError, NumericDomainError

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_TINY = np.finfo(float).tiny


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


class Kernel:
    """Component density ``phi(x, theta)`` of a one-parameter family."""

    family: str = ""

    def log_density(self, x, theta):
        raise NotImplementedError

    def density(self, x, theta):
        # floored at the smallest normal float so A_ij > 0 even far in the tails
        return np.maximum(np.exp(self.log_density(x, theta)), _TINY)


@dataclass(frozen=True)
class GaussianLocation(Kernel):
    """Unit-variance normal location family, ``phi(x - theta)``."""

    scale: float = 1.0
    family: str = field(default="gaussian-location", init=False)

    def log_density(self, x, theta):
        z = (np.asarray(x, dtype=float) - np.asarray(theta, dtype=float)) / self.scale
        return -0.5 * z * z - math.log(self.scale) + math.log(INV_SQRT_2PI)


GAUSSIAN = GaussianLocation()


def eval_kernel(kernel: Kernel, x: float, theta: float) -> float:
    """Evaluate one component density value."""
    if not (math.isfinite(x) and math.isfinite(theta)):
        raise InvalidArgumentError(f"kernel arguments must be finite, got x={x}, theta={theta}")
    return float(kernel.density(x, theta))


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Strictly increasing set of candidate parameter values."""

    points: np.ndarray
    lo: float
    hi: float
    spacing: float
    exclude_zero: bool = False

    def __post_init__(self):
        pts = _frozen(self.points)
        object.__setattr__(self, "points", pts)
        if pts.size < 2:
            raise InvalidArgumentError("a grid needs at least two points")
        if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0):
            raise InvalidArgumentError("grid points must be finite and strictly increasing")
        if self.exclude_zero and np.any(pts == 0.0):
            raise InvalidArgumentError("grid flagged exclude_zero contains 0")

    @property
    def size(self) -> int:
        return int(self.points.size)

    @classmethod
    def from_points(cls, points) -> "Grid":
        pts = np.asarray(points, dtype=float)
        spacing = float(np.min(np.diff(pts))) if pts.size > 1 else float("nan")
        return cls(pts, float(pts[0]), float(pts[-1]), spacing, exclude_zero=bool(np.all(pts != 0)))


def _zero_index(pts: np.ndarray, span: float):
    k = int(np.argmin(np.abs(pts)))
    return k if abs(pts[k]) <= 1e-12 * span else None


def build_grid(lo: float, hi: float, *, spacing: float | None = None,
               count: int | None = None, exclude_zero: bool = False) -> Grid:
    """Equally spaced grid on ``[lo, hi]``, endpoints included.

    Exactly one of ``spacing`` or ``count`` must be given.  With ``count`` and
    ``exclude_zero``, a ``count + 1`` point progression is built and its zero
    point dropped, so a symmetric domain keeps its endpoints and an even
    spacing of ``(hi - lo) / count``.  If that progression misses zero the
    plain ``count`` point progression is used; in the remaining case (zero
    lies on the ``count`` progression but not on ``count + 1``) the point of
    the ``count + 1`` progression nearest zero is dropped.  With ``spacing``,
    the zero point (if any) is simply removed.
    """
    lo, hi = float(lo), float(hi)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise InvalidArgumentError(f"need finite lo < hi, got [{lo}, {hi}]")
    if (spacing is None) == (count is None):
        raise InvalidArgumentError("give exactly one of spacing or count")
    span = hi - lo

    if spacing is not None:
        spacing = float(spacing)
        if not spacing > 0:
            raise InvalidArgumentError(f"spacing must be positive, got {spacing}")
        intervals = round(span / spacing)
        if intervals < 1 or abs(intervals * spacing - span) > 1e-9 * span:
            raise InvalidArgumentError(f"spacing {spacing} does not divide [{lo}, {hi}]")
        pts = np.linspace(lo, hi, intervals + 1)
        k = _zero_index(pts, span)
        if k is not None:
            if exclude_zero:
                pts = np.delete(pts, k)
            else:
                pts[k] = 0.0
        return Grid(pts, lo, hi, spacing, exclude_zero)

    count = int(count)
    if count < 2:
        raise InvalidArgumentError(f"count must be at least 2, got {count}")
    if not exclude_zero:
        pts = np.linspace(lo, hi, count)
        k = _zero_index(pts, span)
        if k is not None:
            pts[k] = 0.0
        return Grid(pts, lo, hi, span / (count - 1), False)

    wide = np.linspace(lo, hi, count + 1)
    k = _zero_index(wide, span)
    if k is not None:
        return Grid(np.delete(wide, k), lo, hi, span / count, True)
    plain = np.linspace(lo, hi, count)
    if _zero_index(plain, span) is None:
        return Grid(plain, lo, hi, span / (count - 1), True)
    nearest = int(np.argmin(np.abs(wide)))
    return Grid(np.delete(wide, nearest), lo, hi, span / count, True)


# --------------------------------------------------------------------------
# samples
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    """Observations as support points with nonnegative multiplicities.

    Raw data carry unit weights; binned data carry bin centers and counts.
    """

    support: np.ndarray
    weights: np.ndarray
    binned: bool = False

    def __post_init__(self):
        x = _frozen(self.support)
        w = _frozen(self.weights)
        if x.shape != w.shape or x.size == 0:
            raise InvalidArgumentError("support and weights must be nonempty and equally long")
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("sample values must be finite")
        if not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("sample weights must be positive and finite")
        object.__setattr__(self, "support", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_observations(cls, x) -> "Sample":
        x = np.asarray(x, dtype=float).reshape(-1)
        return cls(x, np.ones_like(x), binned=False)

    @property
    def total_count(self) -> float:
        return float(self.weights.sum())

    @property
    def is_raw(self) -> bool:
        return not self.binned and bool(np.all(self.weights == 1.0))

    def __len__(self) -> int:
        return int(self.support.size)


def read_sample(path) -> Sample:
    """Read a data file: one decimal number per line, optional ``x`` header."""
    path = Path(path)
    values = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or (lineno == 1 and text.lower() == "x"):
                continue
            try:
                value = float(text)
            except ValueError:
                raise InvalidArgumentError(f"{path}:{lineno}: cannot parse {text!r} as a number") from None
            if not math.isfinite(value):
                raise InvalidArgumentError(f"{path}:{lineno}: non-finite value {text!r}")
            values.append(value)
    if not values:
        raise InvalidArgumentError(f"{path}: no observations")
    return Sample.from_observations(values)


def bin_sample(raw: Sample, bins: int) -> Sample:
    """Histogram a sample into ``bins`` equal-width bins on ``[min x, max x]``.

    Bins are half-open ``[l, r)`` except the last, which is closed.  Empty bins
    are dropped; the returned weights are the bin counts.
    """
    bins = int(bins)
    if bins < 2:
        raise InvalidArgumentError(f"need at least 2 bins, got {bins}")
    x = raw.support
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        raise DegenerateSampleError("cannot bin a sample whose observations are all identical")
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, weights=raw.weights, minlength=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    keep = counts > 0
    return Sample(centers[keep], counts[keep], binned=True)


# --------------------------------------------------------------------------
# mixing measures and likelihoods
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MixingMeasure:
    """Discrete probability measure on parameter values."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        a = _frozen(self.atoms)
        w = _frozen(self.weights)
        if a.shape != w.shape or a.size == 0:
            raise InvalidArgumentError("atoms and weights must be nonempty and equally long")
        if np.any(np.diff(a) <= 0):
            raise InvalidArgumentError("atoms must be sorted without duplicates")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(f"weights must lie on the simplex (sum={w.sum()!r})")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point(cls, theta: float) -> "MixingMeasure":
        return cls(np.array([float(theta)]), np.array([1.0]))

    @classmethod
    def from_unnormalized(cls, atoms, weights) -> "MixingMeasure":
        """Sort, merge duplicate atoms and rescale weights to sum to one."""
        a = np.asarray(atoms, dtype=float).reshape(-1)
        w = np.asarray(weights, dtype=float).reshape(-1)
        uniq, inv = np.unique(a, return_inverse=True)
        merged = np.bincount(inv, weights=w, minlength=uniq.size)
        return cls(uniq, merged / merged.sum())

    @property
    def mean(self) -> float:
        return float(self.atoms @ self.weights)


@dataclass(frozen=True)
class LikelihoodMatrix:
    """Dense ``n x m`` matrix ``A_ij = phi(x_i, theta_j)`` with its row weights."""

    entries: np.ndarray
    support: np.ndarray
    weights: np.ndarray
    grid: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float, copy=True)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        for name in ("support", "weights", "grid"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if entries.shape != (self.support.size, self.grid.size):
            raise InvalidArgumentError("likelihood matrix shape does not match sample and grid")
        if self.weights.size != self.support.size:
            raise InvalidArgumentError("row weights do not match the support")
        if not np.all(entries > 0):
            raise InvalidArgumentError("likelihood entries must be strictly positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def total_count(self) -> float:
        return float(self.weights.sum())


def likelihood_matrix(sample: Sample, grid: Grid, kernel: Kernel = GAUSSIAN) -> LikelihoodMatrix:
    """Assemble ``A_ij = phi(x_i, theta_j)`` for a sample and a grid."""
    entries = kernel.density(sample.support[:, None], grid.points[None, :])
    return LikelihoodMatrix(entries, sample.support, sample.weights, grid.points)


def mixture_density(measure: MixingMeasure, kernel: Kernel, x):
    """Mixture density ``sum_j w_j phi(x, a_j)``; scalar in, scalar out."""
    xs = np.asarray(x, dtype=float)
    vals = kernel.density(xs[..., None], measure.atoms) @ measure.weights
    return float(vals) if xs.ndim == 0 else vals


def log_likelihood(sample: Sample, density, kernel: Kernel = GAUSSIAN) -> float:
    """Weighted log-likelihood ``sum_i w_i log g(x_i)``.

    ``density`` is either a :class:`MixingMeasure` or a single parameter value
    (a point mass).
    """
    if isinstance(density, MixingMeasure):
        g = kernel.density(sample.support[:, None], density.atoms) @ density.weights
        if np.any(g <= 0):
            raise NumericDomainError("mixture density vanishes at a support point")
        return float(sample.weights @ np.log(g))
    theta = float(density)
    if not math.isfinite(theta):
        raise InvalidArgumentError(f"point parameter must be finite, got {theta}")
    with np.errstate(over="ignore"):
        value = float(sample.weights @ kernel.log_density(sample.support, theta))
    if not math.isfinite(value):
        raise NumericDomainError(f"density underflows to zero at theta={theta}")
    return value
