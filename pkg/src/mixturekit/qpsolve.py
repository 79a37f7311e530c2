"""Nonnegative quadratic program ``min p'Ap  s.t.  p >= 0, b'p = 1``.

Solved by a primal active-set method.  Only the set of free (positive)
coordinates changes between iterations; each iteration solves the
equality-constrained subproblem on that set through its small KKT system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError, InfeasibleProblemError, InvalidArgumentError

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class QPProblem:
    """Symmetric PSD matrix ``A`` and linear-constraint vector ``b``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float, copy=True)
        b = np.array(self.b, dtype=float, copy=True).reshape(-1)
        if A.ndim != 2 or A.shape != (b.size, b.size) or b.size == 0:
            raise InvalidArgumentError("A must be square and match b")
        scale = max(float(np.abs(A).max()), 1.0)
        if np.abs(A - A.T).max() > 1e-12 * scale:
            raise InvalidArgumentError("A must be symmetric")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def size(self) -> int:
        return int(self.b.size)


@dataclass(frozen=True)
class QPSolution:
    p: np.ndarray
    value: float
    kkt_residual: float
    active_set: tuple
    iterations: int = 0


def is_psd(A, rel_tol: float = 1e-10) -> bool:
    """Eigenvalue check ``lambda_min >= -rel_tol * trace``; meant for small matrices."""
    A = np.asarray(A, dtype=float)
    eig = np.linalg.eigvalsh(0.5 * (A + A.T))
    return bool(eig.min() >= -rel_tol * max(np.trace(A), 0.0))


def _multiplier(A, b, p):
    """Least-squares equality multiplier on the positive coordinates."""
    free = p > 0
    if not np.any(free):
        return 0.0
    grad = 2.0 * (A[free] @ p)
    bf = b[free]
    denom = float(bf @ bf)
    return float(bf @ grad / denom) if denom > 0 else 0.0


def kkt_residual(prob: QPProblem, p) -> float:
    """Largest violation among the KKT conditions, in scale-free units.

    With ``s = 2Ap - mu b`` and ``mu`` the least-squares multiplier on the
    positive coordinates, returns the maximum of ``|b'p - 1|``,
    ``max(-p_i) |b|_inf``, ``max |s_i p_i| / mu`` and
    ``max(-s_i) / (mu |b|_inf)``.  The normalisation makes the value
    invariant to rescaling ``A`` or ``b``.
    """
    A, b = prob.A, prob.b
    p = np.asarray(p, dtype=float)
    bnorm = float(np.abs(b).max()) or 1.0
    mu = _multiplier(A, b, p)
    s = 2.0 * (A @ p) - mu * b
    scale = abs(mu) if mu != 0 else 1.0
    return float(max(
        abs(float(b @ p) - 1.0),
        max(float(-p.min()), 0.0) * bnorm,
        float(np.abs(s * p).max()) / scale,
        max(float(-s.min()), 0.0) / (scale * bnorm),
    ))


def _subproblem(A, b, free):
    """Minimiser of ``p'A_FF p`` subject to ``b_F'p = 1`` and its multiplier."""
    k = free.size
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = 2.0 * A[np.ix_(free, free)]
    K[:k, k] = -b[free]
    K[k, :k] = b[free]
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(K, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:k], float(sol[k])


def _solution(prob, p, its):
    p = np.where(p > 0, p, 0.0)
    return QPSolution(
        p=p,
        value=float(p @ prob.A @ p),
        kkt_residual=kkt_residual(prob, p),
        active_set=tuple(int(i) for i in np.flatnonzero(p == 0)),
        iterations=its,
    )


def solve_nn_qp(prob: QPProblem, tol: float = DEFAULT_TOL, max_iter: int | None = None) -> QPSolution:
    """Minimise ``p'Ap`` over ``p >= 0`` with ``b'p = 1``.

    Starts from the best single-coordinate feasible point, then alternates
    between solving the equality subproblem on the free set and moving one
    index in or out of it: out when a free coordinate would turn negative,
    in when its bound multiplier is the most negative.  Ties go to the
    lowest index.

    A singular ``A`` is fine as long as ``b`` lies in its range, which holds
    for Gram matrices ``UU'`` with ``b = Uy``; otherwise the infimum can be
    zero and the normalised KKT residual is not meaningful.

    Raises
    ------
    InfeasibleProblemError
        If no ``b_i`` is positive.
    ConvergenceError
        If the KKT residual stays above ``tol``; ``best`` holds the last iterate.
    """
    A, b = prob.A, prob.b
    N = prob.size
    if not np.any(b > 0):
        raise InfeasibleProblemError("max b_i <= 0: no nonnegative p satisfies b'p = 1")
    if max_iter is None:
        max_iter = 10 * N + 100
    bnorm = float(np.abs(b).max())

    pos = np.flatnonzero(b > 0)
    ratios = np.diag(A)[pos] / b[pos] ** 2
    start = int(pos[np.argmin(ratios)])
    p = np.zeros(N)
    p[start] = 1.0 / b[start]
    free = np.array([start])

    its = 0
    while its < max_iter:
        its += 1
        target, mu = _subproblem(A, b, free)
        if np.all(target >= 0):
            p = np.zeros(N)
            p[free] = target
            scale = abs(mu) if mu != 0 else 1.0
            s = 2.0 * (A @ p) - mu * b
            s[free] = np.inf
            j = int(np.argmin(s))
            if s[j] >= -tol * scale * bnorm:
                sol = _solution(prob, p, its)
                if sol.kkt_residual <= tol:
                    return sol
                raise ConvergenceError(
                    f"active set settled with KKT residual {sol.kkt_residual:.3g} > {tol:g}", best=sol)
            free = np.sort(np.r_[free, j])
            continue
        # step towards the subproblem minimiser until a coordinate hits zero
        cur = p[free]
        step = target - cur
        neg = step < 0
        ratios = np.full(free.size, np.inf)
        ratios[neg] = cur[neg] / -step[neg]
        k = int(np.argmin(ratios))
        alpha = min(1.0, float(ratios[k]))
        p[free] = cur + alpha * step
        p[free[k]] = 0.0
        free = np.delete(free, k)
        p[p < 0] = 0.0
        if free.size == 0:
            break
    best = _solution(prob, p, its)
    raise ConvergenceError(f"active set did not converge in {max_iter} iterations", best=best)
