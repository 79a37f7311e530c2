"""Reproducible replication machinery shared by the simulation modules.

Each replication draws from its own Philox (counter-based) stream keyed by
``(master_seed, experiment_key, ..., replication_index)``, so results do not
depend on execution order or on the number of worker processes.
"""

from __future__ import annotations

import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError, MixtureKitError, ReplicationError

log = logging.getLogger(__name__)

THREADS_ENV = "MIXTUREKIT_THREADS"
MAX_FAILURE_RATE = 1e-3


def stream_key(label: str) -> int:
    """Stable 32-bit integer key for a text label."""
    return zlib.crc32(label.encode("utf-8"))


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for one replication (or one sub-experiment)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    cpus = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cpus))
        except ValueError:
            raise InvalidArgumentError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return cpus


@dataclass(frozen=True)
class ReplicationOutcome:
    values: list
    failures: list  # (replication index, message)

    @property
    def n_failed(self) -> int:
        return len(self.failures)


def _run_chunk(func, indices):
    out = []
    for r in indices:
        try:
            out.append((r, func(r), None))
        except MixtureKitError as exc:
            out.append((r, None, f"replication {r}: {exc}"))
    return out


def run_replications(func, reps: int, workers: int | None = None,
                     max_failure_rate: float = MAX_FAILURE_RATE) -> ReplicationOutcome:
    """Evaluate ``func(r)`` for ``r = 0..reps-1``, in index order.

    ``func`` must be picklable when ``workers > 1``.  Replications raising a
    package error are recorded as failures (value ``None``); more than
    ``max_failure_rate * reps`` failures raise :class:`ReplicationError`.
    """
    reps = int(reps)
    if reps < 1:
        raise InvalidArgumentError(f"reps must be positive, got {reps}")
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or reps == 1:
        results = _run_chunk(func, range(reps))
    else:
        n_chunks = min(reps, 4 * workers)
        chunks = [list(c) for c in np.array_split(np.arange(reps), n_chunks)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [func] * len(chunks), chunks)
            results = [item for part in parts for item in part]
    results.sort(key=lambda item: item[0])
    values = [v for _, v, _ in results]
    failures = [(r, msg) for r, _, msg in results if msg is not None]
    if len(failures) > max_failure_rate * reps:
        raise ReplicationError(
            f"{len(failures)} of {reps} replications failed; first: {failures[0][1]}")
    for _, msg in failures:
        log.warning("%s", msg)
    return ReplicationOutcome(values, failures)


def empirical_quantile(values, q: float) -> float:
    """Lower empirical quantile: the ``ceil(q R)``-th smallest of ``R`` values."""
    v = np.sort(np.asarray(values, dtype=float).reshape(-1))
    if v.size == 0:
        raise InvalidArgumentError("empirical_quantile needs at least one value")
    if not 0 < q < 1:
        raise InvalidArgumentError(f"quantile level must lie in (0, 1), got {q}")
    # guard q*R landing a hair above an integer through rounding
    k = math.ceil(q * v.size - 1e-9)
    return float(v[min(max(k, 1), v.size) - 1])
