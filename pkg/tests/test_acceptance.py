"""Acceptance checks for the package as a whole.

Each test prints one ``PASS``/``FAIL`` line for its criterion (visible with
``pytest -s``); the terminal summary repeats them.  Tolerances are fixed
here, not tuned to the outcomes.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from mixturekit.asymcrit import CritSimConfig, critical_values
from mixturekit.cli import run
from mixturekit.experiments import PowerConfig, SizeConfig, null_statistics, power_experiment, size_experiment
from mixturekit.model import Sample, build_grid, likelihood_matrix
from mixturekit.npmle import duality_gap, em_npmle, solve_npmle
from mixturekit.qpsolve import QPProblem, solve_nn_qp
from test_qpsolve import random_instance, support_oracle

REFERENCE_CRIT = {
    (-1.0, 1.0): (2.75, 3.95, 6.93),
    (-2.0, 2.0): (3.90, 5.37, 8.71),
    (-3.0, 3.0): (5.34, 6.87, 10.46),
    (-4.0, 4.0): (6.38, 8.32, 11.91),
}
LEVELS = (0.90, 0.95, 0.99)
REFERENCE_TOL = 0.25


def report_line(record_property, label, ok, detail):
    record_property("criterion", label)
    print(f"\n{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    return ok


def test_1_reference_critical_values(record_property):
    table = critical_values(CritSimConfig(domains=tuple(REFERENCE_CRIT), reps=10000, seed=42))
    misses = []
    worst = 0.0
    for dom, expected in REFERENCE_CRIT.items():
        for q, ref in zip(LEVELS, expected):
            got = table.value(dom, q)
            worst = max(worst, abs(got - ref))
            if abs(got - ref) > REFERENCE_TOL:
                misses.append(f"{dom} {q:.0%}: {got:.3f} vs {ref}")
    ok = report_line(record_property, "1. reference critical values", not misses,
                     f"max |diff| {worst:.3f} (tol {REFERENCE_TOL}); misses: {misses or 'none'}")
    assert ok, misses


def test_2_npmle_optimality(record_property):
    grid = build_grid(-3, 3, spacing=0.02)
    n = 200
    worst_gap, worst_time, worst_em = -np.inf, 0.0, np.inf
    for i in range(20):
        x = np.random.default_rng(9000 + i).standard_normal(n)
        A = likelihood_matrix(Sample.from_observations(x), grid)
        t0 = time.perf_counter()
        fit = solve_npmle(A)
        worst_time = max(worst_time, time.perf_counter() - t0)
        worst_gap = max(worst_gap, duality_gap(fit, A))
        f_em = em_npmle(A, iterations=500)
        worst_em = min(worst_em, fit.log_likelihood - float(A.weights @ np.log(A.entries @ f_em)))
    ok = worst_gap <= 1e-8 * n and worst_em >= -1e-6 and worst_time <= 1.0
    report_line(record_property, "2. NPMLE optimality", ok,
                f"max gap {worst_gap:.2e}, min margin over EM {worst_em:.2e}, slowest solve {worst_time:.3f}s")
    assert ok


def test_3_qp_oracle(record_property):
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in range(200):
        N = 1 + k % 4
        A, b = random_instance(rng, N)
        value = solve_nn_qp(QPProblem(A, b)).value
        worst = max(worst, abs(value - support_oracle(A, b)))
    ok = worst <= 1e-8
    report_line(record_property, "3. QP oracle equivalence", ok, f"max |diff| {worst:.2e} over 200 instances")
    assert ok


def test_4_calpha_size(record_property):
    stats = null_statistics(("calpha",), 200, 10000, seed=42)["calpha"]
    rate = float(np.mean(np.asarray(stats) > 2.7055))
    ok = 0.040 <= rate <= 0.060
    report_line(record_property, "4. C(alpha) null size", ok, f"rejection rate {rate:.4f} (band [0.040, 0.060])")
    assert ok


def test_5_empirical_below_asymptotic(record_property):
    domains = ((-1.0, 1.0), (-2.0, 2.0))
    table = size_experiment(SizeConfig(sizes=(500,), domains=domains, reps=1000, seed=42))
    pairs = [(dom, q, table.value(500, dom, q), ref)
             for dom in domains for q, ref in zip(LEVELS, REFERENCE_CRIT[dom])]
    bad = [p for p in pairs if not p[2] < p[3]]
    detail = ", ".join(f"{d} {q:.0%} {v:.3f}<{r}" for d, q, v, r in pairs)
    ok = report_line(record_property, "5. empirical below asymptotic", not bad, detail)
    assert ok, bad


def test_6_power_orderings(record_property):
    reps = 2000
    mid = PowerConfig(family="chen", lam=1 / 3, h_grid=(0.3,), reps=reps, calibration_reps=reps,
                      tests=("calpha", "kw_lrt", "ks"), seed=42)
    a = power_experiment(mid)
    c_a, k_a, s_a = (a.cell(0.3, t) for t in ("calpha", "kw_lrt", "ks"))
    # the null law of these statistics does not involve the alternative, so
    # the calibrated values carry over
    top = PowerConfig(family="chen", lam=1 / 20, h_grid=(0.15,), reps=reps, tests=("calpha", "kw_lrt"),
                      seed=42, critical_values={t: a.critical_values[t] for t in ("calpha", "kw_lrt")})
    b = power_experiment(top)
    c_b, k_b = b.cell(0.15, "calpha"), b.cell(0.15, "kw_lrt")

    def se(*cells):
        return max(c.mc_se for c in cells)

    checks = {
        "a: calpha >= kw - 2se": c_a.power >= k_a.power - 2 * se(c_a, k_a),
        "a: kw >= ks + 2se": k_a.power >= s_a.power + 2 * se(k_a, s_a),
        "b: kw >= calpha - 2se": k_b.power >= c_b.power - 2 * se(k_b, c_b),
    }
    detail = (f"lam=1/3 h=0.3 calpha {c_a.power:.3f} kw {k_a.power:.3f} ks {s_a.power:.3f}; "
              f"lam=1/20 h=0.15 calpha {c_b.power:.3f} kw {k_b.power:.3f}; "
              f"failed: {[k for k, v in checks.items() if not v] or 'none'}")
    ok = report_line(record_property, "6. power orderings", all(checks.values()), detail)
    assert ok


def test_7_invariant_suites(record_property):
    tests_dir = Path(__file__).parent
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-m", "invariant", "-p", "no:cacheprovider", str(tests_dir),
         "--ignore", str(tests_dir / "test_acceptance.py")],
        capture_output=True, text=True, check=False,
    )
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = report_line(record_property, "7. invariant suites", proc.returncode == 0, summary)
    assert ok, proc.stdout[-3000:]


@pytest.mark.parametrize("argv", [
    ["critvals", "--reps", "300", "--grid-points", "80"],
    ["size-exp", "--sizes", "100", "1200", "--domain", "-1", "1", "--domain", "-2", "2", "--reps", "24"],
    ["power-exp", "--h-grid", "0", "0.3", "--n", "80", "--reps", "24"],
], ids=["critvals", "size-exp", "power-exp"])
def test_8_reproducibility(record_property, tmp_path, argv):
    outputs = []
    for k, workers in enumerate(("1", "8", "1", "8")):
        out = tmp_path / f"run{k}.csv"
        assert run(argv + ["--seed", "42", "--workers", workers, "--out", str(out)]) == 0
        outputs.append(out.read_bytes())
    ok = all(o == outputs[0] for o in outputs)
    report_line(record_property, f"8. reproducibility ({argv[0]})", ok,
                f"{len(outputs)} runs with workers 1 and 8, {len(outputs[0])} bytes each, identical={ok}")
    assert ok
