"""Serialisation of results: CSV tables, the JSON fit document and SVG power plots.

Floats are written with ``repr`` so every CSV re-parses to the exact values
that produced it.
"""

from __future__ import annotations

import contextlib
import csv
import json
import sys
from dataclasses import asdict

import numpy as np

from .asymcrit import CSV_FIELDS as CRIT_FIELDS, CritRow, CritTable
from .exceptions import InvalidArgumentError
from .experiments import PowerRow, PowerTable, SizeRow, SizeTable
from .npmle import NpmleFit, extract_support

SIZE_FIELDS = ("n", "domain_lo", "domain_hi", "level", "empirical_critical_value", "reps", "seed", "nonconverged")
POWER_FIELDS = ("family", "lambda", "h", "test", "rejections", "reps", "power", "mc_se", "critical_value", "seed")
RESULT_FIELDS = ("test", "n", "statistic", "critical_value", "reject")

__all__ = [
    "CRIT_FIELDS", "SIZE_FIELDS", "POWER_FIELDS", "RESULT_FIELDS",
    "write_crit_csv", "read_crit_csv", "write_size_csv", "read_size_csv",
    "write_power_csv", "read_power_csv", "write_results_csv", "read_results_csv",
    "fit_document", "write_fit_json", "emit_svg_power_plot",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@contextlib.contextmanager
def _sink(path):
    """Text stream for ``path``; ``"-"`` is standard output."""
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _write_rows(path, fields, records) -> None:
    with _sink(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for rec in records:
            writer.writerow([_fmt(rec[k]) for k in fields])


def _read_rows(path, fields):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != tuple(fields):
            raise InvalidArgumentError(f"{path}: expected columns {', '.join(fields)}")
        return list(reader)


def write_crit_csv(table: CritTable, path) -> None:
    _write_rows(path, CRIT_FIELDS, [asdict(r) for r in table.rows])


def read_crit_csv(path) -> list:
    return [
        CritRow(float(r["domain_lo"]), float(r["domain_hi"]), int(r["grid_points"]), int(r["cutoff"]),
                int(r["reps"]), int(r["seed"]), float(r["level"]), float(r["critical_value"]))
        for r in _read_rows(path, CRIT_FIELDS)
    ]


def write_size_csv(table: SizeTable, path) -> None:
    _write_rows(path, SIZE_FIELDS, [asdict(r) for r in table.rows])


def read_size_csv(path) -> list:
    return [
        SizeRow(int(r["n"]), float(r["domain_lo"]), float(r["domain_hi"]), float(r["level"]),
                float(r["empirical_critical_value"]), int(r["reps"]), int(r["seed"]), int(r["nonconverged"]))
        for r in _read_rows(path, SIZE_FIELDS)
    ]


def write_power_csv(table: PowerTable, path) -> None:
    records = []
    for r in table.rows:
        rec = asdict(r)
        rec["lambda"] = rec.pop("lam")
        records.append(rec)
    _write_rows(path, POWER_FIELDS, records)


def read_power_csv(path) -> list:
    return [
        PowerRow(r["family"], float(r["lambda"]) if r["lambda"] else None, float(r["h"]), r["test"],
                 int(r["rejections"]), int(r["reps"]), float(r["power"]), float(r["mc_se"]),
                 float(r["critical_value"]), int(r["seed"]))
        for r in _read_rows(path, POWER_FIELDS)
    ]


def write_results_csv(results, n: int, path) -> None:
    """One row per :class:`TestResult`, all computed on a sample of size ``n``."""
    n = float(n)
    n = int(n) if n.is_integer() else n
    records = [{"test": r.name, "n": n, "statistic": r.statistic,
                "critical_value": r.critical_value, "reject": r.reject} for r in results]
    _write_rows(path, RESULT_FIELDS, records)


def read_results_csv(path) -> list:
    """Rows as ``(name, n, statistic, critical_value, reject)`` tuples."""
    out = []
    for r in _read_rows(path, RESULT_FIELDS):
        n = float(r["n"])
        out.append((r["test"], int(n) if n.is_integer() else n, float(r["statistic"]),
                    float(r["critical_value"]), r["reject"] == "true"))
    return out


def fit_document(fit: NpmleFit) -> dict:
    """JSON-ready summary of an NPMLE fit."""
    support = extract_support(fit)
    return {
        "grid": fit.grid.tolist(),
        "f": fit.primal_weights.tolist(),
        "g": fit.fitted_mixture.tolist(),
        "atoms": support.atoms.tolist(),
        "weights": support.weights.tolist(),
        "gap": fit.gap,
        "iterations": fit.report.iterations,
        "converged": fit.converged,
    }


def write_fit_json(fit: NpmleFit, path) -> None:
    with _sink(path) as fh:
        json.dump(fit_document(fit), fh, indent=2)
        fh.write("\n")


# --------------------------------------------------------------------------
# SVG power curves
# --------------------------------------------------------------------------

_TEST_LABELS = {
    "calpha": r"C($\alpha$)",
    "parametric_lrt": "parametric LRT",
    "kw_lrt": "KW LRT",
    "ks": "Kolmogorov-Smirnov",
}


def emit_svg_power_plot(table: PowerTable, path, alpha: float | None = None) -> None:
    """Power against ``h``, one line per test, with the nominal level marked.

    Each curve carries the SVG id ``power-<test>`` and the reference line
    ``nominal-level``, so the file can be inspected programmatically.  The
    output is deterministic for a given table.
    """
    if not table.rows:
        raise InvalidArgumentError("cannot plot an empty power table")
    if alpha is None:
        alpha = table.config.alpha if table.config is not None else 0.05

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rc = {"svg.hashsalt": "mixturekit", "svg.fonttype": "none", "font.size": 10}
    with matplotlib.rc_context(rc):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        try:
            for test in table.tests:
                rows = sorted((r for r in table.rows if r.test == test), key=lambda r: r.h)
                (line,) = ax.plot([r.h for r in rows], [r.power for r in rows],
                                  marker="o", markersize=3, linewidth=1.2,
                                  label=_TEST_LABELS.get(test, test))
                line.set_gid(f"power-{test}")
            ref = ax.axhline(alpha, color="0.5", linestyle="--", linewidth=0.8)
            ref.set_gid("nominal-level")
            ax.set_ylim(0.0, 1.0)
            ax.set_xlabel("h")
            ax.set_ylabel("power")
            first = table.rows[0]
            title = first.family if first.lam is None else f"{first.family}, lambda = {first.lam:.4g}"
            ax.set_title(title)
            ax.legend(loc="lower right", frameon=False)
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
