"""Structured experiment reports.

A report is a deterministic JSON body (config echo, per-estimator results,
declared tolerances and pass flags) plus a timing section kept outside the
body so that runs with different worker counts emit byte-identical bodies.
Tables inside results carry explicit column names and are exported to CSV;
a gnuplot script is emitted for the standard comparisons.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = ["ExperimentReport", "body_json", "emit_report", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1


@dataclass(eq=False)
class ExperimentReport:
    body: dict
    timing: dict = field(default_factory=dict)


def _jsonify(obj):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and (obj != obj or obj in (float("inf"), float("-inf"))):
        return repr(obj)  # JSON has no inf/nan; keep them readable and stable
    return obj


def body_json(report: ExperimentReport) -> str:
    """Canonical serialization of the body (the determinism contract)."""
    return json.dumps(_jsonify(report.body), sort_keys=True, indent=2) + "\n"


def _iter_tables(body: dict):
    for est_name, result in body.get("results", {}).items():
        for tab_name, table in (result or {}).get("tables", {}).items():
            yield f"{est_name}_{tab_name}", table


def _write_csv(path: str, table: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(table["columns"]) + "\n")
        for row in table["rows"]:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


_GNUPLOT_HEADER = """\
set datafile separator ','
set terminal pngcairo size 900,600
set key outside
"""

_GNUPLOT_CLUSTER = """\
set output '{png}'
set title 'cluster-size distribution: estimate vs limit law'
set xlabel 'cluster size j'
set ylabel 'probability'
plot '{csv}' skip 1 using 1:2:3 with yerrorbars title 'estimated', \\
     '{csv}' skip 1 using 1:4 with linespoints title 'limit law'
"""

_GNUPLOT_THETA = """\
set output '{png}'
set title 'extremal index vs horizon'
set xlabel 'n'
set ylabel 'theta'
set logscale x
plot '{csv}' skip 1 using 1:2:3 with yerrorbars title 'estimated', \\
     '{csv}' skip 1 using 1:4 with lines title 'limit value'
"""


def emit_report(report: ExperimentReport, outdir: str, formats=("json",)) -> list:
    """Write the report to ``outdir`` in the requested formats.

    Returns the list of files written.  OSError propagates to the caller
    (the CLI maps it to its I/O exit code).
    """
    os.makedirs(outdir, exist_ok=True)
    written = []
    if "json" in formats:
        path = os.path.join(outdir, "report.json")
        payload = {
            "schema": SCHEMA_VERSION,
            "body": _jsonify(report.body),
            "timing": _jsonify(report.timing),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
        written.append(path)
    csv_paths = {}
    if "csv" in formats or "gnuplot" in formats:
        for name, table in _iter_tables(report.body):
            path = os.path.join(outdir, f"{name}.csv")
            _write_csv(path, table)
            csv_paths[name] = path
            written.append(path)
    if "gnuplot" in formats:
        script = [_GNUPLOT_HEADER]
        for name, path in csv_paths.items():
            rel = os.path.basename(path)
            png = rel.replace(".csv", ".png")
            if name.endswith("_pi") or name.endswith("_p"):
                script.append(_GNUPLOT_CLUSTER.format(csv=rel, png=png))
            elif "theta" in name:
                script.append(_GNUPLOT_THETA.format(csv=rel, png=png))
        path = os.path.join(outdir, "report.gp")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(script))
        written.append(path)
    return written
