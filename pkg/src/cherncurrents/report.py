"""Report serialization: deterministic JSON plus plot-ready CSV ladders.

The JSON document is the authoritative record of a run. Byte-level
determinism contract: identical inputs (scenario, seed, flags) produce
identical bytes EXCEPT under the single top-level key "timing", which
holds every volatile value (wall-clock timestamps, durations). Consumers
comparing reports should drop that key; nothing volatile may be stored
anywhere else.

CSV ladders carry one row per regularization rung with the fixed header
eps,re,im,quadrature_error so they can be plotted without the JSON.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

REPORT_VERSION = 1


def c2pair(v) -> list:
    """Complex -> [re, im] with exact float round-trip."""
    v = complex(v)
    return [v.real, v.imag]


def slug(text: str) -> str:
    """File-name-safe tag for phi strings and test names."""
    out = text.replace("^", "pow").replace("*", "x").replace(" ", "")
    out = re.sub(r"[^A-Za-z0-9._-]", "-", out)
    return out or "x"


def ladder_rows(report) -> list:
    """Rung dicts for a ResidueReport, deterministic field order."""
    rows = []
    for r in report.rows:
        rows.append({
            "eps": r.eps,
            "value": c2pair(r.value),
            "quadrature_error": r.error,
            "points": r.points,
            "cells": r.cells,
        })
    return rows


def result_entry(phi: str, test: str, rep, csv_name: str | None) -> dict:
    ex = rep.extrapolation
    entry = {
        "phi": phi,
        "test": test,
        "value": c2pair(ex.value),
        "uncertainty": ex.uncertainty,
        "rate": ex.rate,
        "fit_residual": ex.residual,
        "flag": ex.flag,
        "ladder": ladder_rows(rep),
    }
    if csv_name is not None:
        entry["csv"] = csv_name
    return entry


def comparison_entry(spec, got: complex, want: complex,
                     tolerance_scale: float = 1.0) -> dict:
    """Oracle-vs-measured row; the cited tolerance is what decided it."""
    tol = (spec.atol + spec.rtol * abs(want)) * tolerance_scale
    diff = abs(got - want)
    return {
        "phi": spec.phi,
        "test": spec.test,
        "oracle": spec.oracle,
        "source": spec.source,
        "expected": c2pair(want),
        "measured": c2pair(got),
        "difference": diff,
        "tolerance": tol,
        "tolerance_rule": (
            f"atol {spec.atol:g} + rtol {spec.rtol:g} * |expected|"
            + (f", scaled by {tolerance_scale:g}"
               if tolerance_scale != 1.0 else "")),
        "pass": bool(diff <= tol),
    }


def check_entry(suite: str, name: str, defect: float,
                tolerance: float) -> dict:
    """One verification row: always cites the tolerance that judged it."""
    return {
        "suite": suite,
        "name": name,
        "defect": float(defect),
        "tolerance": float(tolerance),
        "pass": bool(defect <= tolerance),
    }


def summarize_checks(checks: list) -> dict:
    passed = sum(1 for c in checks if c["pass"])
    return {"total": len(checks), "passed": passed,
            "failed": len(checks) - passed}


def scenario_echo(sc) -> dict:
    return {
        "name": sc.name,
        "path": sc.path,
        "description": sc.description,
        "mode": sc.mode,
        "dim": sc.n,
        "charts": len(sc.chart_specs),
        "glued_edges": len(sc.glue_specs),
    }


def write_json(doc: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(doc, sort_keys=True, indent=2, allow_nan=True)
    path.write_text(text + "\n")


def write_csv(rows: list, path) -> None:
    """Ladder rows (dicts from ladder_rows) -> eps,re,im,quadrature_error."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["eps,re,im,quadrature_error"]
    for r in rows:
        re_, im_ = r["value"]
        lines.append(f"{r['eps']!r},{re_!r},{im_!r},"
                     f"{r['quadrature_error']!r}")
    path.write_text("\n".join(lines) + "\n")


def strip_volatile(doc: dict) -> dict:
    """The document minus its 'timing' key, for byte-stable comparison."""
    return {k: v for k, v in doc.items() if k != "timing"}
