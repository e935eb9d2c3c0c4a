"""Command-line driver: run scenarios, verify invariant suites, print
oracle values.

    cherncurrents run scenarios/point-sheaf-1d.toml --out report.json
    cherncurrents verify scenarios/koszul-2d.toml --suite cech
    cherncurrents oracle scenarios/linear-foliation-2d.toml

Reports are deterministic JSON (volatile values only under the "timing"
key) plus one CSV ladder per (phi, test) pairing; see report.py for the
byte-stability contract. Exit status: 0 when everything passed, 1 when
a comparison or check failed, 2 for an invalid scenario or usage.

The --threads flag (default from CHERNCURRENTS_THREADS) is advisory:
pairings use a fixed-shape summation regardless, so reports do not
depend on it; it is echoed under "timing" with the other
environment-specific values.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import complexes as C
from . import fields as F
from .fields import EvalContext
from .report import (REPORT_VERSION, c2pair, comparison_entry, result_entry,
                     scenario_echo, slug, summarize_checks, write_csv,
                     write_json)
from .residues import (TestForm, fundamental_factor,
                       grothendieck_point_residue, hyperplane_pairing,
                       residue_pairing)
from .scenario import Scenario, ScenarioError, parse_scenario
from .verify import SUITE_NAMES, run_suites

THREADS_ENV = "CHERNCURRENTS_THREADS"


# ---------------------------------------------------------------------------
# oracle values


def _field_on_axis(g, at, axis: int, n: int):
    """g restricted to the line through `at` along coordinate `axis`,
    as a vectorized function of the offset."""
    def f(w):
        w = np.asarray(w, complex)
        pts = np.tile(at, (w.size, 1)).astype(complex)
        pts[:, axis] += w.ravel()
        ctx = EvalContext.from_points(pts, n=n)
        return g.values(ctx).reshape(w.shape)
    return f


def _separation_defect(g, at, axis: int, n: int, r: float = 0.35) -> float:
    """How much g varies along the OTHER coordinate's circle; zero when
    g depends only on z_axis near the point."""
    th = 2.0 * np.pi * np.arange(8) / 8
    pts = np.tile(at, (8, 1)).astype(complex)
    pts[:, axis] += r
    pts[:, 1 - axis] += 0.3 * np.exp(1j * th)
    vals = g.values(EvalContext.from_points(pts, n=n))
    return float(np.abs(vals - vals[0]).max())


def _foliation_oracle(sc: Scenario, phi: str, test: TestForm) -> complex:
    if sc.n != 2:
        raise ValueError(
            "the contour-integral oracle is implemented for dimension 2")
    spec0 = sc.chart_specs[0]
    mat = spec0["maps"][0]
    if spec0["ranks"][1] != 1:
        raise ValueError(
            "the contour-integral oracle needs a single vector field")
    from .scenario import parse_field
    gens = [parse_field(mat[i][0], 2, holomorphic=True,
                        where=f"charts[0].maps[0][{i}][0]")
            for i in range(2)]
    if not sc.cycle.points:
        raise ValueError("declare the singular points under cycle.points")
    dfields = [[F.d_dz(gens[i], j) for j in range(2)] for i in range(2)]
    total = 0.0 + 0.0j
    for at, mult in sc.cycle.points:
        at = np.asarray(at, complex)
        for i in range(2):
            defect = _separation_defect(gens[i], at, i, 2)
            if defect > 1e-9:
                raise ValueError(
                    f"component {i + 1} of the vector field varies by "
                    f"{defect:.2e} across the other coordinate near the "
                    "point; the contour oracle needs a separable field")
        f1 = _field_on_axis(gens[0], at, 0, 2)
        f2 = _field_on_axis(gens[1], at, 1, 2)

        def jac(a, b):
            sh = np.broadcast(a, b).shape
            aa = np.broadcast_to(a, sh).ravel()
            bb = np.broadcast_to(b, sh).ravel()
            pts = np.stack([at[0] + aa, at[1] + bb], axis=1)
            ctx = EvalContext.from_points(pts, n=2)
            out = np.empty((aa.size, 2, 2), complex)
            for i in range(2):
                for j in range(2):
                    out[:, i, j] = dfields[i][j].values(ctx)
            return out.reshape(sh + (2, 2))

        res = grothendieck_point_residue(f1, f2, jac, phi)
        total += mult * res * complex(test.value_at(at[None, :])[0])
    return total


def oracle_value(sc: Scenario, spec, tests: dict) -> complex:
    """Independent reference value for one expected-entry."""
    test = tests[spec.test]
    if spec.oracle == "value":
        return spec.value
    if spec.oracle == "point":
        total = 0.0 + 0.0j
        factor = fundamental_factor(sc.n)
        for at, mult in sc.cycle.points:
            at = np.asarray(at, complex)
            total += factor * mult * complex(test.value_at(at[None, :])[0])
        return total
    if spec.oracle == "plane":
        total = 0.0 + 0.0j
        for ax in sc.cycle.planes:
            total += hyperplane_pairing(test, axis=ax - 1)
        return total
    if spec.oracle == "foliation":
        return _foliation_oracle(sc, spec.phi, test)
    raise ValueError(f"unknown oracle kind {spec.oracle!r}")


# ---------------------------------------------------------------------------
# subcommands


def _echo_config(sc: Scenario, args) -> dict:
    return {
        "phi": list(sc.phis),
        "epsilon": list(sc.eps_values),
        "chi": sc.chi_name,
        "qmax": sc.qmax,
        "quadrature": dict(sc.quad),
        "seed": args.seed,
        "tolerance_scale": args.tolerance_scale,
    }


def _timing(t0: float, threads: int) -> dict:
    return {
        "started_unix": t0,
        "seconds": time.time() - t0,
        "threads": threads,
    }


def _apply_overrides(sc: Scenario, args) -> Scenario:
    if args.epsilon_ladder:
        try:
            eps = [float(x) for x in args.epsilon_ladder.split(",") if x]
        except ValueError:
            raise ScenarioError(
                ["--epsilon-ladder: expected comma-separated numbers"])
        if not eps or any(e <= 0 for e in eps) or \
                any(a <= b for a, b in zip(eps, eps[1:])):
            raise ScenarioError(
                ["--epsilon-ladder: values must be positive and strictly "
                 "decreasing"])
        sc.eps_values = eps
    if args.chi:
        if args.chi not in C.CHI_WINDOWS:
            raise ScenarioError(
                [f"--chi: must be one of {sorted(C.CHI_WINDOWS)}"])
        sc.chi_name = args.chi
    return sc


def cmd_run(sc: Scenario, args) -> int:
    t0 = time.time()
    fam = sc.family()
    tests = sc.test_forms()
    rule = sc.rule()
    out_path = Path(args.out or f"{sc.name}-report.json")

    results = []
    reports = {}
    for phi in sc.phis:
        for tname, test in tests.items():
            rep = residue_pairing(fam, phi, test, sc.eps_values,
                                  qmax=sc.qmax, rule=rule)
            reports[(phi, tname)] = rep
            csv_name = f"{out_path.stem}-{slug(phi)}-{slug(tname)}.csv"
            results.append(result_entry(phi, tname, rep, csv_name))
            ex = rep.extrapolation
            print(f"{sc.name}: <{phi}, {tname}> = {ex.value.real:+.6f}"
                  f"{ex.value.imag:+.6f}j  unc {ex.uncertainty:.2e}"
                  f"  flag {ex.flag}"
                  + (f"  rate {ex.rate:.2f}" if ex.rate else ""))

    comparisons = []
    for spec in sc.expected:
        want = oracle_value(sc, spec, tests)
        got = reports[(spec.phi, spec.test)].value
        entry = comparison_entry(spec, got, want, args.tolerance_scale)
        comparisons.append(entry)
        print(f"{sc.name}: oracle[{spec.oracle}] <{spec.phi}, {spec.test}>"
              f" expected {want.real:+.6f}{want.imag:+.6f}j"
              f"  |diff| {entry['difference']:.2e}"
              f" {'<=' if entry['pass'] else '>'}"
              f" tol {entry['tolerance']:.2e}:"
              f" {'PASS' if entry['pass'] else 'FAIL'}")

    doc = {
        "report_version": REPORT_VERSION,
        "kind": "run",
        "scenario": scenario_echo(sc),
        "config": _echo_config(sc, args),
        "results": results,
        "oracles": comparisons,
        "timing": _timing(t0, args.threads),
    }
    write_json(doc, out_path)
    for entry in results:
        rep = reports[(entry["phi"], entry["test"])]
        write_csv(entry["ladder"], out_path.parent / entry["csv"])
    print(f"report: {out_path}")
    return 0 if all(c["pass"] for c in comparisons) else 1


def cmd_verify(sc: Scenario, args) -> int:
    t0 = time.time()
    names = SUITE_NAMES if args.suite == "all" else (args.suite,)
    checks = run_suites(sc, names, seed=args.seed,
                        tolerance_scale=args.tolerance_scale)
    for c in checks:
        print(f"[{'PASS' if c['pass'] else 'FAIL'}] {c['suite']}/"
              f"{c['name']}: defect {c['defect']:.3e}"
              f" {'<=' if c['pass'] else '>'} tol {c['tolerance']:.1e}")
    doc = {
        "report_version": REPORT_VERSION,
        "kind": "verify",
        "scenario": scenario_echo(sc),
        "config": {"suite": args.suite, "seed": args.seed,
                   "tolerance_scale": args.tolerance_scale},
        "checks": checks,
        "summary": summarize_checks(checks),
        "timing": _timing(t0, args.threads),
    }
    out_path = Path(args.out or f"{sc.name}-verify.json")
    write_json(doc, out_path)
    s = doc["summary"]
    print(f"{s['passed']}/{s['total']} checks passed; report: {out_path}")
    return 0 if s["failed"] == 0 else 1


def cmd_oracle(sc: Scenario, args) -> int:
    t0 = time.time()
    tests = sc.test_forms()
    rows = []
    for spec in sc.expected:
        val = oracle_value(sc, spec, tests)
        rows.append({
            "phi": spec.phi,
            "test": spec.test,
            "oracle": spec.oracle,
            "source": spec.source,
            "value": c2pair(val),
        })
        print(f"{sc.name}: oracle[{spec.oracle}] <{spec.phi}, {spec.test}>"
              f" = {val.real:+.9f}{val.imag:+.9f}j  ({spec.source})")
    if not rows:
        print(f"{sc.name}: no expected entries declare oracle targets")
    doc = {
        "report_version": REPORT_VERSION,
        "kind": "oracle",
        "scenario": scenario_echo(sc),
        "oracles": rows,
        "timing": _timing(t0, args.threads),
    }
    out_path = Path(args.out or f"{sc.name}-oracle.json")
    write_json(doc, out_path)
    print(f"report: {out_path}")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("scenario", help="path to a scenario TOML file")
    p.add_argument("--out", help="JSON report path (CSV ladders are "
                                 "written next to it)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for sampled checks (default 0)")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get(THREADS_ENV, "1")),
                   help="advisory worker count; results do not depend "
                        f"on it (default ${THREADS_ENV} or 1)")
    p.add_argument("--tolerance-scale", type=float, default=1.0,
                   help="multiply every tolerance by this factor")
    p.add_argument("--epsilon-ladder",
                   help="comma-separated override of run.epsilon")
    p.add_argument("--chi", help="cutoff window override: "
                                 + "|".join(sorted(C.CHI_WINDOWS)))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cherncurrents",
        description="Pair regularized characteristic-class currents of "
                    "resolved sheaves and foliations with test forms, "
                    "verify the supporting identities, and print "
                    "independent oracle values.")
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a scenario's pairings")
    _add_common(p_run)
    p_ver = sub.add_parser("verify", help="run an invariant suite")
    _add_common(p_ver)
    p_ver.add_argument("--suite", default="all",
                       choices=list(SUITE_NAMES) + ["all"],
                       help="which suite to run (default all)")
    p_orc = sub.add_parser("oracle",
                           help="print the independent reference values")
    _add_common(p_orc)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = parse_scenario(args.scenario)
        sc = _apply_overrides(sc, args)
        if args.command == "run":
            return cmd_run(sc, args)
        if args.command == "verify":
            return cmd_verify(sc, args)
        return cmd_oracle(sc, args)
    except ScenarioError as exc:
        for msg in exc.errors:
            print(f"error: {msg}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":      # pragma: no cover
    sys.exit(main())
