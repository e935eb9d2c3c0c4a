"""Declarative scenario files driving pairing runs from the command line.

A scenario is a TOML document, schema version 1:

    version = 1                   # required, must be 1
    mode = "sheaf"                # or "foliation"
    name = "..."                  # optional, defaults to the file stem
    description = "..."           # optional

    [manifold]
    dim = 2                       # ambient complex dimension n

    [cover]
    boxes = [[[-1,-1,-1,-1], [1,1,1,1]]]   # per chart: [lo, hi], each a
    margin = 0.25                           # 2n-vector (x1,y1,...,xn,yn)

    [[charts]]                    # one per cover box, same order
    name = "U0"                   # optional
    ranks = [1, 2, 1]             # sheaf mode: resolution ranks
    maps = [ ... ]                # maps[k][i][j]: holomorphic strings
    generators = ["z1", "2*z2"]   # foliation mode: vector field(s)
    metrics = [ ... ]             # optional: per level [] or a matrix
    connection = "trivial"        # or "metric"
    torsion_free = true           # foliation + metric connection only
    sections = ["z1", "z2"]       # optional cutoff sections, holomorphic

    [[glue]]                      # optional chain isos (two-chart edges)
    charts = [0, 1]
    matrices = [[["1"]], [["z1"]]]   # per level: matrix of strings
    pad_src = [[1, 1]]            # optional [level, rank] paddings
    pad_tgt = []

    [run]
    phi = ["e1", "e2", "e1^2"]    # symmetric polynomials in e_1, e_2, ...
    epsilon = [0.05, 0.0375]      # strictly decreasing positive ladder
    chi = "default"               # optional: default | steep | wide
    qmax = 2                      # optional cap on the nerve degree

    [quadrature]                  # optional; defaults shown
    points = 4
    coarse = 3
    axis_depth = 6
    pad = 1.6
    chunk = 4096
    base_splits = 2
    max_cells = 60000

    [[tests]]                     # compactly supported test forms
    name = "bump"                 # optional
    box = [[-0.9,-0.9], [0.9,0.9]]
    coeff = "1"                   # may use abs2(...) and conj(...)
    margin = 0.25                 # optional
    dz = [2]                      # optional 1-based differential indices
    dzbar = [2]

    [cycle]                       # optional declared cycle components
    [[cycle.points]]
    at = [0.0, 0.0]               # 2n reals (x1,y1,...)
    multiplicity = 1
    [[cycle.planes]]
    axis = 1                      # component {z_axis = 0}, 1-based

    [[expected]]                  # optional reference targets
    phi = "e1"
    test = "bump"
    oracle = "point"              # point | plane | foliation | value
    value = 1.0                   # required for oracle = "value"
    rtol = 0.05                   # optional tolerances: pass if
    atol = 0.0                    # |got - want| <= atol + rtol*|want|
    source = "hand computation"   # provenance note, free text

Field expression strings use the variables z1..zn, the operators
+ - * / (division by constants only), integer powers via ^ or **,
numeric literals including 1j, and the calls abs2(.) and conj(.).
Slots that must stay holomorphic (maps, generators, glue matrices,
sections) reject abs2 and conj.

parse_scenario collects every validation problem it can find and
raises a single ScenarioError listing all of them; unknown keys are
errors anywhere in the document.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field as dc_field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:          # pragma: no cover
    import tomli as tomllib

import numpy as np

from . import fields as F
from . import complexes as C
from .cechgreen import ChartData, Cover, IsoSpec, SimplicialFamily
from .forms import GradedForm
from .residues import PairingRule, TestForm


# ---------------------------------------------------------------------------
# field expression strings


class FieldExprError(ValueError):
    pass


_CALLS = ("abs2", "conj")


def parse_field(src: str, n: int, holomorphic: bool = False,
                where: str = "") -> F.Field:
    """Compile an expression string over z1..zn into a Field.

    holomorphic=True rejects abs2 and conj, for slots that must stay
    polynomial in the coordinates themselves.
    """
    label = where or repr(src)

    def fail(msg: str):
        raise FieldExprError(f"{label}: {msg}")

    if not isinstance(src, str) or not src.strip():
        fail("expected a nonempty expression string")
    try:
        tree = ast.parse(src.replace("^", "**").strip(), mode="eval")
    except SyntaxError as exc:
        fail(f"syntax error: {exc.msg}")

    def const_of(node):
        if isinstance(node, ast.Constant) and \
                isinstance(node.value, (int, float, complex)) and \
                not isinstance(node.value, bool):
            return complex(node.value)
        if isinstance(node, ast.UnaryOp) and \
                isinstance(node.op, (ast.USub, ast.UAdd)):
            v = const_of(node.operand)
            if v is not None:
                return -v if isinstance(node.op, ast.USub) else v
        return None

    def build(node) -> F.Field:
        v = const_of(node)
        if v is not None:
            return F.Const(v)
        if isinstance(node, ast.Name):
            name = node.id
            if len(name) > 1 and name[0] == "z" and name[1:].isdigit():
                k = int(name[1:])
                if 1 <= k <= n:
                    return F.ZVar(k - 1)
                fail(f"variable {name} out of range for dimension {n}")
            fail(f"unknown name {name!r} (coordinates are z1..z{n})")
        if isinstance(node, ast.BinOp):
            op = node.op
            if isinstance(op, ast.Add):
                return F.fadd(build(node.left), build(node.right))
            if isinstance(op, ast.Sub):
                return F.fsub(build(node.left), build(node.right))
            if isinstance(op, ast.Mult):
                return F.fmul(build(node.left), build(node.right))
            if isinstance(op, ast.Div):
                c = const_of(node.right)
                if c is None or c == 0:
                    fail("division is only allowed by nonzero constants")
                return F.fscale(1.0 / c, build(node.left))
            if isinstance(op, ast.Pow):
                c = const_of(node.right)
                if c is None or c.imag != 0 or c.real != int(c.real) \
                        or c.real < 0:
                    fail("exponents must be nonnegative integer literals")
                k = int(c.real)
                if k == 0:
                    return F.ONE
                base = build(node.left)
                return F.fmul(*([base] * k))
            fail(f"operator {type(op).__name__} is not allowed")
        if isinstance(node, ast.UnaryOp):
            if isinstance(node.op, ast.USub):
                return F.fscale(-1.0, build(node.operand))
            if isinstance(node.op, ast.UAdd):
                return build(node.operand)
            fail(f"operator {type(node.op).__name__} is not allowed")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or \
                    node.func.id not in _CALLS:
                fail("only abs2(...) and conj(...) calls are allowed")
            if holomorphic:
                fail(f"{node.func.id} is not allowed in this slot: it must "
                     f"be holomorphic in z1..z{n}")
            if len(node.args) != 1 or node.keywords:
                fail(f"{node.func.id} takes exactly one positional argument")
            inner = build(node.args[0])
            return F.abs2(inner) if node.func.id == "abs2" \
                else F.fconj(inner)
        fail(f"unsupported syntax: {type(node).__name__}")

    return build(tree.body)


# ---------------------------------------------------------------------------
# scenario model


class ScenarioError(ValueError):
    """Carries every validation problem found in one parse."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__(
            "invalid scenario:\n  " + "\n  ".join(self.errors))


@dataclass
class TestSpec:
    name: str
    lo: tuple
    hi: tuple
    coeff: str
    margin: float
    dz: tuple
    dzbar: tuple


@dataclass
class ExpectedSpec:
    phi: str
    test: str
    oracle: str
    value: complex | None
    rtol: float
    atol: float
    source: str


@dataclass
class CycleSpec:
    points: list      # (at: complex n-vector, multiplicity: int)
    planes: list      # axis ints, 1-based


@dataclass
class Scenario:
    """Validated scenario: raw data plus builders for the run objects."""

    path: str
    name: str
    description: str
    version: int
    mode: str
    n: int
    boxes: list
    margin: float
    chart_specs: list
    glue_specs: list
    phis: list
    eps_values: list
    chi_name: str
    qmax: int | None
    quad: dict
    test_specs: list
    cycle: CycleSpec
    expected: list
    raw: dict = dc_field(repr=False, default_factory=dict)

    # -- builders -----------------------------------------------------------

    def cover(self) -> Cover:
        return Cover(self.boxes, n=self.n, margin_fraction=self.margin)

    def family(self, chi_name: str | None = None) -> SimplicialFamily:
        charts = [self._chart_data(spec) for spec in self.chart_specs]
        isos = {}
        for gs in self.glue_specs:
            a, b = gs["charts"]
            mats = [[[parse_field(e, self.n, holomorphic=True)
                      for e in row] for row in mat]
                    for mat in gs["matrices"]]
            isos[(a, b)] = IsoSpec(
                mats, pad_src=gs["pad_src"], pad_tgt=gs["pad_tgt"])
        window = C.CHI_WINDOWS[chi_name or self.chi_name]
        return SimplicialFamily(
            self.cover(), charts,
            kind="foliation" if self.mode == "foliation" else "sheaf",
            mode="iso" if self.glue_specs else "global",
            isos=isos or None, chi_window=window)

    def _chart_data(self, spec) -> ChartData:
        n = self.n
        maps = [[[parse_field(e, n, holomorphic=True) for e in row]
                 for row in mat] for mat in spec["maps"]]
        metrics = None
        if spec["metrics"] is not None:
            metrics = [
                None if not lvl else
                [[parse_field(e, n) for e in row] for row in lvl]
                for lvl in spec["metrics"]]
        cx = C.BundleComplex(n, spec["ranks"], maps, metrics=metrics,
                             name=spec["name"])
        sections = None
        if spec["sections"] is not None:
            sections = [parse_field(s, n, holomorphic=True)
                        for s in spec["sections"]]
        conn = "metric" if spec["connection"] == "metric" else None
        return ChartData(cx, connection=conn, sections=sections,
                         name=spec["name"])

    def rule(self) -> PairingRule:
        q = self.quad
        return PairingRule(
            npts=q["points"], coarse=q["coarse"],
            axis_depth=q["axis_depth"], pad=q["pad"], chunk=q["chunk"],
            base_splits=q["base_splits"], max_cells=q["max_cells"])

    def test_forms(self) -> dict:
        out = {}
        for ts in self.test_specs:
            coeff = parse_field(ts.coeff, self.n,
                                where=f"tests[{ts.name}].coeff")
            key = (ts.dz, ts.dzbar, ())
            form = GradedForm(self.n, 0, {key: coeff})
            out[ts.name] = TestForm(form, ts.lo, ts.hi, margin=ts.margin)
        return out


_TOP_KEYS = {"version", "name", "description", "mode", "manifold", "cover",
             "charts", "glue", "run", "quadrature", "tests", "cycle",
             "expected"}
_CHART_KEYS = {"name", "ranks", "maps", "generators", "metrics",
               "connection", "torsion_free", "sections"}
_GLUE_KEYS = {"charts", "matrices", "pad_src", "pad_tgt"}
_RUN_KEYS = {"phi", "epsilon", "chi", "qmax"}
_QUAD_KEYS = {"points", "coarse", "axis_depth", "pad", "chunk",
              "base_splits", "max_cells"}
_QUAD_DEFAULTS = {"points": 4, "coarse": 3, "axis_depth": 6, "pad": 1.6,
                  "chunk": 4096, "base_splits": 2, "max_cells": 60000}
_TEST_KEYS = {"name", "box", "coeff", "margin", "dz", "dzbar"}
_EXPECTED_KEYS = {"phi", "test", "oracle", "value", "rtol", "atol",
                  "source"}
_ORACLES = ("point", "plane", "foliation", "value")


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _num_list(x, length=None) -> bool:
    return (isinstance(x, list) and all(_is_num(v) for v in x)
            and (length is None or len(x) == length))


def _str_matrix(x, rows=None, cols=None) -> bool:
    if not isinstance(x, list) or (rows is not None and len(x) != rows):
        return False
    return all(isinstance(r, list)
               and (cols is None or len(r) == cols)
               and all(isinstance(e, str) for e in r) for r in x)


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file; raise ScenarioError with every
    problem found, or return the validated Scenario."""
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError([f"TOML syntax: {exc}"])

    errors: list[str] = []

    def err(msg: str):
        errors.append(msg)

    def reject_unknown(table: dict, allowed, where: str):
        for k in table:
            if k not in allowed:
                err(f"{where}: unknown key {k!r}")

    reject_unknown(raw, _TOP_KEYS, "top level")

    version = raw.get("version")
    if version != 1:
        err(f"version: must be 1, got {version!r}")
    mode = raw.get("mode")
    if mode not in ("sheaf", "foliation"):
        err(f"mode: must be 'sheaf' or 'foliation', got {mode!r}")
        mode = "sheaf"
    name = raw.get("name", path.stem)
    if not isinstance(name, str):
        err("name: must be a string")
        name = path.stem
    description = raw.get("description", "")
    if not isinstance(description, str):
        err("description: must be a string")
        description = ""

    # manifold
    n = 0
    man = raw.get("manifold")
    if not isinstance(man, dict):
        err("manifold: required table with key 'dim'")
    else:
        reject_unknown(man, {"dim"}, "manifold")
        dim = man.get("dim")
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
            err(f"manifold.dim: must be a positive integer, got {dim!r}")
        else:
            n = dim

    # cover
    boxes: list = []
    margin = 0.25
    cov = raw.get("cover")
    if not isinstance(cov, dict):
        err("cover: required table with key 'boxes'")
    else:
        reject_unknown(cov, {"boxes", "margin"}, "cover")
        bs = cov.get("boxes")
        if not isinstance(bs, list) or not bs:
            err("cover.boxes: required nonempty list of [lo, hi] pairs")
        elif n:
            for i, b in enumerate(bs):
                ok = (isinstance(b, list) and len(b) == 2
                      and _num_list(b[0], 2 * n) and _num_list(b[1], 2 * n)
                      and all(h > l for l, h in zip(b[0], b[1])))
                if not ok:
                    err(f"cover.boxes[{i}]: expected [lo, hi] with two "
                        f"{2 * n}-vectors of numbers, hi > lo")
                else:
                    boxes.append((tuple(map(float, b[0])),
                                  tuple(map(float, b[1]))))
        if "margin" in cov:
            m = cov["margin"]
            if not _is_num(m) or not (0.0 < m <= 0.5):
                err(f"cover.margin: must be a number in (0, 0.5], got {m!r}")
            else:
                margin = float(m)

    def check_field(src, holo: bool, where: str):
        if not isinstance(src, str):
            err(f"{where}: expected an expression string, got "
                f"{type(src).__name__}")
            return
        try:
            parse_field(src, n, holomorphic=holo, where=where)
        except FieldExprError as exc:
            err(str(exc))

    # charts
    chart_specs: list = []
    charts = raw.get("charts")
    if not isinstance(charts, list) or not charts:
        err("charts: at least one [[charts]] table is required")
        charts = []
    if boxes and charts and len(charts) != len(boxes):
        err(f"charts: {len(charts)} chart(s) for {len(boxes)} cover "
            "box(es); these must match one-to-one")
    for ci, ch in enumerate(charts):
        where = f"charts[{ci}]"
        if not isinstance(ch, dict):
            err(f"{where}: expected a table")
            continue
        reject_unknown(ch, _CHART_KEYS, where)
        cname = ch.get("name", f"U{ci}")
        if not isinstance(cname, str):
            err(f"{where}.name: must be a string")
            cname = f"U{ci}"

        spec = {"name": cname, "ranks": None, "maps": None, "metrics": None,
                "connection": "trivial", "sections": None}

        has_gen = "generators" in ch
        has_res = "ranks" in ch or "maps" in ch
        if mode == "sheaf":
            if has_gen:
                err(f"{where}.generators: only foliation scenarios take "
                    "vector-field generators; sheaf charts use ranks/maps")
            if "ranks" not in ch or "maps" not in ch:
                err(f"{where}: sheaf charts require both 'ranks' and 'maps'")
        else:
            if has_gen and has_res:
                err(f"{where}: give either 'generators' or ranks/maps, "
                    "not both")
            if not has_gen and not has_res:
                err(f"{where}: foliation charts require 'generators' or "
                    "an explicit ranks/maps presentation")

        ranks = ch.get("ranks")
        maps = ch.get("maps")
        if has_gen and mode == "foliation":
            gens = ch["generators"]
            if isinstance(gens, list) and gens and \
                    all(isinstance(g, str) for g in gens):
                gens = [gens]
            ok = (isinstance(gens, list) and gens
                  and all(isinstance(vf, list) and len(vf) == n
                          and all(isinstance(g, str) for g in vf)
                          for vf in gens))
            if not ok:
                err(f"{where}.generators: expected one or more vector "
                    f"fields, each a list of {n} expression strings")
            else:
                for vi, vf in enumerate(gens):
                    for gi, g in enumerate(vf):
                        check_field(g, True,
                                    f"{where}.generators[{vi}][{gi}]")
                ranks = [n, len(gens)]
                maps = [[[gens[j][i] for j in range(len(gens))]
                         for i in range(n)]]
        if ranks is not None and maps is not None and not has_gen:
            if not (isinstance(ranks, list) and len(ranks) >= 2
                    and all(isinstance(r, int) and not isinstance(r, bool)
                            and r >= 1 for r in ranks)):
                err(f"{where}.ranks: expected a list of at least two "
                    "positive integers")
                ranks = None
            elif not isinstance(maps, list) or len(maps) != len(ranks) - 1:
                err(f"{where}.maps: expected {len(ranks) - 1} matrices for "
                    f"{len(ranks)} levels")
                ranks = None
            else:
                for k, mat in enumerate(maps):
                    if not _str_matrix(mat, rows=ranks[k], cols=ranks[k + 1]):
                        err(f"{where}.maps[{k}]: expected a "
                            f"{ranks[k]} x {ranks[k + 1]} matrix of "
                            "expression strings")
                        ranks = None
                        break
                    for i, row in enumerate(mat):
                        for j, e in enumerate(row):
                            check_field(e, True,
                                        f"{where}.maps[{k}][{i}][{j}]")
            if ranks is not None and mode == "foliation" and ranks[0] != n:
                err(f"{where}.ranks: foliation resolutions must start at "
                    f"the tangent rank {n}, got {ranks[0]}")
                ranks = None
        if ranks is not None and maps is not None:
            spec["ranks"] = list(ranks)
            spec["maps"] = maps

        if "metrics" in ch:
            mets = ch["metrics"]
            if spec["ranks"] is None:
                pass    # ranks already reported; cannot shape-check
            elif not isinstance(mets, list) or \
                    len(mets) != len(spec["ranks"]):
                err(f"{where}.metrics: expected one entry per level "
                    f"({len(spec['ranks']) if spec['ranks'] else '?'}), "
                    "each [] or a square matrix of expression strings")
            else:
                parsed_ok = True
                for k, lvl in enumerate(mets):
                    if lvl == []:
                        continue
                    r = spec["ranks"][k]
                    if not _str_matrix(lvl, rows=r, cols=r):
                        err(f"{where}.metrics[{k}]: expected [] or a "
                            f"{r} x {r} matrix of expression strings")
                        parsed_ok = False
                        continue
                    for i, row in enumerate(lvl):
                        for j, e in enumerate(row):
                            check_field(e, False,
                                        f"{where}.metrics[{k}][{i}][{j}]")
                if parsed_ok:
                    spec["metrics"] = mets

        conn = ch.get("connection", "trivial")
        if conn not in ("trivial", "metric"):
            err(f"{where}.connection: must be 'trivial' or 'metric', "
                f"got {conn!r}")
            conn = "trivial"
        tf = ch.get("torsion_free", False)
        if not isinstance(tf, bool):
            err(f"{where}.torsion_free: must be a boolean")
            tf = False
        if tf and mode != "foliation":
            err(f"{where}.torsion_free: only meaningful for foliation "
                "charts")
        if mode == "foliation" and conn == "metric" and not tf:
            err(f"{where}.connection: a metric base connection on a "
                "foliation chart needs torsion_free = true asserting "
                "that its (1,0)-connection on the tangent level is "
                "torsion-free; the default trivial connection always is")
        if conn == "metric" and spec["metrics"] is None and "metrics" in ch:
            pass    # metrics errors already reported
        elif conn == "metric" and "metrics" not in ch:
            err(f"{where}.connection: 'metric' requires a metrics entry")
        spec["connection"] = conn

        if "sections" in ch:
            secs = ch["sections"]
            if not (isinstance(secs, list) and secs
                    and all(isinstance(s, str) for s in secs)):
                err(f"{where}.sections: expected a nonempty list of "
                    "expression strings")
            else:
                for si, s in enumerate(secs):
                    check_field(s, True, f"{where}.sections[{si}]")
                spec["sections"] = list(secs)

        chart_specs.append(spec)

    # glue
    glue_specs: list = []
    glue = raw.get("glue", [])
    if not isinstance(glue, list):
        err("glue: expected an array of tables")
        glue = []
    for gi, g in enumerate(glue):
        where = f"glue[{gi}]"
        if not isinstance(g, dict):
            err(f"{where}: expected a table")
            continue
        reject_unknown(g, _GLUE_KEYS, where)
        pair_ok = True
        pair = g.get("charts")
        if not (isinstance(pair, list) and len(pair) == 2
                and all(isinstance(a, int) and not isinstance(a, bool)
                        for a in pair)
                and pair[0] != pair[1]):
            err(f"{where}.charts: expected two distinct chart indices")
            pair_ok = False
        elif charts and not all(0 <= a < len(charts) for a in pair):
            err(f"{where}.charts: indices out of range for "
                f"{len(charts)} chart(s)")
            pair_ok = False
        mats = g.get("matrices")
        if not isinstance(mats, list) or not mats or \
                not all(_str_matrix(m) for m in mats):
            err(f"{where}.matrices: expected one matrix of expression "
                "strings per level")
            pair_ok = False
        else:
            for k, mat in enumerate(mats):
                for i, row in enumerate(mat):
                    for j, e in enumerate(row):
                        check_field(e, True,
                                    f"{where}.matrices[{k}][{i}][{j}]")

        def pads_of(key):
            pads = g.get(key, [])
            if not isinstance(pads, list) or not all(
                    isinstance(p, list) and len(p) == 2
                    and all(isinstance(v, int) and not isinstance(v, bool)
                            and v >= 0 for v in p) and p[1] >= 1
                    for p in pads):
                err(f"{where}.{key}: expected a list of [level, rank] "
                    "pairs of nonnegative integers")
                return []
            return [tuple(p) for p in pads]

        ps, pt = pads_of("pad_src"), pads_of("pad_tgt")
        if pair_ok:
            glue_specs.append({"charts": (pair[0], pair[1]),
                               "matrices": mats, "pad_src": ps,
                               "pad_tgt": pt})

    # run
    phis: list = []
    eps_values: list = []
    chi_name = "default"
    qmax = None
    run = raw.get("run")
    if not isinstance(run, dict):
        err("run: required table with keys 'phi' and 'epsilon'")
    else:
        reject_unknown(run, _RUN_KEYS, "run")
        ph = run.get("phi")
        if not (isinstance(ph, list) and ph
                and all(isinstance(p, str) for p in ph)):
            err("run.phi: required nonempty list of symmetric polynomial "
                "strings like 'e1' or 'e1^2 + 2*e2'")
        else:
            for p in ph:
                try:
                    C.SymmetricPolynomial.parse(p)
                except (ValueError, IndexError):
                    err(f"run.phi: cannot parse {p!r}")
                else:
                    phis.append(p)
        eps = run.get("epsilon")
        if not _num_list(eps) or not eps:
            err("run.epsilon: required nonempty list of numbers")
        elif any(e <= 0 for e in eps) or \
                any(a <= b for a, b in zip(eps, eps[1:])):
            err("run.epsilon: values must be positive and strictly "
                "decreasing")
        else:
            eps_values = [float(e) for e in eps]
        if "chi" in run:
            cn = run["chi"]
            if cn not in C.CHI_WINDOWS:
                err(f"run.chi: must be one of "
                    f"{sorted(C.CHI_WINDOWS)}, got {cn!r}")
            else:
                chi_name = cn
        if "qmax" in run:
            qm = run["qmax"]
            if not isinstance(qm, int) or isinstance(qm, bool) or qm < 0:
                err("run.qmax: must be a nonnegative integer")
            else:
                qmax = qm

    # quadrature
    quad = dict(_QUAD_DEFAULTS)
    q = raw.get("quadrature", {})
    if not isinstance(q, dict):
        err("quadrature: expected a table")
        q = {}
    reject_unknown(q, _QUAD_KEYS, "quadrature")
    for k in _QUAD_KEYS & set(q):
        v = q[k]
        if k == "pad":
            if not _is_num(v) or v < 1.0:
                err(f"quadrature.pad: must be a number >= 1, got {v!r}")
                continue
            quad[k] = float(v)
        else:
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                err(f"quadrature.{k}: must be a positive integer, "
                    f"got {v!r}")
                continue
            quad[k] = v
    if quad["points"] < 2:
        err("quadrature.points: need at least 2 points per axis")

    # tests
    test_specs: list = []
    tests = raw.get("tests")
    if not isinstance(tests, list) or not tests:
        err("tests: at least one [[tests]] table is required")
        tests = []
    seen_names: set = set()
    for ti, t in enumerate(tests):
        where = f"tests[{ti}]"
        if not isinstance(t, dict):
            err(f"{where}: expected a table")
            continue
        reject_unknown(t, _TEST_KEYS, where)
        tname = t.get("name", f"test{ti}")
        if not isinstance(tname, str) or not tname:
            err(f"{where}.name: must be a nonempty string")
            tname = f"test{ti}"
        if tname in seen_names:
            err(f"{where}.name: duplicate test name {tname!r}")
        seen_names.add(tname)
        box = t.get("box")
        lo = hi = None
        if n and not (isinstance(box, list) and len(box) == 2
                      and _num_list(box[0], 2 * n)
                      and _num_list(box[1], 2 * n)
                      and all(h > l for l, h in zip(box[0], box[1]))):
            err(f"{where}.box: expected [lo, hi] with two {2 * n}-vectors "
                "of numbers, hi > lo")
        elif n:
            lo = tuple(map(float, box[0]))
            hi = tuple(map(float, box[1]))
        coeff = t.get("coeff", "1")
        check_field(coeff, False, f"{where}.coeff")
        tmargin = t.get("margin", 0.25)
        if not _is_num(tmargin) or not (0.0 < tmargin < 0.5):
            err(f"{where}.margin: must be a number in (0, 0.5)")
            tmargin = 0.25

        def diff_idx(key):
            ix = t.get(key, [])
            if not isinstance(ix, list) or not all(
                    isinstance(v, int) and not isinstance(v, bool)
                    and 1 <= v <= n for v in ix) or \
                    len(set(ix)) != len(ix) or sorted(ix) != ix:
                err(f"{where}.{key}: expected strictly increasing indices "
                    f"in 1..{n}")
                return ()
            return tuple(ix)

        dz, dzbar = diff_idx("dz"), diff_idx("dzbar")
        if lo is not None:
            test_specs.append(TestSpec(tname, lo, hi, coeff,
                                       float(tmargin), dz, dzbar))

    # cycle
    cyc_points: list = []
    cyc_planes: list = []
    cyc = raw.get("cycle", {})
    if not isinstance(cyc, dict):
        err("cycle: expected a table")
        cyc = {}
    reject_unknown(cyc, {"points", "planes"}, "cycle")
    for pi, p in enumerate(cyc.get("points", []) or []):
        where = f"cycle.points[{pi}]"
        if not isinstance(p, dict):
            err(f"{where}: expected a table")
            continue
        reject_unknown(p, {"at", "multiplicity"}, where)
        at = p.get("at")
        mult = p.get("multiplicity", 1)
        if n and not _num_list(at, 2 * n):
            err(f"{where}.at: expected {2 * n} real coordinates "
                "(x1, y1, ...)")
            continue
        if not isinstance(mult, int) or isinstance(mult, bool) or mult < 1:
            err(f"{where}.multiplicity: must be a positive integer")
            continue
        zc = np.asarray(at, float)
        cyc_points.append((zc[0::2] + 1j * zc[1::2], mult))
    for pi, p in enumerate(cyc.get("planes", []) or []):
        where = f"cycle.planes[{pi}]"
        if not isinstance(p, dict):
            err(f"{where}: expected a table")
            continue
        reject_unknown(p, {"axis"}, where)
        ax = p.get("axis")
        if not isinstance(ax, int) or isinstance(ax, bool) or \
                not (1 <= ax <= max(n, 1)):
            err(f"{where}.axis: expected an index in 1..{n}")
            continue
        cyc_planes.append(ax)

    # expected
    expected: list = []
    exp = raw.get("expected", [])
    if not isinstance(exp, list):
        err("expected: expected an array of tables")
        exp = []
    for ei, e in enumerate(exp):
        where = f"expected[{ei}]"
        if not isinstance(e, dict):
            err(f"{where}: expected a table")
            continue
        reject_unknown(e, _EXPECTED_KEYS, where)
        ph = e.get("phi")
        if not isinstance(ph, str) or ph not in phis:
            err(f"{where}.phi: must name one of the run.phi entries, "
                f"got {ph!r}")
            continue
        tn = e.get("test")
        if not isinstance(tn, str) or tn not in seen_names:
            err(f"{where}.test: must name one of the declared tests, "
                f"got {tn!r}")
            continue
        orc = e.get("oracle")
        if orc not in _ORACLES:
            err(f"{where}.oracle: must be one of {_ORACLES}, got {orc!r}")
            continue
        val = e.get("value")
        cval = None
        if val is not None:
            if _is_num(val):
                cval = complex(float(val))
            elif _num_list(val, 2):
                cval = complex(val[0], val[1])
            else:
                err(f"{where}.value: expected a number or [re, im]")
                continue
        if orc == "value" and cval is None:
            err(f"{where}.value: required when oracle = 'value'")
            continue
        if orc == "point" and not cyc_points:
            err(f"{where}.oracle: 'point' needs cycle.points entries")
            continue
        if orc == "plane" and not cyc_planes:
            err(f"{where}.oracle: 'plane' needs cycle.planes entries")
            continue
        if orc == "foliation" and mode != "foliation":
            err(f"{where}.oracle: 'foliation' only applies to foliation "
                "scenarios")
            continue
        rtol = e.get("rtol", 0.05)
        if not _is_num(rtol) or rtol < 0:
            err(f"{where}.rtol: must be a nonnegative number")
            continue
        atol = e.get("atol", 0.0)
        if not _is_num(atol) or atol < 0:
            err(f"{where}.atol: must be a nonnegative number")
            continue
        if rtol == 0 and atol == 0:
            err(f"{where}: rtol and atol cannot both be zero")
            continue
        source = e.get("source", "")
        if not isinstance(source, str):
            err(f"{where}.source: must be a string")
            continue
        expected.append(ExpectedSpec(ph, tn, orc, cval, float(rtol),
                                     float(atol), source))

    if errors:
        raise ScenarioError(errors)

    return Scenario(
        path=str(path), name=name, description=description,
        version=version, mode=mode, n=n, boxes=boxes, margin=margin,
        chart_specs=chart_specs, glue_specs=glue_specs, phis=phis,
        eps_values=eps_values, chi_name=chi_name, qmax=qmax, quad=quad,
        test_specs=test_specs,
        cycle=CycleSpec(cyc_points, cyc_planes), expected=expected,
        raw=raw)
