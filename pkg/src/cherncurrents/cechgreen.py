"""Covers, partitions, cochains over ordered nerves, and glued families.

The pieces that turn per-chart connection data into global forms:

* ``Cover``: axis-aligned open boxes in chart coordinates with a smooth
  subordinate partition of unity (plateau bumps, exact zeros outside each
  box, exact sum 1 on the domain);
* ``Cochain``: mixed-degree cochains over the ordered nerve (tuples with
  repetition allowed) valued in chart forms, with the operators delta,
  d, nabla = delta + (-1)^q d, the weighted contraction K that prepends
  a partition index, and the collapse sweep that pushes a cochain down
  to a single global form;
* ``SimplicialFamily``: per-chart complexes and regularized connections
  glued over nerve simplices by linear interpolation (optionally through
  chain isomorphisms and elementary padding on two-chart overlaps), the
  fiber-integrated class cochain, and the collapsed global form;
* ``transgression``: the prism homotopy between two families over the
  product cover, giving eta with d eta = Phi(second) - Phi(first).

Sign conventions are pinned by the fiber Stokes identity
pi_*(d w) = (-1)^p d(pi_* w) + sum_j (-1)^j (face_j)_* w, which makes the
class cochain a nabla-cocycle; the property tests certify every operator
identity numerically.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import fields as F
from . import forms as FM
from .complexes import (
    BundleComplex, Connection, SymmetricPolynomial, _perm_sign,
    corrected_connection, cutoff_field, interpolate_connections, phi_form,
    regularized_connection)
from .fields import Field, fadd, fmul, frecip, fscale, fsub, gated_mul
from .forms import GradedForm, fm_add, fm_from_fields, fm_wedge


class GluingDataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# covers and partitions


class Cover:
    """Open boxes in the 2n real chart coordinates with a smooth partition.

    Each box gets a raw plateau bump: exactly 1 on the core, rolling off
    to exactly 0 at the faces over a margin of ``margin_fraction`` times
    the side length. Faces on the hull of the union are clamped (no
    rolloff). psi_alpha = raw_alpha / sum(raw), gated to an exact zero
    outside the box, so sum(psi) == 1 at every point of the union.

    Partition fields are only meaningful on the union of the boxes;
    evaluation elsewhere returns exact zeros (for gated quantities) or
    garbage that no consumer should read.
    """

    def __init__(self, boxes, n: int, margin_fraction: float = 0.25,
                 psis=None):
        self.n = n
        self.boxes = [(np.asarray(lo, float), np.asarray(hi, float))
                      for lo, hi in boxes]
        for lo, hi in self.boxes:
            if lo.size != 2 * n or hi.size != 2 * n or not np.all(hi > lo):
                raise ValueError("box bounds must be 2n-vectors with hi > lo")
        self.size = len(self.boxes)
        if psis is not None:
            self.psis = list(psis)
        else:
            hull_lo = np.min([lo for lo, _ in self.boxes], axis=0)
            hull_hi = np.max([hi for _, hi in self.boxes], axis=0)
            raws = []
            for lo, hi in self.boxes:
                factors = []
                for a in range(2 * n):
                    m = margin_fraction * (hi[a] - lo[a])
                    if lo[a] > hull_lo[a] + 1e-12:
                        factors.append(
                            F.SmoothStep(F.Coord(a), lo[a], lo[a] + m))
                    if hi[a] < hull_hi[a] - 1e-12:
                        factors.append(fsub(
                            F.ONE,
                            F.SmoothStep(F.Coord(a), hi[a] - m, hi[a])))
                raws.append(fmul(*factors) if factors else F.ONE)
            total = fadd(*raws)
            self.psis = [gated_mul(raw, frecip(total)) for raw in raws]
        self._dpsis: dict = {}
        self._tuples: dict = {}

    def dpsi(self, alpha: int) -> GradedForm:
        gf = self._dpsis.get(alpha)
        if gf is None:
            gf = FM.d_of_field(self.psis[alpha], self.n)
            self._dpsis[alpha] = gf
        return gf

    def overlap(self, tup):
        lo = np.max([self.boxes[a][0] for a in tup], axis=0)
        hi = np.min([self.boxes[a][1] for a in tup], axis=0)
        if np.all(lo < hi - 1e-12):
            return lo, hi
        return None

    def tuples(self, q: int):
        """Ordered (q+1)-tuples (repetition allowed) with open overlap."""
        got = self._tuples.get(q)
        if got is None:
            got = [t for t in itertools.product(range(self.size), repeat=q + 1)
                   if self.overlap(t) is not None]
            self._tuples[q] = got
        return got

    def hull(self):
        return (np.min([lo for lo, _ in self.boxes], axis=0),
                np.max([hi for _, hi in self.boxes], axis=0))

    def sample_points(self, tup, count: int, rng, shrink: float = 0.9):
        """Random complex points in the (shrunk) overlap of the tuple."""
        lo, hi = self.overlap(tup)
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * shrink
        u = rng.uniform(-1.0, 1.0, size=(count, lo.size))
        pts = mid + u * half
        return pts[:, 0::2] + 1j * pts[:, 1::2]


# ---------------------------------------------------------------------------
# cochains


class Cochain:
    """Mixed-degree cochain over the ordered nerve, valued in chart forms.

    comps[q] maps (q+1)-tuples of chart indices to GradedForms on the
    chart (p = 0). Components are extensions by zero: a form attached to
    a tuple is only meaningful on the tuple's overlap, and every operator
    that moves data between tuples gates it by the partition.
    """

    def __init__(self, cover: Cover, n: int, comps=None):
        self.cover = cover
        self.n = n
        self.comps: dict[int, dict[tuple, GradedForm]] = {}
        if comps:
            for q, comp in comps.items():
                clean = {tuple(t): f for t, f in comp.items()
                         if not f.is_structurally_zero()}
                if clean:
                    self.comps[q] = clean

    def get(self, q: int, tup) -> GradedForm:
        f = self.comps.get(q, {}).get(tuple(tup))
        return f if f is not None else GradedForm.zero(self.n)

    def degrees(self):
        return sorted(self.comps)

    def add(self, other: "Cochain") -> "Cochain":
        out: dict[int, dict] = {}
        for q in set(self.comps) | set(other.comps):
            a = self.comps.get(q, {})
            b = other.comps.get(q, {})
            comp = dict(a)
            for tup, f in b.items():
                comp[tup] = comp[tup] + f if tup in comp else f
            out[q] = comp
        return Cochain(self.cover, self.n, out)

    def scale(self, c) -> "Cochain":
        return Cochain(self.cover, self.n, {
            q: {t: f.scale(c) for t, f in comp.items()}
            for q, comp in self.comps.items()})

    def sub(self, other: "Cochain") -> "Cochain":
        return self.add(other.scale(-1.0))

    def delta(self) -> "Cochain":
        out: dict[int, dict] = {}
        for q, comp in self.comps.items():
            tgt = out.setdefault(q + 1, {})
            for tup in self.cover.tuples(q + 1):
                acc = None
                for j in range(len(tup)):
                    f = comp.get(tup[:j] + tup[j + 1:])
                    if f is None:
                        continue
                    if j % 2:
                        f = f.scale(-1.0)
                    acc = f if acc is None else acc + f
                if acc is not None:
                    tgt[tup] = acc
        return Cochain(self.cover, self.n, out)

    def dform(self, part: str = "all") -> "Cochain":
        return Cochain(self.cover, self.n, {
            q: {t: f.exterior_d(part) for t, f in comp.items()}
            for q, comp in self.comps.items()})

    def nabla(self) -> "Cochain":
        out = {q: dict(comp) for q, comp in self.delta().comps.items()}
        for q, comp in self.comps.items():
            tgt = out.setdefault(q, {})
            for tup, f in comp.items():
                df = f.exterior_d()
                if q % 2:
                    df = df.scale(-1.0)
                if df.is_structurally_zero():
                    continue
                tgt[tup] = tgt[tup] + df if tup in tgt else df
        return Cochain(self.cover, self.n, out)

    def _K_of(self, comp: dict, q: int) -> dict:
        out = {}
        for tup in self.cover.tuples(q - 1):
            acc = None
            for a in range(self.cover.size):
                f = comp.get((a,) + tup)
                if f is None:
                    continue
                t = f.gated_mul_field(self.cover.psis[a])
                acc = t if acc is None else acc + t
            if acc is not None:
                out[tup] = acc
        return out

    def contract(self) -> "Cochain":
        """K: prepend a partition index; delta K + K delta = id for q >= 1."""
        out: dict[int, dict] = {}
        for q, comp in self.comps.items():
            if q == 0:
                continue
            out[q - 1] = self._K_of(comp, q)
        return Cochain(self.cover, self.n, out)

    def global_sum(self) -> GradedForm:
        """S: partition-weighted sum of the degree-0 component."""
        acc = GradedForm.zero(self.n)
        comp = self.comps.get(0, {})
        for b in range(self.cover.size):
            f = comp.get((b,))
            if f is not None:
                acc = acc + f.gated_mul_field(self.cover.psis[b])
        return acc

    def collapse(self) -> GradedForm:
        """Sweep the top degree down with d K and return the weighted sum.

        For a nabla-cocycle the result is the glued global form; applied
        to an arbitrary cochain gamma it satisfies
        d collapse(gamma) = collapse(nabla gamma) exactly.
        """
        if not self.comps:
            return GradedForm.zero(self.n)
        T = max(self.comps)
        G = dict(self.comps.get(T, {}))
        for q in range(T, 0, -1):
            KG = self._K_of(G, q)
            sign = -((-1.0) ** (q - 1))
            G = dict(self.comps.get(q - 1, {}))
            for tup, f in KG.items():
                df = f.exterior_d()
                if sign < 0:
                    df = df.scale(-1.0)
                G[tup] = G[tup] + df if tup in G else df
        acc = GradedForm.zero(self.n)
        for b in range(self.cover.size):
            f = G.get((b,))
            if f is not None:
                acc = acc + f.gated_mul_field(self.cover.psis[b])
        return acc


# ---------------------------------------------------------------------------
# cover combinations and the prism homotopy


def product_cover(cov1: Cover, cov2: Cover):
    """Pairwise intersections with the product partition (sum is still 1)."""
    if cov1.n != cov2.n:
        raise ValueError("covers live on different chart dimensions")
    pairs, boxes, psis = [], [], []
    for a in range(cov1.size):
        for b in range(cov2.size):
            lo = np.maximum(cov1.boxes[a][0], cov2.boxes[b][0])
            hi = np.minimum(cov1.boxes[a][1], cov2.boxes[b][1])
            if np.all(lo < hi - 1e-12):
                pairs.append((a, b))
                boxes.append((lo, hi))
                psis.append(fmul(cov1.psis[a], cov2.psis[b]))
    return Cover(boxes, cov1.n, psis=psis), pairs


def disjoint_union_cover(cov1: Cover, cov2: Cover) -> Cover:
    """Both box lists over the same domain; partitions halved to sum to 1."""
    if cov1.n != cov2.n:
        raise ValueError("covers live on different chart dimensions")
    boxes = list(cov1.boxes) + list(cov2.boxes)
    psis = [fscale(0.5, p) for p in list(cov1.psis) + list(cov2.psis)]
    return Cover(boxes, cov1.n, psis=psis)


def refine_cochain(gamma: Cochain, cover12: Cover, assign) -> Cochain:
    """Pull back along the chart assignment (refined index -> source index)."""
    out: dict[int, dict] = {}
    for q, comp in gamma.comps.items():
        tgt = {}
        for tup in cover12.tuples(q):
            f = comp.get(tuple(assign(i) for i in tup))
            if f is not None:
                tgt[tup] = f
        if tgt:
            out[q] = tgt
    return Cochain(cover12, gamma.n, out)


def prism_homotopy(gamma: Cochain, cover12: Cover, rho1, rho2) -> Cochain:
    """h with nabla h + h nabla = (pullback by rho2) - (pullback by rho1).

    (h gamma)_{i0..i_{q-1}} = sum_k (-1)^k
        gamma_{rho1 i0, .., rho1 ik, rho2 ik, .., rho2 i_{q-1}}.
    """
    out: dict[int, dict] = {}
    for q, comp in gamma.comps.items():
        if q == 0:
            continue
        tgt = out.setdefault(q - 1, {})
        for tup in cover12.tuples(q - 1):
            acc = None
            for k in range(len(tup)):
                src = (tuple(rho1(i) for i in tup[:k + 1]) +
                       tuple(rho2(i) for i in tup[k:]))
                f = comp.get(src)
                if f is None:
                    continue
                if k % 2:
                    f = f.scale(-1.0)
                acc = f if acc is None else acc + f
            if acc is not None:
                tgt[tup] = acc
    return Cochain(cover12, gamma.n, out)


# ---------------------------------------------------------------------------
# chart data, padding, regulators


class ChartData:
    """One chart's resolution: complex, base connection, cutoff sections.

    connection: None for the trivial base, the string "metric" for the
    metric-compatible one, or an explicit Connection (p = 0, unpadded
    charts only). sections: scalar fields whose |.|^2 sum drives the
    cutoff; defaults to the maximal minors of the level-1 map.
    """

    def __init__(self, cx: BundleComplex, connection=None, sections=None,
                 name: str = ""):
        self.cx = cx
        self.connection = connection
        self.sections = sections if sections is not None else \
            default_sections(cx)
        self.name = name


def _field_det(mat) -> Field:
    terms = []
    for perm in itertools.permutations(range(len(mat))):
        t = fmul(*[mat[i][perm[i]] for i in range(len(mat))])
        terms.append(t if _perm_sign(perm) > 0 else fscale(-1.0, t))
    return fadd(*terms)


def default_sections(cx: BundleComplex):
    """Maximal minors of the level-1 map; [1] for a map-free complex."""
    if cx.length == 0:
        return [F.ONE]
    rho = cx.map_rank(1)
    if rho == 0:
        return [F.ONE]
    mat = cx.maps[0]
    minors = []
    for rows in itertools.combinations(range(len(mat)), rho):
        for cols in itertools.combinations(range(len(mat[0])), rho):
            minors.append(_field_det([[mat[r][c] for c in cols]
                                      for r in rows]))
    return minors


def global_regulator(cover: Cover, charts, window=(0.5, 2.0)) -> Field:
    """chi_eps = sum_beta psi_beta chi(|s^beta|^2 / eps), an exact plateau
    zero near the union of the singular sets."""
    lo, hi = window
    terms = []
    for b, cd in enumerate(charts):
        terms.append(gated_mul(cover.psis[b],
                               cutoff_field(cd.sections, lo, hi)))
    return fadd(*terms)


def pad_complex(cx: BundleComplex, pads) -> BundleComplex:
    """Block sum with elementary pieces id: O^r at (level, level-1).

    pads: iterable of (level, rank) with 1 <= level <= cx.length. Block
    order at level k is [original | id-sources at k | id-targets at k+1].
    """
    pads = list(pads or [])
    if not pads:
        return cx
    N = cx.length
    a = [0] * (N + 2)
    for level, r in pads:
        if not 1 <= level <= N:
            raise ValueError("pad level outside the complex")
        a[level] += r
    ranks = [cx.ranks[k] + a[k] + a[k + 1] for k in range(N + 1)]
    maps = []
    for k in range(1, N + 1):
        rows, cols = ranks[k - 1], ranks[k]
        m = [[F.ZERO for _ in range(cols)] for _ in range(rows)]
        for i in range(cx.ranks[k - 1]):
            for j in range(cx.ranks[k]):
                m[i][j] = cx.maps[k - 1][i][j]
        # id block: sources at level k land in the targets slot of k-1
        row0 = cx.ranks[k - 1] + a[k - 1]
        col0 = cx.ranks[k]
        for i in range(a[k]):
            m[row0 + i][col0 + i] = F.ONE
        maps.append(m)
    metrics = []
    for k in range(N + 1):
        hn = cx.metric_node(k)
        if hn is None:
            metrics.append(None)
            continue
        r = ranks[k]
        hm = [[F.ZERO for _ in range(r)] for _ in range(r)]
        for i in range(cx.ranks[k]):
            for j in range(cx.ranks[k]):
                hm[i][j] = hn.fields[i][j]
        for i in range(cx.ranks[k], r):
            hm[i][i] = F.ONE
        metrics.append(hm)
    map_ranks = [cx.map_rank(k) + a[k] for k in range(1, N + 1)]
    return BundleComplex(cx.n, ranks, maps, metrics=metrics,
                         map_ranks=map_ranks, name=cx.name)


class IsoSpec:
    """Chain isomorphism data for a two-chart overlap.

    matrices[k] maps level k of the (padded) source-chart model into the
    (padded) target-chart frame; pad_src / pad_tgt are elementary paddings
    applied to the two complexes before the isomorphism.
    """

    def __init__(self, matrices, pad_src=None, pad_tgt=None):
        self.matrices = matrices
        self.pad_src = list(pad_src or [])
        self.pad_tgt = list(pad_tgt or [])


def conjugate_connection(conn: Connection, g_levels) -> Connection:
    """Transport theta from the target frame back through G: model -> target:
    theta-tilde = G^-1 theta G + G^-1 dG."""
    out = []
    for gk, th in zip(g_levels, conn.thetas):
        if not gk:
            out.append(th)
            continue
        node = F.FieldMatrixNode(gk)
        ginv = F.MatInverse(node).entries()
        gf = fm_from_fields(gk, conn.n, conn.p)
        ginvf = fm_from_fields(ginv, conn.n, conn.p)
        dg = [[FM.d_of_field(f, conn.n, conn.p) for f in row] for row in gk]
        out.append(fm_add(fm_wedge(ginvf, fm_wedge(th, gf)),
                          fm_wedge(ginvf, dg)))
    return Connection(out, conn.n, conn.p)


# ---------------------------------------------------------------------------
# glued simplicial families


class SimplicialFamily:
    """Per-chart regularized connections glued over the nerve.

    mode "global": every chart carries the same complex (their own base
    connections and metrics may differ); a nerve simplex gets the linear
    interpolation of its vertex connections.

    mode "iso": charts carry their own resolutions; simplices touching at
    most two distinct charts use the supplied chain isomorphism (plus
    elementary padding) to transport the second chart's connection into
    the first chart's model frame. Simplices with three or more distinct
    charts need user data and are reported by validate().
    """

    def __init__(self, cover: Cover, charts, kind: str = "sheaf",
                 mode: str = "global", isos=None, chi: Field | None = None,
                 chi_window=(0.5, 2.0), regularized: bool = True,
                 fiber_degree: int = 7):
        if len(charts) != cover.size:
            raise ValueError("one ChartData per cover box is required")
        self.cover = cover
        self.charts = list(charts)
        self.kind = kind
        self.mode = mode
        self.isos = dict(isos or {})
        self.regularized = regularized
        self.fiber_degree = fiber_degree
        self.chi_window = tuple(chi_window)
        self.n = charts[0].cx.n
        if any(cd.cx.n != self.n for cd in charts):
            raise ValueError("charts live on different ambient dimensions")
        if chi is not None:
            self.chi = chi
        elif regularized:
            self.chi = global_regulator(cover, charts, chi_window)
        else:
            self.chi = None
        self._conns: dict = {}
        self._transported: dict = {}
        self._families: dict = {}

    # -- per-chart and per-edge connections ----------------------------------

    def _effective(self, a: int, pad) -> BundleComplex:
        return pad_complex(self.charts[a].cx, pad)

    def chart_connection(self, a: int, pad=()) -> tuple:
        """(effective complex, theta-hat Connection) for chart a."""
        key = (a, tuple(pad))
        got = self._conns.get(key)
        if got is None:
            cx = self._effective(a, pad)
            base = self.charts[a].connection
            if isinstance(base, Connection):
                if pad:
                    raise GluingDataError(
                        "explicit base connections cannot be padded")
                conn0 = base
            elif base == "metric":
                conn0 = Connection.from_metrics(cx)
            elif base is None:
                conn0 = Connection.trivial(cx)
            else:
                raise ValueError(f"unknown base connection spec {base!r}")
            if self.regularized:
                conn = regularized_connection(cx, conn0, self.chi, self.kind)
            else:
                conn = corrected_connection(cx, conn0, self.kind)
            got = (cx, conn)
            self._conns[key] = got
        return got

    def _edge_spec(self, a: int, b: int) -> IsoSpec:
        spec = self.isos.get((a, b))
        if spec is not None:
            return spec
        back = self.isos.get((b, a))
        if back is not None:
            inv = [F.MatInverse(F.FieldMatrixNode(gk)).entries()
                   for gk in back.matrices]
            spec = IsoSpec(inv, pad_src=back.pad_tgt, pad_tgt=back.pad_src)
            self.isos[(a, b)] = spec
            return spec
        raise GluingDataError(
            f"no chain isomorphism between charts {a} and {b}")

    def _transported_connection(self, a: int, b: int) -> Connection:
        """Chart b's connection in chart a's (padded) model frame."""
        key = (a, b)
        got = self._transported.get(key)
        if got is None:
            spec = self._edge_spec(a, b)
            _, conn_b = self.chart_connection(b, spec.pad_tgt)
            got = conjugate_connection(conn_b, spec.matrices)
            self._transported[key] = got
        return got

    def family(self, tup) -> tuple:
        """(complex, interpolated Connection with p = len(tup) - 1)."""
        tup = tuple(tup)
        got = self._families.get(tup)
        if got is not None:
            return got
        distinct = []
        for a in tup:
            if a not in distinct:
                distinct.append(a)
        if self.mode == "global" or len(distinct) == 1:
            cx, _ = self.chart_connection(tup[0])
            conns = [self.chart_connection(a)[1] for a in tup]
        elif len(distinct) == 2:
            a, b = distinct
            spec = self._edge_spec(a, b)
            cx, conn_a = self.chart_connection(a, spec.pad_src)
            conn_b = self._transported_connection(a, b)
            conns = [conn_a if c == a else conn_b for c in tup]
        else:
            raise GluingDataError(
                f"simplex {tup} touches charts {distinct}; gluing data for "
                "three or more distinct charts must be supplied by the user")
        got = (cx, interpolate_connections(conns))
        self._families[tup] = got
        return got

    # -- class cochains and global forms --------------------------------------

    def class_cochain(self, phi, qmax: int | None = None,
                      fiber_degree: int | None = None) -> Cochain:
        if isinstance(phi, str):
            phi = SymmetricPolynomial.parse(phi)
        deg = self.fiber_degree if fiber_degree is None else fiber_degree
        qcap = phi.degree if qmax is None else qmax
        comps: dict[int, dict] = {}
        for q in range(qcap + 1):
            comp = {}
            for tup in self.cover.tuples(q):
                cx, conn = self.family(tup)
                form = phi_form(cx, conn, phi)
                comp[tup] = form if q == 0 else form.fiber_integrate(deg)
            if comp:
                comps[q] = comp
        return Cochain(self.cover, self.n, comps)

    def global_form(self, phi, qmax: int | None = None) -> GradedForm:
        return self.class_cochain(phi, qmax=qmax).collapse()

    # -- validation ------------------------------------------------------------

    def validate(self, rng=None, count: int = 6, tol: float = 1e-8):
        """Check gluing data; returns a list of problem descriptions."""
        rng = rng or np.random.default_rng(0)
        msgs = []
        if self.mode == "global":
            first = self.charts[0].cx
            for i, cd in enumerate(self.charts[1:], start=1):
                if cd.cx.ranks != first.ranks:
                    msgs.append(
                        f"global mode: chart {i} ranks {cd.cx.ranks} differ "
                        f"from chart 0 ranks {first.ranks}")
            return msgs
        seen_missing = set()
        for q in (1, 2):
            for tup in self.cover.tuples(q):
                distinct = tuple(dict.fromkeys(tup))
                if len(distinct) > 2 and distinct not in seen_missing:
                    seen_missing.add(distinct)
                    msgs.append(
                        f"charts {distinct} meet; supply gluing data for "
                        "this multi-chart overlap")
                if len(distinct) == 2:
                    a, b = distinct
                    if (a, b) not in self.isos and (b, a) not in self.isos:
                        if (a, b) not in seen_missing:
                            seen_missing.add((a, b))
                            msgs.append(
                                f"missing chain isomorphism for overlap "
                                f"({a}, {b})")
        for (a, b), spec in list(self.isos.items()):
            if self.cover.overlap((a, b)) is None:
                continue
            z = self.cover.sample_points((a, b), count, rng)
            ctx = F.EvalContext.from_points(z, n=self.n)
            cxa = self._effective(a, spec.pad_src)
            cxb = self._effective(b, spec.pad_tgt)
            gs = spec.matrices
            if len(gs) != cxa.length + 1:
                msgs.append(f"iso ({a}, {b}): expected {cxa.length + 1} "
                            f"level matrices, got {len(gs)}")
                continue
            for k in range(1, cxa.length + 1):
                lhs = fm_wedge(fm_from_fields(cxb.maps[k - 1], self.n),
                               fm_from_fields(gs[k], self.n))
                rhs = fm_wedge(fm_from_fields(gs[k - 1], self.n),
                               fm_from_fields(cxa.maps[k - 1], self.n))
                defect = FM.fm_max_abs(
                    [[x - y for x, y in zip(rx, ry)]
                     for rx, ry in zip(lhs, rhs)], ctx)
                if defect > tol:
                    msgs.append(
                        f"iso ({a}, {b}) is not a chain map at level {k}: "
                        f"defect {defect:.2e}")
            for k, gk in enumerate(gs):
                if not gk:
                    continue
                vals = np.stack(
                    [np.stack([f.values(ctx) for f in row], axis=-1)
                     for row in gk], axis=-2)
                smin = np.linalg.svd(vals, compute_uv=False).min()
                if smin < 1e-6:
                    msgs.append(
                        f"iso ({a}, {b}) level {k} is near-singular on the "
                        f"overlap (smallest singular value {smin:.2e})")
        return msgs


# ---------------------------------------------------------------------------
# transgression


def transgression(fam1: SimplicialFamily, fam2: SimplicialFamily, phi,
                  qmax: int | None = None):
    """eta with d eta = Phi(fam2) - Phi(fam1); returns (eta, g1, g2).

    Both families must be global mode with the same cutoff data (the
    combined family reuses fam1's regulator), covering the same domain.
    """
    if fam1.mode != "global" or fam2.mode != "global":
        raise GluingDataError("transgression needs global-mode families")
    if isinstance(phi, str):
        phi = SymmetricPolynomial.parse(phi)
    union = disjoint_union_cover(fam1.cover, fam2.cover)
    famW = SimplicialFamily(
        union, list(fam1.charts) + list(fam2.charts), kind=fam1.kind,
        mode="global", chi=fam1.chi, regularized=fam1.regularized,
        fiber_degree=fam1.fiber_degree)
    checks = famW.class_cochain(phi, qmax=qmax)
    cover12, pairs = product_cover(fam1.cover, fam2.cover)
    off = fam1.cover.size
    eta_cochain = prism_homotopy(
        checks, cover12,
        lambda i: pairs[i][0], lambda i: pairs[i][1] + off)
    eta = eta_cochain.collapse()
    g1 = fam1.global_form(phi, qmax=qmax)
    g2 = fam2.global_form(phi, qmax=qmax)
    return eta, g1, g2
