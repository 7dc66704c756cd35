"""First variations of the mixed-curvature invariants under block-adapted metric changes.

Everything is pointwise.  A variation ``g_t = g + t B`` with ``B`` supported on
one block ``D_j`` keeps all blocks mutually orthogonal, so the projectors stay
fixed and every derivative below is an explicit contraction.  Each analytic
formula has a finite-difference twin that rebuilds the full pipeline on
``g_t`` (see :func:`fd_derivative`), and the tests compare the two.

Conventions: derivatives are returned as ``(X, v)`` pairs meaning
``d/dt L = <X, B> - Div v``; frame sums are eps-weighted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from . import jets
from .connections import AffineSplit
from .expr import Expression, jet_of, parse_expression
from .geometry import ChartGeometry, GeometryError, check_metric_values
from .jets import Jet, einsum
from .multiproduct import Distribution, SplitGeometry, upsilon

__all__ = [
    "VariationError",
    "VariationFamily",
    "perturbed",
    "fd_derivative",
    "fd_derivatives",
    "relative_error",
    "metric_variation_terms",
    "statistical_variation_terms",
    "semi_symmetric_variation",
    "analytic_variation_Q",
    "analytic_variation_barQ",
    "oracle_variation_Q",
    "oracle_variation_barQ",
    "bar_q_u_gradient",
    "half_sum_q",
    "el_trace_term",
    "aggregate_variation",
    "Aggregate",
    "ELReport",
    "el_residual",
    "el_expanded_residual",
    "el_short_residual",
    "mu_matrix",
    "mu_det_exact",
    "mu_closed_form",
    "mu_dense",
    "mu_solve",
    "mixed_ricci",
    "MixedRicci",
    "einstein_residual",
    "semi_symmetric_el",
    "semi_symmetric_mixed_ricci",
    "u_criticality",
    "volume_variation_utils",
    "VARIATION_ORDER",
]

# jets of the metric must reach third order: divergence of <h, B> needs d(dg)
VARIATION_ORDER = 3


class VariationError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# families and the finite-difference oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VariationFamily:
    """``B_j = P_j^T S P_j`` (times an optional bump) for a symmetric expression array ``S``."""

    coords: tuple[str, ...]
    block: int
    S: tuple[tuple[Expression, ...], ...]
    bump: Expression | None = None

    @classmethod
    def from_strings(cls, coords, block: int, S, bump=None, params=None) -> "VariationFamily":
        coords = tuple(coords)
        n = len(coords)
        if len(S) != n or any(len(r) != n for r in S):
            raise VariationError("variation tensor must be n x n")
        parsed = tuple(tuple(e if isinstance(e, Expression) else parse_expression(e, coords, params) for e in row) for row in S)
        for i, j in itertools.combinations(range(n), 2):
            if parsed[i][j].text != parsed[j][i].text:
                raise VariationError(f"variation tensor entries ({i},{j}) and ({j},{i}) differ")
        b = None if bump is None else (bump if isinstance(bump, Expression) else parse_expression(bump, coords, params))
        return cls(coords, int(block), parsed, b)

    @classmethod
    def random(cls, coords, block: int, rng: np.random.Generator, amplitude: float = 0.5) -> "VariationFamily":
        """Trigonometric entries with random coefficients (periodic on the torus)."""
        n = len(coords)
        S = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                a, b, c = (rng.normal(size=3) * amplitude).round(4)
                u, v = rng.integers(0, n, size=2)
                S[i][j] = S[j][i] = f"{a} * sin({coords[u]}) + {b} * cos({coords[v]}) + {c}"
        return cls.from_strings(coords, block, S)

    def S_jet(self, points, order: int) -> Jet:
        pts = np.atleast_2d(points)
        cj = jets.coordinate_jets(pts, order)
        n = len(self.coords)
        S = jets.stack([jet_of(e, cj) for row in self.S for e in row], -1).reshape((len(pts), n, n))
        if self.bump is not None:
            S = S * jet_of(self.bump, cj)[..., None, None]
        return S

    def B_jet(self, sg: SplitGeometry, points) -> Jet:
        P = sg.blocks[self.block].P
        return einsum("...ab,...ax,...by->...xy", self.S_jet(points, P.order), P, P)

    def validate(self, sg: SplitGeometry, points, t_max: float, signature) -> None:
        """``g + t B`` must stay non-degenerate with the same index for ``|t| <= t_max``."""
        B = self.B_jet(sg, points).val
        g = sg.geo.g.val
        for t in (-t_max, t_max):
            check_metric_values(g + t * B, signature)


def perturbed(sg: SplitGeometry, B: Jet, t: float) -> SplitGeometry:
    """The same splitting with metric ``g + t B`` (blocks stay orthogonal)."""
    return SplitGeometry(ChartGeometry(sg.geo.g + B * t), sg.spans, validate=False)


def fd_derivatives(quantities: Mapping[object, Callable[[SplitGeometry], Jet]], sg: SplitGeometry, B: Jet, h: float = 1e-3) -> dict:
    """Richardson-extrapolated central differences of several ``q(g + tB)`` at ``t = 0``.

    The four perturbed geometries are built once and shared by all quantities.
    """
    steps = (h, -h, h / 2, -h / 2)
    geos = {t: perturbed(sg, B, t) for t in steps}
    out = {}
    for key, q in quantities.items():
        vals = {t: q(geos[t]).truncate(0).val for t in steps}
        d1 = (vals[h] - vals[-h]) / (2 * h)
        d2 = (vals[h / 2] - vals[-h / 2]) / h
        out[key] = (4 * d2 - d1) / 3
    return out


def fd_derivative(quantity: Callable[[SplitGeometry], Jet], sg: SplitGeometry, B: Jet, h: float = 1e-3) -> np.ndarray:
    """Richardson-extrapolated central difference of ``quantity(g + tB)`` at ``t = 0``."""
    return fd_derivatives({0: quantity}, sg, B, h)[0]


def relative_error(analytic, oracle, floor: float = 1e-6) -> float:
    """``max |a - o| / max(max |o|, floor)``; the floor keeps identically-zero terms meaningful."""
    a, o = np.asarray(analytic), np.asarray(oracle)
    return float(np.abs(a - o).max() / max(float(np.abs(o).max()), floor))


def _pair(geo: ChartGeometry, X: Jet, B: Jet) -> Jet:
    return geo.pair02(X, B)


def _outer(u: Jet, v: Jet, g: Jet) -> Jet:
    """``u^flat (x) v^flat``."""
    ul = einsum("...ab,...b->...a", g, u)
    vl = einsum("...ab,...b->...a", g, v)
    return einsum("...a,...b->...ab", ul, vl)


def _lower2(g: Jet, Xup: Jet) -> Jet:
    return einsum("...ap,...pq,...qb->...ab", g, Xup, g)


def _sym(X: Jet) -> Jet:
    return (X + X.T) * 0.5


# ---------------------------------------------------------------------------
# metric variation of the six quadratic invariants of a pair (D, D^perp)
# ---------------------------------------------------------------------------

METRIC_TERMS = ("h_perp", "h", "H_perp", "H", "T_perp", "T")


def _metric_quantity(name: str) -> Callable[[Distribution], Jet]:
    return {
        "h_perp": lambda d: d.complement.hh,
        "h": lambda d: d.hh,
        "H_perp": lambda d: d.complement.HH,
        "H": lambda d: d.HH,
        "T_perp": lambda d: d.complement.TT,
        "T": lambda d: d.TT,
    }[name]


def metric_variation_terms(d: Distribution, B: Jet) -> dict[str, tuple[Jet, Jet | None]]:
    """``d/dt`` of the six norms of ``(D, D^perp)`` when ``B`` lives on ``D x D``.

    Returns ``name -> (X, v)`` with ``d/dt = <X, B> - Div v`` (``v`` may be None).
    """
    geo, c = d.geo, d.complement
    gi = geo.ginv
    trB = einsum("...ab,...ab->...", B, gi)
    hB = einsum("...kab,...cd,...ac,...bd->...k", d.h, B, gi, gi)
    return {
        "h_perp": (upsilon(geo, c.h, c.h) * -0.5, None),
        "h": (d.div_h + d.flat(d.commutator_K), hB),
        "H_perp": (_outer(c.H, c.H, geo.g) * -1.0, None),
        "H": (geo.g * d.div_H[..., None, None], d.H * trB[..., None]),
        "T_perp": (upsilon(geo, c.T, c.T) * 0.5, None),
        "T": (d.flat(d.casorati_T) * 2.0, None),
    }


def _varying(sg: SplitGeometry, j: int, i: int) -> Distribution:
    """The distribution whose metric moves: ``D_j`` itself, or ``D_i^perp`` for ``i != j``."""
    return sg.blocks[j] if i == j else sg.blocks[i].complement


def _value(geo, X, v, B) -> Jet:
    out = _pair(geo, X, B).truncate(0)
    if v is not None:
        out = out - geo.div(v).truncate(0)
    return out


def analytic_variation_Q(sg: SplitGeometry, fam_or_B, points=None) -> dict[tuple[str, int], np.ndarray]:
    """All metric-variation formulas: six for ``D_j`` and six duals for every ``i != j``.

    Keys are ``(term, i)``; ``i == j`` gives the primary formulas.
    """
    B, j = _resolve_B(sg, fam_or_B, points)
    out = {}
    for i in range(sg.k):
        d = _varying(sg, j, i)
        for name, (X, v) in metric_variation_terms(d, B).items():
            out[(name, i)] = _value(sg.geo, X, v, B).val
    return out


def oracle_variation_Q(sg: SplitGeometry, fam_or_B, points=None, h: float = 1e-3) -> dict[tuple[str, int], np.ndarray]:
    """Finite-difference twin of :func:`analytic_variation_Q`."""
    B, j = _resolve_B(sg, fam_or_B, points)
    qs = {}
    for i in range(sg.k):
        for name in METRIC_TERMS:
            q = _metric_quantity(name)
            qs[(name, i)] = lambda s, q=q, i=i: q(_varying(s, j, i))
    return fd_derivatives(qs, sg, B, h)


def _resolve_B(sg, fam_or_B, points):
    if isinstance(fam_or_B, VariationFamily):
        if points is None:
            raise VariationError("points are needed to evaluate a variation family")
        return fam_or_B.B_jet(sg, points), fam_or_B.block
    B, j = fam_or_B
    return B, j


# ---------------------------------------------------------------------------
# statistical contorsion held fixed
# ---------------------------------------------------------------------------

STAT_TERMS = (
    "istar_iwedge_V",
    "tr_perp_I.tr_Istar",
    "tr_I.tr_perp_Istar",
    "theta.A",
    "theta.Tsharp",
    "theta.Tsharp_perp",
    "theta.A_perp",
    "tr(Istar-I).(H_perp-H)",
    "tr_perp(Istar-I).(H_perp-H)",
)


def _theta_pieces(a: AffineSplit, d: Distribution) -> dict[str, Jet]:
    c = d.complement
    G, Gc = d.G, c.G
    th = einsum("...kba,...kl->...lba", a.theta, a.geo.g)

    def inner(M, flip):
        spec = "...lba,...lqp,...ap,...bq->..." if flip else "...lba,...lpq,...ap,...bq->..."
        return einsum(spec, th, M, G, Gc)

    return {
        "theta.A": inner(d.A, True),
        "theta.Tsharp": inner(d.Tsharp, True),
        "theta.A_perp": inner(c.A, False),
        "theta.Tsharp_perp": inner(c.Tsharp, False),
    }


def _stat_quantity(name: str) -> Callable[[AffineSplit, Distribution], Jet]:
    tr = AffineSplit.trace_on

    def dot(a, x, y):
        return a.geo.dot(x, y)

    table = {
        "istar_iwedge_V": lambda a, d: a.restricted_pair(a.I, a.Istar, d),
        "tr_perp_I.tr_Istar": lambda a, d: dot(a, tr(a.I, d.complement), tr(a.Istar, d)),
        "tr_I.tr_perp_Istar": lambda a, d: dot(a, tr(a.I, d), tr(a.Istar, d.complement)),
        "tr(Istar-I).(H_perp-H)": lambda a, d: dot(a, tr(a.Istar - a.I, d), d.complement.H - d.H),
        "tr_perp(Istar-I).(H_perp-H)": lambda a, d: dot(a, tr(a.Istar - a.I, d.complement), d.complement.H - d.H),
    }
    if name in table:
        return table[name]
    return lambda a, d: _theta_pieces(a, d)[name]


def statistical_variation_terms(a: AffineSplit, d: Distribution) -> dict[str, Jet]:
    """``name -> X`` (0,2 tensor) with ``d/dt L = <X, B>`` for ``B`` on ``D x D`` and ``I`` fixed.

    Valid at a statistical ``I`` (``I = I* = I^wedge``); every term is algebraic in ``B``.
    """
    c = d.complement
    # algebraic in B: values suffice
    G, Gc, g, I = d.G, c.G, a.geo.g, a.I.truncate(0)
    trd, trc = a.trace_on(I, d), a.trace_on(I, c)

    def theta_own(M):  # M_b a with b in D^perp, a in D, values in D
        one = einsum("...bc,...xq,...pbm,...mcx->...pq", Gc, G, I, M) * -1.0
        two = einsum("...xy,...bc,...pbx,...qcy->...pq", G, Gc, I, M) * 2.0
        return one + two

    def theta_other(M):  # M_a b with a in D, b in D^perp, values in D^perp
        return einsum("...aq,...bc,...pbm,...mac->...pq", G, Gc, I, M) * -1.0

    W = c.H - d.H
    up = {
        "istar_iwedge_V": einsum("...pa,...qe,...bc,...kl,...kab,...lec->...pq", G, G, Gc, g, I, I) * -1.0,
        "tr_perp_I.tr_Istar": None,
        "tr_I.tr_perp_Istar": einsum("...pa,...qb,...km,...kab,...m->...pq", G, G, g, I, trc) * -1.0,
        "theta.A": theta_own(d.A),
        "theta.Tsharp": theta_own(d.Tsharp),
        "theta.A_perp": theta_other(c.A),
        "theta.Tsharp_perp": theta_other(c.Tsharp),
        "tr(Istar-I).(H_perp-H)": einsum("...xq,...pxm,...m->...pq", G, I, W) - einsum("...p,...q->...pq", trd, c.H),
        "tr_perp(Istar-I).(H_perp-H)": einsum("...p,...q->...pq", trc, c.H) * -1.0,
    }
    zero = g * 0.0
    return {k: zero if v is None else _sym(_lower2(g, v)) for k, v in up.items()}


def analytic_variation_barQ(a: AffineSplit, fam_or_B, points=None) -> dict[tuple[str, int], np.ndarray]:
    B, j = _resolve_B(a.split, fam_or_B, points)
    a = AffineSplit(a.split, a.I.truncate(0))
    out = {}
    for i in range(a.split.k):
        d = _varying(a.split, j, i)
        for name, X in statistical_variation_terms(a, d).items():
            out[(name, i)] = _pair(a.geo, X, B).truncate(0).val
    return out


def oracle_variation_barQ(a: AffineSplit, fam_or_B, points=None, h: float = 1e-3) -> dict[tuple[str, int], np.ndarray]:
    """Finite-difference twin of :func:`analytic_variation_barQ` (``I`` fixed, ``I*`` recomputed)."""
    sg = a.split
    B, j = _resolve_B(sg, fam_or_B, points)
    cache: dict[int, AffineSplit] = {}

    def aff(s):
        if id(s) not in cache:
            cache[id(s)] = AffineSplit(s, a.I.truncate(0))
        return cache[id(s)]

    qs = {}
    for i in range(sg.k):
        for name in STAT_TERMS:
            q = _stat_quantity(name)
            qs[(name, i)] = lambda s, q=q, i=i: q(aff(s), _varying(s, j, i))
    return fd_derivatives(qs, sg, B, h)


# ---------------------------------------------------------------------------
# aggregates
# ---------------------------------------------------------------------------


@dataclass
class Aggregate:
    """``d/dt sum Q = <Q_agg, B> - Div X`` and ``d/dt sum Qbar = <Qbar_agg, B> - Div Y``."""

    Q: Jet
    X: Jet
    Qbar: Jet | None = None
    Y: Jet | None = None


def _restrict(sg: SplitGeometry, j: int, X: Jet) -> Jet:
    return sg.blocks[j].restrict(_sym(X))


def _aggregate_Q(sg: SplitGeometry, j: int, B: Jet) -> tuple[Jet, Jet]:
    Qt, X = None, None
    for i in range(sg.k):
        terms = metric_variation_terms(_varying(sg, j, i), B)
        sign = {"h_perp": -1.0, "h": -1.0, "H_perp": 1.0, "H": 1.0, "T_perp": 1.0, "T": 1.0}
        part = None
        for name, s in sign.items():
            part = terms[name][0] * s if part is None else part + terms[name][0] * s
        # divergence remainders: +Div <h, B> from -<h,h>, -Div(trB H) from <H,H>
        v = terms["H"][1] - terms["h"][1]
        Qt = part if Qt is None else Qt + part
        X = v if X is None else X + v
    return _restrict(sg, j, Qt), X


def _aggregate_barQ_stat(a: AffineSplit, j: int) -> Jet:
    """Coefficient tensor of ``d/dt sum_i Qbar(D_i)`` for fixed statistical ``I``."""
    weights = {
        "tr_perp_I.tr_Istar": 1.0,
        "tr_I.tr_perp_Istar": 1.0,
        "istar_iwedge_V": -1.0,
        "tr(Istar-I).(H_perp-H)": 1.0,
        "tr_perp(Istar-I).(H_perp-H)": -1.0,
        "theta.A_perp": 1.0,
        "theta.Tsharp_perp": -1.0,
        "theta.A": 1.0,
        "theta.Tsharp": -1.0,
    }
    total = None
    for i in range(a.split.k):
        terms = statistical_variation_terms(a, _varying(a.split, j, i))
        for name, w in weights.items():
            t = terms[name] * (0.5 * w)
            total = t if total is None else total + t
    return _restrict(a.split, j, total)


def semi_symmetric_variation(sg: SplitGeometry, j: int, U: Jet, B: Jet | None = None) -> tuple[Jet, Jet | None]:
    """Coefficient tensor of ``d/dt sum_i Qbar(D_i)`` for ``I`` semi-symmetric in a fixed ``U``.

    For the moving distribution ``d`` (dims ``n``, complement ``n'``):
    ``dQbar = <B, 1/2 (n'-n) Div(P'U) g - n'(n-1) PU (x) PU> - 1/2 (n'-n) Div(tr(B) P'U)``.
    Returns the tensor and, if ``B`` is given, the divergence remainder ``Y``.
    """
    geo = sg.geo
    total, Y = None, None
    trB = None if B is None else einsum("...ab,...ab->...", B, geo.ginv)
    for i in range(sg.k):
        d = _varying(sg, j, i)
        c = d.complement
        n, nc = d.dim, c.dim
        PU = einsum("...kl,...l->...k", d.P, U)
        PcU = einsum("...kl,...l->...k", c.P, U)
        t = geo.g * (geo.div(PcU) * (0.5 * (nc - n)))[..., None, None] - _outer(PU, PU, geo.g) * (nc * (n - 1))
        total = t if total is None else total + t
        if B is not None:
            y = PcU * (trB * (0.5 * (nc - n)))[..., None]
            Y = y if Y is None else Y + y
    return _restrict(sg, j, total), Y


def aggregate_variation(sg: SplitGeometry, fam_or_B, points=None, a: AffineSplit | None = None, U: Jet | None = None) -> Aggregate:
    """Aggregate tensors for a ``D_j``-variation; pass ``a`` for a fixed statistical ``I`` or ``U`` for semi-symmetric."""
    B, j = _resolve_B(sg, fam_or_B, points)
    Q, X = _aggregate_Q(sg, j, B)
    agg = Aggregate(Q, X)
    if a is not None:
        agg.Qbar = _aggregate_barQ_stat(a, j)
    elif U is not None:
        agg.Qbar, agg.Y = semi_symmetric_variation(sg, j, U, B)
    return agg


# ---------------------------------------------------------------------------
# Euler-Lagrange residuals
# ---------------------------------------------------------------------------


@dataclass
class ELReport:
    """Residual tensors on each block, with the pointwise-fitted ``lambda_j``."""

    residual: list[np.ndarray]
    lam: list[np.ndarray]
    lam_mean: list[float]
    lam_deviation: list[float]
    trace_free_norm: list[float] = field(default_factory=list)

    def max_residual(self) -> float:
        return max(float(np.abs(r).max()) for r in self.residual)


def _fit(sg: SplitGeometry, parts: Sequence[Jet], lam: Sequence[float] | None) -> ELReport:
    res, lams, means, devs, tf = [], [], [], [], []
    for j, R in enumerate(parts):
        b = sg.blocks[j]
        gj = b.g_block.truncate(0).val
        R0 = R.truncate(0).val
        tr = np.einsum("...ab,...ab->...", R0, b.G.val)
        if lam is None:
            lj = -tr / b.dim
        else:
            lj = np.full(tr.shape, float(lam[j]))
        out = R0 + lj[..., None, None] * gj
        res.append(out)
        lams.append(lj)
        means.append(float(np.mean(lj)))
        devs.append(float(np.max(np.abs(lj - np.mean(lj)))))
        tfree = R0 - (tr / b.dim)[..., None, None] * gj
        tf.append(float(np.abs(tfree).max()))
    return ELReport(res, lams, means, devs, tf)


def half_sum_q(sg: SplitGeometry, a: AffineSplit | None = None) -> Jet:
    """``1/2 sum_i (Q(D_i) + Qbar(D_i))``."""
    out = sg.q_sum()
    if a is not None:
        for b in sg.blocks:
            out = out + a.bar_q(b)
    return out.truncate(0) * 0.5


def el_trace_term(sg: SplitGeometry, a: AffineSplit | None = None) -> Jet:
    """``Sbar - 1/2 Div sum_i (H_i + H_i^perp)`` as displayed (statistical or zero ``I``)."""
    Rl = None if a is None else a.bar_riemann_low
    return (sg.mixed_scalar(Rl).truncate(0) - sg.geo.div(sg.mean_curvature_field()).truncate(0) * 0.5)


def el_residual(sg: SplitGeometry, a: AffineSplit | None = None, lam: Sequence[float] | None = None) -> ELReport:
    """``Q_agg + Qbar_agg + (Sbar - 1/2 Div sum(H_i + H_i^perp) + lambda_j) g_j`` on each block.

    ``a`` (optional) carries a fixed statistical contorsion.  With ``lam``
    omitted, ``lambda_j`` is fitted pointwise from the block trace.
    """
    geo = sg.geo
    zeroB = geo.g * 0.0
    trace = el_trace_term(sg, a)
    parts = []
    for j in range(sg.k):
        Q, _ = _aggregate_Q(sg, j, zeroB)
        R = Q.truncate(0)
        if a is not None:
            R = R + _aggregate_barQ_stat(a, j).truncate(0)
        R = R + sg.blocks[j].g_block.truncate(0) * trace[..., None, None]
        parts.append(R)
    return _fit(sg, parts, lam)


def _expanded_lhs(sg: SplitGeometry, j: int, with_T: bool = True) -> Jet:
    geo = sg.geo
    bj = sg.blocks[j]
    lhs = bj.div_h + bj.flat(bj.commutator_K) + _outer(bj.complement.H, bj.complement.H, geo.g) - upsilon(geo, bj.complement.h, bj.complement.h) * 0.5
    if with_T:
        lhs = lhs - upsilon(geo, bj.complement.T, bj.complement.T) * 0.5 - bj.flat(bj.casorati_T) * 2.0
    for i in range(sg.k):
        if i == j:
            continue
        d = sg.blocks[i].complement
        c = sg.blocks[i]
        t = d.div_h + d.flat(d.commutator_K) + _outer(c.H, c.H, geo.g) - upsilon(geo, c.h, c.h) * 0.5
        if with_T:
            t = t - upsilon(geo, c.T, c.T) * 0.5 - d.flat(d.casorati_T) * 2.0
        lhs = lhs + t
    return _restrict(sg, j, lhs).truncate(0)


def _expanded_rhs_scalar(sg: SplitGeometry, j: int) -> Jet:
    geo = sg.geo
    v = sg.blocks[j].H
    for i in range(sg.k):
        if i != j:
            v = v + sg.blocks[i].complement.H
    return sg.mixed_scalar().truncate(0) - geo.div(v).truncate(0)


def el_expanded_residual(sg: SplitGeometry, lam: Sequence[float] | None = None, with_T: bool = True) -> ELReport:
    """Expanded form ``(S - Div(H_j + sum_{i != j} H_i^perp) + lambda_j) g_j - LHS``.

    The expanded left side equals ``-Q_j`` up to a multiple of ``g_j``, so this
    orientation makes the fitted residual directly comparable with :func:`el_residual`.
    """
    parts = []
    for j in range(sg.k):
        gj = sg.blocks[j].g_block.truncate(0)
        parts.append(gj * _expanded_rhs_scalar(sg, j)[..., None, None] - _expanded_lhs(sg, j, with_T))
    return _fit(sg, parts, lam)


def el_short_residual(sg: SplitGeometry, lam: Sequence[float] | None = None) -> ELReport:
    """Expanded form with every integrability-tensor term dropped.

    Equals :func:`el_expanded_residual` when all blocks are integrable and
    every pair of blocks is mixed integrable.
    """
    return el_expanded_residual(sg, lam, with_T=False)


# ---------------------------------------------------------------------------
# the mu-system
# ---------------------------------------------------------------------------


def mu_matrix(n_vec: Sequence[int]) -> np.ndarray:
    """``A_{ji} = n_i - 2 delta_{ij}``."""
    n = np.asarray(n_vec, float)
    k = len(n)
    return np.tile(n, (k, 1)) - 2.0 * np.eye(k)


def mu_det_exact(n_vec: Sequence[int]) -> int:
    """Determinant of :func:`mu_matrix` by exact rational elimination."""
    k = len(n_vec)
    M = [[Fraction(int(n_vec[i]) - (2 if i == j else 0)) for i in range(k)] for j in range(k)]
    det = Fraction(1)
    for col in range(k):
        piv = next((r for r in range(col, k) if M[r][col] != 0), None)
        if piv is None:
            return 0
        if piv != col:
            M[col], M[piv] = M[piv], M[col]
            det = -det
        det *= M[col][col]
        for r in range(col + 1, k):
            f = M[r][col] / M[col][col]
            for cc in range(col, k):
                M[r][cc] -= f * M[col][cc]
    assert det.denominator == 1
    return int(det)


def mu_closed_form(n_vec: Sequence[int], a_vec: Sequence[float]) -> np.ndarray:
    n_i = np.asarray(n_vec, float)
    a = np.asarray(a_vec, float)
    n = n_i.sum()
    # sum_j (a_i - a_j) n_j - 2 a_i
    s = a * n - np.dot(a, n_i) - 2.0 * a
    return -s / (2.0 * n - 4.0)


def mu_dense(n_vec: Sequence[int], a_vec: Sequence[float]) -> np.ndarray:
    return np.linalg.solve(mu_matrix(n_vec), np.asarray(a_vec, float))


def mu_solve(n_vec: Sequence[int], a_vec) -> np.ndarray:
    """Solve ``sum_i n_i mu_i - 2 mu_j = a_j``; ``a_vec`` may carry trailing point axes."""
    n_vec = [int(x) for x in n_vec]
    if any(x < 1 for x in n_vec):
        raise VariationError("block dimensions must be positive")
    n = sum(n_vec)
    a = np.asarray(a_vec, float)
    if n <= 2:
        if n == 2 and len(n_vec) == 2:
            return np.zeros_like(a)
        raise VariationError("the mu-system needs total dimension n > 2")
    n_i = np.asarray(n_vec, float).reshape((-1,) + (1,) * (a.ndim - 1))
    s = a * n - (a * n_i).sum(axis=0) - 2.0 * a
    return -s / (2.0 * n - 4.0)


# ---------------------------------------------------------------------------
# mixed Ricci tensor
# ---------------------------------------------------------------------------


@dataclass
class MixedRicci:
    """Block components of the mixed Ricci tensor and its trace."""

    blocks: list[np.ndarray]
    mu: np.ndarray
    scalar: np.ndarray
    tensor: np.ndarray
    Z: np.ndarray | None = None


def _block_Q_tensors(sg: SplitGeometry, a: AffineSplit | None = None, U: Jet | None = None) -> tuple[list[Jet], list[Jet]]:
    zeroB = sg.geo.g * 0.0
    Qs, Qbars = [], []
    for j in range(sg.k):
        Qs.append(_aggregate_Q(sg, j, zeroB)[0].truncate(0))
        if a is not None:
            Qbars.append(_aggregate_barQ_stat(a, j).truncate(0))
        elif U is not None:
            Qbars.append(semi_symmetric_variation(sg, j, U)[0].truncate(0))
        else:
            Qbars.append(zeroB.truncate(0))
    return Qs, Qbars


def mixed_ricci(sg: SplitGeometry, a: AffineSplit | None = None, U: Jet | None = None, dense: bool = False) -> MixedRicci:
    """``Ricbar|_{D_j} = -Q_j + mu_j g_j - Qbar_j`` with ``mu`` from the mu-system.

    ``a_j = tr_g sum_i Q_i - (2/n_j) tr Q_j`` uses the combined tensor
    ``Q_j + Qbar_j`` so the barred tensor satisfies the Einstein-type equation
    exactly when the Euler-Lagrange equations hold.
    """
    Qs, Qbars = _block_Q_tensors(sg, a, U)
    comb = [q + qb for q, qb in zip(Qs, Qbars)]
    trs = np.stack([np.einsum("...ab,...ab->...", c.val, sg.geo.ginv.truncate(0).val) for c in comb])
    dims = [b.dim for b in sg.blocks]
    a_vec = trs.sum(axis=0)[None] - 2.0 * trs / np.asarray(dims, float)[:, None]
    if dense:
        mu = np.stack([mu_dense(dims, a_vec[:, p]) for p in range(a_vec.shape[1])], axis=1)
    else:
        mu = mu_solve(dims, a_vec)
    blocks, tensor = [], 0.0
    for j, b in enumerate(sg.blocks):
        Rj = -comb[j].val + mu[j][..., None, None] * b.g_block.truncate(0).val
        blocks.append(Rj)
        tensor = tensor + Rj
    scalar = -trs.sum(axis=0) + (np.asarray(dims, float)[:, None] * mu).sum(axis=0)
    return MixedRicci(blocks, mu, scalar, np.asarray(tensor))


def einstein_residual(ric: MixedRicci, g: np.ndarray, Lambda: float = 0.0, frak_a: float = 0.0, Xi: np.ndarray | None = None) -> np.ndarray:
    """``Ricbar_D - 1/2 Sbar_D g + Lambda g - a Xi``."""
    out = ric.tensor - 0.5 * ric.scalar[..., None, None] * g + Lambda * g
    if Xi is not None:
        out = out - frak_a * np.asarray(Xi)
    return out


# ---------------------------------------------------------------------------
# semi-symmetric connections
# ---------------------------------------------------------------------------


def u_criticality(sg: SplitGeometry, U: Jet) -> list[dict[str, np.ndarray]]:
    """Residuals of the U-equations per block.

    ``2 n_j (n_j' - 1) P_j'(U) - (n_j' - n_j) H_j`` and
    ``2 n_j' (n_j - 1) P_j(U) - (n_j - n_j') H_j'`` (primes: complement).
    """
    out = []
    for b in sg.blocks:
        c = b.complement
        n, nc = b.dim, c.dim
        PU = einsum("...kl,...l->...k", b.P, U)
        PcU = einsum("...kl,...l->...k", c.P, U)
        out.append(
            {
                "perp": (PcU * (2.0 * n * (nc - 1)) - b.H * (nc - n)).truncate(0).val,
                "block": (PU * (2.0 * nc * (n - 1)) - c.H * (n - nc)).truncate(0).val,
            }
        )
    return out


def bar_q_u_gradient(sg: SplitGeometry, U: Jet, i: int) -> Jet:
    """Vector ``G`` with ``d/ds Qbar(D_i; U + s V) = <G, V>`` (derived closed form)."""
    b = sg.blocks[i]
    c = b.complement
    n, nc = b.dim, c.dim
    PU = einsum("...kl,...l->...k", b.P, U)
    PcU = einsum("...kl,...l->...k", c.P, U)
    return c.H * -(nc - n) - PU * (2.0 * nc * (n - 1)) + b.H * (nc - n) - PcU * (2.0 * n * (nc - 1))


def semi_symmetric_el(sg: SplitGeometry, a: AffineSplit, U: Jet, lam: Sequence[float] | None = None) -> dict:
    """Block residuals ``Q_j + Qbar_j(U) + (1/2 sum(Q_i + Qbar_i) + lambda_j) g_j`` and U-residuals."""
    zeroB = sg.geo.g * 0.0
    trace = half_sum_q(sg, a)
    parts = []
    for j in range(sg.k):
        Q, _ = _aggregate_Q(sg, j, zeroB)
        Qb, _ = semi_symmetric_variation(sg, j, U)
        parts.append(Q.truncate(0) + Qb.truncate(0) + sg.blocks[j].g_block.truncate(0) * trace[..., None, None])
    return {"metric": _fit(sg, parts, lam), "U": u_criticality(sg, U)}


def semi_symmetric_mixed_ricci(sg: SplitGeometry, U: Jet) -> MixedRicci:
    """Explicit mixed Ricci tensor for a semi-symmetric connection.

    ``Ricbar|_{D_j} = -Q_j + mu_j g_j + c_j PU (x) PU - w_j g_j - (Z_j / n_j) g_j`` with
    ``c_j = n_j'(n_j - 1) + sum_{i != j} n_i (n_i' - 1)``,
    ``w_j = 1/2 (n_j' - n_j) Div(P_j'U) + 1/2 sum_{i != j} (n_i - n_i') Div(P_i U)``,
    ``mu`` solved for ``Q`` alone and ``Z_j = c_j |P_j U|^2 - n_j w_j`` the trace
    of the U-part (primes: complement, ``PU = P_j U``).
    """
    zeroB = sg.geo.g * 0.0
    geo = sg.geo
    g0 = geo.g.truncate(0)
    Qs = [_aggregate_Q(sg, j, zeroB)[0].truncate(0) for j in range(sg.k)]
    gi = geo.ginv.truncate(0).val
    trs = np.stack([np.einsum("...ab,...ab->...", q.val, gi) for q in Qs])
    dims = [b.dim for b in sg.blocks]
    a_vec = trs.sum(axis=0)[None] - 2.0 * trs / np.asarray(dims, float)[:, None]
    mu = mu_solve(dims, a_vec)
    divs = [
        (geo.div(einsum("...kl,...l->...k", b.P, U)).truncate(0).val, geo.div(einsum("...kl,...l->...k", b.complement.P, U)).truncate(0).val)
        for b in sg.blocks
    ]
    blocks, Z, tensor = [], [], 0.0
    scalar = -trs.sum(axis=0) + (np.asarray(dims, float)[:, None] * mu).sum(axis=0)
    for j, b in enumerate(sg.blocks):
        n, nc = b.dim, b.complement.dim
        others = [i for i in range(sg.k) if i != j]
        c_j = nc * (n - 1) + sum(sg.blocks[i].dim * (sg.blocks[i].complement.dim - 1) for i in others)
        w_j = 0.5 * (nc - n) * divs[j][1]
        for i in others:
            w_j = w_j + 0.5 * (sg.blocks[i].dim - sg.blocks[i].complement.dim) * divs[i][0]
        PU = einsum("...kl,...l->...k", b.P, U).truncate(0)
        outer = _outer(PU, PU, g0).val
        z = c_j * np.einsum("...a,...ab,...b->...", PU.val, g0.val, PU.val) - n * w_j
        gj = b.g_block.truncate(0).val
        Rj = -Qs[j].val + (mu[j] - w_j - z / n)[..., None, None] * gj + c_j * outer
        blocks.append(Rj)
        Z.append(z)
        tensor = tensor + Rj
    return MixedRicci(blocks, mu, scalar, np.asarray(tensor), np.stack(Z))


# ---------------------------------------------------------------------------
# volume and divergence under variation
# ---------------------------------------------------------------------------


def volume_variation_utils(sg: SplitGeometry, B: Jet, X: Jet | None = None) -> dict[str, np.ndarray]:
    """``d/dt log dvol = 1/2 tr_g B`` and, for a fixed field ``X``, ``d/dt Div X = 1/2 X(tr_g B)``."""
    geo = sg.geo
    trB = einsum("...ab,...ab->...", B, geo.ginv)
    out = {"dvol_factor": (trB * 0.5).truncate(0).val}
    if X is not None:
        out["ddiv"] = (einsum("...m,...m->...", trB.grad(), X.truncate(trB.order - 1)) * 0.5).truncate(0).val
    return out
