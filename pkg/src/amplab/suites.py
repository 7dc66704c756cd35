"""Check suites shared by the command line and the acceptance tests.

Every suite returns a list of :class:`~amplab.harness.Check` entries.  Pointwise
suites evaluate on seeded random sample points; the integral suite works on a
periodic grid.
"""

from __future__ import annotations

import itertools
from typing import Mapping, Sequence

import numpy as np

from . import jets
from .connections import AffineSplit, Contorsion, build_contorsion
from .geometry import VectorFieldDef
from .harness import (
    Check,
    GridSpec,
    HarnessError,
    convergence_pair,
    integral_formula_checks,
    totals_from_checks,
)
from .jets import Jet, einsum
from .models import ModelSpec
from .multiproduct import SplitGeometry, split_geometry
from .variational import (
    VARIATION_ORDER,
    VariationFamily,
    aggregate_variation,
    analytic_variation_barQ,
    analytic_variation_Q,
    bar_q_u_gradient,
    einstein_residual,
    el_expanded_residual,
    el_residual,
    el_short_residual,
    fd_derivative,
    mixed_ricci,
    mu_closed_form,
    mu_dense,
    mu_det_exact,
    oracle_variation_barQ,
    oracle_variation_Q,
    relative_error,
    semi_symmetric_el,
    semi_symmetric_mixed_ricci,
)

__all__ = [
    "DEFAULT_TOLERANCES",
    "SUITES",
    "random_cubic_form",
    "default_semi_field",
    "semi_field",
    "identity_suite",
    "fixture_suite",
    "variation_suite",
    "euler_lagrange_suite",
    "mu_suite",
    "semi_symmetric_suite",
    "integral_suite",
]

SUITES = ("identity", "integral", "variation", "euler-lagrange", "semi-symmetric")

DEFAULT_TOLERANCES = {
    "identity": 1e-7,
    "trace": 1e-9,
    "fixture": 1e-8,
    "integral": 1e-7,
    "divergence": 1e-8,
    "variation": 1e-5,
    "euler_lagrange": 1e-8,
    "mu": 1e-12,
    "semi_symmetric": 1e-9,
    "semi_ricci": 1e-7,
}


def _tol(tols: Mapping[str, float] | None, key: str) -> float:
    return float((tols or {}).get(key, DEFAULT_TOLERANCES[key]))


def _amax(x) -> float:
    v = x.val if isinstance(x, Jet) else np.asarray(x)
    return float(np.abs(v).max()) if v.size else 0.0


def _assert(cid: str, description: str, value: float, tol: float, model: ModelSpec, npts: int, **extra) -> Check:
    ok = bool(np.isfinite(value)) and value <= tol
    return Check(cid, description, float(value), tol, ok, model=model.name, points=npts, extra=extra)


def _measure(cid: str, description: str, value: float, model: ModelSpec, npts: int, **extra) -> Check:
    return Check(cid, description, float(value), None, None, model=model.name, points=npts, extra=extra)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _trig(coords, rng: np.random.Generator, amplitude: float) -> str:
    a, b, c = (rng.normal(size=3) * amplitude).round(4)
    u, v = rng.integers(0, len(coords), size=2)
    return f"{a} * sin({coords[u]}) + {b} * cos({coords[v]}) + {c}"


def random_cubic_form(coords: Sequence[str], rng: np.random.Generator, amplitude: float = 0.3) -> Contorsion:
    """Statistical contorsion from a fully symmetric trigonometric cubic form (not adapted in general)."""
    n = len(coords)
    arr = np.empty((n, n, n), dtype=object)
    for t in itertools.combinations_with_replacement(range(n), 3):
        text = _trig(coords, rng, amplitude)
        for p in set(itertools.permutations(t)):
            arr[p] = text
    return build_contorsion("statistical", coords, arr.tolist())


def default_semi_field(coords: Sequence[str]) -> VectorFieldDef:
    """A fixed periodic vector field, used when a semi-symmetric check has no ``U`` of its own."""
    n = len(coords)
    comps = [f"0.3 * sin({coords[(k + 1) % n]}) + 0.1 * cos({coords[k]}) + 0.05 * {k + 1}" for k in range(n)]
    return VectorFieldDef.from_strings(coords, comps)


def semi_field(model: ModelSpec, I: Contorsion | None, U: VectorFieldDef | None) -> VectorFieldDef:
    if U is not None:
        return U
    if I is not None and I.kind == "semi_symmetric":
        return I.data
    return default_semi_field(model.coords)


def _geometry(model: ModelSpec, points, order: int = 2) -> SplitGeometry:
    return split_geometry(model.metric, model.split, model.check_points(points), order=order)


def _contorsion_jet(I: Contorsion | None, sg: SplitGeometry, points, order: int) -> Jet:
    if I is None:
        return jets.constant(np.zeros(sg.geo.g.shape + (sg.n,)), sg.n, order)
    return I.tensor_jet(sg.geo.g, points, order)


# ---------------------------------------------------------------------------
# pointwise identities
# ---------------------------------------------------------------------------


def _fixture_value(name: str, sg: SplitGeometry) -> np.ndarray:
    if name == "mixed_scalar":
        return sg.mixed_scalar().val
    if name == "q_sum":
        return sg.q_sum().val
    if name.startswith("H_"):
        return sg.blocks[int(name[2:])].H.val
    if name.startswith("h_"):
        h = sg.blocks[int(name[2:])].h.val
        return np.abs(h).reshape(len(h), -1).max(axis=1)
    raise HarnessError(f"no computed counterpart for fixture {name!r}")


def fixture_suite(model: ModelSpec, points, tols=None) -> list[Check]:
    """Every recorded closed-form quantity of ``model`` against the generic pipeline."""
    pts = model.check_points(points)
    sg = _geometry(model, pts)
    tol = _tol(tols, "fixture")
    out = []
    for name in sorted(model.fixtures):
        fx = model.fixtures[name]
        err = _amax(_fixture_value(name, sg) - fx.fn(pts))
        out.append(_assert(f"fixture:{name}", fx.description, err, tol, model, len(pts), provenance=fx.provenance))
    return out


def _trace_identities(d) -> dict[str, Jet]:
    c = d.complement
    geo = d.geo
    return {
        "casorati_trace": einsum("...kk->...", d.casorati) - d.hh,
        "casorati_T_trace": einsum("...kk->...", d.casorati_T) + d.TT,
        "psi_trace": d.trace(c.psi) - (c.hh - c.TT),
        "div_h_trace": d.trace(d.div_h) - d.div_H,
        "deformation_trace": d.trace(geo.deformation(c.H)) - c.div_H - geo.dot(c.H, c.H),
    }


def identity_suite(model: ModelSpec, points, contorsions: Mapping[str, Contorsion | None] | None = None, tols=None) -> list[Check]:
    """Pointwise identities of the block geometry, with and without contorsion.

    ``contorsions`` maps a label to a contorsion (``None`` for the Levi-Civita
    connection); identities that need a statistical ``I`` are only checked for
    statistical or zero contorsions.
    """
    pts = model.check_points(points)
    npts = len(pts)
    sg = _geometry(model, pts)
    tol, ttol = _tol(tols, "identity"), _tol(tols, "trace")
    out = [
        _assert("identity:divergence_sum", "Div sum(H_i + H_i^perp) = 2 S_mix - sum Q(D_i)", _amax(sg.pw3_residual()), tol, model, npts),
        _assert("identity:mixed_scalar_sum", "2 S_mix = sum_i S(D_i, D_i^perp)", _amax(sg.dk_smix_residual()), tol, model, npts),
    ]
    for i, b in enumerate(sg.blocks):
        for side, d in (("", b), ("perp", b.complement)):
            tag = f"D{i + 1}{'_' + side if side else ''}"
            out.append(_assert(f"identity:pair_divergence:{tag}", "Div(H + H^perp) = S(D, D^perp) - Q(D)", _amax(d.pw_residual()), tol, model, npts))
            out.append(_assert(f"identity:partial_ricci:{tag}", "partial Ricci of the complement in extrinsic terms", _amax(d.ricci_from_complement - d.fundamental_rhs), tol, model, npts))
            for name, r in _trace_identities(d).items():
                out.append(_assert(f"trace:{name}:{tag}", f"trace identity {name}", _amax(r), ttol, model, npts))
    for label, I in (contorsions or {"zero": None}).items():
        a = AffineSplit(sg, _contorsion_jet(I, sg, pts, 2))
        for i, b in enumerate(sg.blocks):
            out.append(_assert(f"identity:{label}:pair_contorsion:D{i + 1}", "1/2 Div(...) = Sbar - S - Qbar for (D_i, D_i^perp)", _amax(a.div_barq_residual(b)), tol, model, npts))
        out.append(_assert(f"identity:{label}:contorsion_sum", "Div sum(...) = 2 Sbar_mix - sum(Q + Qbar)", _amax(a.q1q2_residual()), tol, model, npts))
        if I is None or I.kind in ("zero", "statistical"):
            out.append(_assert(f"identity:{label}:statistical", "2 Sbar - 2 S - sum(<tr_perp I, tr I> - 1/2 <I, I>|V) = 0", _amax(a.statistical_residual()), tol, model, npts))
        if I is not None and I.kind == "semi_symmetric":
            U = I.data.jet(pts, 2)
            err = max(_amax((a.bar_q(b) - a.bar_q_semi_symmetric(b, U)).truncate(0)) for b in sg.blocks)
            out.append(_assert(f"identity:{label}:semi_symmetric_closed_form", "general Qbar equals the semi-symmetric closed form", err, _tol(tols, "semi_symmetric"), model, npts))
    if model.fixtures:
        out += fixture_suite(model, pts, tols)
    return out


# ---------------------------------------------------------------------------
# variation formulas
# ---------------------------------------------------------------------------


def _worst(acc: dict, key: str, value: float) -> None:
    acc[key] = max(acc.get(key, 0.0), value)


def variation_suite(
    model: ModelSpec,
    points,
    rng: np.random.Generator,
    families: int = 3,
    statistical: Contorsion | None = None,
    U: VectorFieldDef | None = None,
    tols=None,
    h: float = 1e-3,
) -> list[Check]:
    """Analytic metric-variation formulas against the Richardson finite-difference oracle.

    Each family varies one block (cycling through the blocks) with a random
    trigonometric ``B_j``.  Per formula, the worst relative error over all
    families and points is reported; dual formulas (``i != j``) are pooled.
    """
    pts = model.check_points(points)
    npts = len(pts)
    tol = _tol(tols, "variation")
    stat = statistical if statistical is not None else random_cubic_form(model.coords, rng)
    Udef = semi_field(model, None, U)
    sg = _geometry(model, pts, VARIATION_ORDER)
    geo = sg.geo
    Ijet = stat.tensor_jet(geo.g, pts, VARIATION_ORDER)
    a = AffineSplit(sg, Ijet)
    Ujet = Udef.jet(pts, VARIATION_ORDER)
    semi = build_contorsion("semi_symmetric", model.coords, Udef)
    worst: dict[str, float] = {}
    for f in range(families):
        fam = VariationFamily.random(model.coords, f % sg.k, rng)
        fam.validate(sg, pts, 4 * h, model.metric.signature)
        B = fam.B_jet(sg, pts)
        j = fam.block
        an, fd = analytic_variation_Q(sg, (B, j)), oracle_variation_Q(sg, (B, j), h=h)
        for (name, i), v in an.items():
            _worst(worst, f"metric:{name}:{'primary' if i == j else 'dual'}", relative_error(v, fd[(name, i)]))
        an, fd = analytic_variation_barQ(a, (B, j)), oracle_variation_barQ(a, (B, j), h=h)
        for (name, i), v in an.items():
            _worst(worst, f"statistical:{name}:{'primary' if i == j else 'dual'}", relative_error(v, fd[(name, i)]))
        agg = aggregate_variation(sg, (B, j), a=AffineSplit(sg, Ijet.truncate(0)))
        num = fd_derivative(lambda s: s.q_sum(), sg, B, h)
        _worst(worst, "aggregate:Q", relative_error((geo.pair02(agg.Q, B) - geo.div(agg.X)).truncate(0).val, num))

        def qbar_total(s, I=Ijet):
            aff = AffineSplit(s, I.truncate(0))
            return sum((aff.bar_q(b) for b in s.blocks[1:]), aff.bar_q(s.blocks[0]))

        num = fd_derivative(qbar_total, sg, B, h)
        _worst(worst, "aggregate:Qbar_statistical", relative_error(geo.pair02(agg.Qbar, B).truncate(0).val, num))

        def qbar_semi(s):
            aff = AffineSplit(s, semi.tensor_jet(s.geo.g, pts, 1).truncate(0))
            return sum((aff.bar_q(b) for b in s.blocks[1:]), aff.bar_q(s.blocks[0]))

        num = fd_derivative(qbar_semi, sg, B, h)
        aggU = aggregate_variation(sg, (B, j), U=Ujet)
        _worst(worst, "aggregate:Qbar_semi_symmetric", relative_error((geo.pair02(aggU.Qbar, B) - geo.div(aggU.Y)).truncate(0).val, num))
    out = []
    for key in sorted(worst):
        out.append(_assert(f"variation:{key}", "analytic t-derivative vs Richardson finite difference (relative)", worst[key], tol, model, npts, families=families))
    return out


# ---------------------------------------------------------------------------
# Euler-Lagrange equations and the mixed Ricci tensor
# ---------------------------------------------------------------------------


def mu_suite(dims_list: Sequence[Sequence[int]], rng: np.random.Generator, model: ModelSpec | None = None, tols=None) -> list[Check]:
    """Closed-form mu against a dense solve, and the exact determinant.

    ``det A = (-2)^(k-1) (n - 2)``; the sign-free form ``2^(k-1) (2 - n)``
    only agrees for even ``k`` and is reported as a measurement.
    """
    tol = _tol(tols, "mu")
    worst, bad_det, bad_unsigned = 0.0, [], []
    for dims in dims_list:
        dims = [int(x) for x in dims]
        a = rng.normal(size=len(dims))
        x, y = mu_closed_form(dims, a), mu_dense(dims, a)
        worst = max(worst, float(np.abs(x - y).max() / max(1.0, np.abs(y).max())))
        k, n = len(dims), sum(dims)
        det = mu_det_exact(dims)
        if det != (-2) ** (k - 1) * (n - 2):
            bad_det.append(dims)
        if det != 2 ** (k - 1) * (2 - n):
            bad_unsigned.append(dims)
    name = model.name if model else ""
    npts = len(dims_list)
    return [
        Check("mu:closed_form", "closed-form mu vs dense linear solve", worst, tol, worst <= tol, model=name, points=npts),
        Check("mu:determinant", "det A = (-2)^(k-1) (n - 2) in exact arithmetic", float(len(bad_det)), 0.0, not bad_det, model=name, points=npts, extra={"mismatches": bad_det}),
        Check("mu:determinant_unsigned", "cases where det A != 2^(k-1) (2 - n)", float(len(bad_unsigned)), None, None, model=name, points=npts, extra={"mismatches": bad_unsigned}),
    ]


def euler_lagrange_suite(model: ModelSpec, points, statistical: Contorsion | None = None, tols=None) -> list[Check]:
    """Euler-Lagrange residuals and the consistency of their equivalent forms.

    The residual itself is a measurement (a metric need not be critical); the
    equivalences between forms, the mixed Ricci assembly and the Einstein-type
    reformulation are asserted.
    """
    pts = model.check_points(points)
    npts = len(pts)
    tol = _tol(tols, "euler_lagrange")
    sg = _geometry(model, pts)
    a = None if statistical is None else AffineSplit(sg, statistical.tensor_jet(sg.geo.g, pts, 2))
    rep = el_residual(sg, a)
    out = [
        _measure("euler_lagrange:residual", "largest block residual with pointwise-fitted lambda_j", rep.max_residual(), model, npts, lam_mean=rep.lam_mean),
        _measure("euler_lagrange:lambda_deviation", "spread of the fitted lambda_j (zero for critical metrics)", max(rep.lam_deviation), model, npts),
    ]
    if a is None:
        exp = el_expanded_residual(sg)
        gap = max(_amax(x - y) for x, y in zip(rep.residual, exp.residual))
        out.append(_assert("euler_lagrange:expanded_form", "compact and expanded forms agree (lambda-fitted)", gap, tol, model, npts))
        short = el_short_residual(sg)
        sgap = max(_amax(x - y) for x, y in zip(short.residual, exp.residual))
        integrable = max(_amax(b.T) for b in sg.blocks) < 1e-12 and all(
            sg.mixed_pair_flags(i, j)["mixed_integrable"] for i, j in itertools.combinations(range(sg.k), 2)
        )
        if integrable:
            out.append(_assert("euler_lagrange:short_form", "form without integrability terms agrees (T = 0)", sgap, tol, model, npts))
        else:
            out.append(_measure("euler_lagrange:short_form", "form without integrability terms; differs when T != 0", sgap, model, npts))
    if sg.n > 2:
        ric = mixed_ricci(sg, a)
        dense = mixed_ricci(sg, a, dense=True)
        out.append(_assert("euler_lagrange:mu_dense", "mixed Ricci with closed-form mu vs dense solve", _amax(ric.tensor - dense.tensor), tol, model, npts))
        ein = einstein_residual(ric, sg.geo.g.val)
        total = sum(rep.residual)
        out.append(_assert("euler_lagrange:einstein_form", "Einstein-type residual equals minus the fitted EL residual", _amax(ein + total), tol, model, npts))
        out.append(_assert("euler_lagrange:mixed_scalar_trace", "trace of the mixed Ricci tensor vanishes", _amax(ric.scalar), tol, model, npts))
    return out


# ---------------------------------------------------------------------------
# semi-symmetric connections
# ---------------------------------------------------------------------------


def semi_symmetric_suite(model: ModelSpec, points, U: VectorFieldDef | None = None, tols=None, h: float = 1e-4) -> list[Check]:
    """Closed forms for a semi-symmetric connection against the general machinery."""
    pts = model.check_points(points)
    npts = len(pts)
    Udef = semi_field(model, None, U)
    sg = _geometry(model, pts)
    Ujet = Udef.jet(pts, 2)
    I = build_contorsion("semi_symmetric", model.coords, Udef)
    a = AffineSplit(sg, I.tensor_jet(sg.geo.g, pts, 2))
    tol = _tol(tols, "semi_symmetric")
    out = []
    err = max(_amax((a.bar_q(b) - a.bar_q_semi_symmetric(b, Ujet)).truncate(0)) for b in sg.blocks)
    out.append(_assert("semi_symmetric:closed_form", "general Qbar equals the derived semi-symmetric reduction", err, tol, model, npts))
    # gradient in U by central differences along a second field
    V = Ujet[..., ::-1]
    gerr = 0.0
    for i, b in enumerate(sg.blocks):
        q = lambda s: a.bar_q_semi_symmetric(b, Ujet + V * s).truncate(0).val  # noqa: E731
        num = (q(h) - q(-h)) / (2 * h)
        an = sg.geo.dot(bar_q_u_gradient(sg, Ujet, i), V).truncate(0).val
        gerr = max(gerr, relative_error(an, num))
    out.append(_assert("semi_symmetric:u_gradient", "U-gradient of Qbar vs central difference (relative)", gerr, 1e-6, model, npts))
    if sg.n > 2:
        gen = mixed_ricci(sg, U=Ujet)
        exp = semi_symmetric_mixed_ricci(sg, Ujet)
        rerr = max(_amax(gen.tensor - exp.tensor), max(_amax(x - y) for x, y in zip(gen.blocks, exp.blocks)))
        out.append(_assert("semi_symmetric:mixed_ricci", "explicit mixed Ricci tensor equals the generic assembly", rerr, _tol(tols, "semi_ricci"), model, npts))
    el = semi_symmetric_el(sg, AffineSplit(sg, a.I.truncate(0)), Ujet)
    out.append(_measure("semi_symmetric:el_residual", "metric Euler-Lagrange residual with fitted lambda_j", el["metric"].max_residual(), model, npts))
    ures = max(max(_amax(r["perp"]), _amax(r["block"])) for r in el["U"])
    out.append(_measure("semi_symmetric:u_residual", "residual of the U-criticality equations", ures, model, npts))
    return out


# ---------------------------------------------------------------------------
# integral formulas
# ---------------------------------------------------------------------------


def _sigma2_applicable(model: ModelSpec, probe) -> bool:
    if any(d != 1 for d in model.split.dims) or any(s < 0 for s in model.metric.signature):
        return False
    sg = _geometry(model, probe)
    return max(_amax(b.complement.T) for b in sg.blocks) < 1e-9


def integral_suite(
    model: ModelSpec,
    grid: GridSpec,
    I: Contorsion | None = None,
    tols=None,
    workers: int = 1,
    probe=None,
    convergence: bool = True,
) -> tuple[list[Check], list[dict]]:
    """All applicable integral formulas on ``grid`` plus a divergence-theorem check.

    Returns the checks and the quadrature convergence rows.
    """
    if not model.closed:
        raise HarnessError(f"model {model.name} is not closed; integral formulas need a torus chart")
    kinds = ["mixed_scalar"]
    if I is not None and I.kind != "zero":
        kinds.append("contorsion")
    if I is not None and I.kind == "statistical":
        kinds.append("statistical")
    probe = grid.points()[:: max(1, grid.size // 64)] if probe is None else probe
    if _sigma2_applicable(model, probe):
        kinds.append("sigma2")
    tol = _tol(tols, "integral")
    checks = integral_formula_checks(kinds, model, grid, I, tol=tol, route_tol=tol, div_tol=_tol(tols, "divergence"), workers=workers)

    rows = []
    if convergence:
        rows = convergence_pair(kinds, model, grid, I, workers=workers, coarse=totals_from_checks(checks))
    return checks, rows

