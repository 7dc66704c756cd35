"""Quadrature on periodic charts, integral-formula checks and hypothesis reports.

Integrals use the tensor-product trapezoid rule on a uniform periodic grid,
which converges spectrally for smooth periodic integrands.  Sums go through
``math.fsum`` so the result does not depend on chunking or worker count.
"""

from __future__ import annotations

import itertools
import json
import math
import multiprocessing
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .connections import AffineSplit, Contorsion
from .expr import Expression, evaluate, parse_expression
from .geometry import ChartGeometry, GeometryError, MetricField, VectorFieldDef
from . import jets
from .jets import Jet
from .models import ModelSpec
from .multiproduct import SplitGeometry, split_geometry

__all__ = [
    "HarnessError",
    "NonFiniteError",
    "GridSpec",
    "Check",
    "VerificationReport",
    "integrate",
    "integrate_values",
    "evaluate_on_grid",
    "divergence_theorem_check",
    "integral_formula_check",
    "integral_formula_checks",
    "integral_totals",
    "convergence_pair",
    "totals_from_checks",
    "splitting_hypothesis_report",
    "INTEGRAL_KINDS",
]

CHUNK = 1024


class HarnessError(GeometryError):
    pass


class NonFiniteError(HarnessError, ArithmeticError):
    """Integrand samples that are NaN or infinite."""


@dataclass(frozen=True)
class GridSpec:
    nodes: tuple[int, ...]
    periods: tuple[float, ...]

    def __post_init__(self):
        if len(self.nodes) != len(self.periods):
            raise HarnessError("one node count per period is needed")
        if any(int(n) < 8 for n in self.nodes):
            raise HarnessError(f"every axis needs at least 8 nodes, got {self.nodes}")
        if any(not (p > 0 and math.isfinite(p)) for p in self.periods):
            raise HarnessError("periods must be positive")

    @classmethod
    def uniform(cls, n: int, model_or_periods) -> "GridSpec":
        periods = model_or_periods.periods if isinstance(model_or_periods, ModelSpec) else tuple(model_or_periods)
        if periods is None:
            raise HarnessError("model is not closed; quadrature needs a periodic chart")
        return cls((int(n),) * len(periods), tuple(float(p) for p in periods))

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def cell(self) -> float:
        return float(np.prod([p / n for p, n in zip(self.periods, self.nodes)]))

    def points(self) -> np.ndarray:
        axes = [np.arange(n) * (p / n) for n, p in zip(self.nodes, self.periods)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(self.nodes))

    def refined(self) -> "GridSpec":
        return GridSpec(tuple(2 * n for n in self.nodes), self.periods)


# ---------------------------------------------------------------------------
# evaluation on grids
# ---------------------------------------------------------------------------

_TASK: Callable | None = None


def _run(chunk):
    return _TASK(chunk)


def evaluate_on_grid(fn: Callable[[np.ndarray], dict], points: np.ndarray, workers: int = 1, chunk: int = CHUNK) -> dict:
    """Apply ``fn`` to consecutive chunks of ``points`` and concatenate the returned arrays.

    With ``workers > 1`` chunks run in forked processes; results are
    reassembled in chunk order so the output is independent of scheduling.
    """
    global _TASK
    chunks = [points[i:i + chunk] for i in range(0, len(points), chunk)]
    if workers > 1 and len(chunks) > 1:
        _TASK = fn
        try:
            with multiprocessing.get_context("fork").Pool(workers) as pool:
                parts = pool.map(_run, chunks)
        finally:
            _TASK = None
    else:
        parts = [fn(c) for c in chunks]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def integrate_values(values: np.ndarray, density: np.ndarray, grid: GridSpec) -> float:
    """Trapezoid sum of ``values * density`` over the grid."""
    prod = np.asarray(values, float) * np.asarray(density, float)
    if not np.all(np.isfinite(prod)):
        raise NonFiniteError("non-finite integrand samples")
    return math.fsum(prod.ravel().tolist()) * grid.cell


def integrate(f: Expression | str | Callable, g: MetricField, grid: GridSpec, workers: int = 1) -> float:
    """``int f dvol_g`` over the torus cell described by ``grid``."""
    if isinstance(f, str):
        f = parse_expression(f, g.coords)
    pts = grid.points()

    def task(p):
        geo = ChartGeometry(g.jet(p, 1))
        vals = evaluate(f, p) if isinstance(f, Expression) else np.asarray(f(p), float)
        return {"f": vals, "rho": geo.density.val}

    out = evaluate_on_grid(task, pts, workers)
    return integrate_values(out["f"], out["rho"], grid)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class Check:
    id: str
    description: str
    value: float
    tolerance: float | None
    passed: bool | None  # None marks a measurement that is reported but not asserted
    model: str = ""
    grid: tuple[int, ...] | None = None
    points: int = 0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {
            "id": self.id,
            "description": self.description,
            "value": _num(self.value),
            "tolerance": None if self.tolerance is None else _num(self.tolerance),
            "pass": None if self.passed is None else bool(self.passed),
            "model": self.model,
            "grid": list(self.grid) if self.grid else None,
            "points": int(self.points),
        }
        if self.extra:
            d["extra"] = _clean(self.extra)
        return d


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)
    convergence: list[dict] = field(default_factory=list)
    hypotheses: dict | None = None
    meta: dict = field(default_factory=dict)

    def add(self, checks: Check | Sequence[Check]) -> None:
        self.checks.extend([checks] if isinstance(checks, Check) else checks)

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks) and all(r.get("converged", True) for r in self.convergence)

    def to_json(self) -> str:
        doc = {
            "meta": _clean(self.meta),
            "checks": [c.as_dict() for c in self.checks],
            "convergence": _clean(self.convergence),
            "hypotheses": _clean(self.hypotheses),
            "summary": {
                "total": len(self.checks),
                "failed": sum(c.passed is False for c in self.checks),
                "measured": sum(c.passed is None for c in self.checks),
                "pass": self.passed,
            },
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"


# ---------------------------------------------------------------------------
# divergence theorem
# ---------------------------------------------------------------------------


def divergence_theorem_check(X, g: MetricField, grid: GridSpec, tol: float = 1e-10, workers: int = 1, name: str = "field") -> Check:
    """``|int Div X dvol|`` relative to ``int |X| dvol``.

    ``X`` is a :class:`VectorFieldDef` or a callable ``(points, geo) -> Jet``
    giving the vector field to order at least 1.
    """
    pts = grid.points()

    def task(p):
        geo = ChartGeometry(g.jet(p, 2))
        V = X.jet(p, 1) if isinstance(X, VectorFieldDef) else X(p, geo)
        nrm = np.sqrt(np.abs(np.einsum("...a,...ab,...b->...", V.val, geo.g.val, V.val)))
        return {"div": geo.div(V).val, "norm": nrm, "rho": geo.density.val}

    out = evaluate_on_grid(task, pts, workers)
    val = integrate_values(out["div"], out["rho"], grid)
    scale = integrate_values(out["norm"], out["rho"], grid)
    rel = abs(val) / max(scale, 1e-300)
    return Check(f"divergence_theorem:{name}", "total divergence relative to total |X|", rel, tol, rel <= tol, grid=grid.nodes, points=grid.size, extra={"integral": val, "scale": scale})


# ---------------------------------------------------------------------------
# integral formulas
# ---------------------------------------------------------------------------

INTEGRAL_KINDS = ("mixed_scalar", "contorsion", "statistical", "sigma2")


def _contorsion_jet(I: Contorsion | None, sg: SplitGeometry, pts, order: int) -> Jet | None:
    if I is None or I.kind == "zero":
        return None
    return I.tensor_jet(sg.geo.g, pts, order)


def _sigma2_fields(sg: SplitGeometry) -> dict:
    """``sigma_2`` of the leaves orthogonal to each 1-dimensional block, plus ``Ric(N, N)``."""
    geo = sg.geo
    g, Ric = geo.g.val, geo.ricci.val
    out = {}
    for i, b in enumerate(sg.blocks):
        N = sg.spans[i].val[..., 0]
        N = N / np.sqrt(np.einsum("...a,...ab,...b->...", N, g, N))[..., None]
        leaves = b.complement
        hN = np.einsum("...kxy,...kl,...l->...xy", leaves.h.val, g, N)
        A = np.einsum("...kx,...xy->...ky", leaves.G.val, hN)
        tr = np.einsum("...kk->...", A)
        tr2 = np.einsum("...kl,...lk->...", A, A)
        out[f"sigma2_{i}"] = 0.5 * (tr * tr - tr2)
        out[f"ricNN_{i}"] = np.einsum("...a,...ab,...b->...", N, Ric, N)
        out[f"divpair_{i}"] = geo.div(b.H + leaves.H).val
        out[f"leafT_{i}"] = np.abs(leaves.T.val).reshape(len(N), -1).max(axis=1)
    return out


def _zero_contorsion(sg: SplitGeometry) -> Jet:
    return jets.constant(np.zeros(sg.geo.g.shape + (sg.n,)), sg.n, 2)


def _integral_task(model: ModelSpec, I: Contorsion | None, kinds: Sequence[str]):
    """Pointwise integrand, divergence and absolute parts for each kind, sharing one split geometry."""

    def task(p):
        sg = split_geometry(model.metric, model.split, p, order=2, validate=False)
        geo = sg.geo
        out = {"rho": geo.density.val}
        q = [b.q_function.val for b in sg.blocks]
        a = a0 = None
        if {"contorsion", "statistical"} & set(kinds):
            Ij = _contorsion_jet(I, sg, p, 2)
            a = AffineSplit(sg, Ij if Ij is not None else _zero_contorsion(sg))
            # values suffice for Qbar; an order-0 contorsion keeps its contractions at order 0
            a0 = AffineSplit(sg, a.I.truncate(0))
        for kind in kinds:
            if kind == "mixed_scalar":
                S = sg.mixed_scalar().val
                integrand, vec = 2 * S - sum(q), sg.mean_curvature_field()
                l1 = 2 * np.abs(S) + sum(np.abs(x) for x in q)
                out["mean_curvature_norm"] = np.sqrt(np.abs(np.einsum("...a,...ab,...b->...", vec.val, geo.g.val, vec.val)))
            elif kind in ("contorsion", "statistical"):
                Sbar = a.total_bar_mixed_scalar().val
                if kind == "contorsion":
                    qbar = [a0.bar_q(b).val for b in sg.blocks]
                    vec = None
                    for b in sg.blocks:
                        v = a.div_vector(b) + b.H + b.complement.H
                        vec = v if vec is None else vec + v
                else:
                    qbar = [a0.bar_q_statistical(b).val for b in sg.blocks]
                    vec = sg.mean_curvature_field()
                integrand = 2 * Sbar - sum(q) - sum(qbar)
                l1 = 2 * np.abs(Sbar) + sum(np.abs(x) for x in q) + sum(np.abs(x) for x in qbar)
            elif kind == "sigma2":
                f = _sigma2_fields(sg)
                s2 = sum(f[f"sigma2_{i}"] for i in range(sg.k))
                integrand = 2 * s2 - geo.scalar.val
                l1 = 2 * np.abs(s2) + np.abs(geo.scalar.val)
                out["sigma2:leafT"] = np.max([f[f"leafT_{i}"] for i in range(sg.k)], axis=0)
                for i in range(sg.k):
                    out[f"sigma2:single_{i}"] = 2 * f[f"sigma2_{i}"] - f[f"ricNN_{i}"]
                    out[f"sigma2:single_div_{i}"] = -f[f"divpair_{i}"]
                vec = None
                out["sigma2:divergence"] = -sum(f[f"divpair_{i}"] for i in range(sg.k))
            else:
                raise HarnessError(f"unknown integral kind {kind!r}; expected one of {INTEGRAL_KINDS}")
            out[f"{kind}:integrand"] = integrand
            out[f"{kind}:l1"] = l1
            if vec is not None:
                out[f"{kind}:divergence"] = geo.div(vec).val
        return out

    return task


_DESCRIPTIONS = {
    "mixed_scalar": "total of 2 S_mix - sum_i Q(D_i)",
    "contorsion": "total of 2 Sbar_mix - sum_i (Q(D_i) + Qbar(D_i))",
    "statistical": "total of 2 Sbar_mix - sum_i (Q + <tr I, tr_perp I> - 1/2 <I, I>|V)",
    "sigma2": "total of 2 sum_i sigma_2(F_i) - S for n codimension-one foliations",
}


def _validate_kind(kind: str, model: ModelSpec, I: Contorsion | None) -> None:
    if kind not in INTEGRAL_KINDS:
        raise HarnessError(f"unknown integral kind {kind!r}; expected one of {INTEGRAL_KINDS}")
    if not model.closed:
        raise HarnessError(f"model {model.name} is not closed; integral formulas need a torus chart")
    if kind == "sigma2":
        if any(d != 1 for d in model.split.dims):
            raise HarnessError("the sigma_2 formula needs n one-dimensional blocks")
        if any(s < 0 for s in model.metric.signature):
            raise HarnessError("the sigma_2 formula needs a Riemannian metric")
    if kind == "statistical" and I is not None and I.kind not in ("statistical", "zero"):
        raise HarnessError("the statistical formula needs a statistical contorsion")


def integral_formula_checks(
    kinds: Sequence[str],
    model: ModelSpec,
    grid: GridSpec,
    I: Contorsion | None = None,
    tol: float = 1e-7,
    route_tol: float = 1e-7,
    div_tol: float = 1e-8,
    workers: int = 1,
) -> list[Check]:
    """Evaluate several integral formulas in one pass over the grid, each by both routes.

    The integrand route integrates the pointwise combination, the divergence
    route integrates the divergence it equals.  Each total must vanish within
    ``tol * max(1, L1)``, ``L1`` being the total of the absolute parts, and
    the two routes must agree pointwise within ``route_tol``.
    """
    kinds = list(dict.fromkeys(kinds))
    for kind in kinds:
        _validate_kind(kind, model, I)
    out = evaluate_on_grid(_integral_task(model, I, kinds), grid.points(), workers)
    rho = out["rho"]
    base = dict(model=model.name, grid=grid.nodes, points=grid.size)
    checks = []
    if "mixed_scalar" in kinds:
        # divergence theorem for sum(H_i + H_i^perp), relative to its total norm
        val = integrate_values(out["mixed_scalar:divergence"], rho, grid)
        scale = integrate_values(out["mean_curvature_norm"], rho, grid)
        rel = abs(val) / scale if scale > 0 else abs(val)
        checks.append(
            Check("divergence_theorem:mean_curvature_field", "total divergence of sum(H_i + H_i^perp) relative to its total norm",
                  rel, div_tol, rel <= div_tol, extra={"integral": val, "scale": scale}, **base)
        )
    for kind in kinds:
        if kind == "sigma2" and float(out["sigma2:leafT"].max()) > 1e-9:
            raise HarnessError("the sigma_2 formula needs integrable leaves orthogonal to every block")
        f, d = out[f"{kind}:integrand"], out[f"{kind}:divergence"]
        val = integrate_values(f, rho, grid)
        dval = integrate_values(d, rho, grid)
        l1 = integrate_values(out[f"{kind}:l1"], rho, grid)
        pointwise = float(np.abs(f - d).max())
        limit = tol * max(1.0, l1)
        checks += [
            Check(f"integral:{kind}:integrand", _DESCRIPTIONS[kind], abs(val), limit, abs(val) <= limit, extra={"integral": val, "l1": l1}, **base),
            Check(f"integral:{kind}:divergence", "same total through the divergence it equals", abs(dval), limit, abs(dval) <= limit, extra={"integral": dval}, **base),
            Check(f"integral:{kind}:routes", "integrand and divergence routes agree pointwise", pointwise, route_tol, pointwise <= route_tol, **base),
        ]
        if kind == "sigma2":
            for i in range(model.split.k):
                sf, sd = out[f"sigma2:single_{i}"], out[f"sigma2:single_div_{i}"]
                sv = integrate_values(sf, rho, grid)
                gap = float(np.abs(sf - sd).max())
                checks.append(
                    Check(
                        f"integral:sigma2:single_{i}", "total of 2 sigma_2 - Ric(N, N) for one foliation", abs(sv), limit,
                        abs(sv) <= limit and gap <= route_tol, extra={"integral": sv, "route_gap": gap}, **base,
                    )
                )
    return checks


def integral_formula_check(kind: str, model: ModelSpec, grid: GridSpec, I: Contorsion | None = None, **kw) -> list[Check]:
    """Single-kind form of :func:`integral_formula_checks`."""
    return integral_formula_checks([kind], model, grid, I, **kw)


def integral_totals(kinds: Sequence[str], model: ModelSpec, grid: GridSpec, I: Contorsion | None = None, workers: int = 1) -> dict:
    """Integrand-route total and ``L1`` scale of each kind on ``grid``."""
    for kind in kinds:
        _validate_kind(kind, model, I)
    out = evaluate_on_grid(_integral_task(model, I, kinds), grid.points(), workers)
    return {
        k: (integrate_values(out[f"{k}:integrand"], out["rho"], grid), integrate_values(out[f"{k}:l1"], out["rho"], grid))
        for k in kinds
    }


def convergence_pair(
    kinds: Sequence[str], model: ModelSpec, grid: GridSpec, I: Contorsion | None = None,
    floor: float = 1e-12, workers: int = 1, coarse: dict | None = None,
) -> list[dict]:
    """Totals at ``grid`` and, unless already at the round-off floor, at the doubled grid.

    ``floor`` is relative to the ``L1`` scale.  ``coarse`` may carry totals
    already computed on ``grid`` (as returned by :func:`integral_totals`).
    A row converges when the doubled-grid value is ten times smaller or
    itself at the floor.
    """
    coarse = coarse if coarse is not None else integral_totals(kinds, model, grid, I, workers)
    pending = [k for k in kinds if abs(coarse[k][0]) > floor * max(1.0, coarse[k][1])]
    fine = integral_totals(pending, model, grid.refined(), I, workers) if pending else {}
    rows = []
    for k in kinds:
        v, l1 = coarse[k]
        row = {"kind": k, "model": model.name, "pairs": [{"nodes": list(grid.nodes), "value": v}], "floor": floor * max(1.0, l1)}
        if k in fine:
            row["pairs"].append({"nodes": list(grid.refined().nodes), "value": fine[k][0]})
            row["converged"] = abs(fine[k][0]) * 10 <= abs(v) or abs(fine[k][0]) <= row["floor"]
        else:
            row["at_floor"] = True
            row["converged"] = True
        rows.append(row)
    return rows


def totals_from_checks(checks: Sequence[Check]) -> dict:
    """``{kind: (integral, L1)}`` recovered from integrand-route checks."""
    out = {}
    for c in checks:
        parts = c.id.split(":")
        if len(parts) == 3 and parts[0] == "integral" and parts[2] == "integrand":
            out[parts[1]] = (c.extra["integral"], c.extra["l1"])
    return out


# ---------------------------------------------------------------------------
# hypotheses of the splitting and compact-leaf results
# ---------------------------------------------------------------------------


def _hypothesis_task(model: ModelSpec, I: Contorsion | None):
    def task(p):
        sg = split_geometry(model.metric, model.split, p, order=2, validate=False)
        geo = sg.geo
        g = geo.g.val
        k = sg.k
        out = {}
        for i, b in enumerate(sg.blocks):
            n = b.dim
            out[f"T_{i}"] = _amax(b.T.val)
            out[f"H_{i}"] = _amax(b.H.val)
            umb = b.h.val - np.einsum("...k,...ij->...kij", b.H.val, b.g_block.val) / n
            out[f"umb_{i}"] = _amax(umb)
        for i, j in itertools.combinations(range(k), 2):
            Pi, Pj = sg.blocks[i].P.val, sg.blocks[j].P.val
            u = sg.union((i, j))
            out[f"mh_{i}_{j}"] = _amax(np.einsum("...kab,...ax,...by->...kxy", u.h.val, Pi, Pj))
            out[f"mT_{i}_{j}"] = _amax(np.einsum("...kab,...ax,...by->...kxy", u.T.val, Pi, Pj))
            out[f"HH_{i}_{j}"] = np.abs(np.einsum("...a,...ab,...b->...", sg.blocks[i].H.val, g, sg.blocks[j].H.val))
        for j, bj in enumerate(sg.blocks):
            # H_i in D_j for every i != j
            worst = np.zeros(len(p))
            for i, bi in enumerate(sg.blocks):
                if i != j:
                    off = bi.H.val - np.einsum("...kl,...l->...k", bj.P.val, bi.H.val)
                    worst = np.maximum(worst, _amax(off))
            out[f"Hin_{j}"] = worst
        Ij = _contorsion_jet(I, sg, p, 2)
        Rl = None if Ij is None else geo.bar_riemann_low(Ij)
        out["Sbar"] = sg.mixed_scalar(Rl).val
        if Ij is not None:
            out["adapted"] = AffineSplit(sg, Ij).cross_block_norm() * np.ones(len(p))
        return out

    return task


def _amax(x: np.ndarray) -> np.ndarray:
    return np.abs(x).reshape(x.shape[0], -1).max(axis=1)


def splitting_hypothesis_report(model: ModelSpec, grid: GridSpec | None = None, I: Contorsion | None = None, points=None, tol: float = 1e-9, workers: int = 1) -> dict:
    """Evaluate the hypotheses of the splitting and compact-leaf results on a point set.

    Conclusions are cited, never computed.  Returns a plain dict (JSON-ready).
    """
    if points is None:
        if grid is None:
            raise HarnessError("a grid or an explicit point set is needed")
        points = grid.points()
    pts = model.check_points(points)
    out = evaluate_on_grid(_hypothesis_task(model, I), pts, workers)
    k = model.split.k
    riem = all(s > 0 for s in model.metric.signature)
    stat_adapted = I is None or I.kind == "zero" or (I.kind == "statistical" and float(out["adapted"].max()) < tol)
    integrable = [float(out[f"T_{i}"].max()) < tol for i in range(k)]
    harmonic = [float(out[f"H_{i}"].max()) < tol for i in range(k)]
    umbilical = [float(out[f"umb_{i}"].max()) < tol for i in range(k)]
    pairs = list(itertools.combinations(range(k), 2))
    mixed_int = all(float(out[f"mT_{i}_{j}"].max()) < tol for i, j in pairs)
    mixed_tg = all(float(out[f"mh_{i}_{j}"].max()) < tol for i, j in pairs)
    h_orth = all(float(out[f"HH_{i}_{j}"].max()) < tol for i, j in pairs)
    S = out["Sbar"]
    s_min, s_max = float(S.min()), float(S.max())
    product = all(integrable) and all(harmonic) and all(float(out[f"umb_{i}"].max()) < tol for i in range(k)) and mixed_tg and mixed_int
    sets = {
        "nonnegative_curvature_splitting": {
            "hypotheses": {
                "riemannian": riem, "statistical_adapted": stat_adapted, "integrable": all(integrable),
                "harmonic": all(harmonic), "mixed_integrable": mixed_int, "Sbar_nonnegative": s_min >= -tol,
            },
            "conclusion": "(M, g) splits (de Rham decomposition)",
        },
        "umbilical_splitting": {
            "hypotheses": {
                "riemannian": riem, "statistical_adapted": stat_adapted, "totally_umbilical": all(umbilical),
                "mixed_totally_geodesic": mixed_tg, "mean_curvatures_orthogonal": h_orth,
                "closed_or_complete_with_L1_field": bool(model.closed), "Sbar_nonpositive": s_max <= tol,
            },
            "conclusion": "(M, g) splits; on a closed multiply twisted product M is the direct product",
        },
    }
    for j in range(k):
        sets[f"no_compact_leaves_D{j + 1}"] = {
            "hypotheses": {
                "riemannian": riem, "statistical_adapted": stat_adapted, "integrable": all(integrable),
                "mixed_integrable": mixed_int, "harmonic_block": harmonic[j],
                "other_mean_curvatures_inside": float(out[f"Hin_{j}"].max()) < tol, "Sbar_positive": s_min > tol,
            },
            "conclusion": f"a foliation tangent to D{j + 1} has no compact leaves",
        }
    satisfied = [name for name, s in sets.items() if all(s["hypotheses"].values())]
    for name in satisfied:
        if name.endswith("splitting") and product:
            sets[name]["conclusion"] = "splits (trivially verified: product metric)"
    return _clean({
        "model": model.name,
        "points": len(pts),
        "measurements": {
            "T": [float(out[f"T_{i}"].max()) for i in range(k)],
            "H": [float(out[f"H_{i}"].max()) for i in range(k)],
            "umbilicity": [float(out[f"umb_{i}"].max()) for i in range(k)],
            "mixed_h": {f"{i + 1},{j + 1}": float(out[f"mh_{i}_{j}"].max()) for i, j in pairs},
            "mixed_T": {f"{i + 1},{j + 1}": float(out[f"mT_{i}_{j}"].max()) for i, j in pairs},
            "H_inner": {f"{i + 1},{j + 1}": float(out[f"HH_{i}_{j}"].max()) for i, j in pairs},
            "Sbar_min": s_min,
            "Sbar_max": s_max,
        },
        "hypothesis_sets": sets,
        "satisfied": satisfied,
    })
