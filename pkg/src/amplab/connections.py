"""Contorsion tensors ``I = nabla_bar - nabla`` and the quantities built from them.

Layout: ``I[k, i, j] = (I_{d_i} d_j)^k``.  Every tensor here is a jet over a
batch of points, so divergences and the curvature of ``nabla + I`` come from
the same pipeline as the Levi-Civita objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import jets
from .expr import Expression, jet_of, parse_expression
from .geometry import ChartGeometry, GeometryError, MetricField, VectorFieldDef
from .jets import Jet, einsum
from .multiproduct import Distribution, SplitGeometry, SplittingSpec, split_geometry

__all__ = [
    "ContorsionError",
    "Contorsion",
    "ConjugateSet",
    "build_contorsion",
    "conjugates",
    "star",
    "wedge",
    "is_metric_compatible",
    "is_statistical",
    "AffineSplit",
    "affine_split",
    "adapted_statistical_check",
    "partial_traces",
    "bar_q",
    "bar_mixed_scalar",
    "SYMMETRY_TOL",
]

SYMMETRY_TOL = 1e-12
KINDS = ("zero", "statistical", "semi_symmetric", "general")


class ContorsionError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# contorsion definitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Contorsion:
    """A contorsion tensor of one of four kinds.

    ``statistical`` holds a cubic form ``A[i][j][l]`` (fully symmetric) and
    gives ``I[k, i, j] = g^{kl} A_{ijl}``.  ``semi_symmetric`` holds a vector
    field ``U`` and gives ``I_X Y = <U, Y> X - <X, Y> U``.  ``general`` holds
    the (1,2) components directly.  ``jet_fn`` kinds are an internal escape
    hatch for perturbations built numerically from jets.
    """

    kind: str
    coords: tuple[str, ...]
    data: object = None
    jet_fn: Callable | None = None

    @property
    def dim(self) -> int:
        return len(self.coords)

    def tensor_jet(self, gjet: Jet, points, order: int) -> Jet:
        """Jet of ``I[k, i, j]`` at ``points``; the metric jet is needed for index raising."""
        pts = np.atleast_2d(np.asarray(points, float))
        n = self.dim
        B = pts.shape[0]
        g = gjet.truncate(order) if gjet.order > order else gjet
        if self.kind == "zero":
            return jets.constant(np.zeros((B, n, n, n)), n, order)
        if self.jet_fn is not None:
            return self.jet_fn(g, pts, order)
        cj = jets.coordinate_jets(pts, order)
        if self.kind == "statistical":
            A = _stack_exprs(self.data, cj, (n, n, n), B)
            return einsum("...kl,...ijl->...kij", jets.inv(g), A)
        if self.kind == "semi_symmetric":
            U = self.data.jet(pts, order)
            Ul = einsum("...jl,...l->...j", g, U)
            eye = np.broadcast_to(np.eye(n), (B, n, n))
            return einsum("...j,...ki->...kij", Ul, jets.constant(eye, n, order)) - einsum("...ij,...k->...kij", g, U)
        if self.kind == "general":
            return _stack_exprs(self.data, cj, (n, n, n), B)
        raise ContorsionError(f"unknown contorsion kind {self.kind!r}")

    def value(self, g: MetricField, p) -> np.ndarray:
        pts = np.asarray(p, float).reshape(1, -1)
        return self.tensor_jet(g.jet(pts, 0), pts, 0).val[0]


def _stack_exprs(arr, coord_jets, shape, B) -> Jet:
    flat = [jet_of(e, coord_jets) for e in np.asarray(arr, dtype=object).ravel()]
    return jets.stack(flat, axis=-1).reshape((B,) + shape) if flat else None


def _parse_array(entries, coords, params, shape) -> np.ndarray:
    arr = np.empty(shape, dtype=object)
    src = np.asarray(entries, dtype=object)
    if src.shape != shape:
        raise ContorsionError(f"expected components of shape {shape}, got {src.shape}")
    for idx in np.ndindex(shape):
        e = src[idx]
        arr[idx] = e if isinstance(e, Expression) else parse_expression(e, coords, params)
    return arr


def build_contorsion(kind: str, coords: Sequence[str], data=None, params=None, check_points=None) -> Contorsion:
    """Validate ``data`` for ``kind`` and return a :class:`Contorsion`.

    A statistical cubic form is checked for full symmetry at ``check_points``
    (a few random points of the unit cube when omitted).
    """
    coords = tuple(coords)
    n = len(coords)
    if kind not in KINDS:
        raise ContorsionError(f"unknown contorsion kind {kind!r}; expected one of {KINDS}")
    if kind == "zero":
        return Contorsion("zero", coords)
    if kind == "semi_symmetric":
        U = data if isinstance(data, VectorFieldDef) else VectorFieldDef.from_strings(coords, data, params)
        if U.dim != n:
            raise ContorsionError("semi-symmetric vector field has the wrong dimension")
        return Contorsion("semi_symmetric", coords, U)
    arr = _parse_array(data, coords, params, (n, n, n))
    if kind == "statistical":
        pts = np.random.default_rng(0).uniform(0.0, 2 * np.pi, (5, n)) if check_points is None else np.atleast_2d(check_points)
        from .expr import evaluate

        vals = np.stack([evaluate(e, pts) for e in arr.ravel()], axis=-1).reshape((len(pts), n, n, n))
        scale = max(1.0, float(np.abs(vals).max()))
        for perm in ((0, 2, 1, 3), (0, 3, 2, 1), (0, 1, 3, 2)):
            if np.abs(vals - vals.transpose(perm)).max() > SYMMETRY_TOL * scale:
                raise ContorsionError("cubic form of a statistical connection must be fully symmetric")
    return Contorsion(kind, coords, arr)


# ---------------------------------------------------------------------------
# conjugates
# ---------------------------------------------------------------------------


def star(I, g, ginv):
    """``<I*_X Y, Z> = <I_X Z, Y>``; works on jets and on plain arrays."""
    if isinstance(I, Jet):
        return einsum("...kz,...ly,...lxz->...kxy", ginv, g, I)
    return np.einsum("...kz,...ly,...lxz->...kxy", ginv, g, I)


def wedge(I):
    """``I^wedge_X Y = I_Y X``."""
    return I.swapaxes(-1, -2)


@dataclass(frozen=True)
class ConjugateSet:
    star: np.ndarray
    wedge: np.ndarray
    theta: np.ndarray


def conjugates(I: np.ndarray, g: np.ndarray) -> ConjugateSet:
    """Pointwise ``I*``, ``I^wedge`` and ``Theta = I - I* + I^wedge - I*^wedge``."""
    I = np.asarray(I, float)
    s = star(I, g, np.linalg.inv(g))
    return ConjugateSet(s, wedge(I), I - s + wedge(I) - wedge(s))


def is_metric_compatible(I: np.ndarray, g: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    """Riemann-Cartan classifier: ``I* = -I``."""
    c = conjugates(I, g)
    return bool(np.abs(c.star + I).max() <= tol * max(1.0, np.abs(I).max()))


def is_statistical(I: np.ndarray, g: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    """``I = I* = I^wedge``."""
    c = conjugates(I, g)
    scale = max(1.0, np.abs(I).max())
    return bool(np.abs(c.star - I).max() <= tol * scale and np.abs(c.wedge - I).max() <= tol * scale)


# ---------------------------------------------------------------------------
# batch engine
# ---------------------------------------------------------------------------


class AffineSplit:
    """A :class:`SplitGeometry` together with a contorsion jet."""

    def __init__(self, split: SplitGeometry, I: Jet):
        self.split = split
        self.geo: ChartGeometry = split.geo
        self.I = I

    @cached_property
    def Istar(self) -> Jet:
        return star(self.I, self.geo.g, self.geo.ginv)

    @cached_property
    def theta(self) -> Jet:
        I, S = self.I, self.Istar
        return I - S + wedge(I) - wedge(S)

    @cached_property
    def bar_riemann_low(self) -> Jet:
        return self.geo.bar_riemann_low(self.I)

    # -- per distribution ------------------------------------------------
    @staticmethod
    def trace_on(t: Jet, d: Distribution) -> Jet:
        """``sum_{a in D} eps_a t(E_a, E_a)`` for a (1,2) tensor."""
        return einsum("...kij,...ij->...k", t, d.G)

    def restricted_pair(self, X: Jet, Y: Jet, d: Distribution) -> Jet:
        """``sum_{a in D, b in D^perp} eps_a eps_b (<X_a E_b, Y_b E_a> + <Y_a E_b, X_b E_a>)``."""
        G, Gc, g = d.G, d.complement.G, self.geo.g

        def half(a, b):
            # contract b with the metrics first to avoid the a x b outer product
            bb = einsum("...lqp,...kl,...ip,...jq->...kij", b, g, G, Gc)
            return einsum("...kij,...kij->...", a, bb)

        return half(X, Y) + half(Y, X)

    def norm_on_v(self, t: Jet, d: Distribution) -> Jet:
        """``<t, t>`` summed over ``V(D) = D x D^perp  u  D^perp x D``."""
        G, Gc, g = d.G, d.complement.G, self.geo.g
        tl = einsum("...lpq,...kl->...kpq", t, g)
        w = einsum("...kpq,...ip,...jq->...kij", tl, G, Gc) + einsum("...kpq,...ip,...jq->...kij", tl, Gc, G)
        return einsum("...kij,...kij->...", t, w)

    def theta_term(self, d: Distribution) -> Jet:
        """Frame expansion of ``<Theta, A^perp - T^perp# + A - T#>``."""
        c = d.complement
        G, Gc, g = d.G, c.G, self.geo.g
        Mc = c.A - c.Tsharp  # Z in D, X in D^perp
        Md = d.A - d.Tsharp  # Z in D^perp, X in D
        th = einsum("...kba,...kl->...lba", self.theta, g)
        one = einsum("...lba,...lpq,...ap,...bq->...", th, Mc, G, Gc)
        two = einsum("...lba,...lqp,...ap,...bq->...", th, Md, G, Gc)
        return one + two

    def div_vector(self, d: Distribution) -> Jet:
        """``1/2 (P tr_{D^perp}(I - I*) + P^perp tr_D(I - I*))``."""
        c = d.complement
        diff = self.I - self.Istar
        a = einsum("...kl,...l->...k", d.P, self.trace_on(diff, c))
        b = einsum("...kl,...l->...k", c.P, self.trace_on(diff, d))
        return (a + b) * 0.5

    def bar_q(self, d: Distribution) -> Jet:
        c = d.complement
        dot = self.geo.dot
        I, S = self.I, self.Istar
        trI, trIc = self.trace_on(I, d), self.trace_on(I, c)
        trS, trSc = self.trace_on(S, d), self.trace_on(S, c)
        two_q = dot(trI, trSc) + dot(trIc, trS) - self.restricted_pair(I, S, d)
        two_q = two_q + dot((trI - trS) - (trIc - trSc), d.H - c.H) + self.theta_term(d)
        return two_q * 0.5

    def bar_q_statistical(self, d: Distribution) -> Jet:
        """Closed form valid when ``I = I* = I^wedge``."""
        tr, trc = self.trace_on(self.I, d), self.trace_on(self.I, d.complement)
        return (self.geo.dot(tr, trc) * 2.0 - self.norm_on_v(self.I, d)) * 0.5

    def bar_q_semi_symmetric(self, d: Distribution, U: Jet, printed: bool = False) -> Jet:
        """Closed form for ``I_X Y = <U, Y> X - <X, Y> U``.

        Expanding the general frame formula gives
        ``-Qbar = (n' - n)<U, H' - H> + n n' |U|^2 - n' |PU|^2 - n |P'U|^2``
        (primes: complement).  ``printed=True`` returns the older normalisation
        ``-2 Qbar = (n' - n)<U, H' - H> + n n' |U|^2 - n' |P'U|^2 - n |PU|^2``,
        kept only so the discrepancy can be measured.
        """
        c = d.complement
        dot = self.geo.dot
        n, nc = d.dim, c.dim
        Ut = einsum("...kl,...l->...k", d.P, U)
        Un = einsum("...kl,...l->...k", c.P, U)
        if printed:
            rhs = dot(U, c.H - d.H) * (nc - n) + dot(U, U) * (nc * n) - dot(Un, Un) * nc - dot(Ut, Ut) * n
            return rhs * -0.5
        rhs = dot(U, c.H - d.H) * (nc - n) + dot(U, U) * (nc * n) - dot(Ut, Ut) * nc - dot(Un, Un) * n
        return rhs * -1.0

    def bar_mixed_scalar(self, d: Distribution) -> Jet:
        return d.mixed_scalar(self.bar_riemann_low)

    def div_barq_residual(self, d: Distribution) -> Jet:
        """``1/2 Div(...) - (Sbar - S - Qbar)`` for the pair ``(D, D^perp)``."""
        lhs = self.geo.div(self.div_vector(d))
        rhs = self.bar_mixed_scalar(d) - d.mixed_scalar() - self.bar_q(d)
        return lhs.truncate(0) - rhs.truncate(0)

    # -- whole splitting ---------------------------------------------------
    def total_bar_mixed_scalar(self) -> Jet:
        return self.split.mixed_scalar(self.bar_riemann_low)

    def q1q2_residual(self) -> Jet:
        """Divergence identity for ``k`` blocks with ``I``: ``Div(...) - (2 Sbar - sum(Qbar + Q))``."""
        vec = None
        rhs = self.total_bar_mixed_scalar().truncate(0) * 2.0
        for d in self.split.blocks:
            v = self.div_vector(d) + d.H + d.complement.H
            vec = v if vec is None else vec + v
            rhs = rhs - self.bar_q(d).truncate(0) - d.q_function.truncate(0)
        return self.geo.div(vec).truncate(0) - rhs

    def statistical_residual(self) -> Jet:
        """``2 Sbar - 2 S - sum(<tr_perp I, tr I> - 1/2 <I, I>|V)`` (zero for statistical ``I``)."""
        out = (self.total_bar_mixed_scalar() - self.split.mixed_scalar()).truncate(0) * 2.0
        for d in self.split.blocks:
            out = out - self.bar_q_statistical(d).truncate(0)
        return out

    def partial_traces(self, d: Distribution) -> dict[str, Jet]:
        c = d.complement
        return {
            "tr": self.trace_on(self.I, d),
            "tr_perp": self.trace_on(self.I, c),
            "tr_star": self.trace_on(self.Istar, d),
            "tr_star_perp": self.trace_on(self.Istar, c),
        }

    def cross_block_norm(self) -> float:
        """Largest ``|I_X Y|`` with ``X``, ``Y`` in different blocks (adaptedness)."""
        P = [b.P.val for b in self.split.blocks]
        I = self.I.val
        worst = 0.0
        for i, Pi in enumerate(P):
            for j, Pj in enumerate(P):
                if i != j:
                    part = np.einsum("...kab,...ax,...by->...kxy", I, Pi, Pj)
                    worst = max(worst, float(np.abs(part).max()))
        return worst


def affine_split(g: MetricField, split: SplittingSpec, I: Contorsion, points, order: int = 2, validate: bool = True) -> AffineSplit:
    sg = split_geometry(g, split, points, order, validate)
    return AffineSplit(sg, I.tensor_jet(sg.geo.g, np.atleast_2d(points), order))


# ---------------------------------------------------------------------------
# pointwise API
# ---------------------------------------------------------------------------


def adapted_statistical_check(I: Contorsion, g: MetricField, split: SplittingSpec, p, tol: float = 1e-10) -> bool:
    """True iff ``I_X Y = 0`` whenever ``X`` and ``Y`` lie in different blocks."""
    if I.kind not in ("statistical", "zero"):
        raise ContorsionError("adaptedness check applies to statistical contorsions")
    a = affine_split(g, split, I, np.asarray(p, float).reshape(1, -1), order=1)
    return a.cross_block_norm() < tol


def partial_traces(I: Contorsion, g: MetricField, split: SplittingSpec, p, i: int) -> dict[str, np.ndarray]:
    a = affine_split(g, split, I, np.asarray(p, float).reshape(1, -1), order=1)
    return {k: v.val[0] for k, v in a.partial_traces(a.split.blocks[i]).items()}


def bar_q(g: MetricField, split: SplittingSpec, I: Contorsion, p, i: int) -> float:
    a = affine_split(g, split, I, np.asarray(p, float).reshape(1, -1), order=1)
    return float(a.bar_q(a.split.blocks[i]).val[0])


def bar_mixed_scalar(g: MetricField, split: SplittingSpec, I: Contorsion, p) -> dict:
    """Per-pair values ``Sbar(D_i, D_j)`` and their total."""
    a = affine_split(g, split, I, np.asarray(p, float).reshape(1, -1), order=2)
    Rl = a.bar_riemann_low
    pairs = {}
    k = a.split.k
    for i in range(k):
        for j in range(i + 1, k):
            pairs[(i, j)] = float(a.split.pair_mixed_scalar(i, j, Rl).val[0])
    return {
        "pairs": pairs,
        "total": float(sum(pairs.values())),
        "blocks": [float(b.mixed_scalar(Rl).val[0]) for b in a.split.blocks],
    }
