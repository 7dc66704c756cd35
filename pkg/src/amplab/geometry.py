"""Levi-Civita data on a coordinate chart.

Everything here works on batches of points: a metric is turned into a jet of
shape ``(B, n, n)`` and each derived quantity loses one jet order per
derivative.  Index layout used throughout the package:

* vectors ``X[..., k]``
* (1,1) tensors ``P[..., k, j]`` acting as ``(P X)^k = P^k_j X^j``
* (1,2) tensors ``I[..., k, i, j]`` with ``I_X Y = I^k_{ij} X^i Y^j``; the
  first lower slot is the direction slot
* Christoffel symbols ``Gamma[..., k, i, j]`` so ``nabla_i d_j = Gamma^k_{ij} d_k``
* curvature ``Rl[..., i, j, k, w] = <R(d_i, d_j) d_k, d_w>`` with the convention
  ``R(X, Y) = [nabla_Y, nabla_X] + nabla_[X,Y]``.  Under this sign choice
  ``<R(E_a, E_b) E_a, E_b>`` is the sectional curvature (+1 on the unit sphere).
* covariant derivatives append the derivative slot last: ``(nabla X)[..., k, m]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import jets
from .expr import Expression, jet_of, parse_expression
from .jets import Jet, einsum

__all__ = [
    "GeometryError",
    "SingularMetricError",
    "SignatureError",
    "MetricField",
    "VectorFieldDef",
    "TensorValue",
    "ChartGeometry",
    "logabsdet",
    "connection_curvature",
    "christoffel",
    "riemann",
    "bar_riemann",
    "divergence",
    "divergence_of_12tensor",
    "covariant_derivative_metric",
]


class GeometryError(ValueError):
    pass


class SingularMetricError(GeometryError, ArithmeticError):
    def __init__(self, message: str, condition: float = np.inf):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


class SignatureError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# user-facing field definitions
# ---------------------------------------------------------------------------


def _as_expr(x, coords, params) -> Expression:
    if isinstance(x, Expression):
        return x
    return parse_expression(x, coords, params)


def _eval_batch(exprs, coord_jets, shape):
    flat = [jet_of(e, coord_jets).c for e in exprs]
    ref = coord_jets[0]
    c = np.stack(flat, axis=-2).reshape(ref.shape + tuple(shape) + (ref.c.shape[-1],))
    return Jet(c, ref.nvars, ref.order)


@dataclass(frozen=True)
class MetricField:
    """Symmetric matrix of expressions over a chart, plus the expected signature."""

    coords: tuple[str, ...]
    entries: tuple[tuple[Expression, ...], ...]
    signature: tuple[int, ...]

    def __post_init__(self):
        n = len(self.coords)
        if n < 1:
            raise GeometryError("a metric needs at least one coordinate")
        if len(self.entries) != n or any(len(r) != n for r in self.entries):
            raise GeometryError(f"metric must be {n}x{n}")
        for i in range(n):
            for j in range(i + 1, n):
                if self.entries[i][j] != self.entries[j][i]:
                    raise GeometryError(f"metric entries ({i},{j}) and ({j},{i}) differ")
        if len(self.signature) != n or any(s not in (-1, 1) for s in self.signature):
            raise GeometryError("signature must list n signs from {-1, +1}")

    @classmethod
    def from_strings(
        cls,
        coords: Sequence[str],
        entries,
        signature: Sequence[int] | None = None,
        params: Mapping[str, float] | None = None,
    ) -> "MetricField":
        """Build from a full matrix or, if ``entries`` is a 1-d list, a diagonal."""
        coords = tuple(coords)
        n = len(coords)
        if len(entries) == n and not isinstance(entries[0], (list, tuple)):
            entries = [[entries[i] if i == j else 0 for j in range(n)] for i in range(n)]
        parsed = tuple(tuple(_as_expr(x, coords, params) for x in row) for row in entries)
        sig = tuple(signature) if signature is not None else (1,) * n
        return cls(coords, parsed, sig)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def jet(self, points, order: int) -> Jet:
        cj = jets.coordinate_jets(points, order)
        n = self.dim
        return _eval_batch([e for row in self.entries for e in row], cj, (n, n))

    def value(self, points) -> np.ndarray:
        return self.jet(points, 0).val

    def validate(self, points, cond_max: float = 1e12) -> None:
        """Check invertibility and signature at each point."""
        check_metric_values(self.value(points), self.signature, cond_max)


def check_metric_values(G: np.ndarray, signature, cond_max: float = 1e12) -> None:
    G = np.asarray(G, float)
    if not np.all(np.isfinite(G)):
        raise SingularMetricError("metric has non-finite entries", np.inf)
    w = np.linalg.eigvalsh(G)
    absw = np.abs(w)
    cond = absw.max(axis=-1) / np.maximum(absw.min(axis=-1), 1e-300)
    worst = float(cond.max())
    if worst > cond_max:
        raise SingularMetricError("metric is singular or nearly so", worst)
    neg = (w < 0).sum(axis=-1)
    want = sum(1 for s in signature if s < 0)
    if np.any(neg != want):
        raise SignatureError(f"metric index {int(neg.flat[np.argmax(neg != want)])} does not match declared {want}")


@dataclass(frozen=True)
class VectorFieldDef:
    """Contravariant components in the chart basis."""

    components: tuple[Expression, ...]

    @classmethod
    def from_strings(cls, coords, components, params=None) -> "VectorFieldDef":
        return cls(tuple(_as_expr(c, tuple(coords), params) for c in components))

    @classmethod
    def coordinate(cls, coords, index: int) -> "VectorFieldDef":
        return cls.from_strings(coords, ["1" if k == index else "0" for k in range(len(coords))])

    @property
    def dim(self) -> int:
        return len(self.components)

    def jet(self, points, order: int) -> Jet:
        cj = jets.coordinate_jets(points, order)
        return _eval_batch(self.components, cj, (self.dim,))


@dataclass(frozen=True)
class TensorValue:
    """Components of a tensor at one point; ``variance`` is a string of 'u'/'d'."""

    variance: str
    components: np.ndarray = field(repr=False)
    point: tuple[float, ...] = ()

    def __post_init__(self):
        comp = np.asarray(self.components, float)
        if comp.ndim != len(self.variance) or any(s != comp.shape[0] for s in comp.shape):
            raise GeometryError("component array does not match variance")
        object.__setattr__(self, "components", comp)

    @property
    def rank(self) -> int:
        return len(self.variance)


# ---------------------------------------------------------------------------
# jet-level building blocks
# ---------------------------------------------------------------------------


def logabsdet(G: Jet) -> Jet:
    """``log|det G|`` of a jet-valued matrix over its last two axes."""
    G0inv = np.linalg.inv(G.val)
    _, ld = np.linalg.slogdet(G.val)
    D = Jet(G.c.copy(), G.nvars, G.order)
    D.c[..., 0] = 0.0
    M = einsum("...ij,...jk->...ik", G0inv, D)
    out = jets.constant(ld, G.nvars, G.order)
    term = None
    for m in range(1, G.order + 1):
        term = M if term is None else einsum("...ij,...jk->...ik", term, M)
        tr = einsum("...ii->...", term)
        out = out + tr * ((-1) ** (m + 1) / m)
    return out


def connection_curvature(Gam: Jet) -> Jet:
    """Curvature of an arbitrary connection with symbols ``Gam[k, i, j]``.

    Returns ``R[i, j, k, l] = (R(d_i, d_j) d_k)^l`` in the convention
    ``R(X, Y) = [nabla_Y, nabla_X] + nabla_[X,Y]``.
    """
    dG = Gam.grad()  # [k, i, j, m] = d_m Gam^k_ij
    # standard R(d_i,d_j)d_s = d_i Gam^r_js - d_j Gam^r_is + Gam^r_il Gam^l_js - Gam^r_jl Gam^l_is
    term = einsum("...rjsi->...ijsr", dG) - einsum("...risj->...ijsr", dG)
    quad = einsum("...ril,...ljs->...ijsr", Gam, Gam)
    std = term + quad - quad.swapaxes(-4, -3)
    return -std


class ChartGeometry:
    """Levi-Civita quantities of a metric jet ``g`` of shape ``(B, n, n)``."""

    def __init__(self, g: Jet):
        if g.order < 1:
            raise GeometryError("metric jet needs order >= 1")
        self.g = g
        self.n = g.shape[-1]

    @cached_property
    def ginv(self) -> Jet:
        return jets.inv(self.g)

    @cached_property
    def gamma(self) -> Jet:
        dg = self.g.grad()  # [a, b, m] = d_m g_ab
        low = einsum("...lji->...lij", dg) + einsum("...lij->...lij", dg) - einsum("...ijl->...lij", dg)
        return einsum("...kl,...lij->...kij", self.ginv, low) * 0.5

    @cached_property
    def riemann_up(self) -> Jet:
        return connection_curvature(self.gamma)

    @cached_property
    def riemann_low(self) -> Jet:
        return einsum("...ijkl,...lw->...ijkw", self.riemann_up, self.g)

    @cached_property
    def ricci(self) -> Jet:
        """``Ric(Y, Z) = sum_a eps_a <R(E_a, Y) E_a, Z>`` (positive on round spheres)."""
        return einsum("...aycz,...ac->...yz", self.riemann_low, self.ginv)

    @cached_property
    def scalar(self) -> Jet:
        return einsum("...yz,...yz->...", self.ricci, self.ginv)

    @cached_property
    def log_density(self) -> Jet:
        return logabsdet(self.g) * 0.5

    @cached_property
    def density(self) -> Jet:
        return self.log_density.exp()

    # -- covariant derivatives -------------------------------------------
    def nabla_vector(self, X: Jet) -> Jet:
        """``(nabla X)[k, m] = d_m X^k + Gamma^k_{mr} X^r``."""
        return X.grad() + einsum("...kmr,...r->...km", self.gamma, X)

    def nabla_form(self, w: Jet) -> Jet:
        """``(nabla w)[j, m] = d_m w_j - Gamma^r_{mj} w_r``."""
        return w.grad() - einsum("...rmj,...r->...jm", self.gamma, w)

    def nabla_11(self, P: Jet) -> Jet:
        G = self.gamma
        return P.grad() + einsum("...kmr,...rj->...kjm", G, P) - einsum("...rmj,...kr->...kjm", G, P)

    def nabla_12(self, P: Jet) -> Jet:
        """``(nabla P)[k, i, j, m]`` for a (1,2) tensor ``P[k, i, j]``."""
        G = self.gamma
        return (
            P.grad()
            + einsum("...kmr,...rij->...kijm", G, P)
            - einsum("...rmi,...krj->...kijm", G, P)
            - einsum("...rmj,...kir->...kijm", G, P)
        )

    def nabla_02(self, S: Jet) -> Jet:
        G = self.gamma
        return S.grad() - einsum("...rmi,...rj->...ijm", G, S) - einsum("...rmj,...ir->...ijm", G, S)

    def div(self, X: Jet) -> Jet:
        return einsum("...kk->...", self.nabla_vector(X))

    def div_density(self, X: Jet) -> Jet:
        """Divergence through ``d_m(rho X^m) / rho``; independent of Gamma."""
        rho = self.density
        return einsum("...mm->...", (X * rho[..., None]).grad()) / rho.truncate(self.g.order - 1)

    def div12(self, P: Jet) -> Jet:
        """``(Div P)(X, Y) = sum_m <(nabla_{e_m} P)(X, Y), e^m>``."""
        return einsum("...kijk->...ij", self.nabla_12(P))

    def partial_div(self, X: Jet, Ginv_block: Jet) -> Jet:
        """``sum_a eps_a <nabla_{E_a} X, E_a>`` over a block with inverse metric ``Ginv_block``."""
        return einsum("...km,...mi,...ik->...", self.nabla_vector(X), Ginv_block, self.g)

    def partial_div12(self, P: Jet, Ginv_block: Jet) -> Jet:
        return einsum("...kijm,...mr,...rk->...ij", self.nabla_12(P), Ginv_block, self.g)

    def deformation(self, Z: Jet, proj: Jet | None = None) -> Jet:
        """Symmetric part of ``<nabla Z, .>``, optionally restricted by a projector."""
        nz = einsum("...km,...ky->...my", self.nabla_vector(Z), self.g)
        S = (nz + nz.T) * 0.5
        if proj is not None:
            S = einsum("...ab,...ax,...by->...xy", S, proj, proj)
        return S

    # -- inner products --------------------------------------------------
    def dot(self, X: Jet, Y: Jet) -> Jet:
        return einsum("...i,...ij,...j->...", X, self.g, Y)

    def lower(self, X: Jet) -> Jet:
        return einsum("...ij,...j->...i", self.g, X)

    def raise_(self, w: Jet) -> Jet:
        return einsum("...ij,...j->...i", self.ginv, w)

    def pair02(self, S: Jet, C: Jet) -> Jet:
        """``<S, C> = S_ab C_cd g^ac g^bd``."""
        gi = self.ginv
        return einsum("...ab,...cd,...ac,...bd->...", S, C, gi, gi)

    def bar_riemann_low(self, I: Jet) -> Jet:
        """``<Rbar(d_i, d_j) d_k, d_w>`` from the Levi-Civita curvature plus the contorsion correction."""
        nI = self.nabla_12(I)  # [k, x, z, m] = (nabla_m I)^k_{xz}
        corr = einsum("...kizj->...ijzk", nI) - einsum("...kjzi->...ijzk", nI)
        quad = einsum("...kjl,...liz->...ijzk", I, I)
        corr = corr + quad - quad.swapaxes(-4, -3)
        up = self.riemann_up + corr
        return einsum("...ijzk,...kw->...ijzw", up, self.g)


# ---------------------------------------------------------------------------
# pointwise convenience API
# ---------------------------------------------------------------------------


def _geometry_at(g: MetricField, p, order: int = 2) -> ChartGeometry:
    pts = np.asarray(p, float).reshape(1, -1)
    if pts.shape[1] != g.dim:
        raise GeometryError(f"point has {pts.shape[1]} coordinates, metric has {g.dim}")
    g.validate(pts)
    return ChartGeometry(g.jet(pts, order))


def christoffel(g: MetricField, p) -> TensorValue:
    geo = _geometry_at(g, p, 1)
    return TensorValue("udd", geo.gamma.val[0], tuple(np.ravel(p)))


def riemann(g: MetricField, p) -> TensorValue:
    """``(R(d_i, d_j) d_k)^l`` stored at index ``[i, j, k, l]``."""
    geo = _geometry_at(g, p, 2)
    return TensorValue("dddu", geo.riemann_up.val[0], tuple(np.ravel(p)))


def bar_riemann(g: MetricField, I, p) -> TensorValue:
    """Curvature of ``nabla + I``; ``I`` is a contorsion object exposing ``tensor_jet``."""
    pts = np.asarray(p, float).reshape(1, -1)
    geo = _geometry_at(g, p, 2)
    Ij = I.tensor_jet(geo.g, pts, 2)
    low = geo.bar_riemann_low(Ij)
    up = einsum("...ijzw,...wk->...ijzk", low, geo.ginv)
    return TensorValue("dddu", up.val[0], tuple(np.ravel(p)))


def divergence(X: VectorFieldDef, g: MetricField, p) -> float:
    geo = _geometry_at(g, p, 2)
    pts = np.asarray(p, float).reshape(1, -1)
    return float(geo.div(X.jet(pts, 2)).val[0])


def divergence_of_12tensor(P: Jet, g: MetricField, p) -> TensorValue:
    """Divergence of a (1,2) tensor given as an order>=1 jet at the single point ``p``."""
    geo = _geometry_at(g, p, P.order + 1)
    return TensorValue("dd", geo.div12(P).val[0], tuple(np.ravel(p)))


def covariant_derivative_metric(geo: ChartGeometry) -> np.ndarray:
    """Values of ``nabla g`` (should vanish identically)."""
    return geo.nabla_02(geo.g).val
