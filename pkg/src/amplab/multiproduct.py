"""Block splittings of the tangent bundle and their extrinsic geometry.

A splitting ``TM = D_1 + ... + D_k`` into pairwise orthogonal non-degenerate
blocks is described by spanning vector fields.  For every block (and for any
union of blocks) the code works with the block inverse metric

    G_D = V (V^T g V)^{-1} V^T = sum_{a in D} eps_a E_a E_a^T,

which is frame independent and smooth, so frame sums such as
``sum_a eps_a f(E_a, E_a)`` become chart contractions with ``G_D``.  The
orthoprojector onto ``D`` is ``P = G_D g``.  Explicit adapted frames are
only needed for reporting and for brute-force cross-checks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import jets
from .geometry import ChartGeometry, GeometryError, MetricField, VectorFieldDef, check_metric_values
from .jets import Jet, einsum

__all__ = [
    "SplittingError",
    "SplittingSpec",
    "AdaptedFrame",
    "Distribution",
    "SplitGeometry",
    "adapted_frame",
    "split_geometry",
    "upsilon",
    "MIXED_FLAG_TOL",
]

MIXED_FLAG_TOL = 1e-9


class SplittingError(GeometryError):
    pass


@dataclass(frozen=True)
class SplittingSpec:
    """Spanning vector fields for each block, in declaration order."""

    blocks: tuple[tuple[VectorFieldDef, ...], ...]

    def __post_init__(self):
        if not self.blocks or any(len(b) == 0 for b in self.blocks):
            raise SplittingError("every block needs at least one spanning field")
        dims = {f.dim for b in self.blocks for f in b}
        if len(dims) != 1:
            raise SplittingError("spanning fields have inconsistent dimensions")
        if sum(self.dims) != self.n:
            raise SplittingError(f"block dimensions {self.dims} do not sum to n={self.n}")

    @classmethod
    def coordinate(cls, coords: Sequence[str], partition: Sequence[int]) -> "SplittingSpec":
        """Consecutive coordinate blocks of the given sizes."""
        if sum(partition) != len(coords) or any(p < 1 for p in partition):
            raise SplittingError(f"partition {tuple(partition)} does not split {len(coords)} coordinates")
        blocks, start = [], 0
        for size in partition:
            blocks.append(tuple(VectorFieldDef.coordinate(coords, start + a) for a in range(size)))
            start += size
        return cls(tuple(blocks))

    @classmethod
    def from_components(cls, coords, blocks, params=None) -> "SplittingSpec":
        return cls(
            tuple(tuple(VectorFieldDef.from_strings(coords, f, params) for f in b) for b in blocks)
        )

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def n(self) -> int:
        return self.blocks[0][0].dim

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def span_jets(self, points, order: int) -> list[Jet]:
        out = []
        for b in self.blocks:
            cols = [f.jet(points, order) for f in b]
            out.append(jets.stack(cols, axis=-1))  # (B, n, n_i)
        return out


@dataclass(frozen=True)
class AdaptedFrame:
    vectors: np.ndarray  # (n, n); column a is E_a
    signs: np.ndarray  # (n,)
    ranges: tuple[tuple[int, int], ...]  # half-open index ranges per block

    def block(self, i: int) -> np.ndarray:
        lo, hi = self.ranges[i]
        return self.vectors[:, lo:hi]


def _gram_schmidt(g: np.ndarray, V: np.ndarray, tol: float = 1e-12):
    """Orthonormalize the columns of V w.r.t. g in order; no pivoting."""
    out, signs = [], []
    scale = max(1.0, float(np.abs(g).max()))
    for col in V.T:
        v = col.astype(float).copy()
        for e, s in zip(out, signs):
            v = v - s * (e @ g @ v) * e
        nn = float(v @ g @ v)
        if abs(nn) < tol * scale * max(1.0, float(col @ col)):
            raise SplittingError("degenerate block: metric restricted to the block is singular")
        out.append(v / np.sqrt(abs(nn)))
        signs.append(1 if nn > 0 else -1)
    return out, signs


def adapted_frame(g: MetricField, split: SplittingSpec, p) -> AdaptedFrame:
    """Blockwise Gram-Schmidt frame at one point."""
    pts = np.asarray(p, float).reshape(1, -1)
    G = g.value(pts)[0]
    check_metric_values(G[None], g.signature)
    spans = [s.val[0] for s in split.span_jets(pts, 0)]
    _check_orthogonal(G[None], [s[None] for s in spans])
    vecs, signs, ranges, start = [], [], [], 0
    for V in spans:
        e, s = _gram_schmidt(G, V)
        vecs += e
        signs += s
        ranges.append((start, start + len(e)))
        start += len(e)
    return AdaptedFrame(np.array(vecs).T, np.array(signs), tuple(ranges))


def _check_orthogonal(G: np.ndarray, spans: list[np.ndarray], tol: float = 1e-10) -> None:
    scale = max(1.0, float(np.abs(G).max()))
    for i, j in itertools.combinations(range(len(spans)), 2):
        cross = np.einsum("...ai,...ab,...bj->...ij", spans[i], G, spans[j])
        ni = np.linalg.norm(spans[i], axis=-2).max()
        nj = np.linalg.norm(spans[j], axis=-2).max()
        if np.abs(cross).max() > tol * scale * ni * nj:
            raise SplittingError(f"blocks {i} and {j} are not orthogonal (max {np.abs(cross).max():.3e})")
    full = np.concatenate(spans, axis=-1)
    s = np.linalg.svd(full, compute_uv=False)
    if np.any(s[..., -1] < 1e-10 * s[..., 0]):
        raise SplittingError("spanning fields are linearly dependent")


# ---------------------------------------------------------------------------
# one distribution (block or union of blocks)
# ---------------------------------------------------------------------------


class Distribution:
    """Extrinsic geometry of a distribution ``D`` given by its block inverse metric."""

    def __init__(self, geo: ChartGeometry, G: Jet, dim: int, label: str):
        self.geo = geo
        self.G = G
        self.dim = dim
        self.label = label
        self.complement: Distribution | None = None

    @cached_property
    def P(self) -> Jet:
        return einsum("...kl,...lj->...kj", self.G, self.geo.g)

    @cached_property
    def Q(self) -> Jet:
        eye = np.broadcast_to(np.eye(self.geo.n), self.P.shape)
        return self.P * -1.0 + eye

    # -- second fundamental form and integrability tensor -----------------
    @cached_property
    def _N(self) -> Jet:
        """``Q nabla_{P X}(P Y)`` as a (1,2) tensor, inputs projected onto D."""
        P, Q, Gam = self.P, self.Q, self.geo.gamma
        dP = P.grad()  # [l, r, m] = d_m P^l_r
        inner = einsum("...mi,...lrm->...lir", P, dP) + einsum("...lms,...mi,...sr->...lir", Gam, P, P)
        return einsum("...kl,...lir,...rj->...kij", Q, inner, P)

    @cached_property
    def h(self) -> Jet:
        N = self._N
        return (N + N.T) * 0.5

    @cached_property
    def T(self) -> Jet:
        N = self._N
        return (N - N.T) * 0.5

    @cached_property
    def H(self) -> Jet:
        return einsum("...kij,...ij->...k", self.h, self.geo.ginv)

    def _lowered(self, t: Jet) -> Jet:
        return einsum("...zl,...lxy->...zxy", self.geo.g, t)

    @cached_property
    def A(self) -> Jet:
        """Shape operators ``A[k, z, x] = ((A)_Z X)^k`` for ``Z`` in the complement."""
        return einsum("...ky,...zxy->...kzx", self.G, self._lowered(self.h))

    @cached_property
    def Tsharp(self) -> Jet:
        return einsum("...ky,...zxy->...kzx", self.G, self._lowered(self.T))

    def _frame_square(self, X: Jet, Y: Jet) -> Jet:
        Gc = self.complement.G
        return einsum("...zw,...kzm,...mwx->...kx", Gc, X, Y)

    @cached_property
    def casorati(self) -> Jet:
        """``sum_{Z} eps_Z (A_Z)^2`` over a frame of the complement, as a (1,1) tensor."""
        return self._frame_square(self.A, self.A)

    @cached_property
    def casorati_T(self) -> Jet:
        return self._frame_square(self.Tsharp, self.Tsharp)

    @cached_property
    def commutator_K(self) -> Jet:
        return self._frame_square(self.Tsharp, self.A) - self._frame_square(self.A, self.Tsharp)

    def flat(self, op: Jet) -> Jet:
        """``op^flat(X, Y) = <op X, Y>`` for a (1,1) tensor."""
        return einsum("...kx,...ky->...xy", op, self.geo.g)

    @cached_property
    def psi(self) -> Jet:
        """``Psi(X, Y) = tr(A_Y A_X + T_Y T_X)``, a form on the complement."""
        A, Ts = self.A, self.Tsharp
        return einsum("...kym,...mxk->...xy", A, A) + einsum("...kym,...mxk->...xy", Ts, Ts)

    # -- norms -----------------------------------------------------------
    def norm12(self, t: Jet) -> Jet:
        gi = self.geo.ginv
        # contract one factor first; the outer product t x t is far too large for jets
        u = einsum("...lmn,...kl,...im,...jn->...kij", t, self.geo.g, gi, gi)
        return einsum("...kij,...kij->...", t, u)

    @cached_property
    def hh(self) -> Jet:
        return self.norm12(self.h)

    @cached_property
    def TT(self) -> Jet:
        return self.norm12(self.T)

    @cached_property
    def HH(self) -> Jet:
        return self.geo.dot(self.H, self.H)

    # -- differential terms ----------------------------------------------
    @cached_property
    def div_h(self) -> Jet:
        return self.geo.div12(self.h)

    @cached_property
    def h_dot_H(self) -> Jet:
        return einsum("...kij,...kl,...l->...ij", self.h, self.geo.g, self.H)

    @cached_property
    def div_H(self) -> Jet:
        return self.geo.div(self.H)

    def restrict(self, S: Jet) -> Jet:
        """Restrict a (0,2) tensor to ``D x D`` (zero on the complement)."""
        return einsum("...ab,...ax,...by->...xy", S, self.P, self.P)

    def trace(self, S: Jet) -> Jet:
        """``sum_{a in D} eps_a S(E_a, E_a)``."""
        return einsum("...ab,...ab->...", S, self.G)

    @cached_property
    def g_block(self) -> Jet:
        return self.restrict(self.geo.g)

    # -- curvature -------------------------------------------------------
    @cached_property
    def ricci_from_complement(self) -> Jet:
        """``sum_{b in D^perp} eps_b <R(E_b, PX) E_b, PY>``, a form on D."""
        Rl = self.geo.riemann_low
        return self.restrict(einsum("...bxcy,...bc->...xy", Rl, self.complement.G))

    @cached_property
    def fundamental_rhs(self) -> Jet:
        """Extrinsic expression for :attr:`ricci_from_complement`."""
        c = self.complement
        rhs = (
            self.div_h
            + self.h_dot_H
            - self.flat(self.casorati)
            - self.flat(self.casorati_T)
            - c.psi
            + self.geo.deformation(c.H)
        )
        return self.restrict(rhs)

    @cached_property
    def q_function(self) -> Jet:
        c = self.complement
        return c.HH + self.HH - self.hh - c.hh + self.TT + c.TT

    def pw_residual(self) -> Jet:
        """``Div(H + H^perp) - S + Q`` (vanishes identically)."""
        c = self.complement
        return self.geo.div(self.H + c.H) - self.mixed_scalar() + self.q_function

    def mixed_scalar(self, Rl: Jet | None = None) -> Jet:
        """``sum_{a in D, b in D^perp} eps_a eps_b <R(E_a, E_b) E_a, E_b>``, symmetrised in the last two slots."""
        Rl = self.geo.riemann_low if Rl is None else Rl
        G, Gc = self.G, self.complement.G
        s1 = einsum("...abcd,...ac,...bd->...", Rl, G, Gc)
        s2 = einsum("...bacd,...bc,...ad->...", Rl, Gc, G)  # <R(E_b,E_a)E_b,E_a>
        return (s1 + s2) * 0.5


def make_pair(geo: ChartGeometry, G: Jet, dim: int, label: str) -> Distribution:
    d = Distribution(geo, G, dim, label)
    c = Distribution(geo, geo.ginv - G, geo.n - dim, label + "^perp")
    d.complement, c.complement = c, d
    return d


def upsilon(geo: ChartGeometry, P1: Jet, P2: Jet) -> Jet:
    """Symmetric (0,2) tensor with ``<Upsilon, S> = sum eps eps [S(P1(e,e'), P2(e,e')) + swap]``."""
    gi = geo.ginv
    M = einsum("...cij,...dkl,...ik,...jl->...cd", P1, P2, gi, gi)
    M = M + M.T
    return einsum("...ac,...cd,...bd->...ab", geo.g, M, geo.g)


# ---------------------------------------------------------------------------
# the splitting engine
# ---------------------------------------------------------------------------


class SplitGeometry:
    """All block-related quantities of ``(g; D_1, ..., D_k)`` on a batch of points."""

    def __init__(self, geo: ChartGeometry, spans: Sequence[Jet], validate: bool = True):
        self.geo = geo
        self.spans = list(spans)
        self.dims = tuple(s.shape[-1] for s in self.spans)
        self.k = len(self.spans)
        if sum(self.dims) != geo.n:
            raise SplittingError(f"block dimensions {self.dims} do not sum to {geo.n}")
        if validate:
            _check_orthogonal(geo.g.val, [s.val for s in self.spans])
        self.blocks = [make_pair(geo, self._block_inverse(s), d, f"D{i + 1}") for i, (s, d) in enumerate(zip(self.spans, self.dims))]
        self._unions: dict[tuple[int, ...], Distribution] = {}

    def _block_inverse(self, V: Jet) -> Jet:
        gram = einsum("...ai,...ab,...bj->...ij", V, self.geo.g, V)
        return einsum("...ai,...ij,...bj->...ab", V, jets.inv(gram), V)

    @property
    def n(self) -> int:
        return self.geo.n

    def block(self, i: int) -> Distribution:
        return self.blocks[i]

    def union(self, idx: Sequence[int]) -> Distribution:
        """Distribution spanned by several blocks (e.g. for mixed-pair predicates)."""
        key = tuple(sorted(set(idx)))
        if len(key) == 1:
            return self.blocks[key[0]]
        if key not in self._unions:
            G = self.blocks[key[0]].G
            for i in key[1:]:
                G = G + self.blocks[i].G
            dim = sum(self.dims[i] for i in key)
            self._unions[key] = make_pair(self.geo, G, dim, "D" + "".join(str(i + 1) for i in key))
        return self._unions[key]

    # -- scalar curvature invariants ---------------------------------------
    def pair_mixed_scalar(self, i: int, j: int, Rl: Jet | None = None) -> Jet:
        """``S(D_i, D_j)`` symmetrised as in the definition."""
        Rl = self.geo.riemann_low if Rl is None else Rl
        Gi, Gj = self.blocks[i].G, self.blocks[j].G
        s1 = einsum("...abcd,...ac,...bd->...", Rl, Gi, Gj)
        s2 = einsum("...abcd,...ac,...bd->...", Rl, Gj, Gi)
        return (s1 + s2) * 0.5

    def mixed_scalar(self, Rl: Jet | None = None) -> Jet:
        total = None
        for i, j in itertools.combinations(range(self.k), 2):
            s = self.pair_mixed_scalar(i, j, Rl)
            total = s if total is None else total + s
        return total

    def block_mixed_scalars(self, Rl: Jet | None = None) -> list[Jet]:
        return [b.mixed_scalar(Rl) for b in self.blocks]

    def partial_ricci(self, i: int) -> Jet:
        """``r_{D_i}(X, Y) = sum_{a in D_i} eps_a <R(E_a, P^perp X) E_a, P^perp Y>``."""
        return self.blocks[i].complement.ricci_from_complement

    def partial_ricci_total(self) -> Jet:
        out = None
        for i in range(self.k):
            r = self.partial_ricci(i)
            out = r if out is None else out + r
        return out * 0.5

    def q_sum(self) -> Jet:
        out = None
        for b in self.blocks:
            out = b.q_function if out is None else out + b.q_function
        return out

    def mean_curvature_field(self) -> Jet:
        """``sum_i (H_i + H_i^perp)``."""
        out = None
        for b in self.blocks:
            v = b.H + b.complement.H
            out = v if out is None else out + v
        return out

    def integral_formula_integrand(self) -> Jet:
        """``2 S_mix - sum_i Q(D_i)``; its integral vanishes on closed manifolds."""
        return self.mixed_scalar() * 2.0 - self.q_sum()

    # -- mixed pairs -------------------------------------------------------
    def mixed_h(self, i: int, j: int) -> Jet:
        """Second fundamental form of ``D_i + D_j`` (defined on all of it)."""
        return self.union((i, j)).h

    def mixed_T(self, i: int, j: int) -> Jet:
        return self.union((i, j)).T

    def _mixed_size(self, t: Jet, i: int, j: int) -> np.ndarray:
        Pi, Pj = self.blocks[i].P.val, self.blocks[j].P.val
        vals = np.einsum("...kab,...ax,...by->...kxy", t.val, Pi, Pj)
        return np.abs(vals).reshape(vals.shape[0], -1).max(axis=1)

    def mixed_pair_flags(self, i: int, j: int, tol: float = MIXED_FLAG_TOL) -> dict:
        if i == j:
            raise SplittingError("mixed pair needs distinct blocks")
        hs = self._mixed_size(self.mixed_h(i, j), i, j)
        ts = self._mixed_size(self.mixed_T(i, j), i, j)
        return {
            "mixed_totally_geodesic": bool(np.all(hs < tol)),
            "mixed_integrable": bool(np.all(ts < tol)),
            "h_size": float(hs.max()),
            "T_size": float(ts.max()),
        }

    def multi_index_check(self, tol: float = MIXED_FLAG_TOL) -> dict:
        """Re-check the multi-index vanishing implied by pairwise mixed flags.

        For every subset ``q`` of at least two blocks and every ordered pair of
        distinct members ``(q1, q2)``, evaluate ``h_q(X, Y)`` and ``T_q(X, Y)``
        with ``X`` in ``D_q1`` and ``Y`` in ``D_q2``.
        """
        pairs = list(itertools.combinations(range(self.k), 2))
        flags = [self.mixed_pair_flags(i, j, tol) for i, j in pairs]
        all_tg = all(f["mixed_totally_geodesic"] for f in flags)
        all_int = all(f["mixed_integrable"] for f in flags)
        worst_h = worst_t = 0.0
        for r in range(2, self.k + 1):
            for q in itertools.combinations(range(self.k), r):
                if r == self.k:
                    continue  # the whole tangent bundle has no normal part
                u = self.union(q)
                for a, b in itertools.permutations(q, 2):
                    worst_h = max(worst_h, float(self._mixed_size(u.h, a, b).max()))
                    worst_t = max(worst_t, float(self._mixed_size(u.T, a, b).max()))
        return {
            "all_mixed_totally_geodesic": all_tg,
            "all_mixed_integrable": all_int,
            "multi_h": worst_h,
            "multi_T": worst_t,
            "unions_mixed_totally_geodesic": (not all_tg) or worst_h < tol,
            "unions_mixed_integrable": (not all_int) or worst_t < tol,
        }

    # -- residuals of the pointwise identities -----------------------------
    def dk_smix_residual(self, Rl: Jet | None = None) -> Jet:
        """``2 S_mix - sum_i S_{D_i, D_i^perp}``."""
        total = self.mixed_scalar(Rl) * 2.0
        for s in self.block_mixed_scalars(Rl):
            total = total - s
        return total

    def pw3_residual(self) -> Jet:
        """``Div sum_i (H_i + H_i^perp) - 2 S_mix + sum_i Q(D_i)``."""
        return self.geo.div(self.mean_curvature_field()) - self.integral_formula_integrand()


def split_geometry(g: MetricField, split: SplittingSpec, points, order: int = 2, validate: bool = True) -> SplitGeometry:
    pts = np.atleast_2d(np.asarray(points, float))
    if validate:
        g.validate(pts)
    geo = ChartGeometry(g.jet(pts, order))
    return SplitGeometry(geo, split.span_jets(pts, order), validate=validate)


def sigma_elementary(g: MetricField, normal: VectorFieldDef, p, m: int) -> float:
    """``m``-th elementary symmetric function of the principal curvatures of the leaves ``N^perp``."""
    if any(s < 0 for s in g.signature):
        raise GeometryError("elementary symmetric functions need a Riemannian metric")
    pts = np.asarray(p, float).reshape(1, -1)
    g.validate(pts)
    geo = ChartGeometry(g.jet(pts, 2))
    N = normal.jet(pts, 2)
    nn = geo.dot(N, N)
    GN = einsum("...i,...j->...ij", N, N) / nn[..., None, None]
    line = make_pair(geo, GN, 1, "N")
    leaves = line.complement
    Nu = N.val[0] / np.sqrt(nn.val[0])
    # shape operator matrix on the leaf: <A_N X, Y> = <h(X, Y), N>
    hN = np.einsum("kxy,kl,l->xy", leaves.h.val[0], geo.g.val[0], Nu)
    Ginv = leaves.G.val[0]
    op = Ginv @ hN  # (1,1) operator, zero on N
    # N spans the kernel; a zero eigenvalue leaves every sigma_m unchanged
    eig = np.linalg.eigvals(op).real
    return _elementary(eig, m)


def _elementary(vals, m: int) -> float:
    e = np.zeros(m + 1)
    e[0] = 1.0
    for v in vals:
        for r in range(m, 0, -1):
            e[r] += e[r - 1] * v
    return float(e[m])
