"""Truncated multivariate Taylor arithmetic (forward-mode jets).

A :class:`Jet` holds an array of Taylor polynomials in ``n`` chart variables,
truncated at total degree ``order``.  The coefficient axis is always the last
axis of :attr:`Jet.c`; every other axis is a batch or tensor axis.  Coefficients
are Taylor coefficients ``f_alpha / alpha!``, ordered by total degree so that
truncating to a lower order is a prefix slice.

Arithmetic is exact up to round-off: there is no step size anywhere.  Mixing
jets of different orders truncates to the lower one, which is how loss of
derivative order (e.g. Christoffel symbols from a metric jet) propagates.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "JetBasis",
    "Jet",
    "basis",
    "coordinate_jets",
    "constant",
    "einsum",
    "inv",
    "stack",
    "Jet3",
    "to_jet3",
]


@dataclass(frozen=True, eq=False)
class JetBasis:
    """Monomial bookkeeping for ``nvars`` variables up to total degree ``order``."""

    nvars: int
    order: int
    exponents: tuple = field(repr=False)
    index: dict = field(repr=False)
    pair_i: np.ndarray = field(repr=False)
    pair_j: np.ndarray = field(repr=False)
    pair_k: np.ndarray = field(repr=False)
    scatter: np.ndarray = field(repr=False)
    factorials: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.exponents)


def _exponents(nvars: int, order: int) -> list[tuple[int, ...]]:
    out = []
    for deg in range(order + 1):
        # reverse-lex within a degree; any fixed order works as long as it is by degree
        for combo in itertools.combinations_with_replacement(range(nvars), deg):
            alpha = [0] * nvars
            for v in combo:
                alpha[v] += 1
            out.append(tuple(alpha))
    return out


@lru_cache(maxsize=None)
def basis(nvars: int, order: int) -> JetBasis:
    if nvars < 1 or order < 0:
        raise ValueError(f"invalid jet basis ({nvars=}, {order=})")
    exps = _exponents(nvars, order)
    index = {a: i for i, a in enumerate(exps)}
    size = len(exps)
    # only pairs whose degrees add up to <= order contribute to a product
    pi, pj, pk = [], [], []
    for i, a in enumerate(exps):
        for j, b in enumerate(exps):
            k = index.get(tuple(x + y for x, y in zip(a, b)))
            if k is not None:
                pi.append(i)
                pj.append(j)
                pk.append(k)
    scatter = np.zeros((len(pk), size))
    scatter[np.arange(len(pk)), pk] = 1.0
    facts = np.array([math.prod(math.factorial(x) for x in a) for a in exps], float)
    return JetBasis(nvars, order, tuple(exps), index, np.array(pi), np.array(pj), np.array(pk), scatter, facts)


@lru_cache(maxsize=None)
def _diff_matrix(nvars: int, order: int, var: int) -> np.ndarray:
    """Matrix mapping order-``order`` coefficients to those of d/dx_var (order - 1)."""
    hi = basis(nvars, order)
    lo = basis(nvars, order - 1)
    D = np.zeros((hi.size, lo.size))
    for j, a in enumerate(lo.exponents):
        up = list(a)
        up[var] += 1
        D[hi.index[tuple(up)], j] = a[var] + 1
    return D


def _size(nvars: int, order: int) -> int:
    return math.comb(nvars + order, order)


class Jet:
    """Array of truncated Taylor polynomials; see module docstring."""

    __slots__ = ("c", "nvars", "order")
    __array_priority__ = 100

    def __init__(self, c: np.ndarray, nvars: int, order: int):
        c = np.asarray(c, dtype=float)
        if c.shape[-1] != _size(nvars, order):
            raise ValueError(
                f"coefficient axis has {c.shape[-1]} entries, expected "
                f"{_size(nvars, order)} for {nvars=} {order=}"
            )
        self.c = c
        self.nvars = nvars
        self.order = order

    # -- structure -------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.c.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.c.ndim - 1

    @property
    def basis(self) -> JetBasis:
        return basis(self.nvars, self.order)

    @property
    def val(self) -> np.ndarray:
        """Order-zero coefficient, i.e. the pointwise value."""
        return self.c[..., 0]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} -> {order}")
        if order == self.order:
            return self
        return Jet(self.c[..., : _size(self.nvars, order)], self.nvars, order)

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        if Ellipsis not in idx:
            idx = idx + (Ellipsis,)
        return Jet(self.c[idx + (slice(None),)], self.nvars, self.order)

    def transpose(self, *axes) -> "Jet":
        axes = tuple(axes) + (self.ndim,)
        return Jet(self.c.transpose(axes), self.nvars, self.order)

    def swapaxes(self, a: int, b: int) -> "Jet":
        a, b = (x % self.ndim for x in (a, b))
        return Jet(np.swapaxes(self.c, a, b), self.nvars, self.order)

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.c.reshape(tuple(shape) + (self.c.shape[-1],)), self.nvars, self.order)

    def sum(self, axis) -> "Jet":
        if isinstance(axis, int):
            axis = (axis,)
        axis = tuple(a % self.ndim for a in axis)
        return Jet(self.c.sum(axis=axis), self.nvars, self.order)

    @property
    def T(self) -> "Jet":
        """Swap the last two tensor axes."""
        return self.swapaxes(-1, -2)

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, nvars={self.nvars}, order={self.order})"

    # -- calculus --------------------------------------------------------
    def diff(self, var: int) -> "Jet":
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        D = _diff_matrix(self.nvars, self.order, var)
        return Jet(self.c @ D, self.nvars, self.order - 1)

    def grad(self) -> "Jet":
        """Partial derivatives stacked on a new last tensor axis."""
        parts = [self.diff(v).c for v in range(self.nvars)]
        return Jet(np.stack(parts, axis=-2), self.nvars, self.order - 1)

    def derivatives(self) -> list[np.ndarray]:
        """Dense symmetric derivative arrays ``[f, df, d2f, ...]`` up to ``order``."""
        b = self.basis
        out = []
        for deg in range(self.order + 1):
            arr = np.zeros(self.shape + (self.nvars,) * deg)
            for multi in itertools.product(range(self.nvars), repeat=deg):
                alpha = [0] * self.nvars
                for v in multi:
                    alpha[v] += 1
                k = b.index[tuple(alpha)]
                arr[(Ellipsis,) + multi] = self.c[..., k] * b.factorials[k]
            out.append(arr)
        return out

    # -- arithmetic ------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise ValueError("jets over different variable sets")
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return self, None

    def __add__(self, other):
        a, b = self._coerce(other)
        if b is not None:
            return Jet(a.c + b.c, a.nvars, a.order)
        other = np.asarray(other, float)
        shape = np.broadcast_shapes(a.shape, other.shape)
        c = np.broadcast_to(a.c, shape + (a.c.shape[-1],)).copy()
        c[..., 0] += other
        return Jet(c, a.nvars, a.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.nvars, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._coerce(other)
        if b is not None:
            if a.order == 0:
                return Jet(a.c * b.c, a.nvars, 0)
            bs = a.basis
            c = (a.c[..., bs.pair_i] * b.c[..., bs.pair_j]) @ bs.scatter
            return Jet(c, a.nvars, a.order)
        return Jet(a.c * np.asarray(other, float)[..., None], a.nvars, a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return (self.log() * p).exp()
        if float(p).is_integer() and 0 <= p <= 4:
            out = constant(np.ones(self.shape), self.nvars, self.order)
            for _ in range(int(p)):
                out = out * self
            return out
        return self.compose(_power_series(float(p)))

    # -- elementary functions via Taylor composition ----------------------
    def compose(self, derivs) -> "Jet":
        """Apply a univariate function given ``derivs(x0, m) -> [f(x0), ..., f^(m)(x0)]``."""
        x0 = self.val
        ders = derivs(x0, self.order)
        d = Jet(self.c.copy(), self.nvars, self.order)
        d.c[..., 0] = 0.0
        out = Jet(np.zeros_like(self.c), self.nvars, self.order)
        out.c[..., 0] = ders[0]
        power = None
        for m in range(1, self.order + 1):
            power = d if power is None else power * d
            out = out + power * (ders[m] / math.factorial(m))
        return out

    def reciprocal(self) -> "Jet":
        return self.compose(_power_series(-1.0))

    def sqrt(self) -> "Jet":
        return self.compose(_power_series(0.5))

    def exp(self) -> "Jet":
        return self.compose(lambda x, m: [np.exp(x)] * (m + 1))

    def log(self) -> "Jet":
        def d(x, m):
            out = [np.log(x)]
            for k in range(1, m + 1):
                out.append((-1) ** (k - 1) * math.factorial(k - 1) / x**k)
            return out

        return self.compose(d)

    def sin(self) -> "Jet":
        return self.compose(lambda x, m: [_trig(x, k, np.sin, np.cos) for k in range(m + 1)])

    def cos(self) -> "Jet":
        return self.compose(lambda x, m: [_trig(x, k, np.cos, lambda y: -np.sin(y)) for k in range(m + 1)])


def _trig(x, k, f, df):
    # derivatives of sin/cos cycle with period 4
    seq = [f, df, lambda y: -f(y), lambda y: -df(y)]
    return seq[k % 4](x)


def _power_series(p: float):
    def d(x, m):
        out = []
        coeff = 1.0
        for k in range(m + 1):
            out.append(coeff * np.power(x, p - k))
            coeff *= p - k
        return out

    return d


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def constant(value, nvars: int, order: int) -> Jet:
    value = np.asarray(value, float)
    c = np.zeros(value.shape + (_size(nvars, order),))
    c[..., 0] = value
    return Jet(c, nvars, order)


def coordinate_jets(points, order: int) -> list[Jet]:
    """Jets of the chart coordinate functions at a batch of points ``(B, n)``."""
    points = np.atleast_2d(np.asarray(points, float))
    n = points.shape[-1]
    b = basis(n, order)
    out = []
    for v in range(n):
        c = np.zeros(points.shape[:-1] + (b.size,))
        c[..., 0] = points[..., v]
        if order >= 1:
            e = [0] * n
            e[v] = 1
            c[..., b.index[tuple(e)]] = 1.0
        out.append(Jet(c, n, order))
    return out


def stack(jets, axis: int = 0) -> Jet:
    """Stack jets (or plain numbers) along a new tensor axis."""
    ref = next(j for j in jets if isinstance(j, Jet))
    order = min(j.order for j in jets if isinstance(j, Jet))
    shape = np.broadcast_shapes(*(j.shape if isinstance(j, Jet) else np.shape(j) for j in jets))
    parts = []
    for j in jets:
        if not isinstance(j, Jet):
            j = constant(np.broadcast_to(np.asarray(j, float), shape), ref.nvars, order)
        j = j.truncate(order)
        parts.append(np.broadcast_to(j.c, shape + (j.c.shape[-1],)))
    ndim = len(shape) + 1
    axis = axis % ndim
    return Jet(np.stack(parts, axis=axis), ref.nvars, order)


# ---------------------------------------------------------------------------
# tensor contraction
# ---------------------------------------------------------------------------

_TERM = re.compile(r"\.\.\.|[a-z]")


def _parse_terms(spec: str):
    lhs, rhs = spec.replace(" ", "").split("->")
    ins = [_TERM.findall(t) for t in lhs.split(",")]
    out = _TERM.findall(rhs)
    return ins, out


def _join(idx):
    return "".join(idx)


def einsum(spec: str, *ops):
    """``numpy.einsum`` over jets; plain arrays act as constant tensors.

    Only lowercase letters and ``...`` may appear in ``spec``.  Operands are
    folded left to right, keeping just the indices that are still needed.
    """
    ins, out = _parse_terms(spec)
    if len(ins) != len(ops):
        raise ValueError("operand count does not match spec")
    orders = [op.order for op in ops if isinstance(op, Jet)]
    if orders:
        low = min(orders)
        ops = tuple(op.truncate(low) if isinstance(op, Jet) else op for op in ops)
    acc, acc_idx = ops[0], ins[0]
    for pos in range(1, len(ops)):
        op, idx = ops[pos], ins[pos]
        later = set(out)
        for rest in ins[pos + 1:]:
            later.update(rest)
        keep = []
        for t in acc_idx + idx:
            if (t in later or t == "...") and t not in keep:
                keep.append(t)
        acc = _pair(acc, _join(acc_idx), op, _join(idx), _join(keep))
        acc_idx = keep
    if acc_idx != out:
        acc = _pair(acc, _join(acc_idx), None, None, _join(out))
    return acc


def _pair(a, ia, b, ib, io):
    ja, jb = isinstance(a, Jet), isinstance(b, Jet)
    if b is None:
        if ja:
            return Jet(np.einsum(f"{ia}X->{io}X", a.c), a.nvars, a.order)
        return np.einsum(f"{ia}->{io}", a)
    if ja and jb:
        order = min(a.order, b.order)
        a, b = a.truncate(order), b.truncate(order)
        # one small einsum per contributing coefficient pair; keeping the
        # coefficient axis inside einsum is several times slower
        bs = a.basis
        spec = f"{ia},{ib}->{io}"
        c = None
        for i, j, k in zip(bs.pair_i, bs.pair_j, bs.pair_k):
            term = np.einsum(spec, a.c[..., i], b.c[..., j])
            if c is None:
                c = np.zeros(term.shape + (bs.size,))
            c[..., k] += term
        return Jet(c, a.nvars, order)
    if ja:
        return Jet(np.einsum(f"{ia}X,{ib}->{io}X", a.c, np.asarray(b, float), optimize=True), a.nvars, a.order)
    if jb:
        return Jet(np.einsum(f"{ia},{ib}X->{io}X", np.asarray(a, float), b.c, optimize=True), b.nvars, b.order)
    return np.einsum(f"{ia},{ib}->{io}", a, b, optimize=True)


def inv(G: Jet) -> Jet:
    """Inverse of a jet-valued matrix over its last two tensor axes.

    Uses the terminating Neumann series ``sum_m (-G0^-1 D)^m G0^-1`` where
    ``D = G - G0`` has no constant term, so powers beyond ``order`` vanish.
    """
    G0inv = np.linalg.inv(G.val)
    D = Jet(G.c.copy(), G.nvars, G.order)
    D.c[..., 0] = 0.0
    X = einsum("...ij,...jk->...ik", -G0inv, D)
    term = constant(G0inv, G.nvars, G.order)
    acc = term
    for _ in range(G.order):
        term = einsum("...ij,...jk->...ik", X, term)
        acc = acc + term
    return acc


# ---------------------------------------------------------------------------
# public Jet3 view
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Jet3:
    """Value and partial derivatives through order 3 of a scalar at one point."""

    value: float
    grad: np.ndarray
    hess: np.ndarray
    third: np.ndarray
    finite: bool = True


def to_jet3(j: Jet) -> Jet3:
    if j.shape != () or j.order < 3:
        raise ValueError("Jet3 needs a scalar jet of order >= 3")
    f, g, h, t = j.derivatives()[:4]
    finite = bool(np.all(np.isfinite(j.c)))
    return Jet3(float(f), g, h, t, finite)
