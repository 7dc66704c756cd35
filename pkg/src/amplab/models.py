"""Built-in model manifolds with known closed-form geometry.

Every model is a single chart.  Torus models are periodic in every
coordinate with period ``2 pi`` and may be integrated over; the sphere chart
is for pointwise checks only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .connections import Contorsion, build_contorsion
from . import jets
from .expr import ExpressionError, evaluate, jet_of, parse_expression
from .geometry import GeometryError, MetricField
from .multiproduct import SplittingSpec

__all__ = [
    "ModelError",
    "Fixture",
    "ModelSpec",
    "flat_torus",
    "multiply_warped_torus",
    "multiply_twisted_torus",
    "sphere_chart",
    "frame_model",
    "adapted_statistical",
    "semi_symmetric",
    "MODELS",
    "build_model",
    "list_models",
]

TWO_PI = 2.0 * math.pi


class ModelError(GeometryError):
    pass


@dataclass(frozen=True)
class Fixture:
    """A closed-form quantity: ``fn(points)`` returns the expected values."""

    description: str
    provenance: str
    fn: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    name: str
    coords: tuple[str, ...]
    metric: MetricField
    split: SplittingSpec
    contorsion: Contorsion | None = None
    periods: tuple[float, ...] | None = None
    fixtures: Mapping[str, Fixture] = field(default_factory=dict)
    params: Mapping[str, object] = field(default_factory=dict)
    domain: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def closed(self) -> bool:
        return self.periods is not None

    def check_points(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        if pts.shape[-1] != self.dim:
            raise ModelError(f"model {self.name} needs {self.dim} coordinates, got {pts.shape[-1]}")
        if self.domain is not None and not np.all(self.domain(pts)):
            raise ModelError(f"points outside the valid chart of {self.name}")
        return pts

    def sample_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform points in one period cell (or in the valid chart)."""
        if self.closed:
            return rng.uniform(0.0, 1.0, (count, self.dim)) * np.asarray(self.periods)
        out = np.empty((0, self.dim))
        while len(out) < count:
            cand = rng.uniform(0.0, TWO_PI, (2 * count, self.dim))
            if self.domain is not None:
                cand = cand[self.domain(cand)]
            out = np.concatenate([out, cand])
        return out[:count]

    def with_contorsion(self, I: Contorsion | None) -> "ModelSpec":
        return ModelSpec(self.name, self.coords, self.metric, self.split, I, self.periods, self.fixtures, self.params, self.domain)


def _coords(n: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(n))


def _positive_on_torus(text: str, coords, m: int = 24) -> None:
    e = parse_expression(text, coords)
    axes = [np.linspace(0.0, TWO_PI, m, endpoint=False)] * len(coords)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(coords))
    if not np.all(evaluate(e, pts) > 0):
        raise ModelError(f"warping function {text!r} is not positive on the torus")


def _check_uses(text: str, allowed: Sequence[str]) -> None:
    """``text`` must parse over ``allowed`` only (other chart names are rejected)."""
    try:
        parse_expression(text, tuple(allowed))
    except ExpressionError as exc:
        raise ModelError(f"{text!r} may only depend on {list(allowed)}: {exc}") from exc


# ---------------------------------------------------------------------------
# flat torus
# ---------------------------------------------------------------------------


def flat_torus(n: int, partition: Sequence[int]) -> ModelSpec:
    """``T^n`` with the identity metric and coordinate blocks."""
    coords = _coords(n)
    if sum(partition) != n:
        raise ModelError(f"partition {tuple(partition)} does not sum to {n}")
    g = MetricField.from_strings(coords, ["1"] * n)
    zero = lambda pts: np.zeros(len(np.atleast_2d(pts)))  # noqa: E731
    fixtures = {
        "mixed_scalar": Fixture("S_mix = 0", "trivial", zero),
        "q_sum": Fixture("sum_i Q(D_i) = 0", "trivial", zero),
    }
    return ModelSpec(
        "flat_torus", coords, g, SplittingSpec.coordinate(coords, partition), periods=(TWO_PI,) * n,
        fixtures=fixtures, params={"n": n, "partition": list(partition)},
    )


# ---------------------------------------------------------------------------
# multiply warped and twisted tori
# ---------------------------------------------------------------------------


def _warped_like(name: str, base_dim: int, u: Sequence[str], twisted: bool) -> ModelSpec:
    if base_dim < 1:
        raise ModelError("base dimension must be at least 1")
    if not u:
        raise ModelError("at least one warping function is needed")
    n = base_dim + len(u)
    coords = _coords(n)
    base = coords[:base_dim]
    for i, text in enumerate(u):
        own = base + ((coords[base_dim + i],) if twisted else ())
        _check_uses(text, own)
        _positive_on_torus(text, coords)
    diag = ["1"] * base_dim + [f"({t})^2" for t in u]
    g = MetricField.from_strings(coords, diag)
    split = SplittingSpec.coordinate(coords, [base_dim] + [1] * len(u))
    logs = [parse_expression(f"log({t})", coords) for t in u]

    def mean_curvature(i: int):
        # H_i = -n_i P_0 grad log u_i, base metric is Euclidean
        def fn(pts):
            pts = np.atleast_2d(np.asarray(pts, float))
            grad = jet_of(logs[i], jets.coordinate_jets(pts, 1)).grad().val
            out = np.zeros(pts.shape)
            out[:, :base_dim] = -grad[:, :base_dim]
            return out

        return fn

    fixtures = {
        f"H_{i + 1}": Fixture(
            f"H_{i + 1} = -n_{i + 1} P_0 grad log u_{i + 1}", "closed form: umbilical fibres of a warped product", mean_curvature(i)
        )
        for i in range(len(u))
    }
    fixtures["h_0"] = Fixture("base block totally geodesic", "closed form: leaves of the base are totally geodesic", lambda pts: np.zeros(len(np.atleast_2d(pts))))
    return ModelSpec(name, coords, g, split, periods=(TWO_PI,) * n, fixtures=fixtures, params={"base_dim": base_dim, "u": list(u)})


def multiply_warped_torus(u: Sequence[str], base_dim: int = 1) -> ModelSpec:
    """``dx_0^2 + sum_i u_i^2 dx_i^2`` with ``u_i`` depending on the base coordinates only.

    Coordinates are ``x0, x1, ...``; the first ``base_dim`` form the base.
    """
    return _warped_like("multiply_warped_torus", base_dim, u, twisted=False)


def multiply_twisted_torus(u: Sequence[str], base_dim: int = 1) -> ModelSpec:
    """As :func:`multiply_warped_torus` but ``u_i`` may also depend on its own fiber coordinate."""
    return _warped_like("multiply_twisted_torus", base_dim, u, twisted=True)


# ---------------------------------------------------------------------------
# sphere
# ---------------------------------------------------------------------------

POLE_GUARD = 1e-3


def sphere_chart(radius: float = 1.0) -> ModelSpec:
    """Round 2-sphere in polar coordinates ``(theta, phi)``; pointwise use only."""
    if not radius > 0:
        raise ModelError("radius must be positive")
    coords = ("theta", "phi")
    r2 = repr(float(radius) ** 2)
    g = MetricField.from_strings(coords, [r2, f"{r2} * sin(theta)^2"])

    def domain(pts):
        return np.abs(np.sin(pts[:, 0])) > POLE_GUARD

    const = 1.0 / radius**2
    fixtures = {"mixed_scalar": Fixture("S_mix = 1/r^2", "constant curvature", lambda pts: np.full(len(np.atleast_2d(pts)), const))}
    return ModelSpec(
        "sphere_chart", coords, g, SplittingSpec.coordinate(coords, [1, 1]), fixtures=fixtures,
        params={"radius": radius}, domain=domain,
    )


# ---------------------------------------------------------------------------
# generic non-integrable model
# ---------------------------------------------------------------------------


def frame_model(lower: Sequence[Sequence[str]], diag: Sequence[str], partition: Sequence[int], signature=None) -> ModelSpec:
    """Metric ``sum_a d_a theta^a (x) theta^a`` for a unit lower-triangular coframe ``theta``.

    ``lower[i][j]`` (``j < i``) are the sub-diagonal coframe entries.  The dual
    frame has closed-form entries, so blocks spanned by consecutive frame
    vectors are exactly orthogonal and generally non-integrable.
    """
    n = len(diag)
    coords = _coords(n)
    if len(lower) != n or any(len(lower[i]) != i for i in range(n)):
        raise ModelError("lower[i] must list i sub-diagonal entries")
    th = [["1" if i == j else ("0" if j > i else str(lower[i][j])) for j in range(n)] for i in range(n)]
    E = [[None] * n for _ in range(n)]  # inverse of theta by forward substitution
    for j in range(n):
        for i in range(n):
            if i < j:
                E[i][j] = "0"
            elif i == j:
                E[i][j] = "1"
            else:
                terms = [f"({th[i][m]})*({E[m][j]})" for m in range(j, i) if th[i][m] != "0" and E[m][j] != "0"]
                E[i][j] = "-(" + " + ".join(terms) + ")" if terms else "0"
    g = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            a_, b_ = min(i, j), max(i, j)
            terms = [f"({diag[a]})*({th[a][a_]})*({th[a][b_]})" for a in range(n) if th[a][i] != "0" and th[a][j] != "0"]
            g[i][j] = " + ".join(terms) if terms else "0"
    cols = [[E[r][c] for r in range(n)] for c in range(n)]
    blocks, start = [], 0
    for size in partition:
        blocks.append(cols[start:start + size])
        start += size
    if start != n:
        raise ModelError(f"partition {tuple(partition)} does not sum to {n}")
    metric = MetricField.from_strings(coords, g, signature)
    return ModelSpec(
        "frame_model", coords, metric, SplittingSpec.from_components(coords, blocks), periods=(TWO_PI,) * n,
        params={"lower": [list(r) for r in lower], "diag": list(diag), "partition": list(partition)},
    )


# ---------------------------------------------------------------------------
# contorsion presets
# ---------------------------------------------------------------------------


def adapted_statistical(model: ModelSpec, entries: Mapping[tuple[int, int, int], str]) -> Contorsion:
    """Statistical contorsion from a cubic form given on sorted index triples.

    For coordinate splittings with block-diagonal metric the result is
    adapted iff every triple lies inside one block; this is checked.
    """
    n = model.dim
    owner = {}
    for b, fields in enumerate(model.split.blocks):
        for f in fields:
            nz = [k for k, e in enumerate(f.components) if e.text != "0"]
            if len(nz) != 1:
                raise ModelError("adapted presets need a coordinate splitting")
            owner[nz[0]] = b
    arr = [[["0"] * n for _ in range(n)] for _ in range(n)]
    for key, text in entries.items():
        idx = tuple(sorted(key))
        if len({owner[i] for i in idx}) != 1:
            raise ModelError(f"cubic form entry {key} mixes blocks; contorsion would not be adapted")
        for p in {(idx[0], idx[1], idx[2]), (idx[0], idx[2], idx[1]), (idx[1], idx[0], idx[2]), (idx[1], idx[2], idx[0]), (idx[2], idx[0], idx[1]), (idx[2], idx[1], idx[0])}:
            arr[p[0]][p[1]][p[2]] = text
    return build_contorsion("statistical", model.coords, arr)


def semi_symmetric(model: ModelSpec, U: Sequence[str]) -> Contorsion:
    return build_contorsion("semi_symmetric", model.coords, list(U))


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


def _warped_default(u=("2 + cos(x0)", "1.5 + sin(x0)"), base_dim=1):
    return multiply_warped_torus(list(u), base_dim)


def _twisted_default(u=("2 + cos(x0)*cos(x1)", "1.5 + 0.5*sin(x0 + x2)"), base_dim=1):
    return multiply_twisted_torus(list(u), base_dim)


def _frame_default(
    lower=((), ("0.3*sin(x2)",), ("0.2*cos(x3)", "0.4*sin(x0)"), ("0.3*sin(x1)", "0.1*cos(x0)", "0.25*sin(x0 + x1)")),
    diag=("1 + 0.2*cos(x1)", "1.5 + 0.3*sin(x2)", "2", "1 + 0.1*sin(x0)*sin(x3)"),
    partition=(2, 1, 1),
    signature=None,
):
    return frame_model([list(r) for r in lower], list(diag), list(partition), signature)


MODELS: dict[str, tuple[Callable[..., ModelSpec], str]] = {
    "flat_torus": (lambda n=3, partition=(1, 1, 1): flat_torus(n, list(partition)), "identity metric on T^n, coordinate blocks (params: n, partition)"),
    "multiply_warped_torus": (_warped_default, "dx0^2 + sum u_i(x0)^2 dx_i^2 (params: u, base_dim)"),
    "multiply_twisted_torus": (_twisted_default, "dx0^2 + sum u_i(x0, x_i)^2 dx_i^2 (params: u, base_dim)"),
    "sphere_chart": (lambda radius=1.0: sphere_chart(radius), "round sphere in polar coordinates, pointwise only (params: radius)"),
    "frame_model": (_frame_default, "non-integrable blocks from a triangular coframe (params: lower, diag, partition, signature)"),
}


def build_model(name: str, params: Mapping[str, object] | None = None) -> ModelSpec:
    if name not in MODELS:
        raise ModelError(f"unknown model {name!r}; known: {sorted(MODELS)}")
    try:
        return MODELS[name][0](**dict(params or {}))
    except TypeError as exc:
        raise ModelError(f"bad parameters for {name}: {exc}") from exc


def list_models() -> list[tuple[str, str]]:
    return [(k, MODELS[k][1]) for k in sorted(MODELS)]
