"""Declarative run configuration (YAML).

A config names a built-in model or spells out a metric and splitting inline,
optionally a contorsion, and selects check suites::

    model: {name: multiply_warped_torus, params: {u: ["2 + cos(x0)"]}}
    contorsion: {kind: semi_symmetric, U: ["sin(x1)", "0", "0.2"]}
    checks: [identity, integral]
    grid: 32
    seed: 7
    tolerances: {integral: 1.0e-7}
    output: report.json

Errors carry the dotted path of the offending key (or the YAML line).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import yaml

from .connections import Contorsion, build_contorsion
from .expr import ExpressionError
from .geometry import GeometryError, MetricField, VectorFieldDef
from .models import ModelSpec, build_model
from .multiproduct import SplittingSpec
from .suites import DEFAULT_TOLERANCES, SUITES

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

TOP_KEYS = {
    "model", "metric", "splitting", "periods", "contorsion", "semi_symmetric", "checks", "grid", "points",
    "families", "seed", "tolerances", "output", "workers", "convergence", "name",
}


class ConfigError(ValueError):
    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    contorsion: Contorsion | None = None
    semi_field: VectorFieldDef | None = None
    checks: tuple[str, ...] = SUITES
    grid: int = 16
    points: int = 100
    families: int = 3
    seed: int = 0
    tolerances: Mapping[str, float] = field(default_factory=dict)
    output: str | None = None
    workers: int = 1
    convergence: bool = True

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def describe(self) -> dict:
        """Stable summary for the report header."""
        return {
            "model": self.model.name,
            "model_params": _plain(self.model.params),
            "dimension": self.model.dim,
            "blocks": list(self.model.split.dims),
            "contorsion": None if self.contorsion is None else self.contorsion.kind,
            "checks": list(self.checks),
            "grid": self.grid,
            "points": self.points,
            "families": self.families,
            "seed": self.seed,
            "workers": self.workers,
            "tolerances": {k: self.tol(k) for k in sorted(DEFAULT_TOLERANCES)},
        }


def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _int(value, where: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", where)
    if value < minimum:
        raise ConfigError(f"must be at least {minimum}, got {value}", where)
    return value


def _mapping(value, where: str) -> dict:
    if not isinstance(value, Mapping):
        raise ConfigError(f"expected a mapping, got {type(value).__name__}", where)
    return dict(value)


def _checks(value) -> tuple[str, ...]:
    items = [value] if isinstance(value, str) else value
    if not isinstance(items, list) or not items:
        raise ConfigError("expected a suite name or a non-empty list", "checks")
    out = []
    for i, c in enumerate(items):
        if c == "all":
            out.extend(SUITES)
        elif c in SUITES:
            out.append(c)
        else:
            raise ConfigError(f"unknown check {c!r}; expected one of {list(SUITES) + ['all']}", f"checks[{i}]")
    return tuple(dict.fromkeys(out))


def _tolerances(value) -> dict[str, float]:
    tols = _mapping(value, "tolerances")
    for k, v in tols.items():
        where = f"tolerances.{k}"
        if k not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance; expected one of {sorted(DEFAULT_TOLERANCES)}", where)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
            raise ConfigError(f"tolerance must be a positive number, got {v!r}", where)
        tols[k] = float(v)
    return tols


def _inline_model(doc: dict) -> ModelSpec:
    m = _mapping(doc["metric"], "metric")
    coords = m.get("coords")
    if not isinstance(coords, list) or not all(isinstance(c, str) for c in coords):
        raise ConfigError("expected a list of coordinate names", "metric.coords")
    params = _mapping(m.get("params", {}), "metric.params")
    try:
        g = MetricField.from_strings(coords, m.get("entries"), m.get("signature"), params)
    except (ExpressionError, GeometryError, TypeError, IndexError) as exc:
        raise ConfigError(str(exc), "metric") from exc
    if "splitting" not in doc:
        raise ConfigError("an inline metric needs a splitting", "splitting")
    sp = _mapping(doc["splitting"], "splitting")
    try:
        if "partition" in sp:
            split = SplittingSpec.coordinate(coords, sp["partition"])
        elif "blocks" in sp:
            split = SplittingSpec.from_components(coords, sp["blocks"], params)
        else:
            raise ConfigError("expected 'partition' or 'blocks'", "splitting")
    except (ExpressionError, GeometryError, TypeError) as exc:
        raise ConfigError(str(exc), "splitting") from exc
    periods = doc.get("periods", [2 * math.pi] * len(coords))
    if periods is not None:
        if not isinstance(periods, list) or len(periods) != len(coords):
            raise ConfigError("expected one period per coordinate, or null", "periods")
        if not all(isinstance(p, (int, float)) and not isinstance(p, bool) and p > 0 for p in periods):
            raise ConfigError("periods must be positive numbers", "periods")
        periods = tuple(float(p) for p in periods)
    return ModelSpec(str(doc.get("name", "custom")), tuple(coords), g, split, periods=periods, params={"inline": True})


def _dense(data, n: int, symmetric: bool, where: str):
    """Expand a sparse ``{"i,j,l": expr}`` mapping to a nested n x n x n list."""
    if not isinstance(data, Mapping):
        return data
    out = [[["0"] * n for _ in range(n)] for _ in range(n)]
    for key, expr in data.items():
        try:
            idx = tuple(int(t) for t in str(key).split(","))
        except ValueError:
            idx = ()
        if len(idx) != 3 or not all(0 <= t < n for t in idx):
            raise ConfigError(f"bad index {key!r}; expected 'i,j,l' with entries below {n}", where)
        perms = set(itertools.permutations(idx)) if symmetric else {idx}
        for i, j, l in perms:
            out[i][j][l] = str(expr)
    return out


def _contorsion(value, model: ModelSpec) -> Contorsion | None:
    c = _mapping(value, "contorsion")
    kind = c.get("kind")
    params = _mapping(c.get("params", {}), "contorsion.params")
    try:
        if kind == "zero":
            return build_contorsion("zero", model.coords)
        if kind == "semi_symmetric":
            return build_contorsion("semi_symmetric", model.coords, c.get("U"), params)
        if kind == "statistical":
            return build_contorsion("statistical", model.coords, _dense(c.get("cubic"), model.dim, True, "contorsion.cubic"), params)
        if kind == "general":
            return build_contorsion("general", model.coords, _dense(c.get("components"), model.dim, False, "contorsion.components"), params)
    except (ExpressionError, GeometryError, TypeError) as exc:
        raise ConfigError(str(exc), "contorsion") from exc
    raise ConfigError(f"unknown kind {kind!r}; expected zero, statistical, semi_symmetric or general", "contorsion.kind")


def parse_config(doc: Any, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Validate a loaded YAML document; ``overrides`` (from flags) win over the file."""
    doc = _mapping(doc if doc is not None else {}, "config")
    for k, v in (overrides or {}).items():
        if v is not None:
            doc[k] = v
    unknown = sorted(set(doc) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", "config")
    if ("model" in doc) == ("metric" in doc):
        raise ConfigError("give exactly one of 'model' or 'metric'", "config")
    if "model" in doc:
        ref = doc["model"]
        ref = {"name": ref} if isinstance(ref, str) else _mapping(ref, "model")
        try:
            model = build_model(str(ref.get("name")), _mapping(ref.get("params", {}), "model.params"))
        except (ExpressionError, GeometryError) as exc:
            raise ConfigError(str(exc), "model") from exc
    else:
        model = _inline_model(doc)
    contorsion = _contorsion(doc["contorsion"], model) if "contorsion" in doc else None
    semi = None
    if "semi_symmetric" in doc:
        s = _mapping(doc["semi_symmetric"], "semi_symmetric")
        try:
            semi = VectorFieldDef.from_strings(model.coords, s.get("U"), s.get("params"))
        except (ExpressionError, GeometryError, TypeError) as exc:
            raise ConfigError(str(exc), "semi_symmetric.U") from exc
        if semi.dim != model.dim:
            raise ConfigError(f"expected {model.dim} components", "semi_symmetric.U")
    checks = _checks(doc.get("checks", "all"))
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("expected a path", "output")
    convergence = doc.get("convergence", True)
    if not isinstance(convergence, bool):
        raise ConfigError("expected true or false", "convergence")
    return RunConfig(
        model=model,
        contorsion=contorsion,
        semi_field=semi,
        checks=checks,
        grid=_int(doc.get("grid", 16), "grid", 8),
        points=_int(doc.get("points", 100), "points", 1),
        families=_int(doc.get("families", 3), "families", 1),
        seed=_int(doc.get("seed", 0), "seed", 0),
        tolerances=_tolerances(doc.get("tolerances", {})),
        output=output,
        workers=_int(doc.get("workers", 1), "workers", 1),
        convergence=convergence,
    )


def load_config(path: str, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else path
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", where) from exc
    return parse_config(doc, overrides)
