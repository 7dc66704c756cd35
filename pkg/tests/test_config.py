import math

import pytest

from amplab.config import ConfigError, RunConfig, load_config, parse_config
from amplab.suites import DEFAULT_TOLERANCES, SUITES

INLINE = {
    "metric": {"coords": ["x", "y"], "entries": ["1", "(2 + cos(x))^2"]},
    "splitting": {"partition": [1, 1]},
}


def _where(doc, overrides=None):
    with pytest.raises(ConfigError) as info:
        parse_config(doc, overrides)
    return info.value.where


def test_defaults():
    cfg = parse_config({"model": "flat_torus"})
    assert isinstance(cfg, RunConfig)
    assert cfg.checks == SUITES and cfg.grid == 16 and cfg.seed == 0 and cfg.workers == 1
    assert cfg.tol("integral") == DEFAULT_TOLERANCES["integral"]
    desc = cfg.describe()
    assert desc["model"] == "flat_torus" and desc["dimension"] == 3 and desc["blocks"] == [1, 1, 1]


def test_model_with_params_and_overrides():
    doc = {"model": {"name": "flat_torus", "params": {"n": 4, "partition": [2, 2]}}, "grid": 12, "seed": 4}
    cfg = parse_config(doc, {"grid": 20, "seed": None, "checks": ["identity", "integral"]})
    assert cfg.model.dim == 4 and cfg.grid == 20 and cfg.seed == 4
    assert cfg.checks == ("identity", "integral")


def test_inline_metric():
    cfg = parse_config(dict(INLINE, name="surface"))
    assert cfg.model.name == "surface" and cfg.model.closed
    assert cfg.model.periods == (2 * math.pi, 2 * math.pi)
    assert not parse_config(dict(INLINE, periods=None)).model.closed


def test_inline_metric_with_spanning_fields():
    doc = {
        "metric": {"coords": ["x", "y"], "entries": [["1", "0"], ["0", "a"]], "params": {"a": 2.0}},
        "splitting": {"blocks": [[["1", "0"]], [["0", "1"]]]},
    }
    assert parse_config(doc).model.split.dims == (1, 1)


def test_contorsion_kinds():
    base = {"model": "flat_torus"}
    assert parse_config(dict(base, contorsion={"kind": "zero"})).contorsion.kind == "zero"
    semi = parse_config(dict(base, contorsion={"kind": "semi_symmetric", "U": ["sin(x1)", "0", "a"], "params": {"a": 0.2}}))
    assert semi.contorsion.kind == "semi_symmetric"
    stat = parse_config(dict(base, contorsion={"kind": "statistical", "cubic": {"0,1,2": "0.1*sin(x0)"}}))
    arr = stat.contorsion.data
    assert arr[2, 1, 0].text == arr[0, 1, 2].text != arr[0, 0, 0].text == "0"
    gen = parse_config(dict(base, contorsion={"kind": "general", "components": {"0,1,2": "1"}}))
    assert gen.contorsion.data[0, 1, 2].text == "1" and gen.contorsion.data[2, 1, 0].text == "0"


@pytest.mark.parametrize(
    "doc, where",
    [
        ({"model": "flat_torus", "grid": 4}, "grid"),
        ({"model": "flat_torus", "grid": 16.5}, "grid"),
        ({"model": "flat_torus", "seed": -1}, "seed"),
        ({"model": "flat_torus", "workers": 0}, "workers"),
        ({"model": "flat_torus", "points": True}, "points"),
        ({"model": "flat_torus", "tolerances": {"identity": -1e-7}}, "tolerances.identity"),
        ({"model": "flat_torus", "tolerances": {"identity": float("nan")}}, "tolerances.identity"),
        ({"model": "flat_torus", "tolerances": {"speed": 1.0}}, "tolerances.speed"),
        ({"model": "flat_torus", "checks": ["identity", "everything"]}, "checks[1]"),
        ({"model": "flat_torus", "checks": []}, "checks"),
        ({"model": "flat_torus", "convergence": "yes"}, "convergence"),
        ({"model": "flat_torus", "output": 3}, "output"),
        ({"model": "flat_torus", "colour": "red"}, "config"),
        ({}, "config"),
        (dict(INLINE, model="flat_torus"), "config"),
        ({"model": {"name": "flat_torus", "params": {"n": 3, "partition": [2, 2]}}}, "model"),
        ({"metric": {"coords": "xy", "entries": ["1", "1"]}, "splitting": {"partition": [1, 1]}}, "metric.coords"),
        ({"metric": {"coords": ["x", "y"], "entries": ["1", "log(q)"]}, "splitting": {"partition": [1, 1]}}, "metric"),
        ({"metric": INLINE["metric"]}, "splitting"),
        (dict(INLINE, splitting={"lines": 2}), "splitting"),
        (dict(INLINE, periods=[1.0]), "periods"),
        (dict(INLINE, periods=[1.0, -2.0]), "periods"),
        ({"model": "flat_torus", "contorsion": {"kind": "torsion"}}, "contorsion.kind"),
        ({"model": "flat_torus", "contorsion": {"kind": "statistical", "cubic": {"0,1": "1"}}}, "contorsion.cubic"),
        ({"model": "flat_torus", "contorsion": {"kind": "semi_symmetric", "U": ["x9", "0", "0"]}}, "contorsion"),
        ({"model": "flat_torus", "semi_symmetric": {"U": ["1", "0"]}}, "semi_symmetric.U"),
    ],
)
def test_errors_name_the_key(doc, where):
    assert _where(doc) == where


def test_unknown_model_is_config_error():
    with pytest.raises(ConfigError):
        parse_config({"model": "klein_bottle"})


def test_config_errors_are_value_errors():
    assert issubclass(ConfigError, ValueError)


def test_load_reports_yaml_position(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("model: flat_torus\ngrid: [1, 2\n")
    with pytest.raises(ConfigError) as info:
        load_config(str(p))
    assert info.value.where.startswith(f"{p}:")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.yaml"))


def test_load_shipped_configs():
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    assert load_config(str(root / "flat_all.yaml")).checks == SUITES
    assert load_config(str(root / "inline_metric.yaml")).model.name == "hand_twisted"
    assert load_config(str(root / "warped_integral.yaml")).contorsion.kind == "semi_symmetric"
    with pytest.raises(ConfigError) as info:
        load_config(str(root / "bad_tolerance.yaml"))
    assert info.value.where == "tolerances.identity"
