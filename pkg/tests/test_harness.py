import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from amplab.geometry import MetricField, VectorFieldDef
from amplab.harness import (
    Check,
    GridSpec,
    HarnessError,
    NonFiniteError,
    VerificationReport,
    convergence_pair,
    divergence_theorem_check,
    evaluate_on_grid,
    integral_formula_check,
    integral_formula_checks,
    integrate,
    integrate_values,
    splitting_hypothesis_report,
)
from amplab.models import flat_torus, multiply_twisted_torus, multiply_warped_torus, semi_symmetric, sphere_chart
from amplab.suites import random_cubic_form

TWO_PI = 2 * math.pi


def _flat(n):
    return MetricField.from_strings(tuple(f"x{i}" for i in range(n)), ["1"] * n)


# -- quadrature ----------------------------------------------------------------------


def test_grid_validation():
    with pytest.raises(HarnessError):
        GridSpec((4, 16), (1.0, 1.0))
    with pytest.raises(HarnessError):
        GridSpec((16,), (1.0, 2.0))
    with pytest.raises(HarnessError):
        GridSpec.uniform(16, sphere_chart(1.0))
    g = GridSpec.uniform(8, flat_torus(2, [1, 1]))
    assert g.size == 64 and g.refined().nodes == (16, 16)
    assert g.points().max() < TWO_PI


def test_constant_on_flat_square():
    assert integrate("1", _flat(2), GridSpec((32, 32), (TWO_PI, TWO_PI))) == pytest.approx(TWO_PI**2, abs=1e-12)


def test_sine_on_circle():
    assert abs(integrate("sin(x0)", _flat(1), GridSpec((16,), (TWO_PI,)))) < 1e-13


def test_warped_area_against_adaptive_quadrature():
    g = MetricField.from_strings(("x", "y"), ["1", "(2 + cos(x))^2"])
    val = integrate("1", g, GridSpec((32, 16), (TWO_PI, TWO_PI)))
    ref = TWO_PI * quad(lambda x: 2 + math.cos(x), 0, TWO_PI, epsabs=1e-14)[0]
    assert val == pytest.approx(ref, rel=1e-13)
    weighted = integrate("sin(x)^2", g, GridSpec((32, 16), (TWO_PI, TWO_PI)))
    ref = TWO_PI * quad(lambda x: math.sin(x) ** 2 * (2 + math.cos(x)), 0, TWO_PI, epsabs=1e-14)[0]
    assert weighted == pytest.approx(ref, rel=1e-12)


def test_non_finite_samples_reported():
    grid = GridSpec((8,), (1.0,))
    with pytest.raises(NonFiniteError):
        integrate_values(np.r_[np.nan, np.ones(7)], np.ones(8), grid)
    assert isinstance(NonFiniteError("x"), ArithmeticError)


def test_worker_pool_matches_serial():
    pts = GridSpec((40, 40), (TWO_PI, TWO_PI)).points()
    fn = lambda p: {"v": np.sin(p[:, 0]) * p[:, 1]}  # noqa: E731
    a = evaluate_on_grid(fn, pts, workers=1, chunk=256)
    b = evaluate_on_grid(fn, pts, workers=2, chunk=256)
    assert np.array_equal(a["v"], b["v"])


# -- divergence theorem ------------------------------------------------------------------


def test_divergence_theorem_flat_expression_field():
    coords = ("x0", "x1", "x2")
    X = VectorFieldDef.from_strings(coords, ["sin(x1)*cos(x2) + 0.3", "exp(sin(x0 + x2))", "cos(x0)^2*sin(x2)"])
    chk = divergence_theorem_check(X, _flat(3), GridSpec.uniform(16, [TWO_PI] * 3), tol=1e-10)
    assert chk.passed, chk.value


def test_divergence_theorem_negative_control():
    X = VectorFieldDef.from_strings(("x0", "x1"), ["x0", "0"])
    chk = divergence_theorem_check(X, _flat(2), GridSpec.uniform(16, [TWO_PI] * 2), tol=1e-10)
    assert chk.passed is False and chk.value > 0.1


def test_divergence_theorem_mean_curvature_warped(warped3):
    chk = divergence_theorem_check(lambda p, geo: _mean_field(warped3, p), warped3.metric, GridSpec.uniform(16, warped3), tol=1e-8, name="mean")
    assert chk.passed, chk.value


def _mean_field(model, p):
    from amplab.multiproduct import split_geometry

    return split_geometry(model.metric, model.split, p, order=2).mean_curvature_field()


# -- integral formulas ----------------------------------------------------------------------


def test_flat_integrals_vanish_identically():
    model = flat_torus(3, [1, 1, 1])
    I = random_cubic_form(model.coords, np.random.default_rng(0))
    checks = integral_formula_checks(["mixed_scalar", "contorsion", "statistical", "sigma2"], model, GridSpec.uniform(8, model), I)
    for c in checks:
        if c.id.startswith("integral:") and c.id.endswith(("integrand", "divergence")) and c.id.split(":")[1] in ("mixed_scalar", "sigma2"):
            assert c.value == 0.0, c.id
        assert c.passed, (c.id, c.value)


def test_warped_mixed_scalar_integral(warped3):
    checks = integral_formula_check("mixed_scalar", warped3, GridSpec.uniform(16, warped3))
    assert all(c.passed for c in checks), [(c.id, c.value) for c in checks]
    vals = {c.id: c for c in checks}
    assert vals["integral:mixed_scalar:integrand"].extra["l1"] > 1.0


def test_twisted_with_semi_symmetric_contorsion(twisted3):
    I = semi_symmetric(twisted3, ["0.3*sin(x1)", "cos(x0)", "0.2"])
    checks = integral_formula_checks(["mixed_scalar", "contorsion"], twisted3, GridSpec.uniform(16, twisted3), I)
    assert all(c.passed for c in checks), [(c.id, c.value) for c in checks if not c.passed]


def test_sigma2_on_warped_surface():
    model = multiply_warped_torus(["2 + cos(x0)"])
    grid = GridSpec.uniform(32, model)
    checks = {c.id: c for c in integral_formula_check("sigma2", model, grid)}
    assert all(c.passed for c in checks.values())
    # one-dimensional leaves have sigma_2 = 0, so each single total is -int Ric(N, N)
    assert abs(checks["integral:sigma2:single_0"].value) < 1e-9


def test_integral_kind_eligibility(warped3):
    with pytest.raises(HarnessError):
        integral_formula_check("mixed_scalar", sphere_chart(1.0), GridSpec((8, 8), (1.0, 1.0)))
    with pytest.raises(HarnessError):
        integral_formula_check("unknown", warped3, GridSpec.uniform(8, warped3))
    with pytest.raises(HarnessError):
        integral_formula_check("sigma2", flat_torus(3, [1, 2]), GridSpec.uniform(8, flat_torus(3, [1, 2])))
    with pytest.raises(HarnessError):
        integral_formula_check("statistical", warped3, GridSpec.uniform(8, warped3), semi_symmetric(warped3, ["1", "0", "0"]))


def test_perturbed_integrand_fails(warped3):
    """Negative control: a non-constant weight on the integrand breaks the vanishing total."""
    from amplab.harness import _integral_task

    grid = GridSpec.uniform(16, warped3)
    pts = grid.points()
    out = evaluate_on_grid(_integral_task(warped3, None, ["mixed_scalar"]), pts)
    f = out["mixed_scalar:integrand"]
    assert abs(integrate_values(f, out["rho"], grid)) < 1e-9
    assert abs(integrate_values(f * (1 + 0.5 * np.sin(pts[:, 0])), out["rho"], grid)) > 1e-2


def test_convergence_rows(warped3):
    grid = GridSpec.uniform(8, warped3)
    rows = convergence_pair(["mixed_scalar"], warped3, grid)
    (row,) = rows
    assert row["converged"]
    assert row.get("at_floor") or len(row["pairs"]) == 2


# -- hypothesis report -----------------------------------------------------------------------


def test_flat_satisfies_splitting_hypotheses():
    model = flat_torus(3, [1, 1, 1])
    rep = splitting_hypothesis_report(model, GridSpec.uniform(8, model))
    assert "nonnegative_curvature_splitting" in rep["satisfied"]
    assert rep["hypothesis_sets"]["nonnegative_curvature_splitting"]["conclusion"].startswith("splits (trivially verified")
    json.dumps(rep)


def test_twisted_umbilical_and_mixed_geodesic(twisted3):
    rep = splitting_hypothesis_report(twisted3, GridSpec.uniform(8, twisted3))
    assert max(rep["measurements"]["umbilicity"]) < 1e-12
    hyp = rep["hypothesis_sets"]["umbilical_splitting"]["hypotheses"]
    assert hyp["totally_umbilical"] and hyp["mixed_totally_geodesic"]


def test_warped_mixed_sign_satisfies_nothing(warped3):
    rep = splitting_hypothesis_report(warped3, GridSpec.uniform(8, warped3))
    m = rep["measurements"]
    assert m["Sbar_min"] < 0 < m["Sbar_max"]
    assert rep["satisfied"] == []


def test_hypothesis_report_needs_points(warped3):
    with pytest.raises(HarnessError):
        splitting_hypothesis_report(warped3)


# -- reports ---------------------------------------------------------------------------------


def test_report_json_round_trip():
    r = VerificationReport(meta={"seed": 1})
    r.add(Check("a", "first", 1e-12, 1e-10, True, model="m", grid=(8, 8), points=64))
    r.add(Check("b", "measured", float("nan"), None, None))
    doc = json.loads(r.to_json())
    assert doc["summary"] == {"total": 2, "failed": 0, "measured": 1, "pass": True}
    assert doc["checks"][0]["id"] == "a" and doc["checks"][0]["grid"] == [8, 8]
    assert doc["checks"][1]["value"] is None or isinstance(doc["checks"][1]["value"], str)
    assert r.to_json() == r.to_json()
    r.add(Check("c", "failing", 1.0, 0.1, False))
    assert not r.passed and json.loads(r.to_json())["summary"]["failed"] == 1


def test_unconverged_row_fails_report():
    r = VerificationReport()
    r.convergence.append({"kind": "x", "converged": False})
    assert not r.passed


def test_twisted_reduces_to_warped_when_fibre_independent():
    tw = multiply_twisted_torus(["2 + cos(x0)", "1.5 + sin(x0)"])
    wp = multiply_warped_torus(["2 + cos(x0)", "1.5 + sin(x0)"])
    pts = tw.sample_points(5, np.random.default_rng(0))
    assert np.array_equal(tw.metric.value(pts), wp.metric.value(pts))
