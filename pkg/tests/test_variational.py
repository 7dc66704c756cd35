import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amplab.connections import AffineSplit
from amplab.models import adapted_statistical, flat_torus
from amplab.multiproduct import split_geometry
from amplab.suites import random_cubic_form
from amplab.variational import (
    METRIC_TERMS,
    STAT_TERMS,
    VARIATION_ORDER,
    VariationError,
    VariationFamily,
    aggregate_variation,
    analytic_variation_Q,
    analytic_variation_barQ,
    einstein_residual,
    el_expanded_residual,
    el_residual,
    el_short_residual,
    fd_derivative,
    mixed_ricci,
    mu_closed_form,
    mu_dense,
    mu_det_exact,
    mu_matrix,
    mu_solve,
    oracle_variation_Q,
    oracle_variation_barQ,
    perturbed,
    relative_error,
    semi_symmetric_el,
    semi_symmetric_mixed_ricci,
    u_criticality,
    volume_variation_utils,
)


def _sg(model, count, seed=0, order=VARIATION_ORDER):
    pts = model.sample_points(count, np.random.default_rng(seed))
    return pts, split_geometry(model.metric, model.split, pts, order=order)


# -- mu-system --------------------------------------------------------------------


def test_mu_three_lines():
    assert mu_det_exact([1, 1, 1]) == 4
    assert round(np.linalg.det(mu_matrix([1, 1, 1]))) == 4
    a = np.array([0.3, -1.2, 2.0])
    mu = mu_solve([1, 1, 1], a)
    np.testing.assert_allclose(mu_matrix([1, 1, 1]) @ mu, a, atol=1e-14)


@settings(max_examples=200, deadline=None, derandomize=True, database=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=6).filter(lambda d: sum(d) > 2), st.integers(0, 2**32 - 1))
def test_mu_closed_form_matches_dense(dims, seed):
    a = np.random.default_rng(seed).normal(size=len(dims))
    x, y = mu_closed_form(dims, a), mu_dense(dims, a)
    assert np.abs(x - y).max() <= 1e-12 * max(1.0, np.abs(y).max())
    k, n = len(dims), sum(dims)
    assert mu_det_exact(dims) == (-2) ** (k - 1) * (n - 2)


@pytest.mark.parametrize("dims", [[1, 1, 1], [2, 3], [1, 2, 2, 4], [5, 5, 5, 5, 5, 5]])
def test_mu_equal_right_sides(dims):
    c = 1.7
    mu = mu_solve(dims, np.full(len(dims), c))
    np.testing.assert_allclose(mu, c / (sum(dims) - 2), rtol=1e-14)
    np.testing.assert_allclose(mu_matrix(dims) @ mu, c, rtol=1e-14)


def test_mu_special_and_invalid_dimensions():
    np.testing.assert_array_equal(mu_solve([1, 1], [0.4, 0.9]), [0.0, 0.0])
    with pytest.raises(VariationError):
        mu_solve([2], [1.0])
    with pytest.raises(VariationError):
        mu_solve([0, 3], [1.0, 1.0])


def test_mu_solve_broadcasts_over_points():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(3, 7))
    out = mu_solve([1, 2, 2], a)
    for p in range(7):
        np.testing.assert_allclose(out[:, p], mu_dense([1, 2, 2], a[:, p]), atol=1e-13)


# -- variation families ------------------------------------------------------------


def test_family_rejects_asymmetric_tensor():
    with pytest.raises(VariationError):
        VariationFamily.from_strings(("x", "y"), 0, [["1", "x"], ["y", "1"]])


def test_family_supported_on_block(warped3):
    pts, sg = _sg(warped3, 5)
    fam = VariationFamily.random(warped3.coords, 1, np.random.default_rng(0))
    B = fam.B_jet(sg, pts).val
    Pc = sg.blocks[1].complement.P.val
    assert np.abs(np.einsum("bxy,bxa->bay", B, Pc)).max() < 1e-14


def test_degenerate_family_rejected():
    model = flat_torus(2, [1, 1])
    pts, sg = _sg(model, 3)
    fam = VariationFamily.from_strings(model.coords, 0, [["-4", "0"], ["0", "0"]])
    with pytest.raises(ValueError):
        fam.validate(sg, pts, 0.5, model.metric.signature)


def test_zero_variation_gives_zero_derivatives(warped3):
    pts, sg = _sg(warped3, 4)
    B = sg.geo.g * 0.0
    for v in analytic_variation_Q(sg, (B, 1)).values():
        assert not np.abs(v).max() > 0
    a = AffineSplit(sg, random_cubic_form(warped3.coords, np.random.default_rng(1)).tensor_jet(sg.geo.g, pts, VARIATION_ORDER))
    for v in analytic_variation_barQ(a, (B, 1)).values():
        assert not np.abs(v).max() > 0


def test_flat_conformal_variation_keeps_integrable():
    model = flat_torus(3, [1, 1, 1])
    pts, sg = _sg(model, 6)
    fam = VariationFamily.from_strings(model.coords, 0, [["0.5*sin(x1)"] * 3] * 3)
    an = analytic_variation_Q(sg, fam, pts)
    for i in range(3):
        assert np.abs(an[("T", i)]).max() == 0.0
        assert np.abs(an[("T_perp", i)]).max() == 0.0


def _family_checks(model, count, families, rng, stat):
    pts, sg = _sg(model, count)
    Ijet = stat.tensor_jet(sg.geo.g, pts, VARIATION_ORDER)
    a = AffineSplit(sg, Ijet)
    worst = {}
    for f in range(families):
        fam = VariationFamily.random(model.coords, f % sg.k, rng)
        fam.validate(sg, pts, 4e-3, model.metric.signature)
        B, j = fam.B_jet(sg, pts), fam.block
        for an, fd in ((analytic_variation_Q(sg, (B, j)), oracle_variation_Q(sg, (B, j))), (analytic_variation_barQ(a, (B, j)), oracle_variation_barQ(a, (B, j)))):
            for key, v in an.items():
                worst[key] = max(worst.get(key, 0.0), relative_error(v, fd[key]))
    return worst


def test_metric_and_statistical_variations_against_fd(warped3):
    rng = np.random.default_rng(21)
    worst = _family_checks(warped3, 6, 3, rng, random_cubic_form(warped3.coords, rng))
    names = {k[0] for k in worst}
    assert names == set(METRIC_TERMS) | set(STAT_TERMS)
    assert len(METRIC_TERMS) == 6 and len(STAT_TERMS) == 9
    bad = {k: v for k, v in worst.items() if v >= 1e-5}
    assert not bad


def test_variations_non_integrable_model(frame4):
    rng = np.random.default_rng(22)
    worst = _family_checks(frame4, 4, 3, rng, random_cubic_form(frame4.coords, rng))
    assert max(worst.values()) < 1e-5


def test_adapted_statistical_trace_pairing_is_stationary(warped3):
    stat = adapted_statistical(warped3, {(0, 0, 0): "0.4*sin(x0)", (1, 1, 1): "0.3", (2, 2, 2): "0.5*cos(x2)"})
    pts, sg = _sg(warped3, 6)
    a = AffineSplit(sg, stat.tensor_jet(sg.geo.g, pts, VARIATION_ORDER))
    fam = VariationFamily.from_strings(warped3.coords, 1, [["0", "0", "0"], ["0", "0.3*cos(x0)", "0"], ["0", "0", "0"]])
    an = analytic_variation_barQ(a, fam, pts)
    assert np.abs(an[("tr_perp_I.tr_Istar", 1)]).max() < 1e-12


def test_aggregates_against_fd(warped3):
    pts, sg = _sg(warped3, 6)
    rng = np.random.default_rng(5)
    stat = random_cubic_form(warped3.coords, rng)
    Ijet = stat.tensor_jet(sg.geo.g, pts, VARIATION_ORDER)
    for j in range(3):
        B = VariationFamily.random(warped3.coords, j, rng).B_jet(sg, pts)
        agg = aggregate_variation(sg, (B, j), a=AffineSplit(sg, Ijet.truncate(0)))
        geo = sg.geo
        num = fd_derivative(lambda s: s.q_sum(), sg, B)
        assert relative_error((geo.pair02(agg.Q, B) - geo.div(agg.X)).truncate(0).val, num) < 1e-5

        def qbar_total(s):
            aff = AffineSplit(s, Ijet.truncate(0))
            return sum((aff.bar_q(b) for b in s.blocks[1:]), aff.bar_q(s.blocks[0]))

        assert relative_error(geo.pair02(agg.Qbar, B).truncate(0).val, fd_derivative(qbar_total, sg, B)) < 1e-5


def test_flat_aggregates_vanish():
    model = flat_torus(3, [1, 1, 1])
    pts, sg = _sg(model, 4)
    B = VariationFamily.random(model.coords, 0, np.random.default_rng(0)).B_jet(sg, pts)
    agg = aggregate_variation(sg, (B, 0))
    assert np.abs(agg.Q.val).max() == 0.0 and np.abs(agg.X.val).max() == 0.0


# -- volume ------------------------------------------------------------------------


def test_volume_factor(warped3):
    pts, sg = _sg(warped3, 8)
    assert not volume_variation_utils(sg, sg.geo.g * 0.0)["dvol_factor"].any()
    B = sg.blocks[1].g_block * 2.0
    np.testing.assert_allclose(volume_variation_utils(sg, B)["dvol_factor"], sg.blocks[1].dim, atol=1e-13)


def test_divergence_variation_against_fd(warped3):
    pts, sg = _sg(warped3, 8)
    rng = np.random.default_rng(9)
    B = VariationFamily.random(warped3.coords, 2, rng).B_jet(sg, pts)
    X = sg.mean_curvature_field()
    got = volume_variation_utils(sg, B, X)
    num = fd_derivative(lambda s: s.geo.div(X), sg, B)
    assert relative_error(got["ddiv"], num) < 1e-6
    num = fd_derivative(lambda s: s.geo.log_density, sg, B)
    assert relative_error(got["dvol_factor"], num) < 1e-6


def test_perturbed_keeps_blocks_orthogonal(frame4):
    pts, sg = _sg(frame4, 3, order=2)
    B = VariationFamily.random(frame4.coords, 0, np.random.default_rng(2)).B_jet(sg, pts)
    s = perturbed(sg, B, 0.01)
    g = s.geo.g.val
    for i, j in itertools.combinations(range(3), 2):
        Pi, Pj = s.blocks[i].P.val, s.blocks[j].P.val
        assert np.abs(np.einsum("bxa,bxy,byc->bac", Pi, g, Pj)).max() < 1e-12


# -- Euler-Lagrange -----------------------------------------------------------------


@pytest.mark.parametrize("partition", [[1, 1, 1], [1, 2, 2]])
def test_flat_torus_is_critical(partition):
    model = flat_torus(sum(partition), partition)
    pts, sg = _sg(model, 10, order=2)
    rep = el_residual(sg)
    assert rep.max_residual() < 1e-12
    assert max(rep.lam_deviation) < 1e-10 and max(abs(x) for x in rep.lam_mean) < 1e-12
    ric = mixed_ricci(sg)
    assert np.abs(ric.tensor).max() == 0.0 and np.abs(ric.scalar).max() == 0.0


def test_flat_torus_semi_symmetric_zero_field():
    model = flat_torus(3, [1, 1, 1])
    pts, sg = _sg(model, 5, order=2)
    U = sg.geo.g[..., 0] * 0.0
    el = semi_symmetric_el(sg, AffineSplit(sg, _zero_I(sg)), U)
    assert el["metric"].max_residual() < 1e-12
    assert all(not r["perp"].any() and not r["block"].any() for r in el["U"])


def _zero_I(sg):
    from amplab import jets

    return jets.constant(np.zeros(sg.geo.g.shape + (sg.n,)), sg.n, 2)


def test_u_criticality_balanced_blocks():
    model = flat_torus(4, [2, 2])
    pts, sg = _sg(model, 4, order=2)
    from amplab.geometry import VectorFieldDef

    U = VectorFieldDef.from_strings(model.coords, ["sin(x0)", "0.3", "cos(x2)", "0.1"]).jet(pts, 2)
    res = u_criticality(sg, U)
    Uv = U.val
    # n = n' = 2: the residual is 2 n (n' - 1) P'U
    np.testing.assert_allclose(res[0]["perp"], 4 * np.einsum("bkl,bl->bk", sg.blocks[1].P.val, Uv), atol=1e-14)


def test_expanded_and_compact_forms_agree(warped3, frame4):
    for model in (warped3, frame4):
        pts, sg = _sg(model, 15, order=2)
        rep, exp = el_residual(sg), el_expanded_residual(sg)
        gap = max(np.abs(x - y).max() for x, y in zip(rep.residual, exp.residual))
        assert gap < 1e-8


def test_short_form_on_integrable_models(warped3, twisted3):
    for model in (warped3, twisted3):
        pts, sg = _sg(model, 15, order=2)
        short, exp = el_short_residual(sg), el_expanded_residual(sg)
        assert max(np.abs(x - y).max() for x, y in zip(short.residual, exp.residual)) < 1e-9


def test_warped_residual_nonzero(warped3):
    pts, sg = _sg(warped3, 15, order=2)
    assert el_residual(sg).max_residual() > 1e-3 or max(el_residual(sg).lam_deviation) > 1e-3


def test_einstein_form_equivalence(frame4):
    pts, sg = _sg(frame4, 10, order=2)
    rep = el_residual(sg)
    ric = mixed_ricci(sg)
    ein = einstein_residual(ric, sg.geo.g.val)
    assert np.abs(ein + sum(rep.residual)).max() < 1e-8
    assert np.abs(ric.scalar).max() < 1e-9
    dense = mixed_ricci(sg, dense=True)
    assert np.abs(ric.tensor - dense.tensor).max() < 1e-10


def test_mixed_ricci_trace_consistency(warped3):
    pts, sg = _sg(warped3, 10, order=2)
    from amplab.geometry import VectorFieldDef

    U = VectorFieldDef.from_strings(warped3.coords, ["0.2", "sin(x0)", "0.3*cos(x1)"]).jet(pts, 2)
    exp = semi_symmetric_mixed_ricci(sg, U)
    gen = mixed_ricci(sg, U=U)
    assert np.abs(exp.tensor - gen.tensor).max() < 1e-7
    gi = sg.geo.ginv.val
    trace = sum(np.einsum("bxy,bxy->b", r, gi) for r in exp.blocks)
    np.testing.assert_allclose(trace, 0.0, atol=1e-9)
