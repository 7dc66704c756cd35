import numpy as np
import pytest

from amplab.models import (
    ModelError,
    adapted_statistical,
    build_model,
    flat_torus,
    frame_model,
    list_models,
    multiply_twisted_torus,
    multiply_warped_torus,
    sphere_chart,
)
from amplab.multiproduct import split_geometry
from amplab.suites import fixture_suite
from amplab.variational import el_residual


def _sg(model, count=20, seed=0):
    pts = model.sample_points(count, np.random.default_rng(seed))
    return pts, split_geometry(model.metric, model.split, pts)


@pytest.mark.parametrize("n, partition", [(3, [1, 1, 1]), (4, [2, 2]), (5, [1, 2, 2])])
def test_flat_torus_is_trivial(n, partition):
    model = flat_torus(n, partition)
    _, sg = _sg(model, 10)
    assert sg.k == len(partition)
    assert not sg.mixed_scalar().val.any() and not sg.q_sum().val.any()
    rep = el_residual(sg)
    assert rep.max_residual() == 0.0 and rep.lam_mean == [0.0] * len(partition)


def test_flat_partition_must_sum():
    with pytest.raises(ModelError):
        flat_torus(3, [1, 1])


@pytest.mark.parametrize("name", ["flat3", "warped3", "twisted3"])
def test_fixtures_reproduced(request, name):
    model = request.getfixturevalue(name)
    pts = model.sample_points(100, np.random.default_rng(1))
    checks = fixture_suite(model, pts)
    assert checks
    for c in checks:
        assert c.passed, (c.id, c.value)


def test_warped_surface_mixed_scalar():
    model = multiply_warped_torus(["2 + cos(x0)"])
    pts, sg = _sg(model)
    x = pts[:, 0]
    np.testing.assert_allclose(sg.mixed_scalar().val, np.cos(x) / (2 + np.cos(x)), atol=1e-13)


def test_warped_with_unit_functions_is_flat():
    model = multiply_warped_torus(["1", "1"])
    _, sg = _sg(model, 5)
    assert np.abs(sg.geo.gamma.val).max() == 0.0
    assert not sg.mixed_scalar().val.any()


def test_two_dimensional_base():
    model = multiply_warped_torus(["2 + cos(x0)*sin(x1)"], base_dim=2)
    assert model.split.dims == (2, 1)
    pts = model.sample_points(30, np.random.default_rng(2))
    assert all(c.passed for c in fixture_suite(model, pts))


def test_warping_validation():
    with pytest.raises(ModelError):
        multiply_warped_torus(["cos(x0)"])
    with pytest.raises(ModelError):
        multiply_warped_torus(["2 + cos(x1)"])  # fibre coordinate not allowed in a warping function
    with pytest.raises(ModelError):
        multiply_twisted_torus(["2 + cos(x2)", "2"])  # another fibre's coordinate
    with pytest.raises(ModelError):
        multiply_warped_torus([])


def test_twisted_umbilical_with_fixture_mean_curvature(twisted3):
    _, sg = _sg(twisted3, 50)
    for b in sg.blocks[1:]:
        umb = b.h.val - np.einsum("...k,...ij->...kij", b.H.val, b.g_block.val) / b.dim
        assert np.abs(umb).max() < 1e-9


def test_sphere_chart_domain():
    s = sphere_chart(2.0)
    assert not s.closed
    pts = s.sample_points(50, np.random.default_rng(0))
    assert np.all(np.abs(np.sin(pts[:, 0])) > 1e-3)
    with pytest.raises(ModelError):
        s.check_points([[0.0, 1.0]])
    with pytest.raises(ModelError):
        sphere_chart(0.0)
    assert all(c.passed for c in fixture_suite(s, pts))


def test_frame_model_validation():
    with pytest.raises(ModelError):
        frame_model([(), ("0",)], ["1", "1"], [1, 2])
    with pytest.raises(ModelError):
        frame_model([(), ()], ["1", "1"], [1, 1])


def test_frame_model_lorentzian_signature():
    m = frame_model([(), ("0.2*sin(x2)",), ("0.1", "0.3*cos(x0)")], ["-1", "1", "2"], [1, 2], signature=[-1, 1, 1])
    _, sg = _sg(m, 5)
    assert sg.blocks[0].dim == 1
    assert np.all(np.linalg.det(sg.geo.g.val) < 0)


def test_registry_and_params():
    names = [n for n, _ in list_models()]
    assert names == sorted(names) and {"flat_torus", "multiply_warped_torus", "sphere_chart"} <= set(names)
    assert build_model("flat_torus", {"n": 4, "partition": [2, 2]}).split.dims == (2, 2)
    with pytest.raises(ModelError):
        build_model("klein_bottle")
    with pytest.raises(ModelError):
        build_model("flat_torus", {"radius": 1})


def test_adapted_statistical_preset(warped3):
    with pytest.raises(ModelError):
        adapted_statistical(warped3, {(0, 1, 1): "1"})
    I = adapted_statistical(warped3, {(2, 2, 2): "0.3"})
    assert I.kind == "statistical"
    with pytest.raises(ModelError):
        adapted_statistical(build_model("frame_model"), {(0, 0, 0): "1"})
