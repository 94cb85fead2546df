import math

import numpy as np
import pytest

from stochsobol.core import ConfigError, InputSpec, ModelError
from stochsobol.models import IshigamiModel, ishigami_indices, ishigami_variances
from stochsobol.oracle import (
    GridModel,
    anova_decompose,
    nested_grid_model,
    partial_variances,
    quadrature_v,
    sobol_indices,
)

SYM = InputSpec("x", -1.0, 1.0)
UNIT = InputSpec("u", 0.0, 1.0)


def test_additive_has_no_interaction():
    gm = GridModel.from_function(lambda x: x[:, 0] + x[:, 1], [UNIT, UNIT], 17)
    total, first, second, residual = anova_decompose(gm)
    assert abs(second[0, 1]) < 1e-12 and abs(residual) < 1e-12
    assert first.sum() == pytest.approx(total, abs=1e-12)


def test_product_is_pure_interaction():
    gm = GridModel.from_function(lambda x: x[:, 0] * x[:, 1], [SYM, SYM], 20)
    total, first, second, _ = anova_decompose(gm)
    np.testing.assert_allclose(first, 0.0, atol=1e-14)
    assert second[0, 1] == pytest.approx(total, rel=1e-12)


def test_components_sum_to_total():
    f = lambda x: np.sin(3 * x[:, 0]) * x[:, 2] ** 2 + x[:, 1] * x[:, 0] + x[:, 2]
    gm = GridModel.from_function(f, [UNIT, SYM, UNIT], 12)
    total, first, second, residual = anova_decompose(gm)
    assert first.sum() + second[np.triu_indices(3, 1)].sum() + residual == pytest.approx(
        total, abs=1e-10)
    assert all(v >= -1e-10 for v in partial_variances(gm).values())


def test_total_indices_cover_interactions():
    gm = GridModel.from_function(lambda x: x[:, 0] * x[:, 1], [SYM, SYM], 20)
    idx = sobol_indices(gm)
    np.testing.assert_allclose(idx["total"], 1.0, atol=1e-12)


def test_ishigami_grid_refinement():
    model = IshigamiModel()
    ref = np.array(ishigami_indices())
    gaps = []
    prev = None
    for m in (16, 32, 64, 128):
        gm = GridModel.from_function(lambda x: model(x), model.specs, m)
        total, first, _, _ = anova_decompose(gm)
        s = first / total
        if m == 64:
            assert np.max(np.abs(s - ref)) < 1e-3
        if prev is not None:
            gaps.append(np.max(np.abs(s - prev)))
        prev = s
    assert gaps[0] > gaps[1] > gaps[2]
    assert np.max(np.abs(prev - ref)) < 2e-4


def test_grid_limits():
    with pytest.raises(ConfigError, match="grid too large"):
        GridModel.from_function(lambda x: x[:, 0], [UNIT] * 3, 256)
    with pytest.raises(ConfigError, match="grid too large"):
        GridModel.from_function(lambda x: x[:, 0], [UNIT] * 5, 2)
    with pytest.raises(ConfigError):
        GridModel(3, np.zeros((3, 4)))
    with pytest.raises(ConfigError):
        GridModel(2, np.array([[0.0, np.nan], [1.0, 2.0]]))


def test_cell_centre_nodes():
    np.testing.assert_allclose(GridModel.nodes(UNIT, 4), [0.125, 0.375, 0.625, 0.875])


class TestQuadrature:
    def test_constant(self):
        assert quadrature_v(lambda x: 3.0, UNIT) == pytest.approx(9.0, abs=1e-12)

    def test_identity(self):
        assert quadrature_v(lambda x: x, UNIT) == pytest.approx(1 / 3, abs=1e-12)

    def test_ishigami_x2(self):
        spec = IshigamiModel().specs[1]
        v = quadrature_v(lambda x: 7 * np.sin(x) ** 2 + 0.0, spec)
        # E[Y] = 3.5 comes from the same term; every other term averages to zero.
        s2 = (v - 3.5**2) / ishigami_variances()["total"]
        assert s2 == pytest.approx(0.4424, abs=5e-5)

    def test_non_convergence(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ModelError):
            quadrature_v(lambda x: rng.normal(size=np.shape(x)), UNIT, max_nodes=2**12)

    def test_too_few_nodes(self):
        with pytest.raises(ConfigError):
            quadrature_v(lambda x: x, UNIT, nodes=4)


def test_nested_grid_removes_noise():
    def noisy(x, rng):
        return x[:, 0] + 2 * x[:, 1] + rng.normal(scale=0.5, size=x.shape[0])

    gm = nested_grid_model(noisy, [UNIT, UNIT], 24, 200, np.random.default_rng(1))
    total, first, _, _ = anova_decompose(gm)
    # Var = 1/12 + 4/12 + 0.25 on the midpoint grid (to O(1/m^2)).
    exact = np.array([1 / 12, 4 / 12]) / (5 / 12 + 0.25)
    np.testing.assert_allclose(first / total, exact, atol=5e-3)
    assert gm.noise_variance == pytest.approx(0.25, rel=0.02)
