import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochsobol.core import (
    ConfigError,
    Estimator,
    InputSpec,
    InsufficientSampleError,
    SampleSet,
    ZeroVarianceError,
    combine,
    empirical_moments,
)
from stochsobol.models import IshigamiModel, ishigami_variances
from stochsobol.oracle import quadrature_v
from stochsobol.sampling import SeedStream, draw_iid

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


class TestEmpiricalMoments:
    def test_constant_sample(self):
        assert empirical_moments([1, 1, 1, 1]) == (1.0, 0.0)

    def test_biased_normalization(self):
        assert empirical_moments([0, 2]) == (1.0, 1.0)

    @pytest.mark.parametrize("values", [[], [3.0]])
    def test_too_short(self, values):
        with pytest.raises(InsufficientSampleError, match="insufficient sample"):
            empirical_moments(values)

    def test_ishigami_variance(self):
        model = IshigamiModel()
        x = draw_iid(model.specs, 100_000, SeedStream(3))
        _, var = empirical_moments(model(x))
        expected = 0.5 + 49 / 8 + 0.1 * math.pi**4 / 5 + 0.01 * math.pi**8 / 18
        assert abs(var - expected) < 0.3
        assert ishigami_variances()["total"] == pytest.approx(expected, rel=1e-12)

    @given(arrays(np.float64, st.integers(2, 50), elements=finite))
    def test_variance_nonnegative(self, y):
        assert empirical_moments(y)[1] >= 0.0


class TestCombine:
    def test_zero_index(self):
        assert combine(1.0, 1.0, 1.0).index_value == 0.0

    def test_unit_index(self):
        assert combine(2.0, 1.0, 1.0).index_value == 1.0

    @pytest.mark.parametrize("variance", [0.0, -1.0])
    def test_zero_variance(self, variance):
        with pytest.raises(ZeroVarianceError, match="zero output variance"):
            combine(1.0, 1.0, variance)

    def test_not_clamped(self):
        est = combine(0.5, 1.0, 1.0, "x", Estimator.JANSEN)
        assert est.index_value == -0.5
        assert est.out_of_range

    def test_in_range_flag(self):
        assert not combine(1.5, 1.0, 1.0).out_of_range
        assert combine(2.06, 1.0, 1.0).out_of_range
        assert not combine(0.96, 1.0, 1.0).out_of_range

    def test_ishigami_x2_by_quadrature(self):
        spec = IshigamiModel().specs[1]
        mean = 3.5
        v = quadrature_v(lambda x: 7.0 * np.sin(x) ** 2, spec)
        est = combine(v, mean, ishigami_variances()["total"], "x2")
        assert est.index_value == pytest.approx(0.4424, abs=5e-5)

    @given(finite, finite, st.floats(1e-6, 1e6))
    def test_reconstruction_is_exact(self, v, m, var):
        est = combine(v, m, var)
        assert est.index_value == (est.v_hat - est.y_bar * est.y_bar) / est.sigma2_hat

    @given(
        arrays(np.float64, 40, elements=st.floats(-10, 10)),
        st.floats(0.1, 10.0) | st.floats(-10.0, -0.1),
        st.floats(-100, 100),
    )
    @settings(max_examples=50)
    def test_affine_invariance(self, y, a, b):
        if np.ptp(y) < 1e-3:
            return
        # A grouped conditional mean: pairs of consecutive outputs share an x.
        cond = np.repeat(y.reshape(-1, 2).mean(axis=1), 2)

        def index(z, c):
            m, var = empirical_moments(z)
            return combine(float(np.mean(c * c)), m, var).index_value

        def cancellation(z):
            # Relative size of mean^2 against the variance it is subtracted from.
            return float(np.mean(z * z) / np.var(z))

        base = index(y, cond)
        z = a * y + b
        moved = index(z, a * cond + b)
        tol = 64 * np.finfo(float).eps * (cancellation(y) + cancellation(z))
        assert moved == pytest.approx(base, rel=1e-9, abs=tol)


class TestTypes:
    def test_input_spec_bounds(self):
        with pytest.raises(ConfigError):
            InputSpec("x", 1.0, 1.0)
        spec = InputSpec("x", -2.0, 4.0)
        assert spec.width == 6.0 and spec.midpoint == 1.0

    def test_sample_set_shape(self):
        with pytest.raises(ValueError):
            SampleSet(np.zeros((3, 2)), np.zeros(4))
        with pytest.raises(InsufficientSampleError):
            SampleSet(np.zeros((1, 2)), np.zeros(1))
        s = SampleSet(np.arange(6.0).reshape(3, 2), np.ones(3))
        assert (s.n, s.p) == (3, 2)
        np.testing.assert_array_equal(s.column(1), [1.0, 3.0, 5.0])

    def test_sample_set_is_read_only(self):
        s = SampleSet(np.zeros((3, 1)), np.zeros(3))
        with pytest.raises(ValueError):
            s.outputs[0] = 1.0
