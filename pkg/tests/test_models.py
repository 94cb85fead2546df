import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from stochsobol.core import ConfigError, ModelError
from stochsobol.models import (
    SIR_SPECS,
    IshigamiConfig,
    IshigamiModel,
    SirConfig,
    SirModel,
    SirOdeModel,
    ishigami,
    ishigami_indices,
    ishigami_variances,
    sir_metamodel,
    sir_run,
    sir_simulate,
    sir_trajectory,
)
from stochsobol.oracle import quadrature_v
from stochsobol.sampling import SeedStream, draw_iid


class TestIshigami:
    def test_origin(self):
        assert ishigami(0.0, 0.0, 0.0) == 0.0

    def test_peak(self):
        assert ishigami(math.pi / 2, math.pi / 2, 0.0) == pytest.approx(8.0, abs=1e-12)

    def test_frequency_multiplier(self):
        cfg = IshigamiConfig(11.0)
        x = np.array([0.3, -1.2])
        s = np.sin(11 * x)
        np.testing.assert_allclose(ishigami(x, x, x, cfg), s + 7 * np.sin(x) ** 2 + 0.1 * x**4 * s,
                                   rtol=1e-12)

    def test_bad_multiplier(self):
        with pytest.raises(ConfigError):
            IshigamiConfig(0.0)

    def test_analytic_indices(self):
        s1, s2, s3 = ishigami_indices()
        assert s1 == pytest.approx(0.3139, abs=5e-5)
        assert s2 == pytest.approx(0.4424, abs=5e-5)
        assert s3 == 0.0

    def test_first_order_terms_by_quadrature(self):
        v = ishigami_variances()
        spec = IshigamiModel().specs[0]
        b = 0.1 * math.pi**4 / 5
        # E[Y | x1] = sin(x1)(1 + 0.1 E[X3^4]) + 3.5; subtract the mean squared.
        v1 = quadrature_v(lambda x: np.sin(x) * (1 + b) + 3.5, spec) - 3.5**2
        assert v1 == pytest.approx(v["V1"], rel=1e-8)

    def test_variance_decomposition_by_monte_carlo(self):
        model = IshigamiModel()
        x = draw_iid(model.specs, 200_000, SeedStream(11))
        assert np.var(model(x)) == pytest.approx(ishigami_variances()["total"], abs=0.2)

    def test_model_ids_and_specs(self):
        assert IshigamiModel().model_id == "ishigami"
        mod = IshigamiModel(IshigamiConfig(11.0, True))
        assert mod.model_id == "ishigami-mod"
        assert [s.name for s in mod.specs] == ["x1", "x2"]
        assert mod.stochastic and not IshigamiModel().stochastic

    def test_nuisance_needs_rng(self):
        model = IshigamiModel(IshigamiConfig(1.0, True))
        with pytest.raises(ModelError):
            model(np.zeros((2, 2)))

    def test_nuisance_draws_x3_from_the_given_stream(self):
        model = IshigamiModel(IshigamiConfig(1.0, True))
        x = np.full((4, 2), 0.5)
        a = model(x, np.random.default_rng(1))
        b = model(x, np.random.default_rng(1))
        np.testing.assert_array_equal(a, b)
        assert np.ptp(a) > 0


SMALL = SirConfig(population=120, initial_susceptible=119, initial_infectious=1,
                  lambda_over_n=2.0 / 1500.0)


class TestSirSimulate:
    def test_no_infectious(self):
        cfg = SirConfig(1200, 1190, 0)
        end = sir_run(cfg, SeedStream(0))
        assert (end.i + end.r) / 1200 == sir_simulate(cfg, SeedStream(0)) == 10 / 1200
        assert end.t == 0.0

    def test_no_contacts(self):
        cfg = SirConfig(lambda_over_n=0.0)
        assert sir_simulate(cfg, SeedStream(1)) == 10 / 1200

    @given(st.integers(0, 10_000), st.floats(1 / 15000, 3 / 15000), st.floats(1 / 15, 3 / 15))
    @settings(max_examples=30, deadline=None)
    def test_output_bounds(self, seed, lam, mu):
        cfg = SirConfig(lambda_over_n=lam, mu=mu)
        y = sir_simulate(cfg, SeedStream(seed))
        assert 10 / 1200 <= y <= 1200 / 1200

    def test_deterministic_given_stream(self):
        a = sir_run(SirConfig(), SeedStream(4, 2))
        b = sir_run(SirConfig(), SeedStream(4, 2))
        assert a == b

    def test_population_conserved(self):
        end = sir_run(SirConfig(), SeedStream(5))
        assert end.population == 1200 and end.i == 0

    def test_horizon_stops_early(self):
        end = sir_run(SirConfig(horizon=1.0), SeedStream(6))
        assert end.t <= 1.0 + 1e-12

    def test_bad_counts(self):
        with pytest.raises(ConfigError):
            SirConfig(100, 95, 10)
        with pytest.raises(ConfigError):
            SirConfig(mu=-1.0)

    def test_batch_matches_scalar_runs(self):
        model = SirModel()
        x = draw_iid(SIR_SPECS, 20, SeedStream(7))
        batch = model(x, SeedStream(8).generator())
        rng = SeedStream(8).generator()
        single = [sir_simulate(model.config_at(row), rng) for row in x]
        np.testing.assert_array_equal(batch, single)

    def test_model_needs_rng(self):
        with pytest.raises(ModelError):
            SirModel()(np.array([[2 / 15000, 2 / 15]]))

    def test_exact_chain_small_population(self):
        # Two individuals, one infectious: infection before removal with
        # probability lam / (lam + mu), giving final size 1, else 1/2.
        cfg = SirConfig(2, 1, 1, lambda_over_n=0.3, mu=0.2)
        ys = np.array([sir_simulate(cfg, SeedStream(9, r)) for r in range(20_000)])
        p = 0.3 / 0.5
        assert np.mean(ys == 1.0) == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / 20_000))


def _reference_final_size(cfg: SirConfig) -> float:
    n = cfg.population
    lam, mu, thr = cfg.infection_rate, cfg.mu, 1.0 / (10.0 * n)

    def rhs(t, y):
        return [-lam * y[0] * y[1], lam * y[0] * y[1] - mu * y[1], mu * y[1]]

    def crossing(t, y):
        return y[1] - thr

    crossing.terminal, crossing.direction = True, -1
    y0 = [cfg.initial_susceptible / n, cfg.initial_infectious / n, cfg.initial_removed / n]
    sol = solve_ivp(rhs, (0.0, 100.0 / mu), y0, method="DOP853", rtol=1e-13, atol=1e-16,
                    events=crossing)
    end = sol.y_events[0][0]
    return float(end[1] + end[2])


class TestMetamodel:
    def test_no_infectious(self):
        assert sir_metamodel(SirConfig(1200, 1200, 0)) == 0.0

    def test_conservation(self):
        traj = sir_trajectory(SirConfig(), 0.05, 200.0)
        np.testing.assert_allclose(traj[:, 1:].sum(axis=1), 1.0, atol=1e-10)

    def test_midpoint_against_adaptive_integrator(self):
        cfg = SirConfig()
        assert sir_metamodel(cfg) == pytest.approx(_reference_final_size(cfg), abs=1e-8)

    @pytest.mark.parametrize("lam,mu", [(1 / 15000, 1 / 15), (3 / 15000, 1 / 15),
                                        (1 / 15000, 3 / 15), (3 / 15000, 3 / 15)])
    def test_box_corners(self, lam, mu):
        cfg = SirConfig(lambda_over_n=lam, mu=mu)
        assert sir_metamodel(cfg) == pytest.approx(_reference_final_size(cfg), abs=1e-8)

    def test_no_extinction(self):
        with pytest.raises(ModelError, match="no extinction"):
            sir_metamodel(SirConfig(mu=0.0))

    def test_ode_model_matches_scalar(self):
        x = np.array([[2 / 15000, 2 / 15], [1 / 15000, 3 / 15]])
        out = SirOdeModel()(x)
        assert out[0] == sir_metamodel(SirConfig())
        assert out[1] == sir_metamodel(SirConfig(lambda_over_n=1 / 15000, mu=3 / 15))

    def test_stochastic_mean_approaches_metamodel(self):
        gaps = []
        for n, s0, i0 in ((120, 119, 1), (1200, 1190, 10), (12000, 11900, 100)):
            cfg = SirConfig(n, s0, i0, (2 / 15000) * 1200 / n, 2 / 15)
            ys = [sir_simulate(cfg, SeedStream(12, r)) for r in range(2000)]
            gaps.append(abs(np.mean(ys) - sir_metamodel(cfg)))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 0.02
