"""Simulators used to exercise the estimators.

* Ishigami function, optionally with a higher-frequency first argument and
  with ``X3`` hidden as a nuisance draw.
* Stochastic SIR epidemic, simulated exactly (Gillespie) until extinction;
  the output is the final size ``(I_T + R_T) / N``.
* The deterministic SIR ODE limit of the same chain (the metamodel).

Models used by the harness are callables ``model(x, rng) -> y`` over a
``(n, p)`` input matrix, with a ``specs`` tuple describing the declared
inputs. Stochastic models draw their nuisance randomness from ``rng``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import ConfigError, InputSpec, ModelError
from .sampling import SeedStream

PI = math.pi


# ---------------------------------------------------------------- Ishigami

ISHIGAMI_A = 7.0
ISHIGAMI_B = 0.1


@dataclass(frozen=True)
class IshigamiConfig:
    frequency_multiplier: float = 1.0
    nuisance_mode: bool = False

    def __post_init__(self) -> None:
        if not self.frequency_multiplier > 0:
            raise ConfigError("frequency_multiplier must be positive")


def ishigami(x1, x2, x3, cfg: IshigamiConfig = IshigamiConfig()):
    s1 = np.sin(cfg.frequency_multiplier * np.asarray(x1, dtype=np.float64))
    return s1 + ISHIGAMI_A * np.sin(x2) ** 2 + ISHIGAMI_B * np.asarray(x3) ** 4 * s1


def ishigami_variances() -> dict[str, float]:
    """Closed-form ANOVA terms of Ishigami with inputs uniform on ``[-pi, pi]``.

    The multiplier does not change them: ``sin(m x)`` with ``x`` uniform over
    whole periods has the law of ``sin(x)``.
    """
    a, b = ISHIGAMI_A, ISHIGAMI_B
    v1 = 0.5 * (1.0 + b * PI**4 / 5.0) ** 2
    v2 = a * a / 8.0
    v13 = b * b * PI**8 * (1.0 / 18.0 - 1.0 / 50.0)
    total = a * a / 8.0 + b * PI**4 / 5.0 + b * b * PI**8 / 18.0 + 0.5
    return {"V1": v1, "V2": v2, "V3": 0.0, "V13": v13, "total": total}


def ishigami_indices() -> tuple[float, float, float]:
    v = ishigami_variances()
    return v["V1"] / v["total"], v["V2"] / v["total"], 0.0


ISHIGAMI_SPEC = InputSpec("x", -PI, PI)


@dataclass(frozen=True)
class IshigamiModel:
    cfg: IshigamiConfig = IshigamiConfig()

    @property
    def model_id(self) -> str:
        return "ishigami" if self.cfg.frequency_multiplier == 1.0 else "ishigami-mod"

    @property
    def specs(self) -> tuple[InputSpec, ...]:
        names = ("x1", "x2") if self.cfg.nuisance_mode else ("x1", "x2", "x3")
        return tuple(InputSpec(n, -PI, PI) for n in names)

    @property
    def stochastic(self) -> bool:
        return self.cfg.nuisance_mode

    def reference_indices(self) -> tuple[float, ...]:
        return ishigami_indices()[: len(self.specs)]

    def __call__(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.cfg.nuisance_mode:
            if rng is None:
                raise ModelError("nuisance-mode Ishigami needs a random generator")
            x3 = rng.uniform(-PI, PI, size=x.shape[0])
            return ishigami(x[:, 0], x[:, 1], x3, self.cfg)
        return ishigami(x[:, 0], x[:, 1], x[:, 2], self.cfg)


# --------------------------------------------------------------------- SIR


@dataclass(frozen=True)
class SirConfig:
    population: int = 1200
    initial_susceptible: int = 1190
    initial_infectious: int = 10
    lambda_over_n: float = 2.0 / 15000.0
    mu: float = 2.0 / 15.0
    horizon: float = math.inf

    def __post_init__(self) -> None:
        if min(self.population, self.initial_susceptible, self.initial_infectious) < 0:
            raise ConfigError("SIR counts must be nonnegative")
        if self.initial_susceptible + self.initial_infectious > self.population:
            raise ConfigError("S0 + I0 must not exceed the population")
        if self.lambda_over_n < 0 or self.mu < 0:
            raise ConfigError("SIR rates must be nonnegative")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")

    @property
    def initial_removed(self) -> int:
        return self.population - self.initial_susceptible - self.initial_infectious

    @property
    def infection_rate(self) -> float:
        """The per-capita contact rate ``lambda`` (``lambda_over_n * N``)."""
        return self.lambda_over_n * self.population


@dataclass(frozen=True)
class SirState:
    s: int
    i: int
    r: int
    t: float = 0.0

    @property
    def population(self) -> int:
        return self.s + self.i + self.r


# Status codes returned by the compiled kernel.
_OK, _RUNAWAY = 0, 1


@njit(cache=True, nogil=True)
def _gillespie(s, i, r, lam_n, mu, horizon, max_events, rng):
    t = 0.0
    events = 0
    while i > 0:
        rate_inf = lam_n * s * i
        total = rate_inf + mu * i
        if total <= 0.0:
            break
        dt = rng.exponential(1.0 / total)
        if t + dt > horizon:
            t = horizon
            break
        t += dt
        if rng.random() * total < rate_inf:
            s -= 1
            i += 1
        else:
            i -= 1
            r += 1
        events += 1
        if events >= max_events:
            return s, i, r, t, _RUNAWAY
    return s, i, r, t, _OK


@njit(cache=True, nogil=True)
def _gillespie_batch(lam_n, mu, n_pop, s0, i0, r0, horizon, max_events, rng, out):
    for k in range(lam_n.shape[0]):
        s, i, r, t, status = _gillespie(s0, i0, r0, lam_n[k], mu[k], horizon, max_events, rng)
        if status != _OK:
            return k
        out[k] = (i + r) / n_pop
    return -1


def _event_cap(cfg: SirConfig) -> int:
    return 10 * max(cfg.population, 1)


def sir_run(cfg: SirConfig, stream) -> SirState:
    """One exact trajectory; returns the state at extinction or at the horizon."""
    rng = stream.generator() if isinstance(stream, SeedStream) else stream
    s, i, r, t, status = _gillespie(
        cfg.initial_susceptible, cfg.initial_infectious, cfg.initial_removed,
        cfg.lambda_over_n, cfg.mu, cfg.horizon, _event_cap(cfg), rng,
    )
    if status == _RUNAWAY:
        raise ModelError(f"runaway simulation: more than {_event_cap(cfg)} events")
    return SirState(int(s), int(i), int(r), float(t))


def sir_simulate(cfg: SirConfig, stream) -> float:
    """Final size ``(I_T + R_T) / N`` of one exact trajectory."""
    end = sir_run(cfg, stream)
    return (end.i + end.r) / cfg.population


# RK4 for the mean-field limit, in population fractions.

@njit(cache=True, nogil=True)
def _rk4_step(s, i, r, lam, mu, dt):
    k1s = -lam * s * i
    k1i = lam * s * i - mu * i
    k1r = mu * i
    s2, i2 = s + 0.5 * dt * k1s, i + 0.5 * dt * k1i
    k2s = -lam * s2 * i2
    k2i = lam * s2 * i2 - mu * i2
    k2r = mu * i2
    s3, i3 = s + 0.5 * dt * k2s, i + 0.5 * dt * k2i
    k3s = -lam * s3 * i3
    k3i = lam * s3 * i3 - mu * i3
    k3r = mu * i3
    s4, i4 = s + dt * k3s, i + dt * k3i
    k4s = -lam * s4 * i4
    k4i = lam * s4 * i4 - mu * i4
    k4r = mu * i4
    return (
        s + dt / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s),
        i + dt / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i),
        r + dt / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r),
    )


@njit(cache=True, nogil=True)
def _ode_final_size(s, i, r, lam, mu, dt, threshold, t_max):
    """Integrate to the time where ``i`` first drops below ``threshold``.

    The crossing inside the last step is located by secant iterations on
    the step fraction, so the result is smooth in ``dt``. Returns
    ``(i + r, t, ok)``.
    """
    t = 0.0
    if i < threshold:
        return i + r, t, True
    while t < t_max:
        sn, i_n, rn = _rk4_step(s, i, r, lam, mu, dt)
        if i_n < threshold:
            lo, hi = 0.0, 1.0
            f_lo, f_hi = i - threshold, i_n - threshold
            frac = 1.0
            ss, ii, rr = sn, i_n, rn
            for _ in range(60):
                frac = lo - f_lo * (hi - lo) / (f_hi - f_lo)
                ss, ii, rr = _rk4_step(s, i, r, lam, mu, frac * dt)
                f = ii - threshold
                if abs(f) < 1e-15 * threshold + 1e-300:
                    break
                if f > 0.0:
                    lo, f_lo = frac, f
                else:
                    hi, f_hi = frac, f
                if hi - lo < 1e-15:
                    break
            return ii + rr, t + frac * dt, True
        s, i, r = sn, i_n, rn
        t += dt
    return i + r, t, False


def _ode_args(cfg: SirConfig):
    n = float(cfg.population)
    return (
        cfg.initial_susceptible / n,
        cfg.initial_infectious / n,
        cfg.initial_removed / n,
        cfg.infection_rate,
        cfg.mu,
        1.0 / (10.0 * n),
    )


def sir_metamodel(cfg: SirConfig, tol: float = 1e-8) -> float:
    """Final size of the SIR ODE limit.

    The fixed RK4 step is halved until halving it once more changes the
    output by less than ``tol``. Extinction is declared when the infectious
    fraction falls below ``1 / (10 N)``.
    """
    s0, i0, r0, lam, mu, thr = _ode_args(cfg)
    if i0 < thr:
        return i0 + r0
    if mu <= 0.0:
        raise ModelError("no extinction: removal rate is zero")
    t_max = 100.0 / mu
    dt = min(1.0, 0.5 / (lam + mu))
    prev, _, ok = _ode_final_size(s0, i0, r0, lam, mu, dt, thr, t_max)
    for _ in range(30):
        if not ok:
            raise ModelError(f"no extinction before T_max = {t_max:.6g}")
        dt *= 0.5
        cur, _, ok = _ode_final_size(s0, i0, r0, lam, mu, dt, thr, t_max)
        if ok and abs(cur - prev) < tol:
            return float(cur)
        prev = cur
    raise ModelError("no extinction: step refinement did not converge")


def sir_trajectory(cfg: SirConfig, dt: float, t_end: float) -> np.ndarray:
    """RK4 trajectory ``(t, s, i, r)`` on a fixed grid, for diagnostics."""
    s, i, r, lam, mu, _ = _ode_args(cfg)
    steps = int(math.ceil(t_end / dt))
    out = np.empty((steps + 1, 4))
    out[0] = 0.0, s, i, r
    for k in range(1, steps + 1):
        s, i, r = _rk4_step(s, i, r, lam, mu, dt)
        out[k] = k * dt, s, i, r
    return out


SIR_SPECS = (
    InputSpec("lambda_over_n", 1.0 / 15000.0, 3.0 / 15000.0),
    InputSpec("mu", 1.0 / 15.0, 3.0 / 15.0),
)


@dataclass(frozen=True)
class SirModel:
    """Final-size map ``(lambda/N, mu) -> Y`` of the stochastic SIR chain."""

    base: SirConfig = SirConfig()
    specs: tuple[InputSpec, ...] = field(default=SIR_SPECS)

    model_id = "sir"
    stochastic = True

    def __call__(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        if rng is None:
            raise ModelError("the stochastic SIR model needs a random generator")
        x = np.asarray(x, dtype=np.float64)
        lam = np.ascontiguousarray(x[:, 0])
        mu = np.ascontiguousarray(x[:, 1])
        out = np.empty(x.shape[0])
        b = self.base
        bad = _gillespie_batch(
            lam, mu, float(b.population), b.initial_susceptible, b.initial_infectious,
            b.initial_removed, b.horizon, _event_cap(b), rng, out,
        )
        if bad >= 0:
            raise ModelError(f"runaway simulation at row {bad}")
        return out

    def config_at(self, row) -> SirConfig:
        return SirConfig(
            self.base.population, self.base.initial_susceptible,
            self.base.initial_infectious, float(row[0]), float(row[1]), self.base.horizon,
        )


@dataclass(frozen=True)
class SirOdeModel:
    """The ODE metamodel over the same inputs as :class:`SirModel`."""

    base: SirConfig = SirConfig()
    specs: tuple[InputSpec, ...] = field(default=SIR_SPECS)

    model_id = "sir-ode"
    stochastic = False

    def __call__(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        b = self.base
        return np.array([
            sir_metamodel(SirConfig(b.population, b.initial_susceptible,
                                    b.initial_infectious, lam, mu, b.horizon))
            for lam, mu in x
        ])
