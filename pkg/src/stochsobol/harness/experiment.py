"""Replication studies, calibration sweeps and one-at-a-time screens.

Every replication ``r`` owns ``SeedStream(master_seed, r)`` and its
substreams, so results do not depend on scheduling. Replications may run on
a thread pool (the numeric kernels release the GIL); aggregation always
walks them in index order.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from ..core import ConfigError, InputSpec, SampleSet, SobolEstimate, empirical_moments
from ..jansen import jansen_all
from ..models import IshigamiConfig, IshigamiModel, SirModel, SirOdeModel
from ..nw import BandwidthScale, Kernel, KernelConfig, nw_curve, nw_first_order
from ..oracle import GridModel, sobol_indices
from ..sampling import SeedStream, draw_iid, jansen_design
from ..wavelet.estimator import (
    PenaltyConfig,
    coefficients,
    default_basis,
    theta_hat,
    wavelet_first_order,
)

ESTIMATORS = ("jansen", "nw", "wavelet")
MODEL_IDS = ("ishigami", "ishigami-nuisance", "ishigami-mod", "sir", "sir-ode")

# Nested Monte Carlo over a 128 x 128 cell-centre grid, 400 runs per cell,
# averaged over two independent seeds (they agree to 2e-4).
SIR_REFERENCE = (0.3821, 0.4671)

# K' / mean(Y^2) selected by calibration on Ishigami; used when a sweep shows
# no drop in kept levels at all.
FALLBACK_K_PRIME_RELATIVE = 1.0

# Stream ids at or above this value never collide with replication indices.
CALIBRATION_STREAM = 2**32

# Substream keys inside one replication.
_INPUTS, _NOISE, _DESIGN, _DESIGN_NOISE = 0, 1, 2, 3

REPORT_HEADER = ("model", "estimator", "input", "n", "replications", "reference",
                 "bias", "mse", "sd", "seed")


def default_k_grid() -> tuple[float, ...]:
    """Relative K' grid, multiplied by the sample mean of ``Y^2`` at calibration."""
    return tuple(float(k) for k in np.logspace(-1.0, 1.0, 41))


# ------------------------------------------------------------------ models


def build_model(model_id: str):
    if model_id == "ishigami":
        return IshigamiModel()
    if model_id == "ishigami-nuisance":
        return IshigamiModel(IshigamiConfig(1.0, nuisance_mode=True))
    if model_id == "ishigami-mod":
        return IshigamiModel(IshigamiConfig(11.0, nuisance_mode=True))
    if model_id == "sir":
        return SirModel()
    if model_id == "sir-ode":
        return SirOdeModel()
    raise ConfigError(f"unknown model {model_id!r}; expected one of {', '.join(MODEL_IDS)}")


@functools.lru_cache(maxsize=None)
def _sir_ode_reference(m: int = 128) -> tuple[float, ...]:
    model = SirOdeModel()
    gm = GridModel.from_function(lambda x: model(x), model.specs, m)
    return tuple(float(s) for s in sobol_indices(gm)["first"])


def reference_indices(model_id: str) -> tuple[float, ...]:
    """Reference first-order indices, analytic or from an oracle."""
    model = build_model(model_id)
    if isinstance(model, IshigamiModel):
        return tuple(model.reference_indices())
    if model_id == "sir":
        return SIR_REFERENCE
    return _sir_ode_reference()


def _default_scale(model_id: str) -> str:
    # Final size varies sharply near the epidemic threshold; a fixed share of
    # the design per window keeps the smoother stable across that region.
    return "warped" if model_id.startswith("sir") else "raw"


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class ExperimentConfig:
    """One replication study.

    Attributes:
        model_id: One of :data:`MODEL_IDS`.
        estimators: Subset of :data:`ESTIMATORS`.
        n: Base size of the pick-freeze design.
        replications: Number of independent replications.
        master_seed: Root of every random stream.
        nonparam_n: Sample size for the regression estimators. Defaults to
            ``n (p + 1)``, the pick-freeze call budget.
        bandwidth: Kernel bandwidth.
        kernel: ``"epanechnikov"`` or ``"gaussian"``.
        bandwidth_scale: ``"raw"`` or ``"warped"``; model default when None.
        k_prime: Absolute per-level penalty constant. When None it is picked
            by the slope heuristic on a dedicated calibration stream.
        k_grid: Relative K' grid for calibration (scaled by mean ``Y^2``).
        j_cap: Deepest wavelet level; None uses ``J_n``.
        calibration_depth: Deepest level of the calibration spectrum; None
            uses ``floor(log2 n) - 4``.
        threads: Worker threads for replications.
        output_path: Where the CLI writes the report.
    """

    model_id: str = "ishigami"
    estimators: tuple[str, ...] = ESTIMATORS
    n: int = 10_000
    replications: int = 100
    master_seed: int = 0
    nonparam_n: int | None = None
    bandwidth: float = 0.1
    kernel: str = "epanechnikov"
    bandwidth_scale: str | None = None
    k_prime: float | None = None
    k_grid: tuple[float, ...] = field(default_factory=default_k_grid)
    j_cap: int | None = 6
    calibration_depth: int | None = None
    threads: int = 1
    output_path: str | None = None

    def __post_init__(self) -> None:
        if self.model_id not in MODEL_IDS:
            raise ConfigError(f"unknown model {self.model_id!r}")
        est = tuple(self.estimators)
        object.__setattr__(self, "estimators", est)
        object.__setattr__(self, "k_grid", tuple(float(k) for k in self.k_grid))
        if not est:
            raise ConfigError("no estimator requested")
        bad = [e for e in est if e not in ESTIMATORS]
        if bad or len(set(est)) != len(est):
            raise ConfigError(f"bad estimator set {est}; choose from {ESTIMATORS}")
        if self.n < 100:
            raise ConfigError("n must be at least 100")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be unsigned")
        if self.nonparam_n is not None and self.nonparam_n < 100:
            raise ConfigError("nonparam_n must be at least 100")
        if not self.bandwidth > 0:
            raise ConfigError("bandwidth must be positive")
        if self.kernel not in {k.value for k in Kernel}:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.bandwidth_scale is not None and self.bandwidth_scale not in {
                s.value for s in BandwidthScale}:
            raise ConfigError(f"unknown bandwidth scale {self.bandwidth_scale!r}")
        if self.k_prime is not None and not self.k_prime > 0:
            raise ConfigError("k_prime must be positive")
        if self.k_prime is None:
            g = self.k_grid
            if not g or any(k <= 0 for k in g) or any(b <= a for a, b in zip(g, g[1:])):
                raise ConfigError("k_grid must be positive and strictly increasing")
        if self.j_cap is not None and self.j_cap < -1:
            raise ConfigError("j_cap must be >= -1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kw = dict(data)
        for key in ("estimators", "k_grid"):
            if key in kw and kw[key] is not None:
                kw[key] = tuple(kw[key])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    @property
    def p(self) -> int:
        return len(build_model(self.model_id).specs)

    @property
    def sample_size(self) -> int:
        """Size of the sample fed to the regression estimators."""
        return self.nonparam_n if self.nonparam_n is not None else self.n * (self.p + 1)

    @property
    def kernel_config(self) -> KernelConfig:
        scale = self.bandwidth_scale or _default_scale(self.model_id)
        return KernelConfig(Kernel(self.kernel), self.bandwidth, BandwidthScale(scale))


# -------------------------------------------------------------- accounting


class _CallCounter:
    """Counts rows passed to a model."""

    def __init__(self, model):
        self.model = model
        self.calls = 0
        self.specs = model.specs
        self.model_id = model.model_id

    def __call__(self, x, rng=None):
        x = np.asarray(x)
        self.calls += x.shape[0]
        return self.model(x, rng)


def _evaluate(model, x: np.ndarray, stream: SeedStream) -> np.ndarray:
    return np.asarray(model(x, stream.generator()), dtype=np.float64).reshape(-1)


def draw_sample(model, n: int, stream: SeedStream) -> SampleSet:
    """i.i.d. inputs from ``stream/0`` and outputs with noise from ``stream/1``."""
    x = draw_iid(model.specs, n, stream.substream(_INPUTS))
    y = _evaluate(model, x, stream.substream(_NOISE))
    return SampleSet(x, y, stream.stream_id, model.model_id)


# ------------------------------------------------------------- calibration


@dataclass(frozen=True)
class Calibration:
    """Outcome of a slope-heuristic sweep.

    Attributes:
        k_selected: Absolute K' right after the largest drop, or the
            relative fallback times ``scale`` when nothing drops.
        k_grid: Absolute K' values swept.
        kept: ``kept[i][g]`` is the kept-level count for input ``i`` at grid point ``g``.
        scale: Mean of ``Y^2`` used to scale the relative grid.
        depth: Deepest level of the calibration spectra.
    """

    k_selected: float
    k_grid: tuple[float, ...]
    kept: tuple[tuple[int, ...], ...]
    scale: float
    depth: int
    input_names: tuple[str, ...]

    @property
    def pooled(self) -> tuple[int, ...]:
        return tuple(int(sum(col)) for col in zip(*self.kept))


def select_by_largest_drop(grid: Sequence[float], counts: Sequence[int]) -> float:
    """Grid value right after the largest decrease of ``counts``; ties to the smallest."""
    if len(grid) != len(counts) or not grid:
        raise ConfigError("grid and counts must be non-empty and aligned")
    if len(grid) == 1:
        return float(grid[0])
    drops = [counts[i - 1] - counts[i] for i in range(1, len(counts))]
    best = max(range(len(drops)), key=lambda i: (drops[i], -i))
    return float(grid[best + 1])


def calibrate(cfg: ExperimentConfig) -> Calibration:
    """Sweep K' over deep spectra of one calibration sample.

    The sample comes from ``SeedStream(master_seed, CALIBRATION_STREAM)`` and
    never overlaps a replication stream. Kept-level counts are pooled over
    inputs before locating the largest drop.
    """
    model = build_model(cfg.model_id)
    n = cfg.sample_size
    sample = draw_sample(model, n, SeedStream(cfg.master_seed, CALIBRATION_STREAM))
    scale = float(np.mean(sample.outputs * sample.outputs))
    if not scale > 0:
        raise ConfigError("calibration sample has zero second moment")
    depth = cfg.calibration_depth
    if depth is None:
        depth = int(math.floor(math.log2(n))) - 4
    grid = tuple(scale * k for k in cfg.k_grid)
    basis = default_basis()
    kept = []
    for ell, spec in enumerate(model.specs):
        spectrum = coefficients(sample, ell, spec, basis, depth)
        kept.append(tuple(len(theta_hat(spectrum, PenaltyConfig(k), n)[1]) for k in grid))
    pooled = [int(sum(col)) for col in zip(*kept)]
    if all(b >= a for a, b in zip(pooled, pooled[1:])):
        selected = FALLBACK_K_PRIME_RELATIVE * scale
    else:
        selected = select_by_largest_drop(grid, pooled)
    return Calibration(selected, grid, tuple(kept), scale, depth,
                       tuple(s.name for s in model.specs))


def emit_calibration(cal: Calibration, path: str | Path) -> None:
    rows = [("input", "k_prime", "kept_levels")]
    for name, counts in zip(cal.input_names + ("pooled",), cal.kept + (cal.pooled,)):
        rows.extend((name, repr(k), str(c)) for k, c in zip(cal.k_grid, counts))
    _write_rows(path, rows)


# ------------------------------------------------------------ replications


@dataclass(frozen=True)
class RunResult:
    """Estimates of one replication keyed by ``(estimator, input_index)``."""

    replication: int
    estimates: dict[tuple[str, int], SobolEstimate]
    calls: dict[str, int]
    curves: tuple[tuple[str, float, float], ...] = ()


@dataclass(frozen=True)
class _Plan:
    cfg: ExperimentConfig
    model: Any
    kernel: KernelConfig
    penalty: PenaltyConfig
    curve_grid: np.ndarray | None


def _make_plan(cfg: ExperimentConfig, curve_points: int = 0) -> tuple[_Plan, Calibration | None]:
    model = build_model(cfg.model_id)
    cal = None
    k_prime = cfg.k_prime
    if "wavelet" in cfg.estimators and k_prime is None:
        cal = calibrate(cfg)
        k_prime = cal.k_selected
    pen = PenaltyConfig(k_prime if k_prime is not None else 1.0, cfg.j_cap)
    grid = np.linspace(0.0, 1.0, curve_points) if curve_points > 0 else None
    default_basis()  # build the shared table before workers start
    return _Plan(cfg, model, cfg.kernel_config, pen, grid), cal


def _run_one(plan: _Plan, r: int) -> RunResult:
    cfg, model = plan.cfg, plan.model
    specs = model.specs
    stream = SeedStream(cfg.master_seed, r)
    estimates: dict[tuple[str, int], SobolEstimate] = {}
    calls: dict[str, int] = {}
    curves: list[tuple[str, float, float]] = []

    if "nw" in cfg.estimators or "wavelet" in cfg.estimators:
        counter = _CallCounter(model)
        sample = draw_sample(counter, cfg.sample_size, stream)
        for ell, spec in enumerate(specs):
            if "nw" in cfg.estimators:
                estimates["nw", ell] = nw_first_order(sample, ell, plan.kernel, spec)
            if "wavelet" in cfg.estimators:
                estimates["wavelet", ell] = wavelet_first_order(sample, ell, spec, pen=plan.penalty)
            if plan.curve_grid is not None:
                xs = spec.lower + plan.curve_grid * spec.width
                m = nw_curve(sample.column(ell), sample.outputs, xs, plan.kernel, spec)
                curves.extend((spec.name, float(x), float(v)) for x, v in zip(xs, m))
        for e in ("nw", "wavelet"):
            if e in cfg.estimators:
                calls[e] = counter.calls

    if "jansen" in cfg.estimators:
        counter = _CallCounter(model)
        pair = jansen_design(specs, cfg.n, stream.substream(_DESIGN))
        rng = stream.substream(_DESIGN_NOISE).generator()
        for ell, est in enumerate(jansen_all(counter, specs, pair, rng)):
            estimates["jansen", ell] = est
        calls["jansen"] = counter.calls

    return RunResult(r, estimates, calls, tuple(curves))


def run_single(cfg: ExperimentConfig, replication: int = 0) -> tuple[RunResult, Calibration | None]:
    """One replication with full estimate objects."""
    plan, cal = _make_plan(cfg)
    return _run_one(plan, replication), cal


def _map_replications(plan: _Plan, indices: Sequence[int], threads: int) -> list[RunResult]:
    if threads == 1:
        return [_run_one(plan, r) for r in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: _run_one(plan, r), indices))


@dataclass(frozen=True)
class SummaryRow:
    estimator: str
    input_name: str
    n: int
    reference: float
    bias: float
    mse: float
    sd: float
    calls: int
    estimates: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class ReplicationReport:
    model_id: str
    replications: int
    seed: int
    rows: tuple[SummaryRow, ...]
    k_prime: float | None = None
    calibration: Calibration | None = None
    curves: tuple[tuple[int, str, float, float], ...] = ()

    def row(self, estimator: str, input_name: str) -> SummaryRow:
        for row in self.rows:
            if row.estimator == estimator and row.input_name == input_name:
                return row
        raise KeyError((estimator, input_name))


def summarize(values: np.ndarray, reference: float) -> tuple[float, float, float]:
    """``(bias, mse, sd)`` with ``sd^2 = mse - bias^2`` (population moments)."""
    err = np.asarray(values, dtype=np.float64) - reference
    bias = float(np.mean(err))
    mse = float(np.mean(err * err))
    sd = float(np.std(err))
    return bias, mse, sd


def aggregate(cfg: ExperimentConfig, results: Sequence[RunResult],
              reference: Sequence[float], calibration: Calibration | None = None,
              k_prime: float | None = None) -> ReplicationReport:
    """Ordered reduction of replication results."""
    results = sorted(results, key=lambda res: res.replication)
    specs = build_model(cfg.model_id).specs
    rows = []
    for est in ESTIMATORS:
        if est not in cfg.estimators:
            continue
        n = cfg.n if est == "jansen" else cfg.sample_size
        calls = {res.calls[est] for res in results}
        if len(calls) != 1:
            raise RuntimeError(f"inconsistent call counts for {est}: {sorted(calls)}")
        n_calls = calls.pop()
        for ell, spec in enumerate(specs):
            vals = np.array([res.estimates[est, ell].index_value for res in results])
            bias, mse, sd = summarize(vals, reference[ell])
            rows.append(SummaryRow(est, spec.name, n, float(reference[ell]), bias, mse, sd,
                                   n_calls, vals))
    curves = tuple((res.replication, *c) for res in results for c in res.curves)
    return ReplicationReport(cfg.model_id, len(results), cfg.master_seed, tuple(rows),
                             k_prime, calibration, curves)


def run_replications(cfg: ExperimentConfig, threads: int | None = None,
                     curve_points: int = 0, start: int = 0) -> ReplicationReport:
    """Bias, MSE and sd of every requested estimator over ``cfg.replications`` runs.

    Args:
        cfg: The study.
        threads: Overrides ``cfg.threads``; never changes the result.
        curve_points: If positive, also record kernel-smoothed conditional
            means on that many evenly spaced points per input.
        start: First replication index; disjoint ranges give independent studies.
    """
    reference = reference_indices(cfg.model_id)
    plan, cal = _make_plan(cfg, curve_points)
    indices = range(start, start + cfg.replications)
    results = _map_replications(plan, indices, threads or cfg.threads)
    return aggregate(cfg, results, reference, cal, plan.penalty.k_prime
                     if "wavelet" in cfg.estimators else None)


# ------------------------------------------------------------------ output


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_rows(path: str | Path, rows: Iterable[Sequence[str]]) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def report_rows(report: ReplicationReport) -> list[tuple[str, ...]]:
    rows = [REPORT_HEADER]
    for row in report.rows:
        rows.append((report.model_id, row.estimator, row.input_name, str(row.n),
                     str(report.replications), _fmt(row.reference), _fmt(row.bias),
                     _fmt(row.mse), _fmt(row.sd), str(report.seed)))
    return rows


def emit_report(report: ReplicationReport, path: str | Path) -> None:
    """Write one CSV row per (estimator, input)."""
    _write_rows(path, report_rows(report))


def emit_estimates(reports: Sequence[ReplicationReport], path: str | Path) -> None:
    """Per-replication index estimates, long format."""
    rows = [("model", "estimator", "input", "replication", "estimate")]
    for rep in reports:
        for row in rep.rows:
            rows.extend((rep.model_id, row.estimator, row.input_name, str(r), _fmt(v))
                        for r, v in enumerate(row.estimates))
    _write_rows(path, rows)


def emit_curves(reports: Sequence[ReplicationReport], path: str | Path) -> None:
    rows = [("model", "replication", "input", "x", "conditional_mean")]
    for rep in reports:
        rows.extend((rep.model_id, str(r), name, _fmt(x), _fmt(v))
                    for r, name, x, v in rep.curves)
    _write_rows(path, rows)


# ------------------------------------------------------------ SIR compare


@dataclass(frozen=True)
class SirComparison:
    stochastic: ReplicationReport
    metamodel: ReplicationReport


def sir_compare(cfg: ExperimentConfig, curve_points: int = 41,
                threads: int | None = None) -> SirComparison:
    """The same study on the stochastic simulator and on its ODE metamodel."""
    stoch = run_replications(dataclasses.replace(cfg, model_id="sir"), threads, curve_points)
    meta = run_replications(dataclasses.replace(cfg, model_id="sir-ode"), threads, curve_points)
    return SirComparison(stoch, meta)


# ----------------------------------------------------------------- tornado


@dataclass(frozen=True)
class TornadoBar:
    input_name: str
    y_low: float
    y_high: float

    @property
    def width(self) -> float:
        return abs(self.y_high - self.y_low)


def tornado(model, specs: Sequence[InputSpec], nominal: Sequence[float],
            output_reducer: Callable[[np.ndarray], float] = np.mean,
            replications: int = 1, stream: SeedStream | None = None) -> list[TornadoBar]:
    """One-at-a-time screen: each input at its bounds, the others at ``nominal``.

    Stochastic models are run ``replications`` times per endpoint and the
    outputs reduced with ``output_reducer``. Bars come back widest first;
    equal widths keep input order.
    """
    nominal = np.asarray(nominal, dtype=np.float64)
    if nominal.shape != (len(specs),):
        raise ConfigError(f"nominal has {nominal.size} values for {len(specs)} inputs")
    for v, s in zip(nominal, specs):
        if not s.lower <= v <= s.upper:
            raise ConfigError(f"nominal {s.name}={v} outside [{s.lower}, {s.upper}]")
    if replications < 1:
        raise ConfigError("replications must be at least 1")
    stream = stream or SeedStream(0)
    bars = []
    for ell, spec in enumerate(specs):
        ends = []
        for side, bound in enumerate((spec.lower, spec.upper)):
            x = np.tile(nominal, (replications, 1))
            x[:, ell] = bound
            y = np.asarray(model(x, stream.substream(2 * ell + side).generator()), dtype=np.float64)
            ends.append(float(output_reducer(y)))
        bars.append(TornadoBar(spec.name, ends[0], ends[1]))
    return sorted(bars, key=lambda b: -b.width)


def emit_tornado(bars: Sequence[TornadoBar], path: str | Path) -> None:
    rows = [("input", "y_low", "y_high", "width")]
    rows.extend((b.input_name, _fmt(b.y_low), _fmt(b.y_high), _fmt(b.width)) for b in bars)
    _write_rows(path, rows)


def estimate_rows(cfg: ExperimentConfig, run: RunResult) -> list[tuple[str, ...]]:
    specs = build_model(cfg.model_id).specs
    rows = [("model", "estimator", "input", "n", "index", "v_hat", "mean", "variance",
             "out_of_range", "seed")]
    for (est, ell), s in sorted(run.estimates.items(), key=lambda kv: (
            ESTIMATORS.index(kv[0][0]), kv[0][1])):
        n = cfg.n if est == "jansen" else cfg.sample_size
        rows.append((cfg.model_id, est, specs[ell].name, str(n), _fmt(s.index_value),
                     _fmt(s.v_hat), _fmt(s.y_bar), _fmt(s.sigma2_hat),
                     str(s.out_of_range).lower(), str(cfg.master_seed)))
    return rows


__all__ = [
    "CALIBRATION_STREAM", "Calibration", "ESTIMATORS", "ExperimentConfig",
    "FALLBACK_K_PRIME_RELATIVE", "MODEL_IDS", "REPORT_HEADER", "ReplicationReport", "RunResult",
    "SIR_REFERENCE", "SirComparison", "SummaryRow", "TornadoBar", "aggregate", "build_model",
    "calibrate", "draw_sample", "emit_calibration", "emit_curves", "emit_estimates",
    "emit_report", "emit_tornado", "estimate_rows", "reference_indices", "report_rows",
    "run_replications", "run_single", "select_by_largest_drop", "sir_compare", "summarize",
    "tornado",
]
