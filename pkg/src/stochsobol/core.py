"""Shared domain types and the plug-in combiner for first-order Sobol indices.

Every estimator in the package produces an estimate ``v_hat`` of
``E[E(Y | X_l)^2]``. The index itself is recovered by

    S_l = (v_hat - mean^2) / variance

where ``mean`` and ``variance`` are the empirical moments of the output
sample. The variance uses the biased ``1/n`` normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class SobolError(Exception):
    """Base class for errors raised by this package."""


class InsufficientSampleError(SobolError, ValueError):
    pass


class ZeroVarianceError(SobolError, ValueError):
    """Raised when the output sample is constant, so no index is defined."""


class ConfigError(SobolError, ValueError):
    pass


class ModelError(SobolError, RuntimeError):
    pass


class Estimator(str, Enum):
    JANSEN = "jansen"
    NADARAYA_WATSON = "nadaraya_watson"
    WARPED_WAVELET = "warped_wavelet"


# Estimates outside this band are flagged, never clamped.
OUT_OF_RANGE_LOW = -0.05
OUT_OF_RANGE_HIGH = 1.05


@dataclass(frozen=True)
class InputSpec:
    """A named input with a uniform law on ``[lower, upper]``."""

    name: str
    lower: float
    upper: float

    def __post_init__(self) -> None:
        lo, hi = float(self.lower), float(self.upper)
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
            raise ConfigError(
                f"input {self.name!r}: need finite lower < upper, got [{lo}, {hi}]"
            )
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class SampleSet:
    """``n`` joint draws of the declared inputs and the model output."""

    inputs: np.ndarray
    outputs: np.ndarray
    seed: int = 0
    model_id: str = ""

    def __post_init__(self) -> None:
        x = np.array(self.inputs, dtype=np.float64)
        y = np.array(self.outputs, dtype=np.float64).reshape(-1)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValueError(
                f"inputs {x.shape} and outputs {y.shape} disagree on the sample size"
            )
        if y.shape[0] < 2:
            raise InsufficientSampleError("insufficient sample: need n >= 2")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)

    @property
    def n(self) -> int:
        return self.outputs.shape[0]

    @property
    def p(self) -> int:
        return self.inputs.shape[1]

    def column(self, ell: int) -> np.ndarray:
        if not 0 <= ell < self.p:
            raise IndexError(f"input index {ell} out of range for p={self.p}")
        return self.inputs[:, ell]


@dataclass(frozen=True)
class SobolEstimate:
    index_value: float
    input_name: str
    estimator: Estimator
    v_hat: float
    y_bar: float
    sigma2_hat: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def out_of_range(self) -> bool:
        return not OUT_OF_RANGE_LOW <= self.index_value <= OUT_OF_RANGE_HIGH


def empirical_moments(outputs) -> tuple[float, float]:
    """Empirical mean and variance of an output sample.

    The variance is normalized by ``1/n`` (not ``1/(n-1)``).

    Raises:
        InsufficientSampleError: fewer than two values.
    """
    y = np.asarray(outputs, dtype=np.float64).reshape(-1)
    if y.size < 2:
        raise InsufficientSampleError("insufficient sample: need at least 2 outputs")
    mean = float(np.mean(y))
    variance = float(np.mean((y - mean) ** 2))
    return mean, variance


def combine(
    v_hat: float,
    mean: float,
    variance: float,
    input_name: str = "",
    estimator: Estimator | str = Estimator.JANSEN,
    **diagnostics,
) -> SobolEstimate:
    """Turn an estimate of ``E[E(Y|X_l)^2]`` into a first-order index.

    The result is deliberately left unclamped; see ``SobolEstimate.out_of_range``.
    """
    if not variance > 0.0:
        raise ZeroVarianceError(
            "zero output variance: the model output is constant on this sample"
        )
    index_value = (v_hat - mean * mean) / variance
    return SobolEstimate(
        index_value=float(index_value),
        input_name=input_name,
        estimator=Estimator(estimator),
        v_hat=float(v_hat),
        y_bar=float(mean),
        sigma2_hat=float(variance),
        diagnostics=dict(diagnostics),
    )
