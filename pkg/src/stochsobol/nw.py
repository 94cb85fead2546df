"""Nadaraya-Watson plug-in estimate of ``E[E(Y | X_l)^2]``.

``m(x) = sum_j Y_j K_h(X_j - x) / sum_j K_h(X_j - x)`` is evaluated at every
sample point (leave-in) and ``v_hat = mean(m(X_i)^2)``.

The sum runs over a sorted window around ``x``. For the Epanechnikov kernel
the window is the kernel support, so nothing is dropped. For the Gaussian
kernel it is cut at ``GAUSS_CUTOFF`` bandwidths, where the weight
``exp(-38.5)`` is below double-precision resolution relative to the peak.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

from .core import ConfigError, Estimator, InputSpec, SampleSet, combine, empirical_moments
from .sampling import warp

GAUSS_CUTOFF = 8.775


class Kernel(str, Enum):
    GAUSSIAN = "gaussian"
    EPANECHNIKOV = "epanechnikov"


class BandwidthScale(str, Enum):
    RAW = "raw"
    WARPED = "warped"


@dataclass(frozen=True)
class KernelConfig:
    """Kernel, bandwidth and the scale the bandwidth is measured on.

    ``bandwidth_scale="warped"`` applies the kernel to ``G(X)`` on ``[0, 1]``
    so one bandwidth is meaningful across inputs with very different ranges.
    """

    kernel: Kernel = Kernel.EPANECHNIKOV
    bandwidth: float = 0.1
    bandwidth_scale: BandwidthScale = BandwidthScale.RAW

    def __post_init__(self) -> None:
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        object.__setattr__(self, "bandwidth_scale", BandwidthScale(self.bandwidth_scale))
        if not self.bandwidth > 0:
            raise ConfigError("bandwidth must be positive")

    @property
    def kernel_code(self) -> int:
        return 0 if self.kernel is Kernel.GAUSSIAN else 1

    @property
    def reach(self) -> float:
        """Half-width of the summation window, in the bandwidth's units."""
        return self.bandwidth * (GAUSS_CUTOFF if self.kernel is Kernel.GAUSSIAN else 1.0)


@njit(cache=True, nogil=True, inline="always")
def _kernel(code, z):
    # Normalizing constants cancel in the ratio.
    if code == 0:
        return np.exp(-0.5 * z * z)
    if abs(z) >= 1.0:
        return 0.0
    return 1.0 - z * z


@njit(cache=True, nogil=True)
def _nw_sorted(xs, ys, x0, h, reach, code, fallback, out):
    """Kernel-weighted means at ``x0`` (any order) over sorted ``xs``."""
    n = xs.shape[0]
    for q in range(x0.shape[0]):
        x = x0[q]
        lo = np.searchsorted(xs, x - reach, side="left")
        hi = np.searchsorted(xs, x + reach, side="right")
        num = 0.0
        den = 0.0
        for j in range(lo, hi):
            w = _kernel(code, (xs[j] - x) / h)
            num += w * ys[j]
            den += w
        if den > 0.0:
            out[q] = num / den
        else:
            out[q] = fallback
    return out


def _scaled(values, spec: InputSpec | None, cfg: KernelConfig):
    values = np.asarray(values, dtype=np.float64)
    if cfg.bandwidth_scale is BandwidthScale.WARPED:
        if spec is None:
            raise ConfigError("warped bandwidth needs the input's InputSpec")
        return np.asarray(warp(spec, values), dtype=np.float64)
    return values


def nw_curve(xs, ys, x0, cfg: KernelConfig = KernelConfig(), spec: InputSpec | None = None):
    """Nadaraya-Watson regression of ``ys`` on ``xs`` evaluated at ``x0``.

    Points with no kernel mass (compact kernels only) get the global mean.
    """
    xs = _scaled(xs, spec, cfg).reshape(-1)
    ys = np.asarray(ys, dtype=np.float64).reshape(-1)
    if xs.shape != ys.shape or xs.size == 0:
        raise ValueError("xs and ys must be nonempty and of equal length")
    scalar = np.ndim(x0) == 0
    q = np.atleast_1d(_scaled(x0, spec, cfg)).astype(np.float64)
    order = np.argsort(xs, kind="stable")
    out = np.empty(q.shape[0])
    _nw_sorted(
        np.ascontiguousarray(xs[order]), np.ascontiguousarray(ys[order]), q,
        cfg.bandwidth, cfg.reach, cfg.kernel_code, float(np.mean(ys)), out,
    )
    return float(out[0]) if scalar else out


def nw_regress(xs, ys, x0: float, cfg: KernelConfig = KernelConfig(),
               spec: InputSpec | None = None) -> float:
    return float(nw_curve(xs, ys, float(x0), cfg, spec))


def nw_v_hat(sample: SampleSet, ell: int, cfg: KernelConfig = KernelConfig(),
             spec: InputSpec | None = None) -> float:
    """``(1/n) sum_i m(X_i)^2`` with ``m`` fitted on the full sample."""
    x = sample.column(ell)
    m = nw_curve(x, sample.outputs, x, cfg, spec)
    return float(np.mean(m * m))


def nw_first_order(sample: SampleSet, ell: int, cfg: KernelConfig = KernelConfig(),
                   spec: InputSpec | None = None, name: str = ""):
    mean, var = empirical_moments(sample.outputs)
    v = nw_v_hat(sample, ell, cfg, spec)
    return combine(v, mean, var, name or (spec.name if spec else str(ell)),
                   Estimator.NADARAYA_WATSON, bandwidth=cfg.bandwidth)
