"""Warped-wavelet block-thresholding estimate of ``E[E(Y | X_l)^2]``.

Coefficients ``beta_jk = mean(Y_i psi_jk(G(X_i)))`` are grouped by level.
A level is kept when its energy ``sum_k beta_jk^2`` reaches the penalty

    w(j) = K' (2^j + log 2) / n

and contributes ``energy - w(j)``. Because the penalty is additive over
levels, keeping exactly the levels with a nonnegative contribution
maximizes ``sum_{j in J} (energy_j - w(j))`` over all subsets ``J``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from ..core import (
    ConfigError, Estimator, InputSpec, InsufficientSampleError, SampleSet,
    combine, empirical_moments,
)
from ..sampling import warp
from .basis import WaveletBasis, build_basis, eval_psi, k_range

# J_n uses the natural logarithm.
LOG = math.log


def max_level(n: int) -> int:
    """``J_n = floor(log2(sqrt(n) / ln n))``."""
    if n < 2:
        raise InsufficientSampleError("sample too small: need n >= 2")
    j = math.floor(math.log2(math.sqrt(n) / LOG(n)))
    if j < -1:
        raise InsufficientSampleError(f"sample too small: J_n = {j} < -1")
    return j


@dataclass(frozen=True)
class Level:
    j: int
    ks: np.ndarray
    betas: np.ndarray
    energy: float

    def coefficients(self) -> dict[int, float]:
        return {int(k): float(b) for k, b in zip(self.ks, self.betas)}


@dataclass(frozen=True)
class BlockSpectrum:
    levels: tuple[Level, ...]
    j_max_allowed: int
    n: int

    @property
    def energies(self) -> np.ndarray:
        return np.array([lv.energy for lv in self.levels])

    @property
    def js(self) -> list[int]:
        return [lv.j for lv in self.levels]

    @classmethod
    def from_energies(cls, energies: Sequence[float], n: int) -> "BlockSpectrum":
        """Spectrum holding one synthetic coefficient per level (for testing penalties)."""
        levels = tuple(
            Level(j - 1, np.array([0]), np.array([math.sqrt(e)]), float(e))
            for j, e in enumerate(energies)
        )
        return cls(levels, len(energies) - 2, n)


@dataclass(frozen=True)
class PenaltyConfig:
    k_prime: float = 1.0
    j_cap: int | None = None

    def __post_init__(self) -> None:
        if not self.k_prime > 0:
            raise ConfigError("k_prime must be positive")
        if self.j_cap is not None and self.j_cap < -1:
            raise ConfigError("j_cap must be >= -1")


def penalty(j: int, n: int, k_prime: float) -> float:
    return k_prime * (2.0**j + math.log(2.0)) / n


@njit(cache=True, nogil=True)
def _accumulate(u, y, table_f, table_m, scale, length, j_top, offsets, out):
    """Add ``y_i psi_jk(u_i)`` into ``out`` for every level and nonzero translate."""
    last = table_f.shape[0] - 1
    for i in range(u.shape[0]):
        ui = u[i]
        yi = y[i]
        for lev in range(j_top + 2):
            j = lev - 1
            if j < 0:
                t = ui
                tab = table_f
                amp = 1.0
                kmin = 1 - length
            else:
                t = ui * (2.0**j)
                tab = table_m
                amp = 2.0 ** (0.5 * j)
                kmin = 1 - length
            kt = int(math.floor(t))
            for k in range(kt - length + 1, kt + 1):
                p = (t - k) * scale
                if p <= 0.0 or p >= last:
                    continue
                q = int(p)
                f = p - q
                val = tab[q] * (1.0 - f) + tab[q + 1] * f
                out[offsets[lev] + k - kmin] += yi * amp * val


def coefficients(
    sample: SampleSet,
    ell: int,
    spec: InputSpec,
    basis: WaveletBasis | None = None,
    j_cap: int | None = None,
) -> BlockSpectrum:
    basis = basis or default_basis()
    n = sample.n
    j_top = max_level(n) if j_cap is None else int(j_cap)
    if j_top < -1:
        raise InsufficientSampleError("sample too small")
    u = np.ascontiguousarray(warp(spec, sample.column(ell)), dtype=np.float64)
    y = np.ascontiguousarray(sample.outputs)
    ranges = [k_range(basis, j) for j in range(-1, j_top + 1)]
    sizes = [len(r) for r in ranges]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    acc = np.zeros(offsets[-1])
    _accumulate(
        u, y, basis.father_table, basis.mother_table, float(2**basis.grid_depth),
        basis.support_length, j_top, offsets, acc,
    )
    acc /= n
    levels = []
    for lev, (j, r) in enumerate(zip(range(-1, j_top + 1), ranges)):
        betas = acc[offsets[lev]:offsets[lev + 1]].copy()
        levels.append(Level(j, np.arange(r.start, r.stop), betas, float(np.sum(betas * betas))))
    return BlockSpectrum(tuple(levels), j_top, n)


def theta_hat(spectrum: BlockSpectrum, pen: PenaltyConfig, n: int | None = None):
    """Block-thresholded energy and the levels it keeps.

    Returns ``(theta, kept_levels)``.
    """
    n = spectrum.n if n is None else n
    theta = 0.0
    kept = []
    for lv in spectrum.levels:
        w = penalty(lv.j, n, pen.k_prime)
        if lv.energy >= w:
            theta += lv.energy - w
            kept.append(lv.j)
    return theta, kept


def wavelet_v_hat(sample, ell, spec, basis=None, pen: PenaltyConfig = PenaltyConfig()) -> float:
    spectrum = coefficients(sample, ell, spec, basis, pen.j_cap)
    return theta_hat(spectrum, pen)[0]


def wavelet_first_order(sample: SampleSet, ell: int, spec: InputSpec, basis=None,
                        pen: PenaltyConfig = PenaltyConfig()):
    mean, var = empirical_moments(sample.outputs)
    spectrum = coefficients(sample, ell, spec, basis, pen.j_cap)
    theta, kept = theta_hat(spectrum, pen)
    return combine(theta, mean, var, spec.name, Estimator.WARPED_WAVELET,
                   kept_levels=kept, k_prime=pen.k_prime, j_max=spectrum.j_max_allowed)


def slope_heuristic(spectrum: BlockSpectrum, n: int | None, k_grid: Sequence[float]):
    """Pick ``K'`` where the number of kept levels drops the most.

    Returns ``(k_selected, curve)`` with ``curve = [(K', kept_count), ...]``.
    Ties go to the smallest ``K'``.
    """
    grid = [float(k) for k in k_grid]
    if not grid:
        raise ConfigError("empty K' grid")
    if any(k <= 0 for k in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("K' grid must be positive and strictly increasing")
    curve = [(k, len(theta_hat(spectrum, PenaltyConfig(k), n)[1])) for k in grid]
    if len(curve) == 1:
        return grid[0], curve
    drops = [curve[i - 1][1] - curve[i][1] for i in range(1, len(curve))]
    best = max(range(len(drops)), key=lambda i: (drops[i], -i))
    return grid[best + 1], curve


def reconstruct(spectrum: BlockSpectrum, u, basis: WaveletBasis | None = None,
                levels: Sequence[int] | None = None) -> np.ndarray:
    """``h_hat(u) = sum beta_jk psi_jk(u)`` over the given (default: all) levels."""
    basis = basis or default_basis()
    u = np.asarray(u, dtype=np.float64)
    keep = set(spectrum.js if levels is None else levels)
    out = np.zeros_like(u)
    for lv in spectrum.levels:
        if lv.j in keep:
            for k, b in zip(lv.ks, lv.betas):
                out += b * eval_psi(basis, lv.j, int(k), u)
    return out


_DEFAULT_BASIS: WaveletBasis | None = None


def default_basis() -> WaveletBasis:
    global _DEFAULT_BASIS
    if _DEFAULT_BASIS is None:
        _DEFAULT_BASIS = build_basis("daubechies4", 12)
    return _DEFAULT_BASIS
