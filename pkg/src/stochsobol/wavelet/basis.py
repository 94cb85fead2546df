"""Compactly supported Daubechies wavelets tabulated by the cascade algorithm.

Level ``j = -1`` holds the father translates ``phi(u - k)``; level
``j >= 0`` holds ``2^(j/2) psi(2^j u - k)``. Both functions live on
``[0, L]`` with ``L = len(filter) - 1`` and are evaluated between table
points by linear interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..core import ConfigError

_S3 = math.sqrt(3.0)

# Orthonormal scaling filters, normalized so that sum(h) = sqrt(2).
FILTERS = {
    "daubechies4": np.array([1 + _S3, 3 + _S3, 3 - _S3, 1 - _S3]) / (4 * math.sqrt(2.0)),
}


@dataclass(frozen=True, eq=False)
class WaveletBasis:
    family: str
    filter: np.ndarray
    father_table: np.ndarray
    mother_table: np.ndarray
    grid_depth: int

    @property
    def support_length(self) -> int:
        return len(self.filter) - 1

    @property
    def support(self) -> tuple[float, float]:
        return 0.0, float(self.support_length)

    @property
    def spacing(self) -> float:
        return 2.0 ** -self.grid_depth

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.father_table.size) * self.spacing

    def father(self, x):
        return _interp_table(self.father_table, self.grid_depth, np.asarray(x, dtype=np.float64))

    def mother(self, x):
        return _interp_table(self.mother_table, self.grid_depth, np.asarray(x, dtype=np.float64))


def wavelet_filter(family: str) -> np.ndarray:
    try:
        return FILTERS[family].copy()
    except KeyError:
        raise ConfigError(f"unsupported wavelet family {family!r}") from None


def _integer_values(h: np.ndarray) -> np.ndarray:
    """``phi`` at ``0..L``: the eigenvector of the refinement matrix for 1."""
    size = len(h)
    m = np.zeros((size, size))
    for x in range(size):
        for k in range(size):
            if 0 <= 2 * x - k < size:
                m[x, k] = math.sqrt(2.0) * h[2 * x - k]
    w, v = np.linalg.eig(m)
    vec = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    return vec / vec.sum()


def _cascade(h: np.ndarray, depth: int) -> np.ndarray:
    """``phi`` on the grid ``i / 2^depth``, ``i = 0..L 2^depth``."""
    length = len(h) - 1
    vals = _integer_values(h)
    for d in range(1, depth + 1):
        half = 2 ** (d - 1)
        new = np.zeros(length * 2**d + 1)
        new[::2] = vals
        odd = np.arange(1, length * 2**d, 2)
        acc = np.zeros(odd.size)
        # phi(x) = sqrt(2) sum_k h_k phi(2x - k); on the coarser grid 2x - k
        # sits at index i - k * half.
        for k, hk in enumerate(h):
            idx = odd - k * half
            ok = (idx >= 0) & (idx <= length * half)
            acc[ok] += hk * vals[idx[ok]]
        new[odd] = math.sqrt(2.0) * acc
        vals = new
    return vals


def build_basis(family: str = "daubechies4", grid_depth: int = 12) -> WaveletBasis:
    if grid_depth < 8:
        raise ConfigError("grid_depth must be at least 8")
    h = wavelet_filter(family)
    length = len(h) - 1
    phi = _cascade(h, grid_depth)
    g = np.array([(-1) ** k * h[length - k] for k in range(len(h))])
    # psi(x) = sqrt(2) sum_k g_k phi(2x - k), also supported on [0, L].
    x = np.arange(phi.size) * 2.0**-grid_depth
    psi = np.zeros_like(phi)
    for k, gk in enumerate(g):
        psi += math.sqrt(2.0) * gk * _interp_table(phi, grid_depth, 2.0 * x - k)
    phi.setflags(write=False)
    psi.setflags(write=False)
    return WaveletBasis(family, h, phi, psi, grid_depth)


@njit(cache=True, nogil=True)
def _interp_scalar(table, scale, z):
    p = z * scale
    if p <= 0.0 or p >= table.shape[0] - 1:
        return 0.0
    i = int(p)
    f = p - i
    return table[i] * (1.0 - f) + table[i + 1] * f


@njit(cache=True, nogil=True)
def _interp_array(table, scale, z, out):
    flat = z.ravel()
    res = out.ravel()
    for q in range(flat.shape[0]):
        res[q] = _interp_scalar(table, scale, flat[q])
    return out


def _interp_table(table: np.ndarray, depth: int, z: np.ndarray):
    z = np.ascontiguousarray(z, dtype=np.float64)
    out = np.empty_like(z)
    _interp_array(table, float(2**depth), z, out)
    return float(out) if out.ndim == 0 else out


def eval_psi(basis: WaveletBasis, j: int, k: int, u):
    """``psi_{jk}(u)``; exactly zero off the support."""
    u = np.asarray(u, dtype=np.float64)
    if j == -1:
        return basis.father(u - k)
    if j < -1:
        raise ValueError("levels start at j = -1")
    return 2.0 ** (j / 2.0) * basis.mother(2.0**j * u - k)


def k_range(basis: WaveletBasis | int, j: int) -> range:
    """Translates whose support meets ``(0, 1)`` at level ``j``.

    ``basis`` may also be a bare support length ``L``.
    """
    length = basis if isinstance(basis, int) else basis.support_length
    if j < -1:
        raise ValueError("levels start at j = -1")
    top = 0 if j == -1 else 2**j - 1
    return range(-length + 1, top + 1)
