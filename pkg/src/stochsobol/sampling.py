"""Reproducible input sampling and the CDF warp ``u = G(x)``.

Random streams are Philox (counter-based) generators keyed by
``(master_seed, stream_id, *path)`` through ``numpy.random.SeedSequence``.
A replication ``r`` only needs ``SeedStream(master, r)``; no stream depends
on how many numbers another stream consumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import InputSpec, InsufficientSampleError


@dataclass(frozen=True)
class SeedStream:
    master_seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.master_seed < 0 or self.stream_id < 0 or any(k < 0 for k in self.path):
            raise ValueError("seed components must be unsigned integers")

    def substream(self, key: int) -> "SeedStream":
        """Child stream, independent of the parent and of its siblings."""
        return SeedStream(self.master_seed, self.stream_id, self.path + (int(key),))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            int(self.master_seed), spawn_key=(int(self.stream_id), *self.path)
        )
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class DesignPair:
    """Two independent input matrices for the pick-freeze estimator."""

    sample_a: np.ndarray
    sample_b: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sample_a.shape != self.sample_b.shape:
            raise ValueError("design matrices must share a shape")

    @property
    def n(self) -> int:
        return self.sample_a.shape[0]

    def hybrid(self, ell: int) -> np.ndarray:
        """``sample_a`` with column ``ell`` taken from ``sample_b``."""
        out = np.array(self.sample_a, copy=True)
        out[:, ell] = self.sample_b[:, ell]
        return out


def _as_rng(stream) -> np.random.Generator:
    if isinstance(stream, SeedStream):
        return stream.generator()
    if isinstance(stream, np.random.Generator):
        return stream
    raise TypeError(f"expected SeedStream or Generator, got {type(stream).__name__}")


def draw_iid(specs: Sequence[InputSpec], n: int, stream) -> np.ndarray:
    """``n`` i.i.d. rows, column ``l`` uniform on ``specs[l]``."""
    if n < 1:
        raise InsufficientSampleError("insufficient sample: n must be >= 1")
    rng = _as_rng(stream)
    u = rng.random((n, len(specs)))
    lower = np.array([s.lower for s in specs])
    width = np.array([s.width for s in specs])
    return lower + width * u


def warp(spec: InputSpec, x):
    """CDF of ``spec`` at ``x``; values outside the support are clamped."""
    u = np.clip((np.asarray(x, dtype=np.float64) - spec.lower) / spec.width, 0.0, 1.0)
    return float(u) if u.ndim == 0 else u


def unwarp(spec: InputSpec, u):
    """Quantile function, the inverse of :func:`warp` on ``[0, 1]``."""
    x = spec.lower + spec.width * np.asarray(u, dtype=np.float64)
    return float(x) if x.ndim == 0 else x


def empirical_warp(column, x):
    """Fraction of ``column`` that is ``<= x``."""
    col = np.sort(np.asarray(column, dtype=np.float64).reshape(-1))
    if col.size == 0:
        raise InsufficientSampleError("empirical warp needs a nonempty column")
    u = np.searchsorted(col, x, side="right") / col.size
    return float(u) if np.ndim(u) == 0 else u


def jansen_design(specs: Sequence[InputSpec], n: int, stream) -> DesignPair:
    if n < 2:
        raise InsufficientSampleError("insufficient sample: Jansen design needs n >= 2")
    rng = _as_rng(stream)
    a = draw_iid(specs, n, rng)
    b = draw_iid(specs, n, rng)
    seed = stream.master_seed if isinstance(stream, SeedStream) else 0
    return DesignPair(a, b, seed)
