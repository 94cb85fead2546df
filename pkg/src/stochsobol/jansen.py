"""Jansen pick-freeze estimator of first-order indices.

For input ``l`` the estimator compares ``f(B_i)`` with ``f(A_i^(l))``, where
``A_i^(l)`` is row ``i`` of ``A`` with column ``l`` taken from ``B``:

    S_l = 1 - sum_i (f(B_i) - f(A_i^(l)))^2 / (2 n var)

``var`` is the ``1/(2n)``-normalized variance of the pooled ``2n`` outputs
``f(B)`` and ``f(A^(l))``. Only ``f(B)`` and the ``p`` hybrids are ever
evaluated, which is ``n (p + 1)`` model calls in total.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import Estimator, InputSpec, SobolEstimate, combine, empirical_moments
from .sampling import DesignPair

Model = Callable[..., np.ndarray]


def _evaluate(model: Model, x: np.ndarray, rng) -> np.ndarray:
    return np.asarray(model(x, rng), dtype=np.float64).reshape(-1)


def jansen_from_outputs(y_b: np.ndarray, y_hybrid: np.ndarray, name: str = "") -> SobolEstimate:
    """Index from precomputed ``f(B)`` and ``f(A^(l))``."""
    y_b = np.asarray(y_b, dtype=np.float64)
    y_h = np.asarray(y_hybrid, dtype=np.float64)
    n = y_b.size
    mean, var = empirical_moments(np.concatenate([y_b, y_h]))
    d = y_b - y_h
    half_msd = float(np.dot(d, d)) / (2.0 * n)
    # Written through the plug-in form so the stored fields reproduce the value:
    # (var - half_msd + mean^2 - mean^2) / var.
    return combine(var - half_msd + mean * mean, mean, var, name, Estimator.JANSEN,
                   half_mean_sq_diff=half_msd)


def jansen_first_order(model: Model, specs: Sequence[InputSpec], pair: DesignPair,
                       ell: int, rng=None, y_b: np.ndarray | None = None) -> SobolEstimate:
    """Estimate ``S_ell``; pass ``y_b`` to reuse ``f(B)`` across inputs."""
    if not 0 <= ell < len(specs):
        raise IndexError(f"input index {ell} out of range for p={len(specs)}")
    if y_b is None:
        y_b = _evaluate(model, pair.sample_b, rng)
    y_h = _evaluate(model, pair.hybrid(ell), rng)
    return jansen_from_outputs(y_b, y_h, specs[ell].name)


def jansen_all(model: Model, specs: Sequence[InputSpec], pair: DesignPair,
               rng=None) -> list[SobolEstimate]:
    """All first-order indices from one design, ``n (p + 1)`` model calls."""
    y_b = _evaluate(model, pair.sample_b, rng)
    return [jansen_first_order(model, specs, pair, ell, rng, y_b) for ell in range(len(specs))]
