"""Brute-force references for testing the estimators.

``anova_decompose`` computes the exact Sobol decomposition of a model
tabulated on a full tensor grid (uniform weights, cell-centre nodes).
``quadrature_v`` integrates a known conditional mean. ``nested_grid_model``
builds a grid of replicated cell means for stochastic simulators.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .core import ConfigError, InputSpec, ModelError
from .sampling import unwarp

MAX_GRID_CELLS = 10**7
MAX_GRID_DIM = 4


@dataclass(frozen=True)
class GridModel:
    """Model values on ``levels_per_input ** p`` cell-centre nodes.

    ``noise_variance`` is the unbiased within-cell output variance of a
    stochastic model (zero for deterministic tables), estimated from
    ``noise_replicates`` runs per cell; it counts towards the total variance
    but is explained by no input.
    """

    levels_per_input: int
    value_table: np.ndarray
    noise_variance: float = 0.0
    noise_replicates: int = 1

    def __post_init__(self) -> None:
        t = np.asarray(self.value_table, dtype=np.float64)
        if t.ndim < 1 or any(s != self.levels_per_input for s in t.shape):
            raise ConfigError("value_table must have levels_per_input cells on every axis")
        if not np.all(np.isfinite(t)):
            raise ConfigError("value_table must be total (every cell filled)")
        if self.noise_variance < 0 or self.noise_replicates < 1:
            raise ConfigError("noise_variance must be >= 0 and noise_replicates >= 1")
        object.__setattr__(self, "value_table", t)

    @property
    def p(self) -> int:
        return self.value_table.ndim

    @staticmethod
    def nodes(spec: InputSpec, m: int) -> np.ndarray:
        return unwarp(spec, (np.arange(m) + 0.5) / m)

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray],
                      specs: Sequence[InputSpec], m: int) -> "GridModel":
        """Tabulate a vectorized ``f((N, p) array) -> (N,)``."""
        _check_grid(m, len(specs))
        axes = [cls.nodes(s, m) for s in specs]
        mesh = np.meshgrid(*axes, indexing="ij")
        x = np.column_stack([a.ravel() for a in mesh])
        return cls(m, np.asarray(f(x), dtype=np.float64).reshape((m,) * len(specs)))


def _check_grid(m: int, p: int) -> None:
    if m < 2:
        raise ConfigError("need at least 2 levels per input")
    if p > MAX_GRID_DIM or m**p > MAX_GRID_CELLS:
        raise ConfigError(
            f"grid too large: {m}^{p} cells (limit {MAX_GRID_CELLS}, p <= {MAX_GRID_DIM})")


def _closed_variances(gm: GridModel) -> dict[tuple[int, ...], float]:
    """``Var(E[Y | X_A])`` for every subset ``A`` of the inputs."""
    t = gm.value_table
    p = gm.p
    mean = float(t.mean())
    out: dict[tuple[int, ...], float] = {(): 0.0}
    cells = t.size
    for size in range(1, p + 1):
        for subset in itertools.combinations(range(p), size):
            others = tuple(a for a in range(p) if a not in subset)
            cond = t.mean(axis=others) if others else t
            var = float(np.mean((cond - mean) ** 2))
            if gm.noise_variance:
                # Averaging replicated cells leaves noise of this size in cond.
                var -= gm.noise_variance * cond.size / (cells * gm.noise_replicates)
            out[subset] = var
    return out


def _total_variance(gm: GridModel) -> float:
    t = gm.value_table
    # Cell means carry noise_variance / R of the noise already.
    r = gm.noise_replicates
    return float(np.mean((t - t.mean()) ** 2)) + gm.noise_variance * (r - 1) / r


def partial_variances(gm: GridModel) -> dict[tuple[int, ...], float]:
    """ANOVA term ``V_A`` for every nonempty subset, by Moebius inversion."""
    _check_grid(gm.levels_per_input, gm.p)
    closed = _closed_variances(gm)
    out = {}
    for subset in closed:
        if not subset:
            continue
        v = 0.0
        for size in range(len(subset) + 1):
            for sub in itertools.combinations(subset, size):
                v += (-1) ** (len(subset) - size) * closed[sub]
        out[subset] = v
    return out


def anova_decompose(gm: GridModel):
    """Exact variance decomposition of a grid model.

    Returns ``(total_var, first, second, residual)``: first-order terms
    ``V_l``, the symmetric matrix of second-order terms ``V_{l1 l2}``, and
    everything of higher order (plus noise) lumped into ``residual``, so that
    the four parts sum to ``total_var``.
    """
    parts = partial_variances(gm)
    p = gm.p
    total = _total_variance(gm)
    first = np.array([parts[(i,)] for i in range(p)])
    second = np.zeros((p, p))
    for a, b in itertools.combinations(range(p), 2):
        second[a, b] = second[b, a] = parts[(a, b)]
    residual = total - first.sum() - second[np.triu_indices(p, 1)].sum()
    return total, first, second, residual


def sobol_indices(gm: GridModel) -> dict[str, np.ndarray]:
    """First-order, second-order and total indices of a grid model."""
    parts = partial_variances(gm)
    total, first, second, _ = anova_decompose(gm)
    p = gm.p
    tot = np.array([sum(v for a, v in parts.items() if i in a) for i in range(p)])
    return {"first": first / total, "second": second / total, "total": tot / total}


def _simpson(g: Callable[[np.ndarray], np.ndarray], nodes: int) -> float:
    u = np.linspace(0.0, 1.0, nodes + 1)
    return float(simpson(g(u), x=u))


def quadrature_v(conditional_mean: Callable, spec: InputSpec, nodes: int = 16,
                 tol: float = 1e-8, max_nodes: int = 2**20) -> float:
    """``int_0^1 h(u)^2 du`` with ``h(u) = E[Y | X = G^{-1}(u)]``.

    Composite Simpson; the node count doubles until the result moves by
    less than ``tol``.
    """
    if nodes < 16:
        raise ConfigError("need at least 16 quadrature nodes")
    nodes += nodes % 2

    def g(u):
        m = np.asarray(conditional_mean(unwarp(spec, u)), dtype=np.float64)
        return m**2 * np.ones_like(u)

    prev = _simpson(g, nodes)
    while nodes < max_nodes:
        nodes *= 2
        cur = _simpson(g, nodes)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise ModelError(f"quadrature did not converge within {max_nodes} nodes")


def nested_grid_model(model, specs: Sequence[InputSpec], m: int, replicates: int,
                      rng: np.random.Generator) -> GridModel:
    """Grid of cell means of a stochastic model, ``replicates`` runs per cell."""
    _check_grid(m, len(specs))
    axes = [GridModel.nodes(s, m) for s in specs]
    mesh = np.meshgrid(*axes, indexing="ij")
    x = np.column_stack([a.ravel() for a in mesh])
    y = np.asarray(model(np.repeat(x, replicates, axis=0), rng)).reshape(-1, replicates)
    noise = float(np.mean(np.var(y, axis=1, ddof=1))) if replicates > 1 else 0.0
    return GridModel(m, y.mean(axis=1).reshape((m,) * len(specs)), noise, replicates)
