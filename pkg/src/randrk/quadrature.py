"""Randomized Riemann sum quadrature with prefix sums.

The randomized rule evaluates the integrand once per subinterval at an
independent uniformly distributed point and is an unbiased estimator of
the running integral. A deterministic left-endpoint rule is included as
the baseline that the divergence demonstration defeats.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import EvaluationError, RandomStream, TimeGrid

__all__ = [
    "Integrand",
    "QuadraturePrefix",
    "randomized_riemann",
    "left_riemann",
    "quad_error_max",
]


@dataclass(frozen=True)
class Integrand:
    """Integrand g on [0, T] with values in R^d.

    ``eval`` maps a 1-d time array of shape ``(n,)`` to an ``(n, d)``
    array via elementwise numpy operations. Singular abscissae may return
    non-finite values; the quadrature rules turn those into errors.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return self.eval(t)


@dataclass(frozen=True)
class QuadraturePrefix:
    """Running quadrature values Q^1..Q^{n_steps} for one realization.

    ``partials[n-1]`` approximates the integral of g over [0, t_n]. The
    prefix values are the sequential cumulative sums of the per-cell terms
    ``h * g(theta_j)``, so ``partials[n] == partials[n-1] + h*g(theta_n)``
    holds bit-exactly and the recorded draws reproduce the whole array.
    """

    grid: TimeGrid
    partials: np.ndarray
    draws: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        """The full-interval value Q^{n_steps}."""
        return self.partials[-1]


def _evaluate_checked(g: Integrand, times: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = np.asarray(g.eval(times), dtype=np.float64)
    if vals.shape[0] != times.shape[0]:
        raise ValueError(
            f"integrand returned shape {vals.shape} for {times.shape[0]} times"
        )
    finite = np.isfinite(vals).all(axis=tuple(range(1, vals.ndim)))
    if not finite.all():
        j = int(np.argmin(finite))
        raise EvaluationError(
            f"integrand {g.label!r} returned a non-finite value at t={times[j]!r} "
            f"(subinterval {j + 1})",
            step=j + 1,
            time=float(times[j]),
        )
    return vals


def randomized_riemann(g: Integrand, grid: TimeGrid, stream: RandomStream) -> QuadraturePrefix:
    """Randomized Riemann prefix sums with one fresh uniform per subinterval.

    Draws tau_1..tau_{n_steps} from ``stream`` and returns the running sums
    of ``h * g(t_{j-1} + h*tau_j)``. Consumes exactly ``n_steps`` draws.
    A non-finite integrand value aborts the realization.
    """
    n = grid.n_steps
    h = grid.step
    draws = stream.uniform_open(n)
    times = grid.left_endpoints() + h * draws
    vals = _evaluate_checked(g, times)
    partials = np.cumsum(h * vals, axis=0)
    return QuadraturePrefix(grid=grid, partials=partials, draws=draws)


def left_riemann(g: Integrand, grid: TimeGrid) -> QuadraturePrefix:
    """Deterministic left-endpoint Riemann prefix sums."""
    vals = _evaluate_checked(g, grid.left_endpoints())
    partials = np.cumsum(grid.step * vals, axis=0)
    return QuadraturePrefix(grid=grid, partials=partials, draws=None)


def quad_error_max(q: QuadraturePrefix, true_integral: Callable[[np.ndarray], np.ndarray]) -> float:
    """Largest deviation of the prefix sums from the running true integral.

    ``true_integral`` maps node times to the exact integral over [0, t];
    the maximum is taken over the nodes t_1..t_{n_steps} in the Euclidean
    norm.
    """
    nodes = q.grid.nodes()[1:]
    truth = np.asarray(true_integral(nodes), dtype=np.float64)
    diff = truth.reshape(q.partials.shape) - q.partials
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    return float(np.max(dist))
