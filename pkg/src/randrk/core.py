"""Shared primitives: time grids, states, random streams, vector fields.

States are plain float64 numpy arrays. A single state has shape ``(d,)``;
a batch of ``m`` coupled sample paths has shape ``(m, d)``. Evaluation
times are always passed to callables as 1-d arrays so that every code
path (single trajectory, batched Monte Carlo, any thread count) runs the
identical numpy kernels and produces bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.random import Generator, Philox

__all__ = [
    "TimeGrid",
    "make_grid",
    "RandomStream",
    "derive_stream",
    "draw_tau",
    "RegularityMeta",
    "VectorField",
    "EvaluationError",
    "NonFiniteStateError",
    "ReseedLimitError",
    "as_state",
]

_UINT64_MASK = (1 << 64) - 1


class EvaluationError(RuntimeError):
    """A right-hand side or integrand returned a non-finite value.

    Carries the step index and evaluation time of the failing call.
    """

    def __init__(self, message: str, step: int | None = None, time: float | None = None):
        super().__init__(message)
        self.step = step
        self.time = time


class NonFiniteStateError(RuntimeError):
    """A state iterate overflowed to inf/NaN although the field evaluation
    was finite; signals a misposed problem or too large ``h * L``."""

    def __init__(self, message: str, step: int | None = None, time: float | None = None):
        super().__init__(message)
        self.step = step
        self.time = time


class ReseedLimitError(RuntimeError):
    """A sample path kept colliding with a singular point after the maximum
    number of re-seed attempts."""


def as_state(x) -> np.ndarray:
    """Coerce a scalar or sequence to a 1-d float64 state vector."""
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.ndim != 1:
        raise ValueError(f"state must be a flat vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = j*h on [0, T] with n_steps*h <= T < (n_steps+1)*h.

    Nodes are always computed as ``j * h`` (never accumulated) so that
    ``node(j)`` is exact in floating point. When T/h is not an integer the
    trailing piece ``[n_steps*h, T]`` is not integrated; all errors are
    measured at nodes 0..n_steps.
    """

    final_time: float
    step: float
    n_steps: int

    def node(self, j: int) -> float:
        return j * self.step

    def nodes(self) -> np.ndarray:
        """All nodes t_0..t_{n_steps} as an array."""
        return np.arange(self.n_steps + 1, dtype=np.float64) * self.step

    def left_endpoints(self) -> np.ndarray:
        """Nodes t_0..t_{n_steps-1}, the left endpoints of the subintervals."""
        return np.arange(self.n_steps, dtype=np.float64) * self.step


def make_grid(final_time: float, step: float) -> TimeGrid:
    """Build the uniform grid for a final time T and step h in (0, 1).

    The step count is floor(T/h) corrected so that the defining two-sided
    inequality ``n*h <= T < (n+1)*h`` holds exactly in floating point.
    """
    T = float(final_time)
    h = float(step)
    if not np.isfinite(T) or T <= 0.0:
        raise ValueError(f"final time must be positive, got {final_time!r}")
    if not np.isfinite(h) or h <= 0.0 or h >= 1.0:
        raise ValueError(f"step size must lie in (0, 1), got {step!r}")
    n = int(np.floor(T / h))
    while (n + 1) * h <= T:
        n += 1
    while n > 0 and n * h > T:
        n -= 1
    if n < 1:
        raise ValueError(f"step {step!r} exceeds final time {final_time!r}: empty grid")
    return TimeGrid(final_time=T, step=h, n_steps=n)


class RandomStream:
    """Counter-based uniform random stream, one per Monte Carlo sample.

    Backed by the Philox 4x64 generator: the 128-bit key holds
    ``(master_seed, stream_index)`` and the third 256-bit counter word
    holds a derivation lane, so distinct samples, derivation lanes, and
    re-seed attempts consume disjoint counter blocks of one fixed cipher.
    The sequence for a given ``(master_seed, stream_index, lane)`` is
    therefore reproducible bit-for-bit on any platform and under any
    thread count.

    Draws from :meth:`uniform_open` are the raw Philox uniforms with any
    value equal to 0.0 or 1.0 filtered out and replaced by the next raw
    value, which keeps the draws in the open interval (0, 1).
    """

    __slots__ = ("master_seed", "stream_index", "lane", "counter", "_gen")

    def __init__(self, master_seed: int, stream_index: int, lane: int = 0):
        if stream_index < 0:
            raise ValueError("stream_index must be nonnegative")
        if stream_index > _UINT64_MASK:
            raise ValueError("stream_index must fit in 64 bits")
        if lane < 0 or lane > _UINT64_MASK:
            raise ValueError("lane must fit in 64 bits")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self.lane = int(lane)
        self.counter = 0
        key = np.array([self.master_seed & _UINT64_MASK, self.stream_index], dtype=np.uint64)
        ctr = np.array([0, 0, self.lane, 0], dtype=np.uint64)
        self._gen = Generator(Philox(key=key, counter=ctr))

    def uniform_open(self, n: int) -> np.ndarray:
        """Draw ``n`` uniforms strictly inside (0, 1).

        Raw values outside the open interval are dropped and replaced by
        subsequent raw values, so blocked and one-at-a-time consumption
        yield the same sequence.
        """
        out = self._gen.random(int(n))
        self.counter += int(n)
        good = out[(out > 0.0) & (out < 1.0)]
        while good.size < n:
            need = int(n) - good.size
            more = self._gen.random(need)
            self.counter += need
            more = more[(more > 0.0) & (more < 1.0)]
            good = np.concatenate([good, more])
        return good

    def __repr__(self) -> str:
        return (
            f"RandomStream(master_seed={self.master_seed}, "
            f"stream_index={self.stream_index}, lane={self.lane}, "
            f"counter={self.counter})"
        )


def derive_stream(master_seed: int, stream_index: int, lane: int = 0) -> RandomStream:
    """Deterministically derive the uniform stream for one sample.

    Distinct ``stream_index`` values give statistically independent
    sequences; replaying with the same arguments gives the identical
    sequence. The optional ``lane`` separates derived uses of the same
    sample identity (per-level draws, re-seed attempts).
    """
    return RandomStream(master_seed, stream_index, lane)


def draw_tau(stream: RandomStream) -> float:
    """Draw one uniform from the open interval (0, 1), advancing the stream."""
    return float(stream.uniform_open(1)[0])


@dataclass(frozen=True)
class RegularityMeta:
    """Declared temporal regularity of a right-hand side.

    ``p_integrability`` is the exponent for which the stated L^p norms of
    the state-Lipschitz weight and the growth weight are declared (norms
    may be ``None`` when unknown or infinite). In the Hoelder regime the
    exponent ``hoelder_gamma`` together with the uniform constants
    ``lipschitz_const`` and ``hoelder_const`` must all be present.
    """

    p_integrability: float = 2.0
    lipschitz_lp_norm: float | None = None
    growth_lp_norm: float | None = None
    hoelder_gamma: float | None = None
    lipschitz_const: float | None = None
    hoelder_const: float | None = None

    def __post_init__(self):
        if self.p_integrability < 2.0:
            raise ValueError("p_integrability must be at least 2")
        if self.hoelder_gamma is not None:
            if not (0.0 < self.hoelder_gamma <= 1.0):
                raise ValueError("hoelder_gamma must lie in (0, 1]")
            if self.lipschitz_const is None or self.hoelder_const is None:
                raise ValueError(
                    "hoelder_gamma requires lipschitz_const and hoelder_const"
                )
        for name in ("lipschitz_lp_norm", "growth_lp_norm", "lipschitz_const", "hoelder_const"):
            v = getattr(self, name)
            if v is not None and v < 0.0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class VectorField:
    """Right-hand side f(t, x) with declared regularity.

    ``eval`` must accept a 1-d time array of shape ``(m,)`` and a state
    batch of shape ``(m, d)`` and return an ``(m, d)`` array, using only
    elementwise numpy operations. Singular abscissae may produce inf/NaN;
    consumers detect non-finite values and raise :class:`EvaluationError`.
    """

    eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    regularity: RegularityMeta = field(default_factory=RegularityMeta)
    label: str = ""

    def __call__(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.eval(t, x)
