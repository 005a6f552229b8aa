"""One-step methods: randomized Euler, randomized two-stage Runge-Kutta,
and the classical left-endpoint Euler baseline.

Each randomized step draws one uniform ``tau`` and evaluates the right-hand
side at the random intermediate time ``t_{j-1} + tau*h``; the two-stage
method first predicts the state at that time with an Euler substep of
length ``tau*h`` and reuses the same ``tau`` in both stages. Both schemes
are instances of a theta-parameterized Butcher tableau, and a generic
tableau executor is provided so the equivalence can be checked directly.

All stepping goes through one batched kernel operating on ``(m, d)`` state
arrays, so a single trajectory, a batch of Monte Carlo samples, and any
threaded partition of that batch produce bit-identical numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    EvaluationError,
    NonFiniteStateError,
    RandomStream,
    TimeGrid,
    VectorField,
    as_state,
)

__all__ = [
    "METHODS",
    "RANDOMIZED_METHODS",
    "Trajectory",
    "ThetaTableau",
    "TABLEAUX",
    "run_tableau",
    "step_euler_theta",
    "step_rk2_theta",
    "solve",
    "solve_with_draws",
]

METHODS = ("classical_euler", "rand_euler", "rand_rk2")
RANDOMIZED_METHODS = ("rand_euler", "rand_rk2")

_FAIL_NONE = 0
_FAIL_EVAL = 1
_FAIL_STATE = 2


@dataclass(frozen=True)
class Trajectory:
    """Grid, iterates U^0..U^{n_steps}, and the recorded uniform draws.

    ``states`` has shape ``(n_steps + 1, d)`` and ``draws`` holds the
    tau_1..tau_{n_steps} actually consumed (``None`` for the classical
    method). Feeding the recorded draws back through
    :func:`solve_with_draws` reproduces ``states`` bit-exactly.
    """

    grid: TimeGrid
    states: np.ndarray
    draws: np.ndarray | None
    method: str

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class ThetaTableau:
    """Explicit Runge-Kutta tableau whose entries depend on the random
    parameter theta drawn in each step."""

    scheme: str
    stage_times: Callable[[float], Sequence[float]]
    stage_matrix: Callable[[float], Sequence[Sequence[float]]]
    weights: Callable[[float], Sequence[float]]


TABLEAUX = {
    "euler_theta": ThetaTableau(
        scheme="euler_theta",
        stage_times=lambda th: (th,),
        stage_matrix=lambda th: ((0.0,),),
        weights=lambda th: (1.0,),
    ),
    "two_stage_theta": ThetaTableau(
        scheme="two_stage_theta",
        stage_times=lambda th: (0.0, th),
        stage_matrix=lambda th: ((0.0, 0.0), (th, 0.0)),
        weights=lambda th: (0.0, 1.0),
    ),
}


def _eval_field(f: VectorField, times: np.ndarray, x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.asarray(f.eval(times, x), dtype=np.float64)
    if out.shape != x.shape:
        raise ValueError(
            f"field {f.label!r} returned shape {out.shape} for state shape {x.shape}"
        )
    return out


def _check_theta(theta: float) -> float:
    th = float(theta)
    if not (0.0 < th < 1.0):
        raise ValueError(f"theta must lie in (0, 1), got {theta!r}")
    return th


def _require_finite(values: np.ndarray, what: str, step: int | None, time: float):
    if not np.isfinite(values).all():
        raise EvaluationError(
            f"{what} returned a non-finite value at t={time!r}"
            + (f" (step {step})" if step is not None else ""),
            step=step,
            time=time,
        )


def step_euler_theta(f: VectorField, t_prev: float, x, h: float, theta: float) -> np.ndarray:
    """One randomized Euler step: x + h * f(t_prev + theta*h, x)."""
    th = _check_theta(theta)
    x2 = as_state(x)[None, :]
    t_eval = t_prev + th * h
    fx = _eval_field(f, np.array([t_eval]), x2)
    _require_finite(fx, f"field {f.label!r}", None, t_eval)
    return (x2 + h * fx)[0]


def step_rk2_theta(f: VectorField, t_prev: float, x, h: float, theta: float) -> np.ndarray:
    """One randomized two-stage step: Euler predictor of length theta*h to
    the random intermediate time, then a full step from the predicted state."""
    th = _check_theta(theta)
    x2 = as_state(x)[None, :]
    k0 = _eval_field(f, np.array([float(t_prev)]), x2)
    _require_finite(k0, f"field {f.label!r}", None, float(t_prev))
    stage = x2 + h * (th * k0)
    t_eval = t_prev + th * h
    k1 = _eval_field(f, np.array([t_eval]), stage)
    _require_finite(k1, f"field {f.label!r}", None, t_eval)
    return (x2 + h * k1)[0]


def run_tableau(tableau: ThetaTableau, f: VectorField, t_prev: float, x, h: float, theta: float) -> np.ndarray:
    """Execute one step of an explicit theta-parameterized tableau.

    Instantiated with the one-stage tableau this reproduces
    :func:`step_euler_theta`; with the two-stage tableau it reproduces
    :func:`step_rk2_theta`.
    """
    th = _check_theta(theta)
    c = tableau.stage_times(th)
    a = tableau.stage_matrix(th)
    b = tableau.weights(th)
    x2 = as_state(x)[None, :]
    ks: list[np.ndarray] = []
    for i in range(len(c)):
        yi = x2
        for j in range(i):
            yi = yi + h * (a[i][j] * ks[j])
        t_eval = t_prev + c[i] * h
        ki = _eval_field(f, np.array([t_eval]), yi)
        _require_finite(ki, f"field {f.label!r}", None, t_eval)
        ks.append(ki)
    acc = np.zeros_like(x2)
    for i in range(len(c)):
        acc = acc + b[i] * ks[i]
    return (x2 + h * acc)[0]


@dataclass
class _BatchResult:
    final: np.ndarray
    states: np.ndarray | None
    max_errors: np.ndarray | None
    fail_step: np.ndarray
    fail_kind: np.ndarray
    fail_time: np.ndarray


def _advance_batch(
    f: VectorField,
    x0: np.ndarray,
    grid: TimeGrid,
    method: str,
    draws: np.ndarray | None,
    node_values: np.ndarray | None = None,
    record: bool = False,
) -> _BatchResult:
    """Advance a batch of sample paths over the whole grid.

    ``x0`` is ``(m, d)``; ``draws`` is ``(m, n_steps)`` for the randomized
    methods. When ``node_values`` (exact solution at the nodes, shape
    ``(n_steps + 1, d)``) is given, the running maximum node error per
    sample is accumulated instead of storing trajectories. Non-finite
    field values or iterates are recorded per sample (first failing step
    and kind) without interrupting the remaining samples.
    """
    m, d = x0.shape
    n, h = grid.n_steps, grid.step
    x = np.array(x0, dtype=np.float64)
    fail_step = np.zeros(m, dtype=np.int64)
    fail_kind = np.zeros(m, dtype=np.uint8)
    fail_time = np.zeros(m, dtype=np.float64)
    states = None
    if record:
        states = np.empty((m, n + 1, d), dtype=np.float64)
        states[:, 0] = x
    err = None
    if node_values is not None:
        diff = x - node_values[0][None, :]
        err = np.sqrt(np.sum(diff * diff, axis=-1))
    for j in range(1, n + 1):
        t_prev = grid.node(j - 1)
        with np.errstate(over="ignore", invalid="ignore"):
            if method == "classical_euler":
                times = np.full(m, t_prev)
                fx = _eval_field(f, times, x)
                eval_ok = np.isfinite(fx).all(axis=-1)
                xn = x + h * fx
            elif method == "rand_euler":
                th = draws[:, j - 1]
                times = t_prev + th * h
                fx = _eval_field(f, times, x)
                eval_ok = np.isfinite(fx).all(axis=-1)
                xn = x + h * fx
            elif method == "rand_rk2":
                th = draws[:, j - 1]
                k0 = _eval_field(f, np.full(m, t_prev), x)
                stage = x + h * (th[:, None] * k0)
                times = t_prev + th * h
                k1 = _eval_field(f, times, stage)
                eval_ok = np.isfinite(k0).all(axis=-1) & np.isfinite(k1).all(axis=-1)
                xn = x + h * k1
            else:
                raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        fresh = fail_step == 0
        bad_eval = ~eval_ok & fresh
        bad_state = ~np.isfinite(xn).all(axis=-1) & eval_ok & fresh
        if bad_eval.any():
            fail_step[bad_eval] = j
            fail_kind[bad_eval] = _FAIL_EVAL
            fail_time[bad_eval] = times[bad_eval]
        if bad_state.any():
            fail_step[bad_state] = j
            fail_kind[bad_state] = _FAIL_STATE
            fail_time[bad_state] = grid.node(j)
        x = xn
        if record:
            states[:, j] = x
        if err is not None:
            diff = x - node_values[j][None, :]
            err = np.maximum(err, np.sqrt(np.sum(diff * diff, axis=-1)))
    return _BatchResult(
        final=x, states=states, max_errors=err,
        fail_step=fail_step, fail_kind=fail_kind, fail_time=fail_time,
    )


def _raise_failure(result: _BatchResult, f: VectorField, method: str, sample: int = 0):
    kind = int(result.fail_kind[sample])
    if kind == _FAIL_NONE:
        return
    step = int(result.fail_step[sample])
    t = float(result.fail_time[sample])
    if kind == _FAIL_EVAL:
        raise EvaluationError(
            f"field {f.label!r} returned a non-finite value at step {step}, t={t!r} "
            f"(method {method})",
            step=step,
            time=t,
        )
    raise NonFiniteStateError(
        f"state overflowed to non-finite at step {step}, t={t!r} (method {method}); "
        "the problem may be misposed or h too large for its Lipschitz bound",
        step=step,
        time=t,
    )


def _validate_method(method: str, has_stream: bool):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method in RANDOMIZED_METHODS and not has_stream:
        raise ValueError(f"method {method!r} requires a random stream")
    if method not in RANDOMIZED_METHODS and has_stream:
        raise ValueError(f"method {method!r} is deterministic and takes no stream")


def solve(
    f: VectorField,
    u0,
    grid: TimeGrid,
    method: str,
    stream: RandomStream | None = None,
) -> Trajectory:
    """Integrate over the whole grid with the chosen one-step method.

    The randomized methods consume exactly one uniform draw per step, in
    step order, so trajectories are replayable from the recorded draws.
    Raises :class:`EvaluationError` if the field returns a non-finite
    value and :class:`NonFiniteStateError` if an iterate overflows.
    """
    _validate_method(method, stream is not None)
    x0 = as_state(u0)
    if not np.isfinite(x0).all():
        raise ValueError("initial condition must be finite")
    draws = None
    if method in RANDOMIZED_METHODS:
        draws = stream.uniform_open(grid.n_steps)
    return _solve_from_draws(f, x0, grid, method, draws)


def solve_with_draws(
    f: VectorField,
    u0,
    grid: TimeGrid,
    method: str,
    draws: np.ndarray | None,
) -> Trajectory:
    """Integrate with an explicit draw sequence (replay or forced draws).

    ``draws`` must contain ``n_steps`` values in the open interval (0, 1)
    for the randomized methods and must be ``None`` for the classical one.
    """
    _validate_method(method, draws is not None)
    x0 = as_state(u0)
    if not np.isfinite(x0).all():
        raise ValueError("initial condition must be finite")
    if draws is not None:
        draws = np.asarray(draws, dtype=np.float64)
        if draws.shape != (grid.n_steps,):
            raise ValueError(
                f"need exactly {grid.n_steps} draws, got shape {draws.shape}"
            )
        if not ((draws > 0.0) & (draws < 1.0)).all():
            raise ValueError("draws must lie strictly inside (0, 1)")
    return _solve_from_draws(f, x0, grid, method, draws)


def _solve_from_draws(f, x0, grid, method, draws) -> Trajectory:
    matrix = draws[None, :] if draws is not None else None
    result = _advance_batch(f, x0[None, :], grid, method, matrix, record=True)
    _raise_failure(result, f, method)
    return Trajectory(grid=grid, states=result.states[0], draws=draws, method=method)
