"""Monte Carlo error estimation and convergence-order measurement.

Estimates L^p errors of the one-step methods over independent sample
paths, fits empirical convergence orders on log-log axes, runs the
pathwise (almost-sure) rate check over coupled paths, and evaluates the
closed-form error-constant expressions.

Stream discipline: sample ``i`` of an experiment always uses the stream
``derive_stream(master_seed, i, lane)``. The lane separates draw
contexts: independent experiments at different step sizes derive the lane
from the step size, while the pathwise rate check uses lane 0 at every
level so each sample path is coupled across step sizes. Re-seed attempts
after a singular collision bump the upper half of the lane. Sample loops
may be partitioned across worker threads; results are keyed by sample
index and reduced in a fixed order, so every thread count produces
bit-identical output.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    EvaluationError,
    NonFiniteStateError,
    ReseedLimitError,
    TimeGrid,
    derive_stream,
    make_grid,
)
from .problems import Problem, problem_adversarial_indicator
from .solvers import (
    RANDOMIZED_METHODS,
    Trajectory,
    _advance_batch,
    _FAIL_EVAL,
)

__all__ = [
    "ExperimentConfig",
    "ConvergenceRow",
    "ConvergenceTable",
    "OrderFit",
    "AsRateReport",
    "ConstantReport",
    "AdversarialReport",
    "path_error_max",
    "mc_lp_error",
    "run_convergence",
    "fit_order",
    "fit_loglog",
    "as_rate_check",
    "error_constants",
    "apriori_sup_bound",
    "adversarial_demo",
    "measure_runtime",
]

logger = logging.getLogger("randrk.harness")

MAX_RESEED_ATTEMPTS = 5

ProblemProvider = Callable[[TimeGrid], Problem]


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo convergence experiment.

    ``problem`` is either a fixed :class:`Problem` or a callable building
    one from the grid (needed for the adversarial indicator, whose field
    depends on the grid). Step sizes are h = 2^-n for n in
    ``n_min..n_max`` inclusive.
    """

    problem: Problem | ProblemProvider
    method: str
    p: float = 2.0
    samples: int = 1000
    n_min: int = 3
    n_max: int = 12
    master_seed: int = 0
    threads: int = 1
    horizon: float | None = None

    def __post_init__(self):
        if self.p < 2.0:
            raise ValueError("p must be at least 2")
        if self.samples < 2:
            raise ValueError("need at least 2 samples")
        if self.n_min < 1:
            raise ValueError("n_min must be at least 1 so that h < 1")
        if self.n_min >= self.n_max:
            raise ValueError("n_min must be smaller than n_max")
        if self.threads < 1:
            raise ValueError("threads must be positive")
        if self.horizon is not None and self.horizon <= 0.0:
            raise ValueError("horizon must be positive")

    def resolve_problem(self, grid: TimeGrid) -> Problem:
        if isinstance(self.problem, Problem):
            return self.problem
        return self.problem(grid)

    def final_time(self) -> float:
        if isinstance(self.problem, Problem):
            return self.problem.final_time
        # grid-indexed providers need the horizon spelled out (default 1)
        return self.horizon if self.horizon is not None else 1.0

    def exponents(self) -> range:
        return range(self.n_min, self.n_max + 1)


@dataclass(frozen=True)
class ConvergenceRow:
    step: float
    error: float
    sample_std: float


@dataclass(frozen=True)
class ConvergenceTable:
    """Per-step-size L^p error estimates for one (problem, method) pair."""

    problem: str
    method: str
    p: float
    samples: int
    master_seed: int
    rows: tuple[ConvergenceRow, ...]

    def __post_init__(self):
        steps = [r.step for r in self.rows]
        if any(b >= a for a, b in zip(steps, steps[1:])):
            raise ValueError("rows must be sorted by decreasing step size")
        if not all(np.isfinite(r.error) for r in self.rows):
            raise ValueError("error estimates must be finite")

    def steps(self) -> np.ndarray:
        return np.array([r.step for r in self.rows])

    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])


@dataclass(frozen=True)
class OrderFit:
    """Least-squares slope of log2(error) against log2(step)."""

    slope: float
    intercept: float
    r_squared: float


@dataclass(frozen=True)
class AsRateReport:
    """Pathwise rate check along a summable step-size sequence.

    For each coupled sample path, ``last_violation_level`` holds the
    largest exponent n with path error exceeding h_n^exponent (or -1 if
    the path never violates). ``violation_counts[i]`` counts violating
    paths at ``levels[i]``.
    """

    exponent: float
    epsilon_margin: float
    levels: tuple[int, ...]
    steps: tuple[float, ...]
    thresholds: tuple[float, ...]
    violation_counts: tuple[int, ...]
    last_violation_level: np.ndarray
    n_paths: int

    @property
    def finest_violation_fraction(self) -> float:
        return self.violation_counts[-1] / self.n_paths

    def distribution(self) -> dict[int, int]:
        """Histogram of the per-path largest violating level (-1 = none)."""
        values, counts = np.unique(self.last_violation_level, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


@dataclass(frozen=True)
class ConstantReport:
    """Closed-form error constants with their inputs echoed.

    ``const_euler_integrable`` bounds the randomized Euler L^p error by
    C * h^(1/2) in the integrable-coefficient regime;
    ``const_euler_hoelder`` and ``const_rk2_hoelder`` bound the two
    methods by C * h^min(1/2+gamma, 1) and C * h^(1/2+gamma) in the
    Hoelder regime. Each constant is monotone nondecreasing in every norm
    input.
    """

    cp: float
    final_time: float
    p: float
    lipschitz_lp_norm: float
    growth_lp_norm: float
    sup_u: float
    gamma: float | None
    lipschitz_const: float | None
    hoelder_const: float | None
    const_euler_integrable: float
    const_euler_hoelder: float | None
    const_rk2_hoelder: float | None


@dataclass(frozen=True)
class AdversarialReport:
    step: float
    classical_error: float
    randomized_errors: np.ndarray
    n_reseeded: int

    @property
    def n_exact_zero(self) -> int:
        return int(np.count_nonzero(self.randomized_errors == 0.0))


def path_error_max(traj: Trajectory, exact: Callable[[np.ndarray], np.ndarray]) -> float:
    """Largest Euclidean deviation from the exact solution over all nodes."""
    truth = np.asarray(exact(traj.grid.nodes()), dtype=np.float64)
    diff = truth.reshape(traj.states.shape) - traj.states
    return float(np.max(np.sqrt(np.sum(diff * diff, axis=-1))))


def _step_lane_tag(h: float) -> int:
    """Fold the step size bit pattern into the 32-bit lane tag."""
    bits = int(np.float64(h).view(np.uint64))
    return (bits ^ (bits >> 32)) & 0xFFFFFFFF


def _lane(tag: int, attempt: int) -> int:
    return tag + (attempt << 32)


def _draw_matrix(master_seed: int, sample_ids: range, n: int, tag: int) -> np.ndarray:
    out = np.empty((len(sample_ids), n), dtype=np.float64)
    for row, sid in enumerate(sample_ids):
        out[row] = derive_stream(master_seed, sid, _lane(tag, 0)).uniform_open(n)
    return out


def _raise_sample_failure(problem: Problem, method: str, sample: int,
                          step: int, kind: int, t: float):
    where = f"(sample {sample}, step {step}) at t={t!r} on {problem.name!r} with {method}"
    if kind == _FAIL_EVAL:
        raise EvaluationError(f"non-finite field value {where}", step=step, time=t)
    raise NonFiniteStateError(f"state overflowed {where}", step=step, time=t)


def _path_error_chunk(
    problem: Problem,
    method: str,
    grid: TimeGrid,
    node_values: np.ndarray,
    master_seed: int,
    sample_ids: range,
    tag: int,
) -> tuple[np.ndarray, int]:
    """Max node errors for a contiguous chunk of sample ids.

    Randomized samples that hit a singular abscissa (non-finite field
    value) are re-run on fresh re-seed lanes up to
    :data:`MAX_RESEED_ATTEMPTS` times; deterministic failures and
    exhausted re-seeds abort.
    """
    m = len(sample_ids)
    u0 = np.tile(problem.u0, (m, 1))
    randomized = method in RANDOMIZED_METHODS
    draws = _draw_matrix(master_seed, sample_ids, grid.n_steps, tag) if randomized else None
    result = _advance_batch(problem.field, u0, grid, method, draws, node_values=node_values)
    errors = result.max_errors
    n_reseeded = 0
    for row in np.nonzero(result.fail_step > 0)[0]:
        sid = sample_ids[int(row)]
        if not (randomized and result.fail_kind[row] == _FAIL_EVAL):
            _raise_sample_failure(problem, method, sid, int(result.fail_step[row]),
                                  int(result.fail_kind[row]), float(result.fail_time[row]))
        recovered = False
        for attempt in range(1, MAX_RESEED_ATTEMPTS + 1):
            stream = derive_stream(master_seed, sid, _lane(tag, attempt))
            redraw = stream.uniform_open(grid.n_steps)[None, :]
            retry = _advance_batch(problem.field, problem.u0[None, :], grid, method,
                                   redraw, node_values=node_values)
            n_reseeded += 1
            logger.warning(
                "singular collision on %r: sample %d re-seeded (attempt %d)",
                problem.name, sid, attempt,
            )
            if retry.fail_step[0] == 0:
                errors[row] = retry.max_errors[0]
                recovered = True
                break
        if not recovered:
            raise ReseedLimitError(
                f"sample {sid} on {problem.name!r} still collides after "
                f"{MAX_RESEED_ATTEMPTS} re-seed attempts"
            )
    return errors, n_reseeded


def _path_errors(
    problem: Problem,
    method: str,
    grid: TimeGrid,
    master_seed: int,
    samples: int,
    tag: int,
    threads: int = 1,
) -> tuple[np.ndarray, int]:
    """Max node errors for samples 0..samples-1, threaded over chunks."""
    node_values = problem.exact_at_nodes(grid)
    if threads <= 1:
        return _path_error_chunk(problem, method, grid, node_values,
                                 master_seed, range(samples), tag)
    bounds = np.linspace(0, samples, threads + 1, dtype=int)
    chunks = [range(int(a), int(b)) for a, b in zip(bounds, bounds[1:]) if b > a]
    errors = np.empty(samples, dtype=np.float64)
    n_reseeded = 0
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(_path_error_chunk, problem, method, grid, node_values,
                        master_seed, chunk, tag)
            for chunk in chunks
        ]
        for chunk, fut in zip(chunks, futures):
            chunk_errors, chunk_reseeded = fut.result()
            errors[chunk.start:chunk.stop] = chunk_errors
            n_reseeded += chunk_reseeded
    return errors, n_reseeded


def _lp_aggregate(errors: np.ndarray, p: float) -> tuple[float, float]:
    """Plug-in L^p estimate and the sample std of the p-th powers mapped
    to the p-th-root scale (delta method)."""
    powered = errors ** p
    mean_pow = float(powered.mean())
    estimate = mean_pow ** (1.0 / p)
    if errors.size < 2 or mean_pow == 0.0:
        return estimate, 0.0
    spread = float(powered.std(ddof=1))
    return estimate, spread * (1.0 / p) * mean_pow ** (1.0 / p - 1.0)


def mc_lp_error(config: ExperimentConfig, h: float) -> tuple[float, float]:
    """L^p estimate of the path-maximum error at one step size.

    Runs ``config.samples`` independent sample paths (stream indices
    0..samples-1) and returns the plug-in p-th moment estimate together
    with its sample spread on the estimate scale. The result does not
    depend on thread count or execution order.
    """
    grid = make_grid(config.final_time(), h)
    problem = config.resolve_problem(grid)
    errors, _ = _path_errors(problem, config.method, grid, config.master_seed,
                             config.samples, _step_lane_tag(h), config.threads)
    return _lp_aggregate(errors, config.p)


def run_convergence(config: ExperimentConfig) -> ConvergenceTable:
    """One table row per exponent n (h = 2^-n), n_min..n_max inclusive.

    Deterministic for a fixed master seed; draws are independent across
    rows."""
    rows = []
    problem_name = None
    for n in config.exponents():
        h = 2.0 ** (-n)
        grid = make_grid(config.final_time(), h)
        problem = config.resolve_problem(grid)
        if problem_name is None:
            problem_name = problem.name
        try:
            error, spread = mc_lp_error(config, h)
        except (EvaluationError, NonFiniteStateError, ReseedLimitError) as exc:
            raise type(exc)(f"at h=2^-{n}: {exc}") from exc
        rows.append(ConvergenceRow(step=h, error=error, sample_std=spread))
    return ConvergenceTable(
        problem=problem_name,
        method=config.method,
        p=config.p,
        samples=config.samples,
        master_seed=config.master_seed,
        rows=tuple(rows),
    )


def fit_loglog(steps: np.ndarray, errors: np.ndarray) -> OrderFit:
    """Ordinary least squares of log2(error) on log2(step)."""
    steps = np.asarray(steps, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if steps.size < 3:
        raise ValueError("need at least 3 rows to fit an order")
    if not (errors > 0.0).all():
        raise ValueError("all errors must be positive for a log-log fit")
    x = np.log2(steps)
    y = np.log2(errors)
    if np.ptp(x) == 0.0:
        raise ValueError("degenerate fit: all step sizes equal")
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    ss_res = float(np.sum(residuals ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r_squared = 1.0 if ss_res < 1e-24 else 0.0
    else:
        r_squared = 1.0 - ss_res / ss_tot
    return OrderFit(slope=float(slope), intercept=float(intercept), r_squared=r_squared)


def fit_order(table: ConvergenceTable) -> OrderFit:
    """Fitted empirical convergence order of a table."""
    return fit_loglog(table.steps(), table.errors())


def as_rate_check(
    config: ExperimentConfig,
    exponent: float,
    epsilon_margin: float = 0.0,
) -> AsRateReport:
    """Pathwise rate compliance along h_n = 2^-n, n_min..n_max.

    Each sample path keeps the same stream at every level (lane 0), so the
    per-path error sequence is the coupled one the almost-sure statement
    concerns. A path violates at level n when its max node error exceeds
    h_n^(exponent - epsilon_margin).
    """
    if epsilon_margin < 0.0:
        raise ValueError("epsilon_margin must be nonnegative")
    levels = list(config.exponents())
    eff = exponent - epsilon_margin
    err_matrix = np.empty((config.samples, len(levels)), dtype=np.float64)
    thresholds = []
    for col, n in enumerate(levels):
        h = 2.0 ** (-n)
        grid = make_grid(config.final_time(), h)
        problem = config.resolve_problem(grid)
        errors, _ = _path_errors(problem, config.method, grid, config.master_seed,
                                 config.samples, tag=0, threads=config.threads)
        err_matrix[:, col] = errors
        thresholds.append(h ** eff)
    thresholds = np.array(thresholds)
    violations = err_matrix > thresholds[None, :]
    counts = violations.sum(axis=0)
    last = np.full(config.samples, -1, dtype=np.int64)
    any_rows = violations.any(axis=1)
    if any_rows.any():
        # index of the last violating column, mapped to its exponent
        reversed_first = violations[any_rows, ::-1].argmax(axis=1)
        last_col = violations.shape[1] - 1 - reversed_first
        last[any_rows] = np.array(levels)[last_col]
    return AsRateReport(
        exponent=exponent,
        epsilon_margin=epsilon_margin,
        levels=tuple(levels),
        steps=tuple(2.0 ** (-n) for n in levels),
        thresholds=tuple(float(t) for t in thresholds),
        violation_counts=tuple(int(c) for c in counts),
        last_violation_level=last,
        n_paths=config.samples,
    )


def error_constants(
    cp: float,
    final_time: float,
    p: float,
    lipschitz_lp_norm: float,
    growth_lp_norm: float,
    sup_u: float,
    gamma: float | None = None,
    lipschitz_const: float | None = None,
    hoelder_const: float | None = None,
    field_origin_norm: float = 0.0,
) -> ConstantReport:
    """Evaluate the closed-form error constants.

    The integrable-regime constant uses the L^p norms of the Lipschitz and
    growth weights; the Hoelder-regime constants use the uniform Lipschitz
    constant, the temporal Hoelder constant, and the exponent ``gamma``
    (with the growth constant max(L, K*T^gamma + |f(0,0)|) formed from
    them). ``sup_u`` is a bound on the exact solution, for instance from
    :func:`apriori_sup_bound`.
    """
    if p < 2.0:
        raise ValueError("p must be at least 2")
    if cp <= 0.0:
        raise ValueError("cp must be positive")
    if final_time <= 0.0:
        raise ValueError("final_time must be positive")
    for name, v in (("lipschitz_lp_norm", lipschitz_lp_norm),
                    ("growth_lp_norm", growth_lp_norm),
                    ("sup_u", sup_u),
                    ("field_origin_norm", field_origin_norm)):
        if v < 0.0:
            raise ValueError(f"{name} must be nonnegative")
    T = float(final_time)
    const_integrable = (
        2.0 ** (1.0 - 1.0 / p)
        * T ** (0.5 - 1.0 / p)
        * growth_lp_norm
        * np.exp((1.0 / p) * (2.0 * T) ** (p - 1.0) * lipschitz_lp_norm ** p)
        * (2.0 * cp + np.sqrt(T) * lipschitz_lp_norm)
        * (1.0 + sup_u)
    )
    const_euler = None
    const_rk2 = None
    wants_hoelder = lipschitz_const is not None or hoelder_const is not None
    if gamma is None:
        if wants_hoelder:
            raise ValueError("gamma is required for the Hoelder-regime constants")
    else:
        if not (0.0 < gamma <= 1.0):
            raise ValueError("gamma must lie in (0, 1]")
        if lipschitz_const is None or hoelder_const is None:
            raise ValueError(
                "Hoelder-regime constants need lipschitz_const and hoelder_const"
            )
        L = float(lipschitz_const)
        K = float(hoelder_const)
        if L < 0.0 or K < 0.0:
            raise ValueError("constants must be nonnegative")
        kbar = max(L, K * T ** gamma + field_origin_norm)
        const_euler = (
            np.exp(L * T)
            * kbar
            * np.sqrt(T)
            * (cp * (2.0 + L * T ** (1.0 - gamma)) + L * np.sqrt(T))
            * (1.0 + sup_u)
        )
        const_rk2 = (
            np.exp(L * (1.0 + L) * T)
            * kbar
            * (cp * np.sqrt(T) + L * T)
            * (2.0 + L * T ** (1.0 - gamma))
            * (1.0 + sup_u)
        )
    return ConstantReport(
        cp=cp,
        final_time=T,
        p=p,
        lipschitz_lp_norm=lipschitz_lp_norm,
        growth_lp_norm=growth_lp_norm,
        sup_u=sup_u,
        gamma=gamma,
        lipschitz_const=lipschitz_const,
        hoelder_const=hoelder_const,
        const_euler_integrable=float(const_integrable),
        const_euler_hoelder=None if const_euler is None else float(const_euler),
        const_rk2_hoelder=None if const_rk2 is None else float(const_rk2),
    )


def apriori_sup_bound(problem: Problem) -> float:
    """A-priori bound on sup |u(t)| from the declared growth data.

    Hoelder regime: (|u0| + kbar*T) * exp(kbar*T) with the uniform growth
    constant; integrable regimes: (|u0| + I) * exp(I) with I the declared
    integral of the growth weight over [0, T].
    """
    u0_norm = float(np.sqrt(np.sum(problem.u0 ** 2)))
    if problem.regime == "hoelder":
        if problem.kbar_const is None:
            raise ValueError(f"problem {problem.name!r} declares no growth constant")
        kt = problem.kbar_const * problem.final_time
        return float((u0_norm + kt) * np.exp(kt))
    if problem.kbar_integral is None:
        raise ValueError(f"problem {problem.name!r} declares no growth integral")
    ki = problem.kbar_integral
    return float((u0_norm + ki) * np.exp(ki))


def adversarial_demo(
    h: float,
    final_time: float = 1.0,
    master_seed: int = 0,
    samples: int = 1000,
) -> AdversarialReport:
    """Classical Euler versus randomized Euler on the grid-indicator field.

    The classical method integrates the constant 1 and ends far from the
    exact zero solution; randomized paths have error exactly 0 unless a
    drawn evaluation time collides with a grid node in floating point, in
    which case the sample is re-seeded and logged.
    """
    grid = make_grid(final_time, h)
    problem = problem_adversarial_indicator(grid)
    node_values = problem.exact_at_nodes(grid)
    tag = _step_lane_tag(h)

    classical = _advance_batch(problem.field, problem.u0[None, :], grid,
                               "classical_euler", None, node_values=node_values)
    randomized, _ = _path_errors(problem, "rand_euler", grid, master_seed,
                                 samples, tag)
    n_reseeded = 0
    for i in np.nonzero(randomized != 0.0)[0]:
        for attempt in range(1, MAX_RESEED_ATTEMPTS + 1):
            stream = derive_stream(master_seed, int(i), _lane(tag, attempt))
            redraw = stream.uniform_open(grid.n_steps)[None, :]
            retry = _advance_batch(problem.field, problem.u0[None, :], grid,
                                   "rand_euler", redraw, node_values=node_values)
            n_reseeded += 1
            logger.warning(
                "indicator collision: sample %d drew a grid node, re-seeded "
                "(attempt %d)", int(i), attempt,
            )
            if retry.max_errors[0] == 0.0:
                randomized[i] = 0.0
                break
    return AdversarialReport(
        step=grid.step,
        classical_error=float(classical.max_errors[0]),
        randomized_errors=randomized,
        n_reseeded=n_reseeded,
    )


def measure_runtime(
    problem: Problem,
    method: str,
    h: float,
    master_seed: int = 0,
    repeats: int = 5,
) -> float:
    """Median wall-clock seconds for one trajectory, after a warm-up run."""
    from .solvers import solve

    grid = make_grid(problem.final_time, h)

    def one_run():
        stream = None
        if method in RANDOMIZED_METHODS:
            stream = derive_stream(master_seed, 0, _lane(_step_lane_tag(h), 0))
        t0 = time.perf_counter()
        solve(problem.field, problem.u0, grid, method, stream)
        return time.perf_counter() - t0

    one_run()  # warm-up
    return float(np.median([one_run() for _ in range(repeats)]))
