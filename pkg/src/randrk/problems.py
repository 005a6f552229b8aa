"""Built-in initial value problems with exact solutions.

Each constructor returns a :class:`Problem` covering one regularity
regime: a time-singular state-independent right-hand side, a piecewise
constant (jump) linear equation, a linear equation with an integrable
singular Lipschitz weight, a manufactured Hoelder-continuous problem, and
the adversarial grid-indicator problem on which every deterministic
left-endpoint method fails.

Fields follow the batch evaluation convention of :mod:`randrk.core`:
``eval(t, x)`` with ``t`` of shape ``(m,)`` and ``x`` of shape ``(m, d)``.
Exact solutions map a time array of shape ``(n,)`` to ``(n, d)``.
Evaluation at an exact singular abscissa yields inf, which the solvers
and quadrature rules convert into an evaluation error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import RegularityMeta, TimeGrid, VectorField, as_state
from .quadrature import Integrand

__all__ = [
    "Problem",
    "REGIMES",
    "problem_singular_time",
    "problem_jump_linear",
    "problem_singular_lipschitz",
    "problem_manufactured_hoelder",
    "problem_adversarial_indicator",
]

REGIMES = ("caratheodory", "hoelder", "adversarial")


@dataclass(frozen=True)
class Problem:
    """An initial value problem together with everything the harness needs.

    ``exact`` is the closed-form solution (or ``None``). ``kbar_integral``
    is the integral over [0, T] of the pointwise growth bound, used by the
    a-priori sup bound in the integrable regimes; ``kbar_const`` is the
    uniform growth constant of the Hoelder regime. ``integrand`` is set
    for state-independent fields so the same right-hand side can be fed
    directly to the quadrature rules. ``singular_times`` lists abscissae
    where evaluation is undefined.
    """

    name: str
    field: VectorField
    u0: np.ndarray
    final_time: float
    exact: Callable[[np.ndarray], np.ndarray] | None
    regime: str
    kbar_integral: float | None = None
    kbar_const: float | None = None
    integrand: Integrand | None = None
    singular_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.final_time <= 0.0:
            raise ValueError("final time must be positive")

    @property
    def dimension(self) -> int:
        return self.u0.shape[0]

    def exact_at_nodes(self, grid: TimeGrid) -> np.ndarray:
        if self.exact is None:
            raise ValueError(f"problem {self.name!r} has no exact solution")
        return np.asarray(self.exact(grid.nodes()), dtype=np.float64)


def _columnize(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)[:, None]


def problem_singular_time(gamma: float, final_time: float) -> Problem:
    """du/dt = (T - t)^(-1/gamma), u(0) = 0, singular at t = T.

    Requires gamma > 1 so the integral converges; the exact solution is
    u(t) = (T^(1-1/gamma) - (T-t)^(1-1/gamma)) / (1 - 1/gamma), which at
    the final time of the unit-interval sweep equals T / (1 - 1/gamma).
    The right-hand side lies in L^p([0,T]) exactly for p < gamma, so the
    declared norms at the reference exponent p = 2 are only finite for
    gamma > 2 and are left unknown at the boundary case gamma = 2.
    """
    if not gamma > 1.0:
        raise ValueError("gamma must exceed 1")
    T = float(final_time)
    if T <= 0.0:
        raise ValueError("final time must be positive")
    ex = -1.0 / gamma
    one_m = 1.0 + ex  # 1 - 1/gamma

    def g(t: np.ndarray) -> np.ndarray:
        return (T - np.asarray(t, dtype=np.float64)) ** ex

    def eval_field(t, x):
        return g(t)[:, None] * np.ones_like(x)

    def exact(t):
        tt = np.asarray(t, dtype=np.float64)
        return _columnize((T ** one_m - (T - tt) ** one_m) / one_m)

    kbar_integral = T ** one_m / one_m
    if gamma > 2.0:
        # L^2 norm of the growth weight: integral of (T-s)^(-2/gamma)
        growth_l2 = float(np.sqrt(T ** (1.0 - 2.0 / gamma) / (1.0 - 2.0 / gamma)))
    else:
        growth_l2 = None
    meta = RegularityMeta(
        p_integrability=2.0,
        lipschitz_lp_norm=0.0,
        growth_lp_norm=growth_l2,
    )
    name = f"singular(gamma={gamma:g})"
    return Problem(
        name=name,
        field=VectorField(eval=eval_field, regularity=meta, label=name),
        u0=as_state(0.0),
        final_time=T,
        exact=exact,
        regime="caratheodory",
        kbar_integral=kbar_integral,
        integrand=Integrand(eval=lambda t: _columnize(g(t)), label=name),
        singular_times=(T,),
    )


def problem_jump_linear(final_time: float) -> Problem:
    """du/dt = g(t) u, u(0) = 1, with g piecewise constant.

    g jumps at T/4, T/2 and 3T/4 and uses the three-valued sign function
    (sign(0) = 0), so g is neither left nor right continuous at the jump
    points; its values there differ from both one-sided limits. The exact
    solution is exp of the piecewise-linear integral of g, with slopes
    (-1, -0.8, -0.4, +1) on the four quarters and u(T) = exp(-0.3 T).
    """
    T = float(final_time)
    if T <= 0.0:
        raise ValueError("final time must be positive")

    def g(t: np.ndarray) -> np.ndarray:
        tt = np.asarray(t, dtype=np.float64)
        return -(
            0.1 * np.sign(0.25 * T - tt)
            + 0.2 * np.sign(0.5 * T - tt)
            + 0.7 * np.sign(0.75 * T - tt)
        )

    def eval_field(t, x):
        return g(t)[:, None] * x

    quarter = 0.25 * T
    breaks = np.array([0.0, quarter, 2 * quarter, 3 * quarter])
    slopes = np.array([-1.0, -0.8, -0.4, 1.0])
    h_at_breaks = np.array([0.0, -quarter, -quarter - 0.8 * quarter,
                            -quarter - 0.8 * quarter - 0.4 * quarter])

    def exact(t):
        tt = np.asarray(t, dtype=np.float64)
        idx = np.clip(np.searchsorted(breaks, tt, side="right") - 1, 0, 3)
        log_u = h_at_breaks[idx] + slopes[idx] * (tt - breaks[idx])
        return _columnize(np.exp(log_u))

    # integral of |g| over the quarters: (1 + 0.8 + 0.4 + 1) * T/4
    kbar_integral = 0.8 * T
    # L^2 norm of |g|: integral of g^2 is (1 + 0.64 + 0.16 + 1) * T/4
    lip_l2 = float(np.sqrt(0.7 * T))
    meta = RegularityMeta(
        p_integrability=2.0,
        lipschitz_lp_norm=lip_l2,
        growth_lp_norm=lip_l2,
    )
    name = "jump"
    return Problem(
        name=name,
        field=VectorField(eval=eval_field, regularity=meta, label=name),
        u0=as_state(1.0),
        final_time=T,
        exact=exact,
        regime="caratheodory",
        kbar_integral=kbar_integral,
    )


def problem_singular_lipschitz(alpha: float, final_time: float) -> Problem:
    """du/dt = |t - T/2|^(-alpha) u, u(0) = 1, singular at t = T/2.

    The Lipschitz weight |t - T/2|^(-alpha) is unbounded but integrable;
    alpha is restricted to (0, 1/2) so the weight lies in L^p for every
    p < 1/alpha, in particular p = 2. The exact solution is exp(H(t)) with
    H the closed-form antiderivative of the weight.
    """
    a = float(alpha)
    if not (0.0 < a < 0.5):
        raise ValueError("alpha must lie in (0, 1/2)")
    T = float(final_time)
    if T <= 0.0:
        raise ValueError("final time must be positive")
    c = 0.5 * T
    one_m = 1.0 - a

    def weight(t: np.ndarray) -> np.ndarray:
        return np.abs(np.asarray(t, dtype=np.float64) - c) ** (-a)

    def eval_field(t, x):
        return weight(t)[:, None] * x

    def antiderivative(t):
        tt = np.asarray(t, dtype=np.float64)
        return (c ** one_m + np.sign(tt - c) * np.abs(tt - c) ** one_m) / one_m

    def exact(t):
        return _columnize(np.exp(antiderivative(t)))

    kbar_integral = 2.0 * c ** one_m / one_m
    lip_l2 = float(np.sqrt(2.0 * c ** (1.0 - 2.0 * a) / (1.0 - 2.0 * a)))
    meta = RegularityMeta(
        p_integrability=2.0,
        lipschitz_lp_norm=lip_l2,
        growth_lp_norm=lip_l2,
    )
    name = f"singular-lip(alpha={a:g})"
    return Problem(
        name=name,
        field=VectorField(eval=eval_field, regularity=meta, label=name),
        u0=as_state(1.0),
        final_time=T,
        exact=exact,
        regime="caratheodory",
        kbar_integral=kbar_integral,
        singular_times=(c,),
    )


def problem_manufactured_hoelder(gamma: float, lam: float, final_time: float) -> Problem:
    """Manufactured problem with Hoelder exponent gamma and coupling lam.

    With v(t) = t^(1+gamma)/(1+gamma) the field is
    f(t, x) = t^gamma + lam * (x - v(t)), so the exact solution is v
    itself. The temporal Hoelder constant is bounded by 1 + |lam| * T and
    the state Lipschitz constant is |lam|. With lam = 0 the field is
    state-independent and the problem reduces to quadrature of t^gamma.
    """
    g = float(gamma)
    if not (0.0 < g <= 1.0):
        raise ValueError("gamma must lie in (0, 1]")
    T = float(final_time)
    if T <= 0.0:
        raise ValueError("final time must be positive")
    lam = float(lam)

    def v(t: np.ndarray) -> np.ndarray:
        tt = np.asarray(t, dtype=np.float64)
        return tt ** (1.0 + g) / (1.0 + g)

    def eval_field(t, x):
        tt = np.asarray(t, dtype=np.float64)
        return (tt ** g)[:, None] + lam * (x - v(tt)[:, None])

    def exact(t):
        return _columnize(v(t))

    lip = abs(lam)
    hoelder_k = 1.0 + abs(lam) * T
    kbar_const = max(lip, hoelder_k * T ** g)  # f(0, 0) = 0
    meta = RegularityMeta(
        p_integrability=2.0,
        lipschitz_lp_norm=lip * T ** 0.5,
        growth_lp_norm=kbar_const * T ** 0.5,
        hoelder_gamma=g,
        lipschitz_const=lip,
        hoelder_const=hoelder_k,
    )
    name = f"manufactured(gamma={g:g}, lambda={lam:g})"
    integrand = None
    if lam == 0.0:
        integrand = Integrand(
            eval=lambda t: _columnize(np.asarray(t, dtype=np.float64) ** g),
            label=name,
        )
    return Problem(
        name=name,
        field=VectorField(eval=eval_field, regularity=meta, label=name),
        u0=as_state(0.0),
        final_time=T,
        exact=exact,
        regime="hoelder",
        kbar_integral=kbar_const * T,
        kbar_const=kbar_const,
        integrand=integrand,
    )


def problem_adversarial_indicator(grid: TimeGrid) -> Problem:
    """Indicator of the grid's own left endpoints as right-hand side.

    The field is 1 exactly on the finite set of left endpoints of the
    supplied grid and 0 elsewhere, so the set has Lebesgue measure zero
    and the exact solution is identically 0. The classical Euler method on
    this grid evaluates only on that set and integrates the constant 1,
    while randomized evaluation points miss the set almost surely.
    """
    endpoints = grid.left_endpoints()

    def indicator(t: np.ndarray) -> np.ndarray:
        tt = np.asarray(t, dtype=np.float64)
        return np.isin(tt, endpoints).astype(np.float64)

    def eval_field(t, x):
        return indicator(t)[:, None] * np.ones_like(x)

    def exact(t):
        return _columnize(np.zeros_like(np.asarray(t, dtype=np.float64)))

    meta = RegularityMeta(
        p_integrability=2.0,
        lipschitz_lp_norm=0.0,
        growth_lp_norm=0.0,
    )
    name = f"adversarial(h={grid.step:g})"
    return Problem(
        name=name,
        field=VectorField(eval=eval_field, regularity=meta, label=name),
        u0=as_state(0.0),
        final_time=grid.final_time,
        exact=exact,
        regime="adversarial",
        kbar_integral=0.0,
        integrand=Integrand(eval=lambda t: _columnize(indicator(t)), label=name),
    )
