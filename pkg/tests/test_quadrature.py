import numpy as np
import pytest

from randrk.core import EvaluationError, derive_stream, make_grid
from randrk.harness import fit_loglog
from randrk.problems import problem_manufactured_hoelder, problem_singular_time
from randrk.quadrature import (
    Integrand,
    left_riemann,
    quad_error_max,
    randomized_riemann,
)

CONSTANT_ONE = Integrand(lambda t: np.ones_like(np.asarray(t))[:, None], "one")
IDENTITY = Integrand(lambda t: np.asarray(t, dtype=np.float64)[:, None], "t")


def l2_max_prefix_error(g, true_integral, T, h, samples, seed):
    """Monte Carlo estimate of the L2 norm of the max prefix deviation."""
    grid = make_grid(T, h)
    lane = int(round(-np.log2(h)))
    errs = np.empty(samples)
    for m in range(samples):
        q = randomized_riemann(g, grid, derive_stream(seed, m, lane=lane))
        errs[m] = quad_error_max(q, true_integral)
    return float(np.sqrt(np.mean(errs**2)))


class TestRandomizedRiemann:
    def test_constant_integrand_is_exact(self):
        grid = make_grid(1.0, 0.25)
        q = randomized_riemann(CONSTANT_ONE, grid, derive_stream(0, 0))
        assert q.final[0] == 1.0
        np.testing.assert_array_equal(q.partials[:, 0], [0.25, 0.5, 0.75, 1.0])

    def test_midpoint_draws_exact_for_linear(self, stub_stream):
        grid = make_grid(1.0, 0.5)
        q = randomized_riemann(IDENTITY, grid, stub_stream([0.5, 0.5]))
        assert q.partials[1, 0] == 0.5  # = integral of t over [0, 1]
        assert q.partials[0, 0] == 0.125

    def test_consumes_exactly_n_draws(self):
        grid = make_grid(1.0, 2.0 ** -6)
        stream = derive_stream(1, 2)
        q = randomized_riemann(IDENTITY, grid, stream)
        assert q.draws.shape == (64,)
        assert stream.counter >= 64

    def test_singular_mean_is_unbiased(self):
        # integral of (1-t)^(-1/2) over [0,1] is 2; 4-sigma band over 1000 streams
        prob = problem_singular_time(2.0, 1.0)
        grid = make_grid(1.0, 2.0 ** -6)
        finals = np.array([
            randomized_riemann(prob.integrand, grid, derive_stream(3, m)).final[0]
            for m in range(1000)
        ])
        band = 4.0 * finals.std(ddof=1) / np.sqrt(1000)
        assert abs(finals.mean() - 2.0) <= band

    def test_nonfinite_value_aborts(self):
        trap = Integrand(
            lambda t: np.where(np.asarray(t) > 0.9, np.inf, 1.0)[:, None], "trap"
        )
        grid = make_grid(1.0, 0.5)
        with pytest.raises(EvaluationError) as err:
            randomized_riemann(trap, grid, StubHigh())
        assert err.value.step == 2

    def test_prefix_consistency_bit_exact(self):
        grid = make_grid(1.0, 2.0 ** -5)
        prob = problem_singular_time(3.0, 1.0)
        q = randomized_riemann(prob.integrand, grid, derive_stream(9, 4))
        # recompute from the recorded draws
        times = grid.left_endpoints() + grid.step * q.draws
        vals = prob.integrand(times)
        np.testing.assert_array_equal(np.cumsum(grid.step * vals, axis=0), q.partials)
        # each prefix is the previous one plus its cell term
        for n in range(1, grid.n_steps):
            assert q.partials[n, 0] == q.partials[n - 1, 0] + grid.step * vals[n, 0]


class StubHigh:
    """One draw below, one above the 0.9 trap threshold."""

    def uniform_open(self, n):
        return np.array([0.2, 0.95])[:n]


class TestLeftRiemann:
    def test_constant(self):
        grid = make_grid(1.0, 0.25)
        q = left_riemann(Integrand(lambda t: 3.0 * np.ones_like(t)[:, None], "c"), grid)
        np.testing.assert_allclose(q.partials[:, 0], 3.0 * 0.25 * np.arange(1, 5))

    def test_linear_bias(self):
        q = left_riemann(IDENTITY, make_grid(1.0, 0.5))
        assert q.partials[1, 0] == 0.25  # true value 0.5, bias h/2

    def test_indicator_of_grid_nodes(self):
        # the deterministic rule integrates 1 although the set has measure zero
        grid = make_grid(1.0, 1.0 / 16.0)
        nodes = grid.left_endpoints()
        ind = Integrand(lambda t: np.isin(t, nodes).astype(float)[:, None], "ind")
        q = left_riemann(ind, grid)
        assert q.final[0] == 1.0


class TestQuadErrorMax:
    def test_constant_zero_error(self):
        grid = make_grid(1.0, 0.25)
        q = randomized_riemann(CONSTANT_ONE, grid, derive_stream(0, 5))
        assert quad_error_max(q, lambda t: np.asarray(t)[:, None]) == 0.0

    def test_midpoint_zero_error(self, stub_stream):
        q = randomized_riemann(IDENTITY, make_grid(1.0, 0.5), stub_stream([0.5, 0.5]))
        assert quad_error_max(q, lambda t: (np.asarray(t) ** 2 / 2.0)[:, None]) == 0.0

    def test_left_endpoint_error(self):
        # hand evaluation: prefixes (0, 0.25); true (0.125, 0.5)
        q = left_riemann(IDENTITY, make_grid(1.0, 0.5))
        err = quad_error_max(q, lambda t: (np.asarray(t) ** 2 / 2.0)[:, None])
        assert err == 0.25


class TestStatisticalProperties:
    @pytest.mark.parametrize("g,true_final", [
        (CONSTANT_ONE, 1.0),
        (Integrand(lambda t: np.cos(t)[:, None], "cos"), np.sin(1.0)),
        (problem_manufactured_hoelder(0.5, 0.0, 1.0).integrand, 1.0 / 1.5),
    ])
    def test_unbiased_over_2000_streams(self, g, true_final):
        grid = make_grid(1.0, 2.0 ** -5)
        finals = np.array([
            randomized_riemann(g, grid, derive_stream(17, m)).final[0]
            for m in range(2000)
        ])
        spread = finals.std(ddof=1)
        band = max(4.0 * spread / np.sqrt(2000), 1e-15)
        assert abs(finals.mean() - true_final) <= band

    def test_hoelder_rate_for_cosine(self):
        g = Integrand(lambda t: np.cos(t)[:, None], "cos")
        truth = lambda t: np.sin(t)[:, None]
        hs = np.array([2.0 ** -n for n in range(4, 11)])
        errs = np.array([l2_max_prefix_error(g, truth, 1.0, h, 1000, 42) for h in hs])
        slope = fit_loglog(hs, errs).slope
        assert 1.3 <= slope <= 1.7  # theoretical 3/2 for a smooth integrand

    def test_integrable_rate_for_singular(self):
        prob = problem_singular_time(2.0, 1.0)
        hs = np.array([2.0 ** -n for n in range(4, 11)])
        errs = np.array([
            l2_max_prefix_error(prob.integrand, prob.exact, 1.0, h, 1000, 42)
            for h in hs
        ])
        slope = fit_loglog(hs, errs).slope
        assert 0.40 <= slope <= 0.70
