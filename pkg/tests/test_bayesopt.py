import csv
import warnings

import numpy as np
import pytest
from scipy.stats import norm

from softhorn.bayesopt import (
    GPSurrogate,
    TuneSpace,
    expected_improvement,
    gp_posterior,
    save_tune_log,
    tune,
)
from softhorn.errors import ConfigError


def _quiet_tune(*args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # Sobol power-of-two note
        return tune(*args, **kwargs)


class TestTuneSpace:
    def test_budget_floor(self):
        with pytest.raises(ConfigError):
            TuneSpace(["a", "b"], [(0, 1), (0, 1)], budget=3)

    def test_bad_bounds(self):
        with pytest.raises(ConfigError):
            TuneSpace(["a"], [(1.0, 1.0)])
        with pytest.raises(ConfigError):
            TuneSpace(["a"], [(0.0, np.inf)])

    def test_mismatched_names(self):
        with pytest.raises(ConfigError):
            TuneSpace(["a"], [(0, 1), (0, 1)])

    def test_default_box(self):
        s = TuneSpace.default(["w1", "w2"], budget=10)
        assert s.bounds == [(0.0, 10.0), (0.0, 10.0)]


class TestGPSurrogate:
    def test_interpolates_training_points(self):
        X = np.array([[0.0], [0.5], [1.0]])
        y = np.array([1.0, -2.0, 0.3])
        g = GPSurrogate(X, y, lengthscale=0.3, signal_var=2.0, noise_var=0.0)
        for xi, yi in zip(X, y):
            mean, var = g.posterior(xi)
            assert mean == pytest.approx(yi, abs=1e-5)
            assert var <= 1e-6  # only the conditioning jitter remains

    def test_reverts_to_prior_far_away(self):
        g = GPSurrogate([[0.0]], [3.0], lengthscale=0.1, signal_var=1.5)
        mean, var = g.posterior([100.0])
        assert abs(mean) < 1e-9
        assert var == pytest.approx(1.5, abs=1e-9)

    def test_posterior_matches_direct_solve(self):
        # independent hand-coded kernel solve for {(0,0),(1,1)}, query 0.5
        ls, sv, nv = 1.0, 1.0, 1e-6
        X = np.array([0.0, 1.0])
        y = np.array([0.0, 1.0])
        k = lambda a, b: sv * np.exp(-0.5 * (a - b) ** 2 / ls**2)
        K = k(X[:, None], X[None, :]) + (nv + 1e-8) * np.eye(2)
        kstar = k(0.5, X)
        direct_mean = kstar @ np.linalg.solve(K, y)
        direct_var = sv - kstar @ np.linalg.solve(K, kstar)

        g = GPSurrogate(X[:, None], y, lengthscale=ls, signal_var=sv, noise_var=nv)
        mean, var = gp_posterior(g, [0.5])
        assert mean == pytest.approx(direct_mean, abs=1e-9)
        assert var == pytest.approx(direct_var, abs=1e-9)

    def test_variance_nonnegative(self, rng):
        X = rng.uniform(0, 1, (8, 2))
        y = rng.normal(size=8)
        g = GPSurrogate(X, y, lengthscale=0.2)
        _, var = g.posterior(rng.uniform(0, 1, (64, 2)))
        assert np.all(var >= 0)


class TestExpectedImprovement:
    def test_zero_at_observed_best(self):
        g = GPSurrogate([[0.0]], [1.0], noise_var=0.0)
        # residual jitter leaves sigma ~1e-4, bounding EI by sigma*pdf(0)
        assert expected_improvement(g, [0.0], best=1.0) <= 1e-4

    def test_monotone_in_sigma(self):
        # same mean gap, increasing posterior sigma -> EI non-decreasing
        g_tight = GPSurrogate([[0.0]], [0.0], lengthscale=10.0, noise_var=0.0)
        g_loose = GPSurrogate([[0.0]], [0.0], lengthscale=0.05, noise_var=0.0)
        x = [0.2]
        assert expected_improvement(g_loose, x, best=0.0) >= \
            expected_improvement(g_tight, x, best=0.0)

    def test_closed_form_value(self):
        # mean = best - 1, sigma = 1 -> EI = 1*Phi(1) + phi(1)
        g = GPSurrogate([[0.0]], [-1.0], lengthscale=0.01,
                        signal_var=1.0, noise_var=0.0)
        # far from data: mean -> 0, sigma -> 1; best = 1 gives imp = 1
        ei = expected_improvement(g, [50.0], best=1.0)
        expected = 1.0 * norm.cdf(1.0) + norm.pdf(1.0)
        assert ei == pytest.approx(expected, abs=1e-9)
        assert ei == pytest.approx(1.0833, abs=5e-4)

    def test_monte_carlo_cross_check(self, rng):
        samples = rng.normal(loc=0.0, scale=1.0, size=200_000)
        mc = np.maximum(1.0 - samples, 0.0).mean()
        expected = 1.0 * norm.cdf(1.0) + norm.pdf(1.0)
        assert mc == pytest.approx(expected, abs=0.01)


class TestTune:
    QUAD = staticmethod(lambda w: float((w[0] - 0.3) ** 2))

    def _space(self, seed=0, budget=25):
        return TuneSpace(["w"], [(0.0, 1.0)], budget=budget, seed=seed)

    def test_finds_quadratic_minimum(self):
        best, value, history = _quiet_tune(self.QUAD, self._space())
        assert abs(best[0] - 0.3) < 0.05
        assert len(history) == 25

    def test_incumbent_monotone_and_in_bounds(self):
        _, _, history = _quiet_tune(self.QUAD, self._space(seed=3))
        inc = [r["incumbent"] for r in history]
        assert all(b <= a for a, b in zip(inc, inc[1:]))
        assert all(0.0 <= r["point"][0] <= 1.0 for r in history)

    def test_reproducible_under_seed(self):
        a = _quiet_tune(self.QUAD, self._space(seed=9))
        b = _quiet_tune(self.QUAD, self._space(seed=9))
        assert np.array_equal(a[0], b[0])
        assert [r["objective"] for r in a[2]] == [r["objective"] for r in b[2]]

    def test_constant_objective(self):
        best, value, history = _quiet_tune(lambda w: 4.2, self._space(budget=6))
        assert value == 4.2
        assert all(r["incumbent"] == 4.2 for r in history)

    def test_objective_failure_records_penalty_and_continues(self):
        calls = {"n": 0}

        def sometimes_fails(w):
            calls["n"] += 1
            if calls["n"] == 2:
                raise RuntimeError("boom")
            return self.QUAD(w)

        best, value, history = _quiet_tune(
            sometimes_fails, self._space(budget=10), penalty=99.0)
        assert len(history) == 10
        assert any(r["objective"] == 99.0 for r in history)
        assert value < 99.0

    def test_random_method(self):
        best, value, history = _quiet_tune(
            self.QUAD, self._space(seed=1), method="random")
        assert len(history) == 25
        assert value == min(r["objective"] for r in history)

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            tune(self.QUAD, self._space(), method="grid")

    def test_save_tune_log(self, tmp_path):
        space = self._space(budget=5)
        _, _, history = _quiet_tune(self.QUAD, space)
        path = tmp_path / "tune_log.csv"
        save_tune_log(space, history, path)
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 5
        assert list(rows[0]) == ["iter", "w", "objective", "incumbent"]
