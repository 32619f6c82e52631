"""Gaussian-process Bayesian optimization for the loss-combination weights.

Minimizes a black-box objective over a box with a squared-exponential GP
surrogate and expected improvement, with a quasi-random candidate pool per
iteration and a random-search fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.stats import norm, qmc

from .errors import ConfigError, NumericalError

_JITTER = 1e-8


@dataclass
class TuneSpace:
    names: list
    bounds: list  # (low, high) per dimension
    budget: int = 30
    seed: int = 0

    def __post_init__(self):
        if len(self.names) != len(self.bounds):
            raise ConfigError("names and bounds must have equal length")
        for lo, hi in self.bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"bad bounds ({lo}, {hi})")
        if self.budget < 2 * len(self.names):
            raise ConfigError("budget must be at least 2 * dimension")

    @property
    def dim(self):
        return len(self.names)

    @classmethod
    def default(cls, names, budget=30, seed=0, low=0.0, high=10.0):
        return cls(list(names), [(low, high)] * len(names), budget=budget, seed=seed)


class GPSurrogate:
    """Zero-mean GP regression with a squared-exponential kernel."""

    def __init__(self, X, y, lengthscale=1.0, signal_var=1.0, noise_var=1e-6):
        self.X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        self.y = np.asarray(y, dtype=np.float64)
        self.lengthscale = float(lengthscale)
        self.signal_var = float(signal_var)
        self.noise_var = float(noise_var)
        K = self._kernel(self.X, self.X)
        K[np.diag_indices_from(K)] += self.noise_var + _JITTER
        try:
            self._chol = cho_factor(K, lower=True)
        except LinAlgError as exc:
            raise NumericalError(f"singular kernel matrix: {exc}") from exc
        self._alpha = cho_solve(self._chol, self.y)

    def _kernel(self, A, B):
        d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=-1)
        return self.signal_var * np.exp(-0.5 * d2 / self.lengthscale**2)

    def posterior(self, x):
        """Posterior (mean, variance) at one point or a batch of points."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        k = self._kernel(x, self.X)
        mean = k @ self._alpha
        v = cho_solve(self._chol, k.T)
        var = self.signal_var - (k * v.T).sum(axis=1)
        var = np.maximum(var, 0.0)
        if mean.shape[0] == 1:
            return float(mean[0]), float(var[0])
        return mean, var

    def log_marginal_likelihood(self):
        n = len(self.y)
        logdet = 2.0 * np.log(np.diag(self._chol[0])).sum()
        return float(-0.5 * self.y @ self._alpha - 0.5 * logdet - 0.5 * n * np.log(2 * np.pi))


def gp_posterior(surrogate, x):
    return surrogate.posterior(x)


def expected_improvement(surrogate, x, best, minimize=True):
    """Closed-form EI; for maximization the objective is negated."""
    mean, var = surrogate.posterior(x)
    mean = np.atleast_1d(mean)
    sigma = np.sqrt(np.atleast_1d(var))
    if not minimize:
        mean, best = -mean, -best
    imp = best - mean
    ei = np.zeros_like(mean)
    pos = sigma > 1e-12
    z = imp[pos] / sigma[pos]
    ei[pos] = imp[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    ei[~pos] = np.maximum(imp[~pos], 0.0)
    return float(ei[0]) if ei.shape == (1,) else ei


def _fit_surrogate(X, y, width):
    """Pick SE-kernel hyperparameters by marginal likelihood on a log grid."""
    yc = y - y.mean()
    sv = max(yc.var(), 1e-12)
    best = None
    for ls_frac in (0.05, 0.1, 0.2, 0.5, 1.0, 2.0):
        for sv_scale in (0.5, 1.0, 2.0):
            try:
                g = GPSurrogate(X, yc, lengthscale=ls_frac * width,
                                signal_var=sv_scale * sv, noise_var=1e-6 * sv)
            except NumericalError:
                continue
            lml = g.log_marginal_likelihood()
            if best is None or lml > best[0]:
                best = (lml, g)
    if best is None:
        raise NumericalError("no well-conditioned surrogate found")
    return best[1], y.mean()


def _quasi_random(space, count, rng_seed):
    sampler = qmc.Sobol(d=space.dim, scramble=True, seed=rng_seed)
    unit = sampler.random(count)
    lo = np.array([b[0] for b in space.bounds])
    hi = np.array([b[1] for b in space.bounds])
    return lo + unit * (hi - lo)


def tune(objective, space, penalty=None, method="bo", pool_size=1024):
    """Minimize ``objective`` over the box with GP/EI (or random search).

    Failed evaluations are recorded with a penalty value (default: worst
    observed so far plus one) and tuning continues.

    Returns ``(best_point, best_value, history)``; each history row is a dict
    with iteration index, point, objective value, and incumbent value.
    """
    if method not in ("bo", "random"):
        raise ConfigError(f"unknown tuning method {method!r}")
    d = space.dim
    n_init = 2 * d if method == "bo" else space.budget
    init = _quasi_random(space, max(n_init, 1), space.seed)
    width = float(np.mean([hi - lo for lo, hi in space.bounds]))

    X, y, history = [], [], []
    best_point, best_value = None, np.inf

    def record(i, x):
        nonlocal best_point, best_value
        try:
            val = float(objective(np.asarray(x, dtype=np.float64)))
            if not np.isfinite(val):
                raise ValueError("non-finite objective")
        except Exception:
            val = penalty if penalty is not None else (max(y) + 1.0 if y else 1e6)
        X.append(np.asarray(x, dtype=np.float64))
        y.append(val)
        if val < best_value:
            best_value = val
            best_point = np.asarray(x, dtype=np.float64)
        history.append(
            {"iter": i, "point": np.asarray(x, dtype=np.float64),
             "objective": val, "incumbent": best_value}
        )

    i = 0
    for x in init[: space.budget]:
        record(i, x)
        i += 1
    while i < space.budget:
        if method == "bo":
            surrogate, offset = _fit_surrogate(np.array(X), np.array(y), width)
            pool = _quasi_random(space, pool_size, space.seed + 1000 + i)
            ei = expected_improvement(surrogate, pool, best_value - offset)
            x = pool[int(np.argmax(ei))]
        else:
            x = _quasi_random(space, 1, space.seed + 1000 + i)[0]
        record(i, x)
        i += 1
    return best_point, best_value, history


def save_tune_log(space, history, path):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["iter"] + list(space.names) + ["objective", "incumbent"])
        for row in history:
            w.writerow([row["iter"]] + [f"{v!r}" for v in row["point"]]
                       + [row["objective"], row["incumbent"]])
