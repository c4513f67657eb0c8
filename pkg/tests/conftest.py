import itertools

import numpy as np
import pytest

from piag.dataio import synth_dataset
from piag.losses import logistic_problem, toy_problem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy():
    return toy_problem(100, 3.0, 1.0)


@pytest.fixture(scope="session")
def small_logistic():
    ds = synth_dataset(60, 5, density=0.6, noise=0.1, seed=7)
    return logistic_problem(ds.features, ds.labels, 1e-3, 1e-2)


def central_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


# -- brute-force prox oracle --------------------------------------------------
# Written from the definitions, independently of piag.prox.

def _reg_values(kind, lam, X):
    if kind == "zero":
        return np.zeros(len(X))
    if kind == "l1":
        return lam * np.abs(X).sum(axis=1)
    feasible = np.all(X >= 0, axis=1)
    if kind == "nonneg":
        return np.where(feasible, 0.0, np.inf)
    if kind == "l1_nonneg":
        return np.where(feasible, lam * X.sum(axis=1), np.inf)
    raise ValueError(kind)


def _dist_values(kind, p, x0, X):
    U = X - x0
    if kind == "euclidean":
        return 0.5 * (U * U).sum(axis=1)
    if kind == "pnorm":
        return 0.5 * (np.abs(U) ** p).sum(axis=1) ** (2.0 / p)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(X > 0, X * np.log(X / x0), 0.0)
    return terms.sum(axis=1)


def prox_objective(x0, g, alpha, reg_kind, lam, dist_kind, p=2.0):
    """Vectorised objective <g, x - x0> + D(x0, x)/alpha + h(x) over rows of X."""

    def f(X):
        return X @ g - x0 @ g + _dist_values(dist_kind, p, x0, X) / alpha + _reg_values(reg_kind, lam, X)

    return f


def zoom_minimize(f, centre, radius, rounds=60, m=10, shrink=0.5):
    """
    Minimise f over R^d by repeated grid search on a shrinking box around
    the best point found; the box halves each round.
    """
    d = centre.shape[0]
    best = np.array(centre, dtype=float)
    offs = np.array(list(itertools.product(np.linspace(-1, 1, 2 * m + 1), repeat=d)))
    for _ in range(rounds):
        X = best + radius * offs
        vals = f(X)
        i = int(np.argmin(vals))
        if np.isfinite(vals[i]):
            best = X[i]
        radius *= shrink
    return best


def zoom_minimize_simplex(f, d, rounds=60, m=10, shrink=0.5):
    """Same search on the unit simplex, parametrised by its first d - 1 coordinates."""

    def lifted(Y):
        last = 1.0 - Y.sum(axis=1, keepdims=True)
        X = np.hstack([Y, last])
        vals = f(np.clip(X, 0.0, None))
        return np.where(np.all(X >= 0, axis=1), vals, np.inf)

    y = zoom_minimize(lifted, np.full(d - 1, 1.0 / d), 1.0, rounds, m, shrink)
    return np.append(y, 1.0 - y.sum())
