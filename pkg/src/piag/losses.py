"""
Concrete component families: the piecewise quadratic chain used for the
toy experiment and the l2-regularised logistic loss.

Component indices are 0-based throughout.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

from .problem import ComponentFunctions, ProblemSpec, partial_gradient  # noqa: F401
from .prox import Regularizer


class ToyChain(ComponentFunctions):
    """
    Chain of N coupled quadratics on R^N with offset c >= 0.

    f_0(x)     = (x_0 - c)^2 + 1/2 (x_1 + c)^2
    f_n(x)     = 1/2 (x_{n-1} + c)^2 + 1/2 (x_n - c)^2 + 1/2 (x_{n+1} + c)^2
    f_{N-1}(x) = 1/2 (x_{N-2} + c)^2 + 1/2 (x_{N-1} - c)^2

    Every f_n is a separable quadratic sum_j w_j/2 (x_j - m_j)^2, stored as
    a short list of (coordinate, weight, centre) triples.
    """

    mu = 2.0

    def __init__(self, n_components: int, c: float):
        if n_components < 2:
            raise ValueError("the chain needs at least two components")
        if c < 0:
            raise ValueError("c must be non-negative")
        self.n_components = self.dim = int(n_components)
        self.c = float(c)
        N = self.n_components
        self._terms = []
        for n in range(N):
            terms = []
            if n > 0:
                terms.append((n - 1, 1.0, -c))
            terms.append((n, 2.0 if n == 0 else 1.0, c))
            if n < N - 1:
                terms.append((n + 1, 1.0, -c))
            self._terms.append(terms)
        self._full = self._curvature(range(N))
        self._const = sum(0.5 * w * m * m for t in self._terms for _, w, m in t)

    def value(self, n, x):
        n = self._check_index(n)
        return float(sum(0.5 * w * (x[j] - m) ** 2 for j, w, m in self._terms[n]))

    def gradient(self, n, x):
        n = self._check_index(n)
        g = np.zeros(self.dim)
        for j, w, m in self._terms[n]:
            g[j] = w * (x[j] - m)
        return g

    def lipschitz(self):
        return np.array([max(w for _, w, _ in t) for t in self._terms])

    def total_value(self, x):
        # sum_n f_n = 1/2 sum_j a_j x_j^2 - sum_j b_j x_j + const
        a, b = self._full
        return float(0.5 * np.dot(a * x, x) - np.dot(b, x) + self._const)

    def group_oracle(self, group):
        a, b = self._curvature(self._check_group(group))
        return lambda x: a * x - b

    def _curvature(self, idx):
        a, b = np.zeros(self.dim), np.zeros(self.dim)
        for n in idx:
            for j, w, m in self._terms[int(n)]:
                a[j] += w
                b[j] += w * m
        return a, b


def toy_optimum(chain: ToyChain, lambda1: float) -> np.ndarray:
    """Minimiser of the chain plus lambda1 ||x||_1 over x >= 0."""
    if lambda1 < 0:
        raise ValueError("lambda1 must be non-negative")
    x = np.zeros(chain.dim)
    x[0] = max(0.0, chain.c - lambda1) / 3.0
    return x


def toy_problem(n_components=100, c=3.0, lambda1=1.0) -> ProblemSpec:
    chain = ToyChain(n_components, c)
    return ProblemSpec.from_components(chain, Regularizer.l1_nonneg(lambda1), ToyChain.mu)


def sigmoid(t):
    """Logistic sigmoid, evaluated on the branch that cannot overflow."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class LogisticLoss(ComponentFunctions):
    """
    f_n(x) = (1/N) (log(1 + exp(-b_n <a_n, x>)) + lambda2/2 ||x||^2)

    `features` is an N x d sparse matrix whose rows are the a_n and
    `labels` holds b_n in {-1, +1}.
    """

    def __init__(self, features, labels, lambda2: float):
        self.A = sp.csr_matrix(features, dtype=float)
        self.b = np.asarray(labels, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("one label per sample is required")
        if not np.all(np.isin(self.b, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if not lambda2 > 0:
            raise ValueError("lambda2 must be positive")
        self.n_components, self.dim = self.A.shape
        self.lambda2 = float(lambda2)
        self._row_sq = np.asarray(self.A.multiply(self.A).sum(axis=1)).reshape(-1)

    def _margin(self, n, x):
        row = self.A.getrow(n)
        return self.b[n] * float((row @ x)[0]), row

    def value(self, n, x):
        n = self._check_index(n)
        m, _ = self._margin(n, x)
        return (float(np.logaddexp(0.0, -m)) + 0.5 * self.lambda2 * float(x @ x)) / self.n_components

    def gradient(self, n, x):
        n = self._check_index(n)
        m, row = self._margin(n, x)
        coef = -self.b[n] * sigmoid(np.array([-m]))[0]
        g = self.lambda2 * x + coef * row.toarray().reshape(-1)
        return g / self.n_components

    def total_value(self, x):
        m = self.b * (self.A @ x)
        return float(np.logaddexp(0.0, -m).sum()) / self.n_components + 0.5 * self.lambda2 * float(x @ x)

    def group_oracle(self, group):
        idx = self._check_group(group)
        A, b = self.A[idx], self.b[idx]
        scale = idx.size * self.lambda2
        N = self.n_components

        def oracle(x):
            coef = -b * sigmoid(-b * (A @ x))
            return (A.T @ coef + scale * x) / N

        return oracle

    def lipschitz(self):
        return (0.25 * self._row_sq + self.lambda2) / self.n_components

    def aggregate_lipschitz(self) -> float:
        """||A||_2^2 / (4N) + lambda2: the smoothness of F itself, at most sum(L_n)."""
        if min(self.A.shape) > 1:
            sigma = svds(self.A, k=1, return_singular_vectors=False)[0]
        else:
            sigma = np.linalg.norm(self.A.toarray(), 2)
        return float(sigma) ** 2 / (4.0 * self.n_components) + self.lambda2


def logistic_problem(features, labels, lambda1=1e-5, lambda2=1e-4) -> ProblemSpec:
    loss = LogisticLoss(features, labels, lambda2)
    return ProblemSpec.from_components(loss, Regularizer.l1(lambda1), lambda2)
