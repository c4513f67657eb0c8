"""
Problem model: minimize sum_n f_n(x) + h(x) over x in R^d.

Component functions are grouped into families (toy chain, logistic loss,
quadratics) that share one contract so that workers can evaluate the sum of
gradients over their own index set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

INF = math.inf  # value of h (and hence the objective) outside its domain

GroupOracle = Callable[[np.ndarray], np.ndarray]


def as_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Return `x` as a finite float64 vector, checking its length if `dim` is given."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"{name} has dimension {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


class ComponentFunctions:
    """
    An ordered family of N smooth convex functions f_0, ..., f_{N-1} on R^d.

    Subclasses implement `value` and `gradient` for a single component and
    `lipschitz` for the per-component gradient Lipschitz constants. They
    may override `group_oracle` with a vectorised evaluation; the default
    sums single-component gradients in index order.
    """

    n_components: int
    dim: int

    def value(self, n: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, n: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lipschitz(self) -> np.ndarray:
        raise NotImplementedError

    def total_value(self, x: np.ndarray) -> float:
        return float(sum(self.value(n, x) for n in range(self.n_components)))

    def group_oracle(self, group: Sequence[int]) -> GroupOracle:
        idx = self._check_group(group)

        def oracle(x):
            g = np.zeros(self.dim)
            for n in idx:
                g += self.gradient(int(n), x)
            return g

        return oracle

    def _check_index(self, n: int) -> int:
        if not 0 <= n < self.n_components:
            raise IndexError(f"component index {n} out of range [0, {self.n_components})")
        return int(n)

    def _check_group(self, group) -> np.ndarray:
        idx = np.asarray(group, dtype=int).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_components):
            raise IndexError(f"group has indices outside [0, {self.n_components})")
        return idx


class QuadraticComponents(ComponentFunctions):
    """f_n(x) = 1/2 x^T H_n x - b_n^T x with symmetric positive semidefinite H_n."""

    def __init__(self, hessians, offsets):
        self.hessians = [np.array(H, dtype=float) for H in hessians]
        self.offsets = [np.array(b, dtype=float) for b in offsets]
        if len(self.hessians) != len(self.offsets) or not self.hessians:
            raise ValueError("need the same positive number of Hessians and offsets")
        self.n_components = len(self.hessians)
        self.dim = self.offsets[0].shape[0]
        for H, b in zip(self.hessians, self.offsets):
            if H.shape != (self.dim, self.dim) or b.shape != (self.dim,):
                raise ValueError("inconsistent quadratic component shapes")
            if not np.allclose(H, H.T):
                raise ValueError("Hessians must be symmetric")

    def value(self, n, x):
        n = self._check_index(n)
        return float(0.5 * x @ self.hessians[n] @ x - self.offsets[n] @ x)

    def gradient(self, n, x):
        n = self._check_index(n)
        return self.hessians[n] @ x - self.offsets[n]

    def lipschitz(self):
        return np.array([np.linalg.eigvalsh(H).max() for H in self.hessians])

    def strong_convexity(self) -> float:
        return float(np.linalg.eigvalsh(sum(self.hessians)).min())

    def minimizer(self) -> np.ndarray:
        """Unconstrained minimiser of the sum, by a direct linear solve."""
        return np.linalg.solve(sum(self.hessians), sum(self.offsets))


@dataclass(frozen=True)
class Partition:
    """Disjoint index sets N_w, one per worker, covering {0, ..., N-1}."""

    groups: tuple

    def __post_init__(self):
        groups = tuple(np.sort(np.asarray(g, dtype=int).reshape(-1)) for g in self.groups)
        if not groups:
            raise ValueError("a partition needs at least one group")
        object.__setattr__(self, "groups", groups)

    @property
    def n_workers(self) -> int:
        return len(self.groups)

    def validate(self, n_components: int) -> None:
        allidx = np.concatenate(self.groups)
        if allidx.size != n_components or not np.array_equal(np.sort(allidx), np.arange(n_components)):
            raise ValueError(
                f"partition must cover each of the {n_components} components exactly once"
            )

    @classmethod
    def contiguous(cls, n_components: int, n_workers: int) -> "Partition":
        """Split 0..N-1 into `n_workers` contiguous blocks of near-equal size."""
        if not 1 <= n_workers <= n_components:
            raise ValueError("need 1 <= n_workers <= n_components")
        return cls(tuple(np.array_split(np.arange(n_components), n_workers)))


@dataclass(frozen=True)
class ProblemSpec:
    """
    Components, regulariser and the curvature constants of the smooth part.

    `mu` is the strong-convexity modulus of F = sum_n f_n and
    `per_component_lipschitz` holds the L_n; `lipschitz_sum` must equal
    their sum.
    """

    components: ComponentFunctions
    regularizer: object
    mu: float
    lipschitz_sum: float
    per_component_lipschitz: np.ndarray = field(repr=False)

    def __post_init__(self):
        Ln = np.asarray(self.per_component_lipschitz, dtype=float).reshape(-1)
        object.__setattr__(self, "per_component_lipschitz", Ln)
        if self.components.n_components < 1:
            raise ValueError("need at least one component")
        if Ln.shape[0] != self.components.n_components:
            raise ValueError("one Lipschitz constant per component is required")
        if not (self.mu > 0 and self.lipschitz_sum > 0):
            raise ValueError("mu and the Lipschitz sum must be positive")
        if self.mu > self.lipschitz_sum:
            raise ValueError(f"mu={self.mu} exceeds L={self.lipschitz_sum}")
        if not math.isclose(Ln.sum(), self.lipschitz_sum, rel_tol=1e-12):
            raise ValueError("lipschitz_sum must equal the sum of the per-component constants")

    @classmethod
    def from_components(cls, components, regularizer, mu) -> "ProblemSpec":
        Ln = components.lipschitz()
        return cls(components, regularizer, float(mu), float(Ln.sum()), Ln)

    @property
    def n_components(self) -> int:
        return self.components.n_components

    @property
    def dim(self) -> int:
        return self.components.dim


def partial_gradient(problem: ProblemSpec, group, x) -> np.ndarray:
    """Exact sum of component gradients over `group` (empty group gives zero)."""
    x = as_vector(x, problem.dim)
    return problem.components.group_oracle(group)(x)


def full_gradient(problem: ProblemSpec, x) -> np.ndarray:
    """Gradient of F at x, summed over all components without staleness."""
    return partial_gradient(problem, np.arange(problem.n_components), x)


def objective(problem: ProblemSpec, x) -> float:
    """F(x) + h(x); `INF` when x lies outside the domain of h."""
    x = as_vector(x, problem.dim)
    hx = problem.regularizer.value(x)
    if hx == INF:
        return INF
    return problem.components.total_value(x) + hx
