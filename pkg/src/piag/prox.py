"""
Regularisers, distance functions and the proximal steps built from them.

The proximal step solves

    x+ = argmin_x  <g, x - x_k> + (1/alpha) D(x_k, x) + h(x)

where D(x_k, .) is the distance measured from the anchor x_k. For the
Euclidean distance this is the classical prox of h at x_k - alpha g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .problem import INF, as_vector

SIMPLEX_TOL = 1e-9  # slack on sum(x) == 1 when testing simplex membership

REGULARIZER_KINDS = ("zero", "l1", "nonneg", "l1_nonneg", "simplex")
DISTANCE_KINDS = ("euclidean", "pnorm", "entropy")


class ProxSolveError(RuntimeError):
    """The iterative inner solve of a proximal step did not converge."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class Regularizer:
    """
    Convex regulariser h.

    kinds: ``zero``; ``l1`` (lam * ||x||_1); ``nonneg`` (indicator of
    x >= 0); ``l1_nonneg`` (lam * ||x||_1 plus the indicator of x >= 0);
    ``simplex`` (indicator of the unit simplex).
    """

    kind: str = "zero"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if not self.lam >= 0:
            raise ValueError("lam must be non-negative")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def l1(cls, lam):
        return cls("l1", float(lam))

    @classmethod
    def nonneg(cls):
        return cls("nonneg")

    @classmethod
    def l1_nonneg(cls, lam):
        return cls("l1_nonneg", float(lam))

    @classmethod
    def simplex(cls):
        return cls("simplex")

    def contains(self, x) -> bool:
        """Whether x lies in the effective domain of h."""
        x = np.asarray(x, dtype=float)
        if self.kind in ("nonneg", "l1_nonneg"):
            return bool(np.all(x >= 0))
        if self.kind == "simplex":
            return bool(np.all(x >= 0) and abs(x.sum() - 1.0) <= SIMPLEX_TOL)
        return True

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if not self.contains(x):
            return INF
        if self.kind in ("l1", "l1_nonneg"):
            return self.lam * float(np.abs(x).sum())
        return 0.0

    def subgradient(self, y) -> np.ndarray:
        """One element of the subdifferential of h at a domain point y."""
        y = np.asarray(y, dtype=float)
        if not self.contains(y):
            raise ValueError("subgradient requested outside the domain of h")
        if self.kind == "l1":
            return self.lam * np.sign(y)
        if self.kind == "l1_nonneg":
            return np.full_like(y, self.lam)
        return np.zeros_like(y)


@dataclass(frozen=True)
class DistanceSpec:
    """
    Distance D(x, y) with constants satisfying, in the l2 norm,

        (mu_omega / 2) ||x - y||^2 <= D(x, y) <= (L_omega / 2) ||x - y||^2.

    ``entropy`` is the relative entropy on the simplex; its upper constant
    only holds when the first argument has every coordinate >= ``floor``,
    hence L_omega = 2 / floor.
    """

    kind: str = "euclidean"
    mu_omega: float = 1.0
    L_omega: float = 1.0
    p: float = 2.0
    floor: float = 0.0

    def __post_init__(self):
        if self.kind not in DISTANCE_KINDS:
            raise ValueError(f"unknown distance kind {self.kind!r}")
        if not 0 < self.mu_omega <= self.L_omega:
            raise ValueError("need 0 < mu_omega <= L_omega")
        if self.kind == "pnorm" and not 1 < self.p <= 2:
            raise ValueError("p must lie in (1, 2]")

    @classmethod
    def euclidean(cls):
        return cls("euclidean", 1.0, 1.0)

    @classmethod
    def pnorm(cls, p, dim):
        """Half squared p-norm for p in (1, 2] on R^dim."""
        return cls("pnorm", 1.0, float(dim) ** (2.0 / p - 1.0), p=float(p))

    @classmethod
    def entropy(cls, floor):
        if not 0 < floor <= 1:
            raise ValueError("floor must lie in (0, 1]")
        return cls("entropy", 1.0, 2.0 / floor, floor=float(floor))

    @property
    def is_bregman(self) -> bool:
        """True when D is generated by a distance-generating function."""
        return self.kind == "euclidean" or (self.kind == "pnorm" and self.p == 2.0) or self.kind == "entropy"


def _check_simplex(x, name, interior):
    if abs(x.sum() - 1.0) > SIMPLEX_TOL or np.any(x < 0):
        raise ValueError(f"{name} must lie in the simplex")
    if interior and np.any(x <= 0):
        raise ValueError(f"{name} must lie in the relative interior of the simplex")


def _pnorm(u, p):
    return float(np.sum(np.abs(u) ** p) ** (1.0 / p))


def distance_eval(D: DistanceSpec, x, y) -> float:
    """
    D(x, y): the generator linearised at `x`, evaluated at `y`.

    For the entropy kind this is sum_i y_i log(y_i / x_i) with 0 log 0 = 0.
    """
    x = as_vector(x)
    y = as_vector(y, x.shape[0], "y")
    if D.kind == "euclidean":
        return 0.5 * float(np.dot(y - x, y - x))
    if D.kind == "pnorm":
        return 0.5 * _pnorm(y - x, D.p) ** 2
    _check_simplex(x, "x", interior=True)
    _check_simplex(y, "y", interior=False)
    pos = y > 0
    return float(np.sum(y[pos] * np.log(y[pos] / x[pos])))


def mirror_map(D: DistanceSpec, x) -> np.ndarray:
    """Gradient of the distance-generating function (Bregman kinds only)."""
    x = as_vector(x)
    if D.kind == "euclidean" or (D.kind == "pnorm" and D.p == 2.0):
        return x.copy()
    if D.kind == "entropy":
        if np.any(x <= 0):
            raise ValueError("entropy mirror map needs strictly positive x")
        return 1.0 + np.log(x)
    raise ValueError("the half squared p-norm with p != 2 has no generating function")


def distance_grad(D: DistanceSpec, anchor, y) -> np.ndarray:
    """Gradient of y -> D(anchor, y)."""
    anchor = as_vector(anchor)
    y = as_vector(y, anchor.shape[0], "y")
    u = y - anchor
    if D.kind == "euclidean":
        return u
    if D.kind == "pnorm":
        r = _pnorm(u, D.p)
        if r == 0.0:
            return np.zeros_like(u)
        return r ** (2.0 - D.p) * np.sign(u) * np.abs(u) ** (D.p - 1.0)
    return np.log(y) - np.log(anchor)


def soft_threshold(v, t: float) -> np.ndarray:
    """sign(v) * max(0, |v| - t), entrywise; |v_i| == t maps to 0."""
    if t < 0:
        raise ValueError("threshold must be non-negative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the unit simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    j = np.arange(1, v.shape[0] + 1)
    rho = np.nonzero(u - css / j > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass(frozen=True)
class ProxProblem:
    anchor: np.ndarray
    gradient: np.ndarray
    stepsize: float
    regularizer: Regularizer = field(default_factory=Regularizer)
    distance: DistanceSpec = field(default_factory=DistanceSpec)

    def __post_init__(self):
        a = as_vector(self.anchor, name="anchor")
        object.__setattr__(self, "anchor", a)
        object.__setattr__(self, "gradient", as_vector(self.gradient, a.shape[0], "gradient"))
        if not self.stepsize > 0:
            raise ValueError("step-size must be positive")

    def objective(self, x) -> float:
        """The function minimised by the step, for checking and brute force."""
        x = np.asarray(x, dtype=float)
        hx = self.regularizer.value(x)
        if hx == INF:
            return INF
        if self.distance.kind == "entropy":
            try:
                d = distance_eval(self.distance, self.anchor, x)
            except ValueError:
                return INF
        else:
            d = distance_eval(self.distance, self.anchor, x)
        return float(self.gradient @ (x - self.anchor)) + d / self.stepsize + hx


def prox_euclidean(p: ProxProblem) -> np.ndarray:
    """Closed-form Euclidean proximal step for every regulariser kind."""
    if p.distance.kind != "euclidean":
        raise ValueError("prox_euclidean needs the Euclidean distance")
    v = p.anchor - p.stepsize * p.gradient
    h = p.regularizer
    if h.kind == "zero":
        return v
    if h.kind == "l1":
        return soft_threshold(v, p.stepsize * h.lam)
    if h.kind == "nonneg":
        return np.maximum(v, 0.0)
    if h.kind == "l1_nonneg":
        return np.maximum(v - p.stepsize * h.lam, 0.0)
    return project_simplex(v)


def prox_general(p: ProxProblem) -> np.ndarray:
    """Proximal step under any supported distance."""
    D = p.distance
    if D.kind == "euclidean":
        return prox_euclidean(p)
    if D.kind == "entropy":
        return _prox_entropy(p)
    if D.p == 2.0:
        return prox_euclidean(ProxProblem(p.anchor, p.gradient, p.stepsize, p.regularizer))
    return _prox_pnorm(p)


def prox_step(x, g, alpha, regularizer, distance) -> np.ndarray:
    return prox_general(ProxProblem(x, g, alpha, regularizer, distance))


def _prox_entropy(p: ProxProblem) -> np.ndarray:
    if p.regularizer.kind not in ("zero", "simplex"):
        raise ValueError("the entropy step supports only h = 0 or the simplex indicator")
    _check_simplex(p.anchor, "anchor", interior=True)
    logits = np.log(p.anchor) - p.stepsize * p.gradient
    w = np.exp(logits - logits.max())
    return w / w.sum()


def _pnorm_displacement(s, q, x0, g, h):
    # minimiser u of g*u + s|u|^p/p + h(x0 + u) per coordinate; q = 1/(p-1)
    def step(a):
        y = -a / s
        return np.sign(y) * np.abs(y) ** q

    if h.kind == "zero":
        return step(g)
    if h.kind == "nonneg":
        return np.maximum(step(g), -x0)
    if h.kind == "l1_nonneg":
        return np.maximum(step(g + h.lam), -x0)
    if h.kind == "l1":
        up, down = step(g + h.lam), step(g - h.lam)
        return np.where(up > -x0, up, np.where(down < -x0, down, -x0))
    raise ValueError("the p-norm step does not support the simplex indicator")


def _prox_pnorm(p: ProxProblem, rtol: float = 1e-10, maxiter: int = 10_000) -> np.ndarray:
    """
    Half squared p-norm step, p in (1, 2).

    With s = ||u||_p^(2-p) / alpha the optimality conditions decouple per
    coordinate; s is the unique root of the increasing function
    t -> t + log(alpha) - (2-p) log ||u(e^t)||_p, found by Brent's method.
    """
    pw, alpha, h = p.distance.p, p.stepsize, p.regularizer
    q = 1.0 / (pw - 1.0)
    x0, g = p.anchor, p.gradient

    def solve(t):
        return _pnorm_displacement(math.exp(t), q, x0, g, h)

    def residual(t):
        r = _pnorm(solve(t), pw)
        if r == 0.0:
            return INF
        return t + math.log(alpha) - (2.0 - pw) * math.log(r)

    t0 = -math.log(alpha)
    # u(s) is identically zero exactly when x0 is already optimal
    if _pnorm(solve(t0), pw) == 0.0:
        return x0.copy()
    lo, hi, width = t0, t0, 1.0
    for _ in range(200):
        if residual(lo) < 0:
            break
        lo -= width
        width *= 2
    width = 1.0
    for _ in range(200):
        if residual(hi) > 0:
            break
        hi += width
        width *= 2
    f_lo, f_hi = residual(lo), residual(hi)
    if not (f_lo < 0 < f_hi):
        raise ProxSolveError("could not bracket the p-norm step scale", min(abs(f_lo), abs(f_hi)))
    t, info = brentq(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=maxiter,
                     full_output=True, disp=False)
    if not info.converged:
        raise ProxSolveError(f"p-norm step scale not found in {maxiter} iterations", abs(residual(t)))
    u = solve(t)
    s = math.exp(t)
    r = _pnorm(u, pw) ** (2.0 - pw)
    err = abs(s * alpha - r) / max(s * alpha, r)
    if err > rtol:
        raise ProxSolveError("p-norm step scale did not converge", err)
    return x0 + u
