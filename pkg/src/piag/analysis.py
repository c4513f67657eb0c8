"""
Step-size rules, convergence envelopes and certification of run histories.

The rate guarantee rests on a sequence lemma: if non-negative V_k, w_k
(with w_k = 0 for k < 0) satisfy

    V_{k+1} <= a V_k - b w_k + c * sum_{j=k-k0}^{k} w_j

and c/(1-a) * (1 - a^(k0+1)) / a^k0 <= b, then V_k <= a^k V_0. Applying it
with a = b = L_w / (mu alpha + L_w), c = alpha L (tau+1) / (mu alpha + L_w)
* L_w / mu_w and k0 = tau gives the closed-form step-size bounds below;
the Euclidean case is mu_w = L_w = 1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .problem import ProblemSpec, as_vector
from .prox import DistanceSpec, Regularizer, prox_euclidean, ProxProblem

ENVELOPE_KINDS = ("euclidean_sq", "bregman")


class ReferenceSolveError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


# -- sequence lemma ---------------------------------------------------------

def lemma1_condition(a, b, c, k0, rtol=0):
    """
    Whether c/(1-a) * (1 - a^(k0+1)) / a^k0 <= b (1 + rtol).

    Works on floats or, for an exact verdict, on `fractions.Fraction`.
    """
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    if b < 0 or c < 0:
        raise ValueError("b and c must be non-negative")
    if int(k0) != k0 or k0 < 0:
        raise ValueError("k0 must be a non-negative integer")
    k0 = int(k0)
    lhs = c / (1 - a) * (1 - a ** (k0 + 1)) / a ** k0
    return lhs <= b * (1 + rtol)


@dataclass(frozen=True)
class Lemma1Instance:
    a: float
    b: float
    c: float
    k0: int
    V: np.ndarray
    w: np.ndarray

    def recurrence_rhs(self, k) -> float:
        lo = max(0, k - self.k0)
        return self.a * self.V[k] - self.b * self.w[k] + self.c * float(np.sum(self.w[lo:k + 1]))


def lemma1_certify(inst: Lemma1Instance, horizon=None, tol=1e-12) -> bool:
    """
    True iff V_k <= a^k V_0 + tol * V_0 for every k <= horizon.

    Raises ValueError if the supplied sequences are negative or violate the
    recurrence (beyond `tol` relative slack), since then the lemma does not
    apply.
    """
    V, w = np.asarray(inst.V, dtype=float), np.asarray(inst.w, dtype=float)
    K = len(V) - 1 if horizon is None else int(horizon)
    if K > len(V) - 1 or len(w) < K:
        raise ValueError("sequences are shorter than the horizon")
    if np.any(V[:K + 1] < 0) or np.any(w[:K] < 0):
        raise ValueError("sequences must be non-negative")
    scale = max(float(V[:K + 1].max()), float(np.max(w[:K], initial=0.0)), 1e-300)
    for k in range(K):
        if V[k + 1] > inst.recurrence_rhs(k) + tol * scale:
            raise ValueError(f"recurrence violated at k={k}")
    env = V[0] * inst.a ** np.arange(K + 1)
    return bool(np.all(V[:K + 1] <= env + tol * V[0]))


def lemma1_sequence(a, b, c, k0, length, rng, slack=0.5) -> Lemma1Instance:
    """
    Random non-negative sequences satisfying the recurrence.

    Each w_k is drawn below the largest value keeping V_{k+1} >= 0; with
    probability `slack` the recurrence is met with a random gap instead of
    with equality.
    """
    V, w = np.zeros(length + 1), np.zeros(length)
    V[0] = rng.uniform(0.1, 10.0)
    for k in range(length):
        past = c * w[max(0, k - k0):k].sum()
        base = a * V[k] + past
        cap = 1e6 * (V[0] + 1.0)
        if (b - c) * cap > base:
            cap = base / (b - c)
        w[k] = rng.uniform(0.0, 1.0) * cap
        rhs = base + (c - b) * w[k]
        gap = rng.uniform(0.0, 1.0) * rhs if rng.uniform() < slack else 0.0
        V[k + 1] = max(rhs - gap, 0.0)
    return Lemma1Instance(a, b, c, k0, V, w)


def lemma1_counterexample(a, b, c, k0, rng, tries=1000, length=None):
    """
    Search for sequences satisfying the recurrence but not V_k <= a^k V_0.

    Returns the first instance found, or None.
    """
    length = length or 2 * k0 + 4
    for _ in range(tries):
        inst = lemma1_sequence(a, b, c, k0, length, rng, slack=0.0)
        if not lemma1_certify(inst):
            return inst
    return None


# -- step-size rules ---------------------------------------------------------

def _check_constants(mu, L, tau, mu_omega=1.0, L_omega=1.0):
    if not mu > 0 or not L >= mu:
        raise ValueError("need mu > 0 and L >= mu")
    if int(tau) != tau or tau < 0:
        raise ValueError("tau must be a non-negative integer")
    if not 0 < mu_omega <= L_omega:
        raise ValueError("need 0 < mu_omega <= L_omega")


def theorem1_max_stepsize(mu, L, tau) -> float:
    """((1 + mu/(L (tau+1)))^(1/(tau+1)) - 1) / mu, via log1p/expm1."""
    _check_constants(mu, L, tau)
    r = mu / (L * (tau + 1))
    return math.expm1(math.log1p(r) / (tau + 1)) / mu


def corollary1_max_stepsize(mu, L, tau, mu_omega, L_omega) -> float:
    """L_w ((1 + mu/(L (tau+1)) mu_w/L_w)^(1/(tau+1)) - 1) / mu."""
    _check_constants(mu, L, tau, mu_omega, L_omega)
    r = mu / (L * (tau + 1)) * (mu_omega / L_omega)
    return L_omega * math.expm1(math.log1p(r) / (tau + 1)) / mu


def max_stepsize(mu, L, tau, distance: DistanceSpec | None = None) -> float:
    if distance is None or distance.kind == "euclidean":
        return theorem1_max_stepsize(mu, L, tau)
    return corollary1_max_stepsize(mu, L, tau, distance.mu_omega, distance.L_omega)


def lemma1_parameters(alpha, mu, L, tau, mu_omega=1, L_omega=1, exact=False):
    """(a, b, c, k0) used in the rate proof for step-size `alpha`."""
    if exact:
        alpha, mu, L, mu_omega, L_omega = map(Fraction, (alpha, mu, L, mu_omega, L_omega))
    denom = mu * alpha + L_omega
    a = L_omega / denom
    c = alpha * L * (tau + 1) / denom * L_omega / mu_omega
    return a, a, c, int(tau)


def max_stepsize_by_bisection(mu, L, tau, mu_omega=1.0, L_omega=1.0) -> float:
    """
    Largest float alpha for which the lemma condition holds under the
    proof's parameter mapping, found by bisection with exact rational
    evaluation of the condition.
    """
    _check_constants(mu, L, tau, mu_omega, L_omega)

    def holds(alpha):
        return lemma1_condition(*lemma1_parameters(alpha, mu, L, tau, mu_omega, L_omega, exact=True))

    hi = 1e3 / mu
    while holds(hi):
        hi *= 2.0
    lo = hi
    while not holds(lo):
        hi, lo = lo, lo / 2.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return lo
        if holds(mid):
            lo = mid
        else:
            hi = mid


# -- envelopes and certification ----------------------------------------------

@dataclass(frozen=True)
class ConvergenceEnvelope:
    """rate^k * v0; `interpretation` says which distance it bounds."""

    rate: float
    v0: float
    interpretation: str = "euclidean_sq"

    def __post_init__(self):
        if not 0 < self.rate < 1:
            raise ValueError("rate must lie in (0, 1)")
        if self.v0 < 0:
            raise ValueError("v0 must be non-negative")
        if self.interpretation not in ENVELOPE_KINDS:
            raise ValueError(f"unknown interpretation {self.interpretation!r}")

    def __call__(self, k):
        return self.v0 * np.power(self.rate, np.asarray(k, dtype=float))


def theorem1_envelope(mu, alpha, v0) -> ConvergenceEnvelope:
    return ConvergenceEnvelope(1.0 / (mu * alpha + 1.0), v0, "euclidean_sq")


def corollary1_envelope(mu, alpha, L_omega, v0) -> ConvergenceEnvelope:
    return ConvergenceEnvelope(L_omega / (mu * alpha + L_omega), v0, "bregman")


def measured_series(history, interpretation):
    return history.errors if interpretation == "euclidean_sq" else history.divergences


def envelope_for(history, mu) -> ConvergenceEnvelope:
    """The envelope matching the run's distance, anchored at its first record."""
    D = history.distance
    if D.kind == "euclidean":
        return theorem1_envelope(mu, history.alpha, float(history.errors[0]))
    return corollary1_envelope(mu, history.alpha, D.L_omega, float(history.divergences[0]))


@dataclass
class CertificationReport:
    k: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    first_violation: int | None
    rtol: float

    @property
    def passed(self) -> bool:
        return self.first_violation is None

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else f"FAIL at k={self.first_violation}"

    @property
    def ok(self) -> np.ndarray:
        return self.measured <= self.bound * (1.0 + self.rtol)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["k", "measured", "envelope", "pass"])
            for k, m, b, ok in zip(self.k, self.measured, self.bound, self.ok):
                out.writerow([int(k), repr(float(m)), repr(float(b)), int(ok)])


def certify_series(k, measured, envelope: ConvergenceEnvelope, rtol=1e-9) -> CertificationReport:
    k = np.asarray(k)
    measured = np.asarray(measured, dtype=float)
    bound = envelope(k)
    bad = np.flatnonzero(~(measured <= bound * (1.0 + rtol)))
    first = int(k[bad[0]]) if bad.size else None
    return CertificationReport(k, measured, bound, first, rtol)


def certify_history(history, envelope: ConvergenceEnvelope, x_ref=None, rtol=1e-9) -> CertificationReport:
    """
    Compare every measured distance to the optimum with the envelope.

    Measurements recorded during the run are used unless `x_ref` is given,
    in which case they are recomputed from the stored iterates.
    """
    if x_ref is not None:
        if history.iterates is None:
            raise ValueError("recomputing against x_ref needs a history with stored iterates")
        from .prox import distance_eval

        x_ref = as_vector(x_ref, history.iterates.shape[1], "x_ref")
        if envelope.interpretation == "euclidean_sq":
            measured = np.sum((history.iterates - x_ref) ** 2, axis=1)
        else:
            measured = np.array([distance_eval(history.distance, x, x_ref) for x in history.iterates])
    elif history.x_ref is None:
        raise ValueError("certification needs a reference optimum")
    else:
        measured = measured_series(history, envelope.interpretation)
    return certify_series(np.arange(measured.shape[0]), measured, envelope, rtol)


# -- reference optimum --------------------------------------------------------

def reference_solve(problem: ProblemSpec, distance=None, tolerance=1e-12, max_iter=2_000_000, x0=None):
    """
    Synchronous Euclidean proximal gradient until ||x_{t+1} - x_t|| <= tolerance.

    The optimum does not depend on the distance used by a run, except that
    the entropy distance confines iterates to the simplex, which is then
    imposed explicitly. The step is 1/L with the tightest smoothness
    constant the components expose.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    h = problem.regularizer
    if distance is not None and distance.kind == "entropy" and h.kind == "zero":
        h = Regularizer.simplex()
    comp = problem.components
    L = comp.aggregate_lipschitz() if hasattr(comp, "aggregate_lipschitz") else problem.lipschitz_sum
    alpha = 1.0 / L
    x = np.zeros(problem.dim) if x0 is None else as_vector(x0, problem.dim, "x0").copy()
    if h.kind == "simplex" and not h.contains(x):
        x = np.full(problem.dim, 1.0 / problem.dim)
    grad = comp.group_oracle(np.arange(problem.n_components))
    res = math.inf
    for _ in range(max_iter):
        x_new = prox_euclidean(ProxProblem(x, grad(x), alpha, h))
        res = float(np.linalg.norm(x_new - x))
        x = x_new
        if res <= tolerance:
            return x
    raise ReferenceSolveError("reference solve hit the iteration cap", res)
