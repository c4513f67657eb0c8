"""
Deterministic simulation of the parameter-server master and its workers.

The master owns the iterate and one gradient slot per worker. At every
tick a delay model picks the set R of workers whose gradients arrive; each
of them returns the partial gradient of its data evaluated at the iterate
it was last sent, the remaining slots are reused as they are, and a
proximal step is taken with the sum of all slots.

Two notions of delay are tracked:

* the *staleness* of a slot, ``k - v`` where ``v`` is the version of the
  iterate behind the slot, recorded for every worker at every aggregation;
* the *delay* of a returned gradient, which is the staleness of its slot at
  the tick it arrives. Delay statistics and ``observed_max_delay`` use this
  quantity, measured per returned message.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problem import Partition, ProblemSpec, as_vector
from .prox import DistanceSpec, distance_eval, prox_step


@dataclass(frozen=True)
class UniformSingle:
    """One worker, drawn uniformly at random, returns at every tick."""

    seed: int = 0

    def selector(self, n_workers):
        rng = np.random.default_rng(self.seed)
        return lambda k, pending: (int(rng.integers(n_workers)),)


@dataclass(frozen=True)
class RoundRobin:
    """Worker k mod W returns at tick k."""

    def selector(self, n_workers):
        return lambda k, pending: (k % n_workers,)


@dataclass(frozen=True)
class BoundedUniform:
    """
    Uniform single returns, except that every worker whose pending delay has
    reached `tau_bar` is forced to return, so no returned gradient is ever
    more than `tau_bar` iterations old.
    """

    tau_bar: int
    seed: int = 0

    def __post_init__(self):
        if self.tau_bar < 0:
            raise ValueError("tau_bar must be non-negative")

    def selector(self, n_workers):
        rng = np.random.default_rng(self.seed)

        def select(k, pending):
            forced = tuple(int(w) for w in np.flatnonzero(pending >= self.tau_bar))
            return forced or (int(rng.integers(n_workers)),)

        return select


@dataclass(frozen=True)
class Trace:
    """Replay a recorded list of return sets, one per tick."""

    sets: tuple

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(tuple(int(w) for w in s) for s in self.sets))

    def selector(self, n_workers):
        def select(k, pending):
            if k >= len(self.sets):
                raise ValueError(f"trace has {len(self.sets)} ticks, tick {k} requested")
            return self.sets[k]

        return select


@dataclass
class MasterState:
    """
    Mutable state of the master.

    `last_eval_iter[w]` is the version of the iterate that produced slot w;
    `held_version[w]` / `held_iterates[w]` is the iterate worker w was last
    sent and will evaluate its next gradient at.
    """

    iterate: np.ndarray
    grad_table: np.ndarray
    k: int
    last_eval_iter: np.ndarray
    held_version: np.ndarray
    held_iterates: list
    oracles: list = field(repr=False)
    staleness: np.ndarray | None = None
    aggregate: np.ndarray | None = None

    @property
    def n_workers(self) -> int:
        return self.grad_table.shape[0]

    def pending_delay(self) -> np.ndarray:
        """Delay each worker's gradient would have if it returned now."""
        return self.k - self.held_version


def empty_state(problem: ProblemSpec, partition: Partition, x0) -> MasterState:
    partition.validate(problem.n_components)
    x0 = as_vector(x0, problem.dim, "x0").copy()
    x0.flags.writeable = False
    W = partition.n_workers
    return MasterState(
        iterate=x0,
        grad_table=np.zeros((W, problem.dim)),
        k=0,
        last_eval_iter=np.zeros(W, dtype=int),
        held_version=np.zeros(W, dtype=int),
        held_iterates=[x0] * W,
        oracles=[problem.components.group_oracle(g) for g in partition.groups],
    )


def initialize(problem: ProblemSpec, partition: Partition, x0) -> MasterState:
    """Master state at k = 0 with every slot warm-started at x0."""
    state = empty_state(problem, partition, x0)
    for w, oracle in enumerate(state.oracles):
        state.grad_table[w] = oracle(state.iterate)
    return state


def apply_returns(state: MasterState, updates: dict, alpha, regularizer, distance) -> MasterState:
    """
    One master iteration given the returned gradients.

    `updates` maps worker -> (gradient, version of the iterate it was
    computed at). Slots of absent workers are kept; the new iterate is
    handed to every returning worker.
    """
    if not updates:
        raise ValueError("at least one worker must return")
    k = state.k
    for w in sorted(updates):
        grad, version = updates[w]
        if not 0 <= version <= k:
            raise ValueError(f"worker {w} returned version {version} at iteration {k}")
        state.grad_table[w] = grad
        state.last_eval_iter[w] = version
    state.staleness = k - state.last_eval_iter
    state.aggregate = state.grad_table.sum(axis=0)
    x_new = prox_step(state.iterate, state.aggregate, alpha, regularizer, distance)
    x_new.flags.writeable = False
    for w in updates:
        state.held_iterates[w] = x_new
        state.held_version[w] = k + 1
    state.iterate = x_new
    state.k = k + 1
    return state


def master_iteration(state: MasterState, R, alpha, regularizer, distance=None) -> MasterState:
    """Workers in R evaluate at the iterate they hold and the master steps."""
    R = sorted(set(int(w) for w in R))
    if not R:
        raise ValueError("the return set R must be non-empty")
    if R[0] < 0 or R[-1] >= state.n_workers:
        raise ValueError(f"worker index out of range in {R}")
    updates = {w: (state.oracles[w](state.held_iterates[w]), int(state.held_version[w])) for w in R}
    return apply_returns(state, updates, alpha, regularizer, distance or DistanceSpec.euclidean())


@dataclass
class RunHistory:
    """
    Record of a run.

    Point records (length K+1, index i is x_i): `errors` holds
    ||x_i - x_ref||^2, `divergences` holds D(x_i, x_ref) for the run's
    distance, `objectives` holds F(x_i) + h(x_i).
    Iteration records (length K, index k is the step producing x_{k+1}):
    `returned[k]` is R and `staleness[k, w]` is the staleness of slot w in
    the aggregate g_k.
    """

    errors: np.ndarray
    divergences: np.ndarray
    objectives: np.ndarray
    returned: list
    staleness: np.ndarray
    final: np.ndarray
    x_ref: np.ndarray | None
    distance: DistanceSpec
    alpha: float
    iterates: np.ndarray | None = None

    @property
    def n_iterations(self) -> int:
        return len(self.returned)

    @property
    def n_workers(self) -> int:
        return self.staleness.shape[1]

    def message_delays(self) -> list:
        """Per worker, the delays of all gradients it returned, in order."""
        out = [[] for _ in range(self.n_workers)]
        for k, R in enumerate(self.returned):
            for w in R:
                out[w].append(int(self.staleness[k, w]))
        return [np.asarray(d, dtype=int) for d in out]


class _Recorder:
    def __init__(self, problem, distance, x_ref, K, W, keep_iterates):
        self.problem, self.distance, self.x_ref = problem, distance, x_ref
        self.errors = np.full(K + 1, np.nan)
        self.divergences = np.full(K + 1, np.nan)
        self.objectives = np.empty(K + 1)
        self.staleness = np.zeros((K, W), dtype=int)
        self.returned = []
        self.iterates = np.empty((K + 1, problem.dim)) if keep_iterates else None

    def point(self, i, x):
        p = self.problem
        self.objectives[i] = p.components.total_value(x) + p.regularizer.value(x)
        if self.x_ref is not None:
            diff = x - self.x_ref
            self.errors[i] = float(diff @ diff)
            self.divergences[i] = distance_eval(self.distance, x, self.x_ref)
        if self.iterates is not None:
            self.iterates[i] = x

    def step(self, k, R, staleness):
        self.returned.append(tuple(sorted(R)))
        self.staleness[k] = staleness

    def history(self, final, alpha):
        return RunHistory(
            self.errors, self.divergences, self.objectives, self.returned,
            self.staleness, np.array(final), self.x_ref, self.distance, float(alpha),
            self.iterates,
        )


def resolve_reference(problem, distance, x_ref):
    if x_ref is not None:
        return as_vector(x_ref, problem.dim, "x_ref")
    from .analysis import reference_solve

    return reference_solve(problem, distance, tolerance=1e-12)


def run(problem: ProblemSpec, partition: Partition, delay_model, alpha, K, distance=None,
        x0=None, x_ref=None, keep_iterates=False) -> RunHistory:
    """
    Execute K master iterations under `delay_model` and record the history.

    The result is a pure function of the arguments (delay models carry their
    own seeds). Without `x_ref`, distances are measured against a reference
    solve of the problem.
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    distance = distance or DistanceSpec.euclidean()
    x0 = np.zeros(problem.dim) if x0 is None else x0
    x_ref = resolve_reference(problem, distance, x_ref)
    state = initialize(problem, partition, x0)
    select = delay_model.selector(partition.n_workers)
    rec = _Recorder(problem, distance, x_ref, K, partition.n_workers, keep_iterates)
    rec.point(0, state.iterate)
    for k in range(K):
        R = select(k, state.pending_delay())
        master_iteration(state, R, alpha, problem.regularizer, distance)
        rec.step(k, R, state.staleness)
        rec.point(k + 1, state.iterate)
    return rec.history(state.iterate, alpha)


def replay(history: RunHistory, problem, partition, x0=None) -> RunHistory:
    """Re-run a recorded schedule of return sets through the simulator."""
    return run(problem, partition, Trace(history.returned), history.alpha, history.n_iterations,
               history.distance, x0=x0, x_ref=history.x_ref,
               keep_iterates=history.iterates is not None)


def observed_max_delay(history: RunHistory) -> int:
    """Largest delay of any returned gradient over the run (0 for no iterations)."""
    delays = [d.max() for d in history.message_delays() if d.size]
    return int(max(delays, default=0))


def max_staleness(history: RunHistory) -> int:
    """Largest staleness of any slot in any aggregate; the quantity bounded by tau_bar in the rate analysis."""
    return int(history.staleness.max(initial=0))


@dataclass(frozen=True)
class DelayStats:
    """Per-worker mean, standard deviation, maximum and count of returned-gradient delays."""

    mean: np.ndarray
    std: np.ndarray
    max: np.ndarray
    count: np.ndarray

    @property
    def n_workers(self) -> int:
        return self.mean.shape[0]

    def rows(self):
        return [(w, float(self.mean[w]), float(self.std[w]), int(self.max[w]))
                for w in range(self.n_workers)]


def delay_stats(history: RunHistory) -> DelayStats:
    delays = history.message_delays()
    mean = np.array([d.mean() if d.size else 0.0 for d in delays])
    std = np.array([d.std() if d.size else 0.0 for d in delays])
    mx = np.array([d.max() if d.size else 0 for d in delays], dtype=int)
    count = np.array([d.size for d in delays], dtype=int)
    return DelayStats(mean, std, mx, count)
