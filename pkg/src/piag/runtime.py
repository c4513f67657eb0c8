"""
Threaded execution of the master/worker protocol.

Each worker runs in its own thread and talks to the master through two
queues: iterates flow down a per-worker queue, gradients flow up a single
shared queue. The master thread is the only writer of the iterate and the
gradient table. At every wake-up it blocks for one gradient, drains whatever
else has arrived, and takes one step with that set of returns. Delays are
therefore produced by real scheduling and optional sleeps, not by a script.

The delay of a returned gradient is ``k - version`` at the iteration k it is
aggregated, exactly as in the simulator, so any finished run can be replayed
through :func:`piag.engine.replay`.
"""

from __future__ import annotations

import math
import queue
import threading
import time
import traceback
from dataclasses import dataclass

import numpy as np

from .engine import (
    DelayStats,  # noqa: F401
    RunHistory,
    _Recorder,
    apply_returns,
    delay_stats,
    initialize,
    observed_max_delay,
    resolve_reference,
)
from .problem import Partition, ProblemSpec
from .prox import DistanceSpec


@dataclass(frozen=True)
class GradientMessage:
    worker: int
    gradient: np.ndarray
    version: int


@dataclass(frozen=True)
class IterateMessage:
    iterate: np.ndarray | None
    version: int
    shutdown: bool = False


@dataclass(frozen=True)
class WorkerFailure:
    worker: int
    error: str


class AsyncRunError(RuntimeError):
    """A worker failed or stopped answering before the run finished."""


def _worker(w, oracle, inbox, outbox, delay, rng_seed):
    rng = np.random.default_rng(rng_seed)
    last = -1
    try:
        while True:
            msg = inbox.get()
            if msg.shutdown:
                return
            if msg.version <= last:
                raise RuntimeError(f"iterate versions must increase, got {msg.version} after {last}")
            last = msg.version
            grad = oracle(msg.iterate)
            if delay is not None:
                lo, hi = delay
                time.sleep(rng.uniform(lo, hi))
            outbox.put(GradientMessage(w, grad, msg.version))
    except Exception:
        outbox.put(WorkerFailure(w, traceback.format_exc()))


def _sleep_ranges(throttle, n_workers, jitter):
    if throttle is None:
        return [None] * n_workers
    t = np.broadcast_to(np.asarray(throttle, dtype=float), (n_workers,))
    if np.any(t < 0):
        raise ValueError("throttles must be non-negative")
    if not 0 <= jitter < 1:
        raise ValueError("jitter must lie in [0, 1)")
    return [(s * (1 - jitter), s * (1 + jitter)) if s > 0 else None for s in t]


def run_async(problem: ProblemSpec, partition: Partition, alpha, K, distance=None, x0=None,
              x_ref=None, throttle=None, jitter=0.5, seed=0, keep_iterates=False, timeout=30.0):
    """
    Run K master iterations with one thread per worker.

    `throttle` is a per-worker (or scalar) sleep in seconds added after each
    gradient evaluation, drawn uniformly from throttle * [1 - jitter,
    1 + jitter] with a generator seeded by (seed, worker). Returns the
    run history and the per-worker delay statistics. A worker exception, or
    no gradient arriving within `timeout` seconds, raises AsyncRunError.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    distance = distance or DistanceSpec.euclidean()
    x0 = np.zeros(problem.dim) if x0 is None else x0
    x_ref = resolve_reference(problem, distance, x_ref)
    W = partition.n_workers
    sleeps = _sleep_ranges(throttle, W, jitter)

    state = initialize(problem, partition, x0)
    rec = _Recorder(problem, distance, x_ref, K, W, keep_iterates)
    rec.point(0, state.iterate)

    up = queue.Queue()
    downs = [queue.Queue() for _ in range(W)]
    threads = [
        threading.Thread(target=_worker, args=(w, state.oracles[w], downs[w], up, sleeps[w], (seed, w)),
                         name=f"piag-worker-{w}", daemon=True)
        for w in range(W)
    ]
    for t in threads:
        t.start()
    for w in range(W):
        downs[w].put(IterateMessage(state.iterate, 0))

    def receive(block):
        msg = up.get(timeout=timeout) if block else up.get_nowait()
        if isinstance(msg, WorkerFailure):
            raise AsyncRunError(f"worker {msg.worker} failed:\n{msg.error}")
        return msg

    try:
        for k in range(K):
            try:
                batch = [receive(True)]
            except queue.Empty:
                dead = [t.name for t in threads if not t.is_alive()]
                raise AsyncRunError(f"no gradient within {timeout}s at iteration {k}; exited: {dead}") from None
            while True:
                try:
                    batch.append(receive(False))
                except queue.Empty:
                    break
            updates = {m.worker: (m.gradient, m.version) for m in batch}
            if len(updates) != len(batch):
                raise AsyncRunError(f"a worker sent two gradients for one iterate at iteration {k}")
            apply_returns(state, updates, alpha, problem.regularizer, distance)
            for w in updates:
                downs[w].put(IterateMessage(state.iterate, state.k))
            rec.step(k, updates.keys(), state.staleness)
            rec.point(k + 1, state.iterate)
    finally:
        for d in downs:
            d.put(IterateMessage(None, -1, shutdown=True))
        for t in threads:
            t.join(timeout)

    history = rec.history(state.iterate, alpha)
    return history, delay_stats(history)


def pilot_tau_bar(problem, partition, K=200, throttle=None, jitter=0.5, seed=0, x_ref=None,
                  timeout=30.0, margin=1.0):
    """
    Delay bound estimated from a short run with a conservative step.

    Returns ceil(margin * largest observed delay) and the pilot's delay
    statistics. A short pilot tends to miss the tail of the delay
    distribution, so a margin above 1 makes a violation in the main run
    less likely. The step only moves the iterate; the pilot exists to learn
    the delays of the current machine and throttles.
    """
    if margin < 1:
        raise ValueError("margin must be at least 1")
    if x_ref is None:
        x_ref = np.zeros(problem.dim)
    alpha = 1.0 / (problem.lipschitz_sum * max(partition.n_workers, 1) * 4)
    history, stats = run_async(problem, partition, alpha, K, x_ref=x_ref, throttle=throttle,
                               jitter=jitter, seed=seed, timeout=timeout)
    return int(math.ceil(margin * observed_max_delay(history))), stats


def within_delay_bound(history: RunHistory, tau_bar) -> bool:
    """Whether every returned gradient had delay at most `tau_bar`."""
    return observed_max_delay(history) <= tau_bar


def delay_report(stats: DelayStats) -> list:
    """Rows (worker, mean, std, max) ready for printing or CSV export."""
    return stats.rows()
