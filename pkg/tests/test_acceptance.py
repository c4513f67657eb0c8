"""
Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
"""

import subprocess
import sys

import numpy as np
import pytest

from conftest import central_difference, prox_objective, zoom_minimize, zoom_minimize_simplex
from piag.analysis import (
    certify_history,
    corollary1_max_stepsize,
    envelope_for,
    lemma1_certify,
    lemma1_condition,
    lemma1_counterexample,
    lemma1_parameters,
    lemma1_sequence,
    max_stepsize,
    max_stepsize_by_bisection,
    reference_solve,
    theorem1_max_stepsize,
)
from piag.dataio import synth_dataset
from piag.engine import BoundedUniform, RoundRobin, max_staleness, observed_max_delay, replay, run
from piag.losses import ToyChain, logistic_problem, toy_optimum, toy_problem
from piag.problem import Partition, ProblemSpec, QuadraticComponents, full_gradient
from piag.prox import (
    DistanceSpec,
    ProxProblem,
    Regularizer,
    distance_eval,
    mirror_map,
    prox_euclidean,
    prox_general,
)
from piag.runtime import pilot_tau_bar, run_async, within_delay_bound


@pytest.fixture
def verdict(capsys):
    def emit(n, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {n} failed: {title} {detail}"

    return emit


# 1 ---------------------------------------------------------------------------

def test_criterion_01_toy_reproduction(verdict):
    P = toy_problem(100, 3.0, 1.0)
    xs = toy_optimum(P.components, 1.0)
    assert np.array_equal(xs, np.eye(100)[0] * (2 / 3))
    part = Partition.contiguous(100, 4)
    tau = 4
    alpha = theorem1_max_stepsize(P.mu, P.lipschitz_sum, tau)
    h = run(P, part, BoundedUniform(tau, seed=0), alpha, 15000, x_ref=xs)
    rep = certify_history(h, envelope_for(h, P.mu), rtol=1e-9)
    final = float(h.errors[-1])
    ok2 = rep.passed and final <= 1e-9 and observed_max_delay(h) <= tau

    D = DistanceSpec.pnorm(1.5, 100)
    alpha_p = max_stepsize(P.mu, P.lipschitz_sum, tau, D)
    hp = run(P, part, BoundedUniform(tau, seed=0), alpha_p, 15000, D, x_ref=xs)
    envp = envelope_for(hp, P.mu)
    repp = certify_history(hp, envp, rtol=1e-9)
    verdict(1, "toy run, Theorem-1 envelope (p=2) and general-distance envelope (p=1.5)",
            ok2 and repp.passed and envp.interpretation == "bregman",
            f"p=2: alpha={alpha:.6e}, final err={final:.2e}, {rep.verdict}; "
            f"p=1.5: alpha={alpha_p:.6e}, {repp.verdict}; max delay {observed_max_delay(h)}, "
            f"max slot staleness {max_staleness(h)}")


# 2 ---------------------------------------------------------------------------

def test_criterion_02_synchronous_specialisation(verdict):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        mu = 10 ** rng.uniform(-6, 2)
        L = mu * 10 ** rng.uniform(0, 6)
        worst = max(worst, abs(theorem1_max_stepsize(mu, L, 0) * L - 1.0))

    Hs, bs = [], []
    for _ in range(3):
        M = rng.normal(size=(3, 3))
        Hs.append(M @ M.T + 0.5 * np.eye(3))
        bs.append(rng.normal(size=3))
    Q = QuadraticComponents(Hs, bs)
    lam = 0.3
    P = ProblemSpec.from_components(Q, Regularizer.l1(lam), Q.strong_convexity())
    alpha = 1.0 / P.lipschitz_sum
    x0 = rng.normal(size=3)
    h = run(P, Partition([[0, 1, 2]]), RoundRobin(), alpha, 200, x0=x0, x_ref=np.zeros(3), keep_iterates=True)
    # hand-rolled proximal gradient loop
    x, same = x0.copy(), True
    for k in range(200):
        g = np.zeros(3)
        for H, b in zip(Hs, bs):
            g += H @ x - b
        v = x - alpha * g
        x = np.sign(v) * np.maximum(np.abs(v) - alpha * lam, 0.0)
        same &= bool(np.array_equal(x, h.iterates[k + 1]))
    verdict(2, "tau=0 rule equals 1/L; single worker equals proximal gradient bit for bit",
            worst <= 1e-12 and same, f"worst relative error {worst:.2e}, bitwise equal: {same}")


# 3 ---------------------------------------------------------------------------

def test_criterion_03_stepsize_oracle_agreement(verdict):
    rng = np.random.default_rng(3)
    worst, cond_ok, n = 0.0, True, 220
    for i in range(n):
        mu = 10 ** rng.uniform(-5, 1)
        L = mu * 10 ** rng.uniform(0, 5)
        tau = int(rng.integers(0, 21))
        if i % 2:
            mw, Lw = 1.0, 1.0
            closed = theorem1_max_stepsize(mu, L, tau)
        else:
            mw = 10 ** rng.uniform(-1, 0)
            Lw = mw * 10 ** rng.uniform(0, 2)
            closed = corollary1_max_stepsize(mu, L, tau, mw, Lw)
        bis = max_stepsize_by_bisection(mu, L, tau, mw, Lw)
        worst = max(worst, abs(closed - bis) / bis)
        # the closed form is the exact boundary, rounded to a float; check it to 1e-12 relative
        cond_ok &= lemma1_condition(*lemma1_parameters(closed, mu, L, tau, mw, Lw, exact=True), rtol=1e-12)
        cond_ok &= lemma1_condition(*lemma1_parameters(closed * (1 - 1e-12), mu, L, tau, mw, Lw, exact=True))
    verdict(3, f"closed forms agree with exact bisection on {n} samples and satisfy the condition",
            worst <= 1e-10 and cond_ok, f"worst relative gap {worst:.2e}")


# 4 ---------------------------------------------------------------------------

def test_criterion_04_lemma_property_suite(verdict):
    rng = np.random.default_rng(4)
    certified = 0
    for _ in range(1000):
        a = rng.uniform(0.05, 0.98)
        b = rng.uniform(0.0, 3.0)
        k0 = int(rng.integers(0, 8))
        c = b * (1 - a) * a ** k0 / (1 - a ** (k0 + 1)) * rng.uniform(0, 1)
        assert lemma1_condition(a, b, c, k0)
        inst = lemma1_sequence(a, b, c, k0, int(rng.integers(5, 60)), rng)
        certified += lemma1_certify(inst)
    found = None
    for a, b, c, k0 in [(0.5, 0.1, 0.4, 2), (0.9, 0.2, 0.5, 3), (0.3, 0.05, 0.2, 0)]:
        assert not lemma1_condition(a, b, c, k0)
        inst = lemma1_counterexample(a, b, c, k0, rng)
        if inst is not None:
            found = (a, b, c, k0)
            break
    verdict(4, "recurrence sequences certify; a violating parameter set admits a counterexample",
            certified == 1000 and found is not None, f"{certified}/1000 certified, counterexample at {found}")


# 5 ---------------------------------------------------------------------------

def _instances(rng, n):
    for _ in range(n):
        d = int(rng.integers(1, 4))
        yield d, rng.normal(size=d), rng.normal(size=d) * 2, rng.uniform(0.1, 2.0), rng.uniform(0.0, 1.5)


def test_criterion_05_prox_brute_force(verdict):
    rng = np.random.default_rng(5)
    worst = {}

    for kind in ("l1", "nonneg", "l1_nonneg", "zero"):
        err = 0.0
        for d, x0, g, alpha, lam in _instances(rng, 100):
            reg = Regularizer(kind, lam if "l1" in kind else 0.0)
            out = prox_euclidean(ProxProblem(x0, g, alpha, reg))
            f = prox_objective(x0, g, alpha, kind, reg.lam, "euclidean")
            ref = zoom_minimize(f, x0, 4 * (1 + np.abs(x0).max() + alpha * np.abs(g).max()), rounds=45)
            err = max(err, np.abs(out - ref).max())
        worst[f"euclidean/{kind}"] = err

    err = 0.0
    for d, x0, g, alpha, _ in _instances(rng, 100):
        d = max(d, 2)
        x0, g = rng.normal(size=d), rng.normal(size=d)
        out = prox_euclidean(ProxProblem(x0, g, alpha, Regularizer.simplex()))
        ref = zoom_minimize_simplex(prox_objective(x0, g, alpha, "zero", 0.0, "euclidean"), d, rounds=45)
        err = max(err, np.abs(out - ref).max())
    worst["euclidean/simplex"] = err

    err = 0.0
    for d, _, g, alpha, _ in _instances(rng, 100):
        d = max(d, 2)
        x0 = rng.dirichlet(np.ones(d))
        g = rng.normal(size=d)
        out = prox_general(ProxProblem(x0, g, alpha, Regularizer.simplex(), DistanceSpec.entropy(1e-3)))
        ref = zoom_minimize_simplex(prox_objective(x0, g, alpha, "zero", 0.0, "entropy"), d, rounds=45)
        err = max(err, np.abs(out - ref).max())
    worst["entropy/simplex"] = err

    for kind in ("zero", "l1", "nonneg", "l1_nonneg"):
        err = 0.0
        for d, x0, g, alpha, lam in _instances(rng, 100):
            p = rng.uniform(1.1, 1.95)
            if kind in ("nonneg", "l1_nonneg"):
                x0 = np.abs(x0)
            reg = Regularizer(kind, lam if "l1" in kind else 0.0)
            out = prox_general(ProxProblem(x0, g, alpha, reg, DistanceSpec.pnorm(p, d)))
            f = prox_objective(x0, g, alpha, kind, reg.lam, "pnorm", p)
            ref = zoom_minimize(f, x0, 4 * (1 + np.abs(x0).max() + alpha * np.abs(g).max()), rounds=45)
            err = max(err, np.abs(out - ref).max())
        worst[f"pnorm/{kind}"] = err

    ok = all(v <= 1e-6 for v in worst.values())
    verdict(5, "every prox kind matches brute-force minimisation within 1e-6 (100 instances each)", ok,
            ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


# 6 ---------------------------------------------------------------------------

def test_criterion_06_bregman_machinery(verdict):
    rng = np.random.default_rng(6)
    sandwich = {}
    specs = [("euclidean", DistanceSpec.euclidean(), 5), ("pnorm p=1.5", DistanceSpec.pnorm(1.5, 10), 10),
             ("pnorm p=1.2", DistanceSpec.pnorm(1.2, 4), 4), ("entropy", DistanceSpec.entropy(0.05), 6)]
    for name, D, d in specs:
        ok = True
        for _ in range(1000):
            if D.kind == "entropy":
                x = D.floor + (1 - d * D.floor) * rng.dirichlet(np.ones(d))
                y = rng.dirichlet(np.ones(d) * rng.uniform(0.2, 3))
            else:
                x, y = rng.normal(size=(2, d)) * rng.uniform(0.01, 10)
            q = float((x - y) @ (x - y))
            v = distance_eval(D, x, y)
            ok &= 0.5 * D.mu_omega * q * (1 - 1e-12) <= v <= 0.5 * D.L_omega * q * (1 + 1e-12)
        sandwich[name] = ok

    # four-point identity with D(x, y) linearised at x:
    #   D(d, a) - D(d, c) - D(b, a) + D(b, c) = <grad w(b) - grad w(d), a - c>
    four = {}
    for name, D, d in (specs[0], specs[3]):
        worst = 0.0
        for _ in range(1000):
            if D.kind == "entropy":
                a, b, c, e = rng.dirichlet(np.ones(d), size=4)
            else:
                a, b, c, e = rng.normal(size=(4, d))
            lhs = distance_eval(D, e, a) - distance_eval(D, e, c) - distance_eval(D, b, a) + distance_eval(D, b, c)
            rhs = float((mirror_map(D, b) - mirror_map(D, e)) @ (a - c))
            worst = max(worst, abs(lhs - rhs))
        four[name] = worst
    ok = all(sandwich.values()) and all(v <= 1e-10 for v in four.values())
    verdict(6, "sandwich bound on 1000 pairs per kind; four-point identity for Bregman kinds", ok,
            f"sandwich {sandwich}; four-point worst {four}")


# 7 and 8 ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def logistic_async():
    ds = synth_dataset(1000, 50, density=0.2, noise=0.05, seed=1)
    P = logistic_problem(ds.features, ds.labels, lambda1=1e-5, lambda2=1e-4)
    part = Partition.contiguous(1000, 3)
    x_ref = reference_solve(P, tolerance=1e-12)
    alpha_ref = 1.0 / P.components.aggregate_lipschitz()
    residual = float(np.linalg.norm(
        prox_euclidean(ProxProblem(x_ref, full_gradient(P, x_ref), alpha_ref, P.regularizer)) - x_ref))
    throttle = [0.001, 0.003, 0.006]
    tau, _ = pilot_tau_bar(P, part, 500, throttle=throttle, jitter=0.2, seed=0, margin=1.5)
    alpha = theorem1_max_stepsize(P.mu, P.lipschitz_sum, tau)
    h, stats = run_async(P, part, alpha, 3000, x_ref=x_ref, throttle=throttle, jitter=0.2, seed=1,
                         keep_iterates=True)
    return P, part, h, stats, tau, residual


def test_criterion_07_logistic_async(verdict, logistic_async):
    P, _, h, stats, tau, residual = logistic_async
    rep = certify_history(h, envelope_for(h, P.mu))
    seen = observed_max_delay(h)
    within = within_delay_bound(h, tau)
    detail = (f"pilot tau_bar={tau}, observed max delay={seen}, alpha={h.alpha:.4e}, reference residual "
              f"{residual:.1e}, ||x_0-x*||^2={h.errors[0]:.3e} -> {h.errors[-1]:.3e}, {rep.verdict}, "
              f"mean delays {np.round(stats.mean, 2).tolist()}")
    if within:
        verdict(7, "async logistic run satisfies the Theorem-1 envelope", residual <= 1e-12 and rep.passed, detail)
    else:
        verdict(7, "async logistic run exceeded the pilot delay bound; violation reported",
                residual <= 1e-12 and seen > tau, detail)


def test_criterion_08_engine_equivalence(verdict, logistic_async, toy):
    P, part, h, *_ = logistic_async
    r = replay(h, P, part)
    diff = float(np.max(np.abs(r.iterates - h.iterates)))
    tpart = Partition.contiguous(100, 4)
    th, _ = run_async(toy, tpart, 3e-4, 500, x_ref=toy_optimum(toy.components, 1.0),
                      throttle=[0.0, 0.0003, 0.0006, 0.001], seed=8, keep_iterates=True)
    tdiff = float(np.max(np.abs(replay(th, toy, tpart).iterates - th.iterates)))
    verdict(8, "replaying async schedules through the simulator reproduces the trajectories",
            diff <= 1e-12 and tdiff <= 1e-12, f"logistic max diff {diff:.1e}, toy max diff {tdiff:.1e}")


# 9 ---------------------------------------------------------------------------

def test_criterion_09_determinism(verdict, tmp_path):
    paths = []
    for i in range(2):
        p = tmp_path / f"h{i}.csv"
        subprocess.run([sys.executable, "-m", "piag", "run", "--K", "3000", "--delay", "uniform",
                        "--seed", "17", "--tau-bar", "8", "--history-csv", str(p)],
                       check=False, capture_output=True)
        paths.append(p)
    a, b = paths[0].read_bytes(), paths[1].read_bytes()
    verdict(9, "identical seeds give byte-identical history CSVs across two invocations",
            len(a) > 0 and a == b, f"{len(a.splitlines())} lines each")


# 10 --------------------------------------------------------------------------

def test_criterion_10_gradients(verdict):
    rng = np.random.default_rng(10)
    chain = ToyChain(20, 3.0)
    ds = synth_dataset(50, 6, density=0.5, seed=3)
    logi = logistic_problem(ds.features, ds.labels, 1e-5, 1e-2).components
    Hs = [(lambda M: M @ M.T)(rng.normal(size=(4, 4))) for _ in range(3)]
    quad = QuadraticComponents(Hs, rng.normal(size=(3, 4)))
    worst = {}
    for name, fam, scale in (("toy", chain, 10.0), ("logistic", logi, 3.0), ("quadratic", quad, 3.0)):
        w = 0.0
        for _ in range(100):
            x = rng.uniform(-scale, scale, size=fam.dim)
            n = int(rng.integers(fam.n_components))
            g = fam.gradient(n, x)
            fd = central_difference(lambda z: fam.value(n, z), x)
            w = max(w, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-300))
        worst[name] = w
    ok = all(v <= 1e-5 for v in worst.values())
    verdict(10, "component gradients agree with central differences at 100 random points", ok,
            ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
