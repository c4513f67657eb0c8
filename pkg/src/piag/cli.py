"""
Command-line front end.

    piag run       --experiment toy|logistic --engine sim|async ...
    piag stepsize  --mu MU --L L --tau TAU [--mu-omega M --L-omega L]
    piag verify    HISTORY.csv --mu MU --alpha A [--L-omega L]
    piag delays    (same options as run; prints the delay table)

Every option of ``run`` may also come from a JSON file given with
``--config``; keys are the option names with dashes replaced by
underscores, and flags on the command line win. ``run`` and ``verify``
exit with status 0 exactly when the certificate is PASS.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import analysis, dataio, engine, runtime
from .losses import logistic_problem, toy_optimum, toy_problem
from .problem import Partition
from .prox import DistanceSpec

RUN_DEFAULTS = {
    "experiment": "toy",
    "engine": "sim",
    "N": None,
    "d": 50,
    "W": 4,
    "K": 15000,
    "c": 3.0,
    "lambda1": None,
    "lambda2": 1e-4,
    "p": 2.0,
    "distance": None,
    "tau_bar": None,
    "delay": "bounded",
    "seed": 0,
    "alpha": "auto",
    "data": None,
    "n_features": None,
    "normalize": False,
    "synthetic": None,
    "density": 0.2,
    "noise": 0.05,
    "throttle": None,
    "jitter": 0.2,
    "pilot_K": 500,
    "tau_margin": 1.5,
    "history_csv": None,
    "delays_csv": None,
    "report_csv": None,
}


class ConfigError(ValueError):
    pass


def _add_run_options(sp):
    S = argparse.SUPPRESS
    sp.add_argument("--config", help="JSON file supplying any of these options")
    sp.add_argument("--experiment", choices=["toy", "logistic"], default=S)
    sp.add_argument("--engine", choices=["sim", "async"], default=S)
    sp.add_argument("--N", type=int, default=S, help="components (toy) or samples (synthetic)")
    sp.add_argument("--d", type=int, default=S, help="features of the synthetic dataset")
    sp.add_argument("--W", type=int, default=S, help="number of workers")
    sp.add_argument("--K", type=int, default=S, help="master iterations")
    sp.add_argument("--c", type=float, default=S)
    sp.add_argument("--lambda1", type=float, default=S)
    sp.add_argument("--lambda2", type=float, default=S)
    sp.add_argument("--p", type=float, default=S, help="exponent of the half squared p-norm distance")
    sp.add_argument("--distance", choices=["euclidean", "pnorm", "entropy"], default=S)
    sp.add_argument("--tau-bar", dest="tau_bar", type=int, default=S,
                    help="delay bound used for the step-size (default: W, or the pilot for async)")
    sp.add_argument("--delay", choices=["bounded", "uniform", "roundrobin"], default=S,
                    help="simulator delay model")
    sp.add_argument("--seed", type=int, default=S)
    sp.add_argument("--alpha", default=S, help="step-size or 'auto' for the rule value")
    sp.add_argument("--data", default=S, help="LIBSVM file for the logistic experiment")
    sp.add_argument("--n-features", dest="n_features", type=int, default=S)
    sp.add_argument("--normalize", action="store_true", default=S)
    sp.add_argument("--synthetic", default=S, help="synthetic dataset, e.g. N=1000,d=50")
    sp.add_argument("--density", type=float, default=S)
    sp.add_argument("--noise", type=float, default=S)
    sp.add_argument("--throttle", default=S, help="comma-separated per-worker sleeps in seconds (async)")
    sp.add_argument("--jitter", type=float, default=S)
    sp.add_argument("--pilot-K", dest="pilot_K", type=int, default=S)
    sp.add_argument("--tau-margin", dest="tau_margin", type=float, default=S)
    sp.add_argument("--history-csv", dest="history_csv", default=S)
    sp.add_argument("--delays-csv", dest="delays_csv", default=S)
    sp.add_argument("--report-csv", dest="report_csv", default=S)


def build_parser():
    parser = argparse.ArgumentParser(prog="piag", description="Asynchronous proximal incremental aggregated gradient")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_options(sub.add_parser("run", help="run, certify and export an experiment"))
    _add_run_options(sub.add_parser("delays", help="run an experiment and print per-worker delays"))

    st = sub.add_parser("stepsize", help="largest step-size from the closed form and by bisection")
    st.add_argument("--mu", type=float, required=True)
    st.add_argument("--L", type=float, required=True)
    st.add_argument("--tau", type=int, required=True)
    st.add_argument("--mu-omega", dest="mu_omega", type=float, default=1.0)
    st.add_argument("--L-omega", dest="L_omega", type=float, default=1.0)
    st.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")

    ve = sub.add_parser("verify", help="re-certify an exported history CSV")
    ve.add_argument("history_csv")
    ve.add_argument("--mu", type=float, required=True)
    ve.add_argument("--alpha", type=float, required=True)
    ve.add_argument("--L-omega", dest="L_omega", type=float, default=None,
                    help="certify a general-distance history with this L_omega")
    ve.add_argument("--rtol", type=float, default=1e-9)
    ve.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")
    return parser


def resolve_config(ns) -> dict:
    """Defaults, overridden by the JSON config, overridden by explicit flags."""
    cfg = dict(RUN_DEFAULTS)
    given = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    if getattr(ns, "config", None):
        with open(ns.config) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(RUN_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update(given)
    return cfg


def _parse_synthetic(text):
    out = {}
    for part in filter(None, (text or "").split(",")):
        key, sep, val = part.partition("=")
        if not sep or key.strip() not in ("N", "d", "density", "noise", "seed"):
            raise ConfigError(f"bad --synthetic entry {part!r}")
        out[key.strip()] = float(val) if key.strip() in ("density", "noise") else int(val)
    return out


def _distance(cfg, dim):
    kind = cfg["distance"] or ("euclidean" if float(cfg["p"]) == 2.0 else "pnorm")
    if kind == "euclidean":
        return DistanceSpec.euclidean()
    if kind == "pnorm":
        return DistanceSpec.pnorm(float(cfg["p"]), dim)
    raise ConfigError("the entropy distance needs a simplex-compatible regulariser; "
                      "neither built-in experiment has one")


def build_experiment(cfg):
    """Problem, reference optimum and partition described by a resolved config."""
    if cfg["experiment"] == "toy":
        N = int(cfg["N"] or 100)
        lam1 = 1.0 if cfg["lambda1"] is None else float(cfg["lambda1"])
        problem = toy_problem(N, float(cfg["c"]), lam1)
        x_ref = toy_optimum(problem.components, lam1)
    else:
        lam1 = 1e-5 if cfg["lambda1"] is None else float(cfg["lambda1"])
        if cfg["data"]:
            ds = dataio.read_libsvm(cfg["data"], cfg["n_features"])
            if cfg["normalize"]:
                ds = dataio.normalize_dataset(ds)
        else:
            syn = {"N": cfg["N"] or 1000, "d": cfg["d"], "density": cfg["density"],
                   "noise": cfg["noise"], "seed": cfg["seed"]}
            syn.update(_parse_synthetic(cfg["synthetic"]))
            ds = dataio.synth_dataset(**syn)
        problem = logistic_problem(ds.features, ds.labels, lam1, float(cfg["lambda2"]))
        x_ref = None
    W = int(cfg["W"])
    if not 1 <= W <= problem.n_components:
        raise ConfigError(f"W={W} must lie in [1, {problem.n_components}]")
    if int(cfg["K"]) < 1:
        raise ConfigError("K must be at least 1")
    distance = _distance(cfg, problem.dim)
    if x_ref is None:
        x_ref = analysis.reference_solve(problem, distance, tolerance=1e-12)
    return problem, x_ref, Partition.contiguous(problem.n_components, W), distance


def _throttle(cfg):
    t = cfg["throttle"]
    if t is None:
        return None
    if isinstance(t, str):
        t = [float(v) for v in t.split(",")]
    return t


def _delay_model(cfg, tau_bar):
    seed = int(cfg["seed"])
    if cfg["delay"] == "bounded":
        return engine.BoundedUniform(tau_bar, seed)
    if cfg["delay"] == "uniform":
        return engine.UniformSingle(seed)
    return engine.RoundRobin()


def execute(cfg, out=None):
    """Run a configured experiment. Returns (history, stats, alpha, tau_bar, x_ref, problem)."""
    out = out or sys.stdout
    problem, x_ref, partition, distance = build_experiment(cfg)
    W = partition.n_workers
    throttle = _throttle(cfg)
    tau_bar = cfg["tau_bar"]
    if tau_bar is None and cfg["engine"] == "async":
        tau_bar, pilot = runtime.pilot_tau_bar(problem, partition, int(cfg["pilot_K"]), throttle,
                                               float(cfg["jitter"]), int(cfg["seed"]),
                                               margin=float(cfg["tau_margin"]))
        print(f"pilot: {cfg['pilot_K']} iterations, delay bound {tau_bar} "
              f"(margin {cfg['tau_margin']})", file=out)
    elif tau_bar is None:
        tau_bar = W
    tau_bar = int(tau_bar)
    rule = analysis.max_stepsize(problem.mu, problem.lipschitz_sum, tau_bar, distance)
    alpha = rule if str(cfg["alpha"]).lower() == "auto" else float(cfg["alpha"])
    if cfg["engine"] == "sim":
        history = engine.run(problem, partition, _delay_model(cfg, tau_bar), alpha, int(cfg["K"]),
                             distance, x_ref=x_ref)
        stats = engine.delay_stats(history)
    else:
        history, stats = runtime.run_async(problem, partition, alpha, int(cfg["K"]), distance,
                                           x_ref=x_ref, throttle=throttle, jitter=float(cfg["jitter"]),
                                           seed=int(cfg["seed"]))
    print(f"alpha = {alpha:.10g} (rule {rule:.10g} at tau_bar = {tau_bar})", file=out)
    return history, stats, alpha, tau_bar, x_ref, problem


def cmd_run(cfg, out=None) -> int:
    out = out or sys.stdout
    history, stats, alpha, tau_bar, _, problem = execute(cfg, out)
    envelope = analysis.envelope_for(history, problem.mu)
    report = analysis.certify_history(history, envelope)
    seen = engine.observed_max_delay(history)
    print(f"max gradient delay {seen}, max slot staleness {engine.max_staleness(history)}", file=out)
    if seen > tau_bar:
        print(f"bounded-delay assumption violated: observed delay {seen} > tau_bar {tau_bar}", file=out)
    measured = analysis.measured_series(history, envelope.interpretation)
    print(f"final ||x_K - x*||^2 = {history.errors[-1]:.6e}; "
          f"{envelope.interpretation} measured {measured[-1]:.6e} vs bound {envelope(len(measured) - 1):.6e}",
          file=out)
    if cfg["history_csv"]:
        dataio.export_history_csv(history, envelope, cfg["history_csv"])
    if cfg["delays_csv"]:
        dataio.export_delays_csv(stats, cfg["delays_csv"])
    if cfg["report_csv"]:
        report.to_csv(cfg["report_csv"])
    print(report.verdict, file=out)
    return 0 if report.passed else 1


def cmd_delays(cfg, out=None) -> int:
    out = out or sys.stdout
    _, stats, *_ = execute(cfg, out)
    print("worker,mean,std,max", file=out)
    for w, mean, std, mx in runtime.delay_report(stats):
        print(f"{w},{mean:.4f},{std:.4f},{mx}", file=out)
    if cfg["delays_csv"]:
        dataio.export_delays_csv(stats, cfg["delays_csv"])
    return 0


def cmd_stepsize(ns, out=None) -> int:
    out = out or sys.stdout
    closed = analysis.corollary1_max_stepsize(ns.mu, ns.L, ns.tau, ns.mu_omega, ns.L_omega)
    bisect = analysis.max_stepsize_by_bisection(ns.mu, ns.L, ns.tau, ns.mu_omega, ns.L_omega)
    print(f"closed form: {closed:.17g}", file=out)
    print(f"bisection:   {bisect:.17g}", file=out)
    print(f"relative difference: {abs(closed - bisect) / bisect:.3e}", file=out)
    return 0


def cmd_verify(ns, out=None) -> int:
    out = out or sys.stdout
    k, _, measured = dataio.read_history_csv(ns.history_csv)
    if ns.L_omega is None:
        env = analysis.theorem1_envelope(ns.mu, ns.alpha, float(measured[0]))
    else:
        env = analysis.corollary1_envelope(ns.mu, ns.alpha, ns.L_omega, float(measured[0]))
    report = analysis.certify_series(k, measured, env, ns.rtol)
    print(report.verdict, file=out)
    return 0 if report.passed else 1


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        if ns.command == "stepsize":
            return cmd_stepsize(ns)
        if ns.command == "verify":
            return cmd_verify(ns)
        cfg = resolve_config(ns)
        return cmd_run(cfg) if ns.command == "run" else cmd_delays(cfg)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
