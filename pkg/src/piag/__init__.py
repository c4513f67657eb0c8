"""Asynchronous proximal incremental aggregated gradient (PIAG) on a parameter server."""

from .analysis import (
    certify_history,
    corollary1_max_stepsize,
    envelope_for,
    max_stepsize,
    max_stepsize_by_bisection,
    reference_solve,
    theorem1_max_stepsize,
)
from .engine import BoundedUniform, RoundRobin, RunHistory, Trace, UniformSingle, replay, run
from .losses import LogisticLoss, ToyChain, logistic_problem, toy_optimum, toy_problem
from .problem import Partition, ProblemSpec, QuadraticComponents, full_gradient, objective
from .prox import DistanceSpec, ProxProblem, Regularizer, prox_euclidean, prox_general
from .runtime import run_async

__all__ = [
    "BoundedUniform", "DistanceSpec", "LogisticLoss", "Partition", "ProblemSpec", "ProxProblem",
    "QuadraticComponents", "Regularizer", "RoundRobin", "RunHistory", "ToyChain", "Trace",
    "UniformSingle", "certify_history", "corollary1_max_stepsize", "envelope_for", "full_gradient",
    "logistic_problem", "max_stepsize", "max_stepsize_by_bisection", "objective", "prox_euclidean",
    "prox_general", "reference_solve", "replay", "run", "run_async", "theorem1_max_stepsize",
    "toy_optimum", "toy_problem",
]
