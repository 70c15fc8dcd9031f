"""Riemannian steepest descent with Armijo backtracking on the NC-MSG manifold."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import manifold as mf
from .errors import StallError, StepTooLargeError

logger = logging.getLogger(__name__)

MAX_BACKTRACKS = 60
# lower safeguard of the interpolated backtracking step, as a fraction of the rejected one
MIN_SHRINK = 0.1


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 1000
    grad_norm_tolerance: float = 1e-6
    armijo_c1: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    cap_by_max_step: bool = False
    interpolate: bool = True

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        if not self.grad_norm_tolerance > 0:
            raise ValueError("grad_norm_tolerance must be positive")
        if not 0 < self.armijo_c1 < 1:
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")


@dataclass
class OptimizerReport:
    """Per-iterate trace; entry ``k`` describes iterate ``k`` and the step taken from it."""

    iterations: int = 0
    cost_trace: list = field(default_factory=list)
    grad_norm_trace: list = field(default_factory=list)
    step_trace: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False

    def rows(self):
        for k, (c, g, s) in enumerate(zip(self.cost_trace, self.grad_norm_trace, self.step_trace)):
            yield k, c, g, s

    def iterations_to(self, tol):
        """First iterate index whose gradient norm is ``<= tol``, or ``None``."""
        for k, g in enumerate(self.grad_norm_trace):
            if g <= tol:
                return k
        return None


def _safe_cost(cost, theta):
    # a candidate whose cost cannot be evaluated counts as a rejected step
    try:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            value = float(cost(theta))
    except (ValueError, ArithmeticError, np.linalg.LinAlgError):
        return np.inf
    return value if np.isfinite(value) else np.inf


def _next_trial(t, f, f_new, sq_norm, shrink, interpolate):
    """Backtracked step: minimizer of the quadratic through ``f``, ``-sq_norm`` and ``f_new``.

    Clipped to ``[MIN_SHRINK t, shrink t]``; plain ``shrink t`` when disabled or
    when the rejected cost is infinite.
    """
    if not interpolate or not np.isfinite(f_new):
        return t * shrink
    curvature = f_new - f + sq_norm * t
    if curvature <= 0:
        return t * shrink
    return float(np.clip(sq_norm * t * t / (2.0 * curvature), MIN_SHRINK * t, shrink * t))


def _descent(cost, egrad, theta0, config, inner, to_rgrad, label):
    report = OptimizerReport()
    start = time.perf_counter()
    theta = theta0
    f = cost(theta)
    c1, shrink = config.armijo_c1, config.backtrack_factor
    while True:
        grad = to_rgrad(theta, egrad(theta))
        sq_norm = max(inner(theta, grad, grad), 0.0)
        gnorm = float(np.sqrt(sq_norm))
        if not np.isfinite(gnorm):
            report.wall_time = time.perf_counter() - start
            raise StallError(f"{label}: non-finite gradient at iteration {report.iterations}",
                             theta=theta, report=report)
        report.cost_trace.append(float(f))
        report.grad_norm_trace.append(gnorm)
        if gnorm <= config.grad_norm_tolerance:
            report.converged = True
            report.step_trace.append(0.0)
            break
        if report.iterations >= config.max_iterations:
            report.step_trace.append(0.0)
            break
        direction = -grad
        t = config.initial_step
        if config.cap_by_max_step:
            t = min(t, 0.5 * mf.max_step(theta, direction))
        accepted = None
        for _ in range(MAX_BACKTRACKS + 1):
            try:
                candidate = mf.retract(theta, direction, t)
            except StepTooLargeError:
                t *= shrink
                continue
            f_new = _safe_cost(cost, candidate)
            if f_new <= f - c1 * t * sq_norm:
                accepted = candidate
                break
            t = _next_trial(t, f, f_new, sq_norm, shrink, config.interpolate)
        if accepted is None:
            report.step_trace.append(0.0)
            report.wall_time = time.perf_counter() - start
            raise StallError(
                f"{label}: no admissible step after {MAX_BACKTRACKS} backtracking steps "
                f"(iteration {report.iterations}, grad norm {gnorm:.3e})",
                theta=theta, report=report,
            )
        report.step_trace.append(float(t))
        report.iterations += 1
        theta, f = accepted, f_new
    report.wall_time = time.perf_counter() - start
    logger.debug("%s finished: %d iterations, grad norm %.3e", label,
                 report.iterations, report.grad_norm_trace[-1])
    return theta, report


def rgd_minimize(cost, egrad, theta0, config=OptimizerConfig()):
    """Minimize ``cost`` by steepest descent under the Fisher information metric.

    Parameters
    ----------
    cost : callable
        Maps a :class:`ParameterPoint` to a float.
    egrad : callable
        Maps a :class:`ParameterPoint` to the Euclidean gradient of ``cost``
        as an :class:`AmbientVector`.
    theta0 : ParameterPoint
        Starting point.
    config : OptimizerConfig

    Returns
    -------
    theta : ParameterPoint
    report : OptimizerReport

    Raises
    ------
    StallError
        When backtracking finds no step satisfying the Armijo condition. The
        exception carries the current iterate and the report so far.
    """
    return _descent(cost, egrad, theta0, config, mf.fim_inner, mf.egrad_to_rgrad, "rgd")


def product_baseline_minimize(cost, egrad, theta0, config=OptimizerConfig()):
    """Same loop as :func:`rgd_minimize` under the uncoupled product metric."""
    return _descent(cost, egrad, theta0, config, mf.product_inner,
                    mf.product_egrad_to_rgrad, "product-baseline")
