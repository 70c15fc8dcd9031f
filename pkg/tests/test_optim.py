import numpy as np
import pytest

from conftest import random_point
from ncmsg import manifold as mf
from ncmsg import model as md
from ncmsg import optim as op
from ncmsg.errors import StallError
from ncmsg.manifold import ParameterPoint
from ncmsg.model import RegularizationSpec


def reg_problem(kappa=1.0):
    spec = RegularizationSpec(kappa=kappa)
    return (lambda th: md.reg_value(th, spec)), (lambda th: md.reg_egrad(th, spec))


@pytest.mark.parametrize("kwargs", [
    {"max_iterations": 0}, {"max_iterations": 2.5}, {"grad_norm_tolerance": 0.0},
    {"armijo_c1": 0.0}, {"armijo_c1": 1.0}, {"backtrack_factor": 1.0},
    {"backtrack_factor": 0.0}, {"initial_step": 0.0},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        op.OptimizerConfig(**kwargs)


@pytest.mark.parametrize("minimize, inner", [
    (op.rgd_minimize, mf.fim_inner),
    (op.product_baseline_minimize, mf.product_inner),
])
def test_descent_trace_satisfies_armijo(rng, minimize, inner):
    cost, egrad = reg_problem(1.5)
    config = op.OptimizerConfig(max_iterations=300)
    theta, report = minimize(cost, egrad, random_point(rng, 3, 6), config)
    k = report.iterations
    assert len(report.cost_trace) == len(report.grad_norm_trace) == len(report.step_trace) == k + 1
    for i in range(k):
        drop = report.cost_trace[i] - report.cost_trace[i + 1]
        assert drop >= config.armijo_c1 * report.step_trace[i] * report.grad_norm_trace[i] ** 2
    assert report.cost_trace[-1] == pytest.approx(cost(theta))
    assert report.wall_time >= 0


def test_rgd_converges_on_the_regularizer(rng):
    cost, egrad = reg_problem(2.0)
    theta, report = op.rgd_minimize(cost, egrad, random_point(rng, 4, 10))
    assert report.converged
    assert report.grad_norm_trace[-1] <= 1e-6
    np.testing.assert_allclose(theta.sigma, 2.0 * np.eye(4), atol=1e-6)
    assert report.iterations_to(1e-6) == report.iterations


def test_converged_start_takes_no_step():
    cost, egrad = reg_problem()
    theta0 = ParameterPoint(np.zeros(2), np.eye(2), np.ones(3))
    theta, report = op.rgd_minimize(cost, egrad, theta0)
    assert theta is theta0 and report.iterations == 0 and report.converged


def test_budget_exhaustion_is_reported(rng):
    cost, egrad = reg_problem()
    _, report = op.rgd_minimize(cost, egrad, random_point(rng, 3, 5),
                                op.OptimizerConfig(max_iterations=2))
    assert report.iterations == 2 and not report.converged
    assert report.iterations_to(1e-300) is None


def test_stall_carries_iterate_and_report(rng):
    """Every move away from the start raises the cost, so no step is admissible."""
    cost, egrad = reg_problem()
    theta0 = random_point(rng, 3, 5)
    with pytest.raises(StallError) as info:
        op.rgd_minimize(lambda th: 0.0 if th is theta0 else 1.0, egrad, theta0)
    assert info.value.theta is theta0
    assert info.value.report.grad_norm_trace


def test_non_finite_gradient_stalls(rng):
    cost, egrad = reg_problem()

    def bad(th):
        g = egrad(th)
        return md.AmbientVector(g.d_mu, g.d_sigma, g.d_tau * np.nan)

    with pytest.raises(StallError, match="non-finite"):
        op.rgd_minimize(cost, bad, random_point(rng, 2, 4))


def test_unevaluable_candidates_are_rejected(rng):
    """A cost that fails far from the start forces backtracking, not a crash."""
    cost, egrad = reg_problem()
    theta0 = random_point(rng, 3, 5)
    f0 = cost(theta0)

    def fragile(th):
        if np.linalg.norm(th.mu - theta0.mu) > 1e-3 or cost(th) > 10 * f0:
            raise ValueError("out of domain")
        return cost(th)

    theta, report = op.rgd_minimize(fragile, egrad, theta0, op.OptimizerConfig(max_iterations=50))
    assert report.cost_trace[-1] < f0


def test_step_cap_limits_the_first_trial(rng):
    cost, egrad = reg_problem()
    theta0 = random_point(rng, 3, 5, spread=3.0)
    config = op.OptimizerConfig(max_iterations=1, cap_by_max_step=True, initial_step=1e6)
    _, report = op.rgd_minimize(cost, egrad, theta0, config)
    direction = -mf.egrad_to_rgrad(theta0, egrad(theta0))
    assert report.step_trace[0] <= 0.5 * mf.max_step(theta0, direction)


def test_interpolated_backtracking_finds_the_quadratic_minimizer():
    # phi(t) = (1 - 4t)^2 with phi(0) = 1, phi'(0) = -8 and phi(1) = 9
    assert op._next_trial(1.0, 1.0, 9.0, 8.0, 0.5, True) == pytest.approx(0.25)
    assert op._next_trial(1.0, 1.0, 9.0, 8.0, 0.5, False) == 0.5
    assert op._next_trial(1.0, 1.0, np.inf, 8.0, 0.5, True) == 0.5
    assert op._next_trial(1.0, 1.0, 1e9, 8.0, 0.5, True) == pytest.approx(op.MIN_SHRINK)


@pytest.mark.parametrize("interpolate", [True, False])
def test_both_backtracking_rules_respect_armijo(rng, interpolate):
    cost, egrad = reg_problem(0.7)
    config = op.OptimizerConfig(max_iterations=50, interpolate=interpolate)
    _, report = op.rgd_minimize(cost, egrad, random_point(rng, 3, 6), config)
    for i in range(report.iterations):
        assert report.cost_trace[i + 1] <= report.cost_trace[i] - config.armijo_c1 * \
            report.step_trace[i] * report.grad_norm_trace[i] ** 2


def test_report_rows_and_iterations_to():
    report = op.OptimizerReport(2, [3.0, 2.0, 1.0], [1.0, 1e-3, 1e-7], [0.5, 0.25, 0.0])
    assert list(report.rows()) == [(0, 3.0, 1.0, 0.5), (1, 2.0, 1e-3, 0.25), (2, 1.0, 1e-7, 0.0)]
    assert report.iterations_to(1e-2) == 1
    assert report.iterations_to(1e-9) is None
