"""Benchmark harnesses: optimizer convergence, estimation MSE and classifier robustness."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import datagen as dg
from . import divergence as dv
from . import estimators as es
from . import ml
from . import model as md
from . import optim as op
from .errors import ConvergenceError, DegenerateDataError, StallError
from .manifold import ParameterPoint
from .model import BatchDataset

logger = logging.getLogger(__name__)

OPTIMIZERS = {"fim": op.rgd_minimize, "product": op.product_baseline_minimize}


@dataclass
class Run:
    """Outcome of one optimizer run; ``status`` is ``converged``, ``budget`` or ``stalled``."""

    report: op.OptimizerReport
    theta: ParameterPoint
    status: str


def _run(minimize, cost, egrad, theta0, config):
    try:
        theta, report = minimize(cost, egrad, theta0, config)
    except StallError as exc:
        logger.warning("%s", exc)
        return Run(exc.report, exc.theta, "stalled")
    return Run(report, theta, "converged" if report.converged else "budget")


def nll_problem(p, n, nu, beta, seed, kappa=1.0):
    """Cost, gradient and start point of the regularized NLL on one synthetic batch."""
    rng = np.random.default_rng(seed)
    theta = dg.sample_parameters(dg.SyntheticConfig(p, n, nu, seed), rng)
    data = dg.sample_batch(theta, rng)
    reg = md.RegularizationSpec(kappa, beta)
    return (lambda th: md.regularized_nll(th, data, reg),
            lambda th: md.regularized_nll_egrad(th, data, reg),
            es.initial_point(data))


def barycenter_problem(m, p, n, nu, seed):
    """Cost, gradient and medoid start of the sym-KL variance of ``m`` random points."""
    rng = np.random.default_rng(seed)
    cfg = dg.SyntheticConfig(p, n, nu, seed)
    points = [dg.sample_parameters(cfg, rng) for _ in range(m)]
    return (lambda th: dv.variance(th, points),
            lambda th: dv.variance_egrad(th, points),
            points[dv.medoid(points)])


def convergence_run(problem, optimizer, config):
    """Run ``optimizer`` (``"fim"`` or ``"product"``) on a ``(cost, egrad, theta0)`` triple."""
    cost, egrad, theta0 = problem
    return _run(OPTIMIZERS[optimizer], cost, egrad, theta0, config)


def trace_rows(run, **labels):
    """One row per iterate: the given labels, then iteration, cost, grad norm, step, status."""
    prefix = list(labels.values())
    return [prefix + [k, c, g, s, run.status] for k, c, g, s in run.report.rows()]


# --- estimation error -------------------------------------------------------

MSE_METHODS = ("gaussian", "tyler-joint", "tyler-known-location", "proposed")


def _mse_trial(trial, mu, sigma, n, nu, seed, config):
    rng = np.random.default_rng(seed + trial)
    tau = dg.sample_textures(n, nu, rng)
    data = dg.sample_batch(ParameterPoint(mu, sigma, tau), rng)

    def err(m_hat, s_hat):
        e_mu = np.nan if m_hat is None else float(np.sum((m_hat - mu) ** 2))
        e_sigma = np.nan if s_hat is None else float(np.sum((s_hat - sigma) ** 2))
        return e_mu, e_sigma

    out = {}
    m_g, s_g, _ = es.gaussian_estimates(data)
    out["gaussian"] = err(m_g, s_g) + (False,)
    try:
        out["tyler-joint"] = err(*es.tyler_joint(data)) + (False,)
    except ConvergenceError as exc:
        out["tyler-joint"] = err(*exc.last) + (True,)
    except DegenerateDataError:
        out["tyler-joint"] = (np.nan, np.nan, True)
    try:
        out["tyler-known-location"] = err(None, es.tyler_fixed_location(data, mu)) + (False,)
    except ConvergenceError as exc:
        out["tyler-known-location"] = err(None, exc.last[1]) + (True,)
    except DegenerateDataError:
        out["tyler-known-location"] = (np.nan, np.nan, True)
    try:
        theta, _ = es.fit_ncmsg(data, md.RegularizationSpec(beta=0.0), config)
        failed = False
    except StallError as exc:
        theta, failed = exc.theta, True
    out["proposed"] = err(theta.mu, theta.sigma) + (failed,)
    return out


def mse_benchmark(p, n_grid, trials, nu=0.1, seed=0, config=op.OptimizerConfig(), workers=None):
    """Monte-Carlo MSE of location and scatter for the four estimators.

    ``(mu, sigma)`` is drawn once from ``seed``; trial ``t`` redraws the
    textures and the samples from ``seed + t``. A failed estimate (optimizer
    stall, Tyler non-convergence) still contributes its last iterate and is
    counted in the ``failures`` column; degenerate Tyler runs are excluded.

    Returns
    -------
    list of rows ``[method, n, mse_mu, mse_sigma, failures]``
    """
    base = dg.sample_parameters(dg.SyntheticConfig(p, 2, nu, seed))
    rows = []
    for n in n_grid:
        job = partial(_mse_trial, mu=base.mu, sigma=base.sigma, n=n, nu=nu, seed=seed,
                      config=config)
        if workers and workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(job, range(trials)))
        else:
            results = [job(t) for t in range(trials)]
        for method in MSE_METHODS:
            vals = np.array([r[method] for r in results], dtype=float)
            rows.append([method, n,
                         float(np.nanmean(vals[:, 0])) if method != "tyler-known-location"
                         else float("nan"),
                         float(np.nanmean(vals[:, 1])), int(np.sum(vals[:, 2]))])
        logger.info("mse: n=%d done", n)
    return rows


# --- classifier robustness -----------------------------------------------------

def _transform_about(batch, xf, mode, origin):
    moved = dg.rigid_transform(BatchDataset(batch.samples - origin, batch.label), xf, mode)
    return BatchDataset(moved.samples + origin, batch.label)


def robustness_benchmark(train, test, specs, xf, mode, t_grid, config=op.OptimizerConfig(),
                         workers=None):
    """F1-weighted of each classifier on the test set transformed at every ``t``.

    Centroids are trained once on the untransformed training set. Test batches
    are transformed in the frame centered at the global training mean, the
    frame every descriptor is computed in.

    Returns
    -------
    list of rows ``[classifier, mode, t, f1]``
    """
    truth = [b.label for b in test]
    origin = np.mean(np.concatenate([b.samples for b in train]), axis=0)
    rows = []
    for spec in specs:
        model = ml.train(train, spec, config, workers=workers)
        for t in t_grid:
            batches = test if t == 0 else [_transform_about(b, xf.at(t), mode, origin)
                                           for b in test]
            f1 = ml.f1_weighted(truth, ml.predict(model, batches, config, workers))
            rows.append([spec.name, dg.TransformMode(mode).value, float(t), f1])
        logger.info("robustness: %s done", spec.name)
    return rows
