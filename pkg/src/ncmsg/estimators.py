"""Estimation front-ends: regularized NC-MSG MLE plus Gaussian and Tyler baselines."""
from __future__ import annotations

import logging
import warnings

import numpy as np

from . import model as md
from . import optim as op
from .errors import ConvergenceError, DegenerateDataError
from .manifold import ParameterPoint

logger = logging.getLogger(__name__)

TEXTURE_FLOOR = 1e-8


def gaussian_estimates(data):
    """Sample mean, sample covariance and zero-mean second moment, all divided by ``n``."""
    x = data.samples
    mu = x.mean(axis=0)
    c = x - mu
    return mu, c.T @ c / data.n, x.T @ x / data.n


def _quad_forms(centered, sigma):
    chol = np.linalg.cholesky(sigma)
    z = np.linalg.solve(chol, centered.T)
    return np.sum(z * z, axis=0)


def initial_point(data):
    """Moment-based starting point for :func:`fit_ncmsg`.

    The location is the sample mean, the scatter the SCM and the textures the
    Mahalanobis distances over ``p`` (floored), then both are rescaled so the
    textures multiply to one.
    """
    mu, scm, _ = gaussian_estimates(data)
    try:
        q = _quad_forms(data.samples - mu, scm)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError("sample covariance is singular; cannot initialize") from exc
    tau = np.maximum(q / data.p, TEXTURE_FLOOR)
    log_g = np.mean(np.log(tau))
    g = np.exp(log_g)
    return ParameterPoint(mu, scm * g, np.exp(np.log(tau) - log_g))


def fit_ncmsg(data, reg=md.RegularizationSpec(), config=op.OptimizerConfig(), theta0=None):
    """Regularized maximum-likelihood estimate of ``(mu, sigma, tau)`` by FIM gradient descent.

    Parameters
    ----------
    data : BatchDataset
    reg : RegularizationSpec
        ``beta = 0`` gives the plain NLL, whose minimizer may not exist.
    config : OptimizerConfig
    theta0 : ParameterPoint, optional
        Starting point; defaults to :func:`initial_point`.

    Returns
    -------
    theta : ParameterPoint
    report : OptimizerReport

    Raises
    ------
    StallError
        Propagated from the optimizer.
    """
    if data.n <= data.p:
        warnings.warn(f"n={data.n} <= p={data.p}: the sample covariance used for "
                      "initialization is singular", RuntimeWarning, stacklevel=2)
    if reg.beta == 0:
        logger.info("beta = 0: fitting the unregularized NLL")
    if theta0 is None:
        theta0 = initial_point(data)

    def cost(theta):
        return md.regularized_nll(theta, data, reg)

    def egrad(theta):
        return md.regularized_nll_egrad(theta, data, reg)

    return op.rgd_minimize(cost, egrad, theta0, config)


def _tyler_step(x, mu, sigma, update_location):
    c = x - mu
    q = _quad_forms(c, sigma)
    if np.min(q) <= 0:
        raise DegenerateDataError("a sample coincides with the current location")
    p, n = x.shape[1], x.shape[0]
    if update_location:
        w = 1.0 / np.sqrt(q)
        mu = w @ x / np.sum(w)
    new_sigma = (p / n) * (c / q[:, None]).T @ c
    return mu, 0.5 * (new_sigma + new_sigma.T)


def _tyler(data, mu0, update_location, max_iter, tol):
    x = data.samples
    mu, sigma = mu0, np.eye(data.p)
    for it in range(max_iter):
        try:
            new_mu, new_sigma = _tyler_step(x, mu, sigma, update_location)
        except np.linalg.LinAlgError as exc:
            raise DegenerateDataError("scatter iterate became singular") from exc
        new_sigma /= np.trace(new_sigma) / data.p
        delta = np.linalg.norm(new_sigma - sigma, "fro") / np.linalg.norm(sigma, "fro")
        if update_location:
            delta = max(delta, np.linalg.norm(new_mu - mu) / max(np.linalg.norm(mu), 1e-12))
        mu, sigma = new_mu, new_sigma
        if delta < tol:
            logger.debug("tyler converged in %d iterations", it + 1)
            break
    else:
        raise ConvergenceError(f"Tyler iteration did not converge in {max_iter} iterations",
                               last=(mu, sigma))
    # scale so that the implied textures q_i / p multiply to one
    try:
        q = _quad_forms(x - mu, sigma)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError("converged scatter is singular") from exc
    if np.min(q) <= 0:
        raise DegenerateDataError("a sample coincides with the estimated location")
    sigma = sigma * np.exp(np.mean(np.log(q / data.p)))
    return mu, sigma


def tyler_residual(data, mu, sigma):
    """Relative change of ``sigma`` under one scatter update at fixed ``mu``."""
    _, new_sigma = _tyler_step(data.samples, np.asarray(mu, dtype=float), sigma, False)
    return np.linalg.norm(new_sigma - sigma, "fro") / np.linalg.norm(sigma, "fro")


def tyler_joint(data, max_iter=1000, tol=1e-10):
    """Joint Tyler M-estimate of location and scatter.

    The location update averages the samples with weights ``q_i^(-1/2)``.
    The returned scatter is scaled so that the textures ``q_i / p`` it
    implies have unit product, matching the NC-MSG convention.

    Raises
    ------
    DegenerateDataError
        When a sample equals the current location estimate.
    ConvergenceError
        After ``max_iter`` iterations; carries the last iterate.
    """
    return _tyler(data, np.median(data.samples, axis=0), True, max_iter, tol)


def tyler_fixed_location(data, mu, max_iter=1000, tol=1e-10):
    """Tyler scatter estimate with the location known; returns ``sigma`` only."""
    return _tyler(data, np.asarray(mu, dtype=float), False, max_iter, tol)[1]
