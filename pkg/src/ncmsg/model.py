"""Negative log-likelihood of the NC-MSG and its eigenvalue regularization."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Hashable, Optional

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, InvalidPointError
from .manifold import AmbientVector, ParameterPoint


@dataclass(frozen=True, eq=False)
class BatchDataset:
    """``n`` samples in R^p stored row-wise, with an optional class label."""

    samples: np.ndarray
    label: Optional[Hashable] = None

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        if x.ndim != 2:
            raise DimensionError(f"samples must be 2-d (n, p), got shape {x.shape}")
        if x.shape[0] < 2 or x.shape[1] < 1:
            raise DimensionError(f"need n >= 2 and p >= 1, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain non-finite values")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def p(self):
        return self.samples.shape[1]


class Penalty(enum.Enum):
    SQUARED_LOG = "squared-log"


@dataclass(frozen=True)
class RegularizationSpec:
    """Penalty ``beta * sum_ij r(tau_i lambda_j / kappa)`` pulling ``tau_i Sigma`` toward ``kappa I``."""

    kappa: float = 1.0
    beta: float = 0.0
    penalty: Penalty = Penalty.SQUARED_LOG

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.beta >= 0:
            raise ValueError("beta must be nonnegative")
        object.__setattr__(self, "penalty", Penalty(self.penalty))


def _check(theta, data):
    if data.p != theta.p or data.n != theta.n:
        raise DimensionError(
            f"data of shape (n={data.n}, p={data.p}) does not match point (p={theta.p}, n={theta.n})"
        )


def _whiten(theta, data):
    try:
        chol = np.linalg.cholesky(theta.sigma)
    except np.linalg.LinAlgError as exc:
        raise InvalidPointError("sigma is not positive definite") from exc
    centered = data.samples - theta.mu
    z = sla.solve_triangular(chol, centered.T, lower=True)
    return chol, centered, z


def nll(theta, data):
    """Negative log-likelihood, additive constants dropped."""
    _check(theta, data)
    chol, _, z = _whiten(theta, data)
    q = np.sum(z * z, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    tau = theta.tau
    return 0.5 * float(theta.p * np.sum(np.log(tau)) + theta.n * logdet + np.sum(q / tau))


def nll_egrad(theta, data):
    """Euclidean gradient of :func:`nll` in ``(mu, sigma, tau)``."""
    _check(theta, data)
    chol, _, z = _whiten(theta, data)
    tau = theta.tau
    q = np.sum(z * z, axis=0)
    # Sigma^{-1} (x_i - mu) for every sample, as columns
    s_inv_c = sla.solve_triangular(chol.T, z, lower=False)
    g_mu = -s_inv_c @ (1.0 / tau)
    s_inv = sla.cho_solve((chol, True), np.eye(theta.p))
    g_sigma = 0.5 * (theta.n * s_inv - (s_inv_c / tau) @ s_inv_c.T)
    g_tau = 0.5 * (theta.p / tau - q / tau**2)
    return AmbientVector(g_mu, 0.5 * (g_sigma + g_sigma.T), g_tau)


def _log_eigs(theta):
    lam, u = np.linalg.eigh(theta.sigma)
    if lam[0] <= 0:
        raise InvalidPointError("sigma is not positive definite")
    return lam, u, np.log(lam)


def reg_value(theta, spec):
    """Regularizer ``sum_i sum_j log^2(tau_i lambda_j / kappa)``."""
    _, _, log_lam = _log_eigs(theta)
    dev = np.log(theta.tau)[:, None] + log_lam[None, :] - np.log(spec.kappa)
    return float(np.sum(dev * dev))


def reg_egrad(theta, spec):
    """Euclidean gradient of :func:`reg_value`."""
    lam, u, log_lam = _log_eigs(theta)
    log_tau = np.log(theta.tau)
    log_k = np.log(spec.kappa)
    s = np.sum(log_tau)
    g_sigma = (u * (2.0 * (s + theta.n * (log_lam - log_k)) / lam)) @ u.T
    g_tau = (2.0 / theta.tau) * (theta.p * log_tau + np.sum(log_lam) - theta.p * log_k)
    return AmbientVector(np.zeros(theta.p), 0.5 * (g_sigma + g_sigma.T), g_tau)


def regularized_nll(theta, data, spec):
    value = nll(theta, data)
    if spec.beta:
        value += spec.beta * reg_value(theta, spec)
    return value


def regularized_nll_egrad(theta, data, spec):
    g = nll_egrad(theta, data)
    if spec.beta:
        g = g + spec.beta * reg_egrad(theta, spec)
    return g


def gaussian_point(mu, sigma):
    """Embed a Gaussian ``(mu, sigma)`` as an NC-MSG point with a single unit texture."""
    return ParameterPoint(mu, sigma, np.ones(1))
