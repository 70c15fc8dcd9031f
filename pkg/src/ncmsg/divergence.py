"""Closed-form Kullback-Leibler divergences between NC-MSGs and their barycenters."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from . import optim as op
from .errors import DimensionError, InvalidPointError
from .manifold import AmbientVector, ParameterPoint
from .model import gaussian_point

CLAMP = 1e-10


def _cho(sigma):
    try:
        return sla.cho_factor(sigma, lower=True)
    except np.linalg.LinAlgError as exc:
        raise InvalidPointError("scatter matrix is not positive definite") from exc


def _logdet(cho):
    return 2.0 * np.sum(np.log(np.diag(cho[0])))


def _pair(theta1, theta2):
    if theta1.p != theta2.p or theta1.n != theta2.n:
        raise DimensionError(
            f"points live on different manifolds: (p={theta1.p}, n={theta1.n}) "
            f"vs (p={theta2.p}, n={theta2.n})"
        )


def kl(theta1, theta2):
    """KL divergence from the NC-MSG ``theta1`` to the NC-MSG ``theta2``.

    Values in ``(-1e-10, 0)`` caused by rounding are returned as 0.
    """
    _pair(theta1, theta2)
    c1, c2 = _cho(theta1.sigma), _cho(theta2.sigma)
    d = theta2.mu - theta1.mu
    # ||L2^{-1} L1||_F^2 is exactly p when the factors coincide
    whitened = sla.solve_triangular(c2[0], np.tril(c1[0]), lower=True)
    trace = np.sum(whitened**2)
    maha = d @ sla.cho_solve(c2, d)
    n, p = theta1.n, theta1.p
    value = 0.5 * (np.sum(theta1.tau / theta2.tau) * trace + np.sum(1.0 / theta2.tau) * maha
                   + n * (_logdet(c2) - _logdet(c1)) - n * p)
    if -CLAMP < value < 0:
        return 0.0
    return float(value)


def sym_kl(theta1, theta2):
    """Symmetrized divergence ``(kl(a, b) + kl(b, a)) / 2``."""
    # summing in a fixed order of the sorted pair keeps the result exactly symmetric
    a, b = kl(theta1, theta2), kl(theta2, theta1)
    return 0.5 * (min(a, b) + max(a, b))


def gaussian_kl(v1, v2):
    """KL divergence between Gaussians given as ``(mu, sigma)`` pairs."""
    return kl(gaussian_point(*v1), gaussian_point(*v2))


def gaussian_sym_kl(v1, v2):
    return sym_kl(gaussian_point(*v1), gaussian_point(*v2))


def kl_egrad_first(theta1, theta2):
    """Euclidean gradient of ``kl(., theta2)`` at ``theta1``."""
    _pair(theta1, theta2)
    c1, c2 = _cho(theta1.sigma), _cho(theta2.sigma)
    p, n = theta1.p, theta1.n
    s2_inv = sla.cho_solve(c2, np.eye(p))
    s1_inv = sla.cho_solve(c1, np.eye(p))
    d = theta2.mu - theta1.mu
    a = np.sum(theta1.tau / theta2.tau)
    b = np.sum(1.0 / theta2.tau)
    trace = np.sum(s2_inv * theta1.sigma)
    g_sigma = 0.5 * (a * s2_inv - n * s1_inv)
    return AmbientVector(-b * (s2_inv @ d), 0.5 * (g_sigma + g_sigma.T),
                         0.5 * trace / theta2.tau)


def kl_egrad_second(theta1, theta2):
    """Euclidean gradient of ``kl(theta1, .)`` at ``theta2``."""
    _pair(theta1, theta2)
    c2 = _cho(theta2.sigma)
    p, n = theta1.p, theta1.n
    s2_inv = sla.cho_solve(c2, np.eye(p))
    d = theta2.mu - theta1.mu
    s2_inv_d = s2_inv @ d
    a = np.sum(theta1.tau / theta2.tau)
    b = np.sum(1.0 / theta2.tau)
    trace = np.sum(s2_inv * theta1.sigma)
    maha = d @ s2_inv_d
    g_sigma = 0.5 * (-a * s2_inv @ theta1.sigma @ s2_inv - b * np.outer(s2_inv_d, s2_inv_d)
                     + n * s2_inv)
    g_tau = -0.5 * (theta1.tau * trace + maha) / theta2.tau**2
    return AmbientVector(b * s2_inv_d, 0.5 * (g_sigma + g_sigma.T), g_tau)


def variance(theta, points):
    """Mean symmetrized divergence from ``theta`` to every point."""
    return float(np.mean([sym_kl(theta, q) for q in points]))


def variance_egrad(theta, points):
    total = AmbientVector.zeros(theta.p, theta.n)
    for q in points:
        total = total + kl_egrad_first(theta, q) + kl_egrad_second(q, theta)
    return total * (0.5 / len(points))


def medoid(points):
    """Index of the point with the smallest total divergence to the others."""
    costs = [sum(sym_kl(a, b) for b in points) for a in points]
    return int(np.argmin(costs))


def barycenter(points, config=op.OptimizerConfig()):
    """Minimizer of :func:`variance` over the manifold, computed by FIM gradient descent.

    Starts from the medoid of ``points``.

    Returns
    -------
    theta : ParameterPoint
    report : OptimizerReport

    Raises
    ------
    ValueError
        On an empty list.
    StallError
        Propagated from the optimizer.
    """
    points = list(points)
    if not points:
        raise ValueError("barycenter of an empty list")
    for q in points[1:]:
        _pair(points[0], q)
    return op.rgd_minimize(lambda th: variance(th, points),
                           lambda th: variance_egrad(th, points),
                           points[medoid(points)], config)


def gaussian_barycenter(pairs, config=op.OptimizerConfig()):
    """Symmetrized-KL barycenter of Gaussians given as ``(mu, sigma)`` pairs."""
    theta, report = barycenter([gaussian_point(m, s) for m, s in pairs], config)
    return (theta.mu, theta.sigma), report
