"""Fisher information geometry of the NC-MSG parameter manifold.

A point is ``theta = (mu, sigma, tau)`` with ``mu`` in R^p, ``sigma`` SPD of
size p and ``tau`` a positive n-vector whose entries multiply to one. All
functions here are pure and work on small dense numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, InvalidPointError, NotTangentError, StepTooLargeError

SYM_RTOL = 1e-12
LOG_PRODUCT_TOL = 1e-10
TANGENT_RTOL = 1e-10


def sym(a):
    """Symmetric part of a square matrix."""
    return 0.5 * (a + a.T)


def _frozen(x, ndim):
    arr = np.array(x, dtype=float)
    if arr.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ParameterPoint:
    """Location ``mu``, scatter ``sigma`` and textures ``tau``.

    Construction validates every manifold constraint and raises
    :class:`InvalidPointError` on failure.
    """

    mu: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen(self.mu, 1))
        object.__setattr__(self, "sigma", _frozen(self.sigma, 2))
        object.__setattr__(self, "tau", _frozen(self.tau, 1))
        p = self.mu.shape[0]
        if self.sigma.shape != (p, p):
            raise DimensionError(f"sigma has shape {self.sigma.shape}, expected ({p}, {p})")
        if self.tau.shape[0] < 1:
            raise DimensionError("tau must be non-empty")
        _check_point(self.sigma, self.tau)

    @property
    def p(self):
        return self.mu.shape[0]

    @property
    def n(self):
        return self.tau.shape[0]

    @classmethod
    def normalized(cls, mu, sigma, tau):
        """Build a point after rescaling ``tau`` to unit product in log-space."""
        return cls(mu, sym(np.asarray(sigma, dtype=float)), normalize_textures(tau))

    def to_dict(self):
        return {
            "p": self.p,
            "n": self.n,
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "tau": self.tau.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        point = cls(d["mu"], d["sigma"], d["tau"])
        if ("p" in d and d["p"] != point.p) or ("n" in d and d["n"] != point.n):
            raise DimensionError("declared (p, n) do not match the arrays")
        return point


def _check_point(sigma, tau):
    if not np.all(np.isfinite(sigma)) or not np.all(np.isfinite(tau)):
        raise InvalidPointError("non-finite entries")
    scale = np.max(np.abs(sigma))
    if np.max(np.abs(sigma - sigma.T)) > SYM_RTOL * scale:
        raise InvalidPointError("sigma is not symmetric")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise InvalidPointError("sigma is not positive definite") from exc
    if np.any(tau <= 0):
        raise InvalidPointError("textures must be strictly positive")
    if abs(np.sum(np.log(tau))) > LOG_PRODUCT_TOL:
        raise InvalidPointError(
            f"texture product is not one (sum of logs = {np.sum(np.log(tau)):.3e})"
        )


def normalize_textures(x):
    """Map a positive vector to ``(prod x)^(-1/n) x``, computed in log-space."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise InvalidPointError("textures must be finite and strictly positive")
    logs = np.log(x)
    return np.exp(logs - np.mean(logs))


@dataclass(frozen=True, eq=False)
class AmbientVector:
    """An unconstrained increment ``(d_mu, d_sigma, d_tau)``."""

    d_mu: np.ndarray
    d_sigma: np.ndarray
    d_tau: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d_mu", _frozen(self.d_mu, 1))
        object.__setattr__(self, "d_sigma", _frozen(self.d_sigma, 2))
        object.__setattr__(self, "d_tau", _frozen(self.d_tau, 1))
        p = self.d_mu.shape[0]
        if self.d_sigma.shape != (p, p):
            raise DimensionError(f"d_sigma has shape {self.d_sigma.shape}, expected ({p}, {p})")

    @classmethod
    def zeros(cls, p, n):
        return cls(np.zeros(p), np.zeros((p, p)), np.zeros(n))

    def _result_type(self, other):
        return type(self) if type(other) is type(self) else AmbientVector

    def __add__(self, other):
        return self._result_type(other)(self.d_mu + other.d_mu, self.d_sigma + other.d_sigma,
                                        self.d_tau + other.d_tau)

    def __sub__(self, other):
        return self._result_type(other)(self.d_mu - other.d_mu, self.d_sigma - other.d_sigma,
                                        self.d_tau - other.d_tau)

    def __mul__(self, c):
        return type(self)(c * self.d_mu, c * self.d_sigma, c * self.d_tau)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def flat(self):
        """Concatenate the three blocks into one vector."""
        return np.concatenate([self.d_mu, self.d_sigma.ravel(), self.d_tau])


class TangentVector(AmbientVector):
    """An increment with symmetric ``d_sigma`` and ``d_tau`` orthogonal to ``1/tau``.

    The texture condition depends on the base point, so it is checked by
    :func:`check_tangent` rather than at construction.
    """

    def __post_init__(self):
        super().__post_init__()
        scale = max(np.max(np.abs(self.d_sigma), initial=0.0), np.finfo(float).tiny)
        if np.max(np.abs(self.d_sigma - self.d_sigma.T), initial=0.0) > SYM_RTOL * scale:
            raise NotTangentError("d_sigma is not symmetric")


def _check_dims(theta, xi):
    if xi.d_mu.shape[0] != theta.p or xi.d_tau.shape[0] != theta.n:
        raise DimensionError(
            f"vector of size (p={xi.d_mu.shape[0]}, n={xi.d_tau.shape[0]}) "
            f"does not match point (p={theta.p}, n={theta.n})"
        )


def check_tangent(theta, xi):
    """Raise :class:`NotTangentError` unless ``xi`` lies in the tangent space at ``theta``."""
    _check_dims(theta, xi)
    if not isinstance(xi, TangentVector):
        xi = TangentVector(xi.d_mu, xi.d_sigma, xi.d_tau)
    inv_tau = 1.0 / theta.tau
    lhs = abs(xi.d_tau @ inv_tau)
    if lhs > TANGENT_RTOL * np.linalg.norm(xi.d_tau) * np.linalg.norm(inv_tau) + 1e-300:
        raise NotTangentError(f"d_tau is not orthogonal to 1/tau (residual {lhs:.3e})")
    return xi


def _chol(theta):
    return sla.cho_factor(theta.sigma, lower=True)


def fim_inner(theta, xi, eta):
    """Fisher information metric at ``theta`` for two ambient vectors."""
    _check_dims(theta, xi)
    _check_dims(theta, eta)
    c = _chol(theta)
    tau = theta.tau
    w = np.sum(1.0 / tau)
    mu_term = w * (xi.d_mu @ sla.cho_solve(c, eta.d_mu))
    a = sla.cho_solve(c, xi.d_sigma.T)
    b = sla.cho_solve(c, eta.d_sigma)
    sigma_term = 0.5 * theta.n * np.sum(a * b.T)
    tau_term = 0.5 * theta.p * np.sum((xi.d_tau / tau) * (eta.d_tau / tau))
    return float(mu_term + sigma_term + tau_term)


def fim_norm(theta, xi):
    return float(np.sqrt(max(fim_inner(theta, xi, xi), 0.0)))


def project(theta, xi):
    """FIM-orthogonal projection of an ambient vector onto the tangent space."""
    _check_dims(theta, xi)
    tau = theta.tau
    d_tau = xi.d_tau - (xi.d_tau @ (1.0 / tau)) / theta.n * tau
    return TangentVector(xi.d_mu, sym(xi.d_sigma), d_tau)


def egrad_to_rgrad(theta, g):
    """Riemannian gradient under the FIM from the Euclidean gradient ``g``."""
    _check_dims(theta, g)
    sigma, tau = theta.sigma, theta.tau
    w = np.sum(1.0 / tau)
    return project(theta, AmbientVector(
        sigma @ g.d_mu / w,
        (2.0 / theta.n) * sigma @ g.d_sigma @ sigma,
        (2.0 / theta.p) * tau**2 * g.d_tau,
    ))


def product_inner(theta, xi, eta):
    """Uncoupled product metric: Euclidean on mu, affine-invariant on sigma, log-scale on tau."""
    _check_dims(theta, xi)
    _check_dims(theta, eta)
    c = _chol(theta)
    a = sla.cho_solve(c, xi.d_sigma.T)
    b = sla.cho_solve(c, eta.d_sigma)
    tau = theta.tau
    return float(xi.d_mu @ eta.d_mu + np.sum(a * b.T)
                 + np.sum((xi.d_tau / tau) * (eta.d_tau / tau)))


def product_egrad_to_rgrad(theta, g):
    """Riemannian gradient under :func:`product_inner`.

    The tangent projection of the product metric has the same closed form as
    the FIM one, so :func:`project` is reused.
    """
    _check_dims(theta, g)
    sigma, tau = theta.sigma, theta.tau
    return project(theta, AmbientVector(g.d_mu, sigma @ sym(g.d_sigma) @ sigma, tau**2 * g.d_tau))


def connection(theta, xi, eta, d_eta_xi=None):
    """Levi-Civita connection ``nabla_xi eta`` of the FIM.

    ``d_eta_xi`` is the ambient directional derivative of the field ``eta``
    along ``xi``; ``None`` means a constant field.
    """
    xi = check_tangent(theta, xi)
    eta = check_tangent(theta, eta)
    if d_eta_xi is None:
        d_eta_xi = AmbientVector.zeros(theta.p, theta.n)
    _check_dims(theta, d_eta_xi)
    tau = theta.tau
    c = _chol(theta)
    w = np.sum(1.0 / tau)
    tau_m2 = tau**-2
    # xi_Sigma Sigma^{-1} v == (Sigma^{-1} xi_Sigma)^T v for symmetric blocks
    xs_si = sla.cho_solve(c, xi.d_sigma).T
    es_si = sla.cho_solve(c, eta.d_sigma).T
    g_mu = -0.5 * (
        (xi.d_tau @ tau_m2) / w * eta.d_mu + xs_si @ eta.d_mu
        + (eta.d_tau @ tau_m2) / w * xi.d_mu + es_si @ xi.d_mu
    )
    g_sigma = (w / theta.n) * np.outer(eta.d_mu, xi.d_mu) - xs_si @ eta.d_sigma
    quad = xi.d_mu @ sla.cho_solve(c, eta.d_mu)
    g_tau = quad / theta.p * np.ones(theta.n) - xi.d_tau * eta.d_tau / tau
    return project(theta, d_eta_xi + AmbientVector(g_mu, g_sigma, g_tau))


def _retraction_blocks(theta, xi, t):
    c = _chol(theta)
    sigma, tau = theta.sigma, theta.tau
    w = np.sum(1.0 / tau)
    xs_si = sla.cho_solve(c, xi.d_sigma).T
    quad = xi.d_mu @ sla.cho_solve(c, xi.d_mu)
    mu = theta.mu + t * xi.d_mu + 0.5 * t**2 * (
        (xi.d_tau @ tau**-2) / w * xi.d_mu + xs_si @ xi.d_mu)
    sig = sigma + t * xi.d_sigma + 0.5 * t**2 * (
        xs_si @ xi.d_sigma - (w / theta.n) * np.outer(xi.d_mu, xi.d_mu))
    x = tau + t * xi.d_tau + 0.5 * t**2 * (xi.d_tau**2 / tau - quad / theta.p)
    return mu, sym(sig), x


def retract(theta, xi, t=1.0):
    """Second-order retraction ``r(t)`` of the FIM starting at ``theta`` along ``xi``.

    Raises :class:`StepTooLargeError` when the step leaves the manifold.
    """
    _check_dims(theta, xi)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return theta
    mu, sig, x = _retraction_blocks(theta, xi, t)
    if not (np.all(np.isfinite(x)) and np.all(x > 0)):
        raise StepTooLargeError(f"texture leaves the positive orthant at t={t:.3e}")
    try:
        return ParameterPoint(mu, sig, normalize_textures(x))
    except InvalidPointError as exc:
        raise StepTooLargeError(f"retraction infeasible at t={t:.3e}: {exc}") from exc


def _positive_root(d, c, a):
    """Smallest positive root of ``d + c t - a t^2`` (``d > 0``, ``a > 0``)."""
    disc = np.sqrt(c * c + 4.0 * a * d)
    if c <= 0:
        return 2.0 * d / (disc - c)
    return (c + disc) / (2.0 * a)


def max_step(theta, xi):
    """Step bound ``t_max`` such that ``retract(theta, xi, t)`` is feasible for ``t < t_max``.

    The bound is sufficient, not tight. Returns ``inf`` when every ``t`` is
    feasible according to the bound.
    """
    _check_dims(theta, xi)
    sigma, tau = theta.sigma, theta.tau
    lam_sigma = np.linalg.eigvalsh(sigma)[0]
    lam_xi = np.linalg.eigvalsh(sym(xi.d_sigma))[0]
    tau_min = np.min(tau)
    xi_tau_min = np.min(xi.d_tau)
    if np.any(xi.d_mu != 0):
        w = np.sum(1.0 / tau)
        a1 = w * (xi.d_mu @ xi.d_mu) / (2.0 * theta.n)
        t1 = _positive_root(lam_sigma, lam_xi, a1)
        quad = xi.d_mu @ sla.cho_solve(_chol(theta), xi.d_mu)
        a2 = quad / (2.0 * theta.p)
        t2 = _positive_root(tau_min, xi_tau_min, a2) if a2 > 0 else (
            tau_min / -xi_tau_min if xi_tau_min < 0 else np.inf)
    else:
        t1 = lam_sigma / abs(lam_xi) if lam_xi < 0 else np.inf
        t2 = tau_min / abs(xi_tau_min) if xi_tau_min < 0 else np.inf
    return float(min(t1, t2))
