import numpy as np
import pytest

from ncmsg.manifold import AmbientVector, ParameterPoint, project


def random_point(rng, p, n, spread=1.0):
    """Random point with well-conditioned scatter and moderately spread textures."""
    a = rng.standard_normal((p, p))
    sigma = a @ a.T / p + 0.5 * np.eye(p)
    tau = np.exp(spread * rng.standard_normal(n))
    return ParameterPoint.normalized(rng.standard_normal(p), sigma, tau)


def random_ambient(rng, p, n):
    return AmbientVector(rng.standard_normal(p), rng.standard_normal((p, p)),
                         rng.standard_normal(n))


def random_tangent(rng, theta, scale=1.0):
    xi = project(theta, random_ambient(rng, theta.p, theta.n))
    return xi * scale


def shifted(theta, d, h):
    """``theta + h d`` without manifold validation, for ambient finite differences."""
    pt = object.__new__(ParameterPoint)
    object.__setattr__(pt, "mu", theta.mu + h * d.d_mu)
    object.__setattr__(pt, "sigma", theta.sigma + h * d.d_sigma)
    object.__setattr__(pt, "tau", theta.tau + h * d.d_tau)
    return pt


def ambient_pairing(g, d):
    return float(g.d_mu @ d.d_mu + np.sum(g.d_sigma * d.d_sigma) + g.d_tau @ d.d_tau)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def mc_log_ratio(theta1, theta2, samples, rng, chunk=100_000):
    """Monte-Carlo mean and standard error of ``log p1(X) - log p2(X)`` for ``X ~ theta1``.

    Each draw is a full batch of ``n`` samples; the per-batch log-ratio is
    evaluated from the Gaussian densities directly.
    """
    n, p = theta1.n, theta1.p
    l1, l2 = np.linalg.cholesky(theta1.sigma), np.linalg.cholesky(theta2.sigma)
    inv2 = np.linalg.inv(theta2.sigma)
    logdet1 = 2 * np.sum(np.log(np.diag(l1)))
    logdet2 = 2 * np.sum(np.log(np.diag(l2)))
    const = 0.5 * np.sum(p * np.log(theta2.tau) + logdet2 - p * np.log(theta1.tau) - logdet1)
    values = []
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        z = rng.standard_normal((m, n, p))
        q1 = np.sum(z * z, axis=2)  # (x - mu1)^T (tau1 sigma1)^{-1} (x - mu1)
        x = theta1.mu + np.sqrt(theta1.tau)[None, :, None] * (z @ l1.T)
        d = x - theta2.mu
        q2 = np.einsum("mia,ab,mib->mi", d, inv2, d) / theta2.tau
        values.append(const + 0.5 * np.sum(q2 - q1, axis=1))
        done += m
    v = np.concatenate(values)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance check, with its measured values."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(rep, "nodeid", ""):
                continue
            if rep.when != "call" and outcome != "error":
                continue
            detail = dict(rep.user_properties).get("acceptance", "")
            name = rep.nodeid.split("::")[-1].removeprefix("test_").replace("_", " ")
            lines.append((rep.location[1], f"{'PASS' if outcome == 'passed' else 'FAIL'}  "
                                           f"{name}: {detail}"))
    if lines:
        terminalreporter.section("acceptance")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
