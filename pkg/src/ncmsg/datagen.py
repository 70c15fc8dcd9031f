"""Synthetic NC-MSG parameters and samples, rigid transforms, dataset persistence."""
from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import DatasetError, DimensionError, InvalidPointError
from .manifold import ParameterPoint
from .model import BatchDataset

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class SyntheticConfig:
    p: int
    n: int
    nu: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.p < 1 or self.n < 2:
            raise ValueError("need p >= 1 and n >= 2")
        if not self.nu > 0:
            raise ValueError("nu must be positive")


def haar_orthogonal(p, rng):
    """Haar-distributed orthogonal matrix via QR with sign correction."""
    q, r = np.linalg.qr(rng.standard_normal((p, p)))
    return q * np.sign(np.diag(r))


def log_gamma_textures(n, nu, rng):
    """Logs of ``n`` draws from Gamma(shape nu, scale 1/nu).

    For ``nu < 1`` the draw is boosted to shape ``nu + 1`` and corrected by
    ``U^(1/nu)`` in log-space, so tiny textures never underflow.
    """
    if nu >= 1:
        return np.log(rng.gamma(nu, 1.0 / nu, size=n))
    g = rng.gamma(nu + 1.0, 1.0, size=n)
    u = rng.random(n)
    return np.log(g) + np.log(u) / nu - np.log(nu)


def sample_textures(n, nu, rng):
    """Gamma textures renormalized to unit product."""
    logs = log_gamma_textures(n, nu, rng)
    return np.exp(logs - np.mean(logs))


def sample_parameters(cfg, rng=None):
    """Random point: Gaussian location, Haar eigenvectors with chi-square(1) eigenvalues, Gamma textures."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    mu = rng.standard_normal(cfg.p)
    for _ in range(100):
        u = haar_orthogonal(cfg.p, rng)
        lam = rng.chisquare(1, size=cfg.p)
        if np.min(lam) > 1e-12:
            break
    else:
        raise InvalidPointError("could not draw a non-degenerate scatter in 100 attempts")
    sigma = (u * lam) @ u.T
    sigma = 0.5 * (sigma + sigma.T)
    return ParameterPoint(mu, sigma, sample_textures(cfg.n, cfg.nu, rng))


def sample_batch(theta, seed, label=None):
    """Draw ``x_i ~ N(mu, tau_i sigma)`` for ``i = 1..n``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    chol = np.linalg.cholesky(theta.sigma)
    z = rng.standard_normal((theta.n, theta.p))
    x = theta.mu + np.sqrt(theta.tau)[:, None] * (z @ chol.T)
    return BatchDataset(x, label)


class TransformMode(enum.Enum):
    MEAN = "mean"
    ROTATION = "rotation"
    BOTH = "both"


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """``Q(t) = expm(t * skew)`` and ``mu(t) = t * offset_direction``."""

    skew: np.ndarray
    offset_direction: np.ndarray
    t: float = 1.0

    def __post_init__(self):
        skew = np.asarray(self.skew, dtype=float)
        if np.max(np.abs(skew + skew.T), initial=0.0) > 1e-12:
            raise ValueError("skew generator is not skew-symmetric")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        offset = np.asarray(self.offset_direction, dtype=float)
        if offset.shape != (skew.shape[0],):
            raise DimensionError("offset_direction does not match the generator size")
        object.__setattr__(self, "skew", skew)
        object.__setattr__(self, "offset_direction", offset)

    @classmethod
    def random(cls, p, rng, angle_scale=1.0, offset_scale=1.0):
        a = rng.standard_normal((p, p))
        skew = a - a.T
        skew *= angle_scale / max(np.linalg.norm(skew, 2), 1e-300)
        offset = rng.standard_normal(p)
        offset *= offset_scale / np.linalg.norm(offset)
        return cls(skew, offset)

    def at(self, t):
        return RigidTransform(self.skew, self.offset_direction, t)

    @property
    def rotation(self):
        return sla.expm(self.t * self.skew)

    @property
    def offset(self):
        return self.t * self.offset_direction


def rigid_transform(data, xf, mode=TransformMode.BOTH):
    """Apply ``x -> x + mu(t)``, ``x -> Q(t)^T x`` or both to every sample."""
    mode = TransformMode(mode)
    if xf.skew.shape[0] != data.p:
        raise DimensionError(f"transform of size {xf.skew.shape[0]} for data with p={data.p}")
    x = data.samples
    if mode in (TransformMode.ROTATION, TransformMode.BOTH):
        x = x @ xf.rotation  # rows become (Q^T x_i)^T
    if mode in (TransformMode.MEAN, TransformMode.BOTH):
        x = x + xf.offset
    return BatchDataset(x, data.label)


def transform_point(theta, q, offset):
    """Co-transform a parameter point: ``(Q^T mu + offset, Q^T sigma Q, tau)``."""
    sigma = q.T @ theta.sigma @ q
    return ParameterPoint(q.T @ theta.mu + offset, 0.5 * (sigma + sigma.T), theta.tau)


def save_dataset(path, batches):
    """Write a manifest plus one headerless CSV per batch into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    batches = list(batches)
    if not batches:
        raise DatasetError("refusing to write an empty dataset")
    p, n = batches[0].p, batches[0].n
    entries = []
    for i, b in enumerate(batches):
        if b.p != p:
            raise DimensionError(f"batch {i} has p={b.p}, expected {p}")
        name = f"batch_{i:05d}.csv"
        np.savetxt(path / name, b.samples, fmt="%.17g", delimiter=",")
        entries.append({"file": name, "label": b.label})
    labels = sorted({e["label"] for e in entries if e["label"] is not None}, key=str)
    manifest = {
        "version": FORMAT_VERSION,
        "p": p,
        "n": n if all(b.n == n for b in batches) else None,
        "classes": labels,
        "batches": entries,
    }
    with open(path / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return path / MANIFEST_NAME


def _read_batch(file, p):
    rows = []
    with open(file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            fields = line.strip().split(",")
            if len(fields) != p:
                raise DatasetError(f"{file}:{lineno}: expected {p} fields, found {len(fields)}")
            try:
                rows.append([float(v) for v in fields])
            except ValueError as exc:
                raise DatasetError(f"{file}:{lineno}: {exc}") from exc
    return rows


def load_dataset(path):
    """Read a dataset written by :func:`save_dataset`; returns a list of batches."""
    path = Path(path)
    manifest_file = path / MANIFEST_NAME if path.is_dir() else path
    root = manifest_file.parent
    try:
        with open(manifest_file, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise DatasetError(f"manifest not found: {manifest_file}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_file}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    for key in ("version", "p", "batches"):
        if key not in manifest:
            raise DatasetError(f"{manifest_file}: missing field '{key}'")
    if manifest["version"] != FORMAT_VERSION:
        raise DatasetError(f"{manifest_file}: unsupported version {manifest['version']}")
    if not manifest["batches"]:
        raise DatasetError(f"{manifest_file}: dataset is empty")
    p = int(manifest["p"])
    batches = []
    for i, entry in enumerate(manifest["batches"]):
        if "file" not in entry:
            raise DatasetError(f"{manifest_file}: batch {i} has no 'file' field")
        file = root / entry["file"]
        if not os.path.exists(file):
            raise DatasetError(f"batch file not found: {file}")
        rows = _read_batch(file, p)
        try:
            batches.append(BatchDataset(np.array(rows), entry.get("label")))
        except (ValueError, DimensionError) as exc:
            raise DatasetError(f"{file}: {exc}") from exc
    return batches


def save_point(path, theta):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(theta.to_dict(), fh)


def load_point(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return ParameterPoint.from_dict(json.load(fh))
    except (KeyError, json.JSONDecodeError) as exc:
        raise DatasetError(f"{path}: malformed parameter file ({exc})") from exc


def class_parameters(p, n, classes, nu=1.0, seed=0):
    """One independent NC-MSG parameter per class, drawn with seeds ``seed + c``."""
    return [sample_parameters(SyntheticConfig(p, n, nu, seed + c)) for c in range(classes)]


def labeled_batches(thetas, per_class, seed):
    """``per_class`` batches from each class parameter, labeled by class index.

    Batches are ordered class by class and drawn from one generator seeded
    with ``seed``.
    """
    rng = np.random.default_rng(seed)
    return [sample_batch(theta, rng, label=c)
            for c, theta in enumerate(thetas) for _ in range(per_class)]
