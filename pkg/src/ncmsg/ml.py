"""Nearest-centroid classification of sample batches through statistical descriptors."""
from __future__ import annotations

import enum
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import divergence as dv
from . import estimators as es
from . import optim as op
from .errors import DimensionError, NCMSGError, StallError
from .manifold import ParameterPoint
from .model import BatchDataset, Penalty, RegularizationSpec, gaussian_point

logger = logging.getLogger(__name__)

MODEL_VERSION = 1
# a stall whose last gradient norm is within this factor of the tolerance is
# the line search hitting floating-point resolution, not a failed estimate
STALL_ACCEPT_FACTOR = 10.0


class Descriptor(enum.Enum):
    RAW_BATCH = "raw-batch"
    GAUSS_MEAN = "gauss-mean"
    GAUSS_ZERO_MEAN_MOMENT = "gauss-zero-mean-moment"
    GAUSS_MLE_PAIR = "gauss-mle-pair"
    NCMSG_THETA = "ncmsg-theta"


class Divergence(enum.Enum):
    EUCLIDEAN = "euclidean"
    GAUSS_SYM_KL = "gauss-sym-kl"
    NCMSG_SYM_KL = "ncmsg-sym-kl"


_COMPATIBLE = {
    Divergence.EUCLIDEAN: {Descriptor.RAW_BATCH, Descriptor.GAUSS_MEAN,
                           Descriptor.GAUSS_ZERO_MEAN_MOMENT},
    Divergence.GAUSS_SYM_KL: {Descriptor.GAUSS_ZERO_MEAN_MOMENT, Descriptor.GAUSS_MLE_PAIR},
    Divergence.NCMSG_SYM_KL: {Descriptor.NCMSG_THETA},
}


@dataclass(frozen=True)
class ClassifierSpec:
    descriptor: Descriptor
    divergence: Divergence
    regularization: RegularizationSpec = field(default_factory=RegularizationSpec)

    def __post_init__(self):
        object.__setattr__(self, "descriptor", Descriptor(self.descriptor))
        object.__setattr__(self, "divergence", Divergence(self.divergence))
        if self.descriptor not in _COMPATIBLE[self.divergence]:
            raise ValueError(f"descriptor {self.descriptor.value} cannot be used with "
                             f"divergence {self.divergence.value}")

    @property
    def name(self):
        return f"{self.descriptor.value}/{self.divergence.value}"

    def to_dict(self):
        reg = self.regularization
        return {"descriptor": self.descriptor.value, "divergence": self.divergence.value,
                "beta": reg.beta, "kappa": reg.kappa, "penalty": reg.penalty.value}

    @classmethod
    def from_dict(cls, d):
        reg = RegularizationSpec(d.get("kappa", 1.0), d.get("beta", 0.0),
                                 Penalty(d.get("penalty", Penalty.SQUARED_LOG.value)))
        return cls(d["descriptor"], d["divergence"], reg)


def six_classifiers(regularization=RegularizationSpec()):
    """The six descriptor/divergence pairs compared in the rigid-transform benchmark."""
    pairs = [
        (Descriptor.RAW_BATCH, Divergence.EUCLIDEAN),
        (Descriptor.GAUSS_MEAN, Divergence.EUCLIDEAN),
        (Descriptor.GAUSS_ZERO_MEAN_MOMENT, Divergence.EUCLIDEAN),
        (Descriptor.GAUSS_ZERO_MEAN_MOMENT, Divergence.GAUSS_SYM_KL),
        (Descriptor.GAUSS_MLE_PAIR, Divergence.GAUSS_SYM_KL),
        (Descriptor.NCMSG_THETA, Divergence.NCMSG_SYM_KL),
    ]
    return [ClassifierSpec(d, v, regularization) for d, v in pairs]


def describe(samples, spec, config=op.OptimizerConfig()):
    """Descriptor of one batch given as an ``(n, p)`` array (already centered)."""
    x = np.asarray(samples, dtype=float)
    kind = spec.descriptor
    if kind is Descriptor.RAW_BATCH:
        return x.copy()
    data = BatchDataset(x)
    mean, scm, moment = es.gaussian_estimates(data)
    if kind is Descriptor.GAUSS_MEAN:
        return mean
    if kind is Descriptor.GAUSS_ZERO_MEAN_MOMENT:
        if spec.divergence is Divergence.EUCLIDEAN:
            return moment
        return (np.zeros(data.p), moment)
    if kind is Descriptor.GAUSS_MLE_PAIR:
        return (mean, scm)
    return _tolerate_roundoff(es.fit_ncmsg, config, data, spec.regularization, config)


def _tolerate_roundoff(fn, config, *args):
    try:
        return fn(*args)[0]
    except StallError as exc:
        last = exc.report.grad_norm_trace[-1] if exc.report else np.inf
        if last > STALL_ACCEPT_FACTOR * config.grad_norm_tolerance:
            raise
        logger.info("accepting iterate stalled at grad norm %.3e", last)
        return exc.theta


def divergence(a, b, spec):
    """Dissimilarity between two descriptors under ``spec.divergence``."""
    if spec.divergence is Divergence.EUCLIDEAN:
        return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))
    if spec.divergence is Divergence.GAUSS_SYM_KL:
        return dv.gaussian_sym_kl(a, b)
    return dv.sym_kl(a, b)


def center_of_mass(descriptors, spec, config=op.OptimizerConfig()):
    """Variance minimizer of ``descriptors`` under ``spec.divergence``."""
    if spec.divergence is Divergence.EUCLIDEAN:
        return np.mean(np.stack(descriptors), axis=0)
    if spec.divergence is Divergence.GAUSS_SYM_KL:
        theta = _tolerate_roundoff(dv.barycenter, config,
                                   [gaussian_point(m, s) for m, s in descriptors], config)
        return (theta.mu, theta.sigma)
    return _tolerate_roundoff(dv.barycenter, config, descriptors, config)


@dataclass(frozen=True, eq=False)
class CentroidModel:
    spec: ClassifierSpec
    classes: tuple
    centroids: tuple
    offset: np.ndarray
    p: int
    n: int

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError("a centroid model needs at least two classes")
        if len(self.centroids) != len(self.classes):
            raise ValueError("one centroid per class is required")

    @property
    def k(self):
        return len(self.classes)

    def to_json(self):
        return json.dumps({
            "version": MODEL_VERSION,
            "spec": self.spec.to_dict(),
            "p": self.p, "n": self.n, "K": self.k,
            "classes": list(self.classes),
            "offset": self.offset.tolist(),
            "centroids": [_encode(c) for c in self.centroids],
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        spec = ClassifierSpec.from_dict(d["spec"])
        centroids = tuple(_decode(c, spec) for c in d["centroids"])
        if len(centroids) != d["K"] or len(d["classes"]) != d["K"]:
            raise ValueError("model file: K does not match the stored centroids")
        return cls(spec, tuple(d["classes"]), centroids, np.asarray(d["offset"], dtype=float),
                   int(d["p"]), int(d["n"]))


def _encode(c):
    if isinstance(c, ParameterPoint):
        return c.to_dict()
    if isinstance(c, tuple):
        return {"mu": c[0].tolist(), "sigma": c[1].tolist()}
    return np.asarray(c).tolist()


def _decode(c, spec):
    if spec.divergence is Divergence.NCMSG_SYM_KL:
        return ParameterPoint.from_dict(c)
    if spec.divergence is Divergence.GAUSS_SYM_KL:
        return (np.asarray(c["mu"], dtype=float), np.asarray(c["sigma"], dtype=float))
    return np.asarray(c, dtype=float)


def _map(fn, items, workers):
    if workers is None or workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _describe_indexed(item, spec, config):
    index, samples = item
    try:
        return describe(samples, spec, config)
    except NCMSGError as exc:
        raise type(exc)(f"batch {index}: {exc}") from exc


def _describe_all(batches, offset, spec, config, workers):
    items = [(i, b.samples - offset) for i, b in enumerate(batches)]
    return _map(partial(_describe_indexed, spec=spec, config=config), items, workers)


def _sort_key(label):
    return (str(type(label)), label)


def train(batches, spec, config=op.OptimizerConfig(), classes=None, workers=None):
    """Fit one centroid per class from labeled batches.

    Batches are centered by the global training mean before description. Each
    centroid is the center of mass of its class under ``spec.divergence``.

    Parameters
    ----------
    batches : list of BatchDataset
        Each carries its class label.
    spec : ClassifierSpec
    config : OptimizerConfig
        Used by the NC-MSG fits and by the KL barycenters.
    classes : sequence, optional
        Expected class labels; an error is raised if one has no batch.
    workers : int, optional
        Process count for descriptor computation.
    """
    batches = list(batches)
    if not batches:
        raise ValueError("no training batches")
    if any(b.label is None for b in batches):
        raise ValueError("every training batch needs a label")
    p, n = batches[0].p, batches[0].n
    for i, b in enumerate(batches):
        if b.p != p or b.n != n:
            raise DimensionError(f"batch {i} has shape ({b.n}, {b.p}), expected ({n}, {p})")
    present = sorted({b.label for b in batches}, key=_sort_key)
    if classes is not None:
        missing = [c for c in classes if c not in present]
        if missing:
            raise ValueError(f"no training batch for class(es) {missing}")
        present = sorted(set(classes), key=_sort_key)
    offset = np.mean(np.concatenate([b.samples for b in batches]), axis=0)
    descriptors = _describe_all(batches, offset, spec, config, workers)
    centroids = []
    for c in present:
        members = [d for d, b in zip(descriptors, batches) if b.label == c]
        centroids.append(center_of_mass(members, spec, config))
        logger.debug("class %r: centroid from %d batches", c, len(members))
    return CentroidModel(spec, tuple(present), tuple(centroids), offset, p, n)


def decision_matrix(model, batches, config=op.OptimizerConfig(), workers=None):
    """Divergence from every batch (rows) to every centroid (columns)."""
    batches = list(batches)
    for i, b in enumerate(batches):
        if b.p != model.p or b.n != model.n:
            raise DimensionError(f"batch {i} has shape ({b.n}, {b.p}); model expects "
                                 f"({model.n}, {model.p})")
    descriptors = _describe_all(batches, model.offset, model.spec, config, workers)
    return np.array([[divergence(d, c, model.spec) for c in model.centroids]
                     for d in descriptors])


def predict(model, batches, config=op.OptimizerConfig(), workers=None):
    """Label of the nearest centroid for each batch; ties go to the lowest class index."""
    scores = decision_matrix(model, batches, config, workers)
    return [model.classes[k] for k in np.argmin(scores, axis=1)]


def f1_weighted(y_true, y_pred):
    """Per-class F1 averaged with weights proportional to true-class support."""
    y_true, y_pred = list(y_true), list(y_pred)
    if len(y_true) != len(y_pred):
        raise ValueError(f"length mismatch: {len(y_true)} labels vs {len(y_pred)} predictions")
    if not y_true:
        raise ValueError("empty label sequence")
    t = np.array([str(v) for v in y_true])
    q = np.array([str(v) for v in y_pred])
    score = 0.0
    for c in np.unique(t):
        tp = np.sum((t == c) & (q == c))
        predicted, support = np.sum(q == c), np.sum(t == c)
        precision = tp / predicted if predicted else 0.0
        recall = tp / support
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        score += support * f1
    return float(score / len(t))
