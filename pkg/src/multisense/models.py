"""Reference probability-emitting classifiers.

Small window classifiers trained on one designated device's data and
treated as black boxes thereafter: everything outside this module consumes
only ``infer``.  Two variants: a Gaussian class-conditional model (closed
form, analytically checkable) and a multinomial logistic model trained by
full-batch gradient descent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .core import ClassPosterior, DeviceId, ModelId, SensorWindow, ValidationError

MODEL_VERSION = "1"
FEATURE_SPEC = "mean_std_absdiff"   # per channel: mean, std, mean |first diff|

VAR_FLOOR = 1e-6
LOGISTIC_STEP = 0.1
LOGISTIC_ITERS = 500


class ModelError(ValueError):
    """Raised on training/inference contract violations."""


def window_features(w: SensorWindow) -> np.ndarray:
    """Reduce a window to 3C features: per-channel mean, standard deviation
    and mean absolute first difference."""
    x = np.asarray(w.samples, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ModelError("non-finite feature input")
    return np.concatenate([
        x.mean(axis=1),
        x.std(axis=1),
        np.abs(np.diff(x, axis=1)).mean(axis=1),
    ])


def batch_features(samples: np.ndarray) -> np.ndarray:
    """window_features over a (T, C, L) array, returning (T, 3C)."""
    x = np.asarray(samples, dtype=float)
    return np.concatenate([
        x.mean(axis=2),
        x.std(axis=2),
        np.abs(np.diff(x, axis=2)).mean(axis=2),
    ], axis=1)


@dataclass(frozen=True)
class TrainingSet:
    """Labeled windows from exactly one device."""

    device: DeviceId
    windows: Sequence[SensorWindow]
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.windows) != labels.size:
            raise ModelError("windows/labels length mismatch")
        if any(w.device != self.device for w in self.windows):
            raise ModelError("training set must come from a single device")
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class Classifier:
    """Immutable fitted classifier; ``infer`` is its only public behavior."""

    id: ModelId
    training_device: DeviceId
    n_classes: int
    variant: str                    # "gaussian" | "logistic"
    n_channels: int
    # gaussian: class feature means/vars and log priors
    means: Optional[np.ndarray] = None      # (K, F)
    variances: Optional[np.ndarray] = None  # (K, F)
    log_priors: Optional[np.ndarray] = None
    # logistic: weights on standardized features plus bias column
    weights: Optional[np.ndarray] = None    # (K, F + 1)
    feat_mean: Optional[np.ndarray] = None
    feat_std: Optional[np.ndarray] = None


def _check_training_set(data: TrainingSet, n_classes: int) -> np.ndarray:
    if n_classes < 2:
        raise ModelError("need at least 2 classes")
    labels = data.labels
    if labels.size == 0:
        raise ModelError("empty training set")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ModelError("label outside [0, K)")
    present = np.unique(labels)
    if present.size < n_classes:
        missing = sorted(set(range(n_classes)) - set(present.tolist()))
        raise ModelError("missing training examples for classes %s" % missing)
    feats = np.stack([window_features(w) for w in data.windows])
    if not np.all(np.isfinite(feats)):
        raise ModelError("non-finite features in training data")
    return feats


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def fit_classifier(data: TrainingSet, n_classes: int,
                   variant: str = "gaussian", model_id: ModelId = 0,
                   seed: int = 0) -> Classifier:
    """Train a classifier; deterministic for a given seed (both variants
    are in fact fully deterministic)."""
    if variant not in ("gaussian", "logistic"):
        raise ModelError("unknown variant %r" % variant)
    feats = _check_training_set(data, n_classes)
    n_channels = data.windows[0].channels
    labels = data.labels

    if variant == "gaussian":
        k, f = n_classes, feats.shape[1]
        means = np.empty((k, f))
        variances = np.empty((k, f))
        priors = np.empty(k)
        for c in range(k):
            sub = feats[labels == c]
            means[c] = sub.mean(axis=0)
            variances[c] = np.maximum(sub.var(axis=0), VAR_FLOOR)
            priors[c] = sub.shape[0] / feats.shape[0]
        return Classifier(
            id=model_id, training_device=data.device, n_classes=n_classes,
            variant=variant, n_channels=n_channels,
            means=means, variances=variances, log_priors=np.log(priors),
        )

    # multinomial logistic, full-batch gradient descent on standardized
    # features with zero init
    mu = feats.mean(axis=0)
    sd = np.maximum(feats.std(axis=0), 1e-9)
    x = np.hstack([(feats - mu) / sd, np.ones((feats.shape[0], 1))])
    y = np.zeros((feats.shape[0], n_classes))
    y[np.arange(labels.size), labels] = 1.0
    w = np.zeros((n_classes, x.shape[1]))
    for _ in range(LOGISTIC_ITERS):
        p = _softmax(x @ w.T)
        grad = (p - y).T @ x / x.shape[0]
        w -= LOGISTIC_STEP * grad
    return Classifier(
        id=model_id, training_device=data.device, n_classes=n_classes,
        variant=variant, n_channels=n_channels,
        weights=w, feat_mean=mu, feat_std=sd,
    )


def _logits(c: Classifier, feats: np.ndarray) -> np.ndarray:
    if c.variant == "gaussian":
        diff = feats[..., None, :] - c.means            # (..., K, F)
        ll = -0.5 * np.sum(diff * diff / c.variances + np.log(c.variances),
                           axis=-1)
        return ll + c.log_priors
    z = (feats - c.feat_mean) / c.feat_std
    z = np.concatenate([z, np.ones(z.shape[:-1] + (1,))], axis=-1)
    return z @ c.weights.T


def infer(c: Classifier, w: SensorWindow) -> ClassPosterior:
    """Posterior over classes for one window."""
    if w.channels != c.n_channels:
        raise ModelError(
            "channel mismatch: window has %d channels, model expects %d"
            % (w.channels, c.n_channels)
        )
    feats = window_features(w)
    probs = _softmax(_logits(c, feats))
    return ClassPosterior(probs=probs, model=c.id)


def infer_batch(c: Classifier, samples: np.ndarray) -> np.ndarray:
    """Posterior matrix (T, K) for a (T, C, L) sample array."""
    if samples.shape[1] != c.n_channels:
        raise ModelError("channel mismatch in batch inference")
    return _softmax(_logits(c, batch_features(samples)))


def training_accuracy(c: Classifier, data: TrainingSet) -> float:
    feats = np.stack([window_features(w) for w in data.windows])
    pred = np.argmax(_softmax(_logits(c, feats)), axis=1)
    return float(np.mean(pred == data.labels))


def save_model(c: Classifier, path: str) -> None:
    doc = {
        "version": MODEL_VERSION,
        "id": int(c.id),
        "training_device": int(c.training_device),
        "n_classes": int(c.n_classes),
        "n_channels": int(c.n_channels),
        "variant": c.variant,
        "feature_spec": FEATURE_SPEC,
    }
    for name in ("means", "variances", "log_priors", "weights",
                 "feat_mean", "feat_std"):
        arr = getattr(c, name)
        doc[name] = None if arr is None else np.asarray(arr).tolist()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_model(path: str) -> Classifier:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError("malformed model file: %s" % exc.msg)
    if doc.get("version") != MODEL_VERSION:
        raise ModelError("unknown model version %r" % doc.get("version"))
    if doc.get("feature_spec") != FEATURE_SPEC:
        raise ModelError("unknown feature spec %r" % doc.get("feature_spec"))

    def arr(name):
        v = doc.get(name)
        return None if v is None else np.asarray(v, dtype=float)

    return Classifier(
        id=int(doc["id"]), training_device=int(doc["training_device"]),
        n_classes=int(doc["n_classes"]), variant=doc["variant"],
        n_channels=int(doc["n_channels"]),
        means=arr("means"), variances=arr("variances"),
        log_priors=arr("log_priors"), weights=arr("weights"),
        feat_mean=arr("feat_mean"), feat_std=arr("feat_std"),
    )
