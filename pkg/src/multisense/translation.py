"""Device-to-device data translation.

Learns, from unpaired unlabeled windows, an affine map that transports a
source device's per-channel statistics onto a target (training) device's
statistics, and applies it per window at inference time.  Two modes:
``diagonal`` matches per-channel mean/variance exactly; ``full`` performs
whitening/re-coloring with the full channel covariance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from .core import DeviceId, SensorWindow, ValidationError

Samples = Union[np.ndarray, Sequence[SensorWindow]]

DEFAULT_MIN_SAMPLES = 100
OPERATOR_VERSION = "1"


class TranslationError(ValueError):
    """Raised on fit/apply contract violations."""


def _pool(samples: Samples) -> np.ndarray:
    """Flatten windows to a (C, N) matrix of per-channel observations,
    time-pooled across windows."""
    if isinstance(samples, np.ndarray):
        arr = samples
        if arr.ndim == 2:
            return arr
        if arr.ndim == 3:  # (T, C, L)
            return np.concatenate(list(arr), axis=1)
        raise TranslationError("sample array must be 2-D or 3-D")
    mats = [np.asarray(w.samples) for w in samples]
    if not mats:
        raise TranslationError("no samples provided")
    return np.concatenate(mats, axis=1)


@dataclass(frozen=True)
class TranslationOperator:
    """Affine map y = matrix @ x + shift taking source-device samples to
    the target device's distribution.  Immutable after fit."""

    source: DeviceId
    target: DeviceId
    mode: str                       # "diagonal" | "full"
    matrix: np.ndarray              # (C, C); diagonal in diagonal mode
    shift: np.ndarray               # (C,)

    @property
    def n_channels(self) -> int:
        return int(self.shift.size)

    def is_identity(self, tol: float = 1e-12) -> bool:
        return (
            np.allclose(self.matrix, np.eye(self.n_channels), atol=tol)
            and np.allclose(self.shift, 0.0, atol=tol)
        )


@dataclass(frozen=True)
class AlignmentDiagnostics:
    """Gaussian-approximation Frechet distance before/after translation."""

    pre_distance: float
    post_distance: float


def identity_operator(device: DeviceId, n_channels: int) -> TranslationOperator:
    return TranslationOperator(
        source=device, target=device, mode="diagonal",
        matrix=np.eye(n_channels), shift=np.zeros(n_channels),
    )


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _regularized_cov(x: np.ndarray) -> np.ndarray:
    c = np.cov(x, ddof=0)
    c = np.atleast_2d(c)
    lam = 1e-6 * np.trace(c) / c.shape[0]
    return c + lam * np.eye(c.shape[0])


def fit_alignment(src_samples: Samples, tgt_samples: Samples,
                  mode: str = "diagonal",
                  min_samples: int = DEFAULT_MIN_SAMPLES,
                  source: DeviceId = -1,
                  target: DeviceId = -1) -> TranslationOperator:
    """Fit the affine alignment from unpaired, unlabeled samples.

    ``min_samples`` is a floor on the number of windows per side when
    windows are passed (arrays are assumed pre-pooled and only need two
    columns).
    """
    if mode not in ("diagonal", "full"):
        raise TranslationError("unknown translation mode %r" % mode)
    for name, s in (("source", src_samples), ("target", tgt_samples)):
        if not isinstance(s, np.ndarray) and len(s) < min_samples:
            raise TranslationError(
                "insufficient %s samples: %d < %d" % (name, len(s), min_samples)
            )
    xs = _pool(src_samples)
    xt = _pool(tgt_samples)
    if xs.shape[0] != xt.shape[0]:
        raise TranslationError(
            "channel mismatch: source has %d channels, target %d"
            % (xs.shape[0], xt.shape[0])
        )
    mu_s, mu_t = xs.mean(axis=1), xt.mean(axis=1)
    if mode == "diagonal":
        sd_s, sd_t = xs.std(axis=1), xt.std(axis=1)
        if np.any(sd_s == 0.0):
            raise TranslationError("singular source channel (zero variance)")
        scale = sd_t / sd_s
        matrix = np.diag(scale)
        shift = mu_t - scale * mu_s
    else:
        cs = _regularized_cov(xs)
        ct = _regularized_cov(xt)
        cs_half = _psd_sqrt(cs)
        ct_half = _psd_sqrt(ct)
        matrix = ct_half @ np.linalg.inv(cs_half)
        shift = mu_t - matrix @ mu_s
    return TranslationOperator(source=source, target=target, mode=mode,
                               matrix=matrix, shift=shift)


def apply_operator(op: TranslationOperator, w: SensorWindow) -> SensorWindow:
    """Translate one window; only sample values change."""
    if op.source >= 0 and w.device != op.source:
        raise TranslationError(
            "device mismatch: window from device %d, operator expects %d"
            % (w.device, op.source)
        )
    if w.channels != op.n_channels:
        raise TranslationError(
            "channel mismatch: window has %d channels, operator %d"
            % (w.channels, op.n_channels)
        )
    translated = op.matrix @ np.asarray(w.samples) + op.shift[:, None]
    return replace(w, samples=translated)


def alignment_distance(samples_a: Samples, samples_b: Samples) -> float:
    """Frechet distance between Gaussian approximations of two sample sets:
    ||mu_a - mu_b||^2 + tr(Ca + Cb - 2 (Ca^1/2 Cb Ca^1/2)^1/2)."""
    xa, xb = _pool(samples_a), _pool(samples_b)
    if xa.shape[1] < 2 or xb.shape[1] < 2:
        raise TranslationError("need at least 2 samples per side")
    mu_a, mu_b = xa.mean(axis=1), xb.mean(axis=1)
    ca = np.atleast_2d(np.cov(xa, ddof=0))
    cb = np.atleast_2d(np.cov(xb, ddof=0))
    ca_half = _psd_sqrt(ca)
    cross = _psd_sqrt(ca_half @ cb @ ca_half)
    dist = float(np.sum((mu_a - mu_b) ** 2)
                 + np.trace(ca) + np.trace(cb) - 2.0 * np.trace(cross))
    return max(0.0, dist)


def diagnostics(op: TranslationOperator, src_samples: Samples,
                tgt_samples: Samples) -> AlignmentDiagnostics:
    xs = _pool(src_samples)
    translated = op.matrix @ xs + op.shift[:, None]
    return AlignmentDiagnostics(
        pre_distance=alignment_distance(xs, tgt_samples),
        post_distance=alignment_distance(translated, tgt_samples),
    )


def save_operator(op: TranslationOperator, path: str) -> None:
    doc = {
        "version": OPERATOR_VERSION,
        "source": int(op.source),
        "target": int(op.target),
        "mode": op.mode,
        "matrix": [[float(v) for v in row] for row in op.matrix],
        "shift": [float(v) for v in op.shift],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_operator(path: str) -> TranslationOperator:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TranslationError("malformed operator file: %s" % exc.msg)
    if doc.get("version") != OPERATOR_VERSION:
        raise TranslationError("unknown operator version %r" % doc.get("version"))
    return TranslationOperator(
        source=int(doc["source"]), target=int(doc["target"]), mode=doc["mode"],
        matrix=np.asarray(doc["matrix"], dtype=float),
        shift=np.asarray(doc["shift"], dtype=float),
    )
