"""Shared value types for the multi-device sensing runtime.

Everything here is an immutable value object: windows of sensor data, class
posteriors, and the pipeline descriptor that ties a device, an optional
translation operator and a model together.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

# Identifiers are plain small ints so that sorting any collection of them
# gives one canonical order.
DeviceId = int
ModelId = int
PipelineId = int


class ValidationError(ValueError):
    """Raised when an invariant on a core value type is violated."""


@dataclass(frozen=True)
class SensorWindow:
    """One fixed-duration multichannel sample window from a single device.

    ``samples`` has shape (channels, length) with length = duration * rate.
    """

    device: DeviceId
    start_time: float
    samples: np.ndarray
    sample_rate: float
    duration: float = 1.0

    @property
    def channels(self) -> int:
        return int(self.samples.shape[0])

    @property
    def length(self) -> int:
        return int(self.samples.shape[1])


def validate_window(w: SensorWindow) -> None:
    """Check all SensorWindow invariants, raising ValidationError on the
    first violation (the message names the violated invariant)."""
    samples = np.asarray(w.samples)
    if samples.ndim != 2:
        raise ValidationError(
            "samples must be a 2-D (channels x length) matrix, got ndim=%d"
            % samples.ndim
        )
    n_channels, length = samples.shape
    if n_channels < 1:
        raise ValidationError("zero channels: window needs at least one channel")
    expected = w.duration * w.sample_rate
    if abs(expected - round(expected)) > 1e-9 or length != int(round(expected)):
        raise ValidationError(
            "dimension mismatch: length %d != duration*rate = %g"
            % (length, expected)
        )
    if not np.all(np.isfinite(samples)):
        raise ValidationError("non-finite sample value in window")


@dataclass(frozen=True)
class ClassPosterior:
    """Probability vector over classes emitted by a model.

    Renormalized at construction if the sum drifts by at most 1e-6;
    a larger deviation is treated as a bug in the producer and rejected.
    """

    probs: np.ndarray
    model: ModelId = 0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValidationError("posterior must be a 1-D vector with K >= 2")
        if not np.all(np.isfinite(p)):
            raise ValidationError("non-finite posterior entry")
        if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-6):
            raise ValidationError("posterior entry outside [0, 1]")
        total = float(p.sum())
        if abs(total - 1.0) > 1e-6:
            raise ValidationError(
                "posterior does not sum to 1 (sum=%.9f)" % total
            )
        p = np.clip(p / total, 0.0, 1.0)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n_classes(self) -> int:
        return int(self.probs.size)

    def argmax(self) -> int:
        return int(np.argmax(self.probs))


@dataclass
class Pipeline:
    """Composition (device, optional translation, model); the unit of
    runtime selection.  A translation is present exactly when the device
    differs from the model's training device."""

    id: PipelineId
    device: DeviceId
    model: ModelId
    translation: Optional[Any] = None
    active: bool = True


def margin_value(posterior: ClassPosterior) -> float:
    """Gap between the two largest posterior entries; in [0, 1]."""
    p = posterior.probs
    top2 = np.partition(p, p.size - 2)[-2:]
    return float(top2[1] - top2[0])
