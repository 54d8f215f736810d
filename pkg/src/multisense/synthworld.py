"""Synthetic multi-device sensing world.

Generates ground-truth activity sequences (Markov chain over class labels),
renders them as heterogeneous per-device sensor streams through affine
channel maps with time-varying noise, and samples per-device availability
schedules for static/dynamic workloads.
"""

from __future__ import annotations

import io
import json
import math
import zipfile
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import DeviceId, SensorWindow, ValidationError

DATASET_VERSION = "1"


class DatasetFormatError(ValueError):
    """Raised when a dataset archive is malformed or has an unknown version."""


def _rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic child generator for a (seed, key...) pair."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class WorldConfig:
    n_classes: int = 8
    n_channels: int = 6
    sample_rate: float = 50.0
    window_duration: float = 1.0
    horizon: float = 600.0
    stay_prob: float = 0.9
    class_separation: float = 1.2
    signal_jitter: float = 0.05
    # class signatures are a property of the world, shared by every trace
    # generated from this config regardless of the trace seed
    class_seed: int = 0

    @property
    def n_windows(self) -> int:
        return int(round(self.horizon / self.window_duration))

    @property
    def window_length(self) -> int:
        return int(round(self.window_duration * self.sample_rate))

    def transition_matrix(self) -> np.ndarray:
        k = self.n_classes
        off = (1.0 - self.stay_prob) / (k - 1)
        p = np.full((k, k), off)
        np.fill_diagonal(p, self.stay_prob)
        return p


@dataclass(frozen=True)
class QualityProcess:
    """Slow deterministic modulation of a device's noise level.

    The noise std at time t is scaled by max(0, 1 + amplitude * sin(...)),
    so a large amplitude lets the device swing between nearly clean and
    badly degraded over one period.
    """

    period: float = 120.0
    amplitude: float = 0.0
    phase: float = 0.0

    def sigma_scale(self, t: float) -> float:
        return max(
            0.0,
            1.0 + self.amplitude * math.sin(2.0 * math.pi * t / self.period + self.phase),
        )


@dataclass(frozen=True)
class DeviceProfile:
    """Per-channel affine map plus noise describing how one device renders
    the latent signal: samples = gain * base + bias + N(0, sigma(t)^2)."""

    id: DeviceId
    gain: np.ndarray
    bias: np.ndarray
    noise_std: np.ndarray
    quality: QualityProcess = QualityProcess()

    def __post_init__(self):
        gain = np.atleast_1d(np.asarray(self.gain, dtype=float))
        bias = np.atleast_1d(np.asarray(self.bias, dtype=float))
        noise = np.atleast_1d(np.asarray(self.noise_std, dtype=float))
        if np.any(gain == 0.0):
            raise ValidationError("device gain must be nonzero on every channel")
        if not np.all(np.isfinite(noise)) or np.any(noise < 0):
            raise ValidationError("noise_std must be finite and >= 0")
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "noise_std", noise)

    def expand(self, n_channels: int) -> "DeviceProfile":
        """Broadcast scalar parameters to per-channel vectors."""
        def bc(v):
            v = np.asarray(v, dtype=float)
            return np.full(n_channels, v.item()) if v.size == 1 else v

        return replace(self, gain=bc(self.gain), bias=bc(self.bias),
                       noise_std=bc(self.noise_std))


@dataclass(frozen=True)
class LatentTrace:
    """Ground-truth label sequence and clean per-window signal."""

    config: WorldConfig
    labels: np.ndarray            # (T,) int
    base: np.ndarray              # (T, C, L) float32

    @property
    def n_windows(self) -> int:
        return int(self.labels.size)


@dataclass(frozen=True)
class WorkloadConfig:
    kind: str = "static"          # "static" | "dynamic"
    availability_p: float = 1.0
    seed: int = 0
    horizon: float = 600.0

    def __post_init__(self):
        if self.kind not in ("static", "dynamic"):
            raise ValidationError("workload kind must be 'static' or 'dynamic'")
        if not (0.0 < self.availability_p <= 1.0):
            raise ValidationError("availability_p must be in (0, 1]")
        if self.kind == "static" and self.availability_p != 1.0:
            raise ValidationError("static workload implies availability_p = 1.0")


@dataclass(frozen=True)
class AvailabilitySchedule:
    """Per-device boolean availability, constant within each epoch."""

    devices: tuple                # device ids, order matches rows of mask
    mask: np.ndarray              # (n_devices, n_epochs) bool
    epoch_length: float

    def is_available(self, device: DeviceId, t: float) -> bool:
        if device not in self.devices:
            return True   # devices outside the sampled workload are always up
        row = self.devices.index(device)
        epoch = min(int(t // self.epoch_length), self.mask.shape[1] - 1)
        return bool(self.mask[row, epoch])


def generate_latent(config: WorldConfig, seed: int) -> LatentTrace:
    """Sample a label sequence from the configured Markov chain and render
    the clean class-dependent signal for every window."""
    if config.n_classes < 2:
        raise ValidationError("world needs at least 2 classes")
    if config.n_windows < 1:
        raise ValidationError("horizon must cover at least one window")

    k, c, length = config.n_classes, config.n_channels, config.window_length
    rng_class = _rng(config.class_seed, 1)
    rng_chain = _rng(seed, 2)
    rng_signal = _rng(seed, 3)

    # Class signatures: per-channel mean, oscillation amplitude and integer
    # frequency.  Distinct means per class are guaranteed a.s. by the
    # continuous draw; asserted anyway.
    means = rng_class.normal(0.0, config.class_separation, size=(k, c))
    amps = rng_class.uniform(0.4, 1.2, size=(k, c))
    freqs = rng_class.integers(1, 6, size=(k, c))
    for a in range(k):
        for b in range(a + 1, k):
            if np.allclose(means[a], means[b]):
                raise ValidationError("degenerate class means")

    p = config.transition_matrix()
    labels = np.empty(config.n_windows, dtype=np.int64)
    state = int(rng_chain.integers(0, k))
    for t in range(config.n_windows):
        labels[t] = state
        state = int(rng_chain.choice(k, p=p[state]))

    tau = np.arange(length) / length
    base = np.empty((config.n_windows, c, length), dtype=np.float32)
    for t in range(config.n_windows):
        lab = labels[t]
        phase = rng_signal.uniform(0.0, 2.0 * math.pi, size=c)
        sig = (
            means[lab][:, None]
            + amps[lab][:, None]
            * np.sin(2.0 * math.pi * freqs[lab][:, None] * tau[None, :] + phase[:, None])
            + rng_signal.normal(0.0, config.signal_jitter, size=(c, length))
        )
        base[t] = sig.astype(np.float32)
    return LatentTrace(config=config, labels=labels, base=base)


def observe(trace: LatentTrace, profile: DeviceProfile, window_index: int,
            seed: int = 0) -> SensorWindow:
    """Render one window through a device profile.  Deterministic in
    (seed, device, window_index)."""
    if not (0 <= window_index < trace.n_windows):
        raise IndexError("window index %d out of range" % window_index)
    cfg = trace.config
    prof = profile.expand(cfg.n_channels)
    t = window_index * cfg.window_duration
    sigma = prof.noise_std * prof.quality.sigma_scale(t)
    rng = _rng(seed, int(prof.id) + 10, window_index)
    base = trace.base[window_index].astype(np.float64)
    noise = rng.normal(0.0, 1.0, size=base.shape) * sigma[:, None]
    samples = prof.gain[:, None] * base + prof.bias[:, None] + noise
    return SensorWindow(
        device=prof.id,
        start_time=t,
        samples=samples,
        sample_rate=cfg.sample_rate,
        duration=cfg.window_duration,
    )


def render_stream(trace: LatentTrace, profile: DeviceProfile,
                  seed: int = 0) -> np.ndarray:
    """All windows of one device as a (T, C, L) array; row t equals
    observe(trace, profile, t, seed).samples."""
    out = np.empty(
        (trace.n_windows, trace.config.n_channels, trace.config.window_length)
    )
    for t in range(trace.n_windows):
        out[t] = observe(trace, profile, t, seed).samples
    return out


class SensorStream:
    """Window access with per-device caching, shared by simulator runs."""

    def __init__(self, trace: LatentTrace, profiles: Sequence[DeviceProfile],
                 seed: int = 0):
        self.trace = trace
        self.seed = seed
        self.profiles: Dict[DeviceId, DeviceProfile] = {p.id: p for p in profiles}
        self._cache: Dict[DeviceId, np.ndarray] = {}

    def add_profile(self, profile: DeviceProfile) -> None:
        self.profiles[profile.id] = profile

    def window(self, device: DeviceId, window_index: int) -> SensorWindow:
        if device not in self._cache:
            self._cache[device] = render_stream(
                self.trace, self.profiles[device], self.seed
            )
        cfg = self.trace.config
        return SensorWindow(
            device=device,
            start_time=window_index * cfg.window_duration,
            samples=self._cache[device][window_index],
            sample_rate=cfg.sample_rate,
            duration=cfg.window_duration,
        )


def sample_availability(cfg: WorkloadConfig, devices: Sequence[DeviceId],
                        epoch_length: float = 10.0) -> AvailabilitySchedule:
    """Bernoulli(availability_p) per device per epoch, independent across
    devices and epochs; all-true for static workloads."""
    if len(devices) < 1:
        raise ValidationError("need at least one device")
    n_epochs = max(1, int(math.ceil(cfg.horizon / epoch_length)))
    if cfg.kind == "static" or cfg.availability_p >= 1.0:
        mask = np.ones((len(devices), n_epochs), dtype=bool)
    else:
        rng = _rng(cfg.seed, 77)
        mask = rng.random((len(devices), n_epochs)) < cfg.availability_p
    return AvailabilitySchedule(devices=tuple(devices), mask=mask,
                                epoch_length=epoch_length)


# ---------------------------------------------------------------------------
# Dataset archive: zip with a JSON header plus little-endian float32 blocks
# (channel-major within each window) for the clean signal and each device.

def _profile_to_json(p: DeviceProfile) -> dict:
    return {
        "id": int(p.id),
        "gain": [float(x) for x in np.atleast_1d(p.gain)],
        "bias": [float(x) for x in np.atleast_1d(p.bias)],
        "noise_std": [float(x) for x in np.atleast_1d(p.noise_std)],
        "quality": {
            "period": p.quality.period,
            "amplitude": p.quality.amplitude,
            "phase": p.quality.phase,
        },
    }


def _profile_from_json(d: dict) -> DeviceProfile:
    q = d.get("quality", {})
    return DeviceProfile(
        id=int(d["id"]),
        gain=np.asarray(d["gain"], dtype=float),
        bias=np.asarray(d["bias"], dtype=float),
        noise_std=np.asarray(d["noise_std"], dtype=float),
        quality=QualityProcess(
            period=float(q.get("period", 120.0)),
            amplitude=float(q.get("amplitude", 0.0)),
            phase=float(q.get("phase", 0.0)),
        ),
    )


@dataclass
class Dataset:
    trace: LatentTrace
    profiles: List[DeviceProfile]
    streams: Dict[DeviceId, np.ndarray]   # (T, C, L) float32 per device
    seed: int


def export_dataset(trace: LatentTrace, profiles: Sequence[DeviceProfile],
                   path: str, seed: int = 0) -> None:
    cfg = trace.config
    header = {
        "version": DATASET_VERSION,
        "n_classes": cfg.n_classes,
        "n_channels": cfg.n_channels,
        "sample_rate": cfg.sample_rate,
        "window_duration": cfg.window_duration,
        "horizon": cfg.horizon,
        "stay_prob": cfg.stay_prob,
        "class_separation": cfg.class_separation,
        "signal_jitter": cfg.signal_jitter,
        "class_seed": cfg.class_seed,
        "seed": seed,
        "labels": [int(x) for x in trace.labels],
        "profiles": [_profile_to_json(p.expand(cfg.n_channels)) for p in profiles],
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("header.json", json.dumps(header, indent=1))
        zf.writestr("base.f32", trace.base.astype("<f4").tobytes())
        for p in profiles:
            block = render_stream(trace, p, seed).astype("<f4")
            zf.writestr("device_%d.f32" % p.id, block.tobytes())


def _read_block(zf: zipfile.ZipFile, name: str, shape: tuple) -> np.ndarray:
    raw = zf.read(name)
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise DatasetFormatError(
            "block %s truncated at byte offset %d (expected %d bytes)"
            % (name, len(raw), expected)
        )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def import_dataset(path: str) -> Dataset:
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as exc:
        raise DatasetFormatError("unreadable dataset archive %s: %s" % (path, exc))
    with zf:
        try:
            header = json.loads(zf.read("header.json"))
        except KeyError:
            raise DatasetFormatError("missing header.json in %s" % path)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(
                "malformed header at byte offset %d: %s" % (exc.pos, exc.msg)
            )
        if header.get("version") != DATASET_VERSION:
            raise DatasetFormatError(
                "unknown dataset version %r (expected %r)"
                % (header.get("version"), DATASET_VERSION)
            )
        cfg = WorldConfig(
            n_classes=int(header["n_classes"]),
            n_channels=int(header["n_channels"]),
            sample_rate=float(header["sample_rate"]),
            window_duration=float(header["window_duration"]),
            horizon=float(header["horizon"]),
            stay_prob=float(header["stay_prob"]),
            class_separation=float(header["class_separation"]),
            signal_jitter=float(header["signal_jitter"]),
            class_seed=int(header.get("class_seed", 0)),
        )
        labels = np.asarray(header["labels"], dtype=np.int64)
        shape = (labels.size, cfg.n_channels, cfg.window_length)
        base = _read_block(zf, "base.f32", shape)
        trace = LatentTrace(config=cfg, labels=labels, base=base)
        profiles = [_profile_from_json(d) for d in header["profiles"]]
        streams = {
            p.id: _read_block(zf, "device_%d.f32" % p.id, shape) for p in profiles
        }
    return Dataset(trace=trace, profiles=profiles, streams=streams,
                   seed=int(header["seed"]))
