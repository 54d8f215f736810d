"""Runtime core: registries, pipeline composition, margin-based quality
assessment and duty-cycled + event-triggered selection.

A single logical control loop (``run``) owns the registry and all selection
state.  Full multi-pipeline assessment happens only at selection-interval
boundaries and on system events; between assessments only the selected
pipeline executes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (ClassPosterior, DeviceId, ModelId, Pipeline, PipelineId,
                   ValidationError, margin_value)
from .models import Classifier, infer
from .synthworld import (AvailabilitySchedule, DeviceProfile, SensorStream)
from .translation import TranslationOperator, apply_operator, fit_alignment


class OrchestratorError(ValueError):
    pass


@dataclass(frozen=True)
class SelectionPolicy:
    interval: float = 10.0
    assessment_window: float = 1.0
    tie_break: str = "sticky"    # keep current on ties, else lowest id

    def __post_init__(self):
        if not (self.interval >= self.assessment_window > 0):
            raise ValidationError("need interval >= assessment_window > 0")


class EventKind(Enum):
    MODEL_REGISTERED = "model_registered"
    MODEL_REREGISTERED = "model_reregistered"
    DEVICE_JOINED = "device_joined"
    DEVICE_LEFT = "device_left"


@dataclass(frozen=True)
class SystemEvent:
    kind: EventKind
    subject: int
    time: float
    # join payload; unused for other kinds
    profile: Optional[DeviceProfile] = None
    samples: Optional[Sequence] = None


@dataclass(frozen=True)
class PipelineAssessment:
    pipeline: PipelineId
    device: DeviceId
    available: bool
    posterior: Optional[ClassPosterior] = None
    margin: Optional[float] = None


@dataclass(frozen=True)
class QualityReport:
    time: float
    entries: Tuple[PipelineAssessment, ...]

    def margins(self) -> Dict[PipelineId, float]:
        return {e.pipeline: e.margin for e in self.entries
                if e.margin is not None}


@dataclass(frozen=True)
class TraceRecord:
    time: float
    strategy: str
    selected_pipeline: Optional[PipelineId]
    selected_device: Optional[DeviceId]
    predicted_class: Optional[int]
    true_class: int
    availability: Tuple[bool, ...]       # ordered by trace.device_ids
    assessed: bool
    margins: Optional[Dict[PipelineId, float]] = None


@dataclass
class InferenceTrace:
    strategy: str
    device_ids: Tuple[DeviceId, ...]
    records: List[TraceRecord] = field(default_factory=list)

    def to_lines(self) -> str:
        out = []
        for r in self.records:
            out.append(json.dumps({
                "time": r.time,
                "strategy": r.strategy,
                "selected_pipeline": r.selected_pipeline,
                "selected_device": r.selected_device,
                "predicted_class": r.predicted_class,
                "true_class": r.true_class,
                "availability": list(r.availability),
                "assessed": r.assessed,
                "margins": None if r.margins is None else
                           {str(k): v for k, v in r.margins.items()},
            }, sort_keys=True))
        return "\n".join(out) + "\n"

    @classmethod
    def from_lines(cls, text: str, strategy: str = "",
                   device_ids: Tuple[DeviceId, ...] = ()) -> "InferenceTrace":
        records = []
        for line in text.splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            records.append(TraceRecord(
                time=d["time"], strategy=d["strategy"],
                selected_pipeline=d["selected_pipeline"],
                selected_device=d["selected_device"],
                predicted_class=d["predicted_class"],
                true_class=d["true_class"],
                availability=tuple(bool(x) for x in d["availability"]),
                assessed=d["assessed"],
                margins=None if d["margins"] is None else
                        {int(k): v for k, v in d["margins"].items()},
            ))
            strategy = records[-1].strategy
        return cls(strategy=strategy, device_ids=device_ids, records=records)


def margin(p: ClassPosterior) -> float:
    """Difference between the two largest posterior entries."""
    return margin_value(p)


class Registry:
    """Devices, models, translation operators and per-model pipelines.

    Translation operators are fitted at most once per (source, target)
    pair; pipelines are rebuilt whenever a device joins or leaves.
    """

    def __init__(self, translation_mode: str = "diagonal",
                 min_alignment_samples: int = 100):
        self.translation_mode = translation_mode
        self.min_alignment_samples = min_alignment_samples
        self.devices: Dict[DeviceId, DeviceProfile] = {}
        self.device_alive: Dict[DeviceId, bool] = {}
        self.device_samples: Dict[DeviceId, Sequence] = {}
        self.models: Dict[ModelId, Classifier] = {}
        self.model_samples: Dict[ModelId, Sequence] = {}
        self.translations: Dict[Tuple[DeviceId, DeviceId], TranslationOperator] = {}
        self.pipelines: Dict[ModelId, List[Pipeline]] = {}
        self.alignment_fit_count = 0
        self._next_pipeline_id = 0

    # -- internal -----------------------------------------------------------

    def _ensure_translation(self, source: DeviceId, target: DeviceId) -> None:
        if source == target or (source, target) in self.translations:
            return
        src = self.device_samples.get(source)
        tgt = None
        for mid, clf in self.models.items():
            if clf.training_device == target:
                tgt = self.model_samples.get(mid)
                break
        if src is None or tgt is None or len(tgt) == 0:
            raise OrchestratorError(
                "no unlabeled samples to fit translation %d -> %d"
                % (source, target)
            )
        op = fit_alignment(src, tgt, mode=self.translation_mode,
                           min_samples=self.min_alignment_samples,
                           source=source, target=target)
        self.translations[(source, target)] = op
        self.alignment_fit_count += 1

    def _add_pipeline(self, model_id: ModelId, device: DeviceId) -> None:
        clf = self.models[model_id]
        op = None
        if device != clf.training_device:
            self._ensure_translation(device, clf.training_device)
            op = self.translations[(device, clf.training_device)]
        self.pipelines[model_id].append(Pipeline(
            id=self._next_pipeline_id, device=device, model=model_id,
            translation=op,
        ))
        self._next_pipeline_id += 1

    # -- public surface -----------------------------------------------------

    def register_model(self, classifier: Classifier,
                       training_samples: Sequence) -> ModelId:
        model_id = classifier.id
        if model_id in self.models:
            raise OrchestratorError("model %d already registered" % model_id)
        foreign = [d for d in self.devices if d != classifier.training_device]
        if foreign and len(training_samples) == 0:
            raise OrchestratorError(
                "training samples required to fit translations for devices %s"
                % foreign
            )
        self.models[model_id] = classifier
        self.model_samples[model_id] = training_samples
        self.pipelines[model_id] = []
        for device in sorted(self.devices):
            self._add_pipeline(model_id, device)
        return model_id

    def device_join(self, profile: DeviceProfile,
                    unlabeled_samples: Sequence) -> None:
        if profile.id in self.devices and self.device_alive.get(profile.id):
            raise OrchestratorError("device %d already joined" % profile.id)
        rejoin = profile.id in self.devices
        self.devices[profile.id] = profile
        self.device_alive[profile.id] = True
        self.device_samples[profile.id] = unlabeled_samples
        for model_id in self.models:
            if rejoin:
                for p in self.pipelines[model_id]:
                    if p.device == profile.id:
                        p.active = True
            else:
                self._add_pipeline(model_id, profile.id)

    def device_leave(self, device: DeviceId) -> None:
        if device not in self.devices:
            raise OrchestratorError("unknown device %d on leave" % device)
        self.device_alive[device] = False
        for plist in self.pipelines.values():
            for p in plist:
                if p.device == device:
                    p.active = False

    def model_pipelines(self, model_id: ModelId) -> List[Pipeline]:
        return sorted(self.pipelines[model_id], key=lambda p: p.id)

    def ordered_devices(self) -> List[DeviceId]:
        return sorted(self.devices)


def assess(registry: Registry, model_id: ModelId, t: float,
           stream: SensorStream, available: set,
           use_translation: bool = True) -> QualityReport:
    """Run every available pipeline of one model on the window at t and
    report per-pipeline posterior and margin."""
    if not registry.devices:
        raise OrchestratorError("no registered devices")
    clf = registry.models[model_id]
    window_index = int(round(t))
    entries = []
    for p in registry.model_pipelines(model_id):
        if p.device not in available or not registry.device_alive.get(p.device, False):
            entries.append(PipelineAssessment(
                pipeline=p.id, device=p.device, available=False))
            continue
        w = stream.window(p.device, window_index)
        if use_translation and p.translation is not None:
            w = apply_operator(p.translation, w)
        posterior = infer(clf, w)
        entries.append(PipelineAssessment(
            pipeline=p.id, device=p.device, available=True,
            posterior=posterior, margin=margin(posterior)))
    return QualityReport(time=t, entries=tuple(entries))


def select(report: QualityReport,
           current: Optional[PipelineId] = None) -> Optional[PipelineId]:
    """Argmax-margin available pipeline; keeps the current pipeline on a
    tie, otherwise lowest pipeline id.  None iff nothing is available."""
    margins = report.margins()
    if not margins:
        return None
    best = max(margins.values())
    candidates = sorted(pid for pid, m in margins.items() if m == best)
    if current is not None and current in candidates:
        return current
    return candidates[0]


def run(registry: Registry, model_id: ModelId, stream: SensorStream,
        schedule: AvailabilitySchedule, policy: SelectionPolicy,
        strategy, horizon: float,
        events: Sequence[SystemEvent] = ()) -> InferenceTrace:
    """Simulate one model under one strategy over ``horizon`` seconds.

    ``strategy`` must expose: name, uses_quality, uses_translation and
    fixed_device (None unless pinned to one device).  Quality strategies
    assess at every interval boundary and at event times; rotation/fixed
    strategies re-pick at the same instants without a quality pass.
    """
    n_windows = int(round(horizon / stream.trace.config.window_duration))
    if n_windows < 1:
        raise OrchestratorError("empty horizon")
    if model_id not in registry.models:
        raise OrchestratorError("model %d not registered" % model_id)

    events_at: Dict[int, List[SystemEvent]] = {}
    for ev in sorted(events, key=lambda e: e.time):
        events_at.setdefault(int(ev.time), []).append(ev)

    device_order = registry.ordered_devices()
    trace = InferenceTrace(strategy=strategy.name, device_ids=tuple(device_order))
    clf = registry.models[model_id]
    interval = int(round(policy.interval))
    current: Optional[PipelineId] = None
    rr_pos = -1   # round-robin pointer into the sorted device list

    for t in range(n_windows):
        event_fired = False
        for ev in events_at.get(t, ()):
            if ev.kind is EventKind.DEVICE_LEFT:
                registry.device_leave(ev.subject)
            elif ev.kind is EventKind.DEVICE_JOINED:
                registry.device_join(ev.profile, ev.samples or [])
                if ev.profile is not None:
                    stream.add_profile(ev.profile)
            elif ev.kind is EventKind.MODEL_REREGISTERED:
                pass  # selection restart only; the model itself is unchanged
            event_fired = True
        if event_fired:
            device_order = registry.ordered_devices()
            trace.device_ids = tuple(device_order)

        available = {
            d for d in device_order
            if registry.device_alive.get(d, False) and schedule.is_available(d, t)
        }
        pipes = {p.id: p for p in registry.model_pipelines(model_id)}
        boundary = (t % interval == 0)
        decide = boundary or event_fired

        assessed = False
        margins_out: Optional[Dict[PipelineId, float]] = None
        report_posteriors: Dict[PipelineId, ClassPosterior] = {}

        if decide:
            if strategy.uses_quality:
                report = assess(registry, model_id, t, stream, available,
                                use_translation=strategy.uses_translation)
                current = select(report, current)
                assessed = True
                margins_out = report.margins()
                report_posteriors = {
                    e.pipeline: e.posterior for e in report.entries
                    if e.posterior is not None
                }
            elif strategy.fixed_device is not None:
                current = None
                for pid, p in sorted(pipes.items()):
                    if p.device == strategy.fixed_device and p.device in available:
                        current = pid
            else:
                # round-robin over available devices in id order
                current = None
                if available:
                    for step in range(1, len(device_order) + 1):
                        cand = device_order[(rr_pos + step) % len(device_order)]
                        if cand in available:
                            rr_pos = (rr_pos + step) % len(device_order)
                            for pid, p in sorted(pipes.items()):
                                if p.device == cand:
                                    current = pid
                            break
        elif current is not None:
            p = pipes.get(current)
            if p is None or p.device not in available:
                current = None   # selected device silently gone mid-interval

        predicted = None
        selected_device = None
        if current is not None:
            p = pipes[current]
            selected_device = p.device
            if current in report_posteriors:
                posterior = report_posteriors[current]
            else:
                w = stream.window(p.device, t)
                if strategy.uses_translation and p.translation is not None:
                    w = apply_operator(p.translation, w)
                posterior = infer(clf, w)
            predicted = posterior.argmax()

        trace.records.append(TraceRecord(
            time=float(t), strategy=strategy.name,
            selected_pipeline=current, selected_device=selected_device,
            predicted_class=predicted,
            true_class=int(stream.trace.labels[t]),
            availability=tuple(d in available for d in device_order),
            assessed=assessed, margins=margins_out,
        ))
    return trace
