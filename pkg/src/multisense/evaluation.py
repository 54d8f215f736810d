"""Evaluation protocol: strategy definitions, micro-averaged F1 with the
unavailability penalty, selection-ratio and assessment-cost accounting, and
the strategy x availability x seed experiment grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import DeviceId, ValidationError
from .models import Classifier, TrainingSet, fit_classifier, infer_batch
from .orchestrator import (InferenceTrace, Registry, SelectionPolicy, run)
from .synthworld import (AvailabilitySchedule, DeviceProfile, LatentTrace,
                         SensorStream, WorkloadConfig, WorldConfig,
                         generate_latent, observe, render_stream,
                         sample_availability)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Strategy:
    """One of the five comparison strategies.

    - fixed-single: one pinned device, raw data, no assessment
    - single-avg:   mean micro-F1 over fixed-single runs for every device
    - native:       round-robin over available devices, raw data
    - trans:        round-robin, translated data
    - qs:           margin-based selection, raw data
    - full:         margin-based selection, translated data
    """

    kind: str
    fixed_device: Optional[DeviceId] = None

    KINDS = ("fixed-single", "single-avg", "native", "trans", "qs", "full")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise EvaluationError("unknown strategy %r" % self.kind)
        if (self.kind == "fixed-single") != (self.fixed_device is not None):
            raise EvaluationError("fixed-single needs a device, others do not")

    @property
    def name(self) -> str:
        if self.kind == "fixed-single":
            return "single:%d" % self.fixed_device
        return self.kind

    @property
    def uses_quality(self) -> bool:
        return self.kind in ("qs", "full")

    @property
    def uses_translation(self) -> bool:
        return self.kind in ("trans", "full")

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        text = text.strip().lower()
        if text.startswith("single:"):
            return cls(kind="fixed-single", fixed_device=int(text.split(":", 1)[1]))
        return cls(kind=text)


@dataclass(frozen=True)
class EvalReport:
    strategy: str
    availability_p: float
    seed: int
    micro_f1: float
    zeroed_f1: float                      # per-interval zero-averaged variant
    selection_ratio: Tuple[float, ...]    # per device, in id order
    assessment_count: int
    execution_count: int


def _confusion_counts(trace: InferenceTrace,
                      labels: np.ndarray) -> Tuple[int, int, int]:
    """Pooled (TP, FP, FN) over all windows.  A wrong prediction counts as
    one FP and one FN; an uncovered window counts as one FN."""
    if len(trace.records) != labels.size:
        raise EvaluationError(
            "trace covers %d windows but labels cover %d"
            % (len(trace.records), labels.size)
        )
    tp = fp = fn = 0
    for rec, truth in zip(trace.records, labels):
        if rec.predicted_class is None:
            fn += 1
        elif rec.predicted_class == int(truth):
            tp += 1
        else:
            fp += 1
            fn += 1
    return tp, fp, fn


def micro_f1(trace: InferenceTrace, labels: np.ndarray) -> float:
    """Micro-averaged F1 = 2 TP / (2 TP + FP + FN) pooled over all windows;
    windows with no selected pipeline contribute one FN each."""
    tp, fp, fn = _confusion_counts(trace, labels)
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2.0 * tp / denom


def zeroed_f1(trace: InferenceTrace, labels: np.ndarray,
              segment: float = 10.0) -> float:
    """Secondary accounting: F1 per fixed-length segment with uncovered
    segments scored 0, averaged over segments."""
    labels = np.asarray(labels)
    if len(trace.records) != labels.size:
        raise EvaluationError("trace/labels length mismatch")
    seg = max(1, int(round(segment)))
    scores = []
    for start in range(0, labels.size, seg):
        sub = InferenceTrace(strategy=trace.strategy,
                             device_ids=trace.device_ids,
                             records=trace.records[start:start + seg])
        scores.append(micro_f1(sub, labels[start:start + seg]))
    return float(np.mean(scores))


def f1_time_series(trace: InferenceTrace, labels: np.ndarray,
                   bucket: float = 60.0) -> List[float]:
    """Per-bucket F1 sequence (one value per ``bucket`` seconds)."""
    labels = np.asarray(labels)
    seg = max(1, int(round(bucket)))
    out = []
    for start in range(0, labels.size, seg):
        sub = InferenceTrace(strategy=trace.strategy,
                             device_ids=trace.device_ids,
                             records=trace.records[start:start + seg])
        out.append(micro_f1(sub, labels[start:start + seg]))
    return out


def selection_ratio(trace: InferenceTrace,
                    devices: Sequence[DeviceId]) -> Tuple[float, ...]:
    """Fraction of selected windows attributed to each device; sums to 1."""
    counts = {d: 0 for d in devices}
    total = 0
    for rec in trace.records:
        if rec.selected_device is not None:
            counts[rec.selected_device] = counts.get(rec.selected_device, 0) + 1
            total += 1
    if total == 0:
        raise EvaluationError("trace has zero selected windows")
    return tuple(counts[d] / total for d in devices)


def assessment_cost(trace: InferenceTrace) -> Tuple[int, int]:
    """(assessment_count, model_execution_count) reconstructed from the
    trace: each assessment executes every available pipeline once; every
    other covered window executes the single selected pipeline."""
    assessments = 0
    executions = 0
    for rec in trace.records:
        if rec.assessed:
            assessments += 1
            executions += len(rec.margins or {})
        elif rec.predicted_class is not None:
            executions += 1
    return assessments, executions


# ---------------------------------------------------------------------------
# Scenario assembly and grid runs

@dataclass
class Scenario:
    """A fully prepared experiment world: evaluation trace, device profiles,
    a trained classifier and the unlabeled pools used for alignment."""

    world: WorldConfig
    profiles: List[DeviceProfile]
    classifier: Classifier
    trace: LatentTrace
    eval_seed: int
    model_samples: Sequence          # unlabeled training-device windows
    device_samples: Dict[DeviceId, Sequence]
    translation_mode: str = "diagonal"
    _stream: Optional[SensorStream] = None

    def build_registry(self) -> Registry:
        reg = Registry(translation_mode=self.translation_mode)
        for p in self.profiles:
            reg.device_join(p, self.device_samples[p.id])
        reg.register_model(self.classifier, self.model_samples)
        return reg

    def stream(self) -> SensorStream:
        # shared across runs: the rendered device streams are deterministic
        # in (trace, profile, eval_seed), so caching cannot leak state
        if self._stream is None:
            self._stream = SensorStream(self.trace, self.profiles,
                                        seed=self.eval_seed)
        return self._stream


def build_scenario(world: WorldConfig, profiles: Sequence[DeviceProfile],
                   seed: int, training_device: DeviceId = 0,
                   variant: str = "gaussian", train_horizon: float = 400.0,
                   translation_mode: str = "diagonal",
                   n_alignment_windows: int = 200) -> Scenario:
    """Generate disjoint training and evaluation worlds from one seed and
    fit the shared classifier on the training device's data."""
    profiles = [p.expand(world.n_channels) for p in profiles]
    train_world = WorldConfig(**{**world.__dict__, "horizon": train_horizon})
    train_trace = generate_latent(train_world, seed=seed * 7919 + 1)
    eval_trace = generate_latent(world, seed=seed)

    train_profile = next(p for p in profiles if p.id == training_device)
    train_windows = [observe(train_trace, train_profile, t, seed=seed * 7919 + 1)
                     for t in range(train_trace.n_windows)]
    training = TrainingSet(device=training_device, windows=train_windows,
                           labels=train_trace.labels)
    clf = fit_classifier(training, n_classes=world.n_classes, variant=variant,
                         model_id=0, seed=seed)

    n_align = min(n_alignment_windows, train_trace.n_windows)
    device_samples = {}
    for p in profiles:
        if p.id == training_device:
            device_samples[p.id] = train_windows[:n_align]
        else:
            device_samples[p.id] = [
                observe(train_trace, p, t, seed=seed * 7919 + 1)
                for t in range(n_align)
            ]
    return Scenario(world=world, profiles=profiles, classifier=clf,
                    trace=eval_trace, eval_seed=seed,
                    model_samples=train_windows[:n_align],
                    device_samples=device_samples,
                    translation_mode=translation_mode)


def _run_one(strategy: Strategy, scenario: Scenario, policy: SelectionPolicy,
             workload: WorkloadConfig) -> Tuple[InferenceTrace, AvailabilitySchedule]:
    registry = scenario.build_registry()
    schedule = sample_availability(
        workload, [p.id for p in scenario.profiles],
        epoch_length=policy.interval,
    )
    trace = run(registry, scenario.classifier.id, scenario.stream(), schedule,
                policy, strategy, horizon=scenario.world.horizon)
    return trace, schedule


def run_strategy(strategy: Strategy, scenario: Scenario,
                 policy: SelectionPolicy,
                 workload: WorkloadConfig) -> EvalReport:
    """Evaluate one strategy on one prepared scenario/workload."""
    labels = scenario.trace.labels
    devices = sorted(p.id for p in scenario.profiles)
    if strategy.kind == "single-avg":
        subreports = [
            run_strategy(Strategy(kind="fixed-single", fixed_device=d),
                         scenario, policy, workload)
            for d in devices
        ]
        return EvalReport(
            strategy=strategy.name,
            availability_p=workload.availability_p,
            seed=workload.seed,
            micro_f1=float(np.mean([r.micro_f1 for r in subreports])),
            zeroed_f1=float(np.mean([r.zeroed_f1 for r in subreports])),
            selection_ratio=tuple(
                float(np.mean([r.selection_ratio[i] for r in subreports]))
                for i in range(len(devices))
            ),
            assessment_count=0,
            execution_count=int(np.sum([r.execution_count for r in subreports])),
        )
    trace, _ = _run_one(strategy, scenario, policy, workload)
    assessments, executions = assessment_cost(trace)
    try:
        ratios = selection_ratio(trace, devices)
    except EvaluationError:
        ratios = tuple(0.0 for _ in devices)
    return EvalReport(
        strategy=strategy.name,
        availability_p=workload.availability_p,
        seed=workload.seed,
        micro_f1=micro_f1(trace, labels),
        zeroed_f1=zeroed_f1(trace, labels, segment=policy.interval),
        selection_ratio=ratios,
        assessment_count=assessments,
        execution_count=executions,
    )


def oracle_f1(scenario: Scenario, use_translation: bool = True) -> float:
    """Per-window omniscient selector: a window counts as correct if any
    pipeline predicts its true class.  Upper-bounds every strategy."""
    from .translation import apply_operator  # local to avoid cycle at import

    registry = scenario.build_registry()
    labels = scenario.trace.labels
    correct = np.zeros(labels.size, dtype=bool)
    for p in registry.model_pipelines(scenario.classifier.id):
        stream = render_stream(scenario.trace,
                               next(pr for pr in scenario.profiles
                                    if pr.id == p.device),
                               seed=scenario.eval_seed)
        if use_translation and p.translation is not None:
            stream = np.einsum("ij,tjl->til", p.translation.matrix, stream) \
                + p.translation.shift[None, :, None]
        probs = infer_batch(scenario.classifier, stream)
        correct |= probs.argmax(axis=1) == labels
    tp = int(correct.sum())
    fp = labels.size - tp
    return 2.0 * tp / (2.0 * tp + fp + fp)


def grid_rows(scenario_factory, strategies: Sequence[Strategy],
              p_values: Sequence[float], seeds: Sequence[int],
              policy: SelectionPolicy) -> List[EvalReport]:
    """Run the full strategy x availability x seed grid.  The factory maps
    a seed to a prepared Scenario (scenarios are reused across strategies
    and p values within a seed)."""
    rows = []
    for seed in seeds:
        scenario = scenario_factory(seed)
        for p in p_values:
            workload = WorkloadConfig(
                kind="static" if p >= 1.0 else "dynamic",
                availability_p=p, seed=seed,
                horizon=scenario.world.horizon,
            )
            for strat in strategies:
                rows.append(run_strategy(strat, scenario, policy, workload))
    return rows


def write_csv(rows: Sequence[EvalReport], path: str,
              n_devices: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["strategy", "availability_p", "seed", "micro_f1", "zeroed_f1"]
            + ["ratio_dev%d" % i for i in range(n_devices)]
            + ["assessment_count", "execution_count"]
        )
        for r in rows:
            writer.writerow(
                [r.strategy, r.availability_p, r.seed,
                 "%.6f" % r.micro_f1, "%.6f" % r.zeroed_f1]
                + ["%.6f" % x for x in r.selection_ratio]
                + [r.assessment_count, r.execution_count]
            )


def read_csv(path: str) -> List[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]
