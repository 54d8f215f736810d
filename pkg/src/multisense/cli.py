"""Command-line surface: dataset generation, model/translation fitting,
simulation runs, grid evaluation and report printing.

Every command is reproducible from its config file alone; flags override
config values, and ``--dump-config`` echoes the resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from importlib import resources
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import SensorWindow
from .evaluation import (EvaluationError, Scenario, Strategy, build_scenario,
                         grid_rows, read_csv, run_strategy, write_csv, _run_one)
from .models import (ModelError, TrainingSet, fit_classifier, load_model,
                     save_model)
from .orchestrator import SelectionPolicy
from .synthworld import (DatasetFormatError, DeviceProfile, QualityProcess,
                         WorkloadConfig, WorldConfig, _profile_from_json,
                         export_dataset, generate_latent, import_dataset)
from .translation import (TranslationError, fit_alignment, load_operator,
                          save_operator)


class ConfigError(ValueError):
    pass


def load_config(path: Optional[str]) -> dict:
    if path is None:
        with resources.files("multisense.data").joinpath("default.json").open() as fh:
            return json.load(fh)
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError("config file not found: %s" % path)
    except json.JSONDecodeError as exc:
        raise ConfigError("config parse error in %s: %s" % (path, exc.msg))


def _require(cfg: dict, fieldname: str):
    if fieldname not in cfg:
        raise ConfigError("missing config field: %s" % fieldname)
    return cfg[fieldname]


def world_from_config(cfg: dict) -> WorldConfig:
    w = _require(cfg, "world")
    try:
        return WorldConfig(**w)
    except TypeError as exc:
        raise ConfigError("invalid world config: %s" % exc)


def profiles_from_config(cfg: dict) -> List[DeviceProfile]:
    devices = _require(cfg, "devices")
    if not devices:
        raise ConfigError("config field 'devices' must be nonempty")
    return [_profile_from_json(d) for d in devices]


def policy_from_config(cfg: dict) -> SelectionPolicy:
    p = cfg.get("policy", {})
    return SelectionPolicy(
        interval=float(p.get("interval", 10.0)),
        assessment_window=float(p.get("assessment_window", 1.0)),
        tie_break=p.get("tie_break", "sticky"),
    )


def validate_config(cfg: dict) -> None:
    world = world_from_config(cfg)
    profiles = profiles_from_config(cfg)
    ids = [p.id for p in profiles]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate device ids in 'devices'")
    training_device = int(cfg.get("model", {}).get("training_device", 0))
    if training_device not in ids:
        raise ConfigError("model.training_device %d not defined in 'devices'"
                          % training_device)
    for p in cfg.get("workloads", [1.0]):
        if not (0.0 < float(p) <= 1.0):
            raise ConfigError("workloads: availability p=%s not in (0, 1]" % p)
    if not cfg.get("seeds"):
        raise ConfigError("config field 'seeds' must be nonempty")
    policy_from_config(cfg)
    for s in cfg.get("strategies", []):
        Strategy.parse(s)
    _ = world


def scenario_factory(cfg: dict):
    world = world_from_config(cfg)
    profiles = profiles_from_config(cfg)
    model_cfg = cfg.get("model", {})

    def factory(seed: int) -> Scenario:
        return build_scenario(
            world, profiles, seed=seed,
            training_device=int(model_cfg.get("training_device", 0)),
            variant=model_cfg.get("variant", "gaussian"),
            train_horizon=float(model_cfg.get("train_horizon", 400.0)),
            translation_mode=cfg.get("translation_mode", "diagonal"),
        )

    return factory


def atomic_write(path: str, writer) -> None:
    """Write via temp-then-rename so partial output never lands at path."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-multisense-")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


# ---------------------------------------------------------------------------
# Commands

def cmd_gen(args, cfg: dict) -> int:
    world = world_from_config(cfg)
    profiles = profiles_from_config(cfg)
    trace = generate_latent(world, seed=args.seed)
    atomic_write(args.out, lambda p: export_dataset(trace, profiles, p,
                                                    seed=args.seed))
    print("wrote dataset %s (%d windows, %d devices)"
          % (args.out, trace.n_windows, len(profiles)))
    return 0


def _dataset_windows(ds, device: int) -> List[SensorWindow]:
    if device not in ds.streams:
        raise DatasetFormatError("device %d not present in dataset" % device)
    cfg = ds.trace.config
    return [
        SensorWindow(device=device, start_time=t * cfg.window_duration,
                     samples=ds.streams[device][t].astype(np.float64),
                     sample_rate=cfg.sample_rate,
                     duration=cfg.window_duration)
        for t in range(ds.trace.n_windows)
    ]


def cmd_fit(args, cfg: dict) -> int:
    ds = import_dataset(args.dataset)
    windows = _dataset_windows(ds, args.device)
    training = TrainingSet(device=args.device, windows=windows,
                           labels=ds.trace.labels)
    clf = fit_classifier(training, n_classes=ds.trace.config.n_classes,
                         variant=args.variant, model_id=args.model_id,
                         seed=args.seed)
    atomic_write(args.out, lambda p: save_model(clf, p))
    print("wrote model %s (variant=%s, device=%d)"
          % (args.out, args.variant, args.device))
    return 0


def cmd_fit_translation(args, cfg: dict) -> int:
    ds = import_dataset(args.dataset)
    src = _dataset_windows(ds, args.src)
    tgt = _dataset_windows(ds, args.tgt)
    op = fit_alignment(src, tgt, mode=args.mode, source=args.src,
                       target=args.tgt)
    atomic_write(args.out, lambda p: save_operator(op, p))
    print("wrote translation operator %s (%d -> %d, mode=%s)"
          % (args.out, args.src, args.tgt, args.mode))
    return 0


def cmd_simulate(args, cfg: dict) -> int:
    validate_config(cfg)
    strategy = Strategy.parse(args.strategy)
    if strategy.kind == "single-avg":
        raise ConfigError("single-avg is an aggregate; simulate a concrete "
                          "strategy instead")
    factory = scenario_factory(cfg)
    scenario = factory(args.seed)
    policy = policy_from_config(cfg)
    p = float(args.availability)
    workload = WorkloadConfig(kind="static" if p >= 1.0 else "dynamic",
                              availability_p=p, seed=args.seed,
                              horizon=scenario.world.horizon)
    trace, _ = _run_one(strategy, scenario, policy, workload)
    atomic_write(args.out, lambda path: open(path, "w").write(trace.to_lines()))
    print("wrote trace %s (%d windows)" % (args.out, len(trace.records)))
    return 0


def cmd_evaluate(args, cfg: dict) -> int:
    validate_config(cfg)
    strategies = [Strategy.parse(s) for s in _require(cfg, "strategies")]
    p_values = [float(p) for p in _require(cfg, "workloads")]
    seeds = [int(s) for s in _require(cfg, "seeds")]
    policy = policy_from_config(cfg)
    rows = grid_rows(scenario_factory(cfg), strategies, p_values, seeds, policy)
    n_devices = len(profiles_from_config(cfg))
    atomic_write(args.out, lambda p: write_csv(rows, p, n_devices))
    print("wrote %d rows to %s" % (len(rows), args.out))
    return 0


def cmd_report(args, cfg: dict) -> int:
    rows = read_csv(args.csv)
    if not rows:
        raise EvaluationError("empty results file %s" % args.csv)
    cells: Dict[tuple, List[float]] = {}
    for r in rows:
        cells.setdefault((r["strategy"], float(r["availability_p"])),
                         []).append(float(r["micro_f1"]))
    strategies = sorted({s for s, _ in cells})
    p_values = sorted({p for _, p in cells})
    header = "strategy".ljust(12) + "".join("p=%.1f" % p for p in p_values
                                            ).replace("p=", "  p=")
    print("strategy".ljust(14)
          + "".join(("p=%.1f" % p).rjust(16) for p in p_values))
    for s in strategies:
        line = s.ljust(14)
        for p in p_values:
            vals = cells.get((s, p))
            if vals:
                line += ("%.3f +/- %.3f" % (np.mean(vals), np.std(vals))).rjust(16)
            else:
                line += "-".rjust(16)
        print(line)
    if args.figures:
        from .figures import render_report_figures
        for path in render_report_figures(rows, args.figures):
            print("wrote figure %s" % path)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multisense",
        description="Multi-device sensing simulator: pipeline composition, "
                    "margin-based runtime selection and strategy evaluation.",
    )
    parser.add_argument("--config", help="experiment config file (JSON)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed threading all randomness")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the resolved config and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen", help="generate and persist a synthetic dataset")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="train a classifier on one device's data")
    p.add_argument("--dataset", required=True)
    p.add_argument("--device", type=int, required=True)
    p.add_argument("--variant", choices=["gaussian", "logistic"],
                   default="gaussian")
    p.add_argument("--model-id", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit-translation",
                       help="fit and persist a translation operator")
    p.add_argument("--dataset", required=True)
    p.add_argument("--src", type=int, required=True)
    p.add_argument("--tgt", type=int, required=True)
    p.add_argument("--mode", choices=["diagonal", "full"], default="diagonal")
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="run one strategy and emit a trace")
    p.add_argument("--strategy", required=True,
                   help="native | trans | qs | full | single:<device>")
    p.add_argument("--availability", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate",
                       help="run the strategy x availability x seed grid")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="print summary tables from a results CSV")
    p.add_argument("csv")
    p.add_argument("--figures", help="directory for rendered figures")

    return parser


COMMANDS = {
    "gen": cmd_gen,
    "fit": cmd_fit,
    "fit-translation": cmd_fit_translation,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.dump_config:
            print(json.dumps(cfg, indent=1, sort_keys=True))
            return 0
        if args.command is None:
            parser.print_help()
            return 2
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, DatasetFormatError, TranslationError, ModelError,
            EvaluationError, ValueError, FileNotFoundError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
