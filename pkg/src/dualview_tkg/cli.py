"""Command-line entry point: ``python -m dualview_tkg <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .config import PRESETS, RunConfig, load_config
from .data import dataset_checksum, load_dataset, write_dataset
from .errors import DataError, NumericError, ShapeError
from .evaluation import robustness_sweep, write_report
from .graphs import ContextBuilder
from .model import VARIANT_TAGS
from .rules import load_rules, mine_rules, save_rules
from .synth import SyntheticSpec, generate_dataset
from .training import Experiment, file_sha256, load_model, run_ablation, write_manifest

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SHAPE, EXIT_NUMERIC = 0, 2, 3, 4, 5

log = logging.getLogger("dualview_tkg")

# CLI flag -> RunConfig field (flags use dashes)
_CONFIG_FLAGS = {f.name: "--" + f.name.replace("_", "-") for f in fields(RunConfig) if f.name != "rules_path"}


class UsageError(Exception):
    pass


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; CLI flags override it")
    p.add_argument("--dataset-preset", choices=sorted(PRESETS), help="per-dataset defaults")
    p.add_argument("--rules", dest="rules_path", help="rule file (mined from the training split if absent)")
    types = {f.name: f.type for f in fields(RunConfig)}
    casts = {"int": int, "float": float, "str": str}
    for name, flag in _CONFIG_FLAGS.items():
        p.add_argument(flag, dest=name, type=casts[types[name]], default=None)


def _config_from(args) -> RunConfig:
    overrides = {name: getattr(args, name) for name in _CONFIG_FLAGS}
    overrides["rules_path"] = getattr(args, "rules_path", None)
    config = load_config(args.config, args.dataset_preset, overrides)
    if not config.data_dir:
        raise UsageError("a data directory is required (--data-dir or TKG_DATA_DIR)")
    return config


def _prepare(config: RunConfig, rules_out: Path | None = None):
    """Load data and rules; mine rules when no readable rule file is configured."""
    dataset = load_dataset(config.data_dir, config.granularity)
    if config.rules_path and Path(config.rules_path).exists():
        rules = load_rules(config.rules_path)
        rules_file = Path(config.rules_path)
    else:
        if config.rules_path:
            rules_out = Path(config.rules_path)
        rules = mine_rules(dataset.train.facts(), dataset.vocab.base_relation_count,
                           num_walks=config.num_walks, min_body_support=config.min_body_support,
                           rng=np.random.default_rng(config.seed))
        rules_file = rules_out
        if rules_file is not None:
            rules_file.parent.mkdir(parents=True, exist_ok=True)
            save_rules(rules, rules_file)
    return dataset, rules, rules_file


def _manifest(path: Path, config: RunConfig, rules_file, command: str, extra=None) -> None:
    write_manifest(path, config, dataset_checksum(config.data_dir), file_sha256(rules_file), command, extra)


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    spec = SyntheticSpec(num_entities=args.entities, num_relations=args.relations,
                         num_timestamps=args.timestamps, noise=args.noise, seed=args.seed,
                         rule_lag=args.rule_lag, rule_echoes=args.rule_echoes)
    dataset = generate_dataset(spec)
    out = Path(args.out)
    write_dataset(out, dataset)
    (out / "manifest.json").write_text(json.dumps({
        "command": "synth", "spec": asdict(spec), "seed": spec.seed,
        "dataset_sha256": dataset_checksum(out), "rules_sha256": None,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {dataset.train.num_facts}/{dataset.valid.num_facts}/{dataset.test.num_facts} "
          f"train/valid/test facts to {out}")
    return EXIT_OK


def cmd_mine_rules(args) -> int:
    config = _config_from(args)
    dataset = load_dataset(config.data_dir, config.granularity)
    rules = mine_rules(dataset.train.facts(), dataset.vocab.base_relation_count,
                       num_walks=config.num_walks, min_body_support=config.min_body_support,
                       rng=np.random.default_rng(config.seed), mode=args.mode)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_rules(rules, out)
    _manifest(_sibling(out, ".manifest.json"), config, out, "mine-rules")
    print(f"mined {len(rules)} rules over {len(rules.heads())} head relations -> {out}")
    return EXIT_OK


def cmd_build_graphs(args) -> int:
    config = _config_from(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, rules, rules_file = _prepare(config, out / "rules.txt")
    pool = dataset.train.facts() if args.split == "train" else dataset.all_facts()
    simple = "simple-dyn" in config.variant.split("+")
    builder = ContextBuilder(pool, dataset.vocab.base_relation_count, rules, config.cap,
                             config.history_len, simple_dynamics=simple)
    split = dataset.split(args.split)
    for t in split.timestamps:
        ctx = builder.context(t, split)
        (out / f"invariance_{t}.txt").write_text("".join(l + "\n" for l in ctx.invariance.to_lines()))
        (out / f"dynamics_{t}.txt").write_text("".join(l + "\n" for l in ctx.dynamics.to_lines()))
    _manifest(out / "manifest.json", config, rules_file, "build-graphs", {"split": args.split})
    print(f"wrote view graphs for {len(split)} {args.split} timestamps to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config_from(args)
    ckpt = Path(args.checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    dataset, rules, rules_file = _prepare(config, _sibling(ckpt, ".rules.txt"))
    experiment = Experiment(dataset, config, rules)
    log_path = Path(args.log) if args.log else _sibling(ckpt, ".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        def record(entry):
            fh.write(json.dumps({"epoch": entry.epoch, "loss": entry.loss, "valid_mrr": entry.valid_mrr,
                                 "seconds": entry.seconds}) + "\n")
            fh.flush()
            print(f"epoch {entry.epoch:3d}  loss {entry.loss['total']:.4f}  valid MRR {entry.valid_mrr:.2f}")
        result = experiment.fit(checkpoint=ckpt, on_epoch=record)
    _manifest(_sibling(ckpt, ".manifest.json"), config, rules_file, "train",
              {"best_epoch": result.best_epoch, "best_valid_mrr": result.best_valid.mrr})
    print(f"best epoch {result.best_epoch}: valid MRR {result.best_valid.mrr:.2f} -> {ckpt}")
    return EXIT_OK


def _checkpoint_config(args) -> RunConfig:
    """Config stored in the checkpoint, overlaid with explicitly given flags."""
    from .tensor import load_checkpoint
    _, _, meta = load_checkpoint(args.checkpoint)
    stored = RunConfig(**meta.get("config", {}))
    overrides = {name: getattr(args, name) for name in _CONFIG_FLAGS if getattr(args, name) is not None}
    if args.rules_path:
        overrides["rules_path"] = args.rules_path
    config = load_config(args.config, args.dataset_preset, {**stored.to_dict(), **overrides})
    if not config.data_dir:
        raise UsageError("a data directory is required (--data-dir or TKG_DATA_DIR)")
    return config


def cmd_eval(args) -> int:
    config = _checkpoint_config(args)
    dataset, rules, rules_file = _prepare(config, _sibling(Path(args.checkpoint), ".rules.txt"))
    experiment = Experiment(dataset, config, rules)
    model, _ = load_model(args.checkpoint, experiment)
    report = experiment.evaluate(model, args.split)
    out = Path(args.report)
    write_report(out, [(config.variant, args.split, report)], config.to_dict())
    _manifest(_sibling(out, ".manifest.json"), config, rules_file, "eval", {"checkpoint": str(args.checkpoint)})
    print(f"{config.variant} {args.split}: MRR {report.mrr:.2f}  H@1 {report.h1:.2f}  "
          f"H@3 {report.h3:.2f}  H@10 {report.h10:.2f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _config_from(args)
    out = Path(args.report)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataset, rules, rules_file = _prepare(config, _sibling(out, ".rules.txt"))
    experiment = Experiment(dataset, config, rules)
    rows = []
    for tag in args.variants.split(","):
        for split, report in run_ablation(experiment, tag, splits=(args.split,)).items():
            rows.append((tag, split, report))
            print(f"{tag:12s} {split}: MRR {report.mrr:.2f}")
    write_report(out, rows, config.to_dict())
    _manifest(_sibling(out, ".manifest.json"), config, rules_file, "ablate", {"variants": args.variants})
    return EXIT_OK


def cmd_robustness(args) -> int:
    config = _checkpoint_config(args)
    dataset, rules, rules_file = _prepare(config, _sibling(Path(args.checkpoint), ".rules.txt"))
    experiment = Experiment(dataset, config, rules)
    model, _ = load_model(args.checkpoint, experiment)
    levels = [float(v) for v in args.noise_levels.split(",")]
    points = robustness_sweep(model, experiment.eval_builder, dataset.split(args.split), experiment.known,
                              levels, np.random.default_rng(config.seed))
    out = Path(args.report)
    write_report(out, [(f"{config.variant}@sigma={p.sigma:g}", args.split, p.report) for p in points],
                 {**config.to_dict(), "degradation_percent": {f"{p.sigma:g}": p.degradation for p in points}})
    _manifest(_sibling(out, ".manifest.json"), config, rules_file, "robustness", {"noise_levels": levels})
    for p in points:
        print(f"sigma {p.sigma:g}: MRR {p.report.mrr:.2f}  degradation {p.degradation:.2f}%")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualview-tkg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write the synthetic periodic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--entities", type=int, default=20)
    p.add_argument("--relations", type=int, default=5)
    p.add_argument("--timestamps", type=int, default=60)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--rule-lag", type=int, default=SyntheticSpec.rule_lag)
    p.add_argument("--rule-echoes", type=int, default=SyntheticSpec.rule_echoes)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mine-rules", help="mine one-hop temporal rules from the training split")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("auto", "exhaustive", "sampled"), default="auto")
    p.set_defaults(func=cmd_mine_rules)

    p = sub.add_parser("build-graphs", help="dump per-timestamp view graphs as edge lists")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("train", help="train with early stopping on validation MRR")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--log", help="JSON-lines training log (default: <checkpoint>.log.jsonl)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="filtered MRR/Hits of a checkpoint")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate several variants")
    _add_config_args(p)
    p.add_argument("--variants", default=",".join(VARIANT_TAGS))
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("robustness", help="Gaussian noise on base entity embeddings at inference")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--noise-levels", default="0,0.1,0.3,0.5")
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_robustness)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        if isinstance(exc, (DataError, ShapeError)):
            raise
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run(argv=None) -> int:
    """``main`` with error categories mapped to exit codes."""
    try:
        return main(argv)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ShapeError as exc:
        print(f"shape error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
