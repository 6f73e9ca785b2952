"""Command-line driver: ``generate``, ``train``, ``evaluate`` and ``inspect``.

Experiments are described by a JSON file with the sections below.  Every
key is optional; unknown keys are rejected.  The effective values, defaults
included, are echoed next to each output::

    {
      "seed": 0,
      "generator": {"n": 2000, "d": 32, "k": 10, "imbalance": 50, "separability": 2.0, ...},
      "n_val": 4000,
      "noise": {"type": "flip", "tau": 0.4},
      "train": {"epochs": 60, "warmup_epochs": 10, "alpha": 4.0, "epsilon": 0.975, ...},
      "groups": {"many": 0.25, "few": 0.05}      # fractions of N, or
      "groups": {"t_many": 10000, "t_medium": 1000}
    }

``generator.imbalance`` sets the head/tail ratio and overrides ``decay``.
The top-level seed drives data generation, noise (``seed + 100``) and
training; ``--seed`` overrides it.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 contract
violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

from . import storage
from .datagen import GeneratorConfig, cls_imbalance, generate, inject_noise, pn_imbalance
from .errors import ArtifactError, ConfigError, ContractError
from .metrics import GroupSpec
from .trainer import TrainConfig, evaluate, train

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_CONTRACT = 0, 2, 3, 4
NOISE_TYPES = ("none", "mislabel", "flip", "single_positive")
TOP_KEYS = {"seed", "generator", "n_val", "noise", "train", "groups"}
GEN_KEYS = {f.name for f in fields(GeneratorConfig)} - {"seed"} | {"imbalance"}
# threads come from BALANCEMIX_THREADS, the seed from the top level
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed", "threads"}
DEFAULT_GENERATOR = {"n": 2000, "d": 32, "k": 10, "imbalance": 50, "separability": 2.0}


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def resolve_config(raw: dict, seed: int | None = None, mode: str | None = None) -> dict:
    """Validate a raw experiment config and fill in every default."""
    _check_keys(raw, TOP_KEYS, "config")
    top_seed = int(raw.get("seed", 0) if seed is None else seed)
    if top_seed < 0:
        raise ConfigError("seed must be non-negative")

    gen = dict(DEFAULT_GENERATOR)
    gen.update(raw.get("generator", {}))
    _check_keys(gen, GEN_KEYS, "generator")
    ratio = gen.pop("imbalance", None)
    if ratio is not None and "decay" in raw.get("generator", {}):
        raise ConfigError("give either generator.imbalance or generator.decay")
    gen_cfg = (GeneratorConfig.for_imbalance(ratio, seed=top_seed, **gen) if ratio is not None
               else GeneratorConfig(seed=top_seed, **gen))

    noise = {"type": "none", "tau": 0.0}
    noise.update(raw.get("noise", {}))
    _check_keys(noise, {"type", "tau"}, "noise")
    if noise["type"] not in NOISE_TYPES:
        raise ConfigError(f"noise.type must be one of {NOISE_TYPES}")
    if noise["type"] == "single_positive":
        noise["tau"] = None
    elif not 0.0 <= float(noise["tau"]) < 1.0:
        raise ConfigError("noise.tau must lie in [0, 1)")

    train_kw = raw.get("train", {})
    _check_keys(train_kw, TRAIN_KEYS, "train")
    train_kw = dict(train_kw, seed=top_seed)
    if mode is not None:
        train_kw["mode"] = mode
    train_cfg = TrainConfig(**train_kw)

    groups = dict(raw.get("groups", {"many": 0.25, "few": 0.05}))
    _check_keys(groups, {"many", "few", "t_many", "t_medium"}, "groups")
    if {"t_many", "t_medium"} <= set(groups) and not {"many", "few"} & set(groups):
        groups = {k: float(v) for k, v in groups.items()}
    elif set(groups) <= {"many", "few"}:
        groups = {"many": float(groups.get("many", 0.25)), "few": float(groups.get("few", 0.05))}
    else:
        raise ConfigError("groups takes either {many, few} fractions or {t_many, t_medium} counts")
    group_spec(groups, gen_cfg.n)

    n_val = int(raw.get("n_val", 4000))
    if n_val < 1:
        raise ConfigError("n_val must be positive")
    train_dict = train_cfg.to_dict()
    train_dict.pop("threads")
    return {
        "seed": top_seed,
        "generator": gen_cfg.to_dict(),
        "n_val": n_val,
        "noise": noise,
        "train": train_dict,
        "groups": groups,
    }


def load_config(path, seed=None, mode=None) -> dict:
    if path is None:
        return resolve_config({}, seed, mode)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ArtifactError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return resolve_config(raw, seed, mode)


def _threads() -> int:
    value = os.environ.get("BALANCEMIX_THREADS", "1")
    try:
        threads = int(value)
    except ValueError:
        raise ConfigError(f"BALANCEMIX_THREADS must be an integer, got {value!r}") from None
    if threads < 1:
        raise ConfigError("BALANCEMIX_THREADS must be at least 1")
    return threads


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_generate(args) -> int:
    cfg = load_config(args.config, args.seed)
    gen_cfg = GeneratorConfig(**cfg["generator"])
    clean = generate(gen_cfg)
    noise = cfg["noise"]
    noisy = inject_noise(clean, noise["type"], noise["tau"] or 0.0, cfg["seed"] + 100)
    val = generate(gen_cfg, "val", cfg["n_val"])
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        storage.write_dataset(out, noisy, val, generator=cfg["generator"])
        manifest = {
            "config": cfg,
            "cls_imbalance": cls_imbalance(noisy.true_positive_counts),
            "pn_imbalance": pn_imbalance(noisy),
            "noise_rate": float((noisy.observed_labels != noisy.true_labels).mean()),
            "true_positive_counts": noisy.true_positive_counts.tolist(),
            "observed_positive_counts": noisy.class_positive_counts.tolist(),
        }
        _write_json(str(out) + ".manifest.json", manifest)
    except OSError as exc:
        raise ArtifactError(str(exc)) from exc
    print(out)
    return EXIT_OK


def group_spec(groups: dict, n: int) -> GroupSpec:
    """Thresholds from the config's ``groups`` section for a training set of size ``n``."""
    if "t_many" in groups:
        return GroupSpec(groups["t_many"], groups["t_medium"])
    return GroupSpec.relative(n, groups["many"], groups["few"])


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed, args.mode)
    train_set, val, _ = storage.read_dataset(args.dataset)
    if val is None:
        raise ContractError("dataset file has no validation split")
    spec = group_spec(cfg["groups"], train_set.n)
    cfg["group_thresholds"] = {"t_many": spec.t_many, "t_medium": spec.t_medium}
    train_cfg = TrainConfig(**cfg["train"], threads=_threads())
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", cfg)
        with open(out / "epochs.jsonl", "w") as log:
            def on_epoch(report):
                log.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
                log.flush()

            result = train(train_cfg, train_set, val, spec, on_epoch=on_epoch)
        final = result.reports[-1]
        metrics = dict(final.metrics)
        metrics["diagnostics"] = final.diagnostics or {}
        _write_json(out / "metrics.json", metrics)
        storage.save_checkpoint(out / "checkpoint.npz", result.model, cfg, cfg["seed"])
        storage.save_analytics(out / "analytics.npz", result.snapshots, result.ledger)
    except OSError as exc:
        raise ArtifactError(str(exc)) from exc
    print(out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, cfg, _ = storage.load_checkpoint(args.checkpoint)
    train_set, val, _ = storage.read_dataset(args.dataset)
    target = val if args.split == "val" else train_set
    if target is None:
        raise ContractError("dataset file has no validation split")
    if target.d != model.in_dim or target.k != model.n_classes:
        raise ContractError(f"checkpoint expects d={model.in_dim}, K={model.n_classes}; "
                            f"dataset has d={target.d}, K={target.k}")
    if args.labels == "observed":
        target = replace(target, true_labels=target.observed_labels)
    spec = group_spec(cfg["groups"], train_set.n)
    metrics = evaluate(model, target, train_set.true_positive_counts, spec)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return EXIT_OK


def _sampler_rows(a):
    yield ["epoch", "index", "prob"]
    for e, probs in zip(a["epoch"], a["probs"]):
        for i, p in enumerate(probs):
            yield [int(e), i, repr(float(p))]


def _confidence_rows(a):
    yield ["epoch", "class", "presence", "absence"]
    for e, pres, absn in zip(a["epoch"], a["presence"], a["absence"]):
        for k in range(len(pres)):
            yield [int(e), k, repr(float(pres[k])), repr(float(absn[k]))]


def _gmm_rows(a):
    yield ["epoch", "class", "polarity", "component", "mean", "variance", "weight", "degenerate"]
    for e, has, params, degen in zip(a["epoch"], a["has_gmm"], a["gmm"], a["gmm_degenerate"]):
        if not has:
            continue
        for k in range(params.shape[0]):
            for pol in (0, 1):
                for comp, name in enumerate(("clean", "noisy")):
                    m, v, w = params[k, pol, comp]
                    yield [int(e), k, pol, name, repr(float(m)), repr(float(v)), repr(float(w)),
                           int(degen[k, pol])]


def _ledger_rows(a):
    yield ["epoch", "C", "R", "U", "total"]
    for e, (c, r, u) in zip(a["epoch"], a["counts"]):
        yield [int(e), int(c), int(r), int(u), int(c + r + u)]


INSPECT = {"sampler": _sampler_rows, "confidence": _confidence_rows, "gmm": _gmm_rows,
           "ledger": _ledger_rows}


def cmd_inspect(args) -> int:
    path = Path(args.run) / "analytics.npz"
    if not path.exists():
        raise ArtifactError(f"no analytics in {args.run}")
    analytics = storage.load_analytics(path)
    rows = INSPECT[args.what](analytics)
    try:
        if args.out:
            with open(args.out, "w", newline="") as fh:
                csv.writer(fh).writerows(rows)
        else:
            csv.writer(sys.stdout, lineterminator="\n").writerows(rows)
    except OSError as exc:
        raise ArtifactError(str(exc)) from exc
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="balancemix", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset file")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train on a dataset file")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("balancemix", "bce_baseline"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="print metrics JSON for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("val", "train"), default="val")
    p.add_argument("--labels", choices=("true", "observed"), default="true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="dump run analytics as CSV")
    p.add_argument("run", help="run directory")
    p.add_argument("what", choices=sorted(INSPECT))
    p.add_argument("--out", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArtifactError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
