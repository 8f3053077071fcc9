"""Command line entry point.

Subcommands: gen-data, train, eval, ablate, gradcheck, sweep. Exit codes:
0 on success, 1 on configuration errors, 2 on runtime or numeric failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

import numpy as np

from . import checkpoint as ckpt_io
from . import data as data_mod
from . import harness
from .autodiff import AutodiffError, Tensor
from .config import (ConfigError, ExperimentConfig, config_to_text,
                     load_config_file)
from .data import SchemaError
from .gradcheck import check_gradients


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override it")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(flag, dest=f.name, default=None,
                       help=f"override config field {f.name}")


def _build_config(args) -> ExperimentConfig:
    cfg = load_config_file(args.config) if args.config else ExperimentConfig()
    overrides = []
    for f in fields(ExperimentConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            overrides.append(f"{f.name} = {raw}")
    if overrides:
        from .config import parse_config_text
        cfg = parse_config_text("\n".join(overrides), base=cfg)
    cfg.validate()
    return cfg


def _out_dir(cfg: ExperimentConfig) -> str:
    root = cfg.output_root
    os.makedirs(root, exist_ok=True)
    return root


def cmd_gen_data(args) -> int:
    if args.kind == "interaction":
        samples = data_mod.gen_interaction_dataset(args.n, args.seed,
                                                   noise=args.noise)
    else:
        samples = data_mod.gen_toy_translation(
            args.n, args.seed, vocab_size=args.vocab_size,
            ambiguity_rate=args.ambiguity_rate, noise=args.noise)
    train, val, test = data_mod.split_dataset(samples)
    out = args.out or os.environ.get("FUSELAB_OUT", ".")
    os.makedirs(out, exist_ok=True)
    for name, part in (("train", train), ("val", val), ("test", test)):
        path = os.path.join(out, f"{args.prefix}{name}.tsv")
        data_mod.write_dataset(path, part)
        print(f"wrote {len(part)} samples to {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _build_config(args)
    ckpt, record = harness.train(cfg)
    out = _out_dir(cfg)
    ckpt_path = os.path.join(out, "checkpoint.bin")
    ckpt_io.save_checkpoint(ckpt_path, ckpt)
    record.write_csv(os.path.join(out, "metrics.csv"))
    record.write_summary(os.path.join(out, "summary.json"))
    print(f"checkpoint: {ckpt_path}")
    print(f"best val metric {record.summary['best_val_metric']:.4f} "
          f"at epoch {record.summary['best_epoch']}")
    return 0


def cmd_eval(args) -> int:
    metrics = harness.evaluate_checkpoint(args.checkpoint, args.dataset,
                                          word_drop_p=args.word_drop_p,
                                          drop_seed=args.drop_seed)
    print(json.dumps(metrics, indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_ablate(args) -> int:
    model, cfg, info = harness.model_from_checkpoint(
        ckpt_io.load_checkpoint(args.checkpoint))
    samples = data_mod.read_dataset(args.dataset)
    grid = [float(x) for x in args.p_grid.split(",")] if args.p_grid else None
    rows = harness.ablate(model, info, samples, p_grid=grid)
    out = args.out or os.path.join(cfg.output_root, "ablation.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    harness.write_ablation_csv(out, rows)
    for p, b1, b2, b3, b4 in rows:
        print(f"p={p:.2f} bleu1={b1:.2f} bleu2={b2:.2f} bleu3={b3:.2f} bleu4={b4:.2f}")
    print(f"wrote {out}")
    return 0


def cmd_gradcheck(args) -> int:
    from . import autodiff as ad
    rng = np.random.default_rng(args.seed)

    def t(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)

    cases = {
        "matmul": lambda: check_gradients(
            lambda ts: ad.sum(ad.matmul(ts[0], ts[1])), [t(3, 4), t(4, 2)]),
        "tanh": lambda: check_gradients(
            lambda ts: ad.sum(ad.tanh(ts[0])), [t(5, 3)]),
        "sigmoid": lambda: check_gradients(
            lambda ts: ad.sum(ad.sigmoid(ts[0])), [t(5, 3)]),
        "softmax": lambda: check_gradients(
            lambda ts: ad.sum(ad.softmax(ts[0], axis=1) * ad.softmax(ts[0], axis=1)),
            [t(4, 6)]),
        "concat": lambda: check_gradients(
            lambda ts: ad.sum(ad.square(ad.concat([ts[0], ts[1]], axis=1))),
            [t(3, 2), t(3, 4)]),
        "bmm": lambda: check_gradients(
            lambda ts: ad.sum(ad.bmm(ts[0], ts[1])), [t(2, 3, 4), t(2, 4, 2)]),
        "mean": lambda: check_gradients(
            lambda ts: ad.mean(ad.square(ts[0])), [t(6, 4)]),
        "leaky_relu": lambda: check_gradients(
            lambda ts: ad.sum(ad.leaky_relu(ts[0], alpha=0.2)), [t(5, 5)]),
    }
    worst = 0.0
    failed = []
    for _ in range(args.repeats):
        for name, fn in cases.items():
            try:
                worst = max(worst, fn())
            except AssertionError as exc:
                failed.append(f"{name}: {exc}")
    if failed:
        for line in failed:
            print("FAIL", line)
        return 2
    print(f"gradcheck passed: {args.repeats * len(cases)} cases, "
          f"worst relative error {worst:.3e}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _build_config(args)
    grid1 = [float(x) for x in args.lambda1_grid.split(",")]
    grid2 = [float(x) for x in args.lambda2_grid.split(",")]
    root = _out_dir(cfg)
    results = []
    for l1 in grid1:
        for l2 in grid2:
            run_cfg = load_config_file(args.config) if args.config else ExperimentConfig()
            from .config import parse_config_text
            text = config_to_text(cfg) + f"lambda1 = {l1}\nlambda2 = {l2}\n"
            run_cfg = parse_config_text(text, base=run_cfg)
            run_cfg.out_dir = os.path.join(root, f"l1_{l1}_l2_{l2}")
            run_cfg.validate()
            os.makedirs(run_cfg.out_dir, exist_ok=True)
            ckpt, record = harness.train(run_cfg)
            ckpt_io.save_checkpoint(
                os.path.join(run_cfg.out_dir, "checkpoint.bin"), ckpt)
            record.write_csv(os.path.join(run_cfg.out_dir, "metrics.csv"))
            record.write_summary(os.path.join(run_cfg.out_dir, "summary.json"))
            results.append((l1, l2, record.summary["best_val_metric"]))
            print(f"lambda1={l1} lambda2={l2} "
                  f"best_val={record.summary['best_val_metric']:.4f}")
    sweep_csv = os.path.join(root, "sweep.csv")
    with open(sweep_csv, "w", encoding="utf-8") as fh:
        fh.write("lambda1,lambda2,best_val_metric\n")
        for l1, l2, v in results:
            fh.write(f"{l1!r},{l2!r},{v!r}\n")
    print(f"wrote {sweep_csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuselab",
        description="Adaptive multimodal fusion experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset split")
    p.add_argument("--kind", choices=("interaction", "translation"),
                   required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--vocab-size", type=int, default=24)
    p.add_argument("--ambiguity-rate", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.add_argument("--prefix", default="")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one configuration")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--word-drop-p", type=float, default=0.0)
    p.add_argument("--drop-seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="word-drop BLEU curve for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--p-grid", default=None,
                   help="comma-separated probabilities, default 0.0..0.9")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="grid sweep over lambda1/lambda2")
    _add_config_flags(p)
    p.add_argument("--lambda1-grid", default="0.5,1.0,2.0")
    p.add_argument("--lambda2-grid", default="1.0")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (harness.TrainingDiverged, ckpt_io.CheckpointError, AutodiffError,
            FloatingPointError, OverflowError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
