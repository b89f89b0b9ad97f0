"""Command-line entry point.

Subcommands: gen-data, make-splits, train, eval, compose-demo, sweep,
ablate. Every flag can also be supplied through ``--config FILE`` holding
flat ``key=value`` lines (keys are the flag names with underscores);
explicit flags win over the file, the file wins over built-in defaults.
Each run echoes its fully resolved settings to a spec file, and feeding
that file back through ``--config`` replays the run byte-for-byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .composer import ComposeConfig, compose_batch
from .errors import HoicompError
from .evaluator import (
    ThresholdConfig,
    detections_from_model,
    evaluate,
    format_report,
    format_report_table,
    ground_truths_from_instances,
    load_detections,
    save_detections,
)
from .experiments import (
    DEFAULT_RARE_THRESHOLD,
    branch_ablation,
    lambda_sweep,
    run_training,
    with_compose_mode,
)
from .label_algebra import compose, decompose
from .network import LossWeights, NetworkConfig, load_params, save_params
from .spatial import ascii_art, encode_spatial_map
from .synthdata import (
    DatasetConfig,
    class_counts,
    generate,
    load_dataset,
    random_hoi_defs,
    save_dataset,
)
from .trainer import TrainConfig, make_minibatch, write_metrics_log
from .zeroshot import (
    frequency_partition,
    load_split,
    make_split,
    save_split,
    zeroshot_partition,
)


def _add_dataset_flags(p: argparse.ArgumentParser):
    p.add_argument("--num-verbs", type=int, default=12)
    p.add_argument("--num-objects", type=int, default=10)
    p.add_argument("--num-hois", type=int, default=60)
    p.add_argument("--zipf-exponent", type=float, default=1.5)
    p.add_argument("--n-train", type=int, default=20000)
    p.add_argument("--n-test", type=int, default=3000)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--class-sep", type=float, default=6.0)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--multi-label-frac", type=float, default=0.1)
    p.add_argument("--max-instances-per-image", type=int, default=3)


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--iterations", type=int, default=3000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=0.0005)
    p.add_argument("--interactions", type=int, default=8,
                   help="interactions per minibatch")
    p.add_argument("--lambda1", type=float, default=2.0)
    p.add_argument("--lambda2", type=float, default=0.5)
    p.add_argument("--compose", choices=["both", "within", "between", "off"], default="both")
    p.add_argument("--no-balance", action="store_true",
                   help="keep every feasible composition instead of matching the real count")
    p.add_argument("--unseen-allowed", action="store_true",
                   help="let composed labels carry unseen-class bits (zero-shot training)")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--vo-hidden", type=int, default=128)
    p.add_argument("--sp-hidden", type=int, default=64)
    p.add_argument("--eval-every", type=int, default=0)


def _add_eval_flags(p: argparse.ArgumentParser):
    p.add_argument("--thr-human", type=float, default=0.0)
    p.add_argument("--thr-object", type=float, default=0.0)
    p.add_argument("--thr-fallback", type=float, default=0.5)
    p.add_argument("--branch", choices=["both", "vo_only", "sp_only"], default="both")
    p.add_argument("--eval-mode", choices=["default", "known_object"], default="default")
    p.add_argument("--rare-threshold", type=int, default=DEFAULT_RARE_THRESHOLD)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hoicomp",
        description="Compositional interaction learning on synthetic long-tail data",
    )
    parser.add_argument("--config", help="flat key=value file overriding flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a seeded synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="train dataset file")
    p.add_argument("--test-out", default=None, help="test dataset file (default: <out>.test)")
    _add_dataset_flags(p)
    p.add_argument("--show-spatial", type=int, default=0,
                   help="print the spatial maps of the first N train instances")

    p = sub.add_parser("make-splits", help="build an unseen-class split from a dataset")
    p.add_argument("--data")
    p.add_argument("--n-unseen", type=int)
    p.add_argument("--strategy", choices=["rare_first", "nonrare_first"], default="rare_first")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("train", help="train a model and report test mAP")
    p.add_argument("--data")
    p.add_argument("--test", default=None)
    p.add_argument("--split", default=None, help="unseen-class split file to train against")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    _add_train_flags(p)
    _add_eval_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint or a detections file")
    p.add_argument("--data", help="test dataset file")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--detections", default=None, help="score an external detections file instead")
    p.add_argument("--train-data", default=None, help="train dataset for the rare/nonrare cut")
    p.add_argument("--split", default=None, help="report unseen/seen instead of rare/nonrare")
    p.add_argument("--out", help="output directory")
    p.add_argument("--dets-out", action="store_true", help="also write the scored detections")
    _add_eval_flags(p)

    p = sub.add_parser("compose-demo", help="print surviving compositions for one batch")
    p.add_argument("--data")
    p.add_argument("--mode", choices=["both", "within", "between", "off"], default="both")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=20)
    p.add_argument("--show-spatial", type=int, default=0)

    p = sub.add_parser("sweep", help="train once per loss-weight value")
    p.add_argument("--data")
    p.add_argument("--test")
    p.add_argument("--param", choices=["lambda1", "lambda2"])
    p.add_argument("--values", help="comma-separated values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_train_flags(p)
    _add_eval_flags(p)

    p = sub.add_parser("ablate", help="composition-mode and branch-mode matrix")
    p.add_argument("--data")
    p.add_argument("--test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_train_flags(p)
    _add_eval_flags(p)

    return parser


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise HoicompError(f"missing required flag --{name.replace(chr(95), chr(45))}")


def load_flat_config(path) -> dict[str, str]:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise HoicompError(f"bad config line (expected key=value): {line!r}")
            key, val = line.split("=", 1)
            values[key.strip()] = val.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, overrides: dict[str, str]):
    """Convert file values with each flag's own type and install as defaults."""
    known = set()
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sp in action.choices.values():
                _apply_config(sp, overrides)
            continue
        if action.dest in ("help", "command"):
            continue
        known.add(action.dest)
        if action.dest not in overrides:
            continue
        raw = overrides[action.dest]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            value = action.type(raw)
        else:
            value = raw
        parser.set_defaults(**{action.dest: value})


def _spec_lines(args: argparse.Namespace, keys) -> str:
    lines = [f"command={args.command}"]
    for key in sorted(keys):
        val = getattr(args, key)
        if val is None:
            continue
        if isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{key}={val}")
    return "\n".join(lines) + "\n"


def _write_spec(args, keys, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_spec_lines(args, keys))


_DATASET_KEYS = (
    "seed", "num_verbs", "num_objects", "num_hois", "zipf_exponent", "n_train",
    "n_test", "feature_dim", "class_sep", "noise_sigma", "multi_label_frac",
    "max_instances_per_image",
)
_TRAIN_KEYS = (
    "iterations", "lr", "momentum", "weight_decay", "interactions", "lambda1",
    "lambda2", "compose", "no_balance", "unseen_allowed", "hidden", "vo_hidden",
    "sp_hidden", "eval_every", "seed",
)
_EVAL_KEYS = (
    "thr_human", "thr_object", "thr_fallback", "branch", "eval_mode", "rare_threshold",
)


def _dataset_config(args) -> DatasetConfig:
    defs = random_hoi_defs(
        args.num_verbs, args.num_objects, args.num_hois,
        rngmod.stream(args.seed, "space-defs"),
    )
    return DatasetConfig(
        num_verbs=args.num_verbs,
        num_objects=args.num_objects,
        hoi_defs=defs,
        zipf_exponent=args.zipf_exponent,
        n_train=args.n_train,
        n_test=args.n_test,
        feature_dim=args.feature_dim,
        class_sep=args.class_sep,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        multi_label_frac=args.multi_label_frac,
        max_instances_per_image=args.max_instances_per_image,
    )


def _train_config(args, unseen_ids=frozenset()) -> TrainConfig:
    compose_cfg = ComposeConfig(
        mode=args.compose,
        interactions_per_minibatch=args.interactions,
        balance=not args.no_balance,
        unseen_allowed=args.unseen_allowed,
        unseen_ids=unseen_ids,
    )
    return TrainConfig(
        lr=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        iterations=args.iterations,
        interactions_per_minibatch=args.interactions,
        compose=compose_cfg,
        loss_weights=LossWeights(lambda1=args.lambda1, lambda2=args.lambda2),
        seed=args.seed,
        eval_every=args.eval_every,
    )


def _net_config(args, space, feature_dim) -> NetworkConfig:
    return NetworkConfig(
        num_hois=space.num_hois,
        feature_dim=feature_dim,
        hidden=args.hidden,
        vo_hidden=args.vo_hidden,
        sp_hidden=args.sp_hidden,
    )


def _thresholds(args) -> ThresholdConfig:
    return ThresholdConfig(human=args.thr_human, object=args.thr_object, fallback=args.thr_fallback)


def _report_files(report, space, counts, out_dir: Path, stem: str = "report"):
    (out_dir / f"{stem}.txt").write_text(format_report(report), encoding="utf-8")
    (out_dir / f"{stem}.tsv").write_text(
        format_report_table(report, space, counts), encoding="utf-8"
    )


def _cmd_gen_data(args) -> int:
    _require(args, "out")
    cfg = _dataset_config(args)
    train_set, test_set, space = generate(cfg)
    out = Path(args.out)
    test_out = Path(args.test_out) if args.test_out else out.with_suffix(out.suffix + ".test")
    save_dataset(train_set, space, out)
    save_dataset(test_set, space, test_out)
    _write_spec(args, _DATASET_KEYS + ("out", "test_out"), str(out) + ".spec")
    print(f"wrote {len(train_set)} train instances to {out}")
    print(f"wrote {len(test_set)} test instances to {test_out}")
    for inst in train_set[: args.show_spatial]:
        print(f"image {inst.image_id} object {space.object_names[inst.object_id]}")
        print(ascii_art(encode_spatial_map(inst.human_box, inst.object_box)))
    return 0


def _cmd_make_splits(args) -> int:
    _require(args, "data", "n_unseen", "out")
    instances, space = load_dataset(args.data)
    counts = class_counts(instances, space)
    split = make_split(counts, space, args.n_unseen, args.strategy, tie_break_seed=args.seed)
    save_split(split, args.out)
    _write_spec(args, ("data", "n_unseen", "strategy", "seed", "out"), str(args.out) + ".spec")
    print(f"unseen classes ({len(split.unseen)}): {sorted(split.unseen)}")
    return 0


def _run_and_dump(args, out_dir: Path, train_set, test_set, space, split=None) -> None:
    unseen_ids = split.unseen if split is not None else frozenset()
    train_cfg = _train_config(args, unseen_ids=unseen_ids)
    net_cfg = _net_config(args, space, len(train_set[0].human_feat))
    partition = zeroshot_partition(split) if split is not None else None
    result = run_training(
        train_set, test_set or [], space, train_cfg, net_cfg=net_cfg,
        thresholds=_thresholds(args), partition=partition,
        branch_mode=args.branch, eval_mode=args.eval_mode,
        rare_threshold=args.rare_threshold, split=split,
    )
    write_metrics_log(result.log, out_dir / "metrics.log")
    save_params(result.params, out_dir / "checkpoint.ckpt",
                meta={"seed": args.seed, "num_hois": space.num_hois})
    if test_set:
        _report_files(result.report, space, result.counts, out_dir)
    print(f"final mAP_full={100.0 * result.report.map_full:.2f}")


def _cmd_train(args) -> int:
    _require(args, "data", "out")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set, space = load_dataset(args.data)
    test_set = load_dataset(args.test)[0] if args.test else []
    split = load_split(args.split, space) if args.split else None
    _write_spec(
        args,
        _TRAIN_KEYS + _EVAL_KEYS + ("data", "test", "split"),
        out_dir / "spec.txt",
    )
    _run_and_dump(args, out_dir, train_set, test_set, space, split=split)
    return 0


def _cmd_eval(args) -> int:
    _require(args, "data", "out")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    test_set, space = load_dataset(args.data)
    counts = None
    if args.train_data:
        train_set, _ = load_dataset(args.train_data)
        counts = class_counts(train_set, space)
    if args.split:
        partition = zeroshot_partition(load_split(args.split, space))
    elif counts is not None:
        partition = frequency_partition(counts, rare_threshold=args.rare_threshold)
    else:
        partition = None

    if (args.checkpoint is None) == (args.detections is None):
        raise HoicompError("pass exactly one of --checkpoint / --detections")
    if args.checkpoint:
        params, _ = load_params(args.checkpoint)
        dets = detections_from_model(test_set, params, _thresholds(args), branch_mode=args.branch)
    else:
        dets = load_detections(args.detections)
    gts = ground_truths_from_instances(test_set)
    report = evaluate(dets, gts, space, mode=args.eval_mode, partition=partition)
    _write_spec(
        args,
        _EVAL_KEYS + ("data", "checkpoint", "detections", "train_data", "split"),
        out_dir / "spec.txt",
    )
    _report_files(report, space, counts, out_dir)
    if args.dets_out:
        save_detections(dets, out_dir / "detections.tsv")
    print(format_report(report), end="")
    return 0


def _cmd_compose_demo(args) -> int:
    _require(args, "data")
    instances, space = load_dataset(args.data)
    cfg = TrainConfig(interactions_per_minibatch=args.batch_size, seed=args.seed)
    batch = make_minibatch(instances, cfg, rngmod.stream(args.seed, "batch"))
    compose_cfg = ComposeConfig(mode=args.mode, balance=False)
    composed = compose_batch(batch, space, compose_cfg, rngmod.stream(args.seed, "compose"))
    print(f"batch of {len(batch)} real instances over "
          f"{len({b.image_id for b in batch})} images")
    for idx, inst in enumerate(batch):
        names = [space.hoi_names[c] for c in np.flatnonzero(inst.label)]
        print(f"  real[{idx}] image={inst.image_id} labels={names}")
        if idx < args.show_spatial:
            print(ascii_art(encode_spatial_map(inst.human_box, inst.object_box)))
    print(f"{len(composed)} feasible compositions (mode={args.mode})")
    for comp in composed[: args.limit]:
        i, j, kind = comp.provenance
        names = [space.hoi_names[c] for c in np.flatnonzero(comp.label)]
        print(f"  verb[{i}] + object[{j}] ({kind}) -> {names}")
    return 0


def _cmd_sweep(args) -> int:
    _require(args, "data", "test", "param", "values", "out")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set, space = load_dataset(args.data)
    test_set, _ = load_dataset(args.test)
    values = [float(v) for v in args.values.split(",") if v]
    base_cfg = _train_config(args)
    rows = lambda_sweep(
        train_set, test_set, space, base_cfg, args.param, values,
        net_cfg=_net_config(args, space, len(train_set[0].human_feat)),
        thresholds=_thresholds(args), rare_threshold=args.rare_threshold,
    )
    _write_spec(args, _TRAIN_KEYS + _EVAL_KEYS + ("data", "test", "param", "values"),
                out_dir / "spec.txt")
    lines = [f"{args.param}\tmap_full\tmap_rare\tmap_nonrare"]
    for row in rows:
        r = row["report"]
        lines.append(
            f"{row['value']}\t{repr(100.0 * r.map_full)}\t"
            f"{repr(100.0 * r.map_rare)}\t{repr(100.0 * r.map_nonrare)}"
        )
    (out_dir / "sweep.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


def _cmd_ablate(args) -> int:
    _require(args, "data", "test", "out")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set, space = load_dataset(args.data)
    test_set, _ = load_dataset(args.test)
    net_cfg = _net_config(args, space, len(train_set[0].human_feat))
    base_cfg = _train_config(args)
    _write_spec(args, _TRAIN_KEYS + _EVAL_KEYS + ("data", "test"), out_dir / "spec.txt")

    lines = ["run\tmap_full\tmap_rare\tmap_nonrare"]
    both_result = None
    for mode in ("off", "within", "between", "both"):
        result = run_training(
            train_set, test_set, space, with_compose_mode(base_cfg, mode),
            net_cfg=net_cfg, thresholds=_thresholds(args),
            rare_threshold=args.rare_threshold,
        )
        if mode == "both":
            both_result = result
        r = result.report
        lines.append(
            f"compose_{mode}\t{repr(100.0 * r.map_full)}\t"
            f"{repr(100.0 * r.map_rare)}\t{repr(100.0 * r.map_nonrare)}"
        )
    for mode, report in branch_ablation(both_result, test_set, thresholds=_thresholds(args)).items():
        lines.append(
            f"branch_{mode}\t{repr(100.0 * report.map_full)}\t"
            f"{repr(100.0 * report.map_rare)}\t{repr(100.0 * report.map_nonrare)}"
        )
    (out_dir / "ablate.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "make-splits": _cmd_make_splits,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "compose-demo": _cmd_compose_demo,
    "sweep": _cmd_sweep,
    "ablate": _cmd_ablate,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        _apply_config(parser, load_flat_config(known.config))
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (HoicompError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
