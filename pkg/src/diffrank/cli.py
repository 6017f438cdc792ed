"""Command line entry point: ``diffrank <command> [flags]``.

Outputs go to ``--out-dir``, which defaults to ``$DIFFRANK_OUT`` or
``./runs``. Exit status is 0 on success, 1 on a usage error and 2 when a
command fails at run time.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .checkpoint import CheckpointError, load_sorter
from .experiments import ExperimentResult, compare_sorters, continuity_probe, depth_sweep, handcrafted_entry, write_csv
from .losses import LossConfig
from .sorters import HandcraftedSorter
from .synth import GenConfig
from .toys import ToyConfig, train_downstream
from .train import TrainConfig, train_sorter

log = logging.getLogger("diffrank")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out_dir(args) -> Path:
    return Path(args.out_dir or os.environ.get("DIFFRANK_OUT") or "runs")


def _gen_cfg(args) -> GenConfig:
    return GenConfig(d=args.d, seed=args.seed, distribution=args.distribution)


def _train_cfg(args) -> TrainConfig:
    if args.paper_scale:
        return TrainConfig.paper_scale(seed=args.seed, patience=args.patience)
    return TrainConfig(
        epochs=args.epochs,
        pairs_per_epoch=args.pairs_per_epoch,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        patience=args.patience,
        heldout_size=args.heldout_size,
    )


def _sorter_hyper(args) -> dict:
    if args.kind == "cnn":
        return {"depth": args.depth, "standardize": args.standardize}
    return {"hidden_size": args.hidden_size, "num_layers": args.layers, "standardize": args.standardize}


def _load_task_sorter(args):
    if args.sorter == "handcrafted":
        return HandcraftedSorter(lam=args.lam)
    return load_sorter(args.sorter)


# commands


def cmd_train_sorter(args) -> ExperimentResult:
    gen, cfg = _gen_cfg(args), _train_cfg(args)
    hyper = _sorter_hyper(args)
    out = _out_dir(args)
    name = args.name or f"{args.kind}_d{args.d}_s{args.seed}"
    ckpt, rep = train_sorter(args.kind, gen, cfg, out=out / f"{name}.ckpt", **hyper)
    report_path = rep.save(out / f"{name}.report.json")
    rows = [("heldout_l1", min(rep.heldout)), ("best_epoch", float(ckpt.metadata["best_epoch"]))]
    return ExperimentResult("train-sorter", rep.config, rows, [rep.checkpoint, str(report_path)], args.seed)


def cmd_eval_sorter(args) -> ExperimentResult:
    sorters = {}
    d = args.d
    for path in args.checkpoint:
        s = load_sorter(path)
        if d is not None and s.d != d:
            raise UsageError(f"{path} was trained for d={s.d}, not {d}")
        d = s.d
        sorters[f"{s.kind}:{Path(path).name}"] = s
    if d is None:
        raise UsageError("pass --d when no checkpoint is given")
    for lam in args.lam:
        name, s = handcrafted_entry(lam)
        sorters[name] = s
    gen = GenConfig(d=d, seed=args.seed, distribution=args.distribution)
    rows = compare_sorters(sorters, gen, args.n)
    config = {"gen": asdict(gen), "n": args.n, "checkpoints": args.checkpoint, "lam": args.lam}
    files = []
    if args.csv:
        files.append(str(write_csv(_out_dir(args) / args.csv, ["sorter", "heldout_l1"], rows, config)))
    return ExperimentResult("eval-sorter", config, rows, files, args.seed)


def cmd_depth_sweep(args) -> ExperimentResult:
    gen, cfg = _gen_cfg(args), _train_cfg(args)
    rows, reports = depth_sweep(args.depths, gen, cfg, standardize=args.standardize)
    config = {"gen": asdict(gen), "train": asdict(cfg), "depths": args.depths, "standardize": args.standardize}
    path = write_csv(_out_dir(args) / args.csv, ["depth", "epoch", "train_loss", "heldout_loss"], rows, config)
    table = [(f"depth {k}", min(r.heldout)) for k, r in reports.items()]
    return ExperimentResult("depth-sweep", config, table, [str(path)], args.seed)


def cmd_continuity_probe(args) -> ExperimentResult:
    sorter = load_sorter(args.checkpoint)
    curve = continuity_probe(sorter, sorter.d, args.index, args.step, args.seed)
    config = {"checkpoint": args.checkpoint, "index": args.index, "step": args.step, "seed": args.seed, "d": sorter.d}
    path = write_csv(_out_dir(args) / args.csv, ["value", "exact_rank", "predicted"], curve.rows(), config)
    rows = [("max_jump", curve.max_jump), ("mean_abs_deviation", curve.mean_deviation)]
    return ExperimentResult("continuity-probe", config, rows, [str(path)], args.seed)


def _toy(args, task: str, objectives: tuple[str, ...]) -> ExperimentResult:
    sorter = _load_task_sorter(args)
    d = sorter.d if sorter.kind != "handcrafted" else args.d
    loss_cfg = LossConfig(margin=args.margin, aux_weight=args.aux_weight, d=d)
    toy_cfg = ToyConfig(epochs=args.epochs, seed=args.seed, freeze_sorter=not args.fine_tune, n_classes=args.classes)
    out = _out_dir(args)
    rows, files = [], []
    config = {"task": task, "sorter": args.sorter, "loss": asdict(loss_cfg), "toy": asdict(toy_cfg)}
    curves = []
    for objective in objectives:
        _, rep = train_downstream(task, sorter, loss_cfg, toy_cfg, objective=objective)
        for k, values in rep.extra.items():
            rows.append((f"{objective} {k}", values[-1]))
        curves += [(objective, e, tr, *[rep.extra[k][e - 1] for k in sorted(rep.extra)]) for e, tr in enumerate(rep.train_loss, 1)]
        metric_names = sorted(rep.extra)
    path = write_csv(out / f"{task}_s{args.seed}.csv", ["objective", "epoch", "train_loss", *metric_names], curves, config)
    files.append(str(path))
    return ExperimentResult(task, config, rows, files, args.seed)


def cmd_toy_map(args) -> ExperimentResult:
    return _toy(args, "map_toy", ("rank", "bce"))


def cmd_toy_spearman(args) -> ExperimentResult:
    return _toy(args, "spearman_toy", ("rank",))


def cmd_toy_retrieval(args) -> ExperimentResult:
    return _toy(args, "retrieval_toy", ("rank",))


# parser


def _add_common(p, d_default: int | None = 20):
    p.add_argument("--d", type=int, default=d_default, help="scores per vector")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=None, help="defaults to $DIFFRANK_OUT or ./runs")


def _add_training(p):
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--pairs-per-epoch", type=int, default=10_000)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--heldout-size", type=int, default=10_000)
    p.add_argument("--distribution", default="mixture", choices=["uniform", "normal", "evenly_spaced", "mixture"])
    p.add_argument("--paper-scale", action="store_true", help="1000 epochs of 100k pairs; hours to days")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True)


def _add_toy(p):
    _add_common(p)
    p.add_argument("--sorter", default="handcrafted", help="checkpoint path or 'handcrafted'")
    p.add_argument("--lam", type=float, default=10.0, help="handcrafted sharpness")
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--aux-weight", type=float, default=0.0)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--fine-tune", action="store_true", help="update the sorter too")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diffrank", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-sorter", help="train a CNN or LSTM sorter")
    _add_common(p)
    _add_training(p)
    p.add_argument("--kind", choices=["cnn", "lstm"], required=True)
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--hidden-size", type=int, default=256)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--name", default=None, help="output file stem")
    p.set_defaults(func=cmd_train_sorter)

    p = sub.add_parser("eval-sorter", help="held-out L1 table, best first")
    _add_common(p, d_default=None)
    p.add_argument("--checkpoint", action="append", default=[])
    p.add_argument("--lam", type=float, action="append", default=None)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--distribution", default="mixture", choices=["uniform", "normal", "evenly_spaced", "mixture"])
    p.add_argument("--csv", default=None, help="also write the table here")
    p.set_defaults(func=cmd_eval_sorter)

    p = sub.add_parser("depth-sweep", help="CNN loss curves for several depths")
    _add_common(p)
    _add_training(p)
    p.add_argument("--depths", type=int, nargs="+", default=list(range(2, 11)))
    # standardising hands even shallow nets the global scale, hiding the effect of depth
    p.set_defaults(standardize=False)
    p.add_argument("--csv", default="depth_sweep.csv")
    p.set_defaults(func=cmd_depth_sweep)

    p = sub.add_parser("continuity-probe", help="sweep one input of a trained sorter")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", type=int, default=1)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--csv", default="continuity.csv")
    p.set_defaults(func=cmd_continuity_probe)

    for name, fn, text in [
        ("toy-map", cmd_toy_map, "mAP toy: rank loss against cross-entropy"),
        ("toy-spearman", cmd_toy_spearman, "Spearman toy"),
        ("toy-retrieval", cmd_toy_retrieval, "cross-modal retrieval toy"),
    ]:
        p = sub.add_parser(name, help=text)
        _add_toy(p)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "lam", None) is None and args.command == "eval-sorter":
        args.lam = [10.0]
    try:
        result = args.func(args)
    except UsageError as exc:
        print(f"diffrank: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, ValueError, FloatingPointError, RuntimeError, OSError) as exc:
        print(f"diffrank: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(result.table())
    for f in result.files:
        print(f"wrote {f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
