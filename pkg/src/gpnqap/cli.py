"""``gpnqap`` command-line driver.

Subcommands: ``gen``, ``train``, ``solve``, ``bench``.  Exit codes: 0 on
success, 1 for usage errors, 2 for data errors (unreadable instances or
checkpoints), 3 for numeric failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .bench import (DEFAULT_METHODS, METHODS, ModelSet, decode_best, format_table,
                    instance_rng, list_instances, load_best_known, make_row, run_bench,
                    thread_count, write_csv)
from .checkpoint import load_checkpoint
from .dfp import zero_ratio
from .errors import CheckpointError, GpnError, NonFiniteValue, ParseError
from .instances import (GeneratorConfig, QapInstance, generate_qap, generate_tsp_matrix,
                        read_instance, write_qaplib, write_tsplib)
from .training import ModelBank, TrainConfig, train, train_bank

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
TASK_KIND = {"tsp": "matrix_tsp", "qap": "two_stage_qap"}

log = logging.getLogger("gpnqap")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gpnqap", description="Graph pointer networks for matrix TSP and QAP.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a random instance")
    g.add_argument("--task", choices=("tsp", "qap"), required=True)
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--zero-prob", type=float, default=0.0)
    g.add_argument("--out", required=True, help="output .tsp or .dat file")

    t = sub.add_parser("train", help="train a model with REINFORCE")
    t.add_argument("--task", choices=("tsp", "qap"), required=True)
    t.add_argument("--n", type=_positive_int, default=None,
                   help="training instance size (default 50 for tsp, 49 for qap)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--batch", type=_positive_int, default=150)
    t.add_argument("--steps", type=_positive_int, default=2500)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--lr-decay", type=float, default=0.96)
    t.add_argument("--baseline", choices=("ema", "self_critic"), default="ema")
    t.add_argument("--hidden", type=_positive_int, default=128)
    t.add_argument("--layers", type=_positive_int, default=3)
    t.add_argument("--lstm", action="store_true", help="tsp only: add the LSTM query arm")
    t.add_argument("--bank", action="store_true",
                   help="qap only: train dense and sparse models (checkpoint gets .dense/.sparse)")
    t.add_argument("--sparse-zero-prob", type=float, default=0.7)
    t.add_argument("--checkpoint", default=None, help="output checkpoint path")
    t.add_argument("--out-csv", default=None, help="training curve CSV path")

    s = sub.add_parser("solve", help="solve one instance file")
    s.add_argument("instance")
    s.add_argument("--checkpoint", default=None,
                   help="model checkpoint (an untrained model from --seed when omitted)")
    s.add_argument("--sparse-checkpoint", default=None,
                   help="sparse-regime QAP model; enables zero-ratio routing")
    s.add_argument("--sparse-threshold", type=float, default=0.5)
    s.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    s.add_argument("--samples", type=_positive_int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--best-known", type=float, default=None)
    s.add_argument("--out-csv", default=None)
    s.add_argument("--hidden", type=_positive_int, default=128)
    s.add_argument("--layers", type=_positive_int, default=3)

    b = sub.add_parser("bench", help="benchmark a directory of instances")
    b.add_argument("directory")
    b.add_argument("--methods", default=",".join(DEFAULT_METHODS),
                   help=f"comma-separated subset of {','.join(METHODS)}")
    b.add_argument("--best-known", default=None,
                   help="name,cost CSV (bundled table when omitted)")
    b.add_argument("--checkpoint", default=None, help="gpn model (tsp or qap)")
    b.add_argument("--lstm-checkpoint", default=None, help="gpn+lstm model")
    b.add_argument("--sparse-checkpoint", default=None)
    b.add_argument("--sparse-threshold", type=float, default=0.5)
    b.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    b.add_argument("--samples", type=_positive_int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out-csv", default=None)
    b.add_argument("--hidden", type=_positive_int, default=128)
    b.add_argument("--layers", type=_positive_int, default=3)
    return p


# ---------------------------------------------------------------------------

def train_config(args) -> TrainConfig:
    try:
        return TrainConfig(epochs=args.epochs, batch_size=args.batch, steps_per_epoch=args.steps,
                           lr=args.lr, lr_decay=args.lr_decay, train_n=args.n, seed=args.seed,
                           baseline=args.baseline, sparse_zero_prob=args.sparse_zero_prob,
                           hidden_dim=args.hidden, layers=args.layers, use_lstm=args.lstm)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_gen(args) -> int:
    cfg = GeneratorConfig(args.n, seed=args.seed, zero_prob=args.zero_prob)
    if args.task == "tsp":
        text = write_tsplib(generate_tsp_matrix(cfg))
    else:
        text = write_qaplib(generate_qap(cfg))
    Path(args.out).write_text(text)
    print(args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = train_config(args)
    if args.bank and args.task != "qap":
        raise UsageError("--bank applies to --task qap only")
    if args.lstm and args.task != "tsp":
        raise UsageError("--lstm applies to --task tsp only")
    kind = TASK_KIND[args.task]
    ckpt = Path(args.checkpoint or f"{args.task}_n{cfg.n_for(kind)}.gpnckpt")
    curve = Path(args.out_csv) if args.out_csv else ckpt.with_suffix(".curve.csv")

    def progress(row):
        if row["step"] % 50 == 0:
            log.info("step %d epoch %d mean cost %.6g", row["step"], row["epoch"], row["mean_cost"])

    if args.bank:
        paths = {tag: (ckpt.with_suffix(f".{tag}.gpnckpt"), curve.with_suffix(f".{tag}.csv"))
                 for tag in ("dense", "sparse")}
        train_bank(cfg, dense_paths=paths["dense"], sparse_paths=paths["sparse"])
        for c, k in paths.values():
            print(c)
            print(k)
    else:
        train(kind, cfg, checkpoint=ckpt, curve_csv=curve, progress=progress)
        print(ckpt)
        print(curve)
    return EXIT_OK


def _qap_model(args):
    if args.checkpoint is None:
        return None
    model = load_checkpoint(args.checkpoint)
    if args.sparse_checkpoint is None:
        return model
    return ModelBank(model, load_checkpoint(args.sparse_checkpoint), args.sparse_threshold)


def cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    if args.checkpoint is None:
        fresh = ModelSet.fresh(args.seed, args.hidden, args.layers)
        model = fresh.qap if isinstance(inst, QapInstance) else fresh.tsp
        log.warning("no checkpoint given; using an untrained model (seed %d)", args.seed)
    else:
        model = _qap_model(args)
        if isinstance(model, ModelBank):
            if not isinstance(inst, QapInstance):
                raise UsageError("--sparse-checkpoint applies to QAP instances only")
            model = model.route(inst)
    rng = instance_rng(args.seed, f"{inst.name}/solve")
    perm, cost, elapsed = decode_best(model, inst, args.mode, args.samples, rng)
    zr = 100.0 * zero_ratio(inst) if isinstance(inst, QapInstance) else None
    row = make_row(inst.name, inst.n, "gpn", cost, args.best_known, elapsed, zr)
    print(format_table([row]))
    print("solution: " + " ".join(str(int(x) + 1) for x in perm))
    if args.out_csv:
        write_csv([row], args.out_csv)
    return EXIT_OK


def cmd_bench(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise UsageError(f"unknown methods {unknown}; choose from {list(METHODS)}")
    threads = thread_count()
    fresh = ModelSet.fresh(args.seed, args.hidden, args.layers)
    models = ModelSet(fresh.tsp, fresh.tsp_lstm, fresh.qap)
    if args.checkpoint is not None:
        loaded = _qap_model(args)
        if getattr(loaded, "kind", None) == "matrix_tsp":
            models.tsp = loaded
        else:
            models.qap = loaded
            models.tsp = None
    if args.lstm_checkpoint is not None:
        models.tsp_lstm = load_checkpoint(args.lstm_checkpoint)
    best = load_best_known(args.best_known)
    rows = run_bench(list_instances(args.directory), methods, models, best, args.seed,
                     args.mode, args.samples, threads)
    if rows:
        print(format_table(rows))
    if args.out_csv:
        write_csv(rows, args.out_csv)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "solve": cmd_solve, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteValue as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, CheckpointError, OSError, GpnError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
