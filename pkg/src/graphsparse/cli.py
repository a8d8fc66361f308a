"""Command-line entry point.

Exit codes: 0 success, 1 domain error (data, shape, rank, divergence...),
2 usage error.  ``GSNET_SEED`` in the environment overrides ``--seed``.
Every command prints its resolved configuration as JSON before running.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import analysis, bench
from .baseline import DenseGCN, DenseGCNConfig, historical_average
from .checkpoint import load_model
from .data import interpolate_missing, read_adjacency, read_series, synth_traffic, \
    window_and_split, write_series
from .errors import GraphSparseError
from .model import GSNet, GSNetConfig
from .trainer import TrainConfig, compute_metrics, evaluate, train

SERIES_FILE = "series.csv"
CHECKPOINT_FILE = "checkpoint.bin"


def _ratios(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratios {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("ratios need three comma-separated values")
    return vals


def _int_list(text):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def _window_flags(p):
    p.add_argument("--S", type=int, default=12, help="input steps")
    p.add_argument("--T", type=int, default=12, help="forecast steps")
    p.add_argument("--ratios", type=_ratios, default=(0.7, 0.1, 0.2))


def build_parser():
    parser = argparse.ArgumentParser(prog="graphsparse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--seed", type=int, default=0)
        return p

    p = command("gen-data", "write a synthetic series with its planted adjacency")
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("--steps", type=int, default=2016)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--rate", type=int, default=5, help="minutes per step")

    p = command("train", "train a model on a series directory")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", choices=sorted(bench.MODELS), default="gsnet")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--no-timing", action="store_true", help="write 0 seconds in the log")
    p.add_argument("--d", type=int, default=32, help="embedding channels (C = C' = d unless set)")
    p.add_argument("--C", type=int, default=None)
    p.add_argument("--C-prime", type=int, default=None)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--embed-std", type=float, default=0.5, help="dense_gcn E1/E2 init scale")
    _window_flags(p)

    p = command("eval", "test-split metrics of a checkpoint and the historical average")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, default=None,
                   help=f"defaults to <out>/{CHECKPOINT_FILE}")
    _window_flags(p)

    p = command("verify-gradients", "softmax vs linear-normalization adjacency partials")
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--max-nodes", type=int, default=32)
    p.add_argument("--max-rank", type=int, default=4)

    p = command("verify-theorem", "rank-C factorization and its non-uniqueness")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--trials", type=int, default=100)

    p = command("sparsity", "weighted-degree statistics of an adjacency")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", type=Path, help="dense_gcn checkpoint")
    src.add_argument("--adjacency", type=Path, help=".adj file")
    p.add_argument("--tau", type=float, default=None, help="defaults to 1/N")

    p = command("bench", "node-count scaling sweep")
    p.add_argument("--models", default="gsnet,dense_gcn")
    p.add_argument("--ns", type=_int_list, default=[256, 512, 1024, 2048])
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--steps", type=int, default=3)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--flops-only", action="store_true", help="skip wall-clock timing")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (needs --flops-only)")
    return parser


def _dump(obj, path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_series(directory):
    return interpolate_missing(read_series(Path(directory) / SERIES_FILE))


def cmd_gen_data(a):
    series = synth_traffic(a.nodes, a.steps, a.seed, a.density, a.rate)
    write_series(series, a.out / SERIES_FILE)
    print(f"wrote {a.out / SERIES_FILE} and {a.out / 'series.adj'}")


def cmd_train(a):
    series = _load_series(a.data)
    tr, va, _ = window_and_split(series, a.S, a.T, a.ratios)
    N = series.node_count
    if a.model == GSNet.tag:
        model = GSNet(GSNetConfig(N=N, S=a.S, T=a.T, d=a.d, C=a.C, C_prime=a.C_prime,
                                  L=a.layers, hidden=a.hidden, seed=a.seed))
    else:
        model = DenseGCN(DenseGCNConfig(N=N, S=a.S, T=a.T, d=a.d, C=a.C, L=a.layers,
                                        hidden=a.hidden, embed_std=a.embed_std, seed=a.seed))
    cfg = TrainConfig(lr=a.lr, batch_size=a.batch_size, max_epochs=a.epochs,
                      patience=a.patience, seed=a.seed, clip_norm=a.clip_norm,
                      timing=not a.no_timing)
    result = train(model, tr, va, cfg, log_path=a.out / "train_log.csv",
                   checkpoint_path=a.out / CHECKPOINT_FILE)
    print(f"best epoch {result.best_epoch}, val MAE {result.best_val_mae:.4f}")


def cmd_eval(a):
    series = _load_series(a.data)
    _, _, te = window_and_split(series, a.S, a.T, a.ratios)
    model = load_model(a.checkpoint or a.out / CHECKPOINT_FILE)
    ha = compute_metrics(historical_average(te.raw_inputs, a.T), te.targets)
    payload = {"model": model.tag, "windows": len(te), "test": evaluate(model, te).to_dict(),
               "historical_average": ha.to_dict()}
    _dump(payload, a.out / "metrics.json")
    print(json.dumps(payload, indent=2))


def cmd_verify_gradients(a):
    rep = analysis.gradient_study(a.draws, a.max_nodes, a.max_rank, a.seed)
    rep["softmax_bound_holds"] = rep["violations"] == 0 and rep["bound_max"] <= 0.25 + 1e-12
    rep["linear_anomaly_found"] = rep["linear_max"] > 1e3
    _dump(rep, a.out / "gradients.json")
    print(json.dumps(rep, indent=2))
    return 0 if rep["softmax_bound_holds"] else 1


def cmd_verify_theorem(a):
    rep = analysis.theorem_study(a.n, a.rank, a.trials, a.seed)
    rep["passed"] = rep["max_residual"] < 1e-8 and rep["max_conjugate_residual"] < 1e-8
    _dump(rep, a.out / "theorem.json")
    print(json.dumps(rep, indent=2))
    return 0 if rep["passed"] else 1


def cmd_sparsity(a):
    if a.checkpoint is not None:
        model = load_model(a.checkpoint, expected_tag=DenseGCN.tag)
        A = model.adjacency()
    else:
        A = read_adjacency(a.adjacency)
    rep = analysis.sparsity_report(A, a.tau).to_dict()
    _dump(rep, a.out / "sparsity.json")
    print(json.dumps(rep, indent=2))


def cmd_bench(a):
    models = [m for m in a.models.split(",") if m]
    unknown = set(models) - set(bench.MODELS)
    if unknown:
        raise SystemExit(f"unknown models {sorted(unknown)}")
    records = bench.sweep(models, a.ns, d=a.d, L=a.layers, batch_size=a.batch_size,
                          steps=a.steps, repetitions=a.repetitions, seed=a.seed,
                          timing=not a.flops_only, jobs=a.jobs)
    bench.write_csv(records, a.out / "scaling.csv")
    bench.write_summary(records, a.out / "scaling.json")
    print(json.dumps(bench.summarize(records), indent=2))


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
    "verify-gradients": cmd_verify_gradients, "verify-theorem": cmd_verify_theorem,
    "sparsity": cmd_sparsity, "bench": cmd_bench,
}


def resolved_config(args):
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if "GSNET_SEED" in os.environ:
        try:
            args.seed = int(os.environ["GSNET_SEED"])
        except ValueError:
            print("GSNET_SEED must be an integer", file=sys.stderr)
            return 2
    print(json.dumps(resolved_config(args), sort_keys=True))
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](args)
    except GraphSparseError as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1
    except (SystemExit, ValueError) as exc:
        # invalid flag values that argparse cannot see
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2
    return code or 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
