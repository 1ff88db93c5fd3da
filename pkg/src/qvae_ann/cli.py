"""Command-line entry point: ``qvae-ann <subcommand> [flags]``.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines naming
any of its flags; values given on the command line win. The effective
configuration is logged to stderr before work starts. Exit status is 0 on
success, 1 on runtime or I/O failure and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .data import generate_synthetic, load_csv, load_dataset, save_dataset
from .errors import ContractViolation
from .index import QueryConfig, build_index, linear_search, load_index, query, save_index
from .model import PRIOR_KINDS, QvaeConfig, hash_codes, load_model, save_model, train

log = logging.getLogger("qvae_ann")


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _read_data(path):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return load_csv(path)
    return load_dataset(path)


def _add_model_flags(p):
    p.add_argument("--d-latent", type=int, default=64)
    p.add_argument("--hidden", type=_ints, default="128,64")
    p.add_argument("--decoder-hidden", type=int, default=128)
    p.add_argument("--alpha", type=float, default=7.0)
    p.add_argument("--prior", choices=PRIOR_KINDS[:2], default="rbm")
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--l2", type=float, default=1e-3)
    p.add_argument("--kl-warmup-epochs", type=int, default=5)
    p.add_argument("--cd-chains", type=int, default=64)
    p.add_argument("--cd-steps", type=int, default=5)
    p.add_argument("--trotter-slices", type=int, default=64)


def _model_config(args, d_data):
    return QvaeConfig(
        d_data=d_data, d_latent=args.d_latent, hidden=tuple(args.hidden),
        decoder_hidden=args.decoder_hidden, alpha=args.alpha, prior=args.prior,
        gamma=args.gamma, beta=args.beta, lr=args.lr, batch_size=args.batch_size,
        epochs=args.epochs, l2=args.l2, kl_warmup_epochs=args.kl_warmup_epochs,
        cd_chains=args.cd_chains, cd_steps=args.cd_steps,
        trotter_slices=args.trotter_slices, seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qvae-ann",
        description="Learned binary hashing with a Boltzmann-prior VAE and Hamming-ordered search.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="file of key=value lines supplying any flag")
        p.add_argument("--seed", type=int, default=0)
        return p

    p = add("gen-data", "Generate a clustered synthetic dataset.")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--spread", type=float, default=0.1)
    p.add_argument("--out", required=True, help="output .qvds file")

    p = add("train", "Train a model on a dataset (.qvds or headerless .csv).")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output .qvae file")
    _add_model_flags(p)

    p = add("build-index", "Hash every row and write the inverted index.")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output .qvix file")

    p = add("query", "Approximate k-NN for one vector; prints ids and distances.")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--cmax", type=int, default=1000)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--vector-row", type=int, help="use this dataset row as the query")
    g.add_argument("--vector", type=_floats, help="comma-separated query vector")

    p = add("bench", "Recall and latency speedup against linear search at one budget.")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=100)
    b = p.add_mutually_exclusive_group()
    b.add_argument("--cmax", type=int)
    b.add_argument("--cmax-frac", type=float)
    p.add_argument("--n-queries", type=int, default=100)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", help="optional CSV of per-query results")

    p = add("sweep-recall", "Recall and speedup over a grid of budget fractions.")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--index")
    p.add_argument("--budgets", type=_floats, default=None,
                   help="comma-separated c_max/n fractions (default: doubling grid)")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--n-queries", type=int, default=100)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True, help="output CSV")

    p = add("sweep-transverse", "Train simulated-QBM models over transverse fields.")
    p.add_argument("--data", required=True)
    p.add_argument("--gammas", type=_floats, default="0,0.4,0.8,2,4")
    p.add_argument("--seeds", type=_ints, default="0")
    p.add_argument("--target", type=float, default=0.8, help="recall target")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--n-queries", type=int, default=50)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True, help="output CSV")
    _add_model_flags(p)
    return parser


def _read_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ContractViolation(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _parse(argv):
    argv = sys.argv[1:] if argv is None else [str(a) for a in argv]
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    config_path = pre.parse_known_args(argv)[0].config
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    if config_path and command:
        values = _read_config_file(config_path)
        subparser = choices[command]
        known = {a.dest for a in subparser._actions}
        unknown = set(values) - known
        if unknown:
            parser.error(f"unknown keys in {config_path}: {', '.join(sorted(unknown))}")
        # flags supplied by the file no longer have to appear on the command line
        for action in subparser._actions:
            if action.dest in values:
                action.required = False
        for group in subparser._mutually_exclusive_groups:
            if any(a.dest in values for a in group._group_actions):
                group.required = False
        subparser.set_defaults(**values)
    return parser.parse_args(argv)


def _emit(obj):
    print(json.dumps(obj, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


def _cmd_gen_data(args):
    X, _ = generate_synthetic(args.n, args.d, args.clusters, args.spread, args.seed)
    save_dataset(args.out, X)
    _emit({"out": args.out, "n": args.n, "d": args.d})


def _cmd_train(args):
    X = _read_data(args.data)
    cfg = _model_config(args, X.shape[1])
    model = train(X, cfg, np.random.default_rng(args.seed))
    save_model(args.out, model)
    _emit({"out": args.out, "history": model.history[-1] if model.history else None})


def _cmd_build_index(args):
    X = _read_data(args.data)
    model = load_model(args.model)
    index = build_index(np.arange(len(X)), hash_codes(model, X), model.config.d_latent)
    save_index(args.out, index)
    _emit({"out": args.out, "n": index.n, "m": index.m})


def _cmd_query(args):
    X = _read_data(args.data)
    model = load_model(args.model)
    index = load_index(args.index)
    x = X[args.vector_row] if args.vector_row is not None else np.asarray(args.vector)
    res = query(index, X, model, x, QueryConfig(args.k, args.cmax))
    _emit({"ids": res.ids, "distances": res.distances, "comparisons": res.comparisons})


def _cmd_bench(args):
    X = _read_data(args.data)
    model = load_model(args.model)
    index = load_index(args.index)
    if args.cmax_frac is not None:
        c_max = max(args.k, int(round(args.cmax_frac * len(X))))
    else:
        c_max = args.cmax if args.cmax is not None else max(args.k, len(X) // 100)
    c_max = min(c_max, len(X))
    rng = np.random.default_rng(args.seed)
    qids = rng.choice(len(X), min(args.n_queries, len(X)), replace=False)
    res = bench.measure_speedup(X, index, model, qids, QueryConfig(args.k, c_max), args.repeats)
    if args.out:
        bench.write_csv(args.out, res)
    _emit({"c_max": c_max, "mean_recall": res.recalls.mean(),
           "median_recall": float(np.median(res.recalls)), "speedup": res.speedup()[0]})


def _cmd_sweep_recall(args):
    X = _read_data(args.data)
    model = load_model(args.model)
    index = load_index(args.index) if args.index else None
    budgets = args.budgets or bench.budget_grid(len(X), args.k)
    res = bench.run_recall_sweep(X, model, budgets, args.k, args.n_queries, args.seed,
                                 index=index, repeats=args.repeats)
    bench.write_csv(args.out, res)
    for row in res.summary():
        _emit(row)


def _cmd_sweep_transverse(args):
    X = _read_data(args.data)
    base = _model_config(args, X.shape[1])
    rows = bench.run_transverse_sweep(X, args.gammas, args.target, args.seeds, base,
                                      args.k, args.n_queries, args.repeats)
    bench.write_transverse_csv(args.out, rows)
    for r in rows:
        _emit(r.__dict__)


COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "build-index": _cmd_build_index,
    "query": _cmd_query,
    "bench": _cmd_bench,
    "sweep-recall": _cmd_sweep_recall,
    "sweep-transverse": _cmd_sweep_transverse,
}


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    except (ContractViolation, OSError) as exc:
        print(f"qvae-ann: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ContractViolation) else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    effective = {k: v for k, v in vars(args).items() if k != "verbose"}
    log.info("effective configuration: %s", json.dumps(effective, default=str))
    try:
        COMMANDS[args.command](args)
    except ContractViolation as exc:
        log.error("%s", exc)
        return 2
    except Exception as exc:  # noqa: BLE001 - exit status reports any runtime failure
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
