"""Command-line surface.

Subcommands: ``sample`` (prior simulation to CSV/Newick), ``fit`` (run one
chain, emit a run-summary JSON), ``eval`` (held-out density protocol),
``purity`` (dendrogram purity of a finished run against labels), ``geweke``
(sampler self-check).  ``DFP_SEED`` in the environment provides the default
seed when ``--seed`` is not given.  Exit codes: 0 success, 1 runtime error,
2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict

import numpy as np

from .diffusion import DiffusionParams, generate_dataset
from .evaluate import RunConfig, eval_protocol, fit_points
from .fragmentation import DivergenceSchedule
from .inference import Hyperpriors, ModelConfig
from .io import (
    export_newick,
    export_run_json,
    load_csv,
    load_run_json,
    save_points_csv,
)
from .metrics import dendrogram_purity
from .validation import geweke_test


def _resolve_seed(seed):
    if seed is not None:
        return seed
    env = os.environ.get("DFP_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValueError(f"DFP_SEED must be an integer, got {env!r}") from None


def _label_col(value: str):
    try:
        return int(value)
    except ValueError:
        return value


def _write_text(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _add_chain_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depth", type=int, required=True, help="tree depth L")
    p.add_argument("--sweeps", type=int, default=2000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--c", type=float, default=1.0, help="initial divergence scale")
    p.add_argument("--tau", type=float, default=1.0, help="initial precision")
    p.add_argument("--fixed-c", action="store_true", help="do not sample c")
    p.add_argument("--fixed-tau", action="store_true", help="do not sample tau")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)


def _run_config(args, holdout: float = 0.0) -> RunConfig:
    return RunConfig(
        depth=args.depth,
        sweeps=args.sweeps,
        burn_in=args.burn_in,
        thin=args.thin,
        seed=_resolve_seed(args.seed),
        holdout_fraction=holdout,
        horizon=args.horizon,
        c=args.c,
        tau=args.tau,
        sample_c=not args.fixed_c,
        sample_tau=not args.fixed_tau,
    )


def _cmd_sample(args) -> int:
    seed = _resolve_seed(args.seed)
    rng = np.random.default_rng(seed)
    schedule = DivergenceSchedule(c=args.c, depth=args.depth, horizon=args.horizon)
    params = DiffusionParams(tau=args.tau, dims=args.dims)
    gen = generate_dataset(args.n, schedule, params, rng)
    if args.out_points is None and args.out_tree is None:
        save_points_csv(sys.stdout, gen.points)
        return 0
    if args.out_points is not None:
        save_points_csv(args.out_points, gen.points)
    if args.out_tree is not None:
        _write_text(args.out_tree, export_newick(gen.tree, gen.phis) + "\n")
    print(
        f"sampled {args.n} points in {args.dims}-d, depth {args.depth}, "
        f"{len(gen.tree.leaf_ids())} leaves, seed {seed}"
    )
    return 0


def _cmd_fit(args) -> int:
    dataset = load_csv(args.data, label_column=args.label_col)
    config = _run_config(args)
    result = fit_points(dataset.points, config)
    doc = export_run_json(
        result.trace,
        asdict(config),
        result.final.tree,
        result.final.assignments,
        config.seed,
        annotations=result.final.phis,
    )
    _write_text(args.out, doc)
    if args.out_tree is not None:
        _write_text(args.out_tree, export_newick(result.final.tree, result.final.phis) + "\n")
    return 0


def _cmd_eval(args) -> int:
    dataset = load_csv(args.data, label_column=args.label_col)
    config = _run_config(args, holdout=args.holdout)
    report = eval_protocol(dataset.points, config, n_chains=args.chains)
    print(report)
    return 0


def _cmd_purity(args) -> int:
    with open(args.run, encoding="utf-8") as fh:
        summary = load_run_json(fh.read())
    dataset = load_csv(args.data, label_column=args.label_col)
    if dataset.labels is None:
        raise ValueError("purity needs a labelled dataset (pass --label-col)")
    if len(summary.assignments) != len(dataset.labels):
        raise ValueError(
            f"run has {len(summary.assignments)} assignments, "
            f"data has {len(dataset.labels)} rows"
        )
    value = dendrogram_purity(summary.tree, summary.assignments, dataset.labels)
    print(f"{value:.4f}")
    return 0


def _cmd_geweke(args) -> int:
    config = ModelConfig(
        depth=args.depth,
        dims=1,
        hyper=Hyperpriors(c_shape=2.0, c_rate=2.0, tau_shape=5.0, tau_rate=5.0),
    )
    result = geweke_test(
        config,
        n=args.n,
        n_forward=args.samples,
        n_chain=args.samples,
        rng=np.random.default_rng(_resolve_seed(args.seed)),
        tau_rate_scale=args.rate_scale,
    )
    print(result)
    if args.threshold is not None and result.max_abs_z > args.threshold:
        print(f"max |z| = {result.max_abs_z:.2f} exceeds {args.threshold}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dfpmix",
        description="Tree-structured Gaussian mixtures: simulate, fit, evaluate.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("sample", help="draw a dataset from the prior")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-points", default=None, help="points CSV (default: stdout)")
    p.add_argument("--out-tree", default=None, help="Newick file")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("fit", help="fit one chain and write a run summary")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", type=_label_col, default=None)
    _add_chain_flags(p)
    p.add_argument("--out", default="-", help="run JSON (default: stdout)")
    p.add_argument("--out-tree", default=None, help="final tree as Newick")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="held-out predictive likelihood protocol")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", type=_label_col, default=None)
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--chains", type=int, default=1)
    _add_chain_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("purity", help="dendrogram purity of a finished run")
    p.add_argument("--run", required=True, help="run JSON from `fit`")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", type=_label_col, required=True)
    p.set_defaults(func=_cmd_purity)

    p = sub.add_parser("geweke", help="joint-distribution sampler self-check")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--rate-scale", type=float, default=1.0)
    p.add_argument("--threshold", type=float, default=None, help="fail if max |z| exceeds this")
    p.set_defaults(func=_cmd_geweke)

    return parser


def cli(argv=None) -> int:
    """Run one command; always returns an exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse has already printed usage
        return int(exc.code or 0)
    try:
        return int(args.func(args) or 0)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return cli(argv)


if __name__ == "__main__":
    sys.exit(main())
