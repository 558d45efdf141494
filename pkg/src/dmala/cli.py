"""Command-line entry point: ``dmala run | validate | spectral | presets``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESETS, dump_ini, load_config, preset
from .diagnostics import task_metric
from .errors import DmalaError
from .experiments import build, build_graph, run, summarize
from .network import build_mixing_matrix
from .sampler import STREAMS
from .traceio import write_trace
from .validation import run_all

OUT_ENV = "DMALA_OUT_DIR"


def _parse_sweep(text):
    key, sep, values = text.partition("=")
    if not sep or key.strip() != "epsilon":
        raise argparse.ArgumentTypeError("sweep must look like epsilon=a,b,c")
    try:
        return [float(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _load(args):
    if args.config:
        return load_config(args.config)
    if args.preset:
        return preset(args.preset)
    raise DmalaError("need --config or --preset")


def _task_series(trace, problem):
    """Cumulative task metric aligned with iterations 1..T."""
    kind = problem.task_metric
    if kind == "none" or trace.T == 0:
        return None
    if kind == "mean_log_posterior":
        lp = trace.metrics.get("mean_log_posterior")
        if lp is None:
            return None
        return np.cumsum(lp) / np.arange(1, len(lp) + 1)
    shards = problem.full_shards
    series = task_metric(trace, shards, kind, problem.eval_data, burn_in=1).values
    # recorded rows sit at iterations thin, 2 thin, ...; hold each value until the next
    out = np.full(trace.T, np.nan)
    out[trace.sample_iters[1:] - 1] = series
    for t in range(1, trace.T):
        if np.isnan(out[t]):
            out[t] = out[t - 1]
    return out


def _out_dir(args, experiment):
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if experiment.output["dir"]:
        return Path(experiment.output["dir"])
    return Path("runs") / experiment.name


def _run_one(experiment, out, quiet=False):
    trace, problem = run(experiment)
    series = _task_series(trace, problem)
    if series is not None:
        trace.metrics["task_metric"] = np.nan_to_num(series, nan=0.0)
    summary = summarize(trace, problem, experiment.sampler["burn_in_fraction"]) if trace.T else {}
    if series is not None:
        summary["task_metric"] = {"kind": problem.task_metric, "final": float(series[-1])}
    manifest = {
        "name": experiment.name,
        "algo": experiment.algo,
        "seed": experiment.sampler["seed"],
        "streams": STREAMS,
        "package_version": __version__,
        "config": experiment.resolved,
        "summary": summary,
    }
    write_trace(trace, out, manifest)
    if not quiet:
        print(f"{experiment.name} [{experiment.algo}] -> {out}")
        for key in ("accept_rate", "final_consensus_error", "mean_log_posterior"):
            if summary.get(key) is not None:
                print(f"  {key}: {summary[key]:.6g}")
        if "task_metric" in summary:
            tm = summary["task_metric"]
            print(f"  task metric ({tm['kind']}, cumulative): {tm['final']:.6g}")
    return summary


def cmd_run(args):
    experiment = _load(args)
    overrides = {}
    if args.algo:
        overrides["algo"] = args.algo
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.T is not None:
        overrides["T"] = args.T
    if overrides:
        experiment = experiment.with_overrides(**overrides)
    out = _out_dir(args, experiment)
    if not args.sweep:
        _run_one(experiment, out)
        return 0
    for eps in args.sweep:
        key = "hmc_epsilon" if experiment.algo == "hmc" else (
            "ula_epsilon" if experiment.algo == "ula" else "epsilon")
        _run_one(experiment.with_overrides(**{key: eps}), out / f"epsilon_{eps:g}")
    return 0


def cmd_validate(args):
    problem = None
    if args.config or args.preset:
        problem = build(_load(args))
    failed = 0
    for name, ok, detail in run_all(problem):
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    print(f"{failed} check(s) failed" if failed else "all checks passed")
    return 1 if failed else 0


def cmd_spectral(args):
    experiment = _load(args)
    graph = build_graph(experiment.network)
    w = build_mixing_matrix(graph, experiment.network["scheme"])
    eig = np.sort(np.linalg.eigvalsh(w.weights))[::-1]
    if args.json:
        print(json.dumps({"m": w.m, "scheme": experiment.network["scheme"], "beta": w.beta,
                          "eigenvalues": eig.tolist()}))
        return 0
    print(f"agents: {w.m}  scheme: {experiment.network['scheme']}  edges: {len(graph.edges)}")
    print(f"beta (second-largest |eigenvalue|): {w.beta:.12g}")
    print("eigenvalues: " + " ".join(f"{v:.6g}" for v in eig))
    return 0


def cmd_presets(args):
    if args.name:
        print(dump_ini(preset(args.name)), end="")
        return 0
    for name in PRESETS:
        e = preset(name)
        print(f"{name:22s} {e.model['kind']:7s} m={e.network['m']} {e.network['topology']:8s} "
              f"eps={e.sampler['epsilon']:g} T={e.sampler['T']}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="dmala", description="Decentralized Metropolis-adjusted sampling")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def source(p, required=False):
        group = p.add_mutually_exclusive_group(required=required)
        group.add_argument("--config", help="INI config or a previous run.json")
        group.add_argument("--preset", choices=sorted(PRESETS))

    p = sub.add_parser("run", help="run a sampler and write CSV traces")
    source(p, required=True)
    p.add_argument("--algo", choices=("dmala", "hmc", "ula"))
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int, help="override the number of iterations")
    p.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else [output] dir)")
    p.add_argument("--sweep", type=_parse_sweep, metavar="epsilon=a,b,c")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="run the built-in oracle and invariant checks")
    source(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("spectral", help="print the mixing matrix spectrum")
    source(p, required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("presets", help="list presets or print one as INI")
    p.add_argument("name", nargs="?", choices=sorted(PRESETS))
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DmalaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
