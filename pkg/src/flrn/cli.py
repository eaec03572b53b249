"""Command-line interface: ``flrn generate | fit | predict | sweep | bench | rates | study | replay``.

Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 numeric failure.
Every command writes a JSON manifest (after its other outputs) that records
the fully resolved argument list; ``flrn replay <manifest>`` reruns it.
Seeds never come from the clock; an omitted ``--seed`` means DEFAULT_SEED.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from flrn import __version__
from flrn.errors import InvalidArgument, NumericError
from flrn.estimator import (
    RidgeConfig,
    fit_full,
    fit_nystrom,
    predict_many,
    read_model_csv,
    write_model_csv,
)
from flrn.evaluation import (
    SweepSpec,
    run_bench,
    run_full_study,
    run_sweep,
    write_bench_csv,
    write_heatmap_svg,
    write_study_csv,
    write_sweep_csv,
)
from flrn.funcspace import FLOAT_FMT, read_dataset_csv, write_dataset_csv
from flrn.kernels import KernelSpec
from flrn.synth import SynthConfig, beta_star, make_experiment, noiseless_responses
from flrn.theory import TheoryParams, lambda_rule, min_subsample, predicted_rates

DEFAULT_SEED = 20240101

EXIT_IO, EXIT_USAGE, EXIT_NUMERIC = 1, 2, 3

log = logging.getLogger("flrn")


class UsageError(Exception):
    pass


def positive_float(text: str) -> float:
    v = float(text)
    if not (np.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return v


def nonneg_float(text: str) -> float:
    v = float(text)
    if not (np.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"must be a nonnegative number, got {text}")
    return v


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def seed_int(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return v


def size_list(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not sizes or min(sizes) < 1 or sizes != sorted(sizes):
        raise argparse.ArgumentTypeError("sizes must be positive and ascending")
    return sizes


def kernel_arg(text: str) -> KernelSpec:
    try:
        return KernelSpec.parse(text)
    except InvalidArgument as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# ----------------------------------------------------------------- commands


def cmd_generate(args) -> dict:
    try:
        cfg = SynthConfig(
            n_total=args.n_total, n_train=args.n_train, n_modes=args.n_modes,
            sigma2=args.sigma2, grid_size=args.grid_size, seed=args.seed,
        )
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    train, test = make_experiment(cfg)
    paths = [outdir / "train.csv", outdir / "test.csv"]
    write_dataset_csv(train, paths[0])
    write_dataset_csv(test, paths[1])
    beta = beta_star(train.grid)
    resid = np.concatenate([
        train.y - noiseless_responses(train.X, beta),
        test.y - noiseless_responses(test.X, beta),
    ])
    x_seed, eps_seed = cfg.streams()
    return {
        "files": [str(p) for p in paths],
        "manifest": outdir / "manifest.json",
        "seeds": {"master": cfg.seed, "predictors": x_seed, "noise": eps_seed},
        "config": asdict(cfg),
        "diagnostics": {
            "n_train": len(train),
            "n_test": len(test),
            "empirical_noise_variance": float(np.var(resid, ddof=1)) if resid.size > 1 else 0.0,
        },
    }


def cmd_fit(args) -> dict:
    train = read_dataset_csv(args.train)
    cfg = RidgeConfig(args.lam, jitter=args.jitter)
    if args.method == "nystrom":
        if args.m is None:
            raise UsageError("--method nystrom requires --m")
        if args.m > len(train):
            raise UsageError(f"--m {args.m} exceeds the {len(train)} training curves")
        model = fit_nystrom(train, args.kernel, cfg, args.m, args.seed)
    else:
        model = fit_full(train, args.kernel, cfg)
    write_model_csv(model, args.out)
    return {
        "files": [args.out],
        "seeds": {"subsample": args.seed} if args.method == "nystrom" else {},
        "diagnostics": {"m": model.m, "n_train": len(train), "jitter_added": model.jitter_added},
    }


def cmd_predict(args) -> dict:
    train = read_dataset_csv(args.train)
    data = read_dataset_csv(args.data)
    model = read_model_csv(args.model, train)
    preds = predict_many(model, data)
    with Path(args.out).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "prediction"])
        for i, p in enumerate(preds):
            w.writerow([i, FLOAT_FMT.format(p)])
    return {"files": [args.out], "diagnostics": {"rows": int(preds.size)}}


def cmd_sweep(args) -> dict:
    train = read_dataset_csv(args.train)
    test = read_dataset_csv(args.test)
    try:
        spec = SweepSpec(
            lambda_min=args.lambda_min, lambda_max=args.lambda_max,
            lambda_points=args.lambda_points, m_min=args.m_min, m_max=args.m_max,
            m_points=args.m_points, reps=args.reps, base_seed=args.seed,
        )
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None
    if spec.m_max > len(train):
        raise UsageError(f"--m-max {spec.m_max} exceeds the {len(train)} training curves")
    result = run_sweep(
        train, test, args.kernel, spec, noisy_targets=args.noisy_targets,
        jitter=args.jitter, threads=args.threads,
    )
    write_sweep_csv(result, args.out)
    files = [args.out]
    if args.svg:
        write_heatmap_svg(result, args.svg)
        files.append(args.svg)
    best = result.best()
    return {
        "files": files,
        "seeds": {"base": args.seed},
        "diagnostics": {
            "cells": len(result.rows),
            "failed_fits": result.failures,
            "best": {"m": best.m, "lambda": best.lam, "mean_rmse": best.mean_rmse},
        },
    }


def cmd_bench(args) -> dict:
    if args.m > args.sizes[0]:
        raise UsageError("--m must not exceed the smallest size")
    result = run_bench(
        args.sizes, args.m, args.reps, args.kernel, lam=args.lam,
        grid_size=args.grid_size, seed=args.seed, threads=args.threads,
        full_max_n=args.full_max_n,
    )
    write_bench_csv(result, args.out)
    ratios = {meth: result.doubling_ratios(meth) for meth in ("full", "nystrom")}
    return {"files": [args.out], "seeds": {"data": args.seed}, "diagnostics": {"doubling_ratios": ratios}}


def cmd_rates(args) -> dict:
    try:
        p = TheoryParams(args.b, args.s)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None
    lam = lambda_rule(args.n, p)
    m = min_subsample(lam, p, args.n)
    pred, est = predicted_rates(args.n, p)
    header = ["n", "b", "s", "lambda", "min_m", "pred_rate", "est_rate"]
    row = [str(args.n), FLOAT_FMT.format(args.b), FLOAT_FMT.format(args.s),
           FLOAT_FMT.format(lam), str(m), FLOAT_FMT.format(pred), FLOAT_FMT.format(est)]
    text = ",".join(header) + "\n" + ",".join(row) + "\n"
    sys.stdout.write(text)
    files = []
    if args.out:
        Path(args.out).write_text(text)
        files.append(args.out)
    return {"files": files, "manifest": Path(args.out + ".manifest.json") if args.out else None}


def cmd_study(args) -> dict:
    try:
        cfg = SynthConfig(
            n_total=args.n_train + args.n_test, n_train=args.n_train, n_modes=args.n_modes,
            sigma2=args.sigma2, grid_size=args.grid_size,
        )
        lams = np.geomspace(args.lambda_min, args.lambda_max, args.lambda_points)
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from None
    rows = run_full_study(cfg, args.kernel, lams, args.reps, args.seed)
    write_study_csv(rows, args.out)
    best = min((r for r in rows if np.isfinite(r.mean_rmse)), key=lambda r: r.mean_rmse)
    return {
        "files": [args.out],
        "seeds": {"base": args.seed},
        "diagnostics": {"best": {"lambda": best.lam, "mean_rmse": best.mean_rmse}},
    }


def cmd_replay(args) -> dict:
    manifest = json.loads(Path(args.manifest).read_text())
    code = main(manifest["argv"])
    if code:
        raise SystemExit(code)
    return {"skip_manifest": True}


# ------------------------------------------------------------------ parser


def _common_fit_args(p):
    p.add_argument("--kernel", type=kernel_arg, default=KernelSpec(),
                   help="sobolev-bernoulli (default) or gaussian:γ=<float>")
    p.add_argument("--jitter", choices=("off", "auto"), default="auto")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flrn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"flrn {__version__}")
    parser.add_argument("--config", help="flat key=value file supplying flag defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic train/test CSVs")
    p.add_argument("--outdir", default=".")
    p.add_argument("--n-total", type=positive_int, default=650)
    p.add_argument("--n-train", type=positive_int, default=550)
    p.add_argument("--n-modes", type=positive_int, default=500)
    p.add_argument("--sigma2", type=nonneg_float, default=0.5)
    p.add_argument("--grid-size", type=positive_int, default=256)
    p.add_argument("--seed", type=seed_int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="fit a full or Nystrom model")
    p.add_argument("--train", required=True)
    p.add_argument("--method", choices=("full", "nystrom"), default="full")
    p.add_argument("--lambda", dest="lam", type=positive_float, required=True)
    p.add_argument("--m", type=positive_int)
    p.add_argument("--seed", type=seed_int, default=DEFAULT_SEED)
    p.add_argument("--out", default="model.csv")
    _common_fit_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict responses for a dataset file")
    p.add_argument("--train", required=True, help="dataset the model was fitted on")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="predictions.csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="mean RMSE over an (m, lambda) grid")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--lambda-min", type=positive_float, default=1e-7)
    p.add_argument("--lambda-max", type=positive_float, default=1e-4)
    p.add_argument("--lambda-points", type=positive_int, default=25)
    p.add_argument("--m-min", type=positive_int, default=10)
    p.add_argument("--m-max", type=positive_int, default=240)
    p.add_argument("--m-points", type=positive_int, default=25)
    p.add_argument("--reps", type=positive_int, default=100)
    p.add_argument("--seed", type=seed_int, default=DEFAULT_SEED)
    p.add_argument("--noisy-targets", action="store_true",
                   help="score against stored responses instead of <beta*, X>")
    p.add_argument("--threads", type=positive_int, default=1)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--svg")
    _common_fit_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="time full vs Nystrom fits")
    p.add_argument("--sizes", type=size_list, default=[500, 1000, 2000, 4000])
    p.add_argument("--m", type=positive_int, default=100)
    p.add_argument("--reps", type=positive_int, default=5)
    p.add_argument("--lambda", dest="lam", type=positive_float, default=1e-6)
    p.add_argument("--grid-size", type=positive_int, default=256)
    p.add_argument("--seed", type=seed_int, default=DEFAULT_SEED)
    p.add_argument("--threads", type=positive_int, default=1)
    p.add_argument("--full-max-n", type=positive_int)
    p.add_argument("--out", default="bench.csv")
    p.add_argument("--kernel", type=kernel_arg, default=KernelSpec())
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rates", help="theory rules for lambda, m and rates")
    p.add_argument("--n", type=positive_int, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("study", help="full-solver RMSE per lambda over fresh datasets")
    p.add_argument("--n-train", type=positive_int, default=550)
    p.add_argument("--n-test", type=positive_int, default=100)
    p.add_argument("--n-modes", type=positive_int, default=500)
    p.add_argument("--sigma2", type=nonneg_float, default=0.5)
    p.add_argument("--grid-size", type=positive_int, default=256)
    p.add_argument("--lambda-min", type=positive_float, default=1e-7)
    p.add_argument("--lambda-max", type=positive_float, default=1e-4)
    p.add_argument("--lambda-points", type=positive_int, default=25)
    p.add_argument("--reps", type=positive_int, default=100)
    p.add_argument("--seed", type=seed_int, default=DEFAULT_SEED)
    p.add_argument("--out", default="study.csv")
    p.add_argument("--kernel", type=kernel_arg, default=KernelSpec())
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _subparser(parser, name):
    return parser._subparsers._group_actions[0].choices[name]


def _apply_config(parser, argv) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    sub = parser._subparsers._group_actions[0]
    command = next((a for a in argv if a in sub.choices), None)
    if known.config and command:
        sp = sub.choices[command]
        dests = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, value in read_config(known.config).items():
            key = "lam" if key == "lambda" else key
            if key not in dests or key == "help":
                raise UsageError(f"unknown config key {key!r} for {command}")
            action = dests[key]
            if action.nargs == 0:
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = value  # argparse applies ``type`` to string defaults
            action.required = False
        sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def resolved_argv(parser, args) -> list[str]:
    """Flag list that reproduces ``args`` without any config file."""
    sp = _subparser(parser, args.command)
    argv = [args.command]
    for action in sp._actions:
        if action.dest == "help":
            continue
        value = getattr(args, action.dest, None)
        if not action.option_strings:
            argv.append(str(value))
        elif action.nargs == 0:
            if value:
                argv.append(action.option_strings[-1])
        elif value is not None:
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            argv += [action.option_strings[-1], str(value)]
    return argv


def _write_manifest(path: Path, record: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, sort_keys=True, default=str) + "\n")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"flrn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        info = args.func(args)
    except UsageError as exc:
        print(f"flrn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidArgument as exc:
        print(f"flrn {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"flrn {args.command}: numeric failure: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(json.dumps(exc.diagnostics, sort_keys=True), file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"flrn {args.command}: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SystemExit as exc:
        return int(exc.code or 0)
    if info.get("skip_manifest"):
        return 0
    manifest = info.pop("manifest", None)
    if manifest is None and info["files"]:
        manifest = Path(str(info["files"][0]) + ".manifest.json")
    if manifest is not None:
        record = {
            "command": args.command,
            "argv": resolved_argv(parser, args),
            "args": {k: v for k, v in vars(args).items() if k != "func"},
            "version": __version__,
            "wall_time_seconds": time.perf_counter() - start,
            **info,
        }
        try:
            _write_manifest(Path(manifest), record)
        except OSError as exc:
            print(f"flrn {args.command}: i/o error: {exc}", file=sys.stderr)
            return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
