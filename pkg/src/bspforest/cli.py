"""Command-line interface.

Subcommands: train, predict, eval, friedman, sweep, pdp, dimuse.  Options
can come from a key=value config file (--config); explicit flags override
file values.  Every command that produces an output writes a manifest JSON
next to it recording the configuration, seed and a content hash of the
input data.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    DEFAULT_SWEEP_BUDGETS,
    EvalReport,
    budget_sweep,
    cv_evaluate,
    dimension_usage,
    partial_dependence,
    train,
)
from .data import Dataset, friedman_generate, ingest_csv
from .errors import BspForestError
from .forest import load as load_model
from .forest import save as save_model
from .gibbs import GibbsConfig, posterior_predict

CONFIG_KEYS = {
    "trees": int,
    "budget": float,
    "particles": int,
    "segments": int,
    "iters": int,
    "burnin": int,
    "seed": int,
    "mode": str,
    "rmae-variant": str,
    "label-col": str,
}


def read_config_file(path: str) -> dict:
    """Parse a key=value config file (# comments and blank lines allowed)."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BspForestError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise BspForestError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = CONFIG_KEYS[key](val.strip())
    return values


def add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--trees", "-m", type=int, default=None, help="number of trees (default 50)")
    p.add_argument("--budget", type=float, default=None, help="process time budget (default 0.7)")
    p.add_argument("--particles", type=int, default=None, help="C-SMC particles (default 10)")
    p.add_argument("--segments", type=int, default=None, help="C-SMC time segments (default 5)")
    p.add_argument("--iters", type=int, default=None, help="Gibbs iterations (default 1000)")
    p.add_argument("--burnin", type=int, default=None, help="burn-in iterations (default iters/2)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    p.add_argument("--mode", choices=["bsp", "axis"], default=None, help="cut geometry (default bsp)")
    p.add_argument("--sigma-est", choices=["variance", "linear"], default=None,
                   help="noise variance estimator for the prior scale")


def gibbs_config_from_args(args) -> GibbsConfig:
    file_vals = read_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(flag, key, default):
        v = getattr(args, flag, None)
        if v is not None:
            return v
        return file_vals.get(key, default)

    cfg = GibbsConfig(
        m=pick("trees", "trees", 50),
        budget=pick("budget", "budget", 0.7),
        n_particles=pick("particles", "particles", 10),
        n_segments=pick("segments", "segments", 5),
        iterations=pick("iters", "iters", 1000),
        burnin=pick("burnin", "burnin", None),
        seed=pick("seed", "seed", 0),
        mode=pick("mode", "mode", "bsp"),
    )
    if getattr(args, "sigma_est", None):
        cfg.sigma2_estimate = args.sigma_est
    cfg.validate()
    return cfg


def load_dataset(args) -> Dataset:
    label = getattr(args, "label_col", None)
    return ingest_csv(args.data, label_column=label)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def write_manifest(out_path: str, args, extra: dict):
    manifest = {
        "tool": f"bspforest {__version__}",
        "command": " ".join(sys.argv[1:]),
        **extra,
    }
    if getattr(args, "data", None):
        manifest["data_sha256"] = sha256_file(args.data)
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_friedman(args):
    dataset, f = friedman_generate(args.n, args.dims, args.noise, args.seed)
    header = dataset.feature_names + [dataset.label_name]
    rows = [list(x) + [yv] for x, yv in zip(dataset.X, dataset.y)]
    write_csv(args.out, header, rows)
    if args.truth_out:
        write_csv(args.truth_out, ["f"], [[v] for v in f])
    write_manifest(args.out, args, {"n": args.n, "dims": args.dims, "noise": args.noise, "seed": args.seed})
    print(f"wrote {dataset.n} rows x {dataset.d} features to {args.out}")


def cmd_train(args):
    dataset = load_dataset(args)
    cfg = gibbs_config_from_args(args)
    result = train(dataset, cfg)
    fmt = args.format
    blob = save_model(result.forest, fmt=fmt, samples=result.samples)
    Path(args.model_out).write_bytes(blob)
    if args.trace:
        Path(args.trace).write_text(result.trace_csv())
    if args.diagnostics:
        Path(args.diagnostics).write_text(json.dumps(result.diagnostics, indent=2) + "\n")
    write_manifest(args.model_out, args, {"config": dict(cfg.__dict__), "retained_samples": len(result.samples)})
    last = result.trace[-1] if result.trace else {}
    print(f"trained m={cfg.m} mode={cfg.mode}: {len(result.samples)} posterior samples -> {args.model_out}")
    if last:
        print(f"final sigma2={last['sigma2']:.4f} mean_cuts={last['mean_cuts']:.2f} train_rmae={last['train_rmae']:.4f}")


def cmd_predict(args):
    forest, samples = load_model(Path(args.model).read_bytes())
    dataset = load_dataset(args)
    if dataset.d != forest.d:
        raise BspForestError(f"model expects d={forest.d}, data has d={dataset.d}")
    if samples:
        mean, draws = posterior_predict(samples, dataset.X)
        lo = np.percentile(draws, 5, axis=0)
        hi = np.percentile(draws, 95, axis=0)
        rows = [[i, m, a, b] for i, (m, a, b) in enumerate(zip(mean, lo, hi))]
        write_csv(args.out, ["row", "prediction", "lo5", "hi95"], rows)
    else:
        mean = forest.predict_rows(dataset.X)
        write_csv(args.out, ["row", "prediction"], [[i, m] for i, m in enumerate(mean)])
    write_manifest(args.out, args, {"model": args.model, "rows": dataset.n})
    print(f"wrote {dataset.n} predictions to {args.out}")


def cmd_eval(args):
    dataset = load_dataset(args)
    cfg = gibbs_config_from_args(args)
    report = cv_evaluate(dataset, cfg, folds=args.folds, runs=args.runs, variant=args.rmae_variant)
    payload = {
        "rmae": report.rmae,
        "rmae_std": report.rmae_std,
        "per_run": report.per_run,
        "mean_cuts": report.mean_cuts,
        "runtime_seconds": report.runtime_seconds,
        "rmae_variant": args.rmae_variant,
        "config": report.config,
    }
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    write_manifest(args.out, args, {"config": dict(cfg.__dict__), "runs": args.runs, "folds": args.folds})
    print(f"rmae = {report.rmae:.4f} +/- {report.rmae_std:.4f} over {args.runs} runs -> {args.out}")


def cmd_sweep(args):
    dataset = load_dataset(args)
    cfg = gibbs_config_from_args(args)
    budgets = [float(b) for b in args.budgets.split(",")] if args.budgets else DEFAULT_SWEEP_BUDGETS
    rows = budget_sweep(dataset, budgets, cfg, runs=args.runs, variant=args.rmae_variant)
    write_csv(
        args.out,
        ["budget", "mode", "run", "rmae", "mean_cuts", "train_seconds"],
        [[r["budget"], r["mode"], r["run"], r["rmae"], r["mean_cuts"], r["train_seconds"]] for r in rows],
    )
    write_manifest(args.out, args, {"config": dict(cfg.__dict__), "budgets": budgets, "runs": args.runs})
    print(f"wrote {len(rows)} sweep rows to {args.out}")


def cmd_pdp(args):
    forest, samples = load_model(Path(args.model).read_bytes())
    if not samples:
        raise BspForestError("model file has no posterior samples; re-train with samples")
    dataset = load_dataset(args)
    curve = partial_dependence(samples, dataset, args.dim, args.grid)
    rows = list(zip(curve.grid.tolist(), curve.mean.tolist(), curve.lo.tolist(), curve.hi.tolist()))
    write_csv(args.out, ["grid", "mean", "lo5", "hi95"], rows)
    write_manifest(args.out, args, {"model": args.model, "dimension": args.dim})
    print(f"wrote partial dependence for dimension {args.dim} to {args.out}")


def cmd_dimuse(args):
    forest, samples = load_model(Path(args.model).read_bytes())
    freq = dimension_usage(samples if samples else [forest])
    write_csv(args.out, ["dimension", "frequency"], [[i, f] for i, f in enumerate(freq.tolist())])
    write_manifest(args.out, args, {"model": args.model})
    print(f"wrote dimension usage ({len(freq)} dims) to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bspforest", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bspforest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("friedman", help="generate the synthetic benchmark dataset")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--dims", type=int, default=10)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", default=None, help="also write the noiseless surface")
    p.set_defaults(func=cmd_friedman)

    p = sub.add_parser("train", help="fit a forest to a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None)
    add_train_flags(p)
    p.add_argument("--model-out", required=True)
    p.add_argument("--format", choices=["json", "binary"], default="binary")
    p.add_argument("--trace", default=None, help="per-iteration trace CSV")
    p.add_argument("--diagnostics", default=None, help="sampler diagnostics JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="repeated random-split evaluation")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None)
    add_train_flags(p)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--rmae-variant", choices=["sqrt-mae", "mae"], default="sqrt-mae")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="budget sweep over both cut modes")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None)
    add_train_flags(p)
    p.add_argument("--budgets", default=None, help="comma-separated budgets (default 0.4..1.4)")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--rmae-variant", choices=["sqrt-mae", "mae"], default="sqrt-mae")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pdp", help="partial dependence curve from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--grid", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pdp)

    p = sub.add_parser("dimuse", help="dimension usage frequencies from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dimuse)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except BspForestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
