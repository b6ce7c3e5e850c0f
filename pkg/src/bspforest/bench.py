"""Benchmark harness: train/eval protocols, diagnostics, budget sweeps.

Everything emits plot-ready rows (lists of dicts) or small dataclasses; CSV
and JSON rendering lives in the CLI.  Independent runs can execute in worker
processes; cap the pool with the BSPF_THREADS environment variable.
"""

from __future__ import annotations

import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset, rmae
from .errors import ConfigError
from .forest import BspForest
from .gibbs import GibbsConfig, GibbsResult, gibbs_run, posterior_predict


def worker_count() -> int:
    raw = os.environ.get("BSPF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"BSPF_THREADS must be an integer, got {raw!r}") from None


def train(dataset: Dataset, config: GibbsConfig) -> GibbsResult:
    return gibbs_run(dataset.X, dataset.y, config)


# ---------------------------------------------------------------------------
# Posterior diagnostics


@dataclass
class PdpCurve:
    """Partial dependence of the prediction on one feature."""

    dimension: int
    grid: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def partial_dependence(
    samples: list[BspForest], dataset: Dataset, dimension: int, grid_size: int = 20
) -> PdpCurve:
    """Average prediction as one feature sweeps a grid, per posterior sample.

    Returns the across-sample mean curve with pointwise 5-95% bands, in
    original label units on the normalized feature grid.
    """
    if not samples:
        raise ConfigError("no posterior samples")
    if not 0 <= dimension < dataset.d:
        raise ConfigError(f"dimension {dimension} out of range for d={dataset.d}")
    grid = np.linspace(0.0, 1.0, grid_size)
    curves = np.empty((len(samples), grid_size))
    X = dataset.X.copy()
    for gi, v in enumerate(grid):
        X[:, dimension] = v
        for si, forest in enumerate(samples):
            curves[si, gi] = forest.predict_rows(X).mean()
    return PdpCurve(
        dimension,
        grid,
        curves.mean(axis=0),
        np.percentile(curves, 5, axis=0),
        np.percentile(curves, 95, axis=0),
    )


def dimension_usage(samples: list[BspForest]) -> np.ndarray:
    """Per-dimension cut involvement, normalized to sum 1.

    Every cut counts once for each of its two free dimensions; frequencies
    are normalized within each posterior sample, then averaged.
    """
    if not samples:
        raise ConfigError("no posterior samples")
    d = samples[0].d
    freqs = []
    for forest in samples:
        counts = np.zeros(d)
        for tree in forest.trees:
            for cut in tree.cuts.values():
                counts[cut.dims[0]] += 1
                counts[cut.dims[1]] += 1
        if counts.sum() > 0:
            freqs.append(counts / counts.sum())
    if not freqs:
        warnings.warn("no cuts in any posterior sample; dimension usage is all zero", stacklevel=2)
        return np.zeros(d)
    return np.mean(freqs, axis=0)


# ---------------------------------------------------------------------------
# Train/test protocols


def split_indices(n: int, run: int, seed: int, folds: int = 5):
    """Deterministic shuffle split for one run: last fold is the test set.

    The permutation depends only on (seed, run), never on the model mode, so
    mode comparisons are paired.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(9000, run)))
    perm = rng.permutation(n)
    n_test = n // folds
    return perm[: n - n_test], perm[n - n_test :]


def _config_for_run(base: GibbsConfig, run: int, mode: str | None = None) -> GibbsConfig:
    cfg = GibbsConfig(**{**base.__dict__})
    cfg.seed = base.seed + 1000 * (run + 1)
    if mode is not None:
        cfg.mode = mode
    return cfg


def _run_eval_task(args):
    dataset, base_cfg_dict, run, seed, folds, variant, mode, budget = args
    base = GibbsConfig(**base_cfg_dict)
    if budget is not None:
        base.budget = budget
    train_idx, test_idx = split_indices(dataset.n, run, seed, folds)
    cfg = _config_for_run(base, run, mode)
    t0 = time.perf_counter()
    result = gibbs_run(dataset.X[train_idx], dataset.y[train_idx], cfg)
    elapsed = time.perf_counter() - t0
    if result.samples:
        pred, _ = posterior_predict(result.samples, dataset.X[test_idx])
    else:
        pred = result.forest.predict_rows(dataset.X[test_idx])
    err = rmae(dataset.y[test_idx], pred, variant)
    cuts = float(np.mean([f.mean_cuts() for f in result.samples] or [result.forest.mean_cuts()]))
    return {
        "run": run,
        "mode": cfg.mode,
        "budget": base.budget,
        "rmae": err,
        "mean_cuts": cuts,
        "train_seconds": elapsed,
    }


def _map_tasks(tasks):
    workers = worker_count()
    if workers == 1 or len(tasks) <= 1:
        return [_run_eval_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_eval_task, tasks))


@dataclass
class EvalReport:
    """Mean and spread of the test error over repeated random splits."""

    rmae: float
    rmae_std: float
    per_run: list[float]
    mean_cuts: float
    runtime_seconds: float
    config: dict


def cv_evaluate(
    dataset: Dataset,
    config: GibbsConfig,
    folds: int = 5,
    runs: int = 10,
    variant: str = "sqrt-mae",
) -> EvalReport:
    """Repeated random split evaluation: per run, train on (folds-1)/folds of
    the rows and test on the held-out fold; report mean +/- std of the error."""
    if dataset.n < folds:
        raise ConfigError(f"need at least {folds} rows for {folds}-fold splits")
    t0 = time.perf_counter()
    tasks = [
        (dataset, dict(config.__dict__), run, config.seed, folds, variant, None, None)
        for run in range(runs)
    ]
    rows = _map_tasks(tasks)
    errs = [row["rmae"] for row in rows]
    return EvalReport(
        rmae=float(np.mean(errs)),
        rmae_std=float(np.std(errs)),
        per_run=errs,
        mean_cuts=float(np.mean([row["mean_cuts"] for row in rows])),
        runtime_seconds=time.perf_counter() - t0,
        config=dict(config.__dict__),
    )


def budget_sweep(
    dataset: Dataset,
    budgets: list[float],
    config: GibbsConfig,
    runs: int = 1,
    folds: int = 5,
    variant: str = "sqrt-mae",
    modes: tuple[str, ...] = ("bsp", "axis"),
) -> list[dict]:
    """Train every mode at every budget over paired splits; returns CSV rows."""
    if not budgets:
        raise ConfigError("need at least one budget value")
    tasks = [
        (dataset, dict(config.__dict__), run, config.seed, folds, variant, mode, budget)
        for budget in budgets
        for mode in modes
        for run in range(runs)
    ]
    return _map_tasks(tasks)


DEFAULT_SWEEP_BUDGETS = [0.4, 0.6, 0.8, 1.0, 1.2, 1.4]
