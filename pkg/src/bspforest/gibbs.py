"""Posterior inference for the forest.

Outer Gibbs loop: draw the noise variance from its conjugate inverse-gamma
conditional, then refresh every tree in turn with a conditional sequential
Monte Carlo (C-SMC) move over a fixed grid of time segments.  Within one
segment each non-reference particle extends its cut sequence from the
process prior, newly created leaves get conjugate-posterior mean draws, and
the incremental weight is

    prior(mu_new) * p(Y | new state) / (posterior(mu_new) * p(Y | old state))

with all bookkeeping in log space.  The reference particle replays the
retained tree (its cuts and recorded means, re-weighted under the current
conditionals) and is immune to resampling, which makes the move a valid
Markov kernel on the tree's conditional posterior.

Leaf means created inside a segment but destroyed by a later cut of the same
segment integrate out exactly, so only leaves alive at a segment's end enter
the weight ratio.  After the final selection every leaf mean of the chosen
tree is refreshed from its exact conditional, a standard extra Gibbs step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .forest import BspForest, Priors, default_priors, linear_sigma2_estimate
from .partition import (
    MODE_AXIS,
    MODE_BSP,
    AxisPartition,
    BspTree,
    HullPartition,
    HyperplaneCut,
    PartitionState,
    calibrate_rate_scale,
)

logger = logging.getLogger("bspforest.gibbs")

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Conjugate updates


def sample_sigma2(n_rows: int, ess: float, lambda_ig: float, rng: np.random.Generator) -> float:
    """Draw the noise variance from InvGamma((3 + n)/2, lambda + ess/2)."""
    shape = 0.5 * (3.0 + n_rows)
    scale = lambda_ig + 0.5 * ess
    return float(scale / rng.gamma(shape))


def _posterior_params(n: int, sr: float, sigma2: float, sigma_mu: float) -> tuple[float, float]:
    # precision n/sigma2 + 1/sigma_mu^2; n = 0 falls back to the prior
    prec = n / sigma2 + 1.0 / sigma_mu ** 2
    return (sr / sigma2) / prec, math.sqrt(1.0 / prec)


def sample_leaf_means(
    tree: BspTree, residuals: np.ndarray, sigma2: float, sigma_mu: float, rng: np.random.Generator
) -> dict[int, float]:
    """Conjugate posterior draw of every leaf mean of a routed tree."""
    if tree.leaf_rows is None:
        raise ConfigError("tree has no routed rows; run it through training data first")
    out = {}
    for leaf, rows in tree.leaf_rows.items():
        mean, sd = _posterior_params(rows.size, float(residuals[rows].sum()), sigma2, sigma_mu)
        out[leaf] = mean + sd * rng.standard_normal()
    return out


def propose_cut_on_hulls(
    state: PartitionState, rate_scale: float, rng: np.random.Generator
) -> tuple[HyperplaneCut | None, float]:
    """One prior cut proposal on the current leaf hulls plus its waiting cost.

    Returns (None, inf) when every leaf region is degenerate and no further
    cut is possible.
    """
    rate = rate_scale * state.total_rate
    if rate <= 0.0:
        return None, math.inf
    cost = float(rng.exponential(1.0 / rate))
    return state.sample_cut(rng), cost


# ---------------------------------------------------------------------------
# C-SMC over fixed time segments


@dataclass(frozen=True)
class CsmcConfig:
    """Particle count, segment grid and process scaling for one tree move."""

    n_particles: int = 10
    n_segments: int = 5
    budget: float = 0.7
    rate_scale: float = 1.0
    resampling: str = "multinomial"
    max_cuts_per_segment: int = 1000

    def __post_init__(self):
        if self.n_particles < 2:
            raise ConfigError(f"n_particles must be >= 2, got {self.n_particles}")
        if self.n_segments < 1:
            raise ConfigError(f"n_segments must be >= 1, got {self.n_segments}")
        if self.budget <= 0:
            raise ConfigError(f"budget must be > 0, got {self.budget}")
        if self.rate_scale <= 0:
            raise ConfigError(f"rate_scale must be > 0, got {self.rate_scale}")
        if self.resampling not in ("multinomial", "systematic"):
            raise ConfigError(f"resampling must be multinomial or systematic, got {self.resampling!r}")

    @property
    def boundaries(self) -> np.ndarray:
        return np.linspace(0.0, self.budget, self.n_segments + 1)


@dataclass
class ParticleRecord:
    """A retained tree decomposed onto the segment grid.

    ``cuts[s]`` holds the cuts whose event times fall in segment s+1 and
    ``means[s]`` the values of leaves created in that segment and still alive
    at its end (the root counts as created in the first segment).
    """

    cuts: list[list[HyperplaneCut]]
    means: list[dict[int, float]]

    @classmethod
    def initial(cls, n_segments: int, root_mu: float = 0.0) -> "ParticleRecord":
        cuts = [[] for _ in range(n_segments)]
        means = [{} for _ in range(n_segments)]
        means[0][0] = root_mu
        return cls(cuts, means)


def _norm_logpdf(x: float, mean: float, sd: float) -> float:
    z = (x - mean) / sd
    return -0.5 * (LOG_2PI + z * z) - math.log(sd)


class _Particle:
    """One C-SMC particle: partition state, leaf means and log-likelihood."""

    __slots__ = ("state", "mu", "stats", "ll", "loglik", "cuts", "created")

    def __init__(self, state, root_stats):
        self.state = state
        self.mu: dict[int, float] = {}
        self.stats: dict[int, tuple[int, float]] = {0: root_stats}
        self.ll: dict[int, float] = {}
        self.loglik = 0.0
        self.cuts: list[list[HyperplaneCut]] = []
        self.created: list[dict[int, float]] = []

    def clone(self) -> "_Particle":
        new = object.__new__(_Particle)
        new.state = self.state.clone()
        new.mu = dict(self.mu)
        new.stats = dict(self.stats)
        new.ll = dict(self.ll)
        new.loglik = self.loglik
        new.cuts = [list(c) for c in self.cuts]
        new.created = [dict(c) for c in self.created]
        return new

    def recompute_loglik(self, sigma2: float) -> float:
        """From-scratch log-likelihood (used by consistency checks)."""
        return sum(_leaf_ll(self.stats[k], self.mu[k], sigma2) for k in self.mu)


def _leaf_stats(r: np.ndarray, rows: np.ndarray) -> tuple[int, float, float]:
    sub = r[rows]
    return rows.size, float(sub.sum()), float((sub ** 2).sum())


def _leaf_ll(stats: tuple[int, float, float], mu: float, sigma2: float) -> float:
    n, sr, srr = stats
    return -0.5 * n * (LOG_2PI + math.log(sigma2)) - 0.5 * (srr - 2.0 * mu * sr + n * mu * mu) / sigma2


class CsmcSampler:
    """Reusable C-SMC tree move over a fixed dataset and segment grid."""

    def __init__(self, X: np.ndarray, config: CsmcConfig, mode: str = MODE_BSP):
        self.X = np.asarray(X, dtype=float)
        self.config = config
        self.mode = mode
        # the root region is identical for every particle and every sweep
        if mode == MODE_AXIS:
            self._root_state = AxisPartition(X=self.X)
        else:
            self._root_state = HullPartition(self.X)
        self._root_leaf = self._root_state.leaves[0]

    def fresh_state(self) -> PartitionState:
        state = self._root_state.clone()
        state.leaves = {0: self._root_leaf}
        return state

    # -- one segment of one particle -----------------------------------------

    def _extend(
        self,
        p: _Particle,
        lo: float,
        hi: float,
        first_segment: bool,
        r: np.ndarray,
        sigma2: float,
        sigma_mu: float,
        rng: np.random.Generator,
        replay: tuple[list[HyperplaneCut], dict[int, float]] | None = None,
    ) -> float:
        cfg = self.config
        created: set[int] = {0} if first_segment else set()
        removed_ll = 0.0
        new_cuts: list[HyperplaneCut] = []

        def apply(cut: HyperplaneCut):
            nonlocal removed_ll
            lid, rid = p.state.apply_cut(cut)
            k = cut.node_id
            if k in created:
                created.discard(k)  # transient leaf: its mean integrates out
            else:
                removed_ll += p.ll.pop(k)
                p.mu.pop(k)
            p.stats.pop(k, None)
            for cid in (lid, rid):
                p.stats[cid] = _leaf_stats(r, p.state.leaves[cid].rows)
                created.add(cid)
            new_cuts.append(cut)

        if replay is not None:
            for cut in replay[0]:
                apply(cut)
        else:
            t = lo
            while len(new_cuts) < cfg.max_cuts_per_segment:
                rate = cfg.rate_scale * p.state.total_rate
                if rate <= 0.0:
                    break
                t += rng.exponential(1.0 / rate)
                if t > hi:
                    break
                apply(p.state.sample_cut(rng, time=t))
            else:
                logger.warning("segment cut cap %d reached; truncating particle", cfg.max_cuts_per_segment)

        log_ratio = 0.0
        added_ll = 0.0
        created_mu: dict[int, float] = {}
        for cid in sorted(created):
            n, sr, _ = p.stats[cid]
            mean, sd = _posterior_params(n, sr, sigma2, sigma_mu)
            mu = replay[1][cid] if replay is not None else mean + sd * rng.standard_normal()
            p.mu[cid] = mu
            created_mu[cid] = mu
            ll = _leaf_ll(p.stats[cid], mu, sigma2)
            p.ll[cid] = ll
            added_ll += ll
            log_ratio += _norm_logpdf(mu, 0.0, sigma_mu) - _norm_logpdf(mu, mean, sd)
        p.loglik += added_ll - removed_ll
        p.cuts.append(new_cuts)
        p.created.append(created_mu)
        return log_ratio + added_ll - removed_ll

    # -- full sweep ------------------------------------------------------------

    def sweep(
        self,
        r: np.ndarray,
        sigma2: float,
        sigma_mu: float,
        record: ParticleRecord,
        rng: np.random.Generator,
    ) -> tuple[BspTree, ParticleRecord, np.ndarray, dict]:
        cfg = self.config
        bounds = cfg.boundaries
        root_stats = _leaf_stats(r, np.arange(len(self.X)))
        particles = [_Particle(self.fresh_state(), root_stats) for _ in range(cfg.n_particles)]
        ess = []
        weights = None
        for s in range(1, cfg.n_segments + 1):
            lo, hi = bounds[s - 1], bounds[s]
            logw = np.empty(cfg.n_particles)
            for i, p in enumerate(particles):
                replay = (record.cuts[s - 1], record.means[s - 1]) if i == 0 else None
                logw[i] = self._extend(p, lo, hi, s == 1, r, sigma2, sigma_mu, rng, replay)
            weights = _normalize_weights(logw)
            ess.append(float(1.0 / (weights ** 2).sum()))
            if s < cfg.n_segments:
                ancestors = _resample_ancestors(weights, cfg.resampling, rng)
                particles = [particles[0]] + [particles[a].clone() for a in ancestors]
        chosen = int(rng.choice(cfg.n_particles, p=weights))
        selected = particles[chosen]

        # exact conditional refresh of every surviving leaf mean
        segment_of = {cid: s for s, seg in enumerate(selected.created) for cid in seg}
        for leaf in sorted(selected.mu):
            n, sr, _ = selected.stats[leaf]
            mean, sd = _posterior_params(n, sr, sigma2, sigma_mu)
            mu = mean + sd * rng.standard_normal()
            selected.mu[leaf] = mu
            selected.created[segment_of[leaf]][leaf] = mu

        leaf_rows = {k: leaf.rows for k, leaf in selected.state.leaves.items()}
        cuts = {c.node_id: c for seg in selected.cuts for c in seg}
        tree = BspTree(self.X.shape[1], cuts, dict(selected.mu), leaf_rows)
        new_record = ParticleRecord(selected.cuts, selected.created)
        pred = np.empty(len(self.X))
        for leaf, rows in leaf_rows.items():
            pred[rows] = selected.mu[leaf]
        diag = {"chosen": chosen, "ess": ess, "cuts": len(cuts)}
        return tree, new_record, pred, diag


def _normalize_weights(logw: np.ndarray) -> np.ndarray:
    w = np.where(np.isfinite(logw), logw, -np.inf)
    if not np.isfinite(w).any():
        logger.warning("all particle weights degenerate; falling back to the reference")
        out = np.zeros(len(logw))
        out[0] = 1.0
        return out
    w = np.exp(w - w.max())
    return w / w.sum()


def _resample_ancestors(weights: np.ndarray, scheme: str, rng: np.random.Generator) -> np.ndarray:
    """Ancestor indices for particles 2..N; the reference keeps slot 1."""
    n = len(weights)
    if scheme == "systematic":
        positions = (rng.uniform() + np.arange(n - 1)) / (n - 1)
        return np.searchsorted(np.cumsum(weights), positions).clip(0, n - 1)
    return rng.choice(n, size=n - 1, p=weights)


# ---------------------------------------------------------------------------
# Outer Gibbs loop


@dataclass
class GibbsConfig:
    """Configuration of one training run."""

    m: int = 50
    budget: float = 0.7
    n_particles: int = 10
    n_segments: int = 5
    iterations: int = 1000
    burnin: int | None = None
    seed: int = 0
    mode: str = MODE_BSP
    rate_scale: float | None = None
    thin_to: int = 100
    update_sigma2: bool = True
    sigma2: float | None = None
    sigma2_estimate: str = "variance"
    mu_scale_as_variance: bool = False
    resampling: str = "multinomial"

    def validate(self):
        problems = []
        if self.m < 1:
            problems.append(f"m={self.m} (need >= 1)")
        if self.budget <= 0:
            problems.append(f"budget={self.budget} (need > 0)")
        if self.n_particles < 2:
            problems.append(f"n_particles={self.n_particles} (need >= 2)")
        if self.n_segments < 1:
            problems.append(f"n_segments={self.n_segments} (need >= 1)")
        if self.iterations < 0:
            problems.append(f"iterations={self.iterations} (need >= 0)")
        if self.burnin is not None and not 0 <= self.burnin <= self.iterations:
            problems.append(f"burnin={self.burnin} (need 0..iterations)")
        if self.mode not in (MODE_BSP, MODE_AXIS):
            problems.append(f"mode={self.mode!r} (need bsp or axis)")
        if self.rate_scale is not None and self.rate_scale <= 0:
            problems.append(f"rate_scale={self.rate_scale} (need > 0)")
        if self.thin_to < 1:
            problems.append(f"thin_to={self.thin_to} (need >= 1)")
        if self.sigma2_estimate not in ("variance", "linear"):
            problems.append(f"sigma2_estimate={self.sigma2_estimate!r} (need variance or linear)")
        if self.resampling not in ("multinomial", "systematic"):
            problems.append(f"resampling={self.resampling!r}")
        if problems:
            raise ConfigError("invalid configuration: " + "; ".join(problems))

    @property
    def effective_burnin(self) -> int:
        return self.iterations // 2 if self.burnin is None else self.burnin


@dataclass
class GibbsResult:
    """Final state, retained posterior samples and per-iteration trace."""

    forest: BspForest
    samples: list[BspForest]
    trace: list[dict]
    diagnostics: dict
    priors: Priors
    config: GibbsConfig

    def trace_csv(self) -> str:
        lines = ["iteration,sigma2,mean_cuts,train_rmae"]
        for row in self.trace:
            lines.append(
                f"{row['iteration']},{row['sigma2']:.10g},{row['mean_cuts']:.10g},{row['train_rmae']:.10g}"
            )
        return "\n".join(lines) + "\n"


def _sweep_rng(seed: int, iteration: int, tree: int) -> np.random.Generator:
    # keyed substreams: results do not depend on sweep execution order;
    # tree index -1 (the variance update) maps to key 0, tree j to j+1
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(iteration, tree + 1)))


def gibbs_run(X, y, config: GibbsConfig) -> GibbsResult:
    """Train a forest: iterate the variance update and per-tree C-SMC moves."""
    config.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ConfigError("X must be (n, d) with one label per row")
    if X.min() < -1e-9 or X.max() > 1 + 1e-9:
        raise ConfigError("X must be min-max normalized to [0, 1]")
    n, d = X.shape

    sigma2_hat = None
    priors = default_priors(y, config.m, mu_scale_as_variance=config.mu_scale_as_variance)
    y_std = priors.transform.apply(y)
    if config.sigma2_estimate == "linear":
        sigma2_hat = linear_sigma2_estimate(X, y_std)
        priors = default_priors(y, config.m, sigma2_hat, config.mu_scale_as_variance)

    probe = AxisPartition(X=X) if config.mode == MODE_AXIS else HullPartition(X)
    rate_scale = config.rate_scale or calibrate_rate_scale(probe)
    csmc = CsmcSampler(
        X,
        CsmcConfig(
            n_particles=config.n_particles,
            n_segments=config.n_segments,
            budget=config.budget,
            rate_scale=rate_scale,
            resampling=config.resampling,
        ),
        mode=config.mode,
    )

    sigma2 = config.sigma2 if config.sigma2 is not None else priors.sigma2_init
    trees = [BspTree(d, leaf_rows={0: np.arange(n)}) for _ in range(config.m)]
    records = [ParticleRecord.initial(config.n_segments) for _ in range(config.m)]
    G = np.zeros((config.m, n))
    total_fit = G.sum(axis=0)

    burnin = config.effective_burnin
    keep = config.iterations - burnin
    retained_iters = set()
    if keep > 0:
        retained_iters = set(
            np.unique(np.linspace(burnin + 1, config.iterations, min(config.thin_to, keep)).round().astype(int))
        )

    samples: list[BspForest] = []
    trace: list[dict] = []
    chosen_counts = np.zeros(config.n_particles, dtype=int)
    ess_sum = np.zeros(config.n_segments)
    sweeps = 0

    def snapshot() -> BspForest:
        return BspForest(
            [t.copy() for t in trees],
            sigma2,
            config.budget,
            rate_scale,
            priors.sigma_mu,
            priors.lambda_ig,
            priors.transform,
        )

    for it in range(1, config.iterations + 1):
        if config.update_sigma2:
            ess = float(((y_std - total_fit) ** 2).sum())
            sigma2 = sample_sigma2(n, ess, priors.lambda_ig, _sweep_rng(config.seed, it, -1))
        for j in range(config.m):
            fit_others = total_fit - G[j]
            r = y_std - fit_others
            tree, record, pred, diag = csmc.sweep(
                r, sigma2, priors.sigma_mu, records[j], _sweep_rng(config.seed, it, j)
            )
            trees[j] = tree
            records[j] = record
            G[j] = pred
            total_fit = fit_others + pred
            chosen_counts[diag["chosen"]] += 1
            ess_sum += diag["ess"]
            sweeps += 1
        resid = np.abs(y_std - total_fit) * priors.transform.scale
        trace.append(
            {
                "iteration": it,
                "sigma2": sigma2,
                "mean_cuts": float(np.mean([t.num_cuts for t in trees])),
                "train_rmae": math.sqrt(float(resid.mean())),
            }
        )
        if it in retained_iters:
            samples.append(snapshot())

    diagnostics = {
        "final_particle_counts": chosen_counts.tolist(),
        "reference_retention_rate": float(chosen_counts[0] / sweeps) if sweeps else None,
        "mean_ess_per_segment": (ess_sum / sweeps).tolist() if sweeps else [],
        "rate_scale": rate_scale,
    }
    return GibbsResult(snapshot(), samples, trace, diagnostics, priors, config)


def posterior_predict(samples: list[BspForest], X) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-mean prediction and the per-sample prediction matrix."""
    if not samples:
        raise ConfigError("no posterior samples retained")
    X = np.asarray(X, dtype=float)
    draws = np.stack([f.predict_rows(X) for f in samples])
    return draws.mean(axis=0), draws
