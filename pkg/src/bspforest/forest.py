"""Sum-of-trees regression model: prediction, priors, serialization.

The response is modeled as a sum of piecewise-constant tree surfaces plus
Gaussian noise.  Labels are standardized internally; features are expected
min-max normalized to [0, 1]^d.  All leaf means live in standardized label
units, predictions are transformed back on the way out.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import ConfigError, ModelFormatError
from .geometry import CutLine
from .partition import BspTree, HyperplaneCut

FORMAT_VERSION = 1
MAGIC = b"BSPF"


@dataclass(frozen=True)
class LabelTransform:
    """Affine standardization y -> (y - shift) / scale."""

    shift: float
    scale: float

    def apply(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.shift) / self.scale

    def invert(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.scale + self.shift

    @classmethod
    def identity(cls) -> "LabelTransform":
        return cls(0.0, 1.0)

    @classmethod
    def standardize(cls, y) -> "LabelTransform":
        y = np.asarray(y, dtype=float)
        scale = float(y.std(ddof=1)) if len(y) > 1 else 0.0
        if scale <= 0.0:
            raise ConfigError("degenerate label variance")
        return cls(float(y.mean()), scale)


@dataclass(frozen=True)
class Priors:
    """Hyperparameters of the noise-variance and leaf-mean priors."""

    sigma_mu: float
    lambda_ig: float
    sigma2_init: float
    transform: LabelTransform


def leaf_scale(m: int, as_variance: bool = False) -> float:
    """Leaf-mean prior standard deviation 1/(2*sqrt(m)).

    ``as_variance=True`` reads the same quantity as a variance instead (the
    alternative convention); the default matches the usual shrinkage where
    doubling the tree count scales each contribution by m^-1/2.
    """
    base = 1.0 / (2.0 * math.sqrt(m))
    return math.sqrt(base) if as_variance else base


def invgamma_scale_root(sigma2_hat: float, shape: float = 1.5, prob: float = 0.9) -> float:
    """Scale lambda with CDF_InvGamma(sigma2_hat; shape, lambda) = prob."""
    if sigma2_hat <= 0:
        raise ConfigError("sigma2 estimate must be positive")

    def f(lam):
        return stats.invgamma.cdf(sigma2_hat, shape, scale=lam) - prob

    return float(optimize.brentq(f, 1e-12, 1e4, xtol=1e-12, rtol=1e-12))


def default_priors(
    y_train,
    m: int,
    sigma2_hat: float | None = None,
    mu_scale_as_variance: bool = False,
) -> Priors:
    """Standardize labels and derive the default prior hyperparameters.

    ``sigma2_hat`` is the noise-variance estimate in standardized units; by
    default the sample variance of the standardized labels (1 by
    construction).  The inverse-gamma scale puts 90% prior mass below it.
    """
    if m < 1:
        raise ConfigError(f"tree count m must be >= 1, got {m}")
    transform = LabelTransform.standardize(y_train)
    if sigma2_hat is None:
        sigma2_hat = 1.0
    lam = invgamma_scale_root(sigma2_hat)
    return Priors(leaf_scale(m, mu_scale_as_variance), lam, float(sigma2_hat), transform)


def linear_sigma2_estimate(X, y_std) -> float:
    """Residual variance of an OLS fit, as an alternative sigma2 estimate."""
    X = np.asarray(X, dtype=float)
    A = np.column_stack([np.ones(len(X)), X])
    resid = y_std - A @ np.linalg.lstsq(A, y_std, rcond=None)[0]
    dof = max(len(X) - A.shape[1], 1)
    return float((resid ** 2).sum() / dof)


@dataclass
class BspForest:
    """m trees plus noise variance and the prior/budget hyperparameters."""

    trees: list[BspTree]
    sigma2: float
    budget: float
    rate_scale: float
    sigma_mu: float
    lambda_ig: float
    label_transform: LabelTransform = field(default_factory=LabelTransform.identity)

    def __post_init__(self):
        if len(self.trees) < 1:
            raise ConfigError("forest needs at least one tree")
        if self.sigma2 <= 0:
            raise ConfigError(f"sigma2 must be > 0, got {self.sigma2}")

    @property
    def m(self) -> int:
        return len(self.trees)

    @property
    def d(self) -> int:
        return self.trees[0].d

    def copy(self) -> "BspForest":
        return BspForest(
            [t.copy() for t in self.trees],
            self.sigma2,
            self.budget,
            self.rate_scale,
            self.sigma_mu,
            self.lambda_ig,
            self.label_transform,
        )

    def mean_cuts(self) -> float:
        return float(np.mean([t.num_cuts for t in self.trees]))

    # -- prediction -----------------------------------------------------------

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        """Point predictions for an (n, d) matrix, in original label units."""
        X = np.asarray(X, dtype=float)
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict_rows(X)
        return self.label_transform.invert(total)


@dataclass(frozen=True)
class Prediction:
    """Point prediction with its per-tree decomposition."""

    mean: float
    per_tree: list[float]
    posterior_draws: list[float] | None = None


def route(tree: BspTree, x) -> int:
    """Leaf id of x (deterministic side assignment at every internal node)."""
    return tree.route(x)


def predict(forest: BspForest, x, samples: list[BspForest] | None = None) -> Prediction:
    """Noiseless point prediction: the sum of routed leaf means.

    With ``samples`` (retained posterior forests) the prediction also carries
    one draw per sample for interval estimates.
    """
    x = np.asarray(x, dtype=float)
    per_tree = [t.leaf_means[t.route(x)] for t in forest.trees]
    mean = float(forest.label_transform.invert(sum(per_tree)))
    draws = None
    if samples is not None:
        draws = [float(s.label_transform.invert(sum(t.leaf_means[t.route(x)] for t in s.trees))) for s in samples]
    return Prediction(mean, per_tree, draws)


def residuals(forest: BspForest, tree_index: int, X, y) -> np.ndarray:
    """Residuals of y against every tree except ``tree_index`` (standardized)."""
    if not 0 <= tree_index < forest.m:
        raise ConfigError(f"tree index {tree_index} out of range")
    X = np.asarray(X, dtype=float)
    fit = np.zeros(len(X))
    for j, tree in enumerate(forest.trees):
        if j != tree_index:
            fit += tree.predict_rows(X)
    return forest.label_transform.apply(y) - fit


# ---------------------------------------------------------------------------
# Serialization: one JSON schema, optionally wrapped in a compressed binary
# container (see docs/model-format.md).


def _tree_payload(tree: BspTree) -> dict:
    return {
        "d": tree.d,
        "cuts": [
            {
                "node": c.node_id,
                "dims": list(c.dims),
                "angle": c.line.angle,
                "point": list(c.line.point),
                "time": c.time,
            }
            for _, c in sorted(tree.cuts.items())
        ],
        "leaf_means": {str(k): v for k, v in sorted(tree.leaf_means.items())},
    }


def _tree_from_payload(payload: dict) -> BspTree:
    try:
        cuts = {
            c["node"]: HyperplaneCut(
                c["node"], tuple(c["dims"]), CutLine(c["angle"], tuple(c["point"])), c["time"]
            )
            for c in payload["cuts"]
        }
        means = {int(k): float(v) for k, v in payload["leaf_means"].items()}
        return BspTree(payload["d"], cuts, means)
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed tree payload: {exc}") from exc


def forest_to_payload(forest: BspForest) -> dict:
    return {
        "format": "bspforest",
        "version": FORMAT_VERSION,
        "sigma2": forest.sigma2,
        "budget": forest.budget,
        "rate_scale": forest.rate_scale,
        "sigma_mu": forest.sigma_mu,
        "lambda_ig": forest.lambda_ig,
        "label_shift": forest.label_transform.shift,
        "label_scale": forest.label_transform.scale,
        "trees": [_tree_payload(t) for t in forest.trees],
    }


def forest_from_payload(payload: dict) -> BspForest:
    if payload.get("format") != "bspforest":
        raise ModelFormatError("not a forest model payload")
    if payload.get("version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model version {payload.get('version')!r} (expected {FORMAT_VERSION})"
        )
    try:
        return BspForest(
            [_tree_from_payload(t) for t in payload["trees"]],
            payload["sigma2"],
            payload["budget"],
            payload["rate_scale"],
            payload["sigma_mu"],
            payload["lambda_ig"],
            LabelTransform(payload["label_shift"], payload["label_scale"]),
        )
    except KeyError as exc:
        raise ModelFormatError(f"missing model field: {exc}") from exc


def save(forest: BspForest, fmt: str = "json", samples: list[BspForest] | None = None) -> bytes:
    """Serialize a forest (plus optional posterior samples) to bytes."""
    payload = forest_to_payload(forest)
    if samples is not None:
        payload["posterior_samples"] = [forest_to_payload(s) for s in samples]
    text = json.dumps(payload).encode()
    if fmt == "json":
        return text
    if fmt != "binary":
        raise ConfigError(f"unknown model format {fmt!r}")
    body = zlib.compress(text, level=6)
    header = MAGIC + struct.pack(">HIQ", FORMAT_VERSION, zlib.crc32(body), len(body))
    return header + body


def load(blob: bytes) -> tuple[BspForest, list[BspForest] | None]:
    """Decode bytes produced by :func:`save` (either format, sniffed)."""
    if blob[:1] == b"{":
        try:
            payload = json.loads(blob.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ModelFormatError(f"invalid JSON model: {exc}") from exc
    else:
        if len(blob) < 18:
            raise ModelFormatError("truncated model file (header)")
        if blob[:4] != MAGIC:
            raise ModelFormatError("bad magic bytes: not a forest model file")
        version, crc, length = struct.unpack(">HIQ", blob[4:18])
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model version {version}")
        body = blob[18:]
        if len(body) < length:
            raise ModelFormatError("truncated model file (body)")
        body = body[:length]
        if zlib.crc32(body) != crc:
            raise ModelFormatError("model file checksum mismatch")
        payload = json.loads(zlib.decompress(body).decode())
    samples_payload = payload.pop("posterior_samples", None)
    forest = forest_from_payload(payload)
    samples = None
    if samples_payload is not None:
        samples = [forest_from_payload(p) for p in samples_payload]
    return forest, samples
