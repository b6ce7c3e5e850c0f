"""Binary space partitioning forests.

Angled-cut regression trees over d-dimensional feature spaces, fit by
Gibbs sampling with a conditional sequential Monte Carlo tree move, plus a
benchmark harness for synthetic and CSV datasets.
"""

from .bench import budget_sweep, cv_evaluate, dimension_usage, partial_dependence
from .data import Dataset, friedman_generate, ingest_csv, rmae
from .errors import (
    BspForestError,
    ConfigError,
    GeometryError,
    IngestError,
    ModelFormatError,
)
from .forest import BspForest, LabelTransform, default_priors, load, predict, residuals, route, save
from .geometry import ConvexPolygon, CutLine, convex_hull, perimeter, side_of, split_polygon
from .gibbs import (
    CsmcConfig,
    GibbsConfig,
    GibbsResult,
    gibbs_run,
    posterior_predict,
    propose_cut_on_hulls,
    sample_leaf_means,
    sample_sigma2,
)
from .partition import (
    Box,
    BspTree,
    HyperplaneCut,
    all_pairs,
    calibrate_rate_scale,
    restrict,
    sample_cut,
    sample_waiting_time,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "BspForestError",
    "ConfigError",
    "GeometryError",
    "IngestError",
    "ModelFormatError",
    "ConvexPolygon",
    "CutLine",
    "convex_hull",
    "perimeter",
    "side_of",
    "split_polygon",
    "Box",
    "BspTree",
    "HyperplaneCut",
    "all_pairs",
    "calibrate_rate_scale",
    "restrict",
    "sample_cut",
    "sample_waiting_time",
    "simulate",
    "BspForest",
    "LabelTransform",
    "default_priors",
    "load",
    "predict",
    "residuals",
    "route",
    "save",
    "CsmcConfig",
    "GibbsConfig",
    "GibbsResult",
    "gibbs_run",
    "posterior_predict",
    "propose_cut_on_hulls",
    "sample_leaf_means",
    "sample_sigma2",
    "Dataset",
    "friedman_generate",
    "ingest_csv",
    "rmae",
    "budget_sweep",
    "cv_evaluate",
    "dimension_usage",
    "partial_dependence",
    "__version__",
]
