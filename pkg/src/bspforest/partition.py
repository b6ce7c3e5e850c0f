"""Random binary space partitioning of a d-dimensional domain by angled cuts.

Each cut is free in exactly two dimensions: project the region onto a pair
of coordinates, draw an angled line on that 2-D projection, and extend it
back as a hyperplane parallel to every other axis.  Waiting times between
cuts are exponential with rate proportional to the summed projection
perimeters of all current leaves, so the partition is a continuous-time
Markov jump process truncated at a time budget.

Three region-tracking modes:

* ``hull``: a leaf is represented, per dimension pair, by the convex hull of
  its data's projected coordinates.  Cuts always separate data.  This is the
  mode used by inference.
* ``full``: the leaf is an exact convex polytope (intersection of the root
  box with ancestor half-spaces), tracked as a vertex cloud that is clipped
  chord-by-chord at every cut.  Used by the distributional test suites.
* ``axis``: the degenerate axis-aligned mode with the pair measure replaced
  by side lengths; equivalent to a Mondrian process and used as a baseline.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from . import _fasthull, geometry
from .errors import ConfigError, GeometryError
from .geometry import EPS_GEOM, ConvexPolygon, CutLine, convex_hull, perimeter

MODE_BSP = "bsp"
MODE_AXIS = "axis"

#: Default expected waiting cost of the very first cut, used to calibrate the
#: rate multiplier of the jump process.
FIRST_CUT_COST = 0.25


def all_pairs(d: int) -> list[tuple[int, int]]:
    """All canonically ordered dimension pairs (d1 < d2)."""
    if d < 2:
        raise ConfigError(f"need at least 2 dimensions, got {d}")
    return list(itertools.combinations(range(d), 2))


def left_child(node_id: int) -> int:
    return 2 * node_id + 1


def right_child(node_id: int) -> int:
    return 2 * node_id + 2


@dataclass(frozen=True)
class HyperplaneCut:
    """One angled cut: node it splits, free dimension pair, line, event time."""

    node_id: int
    dims: tuple[int, int]
    line: CutLine
    time: float

    def signed_values(self, X: np.ndarray) -> np.ndarray:
        """Signed cut values for rows of a full (n, d) matrix."""
        return self.line.signed_values(np.asarray(X)[..., list(self.dims)])


@dataclass(frozen=True)
class Box:
    """Axis-aligned box domain [lo_1, hi_1] x ... x [lo_d, hi_d]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigError("box lo/hi must be 1-D arrays of equal length")
        if (hi <= lo).any():
            raise ConfigError("box must have positive extent in every dimension")

    @property
    def d(self) -> int:
        return len(self.lo)

    @classmethod
    def unit(cls, d: int) -> "Box":
        return cls(np.zeros(d), np.ones(d))

    def corners(self) -> np.ndarray:
        if self.d > 16:
            raise ConfigError(f"corner enumeration refused for d={self.d} > 16")
        grid = np.array(list(itertools.product(*zip(self.lo, self.hi))))
        return grid


class BspTree:
    """Binary tree of hyperplane cuts with per-leaf mean parameters.

    Nodes carry heap-style identifiers: root 0, children of k are 2k+1
    (negative cut side) and 2k+2 (positive side).
    """

    def __init__(self, d, cuts=None, leaf_means=None, leaf_rows=None):
        self.d = int(d)
        self.cuts: dict[int, HyperplaneCut] = dict(cuts or {})
        self.leaf_means: dict[int, float] = dict(leaf_means if leaf_means is not None else {0: 0.0})
        self.leaf_rows: dict[int, np.ndarray] | None = leaf_rows

    @property
    def num_cuts(self) -> int:
        return len(self.cuts)

    @property
    def leaf_ids(self) -> list[int]:
        return sorted(self.leaf_means)

    def route(self, x) -> int:
        """Leaf id reached by the deterministic side assignments for x."""
        x = np.asarray(x, dtype=float)
        node = 0
        while node in self.cuts:
            cut = self.cuts[node]
            a, b = x[cut.dims[0]], x[cut.dims[1]]
            side = geometry.side_of((a, b), cut.line)
            node = left_child(node) if side == geometry.NEGATIVE else right_child(node)
        return node

    def route_matrix(self, X: np.ndarray) -> np.ndarray:
        """Vectorized routing; returns the leaf id of every row."""
        X = np.asarray(X, dtype=float)
        ids = np.zeros(len(X), dtype=np.int64)
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, rows = stack.pop()
            if node not in self.cuts or rows.size == 0:
                ids[rows] = node
                continue
            cut = self.cuts[node]
            s = cut.signed_values(X[rows])
            neg = s <= EPS_GEOM
            stack.append((left_child(node), rows[neg]))
            stack.append((right_child(node), rows[~neg]))
        return ids

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        """Leaf mean of every row (vectorized routing plus a lookup)."""
        ids = self.route_matrix(X)
        out = np.empty(len(ids))
        for leaf, mu in self.leaf_means.items():
            out[ids == leaf] = mu
        return out

    def cut_times(self) -> list[float]:
        return sorted(c.time for c in self.cuts.values())

    def copy(self) -> "BspTree":
        rows = None if self.leaf_rows is None else dict(self.leaf_rows)
        return BspTree(self.d, self.cuts, self.leaf_means, rows)


# ---------------------------------------------------------------------------
# Fast per-pair convex hulls of projected data


def pair_projection_hulls(X: np.ndarray, pairs: list[tuple[int, int]]):
    """Convex hull vertices of X projected onto every dimension pair.

    Returns (hull vertex arrays, perimeters).  Uses the compiled kernel when
    numba is available; the numpy path below is the reference twin.
    """
    X = np.ascontiguousarray(X, dtype=float)
    if _fasthull.HAVE_NUMBA:
        d1s = np.array([p[0] for p in pairs], dtype=np.int64)
        d2s = np.array([p[1] for p in pairs], dtype=np.int64)
        verts, offsets, pes = _fasthull.pair_hulls_compiled(X, d1s, d2s)
        hulls = [verts[offsets[i] : offsets[i + 1]] for i in range(len(pairs))]
        return hulls, pes
    hulls = []
    pes = np.empty(len(pairs))
    for i, (d1, d2) in enumerate(pairs):
        v = geometry._monotone_chain(X[:, (d1, d2)])
        hulls.append(v)
        pes[i] = perimeter(ConvexPolygon(v))
    return hulls, pes


# ---------------------------------------------------------------------------
# Partition states (one class per region-tracking mode)


class _LeafBase:
    __slots__ = ("rows", "pe")

    @property
    def rate(self) -> float:
        return float(self.pe.sum())


class HullLeaf(_LeafBase):
    """Leaf region as per-pair convex hulls of its data's projections."""

    __slots__ = ("hulls",)

    def __init__(self, X: np.ndarray, rows: np.ndarray, pairs):
        self.rows = rows
        if rows.size <= 1:
            self.hulls = None
            self.pe = np.zeros(len(pairs))
        else:
            self.hulls, self.pe = pair_projection_hulls(X[rows], pairs)

    def polygon(self, pair_index: int) -> ConvexPolygon:
        return ConvexPolygon(self.hulls[pair_index])


class CloudLeaf(_LeafBase):
    """Leaf region as an exact polytope tracked by a vertex cloud."""

    __slots__ = ("cloud", "hulls")

    def __init__(self, cloud: np.ndarray, pairs):
        self.rows = None
        self.cloud = cloud
        self.hulls, self.pe = pair_projection_hulls(cloud, pairs)

    def polygon(self, pair_index: int) -> ConvexPolygon:
        return ConvexPolygon(self.hulls[pair_index])


class AxisLeaf(_LeafBase):
    """Leaf region as an axis-aligned bounding box; measure is side lengths."""

    __slots__ = ("lo", "hi", "pair_idx")

    def __init__(self, rows, lo, hi, pairs):
        self.rows = rows
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        ext = np.maximum(self.hi - self.lo, 0.0)
        self.pe = np.array([ext[d1] + ext[d2] for d1, d2 in pairs])

    def polygon(self, pair_index: int) -> ConvexPolygon:
        raise NotImplementedError("axis leaves sample cuts directly")


def clip_cloud(cloud: np.ndarray, dims: tuple[int, int], line: CutLine):
    """Split a polytope vertex cloud by a hyperplane cut.

    Points on each closed side are kept, and every chord between strictly
    opposite-sign points contributes its plane intersection to both sides.
    The convex hulls of the two returned clouds are exactly the two pieces
    of the hull of the input cloud; both are pruned back to hull vertices to
    stop quadratic point growth across repeated clips.
    """
    s = line.signed_values(cloud[:, list(dims)])
    neg_pts = cloud[s <= EPS_GEOM]
    pos_pts = cloud[s >= -EPS_GEOM]
    ni = np.flatnonzero(s < -EPS_GEOM)
    pi = np.flatnonzero(s > EPS_GEOM)
    if ni.size and pi.size:
        sn, sp = s[ni], s[pi]
        t = sn[:, None] / (sn[:, None] - sp[None, :])  # in (0, 1)
        inter = cloud[ni][:, None, :] + t[..., None] * (cloud[pi][None, :, :] - cloud[ni][:, None, :])
        inter = inter.reshape(-1, cloud.shape[1])
        neg = np.vstack([neg_pts, inter])
        pos = np.vstack([pos_pts, inter])
    else:
        neg, pos = neg_pts, pos_pts
    return _prune_cloud(_dedupe_cloud(neg)), _prune_cloud(_dedupe_cloud(pos))


def _dedupe_cloud(cloud: np.ndarray) -> np.ndarray:
    if len(cloud) <= 1:
        return cloud
    return np.unique(cloud.round(decimals=12), axis=0)


def _prune_cloud(cloud: np.ndarray) -> np.ndarray:
    """Reduce a cloud to its hull vertices (exact; interior points are
    redundant for every later projection or clip)."""
    d = cloud.shape[1]
    if len(cloud) <= d + 1 or d > 3:
        return cloud
    if d == 2:
        return geometry._monotone_chain(cloud)
    try:
        from scipy.spatial import ConvexHull as QHull

        return cloud[QHull(cloud, qhull_options="QJ").vertices]
    except Exception:
        return cloud


class PartitionState:
    """Current leaves of a partition plus the cached cut-rate bookkeeping.

    ``total_rate`` is the sum over leaves and dimension pairs of the leaf's
    pair measure; only leaves touched by a cut are recomputed.
    """

    def __init__(self, d: int, leaves: dict, pairs):
        self.d = d
        self.pairs = pairs
        self.leaves = leaves

    @property
    def total_rate(self) -> float:
        return float(sum(leaf.rate for leaf in self.leaves.values()))

    def clone(self) -> "PartitionState":
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.leaves = dict(self.leaves)
        return new

    # -- cut sampling -------------------------------------------------------

    def sample_cut(self, rng: np.random.Generator, time: float = 0.0) -> HyperplaneCut:
        """Draw one cut: leaf and pair by measure, then a line on the region."""
        ids = list(self.leaves)
        rates = np.cumsum([self.leaves[k].rate for k in ids])
        if rates[-1] <= 0.0:
            raise GeometryError("no cuttable leaf")
        leaf_id = ids[int(np.searchsorted(rates, rng.uniform(0.0, rates[-1]), side="right"))]
        leaf = self.leaves[leaf_id]
        pair_cum = np.cumsum(leaf.pe)
        pair_index = int(np.searchsorted(pair_cum, rng.uniform(0.0, pair_cum[-1]), side="right"))
        line = self._sample_line(leaf, pair_index, rng)
        return HyperplaneCut(leaf_id, self.pairs[pair_index], line, time)

    def _sample_line(self, leaf, pair_index: int, rng) -> CutLine:
        vertices = leaf.hulls[pair_index]
        theta = geometry._sample_direction_raw(vertices, rng)
        return geometry._sample_position_raw(vertices, theta, rng)

    def apply_cut(self, cut: HyperplaneCut) -> tuple[int, int]:
        raise NotImplementedError


class HullPartition(PartitionState):
    """Hull mode over a fixed data matrix (rows indexed into X)."""

    def __init__(self, X: np.ndarray, root_leaf: HullLeaf | None = None, pairs=None):
        X = np.asarray(X, dtype=float)
        pairs = pairs if pairs is not None else all_pairs(X.shape[1])
        if root_leaf is None:
            root_leaf = HullLeaf(X, np.arange(len(X)), pairs)
        super().__init__(X.shape[1], {0: root_leaf}, pairs)
        self.X = X

    def apply_cut(self, cut: HyperplaneCut) -> tuple[int, int]:
        leaf = self.leaves.pop(cut.node_id)
        s = cut.signed_values(self.X[leaf.rows])
        neg = leaf.rows[s <= EPS_GEOM]
        pos = leaf.rows[s > EPS_GEOM]
        if neg.size == 0 or pos.size == 0:
            self.leaves[cut.node_id] = leaf
            raise GeometryError("cut misses region")
        lid, rid = left_child(cut.node_id), right_child(cut.node_id)
        self.leaves[lid] = HullLeaf(self.X, neg, self.pairs)
        self.leaves[rid] = HullLeaf(self.X, pos, self.pairs)
        return lid, rid


class FullPartition(PartitionState):
    """Full mode on a box domain; leaves are exact polytope vertex clouds."""

    def __init__(self, box: Box):
        pairs = all_pairs(box.d)
        root = CloudLeaf(box.corners(), pairs)
        super().__init__(box.d, {0: root}, pairs)

    def apply_cut(self, cut: HyperplaneCut) -> tuple[int, int]:
        leaf = self.leaves.pop(cut.node_id)
        neg, pos = clip_cloud(leaf.cloud, cut.dims, cut.line)
        if len(neg) == 0 or len(pos) == 0:
            self.leaves[cut.node_id] = leaf
            raise GeometryError("cut misses region")
        lid, rid = left_child(cut.node_id), right_child(cut.node_id)
        self.leaves[lid] = CloudLeaf(neg, self.pairs)
        self.leaves[rid] = CloudLeaf(pos, self.pairs)
        return lid, rid


class AxisPartition(PartitionState):
    """Axis-aligned (Mondrian) mode on data bounding boxes or a plain box."""

    def __init__(self, X: np.ndarray | None = None, box: Box | None = None):
        if X is not None:
            X = np.asarray(X, dtype=float)
            d = X.shape[1]
            pairs = all_pairs(d)
            root = AxisLeaf(np.arange(len(X)), X.min(axis=0), X.max(axis=0), pairs)
        elif box is not None:
            d = box.d
            pairs = all_pairs(d)
            root = AxisLeaf(None, box.lo, box.hi, pairs)
        else:
            raise ConfigError("axis mode needs data or a box domain")
        super().__init__(d, {0: root}, pairs)
        self.X = X

    def _sample_line(self, leaf: AxisLeaf, pair_index: int, rng) -> CutLine:
        d1, d2 = self.pairs[pair_index]
        ext1 = leaf.hi[d1] - leaf.lo[d1]
        ext2 = leaf.hi[d2] - leaf.lo[d2]
        # theta = pi cuts d1 (vertical line), theta = pi/2 cuts d2 (horizontal)
        if rng.uniform(0.0, ext1 + ext2) < ext1:
            t = -rng.uniform(leaf.lo[d1], leaf.hi[d1])
            return CutLine(math.pi, (-t, 0.0))
        t = rng.uniform(leaf.lo[d2], leaf.hi[d2])
        return CutLine(math.pi / 2, (0.0, t))

    def apply_cut(self, cut: HyperplaneCut) -> tuple[int, int]:
        leaf = self.leaves.pop(cut.node_id)
        lid, rid = left_child(cut.node_id), right_child(cut.node_id)
        if leaf.rows is not None:
            s = cut.signed_values(self.X[leaf.rows])
            neg, pos = leaf.rows[s <= EPS_GEOM], leaf.rows[s > EPS_GEOM]
            if neg.size == 0 or pos.size == 0:
                self.leaves[cut.node_id] = leaf
                raise GeometryError("cut misses region")
            for nid, rows in ((lid, neg), (rid, pos)):
                sub = self.X[rows]
                self.leaves[nid] = AxisLeaf(rows, sub.min(axis=0), sub.max(axis=0), self.pairs)
        else:
            d1, d2 = cut.dims
            lo_n, hi_n = leaf.lo.copy(), leaf.hi.copy()
            lo_p, hi_p = leaf.lo.copy(), leaf.hi.copy()
            if cut.line.angle > 3.0:  # theta = pi: cuts d1, negative side a >= a0
                a0 = cut.line.point[0]
                lo_n[d1], hi_p[d1] = a0, a0
            else:  # theta = pi/2: cuts d2, negative side b <= b0
                b0 = cut.line.point[1]
                hi_n[d2], lo_p[d2] = b0, b0
            self.leaves[lid] = AxisLeaf(None, lo_n, hi_n, self.pairs)
            self.leaves[rid] = AxisLeaf(None, lo_p, hi_p, self.pairs)
        return lid, rid


# ---------------------------------------------------------------------------
# Process-level operations


def sample_waiting_time(state: PartitionState, rate_scale: float, rng: np.random.Generator) -> float:
    """Exponential waiting time to the next cut; +inf when nothing is cuttable."""
    if rate_scale < 0:
        raise ConfigError(f"rate_scale must be >= 0, got {rate_scale}")
    rate = rate_scale * state.total_rate
    if rate <= 0.0:
        return math.inf
    return float(rng.exponential(1.0 / rate))


def sample_cut(state: PartitionState, rng: np.random.Generator, time: float = 0.0) -> HyperplaneCut:
    return state.sample_cut(rng, time)


def calibrate_rate_scale(state: PartitionState, first_cut_cost: float = FIRST_CUT_COST) -> float:
    """Rate multiplier so the expected waiting cost of the first cut is fixed."""
    rate = state.total_rate
    if rate <= 0.0:
        raise GeometryError("no cuttable leaf")
    return 1.0 / (first_cut_cost * rate)


def make_state(domain, mode: str = MODE_BSP, full: bool = False) -> PartitionState:
    """Build the partition state for a domain.

    ``domain`` is a data matrix (hull/axis modes) or a :class:`Box`
    (full/axis modes).  ``full=True`` requests exact polytope tracking and is
    only available on box domains.
    """
    if mode not in (MODE_BSP, MODE_AXIS):
        raise ConfigError(f"unknown mode {mode!r}")
    if isinstance(domain, Box):
        if mode == MODE_AXIS:
            return AxisPartition(box=domain)
        return FullPartition(domain)
    X = np.asarray(domain, dtype=float)
    if mode == MODE_AXIS:
        return AxisPartition(X=X)
    if full:
        raise ConfigError("full region tracking needs a box domain")
    return HullPartition(X)


def simulate(
    domain,
    budget: float,
    rate_scale: float | None = None,
    mode: str = MODE_BSP,
    rng: np.random.Generator | None = None,
    max_cuts: int = 100_000,
) -> BspTree:
    """Run the jump process until the budget is exhausted; returns the tree.

    ``rate_scale=None`` calibrates the rate so the first cut costs
    ``FIRST_CUT_COST`` in expectation.
    """
    if budget <= 0:
        raise ConfigError(f"budget must be > 0, got {budget}")
    rng = np.random.default_rng() if rng is None else rng
    state = make_state(domain, mode=mode)
    if rate_scale is None:
        rate_scale = calibrate_rate_scale(state)
    cuts: dict[int, HyperplaneCut] = {}
    t = 0.0
    while len(cuts) < max_cuts:
        t += sample_waiting_time(state, rate_scale, rng)
        if t > budget:
            break
        cut = state.sample_cut(rng, time=t)
        state.apply_cut(cut)
        cuts[cut.node_id] = cut
    leaf_rows = None
    first = next(iter(state.leaves.values()))
    if first.rows is not None:
        leaf_rows = {k: leaf.rows for k, leaf in state.leaves.items()}
    means = {k: 0.0 for k in state.leaves}
    return BspTree(state.d, cuts, means, leaf_rows)


def restrict(tree: BspTree, subregion: Box) -> BspTree:
    """Restrict a tree to a sub-box, keeping only separating cuts.

    A cut is kept iff its hyperplane splits the current node's region
    intersected with the sub-box into two nonempty parts; non-separating
    internal nodes collapse into the surviving child.  Event times are
    preserved; node ids are re-assigned heap-style in the restricted tree.
    """
    out_cuts: dict[int, HyperplaneCut] = {}
    out_means: dict[int, float] = {}
    stack = [(0, subregion.corners(), 0)]
    while stack:
        node, cloud, out_id = stack.pop()
        while node in tree.cuts:
            cut = tree.cuts[node]
            s = cut.line.signed_values(cloud[:, list(cut.dims)])
            if s.max() <= EPS_GEOM:
                node = left_child(node)
            elif s.min() >= -EPS_GEOM:
                node = right_child(node)
            else:
                break
        if node not in tree.cuts:
            out_means[out_id] = tree.leaf_means.get(node, 0.0)
            continue
        cut = tree.cuts[node]
        neg, pos = clip_cloud(cloud, cut.dims, cut.line)
        out_cuts[out_id] = replace(cut, node_id=out_id)
        stack.append((left_child(node), neg, left_child(out_id)))
        stack.append((right_child(node), pos, right_child(out_id)))
    return BspTree(tree.d, out_cuts, out_means, None)
