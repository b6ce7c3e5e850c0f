"""2-D convex geometry kernel.

Convex hulls, perimeters, directional projections, perimeter-weighted
direction sampling and line splitting of convex polygons.  Everything here
is a pure function of its inputs plus an explicit numpy ``Generator``;
polygons are immutable once built.

Degenerate polygons are first-class citizens: a two-vertex polygon is a
segment whose boundary measure is twice its length (the thin-rectangle
limit), a one-vertex polygon is a point with boundary measure zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

# Absolute tolerance in normalized [0, 1] coordinates; used for collinearity,
# containment and conservation checks throughout the package.
EPS_GEOM = 1e-9

NEGATIVE = -1
POSITIVE = 1


@dataclass(frozen=True)
class CutLine:
    """A directed cut line in the plane.

    ``angle`` is the direction of the projection axis the cut is orthogonal
    to, in radians, restricted to (0, pi].  ``point`` is the position of the
    cut on that axis (a 2-D point).  The signed value of a point p is

        cos(angle) * (p_a - point_a) + sin(angle) * (p_b - point_b)

    evaluated in rotated coordinates so that angle = pi/2 is exact.  Points
    with signed value <= EPS_GEOM are on the negative side (tie-break).
    """

    angle: float
    point: tuple[float, float]

    def __post_init__(self):
        if not (0.0 < self.angle <= math.pi):
            raise GeometryError(f"cut angle {self.angle!r} outside (0, pi]")

    @property
    def normal(self) -> tuple[float, float]:
        return (math.cos(self.angle), math.sin(self.angle))

    def signed_values(self, points: np.ndarray) -> np.ndarray:
        """Signed values of an (n, 2) array of points (vectorized)."""
        pts = np.asarray(points, dtype=float)
        ca, sa = self.normal
        return ca * (pts[..., 0] - self.point[0]) + sa * (pts[..., 1] - self.point[1])


def side_of(point, cut: CutLine) -> int:
    """Deterministic side of a point w.r.t. a cut line.

    Returns NEGATIVE (-1) or POSITIVE (+1); points within EPS_GEOM of the
    line fall on the negative side so routing is reproducible.
    """
    s = cut.signed_values(np.asarray(point, dtype=float))
    return NEGATIVE if s <= EPS_GEOM else POSITIVE


class ConvexPolygon:
    """Immutable convex polygon with CCW-ordered vertices.

    Vertex counts 1 (point) and 2 (segment) are permitted degenerate forms.
    Build instances through :func:`convex_hull` unless the vertices are
    already a valid CCW convex cycle.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices: np.ndarray):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) == 0:
            raise GeometryError("polygon needs an (n, 2) vertex array with n >= 1")
        if not np.isfinite(v).all():
            raise GeometryError("non-finite polygon vertex")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __setattr__(self, *a):  # pragma: no cover - immutability guard
        raise AttributeError("ConvexPolygon is immutable")

    def __repr__(self):
        return f"ConvexPolygon({self.vertices.tolist()!r})"

    def __len__(self):
        return len(self.vertices)

    @property
    def is_point(self) -> bool:
        return len(self.vertices) == 1

    @property
    def is_segment(self) -> bool:
        return len(self.vertices) == 2

    @property
    def is_degenerate(self) -> bool:
        return len(self.vertices) < 3


def convex_hull(points) -> ConvexPolygon:
    """Minimal CCW convex polygon containing the input points.

    Collinear boundary points are removed (within EPS_GEOM).  One distinct
    point yields a point polygon, collinear inputs a segment polygon.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and pts.size == 2:
        pts = pts[None, :]
    if pts.size == 0:
        raise GeometryError("empty point set")
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError("points must be an (n, 2) array")
    if not np.isfinite(pts).all():
        raise GeometryError("non-finite input point")
    hull = _monotone_chain(pts)
    return ConvexPolygon(hull)


def _monotone_chain(pts: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain on an (n, 2) array; returns CCW vertices.

    Globally degenerate inputs (all points within EPS_GEOM of a line)
    collapse to a point or a segment between the extremes along the line;
    the tolerance handling must not rely on lexicographic order, which does
    not follow the line direction for nearly collinear sets.
    """
    pts = np.unique(pts, axis=0)  # lexicographic sort + dedupe
    if len(pts) == 1:
        return pts
    rel = pts - pts[0]
    far = rel[(rel ** 2).sum(axis=1).argmax()]
    span = math.hypot(far[0], far[1])
    if span <= EPS_GEOM:
        return pts[:1]
    e = far / span
    if np.abs(rel[:, 0] * e[1] - rel[:, 1] * e[0]).max() <= EPS_GEOM:
        t = rel @ e
        return np.asarray([pts[t.argmin()], pts[t.argmax()]])
    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) > 1 and _cross(lower[-2], lower[-1], p) <= 0.0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) > 1 and _cross(upper[-2], upper[-1], p) <= 0.0:
            upper.pop()
        upper.append(p)
    return _drop_collinear(np.asarray(lower[:-1] + upper[:-1]))


def _drop_collinear(cycle: np.ndarray) -> np.ndarray:
    """Remove vertices within EPS_GEOM of the segment between their neighbors."""
    changed = True
    while changed and len(cycle) > 2:
        changed = False
        keep = np.ones(len(cycle), dtype=bool)
        for i in range(len(cycle)):
            if not keep[i]:
                continue
            a = cycle[(i - 1) % len(cycle)]
            b = cycle[(i + 1) % len(cycle)]
            if _segment_distance(a, b, cycle[i]) <= EPS_GEOM:
                keep[i] = False
                changed = True
                break  # re-scan with fresh neighbours
        cycle = cycle[keep]
    return cycle


def _segment_distance(a, b, p) -> float:
    d = b - a
    L2 = float(d @ d)
    if L2 == 0.0:
        return float(np.linalg.norm(p - a))
    t = float((p - a) @ d) / L2
    proj = a + min(max(t, 0.0), 1.0) * d
    return float(np.linalg.norm(p - proj))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def perimeter(poly: ConvexPolygon) -> float:
    """Boundary measure: edge-length sum over the closed vertex cycle.

    The closed cycle makes a segment count twice its length and a point 0,
    matching the thin-rectangle limit of the boundary measure.
    """
    v = poly.vertices
    if len(v) == 1:
        return 0.0
    return float(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1).sum())


def area(poly: ConvexPolygon) -> float:
    """Shoelace area; zero for degenerate polygons."""
    v = poly.vertices
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def diameter(poly: ConvexPolygon) -> float:
    """Largest pairwise vertex distance (equals max_theta of the projection)."""
    v = poly.vertices
    if len(v) == 1:
        return 0.0
    diff = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def projection_segment(poly: ConvexPolygon, theta: float) -> tuple[float, tuple[float, float]]:
    """Orthogonal projection of the polygon onto the direction-theta axis.

    Returns ``(length, (lo, hi))`` where lo/hi are scalar positions along the
    unit direction (cos theta, sin theta).
    """
    if not (0.0 < theta <= math.pi):
        raise GeometryError(f"projection angle {theta!r} outside (0, pi]")
    t = poly.vertices @ np.array([math.cos(theta), math.sin(theta)])
    lo, hi = float(t.min()), float(t.max())
    return hi - lo, (lo, hi)


def projection_lengths(poly: ConvexPolygon, thetas: np.ndarray) -> np.ndarray:
    """Vectorized l(theta) over an array of angles."""
    thetas = np.asarray(thetas, dtype=float)
    dirs = np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
    t = dirs @ poly.vertices.T
    return t.max(axis=-1) - t.min(axis=-1)


def _sample_direction_raw(vertices: np.ndarray, rng: np.random.Generator) -> float:
    """Rejection sampler for theta ~ l(theta) on a raw CCW vertex array.

    The envelope is the polygon diameter, so acceptance >= 2/pi for convex
    bodies and the loop terminates quickly.
    """
    if len(vertices) < 2:
        raise GeometryError("unsplittable region")
    diff = vertices[:, None, :] - vertices[None, :, :]
    envelope = float(np.sqrt((diff ** 2).sum(-1)).max())
    if envelope <= 0.0:
        raise GeometryError("unsplittable region")
    x, y = vertices[:, 0], vertices[:, 1]
    while True:
        theta = math.pi - rng.uniform(0.0, math.pi)  # lands in (0, pi]
        t = x * math.cos(theta) + y * math.sin(theta)
        if rng.uniform(0.0, envelope) < float(t.max() - t.min()):
            return theta


def _sample_position_raw(vertices: np.ndarray, theta: float, rng: np.random.Generator) -> CutLine:
    t = vertices @ np.array([math.cos(theta), math.sin(theta)])
    lo, hi = float(t.min()), float(t.max())
    if hi - lo <= EPS_GEOM:
        raise GeometryError("zero-length projection")
    pos = rng.uniform(lo, hi)
    return CutLine(theta, (pos * math.cos(theta), pos * math.sin(theta)))


def sample_cut_direction(poly: ConvexPolygon, rng: np.random.Generator) -> float:
    """Draw a direction theta in (0, pi] with density proportional to l(theta)."""
    if perimeter(poly) <= 0.0:
        raise GeometryError("unsplittable region")
    return _sample_direction_raw(poly.vertices, rng)


def sample_cut_position(poly: ConvexPolygon, theta: float, rng: np.random.Generator) -> CutLine:
    """Uniform cut position on the projected segment; returns the cut line."""
    if not (0.0 < theta <= math.pi):
        raise GeometryError(f"projection angle {theta!r} outside (0, pi]")
    return _sample_position_raw(poly.vertices, theta, rng)


def split_polygon(poly: ConvexPolygon, cut: CutLine) -> tuple[ConvexPolygon, ConvexPolygon]:
    """Split a convex polygon by a cut line into (negative, positive) parts.

    New vertices are the line-edge intersection points; each child is CCW
    because vertices are visited in cycle order.  Raises when the line does
    not cross the polygon's interior.
    """
    v = poly.vertices
    s = cut.signed_values(v)
    if s.min() > -EPS_GEOM or s.max() < EPS_GEOM:
        raise GeometryError("cut misses region")
    if poly.is_segment:
        p, q = v
        t = s[0] / (s[0] - s[1])
        x = p + t * (q - p)
        neg, pos = (p, q) if s[0] < 0 else (q, p)
        return (ConvexPolygon(np.array([neg, x])), ConvexPolygon(np.array([x, pos])))
    left: list[np.ndarray] = []
    right: list[np.ndarray] = []
    n = len(v)
    for i in range(n):
        p, sp = v[i], s[i]
        q, sq = v[(i + 1) % n], s[(i + 1) % n]
        if sp <= EPS_GEOM:
            left.append(p)
        if sp >= -EPS_GEOM:
            right.append(p)
        if (sp < -EPS_GEOM and sq > EPS_GEOM) or (sp > EPS_GEOM and sq < -EPS_GEOM):
            t = sp / (sp - sq)
            x = p + t * (q - p)
            left.append(x)
            right.append(x)
    return ConvexPolygon(_dedupe_cycle(left)), ConvexPolygon(_dedupe_cycle(right))


def _dedupe_cycle(points: list[np.ndarray]) -> np.ndarray:
    """Drop consecutive (cyclically) near-duplicate vertices."""
    out: list[np.ndarray] = []
    for p in points:
        if not out or np.abs(p - out[-1]).max() > EPS_GEOM:
            out.append(p)
    if len(out) > 1 and np.abs(out[0] - out[-1]).max() <= EPS_GEOM:
        out.pop()
    return np.asarray(out)


def contains_point(poly: ConvexPolygon, point, tol: float = EPS_GEOM) -> bool:
    """Point-in-convex-polygon test (boundary counts as inside)."""
    v = poly.vertices
    p = np.asarray(point, dtype=float)
    if len(v) == 1:
        return bool(np.abs(p - v[0]).max() <= tol)
    if len(v) == 2:
        d = v[1] - v[0]
        L2 = float(d @ d)
        t = float((p - v[0]) @ d) / L2
        proj = v[0] + np.clip(t, 0.0, 1.0) * d
        return bool(np.linalg.norm(p - proj) <= tol)
    nxt = np.roll(v, -1, axis=0)
    cross = (nxt[:, 0] - v[:, 0]) * (p[1] - v[:, 1]) - (nxt[:, 1] - v[:, 1]) * (p[0] - v[:, 0])
    return bool((cross >= -tol).all())
