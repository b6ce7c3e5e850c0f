"""Compiled hull kernel for the per-pair projection perimeters.

Cut sampling needs, for every leaf and every dimension pair, the convex
hull of the leaf's projected data.  That is the inner loop of inference, so
this module provides a numba-compiled twin of
``geometry._monotone_chain`` (same dedupe, same degeneracy handling, same
collinearity cleanup, bit-identical output).  ``HAVE_NUMBA`` tells the
caller whether the kernel is available; the numpy implementation in
``geometry`` remains the reference and the fallback.
"""

import math

import numpy as np

from .geometry import EPS_GEOM

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


@njit(cache=True)
def _hull_points(a, b):
    """Hull vertices (CCW) of the 2-D points (a, b); mirrors the numpy path."""
    n = len(a)
    eps = EPS_GEOM

    # discard points strictly inside the octagon of directional extremes
    if n > 48:
        lo_a = hi_a = a[0]
        lo_b = hi_b = b[0]
        lo_s = hi_s = a[0] + b[0]
        lo_d = hi_d = a[0] - b[0]
        ia0 = ia1 = ib0 = ib1 = is0 = is1 = id0 = id1 = 0
        for i in range(1, n):
            s = a[i] + b[i]
            dd = a[i] - b[i]
            if a[i] < lo_a:
                lo_a = a[i]
                ia0 = i
            if a[i] > hi_a:
                hi_a = a[i]
                ia1 = i
            if b[i] < lo_b:
                lo_b = b[i]
                ib0 = i
            if b[i] > hi_b:
                hi_b = b[i]
                ib1 = i
            if s < lo_s:
                lo_s = s
                is0 = i
            if s > hi_s:
                hi_s = s
                is1 = i
            if dd < lo_d:
                lo_d = dd
                id0 = i
            if dd > hi_d:
                hi_d = dd
                id1 = i
        # octagon corners in CCW direction order
        corner = np.empty((8, 2))
        order = (ia0, is0, ib0, id1, ia1, is1, ib1, id0)
        for c in range(8):
            corner[c, 0] = a[order[c]]
            corner[c, 1] = b[order[c]]
        keep = np.empty(n, dtype=np.bool_)
        for i in range(n):
            inside = True
            for c in range(8):
                cx, cy = corner[c, 0], corner[c, 1]
                nx, ny = corner[(c + 1) % 8, 0], corner[(c + 1) % 8, 1]
                if (nx - cx) * (b[i] - cy) - (ny - cy) * (a[i] - cx) <= eps:
                    inside = False
                    break
            keep[i] = not inside
        a = a[keep]
        b = b[keep]
        n = len(a)

    # lexicographic sort (by a, ties by b) and exact dedupe
    idx = np.argsort(a, kind="mergesort")
    pa = a[idx]
    pb = b[idx]
    i = 0
    while i < n - 1:  # insertion fix for b within ties of a
        j = i + 1
        while j < n and pa[j] == pa[i]:
            j += 1
        for k in range(i + 1, j):
            key = pb[k]
            m = k - 1
            while m >= i and pb[m] > key:
                pb[m + 1] = pb[m]
                m -= 1
            pb[m + 1] = key
        i = j
    ux = np.empty(n)
    uy = np.empty(n)
    cnt = 0
    for i in range(n):
        if cnt == 0 or pa[i] != ux[cnt - 1] or pb[i] != uy[cnt - 1]:
            ux[cnt] = pa[i]
            uy[cnt] = pb[i]
            cnt += 1
    if cnt == 1:
        out = np.empty((1, 2))
        out[0, 0] = ux[0]
        out[0, 1] = uy[0]
        return out

    # global degeneracy probe relative to the lexicographic minimum
    best = 0.0
    bi = 0
    for i in range(cnt):
        dx = ux[i] - ux[0]
        dy = uy[i] - uy[0]
        dd = dx * dx + dy * dy
        if dd > best:
            best = dd
            bi = i
    span = math.sqrt(best)
    if span <= eps:
        out = np.empty((1, 2))
        out[0, 0] = ux[0]
        out[0, 1] = uy[0]
        return out
    ex = (ux[bi] - ux[0]) / span
    ey = (uy[bi] - uy[0]) / span
    maxperp = 0.0
    tmin = 0.0
    tmax = 0.0
    imin = 0
    imax = 0
    for i in range(cnt):
        dx = ux[i] - ux[0]
        dy = uy[i] - uy[0]
        perp = abs(dx * ey - dy * ex)
        if perp > maxperp:
            maxperp = perp
        t = dx * ex + dy * ey
        if t < tmin:
            tmin = t
            imin = i
        if t > tmax:
            tmax = t
            imax = i
    if maxperp <= eps:
        out = np.empty((2, 2))
        out[0, 0] = ux[imin]
        out[0, 1] = uy[imin]
        out[1, 0] = ux[imax]
        out[1, 1] = uy[imax]
        return out

    # strict Andrew monotone chain
    stack = np.empty(2 * cnt + 1, dtype=np.int64)
    k = 0
    for i in range(cnt):
        while k > 1 and (
            (ux[stack[k - 1]] - ux[stack[k - 2]]) * (uy[i] - uy[stack[k - 2]])
            - (uy[stack[k - 1]] - uy[stack[k - 2]]) * (ux[i] - ux[stack[k - 2]])
        ) <= 0.0:
            k -= 1
        stack[k] = i
        k += 1
    lower = k
    for i in range(cnt - 2, -1, -1):
        while k > lower and (
            (ux[stack[k - 1]] - ux[stack[k - 2]]) * (uy[i] - uy[stack[k - 2]])
            - (uy[stack[k - 1]] - uy[stack[k - 2]]) * (ux[i] - ux[stack[k - 2]])
        ) <= 0.0:
            k -= 1
        stack[k] = i
        k += 1
    m = k - 1  # the final stack entry repeats the first point
    hx = np.empty(m)
    hy = np.empty(m)
    for i in range(m):
        hx[i] = ux[stack[i]]
        hy[i] = uy[stack[i]]

    # drop vertices within eps of the segment between their cycle neighbours
    alive = np.ones(m, dtype=np.bool_)
    n_alive = m
    changed = True
    while changed and n_alive > 2:
        changed = False
        for i in range(m):
            if not alive[i]:
                continue
            p = i - 1
            while not alive[p % m]:
                p -= 1
            q = i + 1
            while not alive[q % m]:
                q += 1
            axp, ayp = hx[p % m], hy[p % m]
            bxp, byp = hx[q % m], hy[q % m]
            dx = bxp - axp
            dy = byp - ayp
            L2 = dx * dx + dy * dy
            if L2 == 0.0:
                dist = math.sqrt((hx[i] - axp) ** 2 + (hy[i] - ayp) ** 2)
            else:
                t = ((hx[i] - axp) * dx + (hy[i] - ayp) * dy) / L2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                px = axp + t * dx
                py = ayp + t * dy
                dist = math.sqrt((hx[i] - px) ** 2 + (hy[i] - py) ** 2)
            if dist <= eps:
                alive[i] = False
                n_alive -= 1
                changed = True
                break
    out = np.empty((n_alive, 2))
    j = 0
    for i in range(m):
        if alive[i]:
            out[j, 0] = hx[i]
            out[j, 1] = hy[i]
            j += 1
    return out


@njit(cache=True)
def _perimeter(v):
    n = len(v)
    if n == 1:
        return 0.0
    total = 0.0
    for i in range(n):
        j = (i + 1) % n
        total += math.sqrt((v[j, 0] - v[i, 0]) ** 2 + (v[j, 1] - v[i, 1]) ** 2)
    return total


@njit(cache=True)
def pair_hulls_compiled(P, d1s, d2s):
    """Hulls and perimeters of P[:, (d1, d2)] for every listed pair.

    Returns (flat vertex array, per-pair offsets, per-pair perimeters); the
    i-th hull is verts[offsets[i]:offsets[i+1]].
    """
    npairs = len(d1s)
    pes = np.empty(npairs)
    offsets = np.empty(npairs + 1, dtype=np.int64)
    offsets[0] = 0
    chunks = []
    for i in range(npairs):
        hull = _hull_points(np.ascontiguousarray(P[:, d1s[i]]), np.ascontiguousarray(P[:, d2s[i]]))
        chunks.append(hull)
        offsets[i + 1] = offsets[i] + len(hull)
        pes[i] = _perimeter(hull)
    verts = np.empty((offsets[npairs], 2))
    for i in range(npairs):
        verts[offsets[i] : offsets[i + 1]] = chunks[i]
    return verts, offsets, pes
