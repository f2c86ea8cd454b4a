"""Compiled per-pixel kernels behind envlight and render.

The pure-numpy paths in :mod:`panorelight.envlight` define the semantics; the
kernels here must reproduce them bit-for-bit (tests compare the two).
"""

import math
import os

import numba
import numpy as np

from .equirect import check_dims

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the system TBB is too old for numba; OpenMP is present everywhere we ship
    numba.config.THREADING_LAYER = "omp"


def set_threads(n):
    """Cap the parallelism of the compiled kernels (``None`` leaves the default)."""
    if n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


@numba.njit(cache=True)
def _row_neighbors(filled):
    """Nearest filled column to the left/right of every pixel, per row, with wrap.

    Returns ``(left, right)`` column indices, -1 where the row has nothing.
    """
    h, w = filled.shape
    left = np.full((h, w), -1, np.int64)
    right = np.full((h, w), -1, np.int64)
    for v in range(h):
        last = -1
        for k in range(2 * w):
            u = k % w
            if filled[v, u]:
                last = u
            if k >= w:
                left[v, u] = last
        last = -1
        for k in range(2 * w - 1, -1, -1):
            u = k % w
            if filled[v, u]:
                last = u
            if k < w:
                right[v, u] = last
    return left, right


@numba.njit(cache=True)
def _nearest_for_pixel(v, u, w, h, left, right, cos_t, sin_t, cos_du, cos_dv):
    best_cos = -2.0
    best = -1
    for r in range(h):
        if cos_dv[r] < best_cos:
            break
        for side in range(2):
            if side == 1 and r == 0:
                break
            vv = v - r if side == 0 else v + r
            if vv < 0 or vv >= h:
                continue
            for cand in (left[vv, u], right[vv, u]):
                if cand < 0:
                    continue
                du = abs(cand - u)
                if du > w - du:
                    du = w - du
                c = cos_t[v] * cos_t[vv] + sin_t[v] * sin_t[vv] * cos_du[du]
                idx = vv * w + cand
                if c > best_cos or (c == best_cos and idx < best):
                    best_cos = c
                    best = idx
    return best


@numba.njit(cache=True)
def _nearest_filled(filled, cos_t, sin_t, cos_du, cos_dv):
    h, w = filled.shape
    left, right = _row_neighbors(filled)
    out = np.empty(h * w, np.int64)
    for v in range(h):
        for u in range(w):
            if filled[v, u]:
                out[v * w + u] = v * w + u
            else:
                out[v * w + u] = _nearest_for_pixel(
                    v, u, w, h, left, right, cos_t, sin_t, cos_du, cos_dv
                )
    return out


def grid_tables(dims):
    h, w = check_dims(dims)
    theta = np.pi * (np.arange(h) + 0.5) / h
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    # azimuth difference in columns, 0..w
    cos_du = np.cos(2.0 * np.pi * np.arange(w + 1) / w)
    cos_dv = np.cos(np.minimum(np.pi * np.arange(h + 1) / h, np.pi))
    return cos_t, sin_t, cos_du, cos_dv


def nearest_filled(filled):
    """Flat index of the angularly nearest ``True`` pixel, for every pixel.

    Ties go to the lowest flat index. Requires at least one filled pixel.
    """
    filled = np.ascontiguousarray(filled, dtype=np.bool_)
    tables = grid_tables(filled.shape)
    return _nearest_filled(filled, *tables).reshape(filled.shape)


@numba.njit(cache=True, fastmath=False)
def _splat_pixel(dx, dy, dz, h, w):
    theta = math.atan2(math.hypot(dx, dz), dy)
    phi = math.atan2(dz, dx)
    u = (phi * (w / (2.0 * math.pi)) - 0.5) % w
    if u >= w:
        u -= w
    v = theta * (h / math.pi) - 0.5
    if v < 0.0:
        v = 0.0
    elif v > h - 1.0:
        v = h - 1.0
    ui = int(math.floor(u + 0.5)) % w
    vi = int(math.floor(v + 0.5))
    if vi > h - 1:
        vi = h - 1
    return vi * w + ui


@numba.njit(cache=True)
def _zbuffer(positions, query, h, w, eps_near, tol, dirs):
    """One light per pixel: returns (source index or -1, nearest distance).

    ``tol == 0``: strict nearest (ties to the lowest index). ``tol > 0``: among
    lights within ``(1 + tol)`` of the nearest, the one best aligned with the
    pixel center.
    """
    n = positions.shape[0]
    src = np.full(h * w, -1, np.int64)
    zbuf = np.full(h * w, np.inf)
    pix = np.empty(n, np.int64)
    dists = np.empty(n)
    for i in range(n):
        dx = positions[i, 0] - query[0]
        dy = positions[i, 1] - query[1]
        dz = positions[i, 2] - query[2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        dists[i] = dist
        if dist < eps_near:
            pix[i] = -1
            continue
        p = _splat_pixel(dx / dist, dy / dist, dz / dist, h, w)
        pix[i] = p
        if dist < zbuf[p]:
            zbuf[p] = dist
            src[p] = i
    if tol <= 0.0:
        return src, zbuf
    best = np.full(h * w, -2.0)
    for i in range(n):
        p = pix[i]
        if p < 0:
            continue
        dist = dists[i]
        if dist > zbuf[p] * (1.0 + tol):
            continue
        ux = (positions[i, 0] - query[0]) / dist
        uy = (positions[i, 1] - query[1]) / dist
        uz = (positions[i, 2] - query[2]) / dist
        a = dirs[p, 0] * ux + dirs[p, 1] * uy + dirs[p, 2] * uz
        if a > best[p]:
            best[p] = a
            src[p] = i
    return src, zbuf


def zbuffer(positions, query, dims, eps_near, depth_tolerance=0.0):
    from .equirect import direction_grid

    h, w = check_dims(dims)
    return _zbuffer(
        np.ascontiguousarray(positions, dtype=np.float64),
        np.asarray(query, dtype=np.float64),
        h,
        w,
        float(eps_near),
        float(depth_tolerance),
        np.ascontiguousarray(direction_grid((h, w)).reshape(-1, 3)),
    )


@numba.njit(cache=True, parallel=True)
def _shade_queries(positions, intensities, queries, normals, h, w, eps_near, tol,
                   weights, dirs, cos_t, sin_t, cos_du, cos_dv):
    q_count = queries.shape[0]
    out = np.zeros((q_count, 3))
    for q in numba.prange(q_count):
        src, _ = _zbuffer(positions, queries[q], h, w, eps_near, tol, dirs)
        filled = np.empty((h, w), np.bool_)
        any_filled = False
        for p in range(h * w):
            filled[p // w, p % w] = src[p] >= 0
            if src[p] >= 0:
                any_filled = True
        if not any_filled:
            out[q, 0] = np.nan
            continue
        left, right = _row_neighbors(filled)
        nx = normals[q, 0]
        ny = normals[q, 1]
        nz = normals[q, 2]
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        for v in range(h):
            wt = weights[v]
            for u in range(w):
                p = v * w + u
                c = dirs[p, 0] * nx + dirs[p, 1] * ny + dirs[p, 2] * nz
                if c <= 0.0:
                    continue
                j = src[p]
                if j < 0:
                    j = src[_nearest_for_pixel(v, u, w, h, left, right,
                                               cos_t, sin_t, cos_du, cos_dv)]
                f = c * wt
                acc0 += intensities[j, 0] * f
                acc1 += intensities[j, 1] * f
                acc2 += intensities[j, 2] * f
        out[q, 0] = acc0
        out[q, 1] = acc1
        out[q, 2] = acc2
    return out


def shade_queries(positions, intensities, queries, normals, dims, eps_near, row_weights,
                  depth_tolerance=0.0):
    """Eq.-9 shading for many query points at once (one illumination map each).

    Rows with no splat at all come back as NaN in channel 0.
    """
    from .equirect import direction_grid

    h, w = check_dims(dims)
    dirs = np.ascontiguousarray(direction_grid((h, w)).reshape(-1, 3))
    return _shade_queries(
        np.ascontiguousarray(positions, dtype=np.float64),
        np.ascontiguousarray(intensities, dtype=np.float64),
        np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3),
        np.ascontiguousarray(normals, dtype=np.float64).reshape(-1, 3),
        h,
        w,
        float(eps_near),
        float(depth_tolerance),
        np.ascontiguousarray(row_weights, dtype=np.float64),
        dirs,
        *grid_tables((h, w)),
    )
