"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

The active backend is chosen at import time: numba when importable, the
numpy path when ``SHARDMATCH_NO_NUMBA`` is set to a non-empty value other
than ``0`` (or when numba is missing). Both paths accumulate reductions in
the same element order, so results are bit-identical across backends.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("SHARDMATCH_NO_NUMBA", "").strip()
_DISABLED = _FLAG not in ("", "0")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

BACKEND = "numba" if (HAVE_NUMBA and not _DISABLED) else "numpy"


# ---------------------------------------------------------------------------
# nearest-neighbour distances between point sets
# ---------------------------------------------------------------------------

def nn_distances_numpy(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-point Euclidean distance and index of the nearest point of b.

    a, b: (n, 2) and (m, 2) float64 arrays, m >= 1.
    """
    d = a[:, None, :] - b[None, :, :]
    sq = d[:, :, 0] * d[:, :, 0] + d[:, :, 1] * d[:, :, 1]
    idx = np.argmin(sq, axis=1)
    dist = np.sqrt(sq[np.arange(a.shape[0]), idx])
    return dist, idx.astype(np.int64)


if HAVE_NUMBA:

    @njit(cache=True)
    def _nn_distances_nb(a, b):
        n = a.shape[0]
        m = b.shape[0]
        dist = np.empty(n, dtype=np.float64)
        idx = np.empty(n, dtype=np.int64)
        for i in range(n):
            best = np.inf
            bj = 0
            for j in range(m):
                dx = a[i, 0] - b[j, 0]
                dy = a[i, 1] - b[j, 1]
                sq = dx * dx + dy * dy
                if sq < best:
                    best = sq
                    bj = j
            dist[i] = np.sqrt(best)
            idx[i] = bj
        return dist, idx

    def nn_distances_numba(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _nn_distances_nb(np.ascontiguousarray(a), np.ascontiguousarray(b))

else:
    nn_distances_numba = None


def sequential_mean(values: np.ndarray) -> float:
    """Mean accumulated strictly left to right (matches a plain python loop)."""
    total = 0.0
    for v in values.tolist():
        total += v
    return total / len(values)


# ---------------------------------------------------------------------------
# strict local extrema of a masked scalar grid
# ---------------------------------------------------------------------------

def local_extrema_numpy(h: np.ndarray, domain: np.ndarray, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Boolean grids of strict local maxima/minima over a Chebyshev window.

    A pixel qualifies only when inside the domain and strictly above (below)
    every other domain pixel within the (2r+1)^2 window.
    """
    rows, cols = h.shape
    is_max = domain.copy()
    is_min = domain.copy()
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dx == 0 and dy == 0:
                continue
            ys0, ys1 = max(0, dy), min(rows, rows + dy)
            xd0, xd1 = max(0, dx), min(cols, cols + dx)
            # center region whose (dy, dx) neighbour exists
            cy0, cy1 = max(0, -dy), min(rows, rows - dy)
            cx0, cx1 = max(0, -dx), min(cols, cols - dx)
            nb_h = h[ys0:ys1, xd0:xd1]
            nb_dom = domain[ys0:ys1, xd0:xd1]
            c_h = h[cy0:cy1, cx0:cx1]
            bad_max = nb_dom & (nb_h >= c_h)
            bad_min = nb_dom & (nb_h <= c_h)
            is_max[cy0:cy1, cx0:cx1] &= ~bad_max
            is_min[cy0:cy1, cx0:cx1] &= ~bad_min
    return is_max, is_min


if HAVE_NUMBA:

    @njit(cache=True)
    def _local_extrema_nb(h, domain, radius):
        rows, cols = h.shape
        is_max = np.zeros((rows, cols), dtype=np.bool_)
        is_min = np.zeros((rows, cols), dtype=np.bool_)
        for y in range(rows):
            for x in range(cols):
                if not domain[y, x]:
                    continue
                v = h[y, x]
                ok_max = True
                ok_min = True
                for ny in range(max(0, y - radius), min(rows, y + radius + 1)):
                    for nx in range(max(0, x - radius), min(cols, x + radius + 1)):
                        if ny == y and nx == x:
                            continue
                        if not domain[ny, nx]:
                            continue
                        w = h[ny, nx]
                        if w >= v:
                            ok_max = False
                        if w <= v:
                            ok_min = False
                    if not (ok_max or ok_min):
                        break
                is_max[y, x] = ok_max
                is_min[y, x] = ok_min
        return is_max, is_min

    def local_extrema_numba(h: np.ndarray, domain: np.ndarray, radius: int) -> tuple[np.ndarray, np.ndarray]:
        return _local_extrema_nb(np.ascontiguousarray(h), np.ascontiguousarray(domain), radius)

else:
    local_extrema_numba = None


# ---------------------------------------------------------------------------
# magnitude-weighted orientation histograms
# ---------------------------------------------------------------------------

def orientation_bins_numpy(
    angles: np.ndarray,
    mags: np.ndarray,
    msin: np.ndarray,
    mcos: np.ndarray,
    valid: np.ndarray,
    cx: int,
    cy: int,
    radius: int,
    nbins: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Raw histogram plus per-bin weighted sin/cos sums for one window.

    angles are atan2 values in (-pi, pi]; binning maps them to [0, 2pi).
    msin/mcos are precomputed mag*sin(angle), mag*cos(angle) grids so both
    backends accumulate identical doubles. Accumulation runs in row-major
    window order. Returns (hist, ssum, csum, n_samples).
    """
    rows, cols = angles.shape
    y0, y1 = max(0, cy - radius), min(rows, cy + radius + 1)
    x0, x1 = max(0, cx - radius), min(cols, cx + radius + 1)
    hist = np.zeros(nbins, dtype=np.float64)
    ssum = np.zeros(nbins, dtype=np.float64)
    csum = np.zeros(nbins, dtype=np.float64)
    sel = valid[y0:y1, x0:x1].ravel()
    a = angles[y0:y1, x0:x1].ravel()[sel]
    if a.size == 0:
        return hist, ssum, csum, 0
    m = mags[y0:y1, x0:x1].ravel()[sel]
    ms = msin[y0:y1, x0:x1].ravel()[sel]
    mc = mcos[y0:y1, x0:x1].ravel()[sel]
    wrapped = np.where(a < 0.0, a + 2.0 * np.pi, a)
    bins = np.minimum((wrapped / (2.0 * np.pi / nbins)).astype(np.int64), nbins - 1)
    np.add.at(hist, bins, m)
    np.add.at(ssum, bins, ms)
    np.add.at(csum, bins, mc)
    return hist, ssum, csum, int(a.size)


if HAVE_NUMBA:

    @njit(cache=True)
    def _orientation_bins_nb(angles, mags, msin, mcos, valid, cx, cy, radius, nbins):
        rows, cols = angles.shape
        y0, y1 = max(0, cy - radius), min(rows, cy + radius + 1)
        x0, x1 = max(0, cx - radius), min(cols, cx + radius + 1)
        hist = np.zeros(nbins, dtype=np.float64)
        ssum = np.zeros(nbins, dtype=np.float64)
        csum = np.zeros(nbins, dtype=np.float64)
        count = 0
        width = 2.0 * np.pi / nbins
        for y in range(y0, y1):
            for x in range(x0, x1):
                if not valid[y, x]:
                    continue
                a = angles[y, x]
                w = a + 2.0 * np.pi if a < 0.0 else a
                b = int(w / width)
                if b > nbins - 1:
                    b = nbins - 1
                hist[b] += mags[y, x]
                ssum[b] += msin[y, x]
                csum[b] += mcos[y, x]
                count += 1
        return hist, ssum, csum, count

    def orientation_bins_numba(angles, mags, msin, mcos, valid, cx, cy, radius, nbins):
        return _orientation_bins_nb(
            np.ascontiguousarray(angles),
            np.ascontiguousarray(mags),
            np.ascontiguousarray(msin),
            np.ascontiguousarray(mcos),
            np.ascontiguousarray(valid),
            cx,
            cy,
            radius,
            nbins,
        )

else:
    orientation_bins_numba = None


# ---------------------------------------------------------------------------
# distance and arc-length position relative to a polyline
# ---------------------------------------------------------------------------

def polyline_field_numpy(segs: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each point, distance to the polyline and arc-length of the foot.

    segs: (k, 5) rows (x0, y0, x1, y1, s0) with s0 the accumulated arc length
    at the segment start. pts: (m, 2). Ties resolve to the first segment.
    """
    p0 = segs[:, 0:2]
    d = segs[:, 2:4] - p0
    seg_len_sq = np.maximum((d * d).sum(-1), 1e-300)
    rel = pts[:, None, :] - p0[None, :, :]
    t = np.clip((rel * d[None, :, :]).sum(-1) / seg_len_sq[None, :], 0.0, 1.0)
    foot = p0[None, :, :] + t[:, :, None] * d[None, :, :]
    diff = pts[:, None, :] - foot
    dist_sq = (diff * diff).sum(-1)
    j = np.argmin(dist_sq, axis=1)
    rows = np.arange(pts.shape[0])
    dist = np.sqrt(dist_sq[rows, j])
    arc = segs[j, 4] + t[rows, j] * np.sqrt(seg_len_sq[j])
    return dist, arc


if HAVE_NUMBA:

    @njit(cache=True)
    def _polyline_field_nb(segs, pts):
        m = pts.shape[0]
        k = segs.shape[0]
        dist = np.empty(m, dtype=np.float64)
        arc = np.empty(m, dtype=np.float64)
        for i in range(m):
            px, py = pts[i, 0], pts[i, 1]
            best = np.inf
            best_arc = 0.0
            for j in range(k):
                x0, y0, x1, y1, s0 = segs[j, 0], segs[j, 1], segs[j, 2], segs[j, 3], segs[j, 4]
                dx, dy = x1 - x0, y1 - y0
                lsq = dx * dx + dy * dy
                if lsq < 1e-300:
                    lsq = 1e-300
                t = ((px - x0) * dx + (py - y0) * dy) / lsq
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                fx = x0 + t * dx
                fy = y0 + t * dy
                dsq = (px - fx) * (px - fx) + (py - fy) * (py - fy)
                if dsq < best:
                    best = dsq
                    best_arc = s0 + t * np.sqrt(lsq)
            dist[i] = np.sqrt(best)
            arc[i] = best_arc
        return dist, arc

    def polyline_field_numba(segs: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _polyline_field_nb(np.ascontiguousarray(segs), np.ascontiguousarray(pts))

else:
    polyline_field_numba = None


# ---------------------------------------------------------------------------
# inverse-mapped bilinear warp of a scalar image
# ---------------------------------------------------------------------------

def warp_bilinear_numpy(img: np.ndarray, inv: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Sample img at inv-mapped output pixel centres with bilinear weights.

    inv is a (2, 3) affine mapping output (x, y, 1) to input (x, y); pixels
    mapping outside the input read as 0.
    """
    rows, cols = out_shape
    xs, ys = np.meshgrid(np.arange(cols, dtype=np.float64), np.arange(rows, dtype=np.float64))
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    h, w = img.shape
    out = np.zeros(out_shape, dtype=np.float64)
    for oy, ox, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        yy = y0 + oy
        xx = x0 + ox
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = np.zeros(out_shape, dtype=np.float64)
        vals[ok] = img[yy[ok], xx[ok]]
        out += wgt * vals
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _warp_bilinear_nb(img, inv, rows, cols):
        h, w = img.shape
        out = np.zeros((rows, cols), dtype=np.float64)
        for y in range(rows):
            for x in range(cols):
                sx = inv[0, 0] * x + inv[0, 1] * y + inv[0, 2]
                sy = inv[1, 0] * x + inv[1, 1] * y + inv[1, 2]
                x0 = int(np.floor(sx))
                y0 = int(np.floor(sy))
                fx = sx - x0
                fy = sy - y0
                acc = 0.0
                for oy in range(2):
                    for ox in range(2):
                        yy = y0 + oy
                        xx = x0 + ox
                        if 0 <= yy < h and 0 <= xx < w:
                            wgt = (fx if ox else 1.0 - fx) * (fy if oy else 1.0 - fy)
                            acc += wgt * img[yy, xx]
                out[y, x] = acc
        return out

    def warp_bilinear_numba(img: np.ndarray, inv: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
        return _warp_bilinear_nb(np.ascontiguousarray(img), np.ascontiguousarray(inv), out_shape[0], out_shape[1])

else:
    warp_bilinear_numba = None


if BACKEND == "numba":
    nn_distances = nn_distances_numba
    local_extrema = local_extrema_numba
    orientation_bins = orientation_bins_numba
    polyline_field = polyline_field_numba
    warp_bilinear = warp_bilinear_numba
else:
    nn_distances = nn_distances_numpy
    local_extrema = local_extrema_numpy
    orientation_bins = orientation_bins_numpy
    polyline_field = polyline_field_numpy
    warp_bilinear = warp_bilinear_numpy
