"""Binary-mask and contour primitives plus the scalar overlap metrics.

Masks are 2D boolean numpy arrays indexed [y, x]; contours are (n, 2) int
arrays of (x, y) pixel coordinates. All metrics are computed in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndi

from . import kernels

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

# Moore neighbourhood in clockwise screen order (x right, y down)
_MOORE = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


class DimensionMismatch(ValueError):
    pass


def _check_mask(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"mask must be a 2D grid, got shape {m.shape}")
    return m.astype(bool, copy=False)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union; two empty masks agree vacuously (1.0)."""
    a, b = _check_mask(a), _check_mask(b)
    _check_same_shape(a, b)
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    inter = int(np.count_nonzero(a & b))
    return inter / union


def tversky_loss(pred: np.ndarray, truth: np.ndarray, alpha: float = 0.7, beta: float = 0.3) -> float:
    """1 - TP / (TP + alpha*FN + beta*FP) over pixel counts."""
    pred, truth = _check_mask(pred), _check_mask(truth)
    _check_same_shape(pred, truth)
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    tp = int(np.count_nonzero(pred & truth))
    fn = int(np.count_nonzero(~pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    denom = tp + alpha * fn + beta * fp
    if denom == 0.0:
        raise ValueError("both masks empty: Tversky undefined (TP+FN+FP = 0)")
    return 1.0 - tp / denom


def chamfer(e1: np.ndarray, e2: np.ndarray, symmetric: bool = False) -> float:
    """Mean nearest-neighbour distance from e1 to e2 in pixels.

    The symmetric variant averages both directions and is the reporting
    flavour; scoring uses the one-sided form.
    """
    e1 = np.asarray(e1, dtype=np.float64).reshape(-1, 2)
    e2 = np.asarray(e2, dtype=np.float64).reshape(-1, 2)
    if e1.shape[0] == 0 or e2.shape[0] == 0:
        raise ValueError("chamfer requires nonempty contours")
    d12, _ = kernels.nn_distances(e1, e2)
    m12 = kernels.sequential_mean(d12)
    if not symmetric:
        return m12
    d21, _ = kernels.nn_distances(e2, e1)
    return 0.5 * (m12 + kernels.sequential_mean(d21))


def centroid(mask: np.ndarray) -> tuple[float, float]:
    """Mean (x, y) of foreground pixel coordinates."""
    mask = _check_mask(mask)
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise ValueError("centroid of an empty mask")
    return float(xs.mean()), float(ys.mean())


def _trace_boundary(component: np.ndarray) -> np.ndarray:
    """Moore-neighbour trace of one 4-connected component, clockwise on
    screen, starting at the topmost-then-leftmost pixel."""
    ys, xs = np.nonzero(component)
    order = np.lexsort((xs, ys))
    sx, sy = int(xs[order[0]]), int(ys[order[0]])
    h, w = component.shape

    def fg(x: int, y: int) -> bool:
        return 0 <= x < w and 0 <= y < h and bool(component[y, x])

    trace = [(sx, sy)]
    # enter the start as if coming from its (background) west neighbour
    back = 4  # index of (-1, 0) in _MOORE
    cx, cy = sx, sy
    seen_states = {(cx, cy, back)}
    while True:
        found = -1
        for k in range(1, 9):
            d = (back + k) % 8
            nx, ny = cx + _MOORE[d][0], cy + _MOORE[d][1]
            if fg(nx, ny):
                found = d
                break
        if found < 0:
            break  # isolated pixel
        cx, cy = cx + _MOORE[found][0], cy + _MOORE[found][1]
        back = (found + 4) % 8
        state = (cx, cy, back)
        if state in seen_states:
            break  # walk is deterministic: a repeated state closes the loop
        seen_states.add(state)
        trace.append((cx, cy))
        if len(trace) > 8 * component.size:
            raise RuntimeError("boundary trace failed to terminate")
    # drop revisits (out-and-back spurs) while keeping first-visit order
    seen: set[tuple[int, int]] = set()
    pts = []
    for p in trace:
        if p not in seen:
            seen.add(p)
            pts.append(p)
    return np.array(pts, dtype=np.int64)


def extract_contours(mask: np.ndarray) -> list[np.ndarray]:
    """One clockwise boundary contour per 4-connected component, largest
    area first (ties keep label scan order)."""
    mask = _check_mask(mask)
    labels, n = ndi.label(mask, structure=FOUR_CONN)
    if n == 0:
        return []
    areas = ndi.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
    order = np.argsort(-areas, kind="stable")
    out = []
    for k in order:
        out.append(_trace_boundary(labels == k + 1))
    return out


def largest_component(mask: np.ndarray) -> np.ndarray:
    """Keep only the largest 4-connected component (empty mask passes through)."""
    mask = _check_mask(mask)
    labels, n = ndi.label(mask, structure=FOUR_CONN)
    if n <= 1:
        return mask.copy()
    areas = ndi.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
    return labels == int(np.argmax(areas)) + 1


def longest_chord(contour: np.ndarray) -> tuple[tuple[int, int], tuple[int, int]]:
    """Point pair at maximum separation; ties pick the lexicographically
    smallest canonical pair."""
    pts = np.asarray(contour).reshape(-1, 2)
    if pts.shape[0] < 2:
        raise ValueError("longest chord needs at least 2 points")
    d = pts[:, None, :].astype(np.float64) - pts[None, :, :].astype(np.float64)
    sq = d[:, :, 0] ** 2 + d[:, :, 1] ** 2
    best = sq.max()
    ii, jj = np.nonzero(sq == best)
    pairs = []
    for i, j in zip(ii.tolist(), jj.tolist()):
        if i == j:
            continue
        p = (int(pts[i, 0]), int(pts[i, 1]))
        q = (int(pts[j, 0]), int(pts[j, 1]))
        pairs.append((p, q) if p <= q else (q, p))
    return min(pairs)


@dataclass
class MetricReport:
    iou: float
    chamfer_px: float
    tversky_loss: float

    def csv_row(self, pair_id: str) -> str:
        return f"{pair_id},{self.iou:.6f},{self.chamfer_px:.6f},{self.tversky_loss:.6f}"


def metric_report(pred: np.ndarray, truth: np.ndarray) -> MetricReport:
    """IoU, symmetric chamfer between boundary contours, and Tversky loss."""
    c_pred = extract_contours(pred)
    c_truth = extract_contours(truth)
    if not c_pred or not c_truth:
        ch = float("inf")
    else:
        ch = chamfer(np.vstack(c_pred), np.vstack(c_truth), symmetric=True)
    return MetricReport(iou=iou(pred, truth), chamfer_px=ch, tversky_loss=tversky_loss(pred, truth))
