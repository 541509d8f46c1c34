"""Vision-only alignment of a detached fragment into a gap mask: area-ratio
rescale, centroid registration, and a 1-degree rotation sweep scored by a
weighted IoU/chamfer combination."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .raster import centroid, chamfer, extract_contours, iou
from .transform import RigidTransform2D


class AreaRatioError(ValueError):
    """Fragment/gap areas differ beyond the rescale clamp; the segmentation
    upstream is suspect."""


@dataclass
class PartialParams:
    w_iou: float = 0.7
    w_chamfer: float = 0.3
    kappa: float = 10.0  # px
    step_deg: float = 1.0
    scale_clamp: tuple[float, float] = (0.8, 1.25)
    include_mirror: bool = False

    def __post_init__(self) -> None:
        if abs(self.w_iou + self.w_chamfer - 1.0) > 1e-12:
            raise ValueError("w_iou + w_chamfer must equal 1")
        if self.kappa <= 0 or self.step_deg <= 0:
            raise ValueError("kappa and step_deg must be positive")

    def to_dict(self) -> dict:
        return {
            "w_iou": self.w_iou,
            "w_chamfer": self.w_chamfer,
            "kappa": self.kappa,
            "step_deg": self.step_deg,
            "scale_clamp": list(self.scale_clamp),
            "include_mirror": self.include_mirror,
        }


@dataclass
class GapAlignment:
    transform: RigidTransform2D
    iou: float
    chamfer_px: float
    combined: float
    scale: float


def _warp_fragment(
    frag01: np.ndarray,
    scale: float,
    mirror: bool,
    theta: float,
    src_c: tuple[float, float],
    dst_c: tuple[float, float],
    out_shape: tuple[int, int],
) -> np.ndarray:
    """Mirror/scale/rotate the fragment about its centroid and drop it with
    its centroid on the gap centroid; bilinear, re-thresholded at 0.5."""
    c, s = math.cos(-theta), math.sin(-theta)
    sign = -1.0 if mirror else 1.0
    inv = np.empty((2, 3), dtype=np.float64)
    # output pixel -> subtract dst centre, rotate back, unscale, unmirror, add src centre
    a00 = sign * c / scale
    a01 = -sign * s / scale
    a10 = s / scale
    a11 = c / scale
    inv[0] = (a00, a01, src_c[0] - a00 * dst_c[0] - a01 * dst_c[1])
    inv[1] = (a10, a11, src_c[1] - a10 * dst_c[0] - a11 * dst_c[1])
    return kernels.warp_bilinear(frag01, inv, out_shape) > 0.5


def _sweep(fragment: np.ndarray, gap: np.ndarray, params: PartialParams):
    frag = np.asarray(fragment, dtype=bool)
    gap = np.asarray(gap, dtype=bool)
    area_f, area_g = int(frag.sum()), int(gap.sum())
    if area_f == 0 or area_g == 0:
        raise ValueError("fragment and gap masks must be nonempty")
    scale = math.sqrt(area_g / area_f)
    lo, hi = params.scale_clamp
    if not lo <= scale <= hi:
        raise AreaRatioError(
            f"area-ratio rescale {scale:.3f} outside clamp [{lo}, {hi}]"
        )
    src_c = centroid(frag)
    dst_c = centroid(gap)
    gap_edge = np.vstack(extract_contours(gap)).astype(np.float64)
    frag_edge = np.vstack(extract_contours(frag)).astype(np.float64)
    frag01 = frag.astype(np.float64)
    exact_identity = (
        abs(scale - 1.0) < 1e-12
        and abs(src_c[0] - round(src_c[0]) - (dst_c[0] - round(dst_c[0]))) < 1e-9
        and abs(src_c[1] - round(src_c[1]) - (dst_c[1] - round(dst_c[1]))) < 1e-9
        and frag.shape == gap.shape
    )
    mirrors = (False, True) if params.include_mirror else (False,)
    n_steps = int(round(360.0 / params.step_deg))
    rows = []
    for mirror in mirrors:
        for k in range(n_steps):
            theta = math.radians(k * params.step_deg)
            if k == 0 and not mirror and exact_identity:
                dx, dy = int(round(dst_c[0] - src_c[0])), int(round(dst_c[1] - src_c[1]))
                placed = np.zeros_like(frag)
                ys, xs = np.nonzero(frag)
                ys2, xs2 = ys + dy, xs + dx
                ok = (ys2 >= 0) & (ys2 < gap.shape[0]) & (xs2 >= 0) & (xs2 < gap.shape[1])
                placed[ys2[ok], xs2[ok]] = True
            else:
                placed = _warp_fragment(frag01, scale, mirror, theta, src_c, dst_c, gap.shape)
            iou_v = iou(placed, gap)
            # the fragment outline transforms analytically; re-tracing the
            # warped mask per angle would only add rasterisation noise
            moved = _move_points(frag_edge, scale, mirror, theta, src_c, dst_c)
            ch = chamfer(moved, gap_edge, symmetric=True)
            combined = params.w_iou * iou_v + params.w_chamfer * math.exp(-ch / params.kappa)
            t = RigidTransform2D(mirror, theta, dst_c[0] - src_c[0], dst_c[1] - src_c[1])
            rows.append((t, iou_v, ch, combined))
    return rows, scale


def _move_points(
    pts: np.ndarray, scale: float, mirror: bool, theta: float,
    src_c: tuple[float, float], dst_c: tuple[float, float],
) -> np.ndarray:
    rel = pts - np.asarray(src_c)
    if mirror:
        rel = rel * (-1.0, 1.0)
    c, s = math.cos(theta), math.sin(theta)
    out = np.empty_like(rel)
    out[:, 0] = scale * (c * rel[:, 0] - s * rel[:, 1]) + dst_c[0]
    out[:, 1] = scale * (s * rel[:, 0] + c * rel[:, 1]) + dst_c[1]
    return out


def sweep_profile(fragment: np.ndarray, gap: np.ndarray, params: PartialParams | None = None) -> list[dict]:
    """Full per-angle diagnostic table: theta_deg, iou, chamfer_px, combined."""
    p = params or PartialParams()
    rows, _ = _sweep(fragment, gap, p)
    return [
        {
            "theta_deg": math.degrees(t.theta),
            "mirror": t.mirror,
            "iou": iou_v,
            "chamfer_px": ch,
            "combined": combined,
        }
        for t, iou_v, ch, combined in rows
    ]


def align_gap(fragment: np.ndarray, gap: np.ndarray, params: PartialParams | None = None) -> GapAlignment:
    """Best alignment over the sweep; ties resolve to the smallest rotation
    (mirror-off first)."""
    p = params or PartialParams()
    rows, scale = _sweep(fragment, gap, p)
    best = max(rows, key=lambda r: (r[3], -r[0].theta, not r[0].mirror))
    t, iou_v, ch, combined = best
    return GapAlignment(transform=t, iou=iou_v, chamfer_px=ch, combined=combined, scale=scale)
