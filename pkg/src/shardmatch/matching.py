"""Pairwise fracture-edge matching: candidate rigid transforms from a
mirror/rotation sweep with centroid-aligned translation, scored by the fused
edge-chamfer, gradient-histogram and height-extrema metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .synth import SAMPLE_CENTER
from .tactile import ExtremaSet, GradientField, HeightMap
from .transform import RigidTransform2D, angle_diff

TWO_PI = 2.0 * math.pi


@dataclass
class MatchParams:
    sigma_phi: float = 0.35  # radians
    sigma_h: float = 0.5
    delta: float = 10.0  # px
    alpha_height: float = 0.6
    weights: tuple[float, float, float] = (0.4, 0.3, 0.3)
    hist_bins: int = 16
    window: int = 8  # px radius around each boundary sample
    sweep_step_deg: float = 2.0
    chamfer_scale: float = 1.0  # px
    mirror_mode: str = "both"  # "both" | "on" | "off"
    coarse_stride: int = 2  # contour subsampling during the coarse sweep
    refine_basins: int = 2

    def __post_init__(self) -> None:
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {self.weights}")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        for name in ("sigma_phi", "sigma_h", "delta", "chamfer_scale", "sweep_step_deg"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.alpha_height <= 1.0:
            raise ValueError("alpha_height must lie in [0, 1]")
        if self.mirror_mode not in ("both", "on", "off"):
            raise ValueError("mirror_mode must be both, on or off")

    def to_dict(self) -> dict:
        return {
            "sigma_phi": self.sigma_phi,
            "sigma_h": self.sigma_h,
            "delta": self.delta,
            "alpha_height": self.alpha_height,
            "weights": list(self.weights),
            "hist_bins": self.hist_bins,
            "window": self.window,
            "sweep_step_deg": self.sweep_step_deg,
            "chamfer_scale": self.chamfer_scale,
            "mirror_mode": self.mirror_mode,
            "coarse_stride": self.coarse_stride,
            "refine_basins": self.refine_basins,
        }


@dataclass
class ScoreBreakdown:
    edge: float
    gradient: float
    height: float
    fused: float
    transform: RigidTransform2D
    diagnostics: dict = field(default_factory=dict)


@dataclass
class TactileProfile:
    """Reconstructed tactile view of one fracture-edge press."""

    contour: np.ndarray  # (n, 2) int pixel coords in the sample window
    grads: GradientField
    height: HeightMap
    extrema: ExtremaSet
    center: tuple[float, float] = (SAMPLE_CENTER, SAMPLE_CENTER)
    _table: "_ScoreTable | None" = field(default=None, repr=False, compare=False)


@dataclass
class FragmentView:
    """A fragment as the matcher sees it: one profile per sampled edge."""

    id: str
    profiles: list[TactileProfile]
    material: str = "glass"


class _ScoreTable:
    """Per-profile precomputation shared by all

    candidate evaluations: centred contour points, per-point orientation
    histograms and dominant angles, centred extrema."""

    def __init__(self, profile: TactileProfile, params: MatchParams):
        cx, cy = profile.center
        self.pts = profile.contour.astype(np.float64) - (cx, cy)
        g = profile.grads
        angles = np.arctan2(g.gy, g.gx)
        mags = np.hypot(g.gx, g.gy)
        msin = mags * np.sin(angles)
        mcos = mags * np.cos(angles)
        nb = params.hist_bins
        n = profile.contour.shape[0]
        self.hists = np.zeros((n, nb), dtype=np.float64)
        self.phis = np.zeros(n, dtype=np.float64)
        self.valid = np.zeros(n, dtype=bool)
        for i, (px, py) in enumerate(profile.contour):
            hist, ssum, csum, count = kernels.orientation_bins(
                angles, mags, msin, mcos, g.domain, int(px), int(py), params.window, nb
            )
            norm = math.sqrt(float(np.dot(hist, hist)))
            if count == 0 or norm <= 0.0:
                continue
            self.hists[i] = hist / norm
            b = int(np.argmax(hist))
            self.phis[i] = math.atan2(ssum[b], csum[b]) % TWO_PI
            self.valid[i] = True
        self.maxima = profile.extrema.max_points() - (cx, cy)
        self.minima = profile.extrema.min_points() - (cx, cy)
        self.height_range = profile.extrema.height_range
        self.centroid = self.pts.mean(axis=0)


def _table(profile: TactileProfile, params: MatchParams) -> _ScoreTable:
    if profile._table is None:
        profile._table = _ScoreTable(profile, params)
    return profile._table


def edge_score(e1: np.ndarray, e2: np.ndarray, t: RigidTransform2D, scale: float = 1.0) -> float:
    """exp(-mean nearest distance from e1 to t(e2) / scale)."""
    e1 = np.asarray(e1, dtype=np.float64).reshape(-1, 2)
    e2 = np.asarray(e2, dtype=np.float64).reshape(-1, 2)
    if e1.shape[0] == 0 or e2.shape[0] == 0:
        raise ValueError("edge_score requires nonempty contours")
    d, _ = kernels.nn_distances(e1, t.apply(e2))
    return math.exp(-kernels.sequential_mean(d) / scale)


def orientation_histogram(
    g: GradientField, center: tuple[int, int], window: int, nbins: int = 16
) -> tuple[np.ndarray, float]:
    """Magnitude-weighted 16-bin orientation histogram (L2-normalised) and
    the circular-mean dominant angle of the strongest bin."""
    angles = np.arctan2(g.gy, g.gx)
    mags = np.hypot(g.gx, g.gy)
    msin = mags * np.sin(angles)
    mcos = mags * np.cos(angles)
    hist, ssum, csum, count = kernels.orientation_bins(
        angles, mags, msin, mcos, g.domain, int(center[0]), int(center[1]), int(window), nbins
    )
    norm = math.sqrt(float(np.dot(hist, hist)))
    if count == 0 or norm <= 0.0:
        raise ValueError("histogram window does not intersect the gradient domain")
    b = int(np.argmax(hist))
    phi = math.atan2(ssum[b], csum[b]) % TWO_PI
    return hist / norm, phi


def local_grad_score(
    h1: np.ndarray, phi1: float, h2: np.ndarray, phi2: float, params: MatchParams | None = None
) -> float:
    """exp(-|dphi|/sigma_phi - ||h1-h2||_2/sigma_h) with circular dphi."""
    p = params or MatchParams()
    dphi = angle_diff(phi1, phi2)
    dh = float(np.linalg.norm(np.asarray(h1) - np.asarray(h2)))
    return math.exp(-dphi / p.sigma_phi - dh / p.sigma_h)


def transform_histograms(hists: np.ndarray, phis: np.ndarray, t: RigidTransform2D, nbins: int) -> tuple[np.ndarray, np.ndarray]:
    """Re-express orientation histograms and dominant angles in the target
    frame of a candidate transform (mirror reflects angles about the vertical
    axis, rotation shifts them)."""
    h = hists
    phi = phis.copy()
    if t.mirror:
        # angle phi maps to pi - phi; with bins spanning 2pi/n and n even the
        # reflection is an exact index remap
        idx = (nbins // 2 - 1 - np.arange(nbins)) % nbins
        out = np.zeros_like(h)
        out[:, idx] = h
        h = out
        phi = (math.pi - phi) % TWO_PI
    # exact circular shift by a real number of bins via the FFT phase ramp;
    # linear interpolation would smooth by an amount that depends on the
    # fractional shift and bias the score toward integer-bin rotations
    shift = t.theta / (TWO_PI / nbins)
    spec = np.fft.rfft(h, axis=1)
    k = np.arange(spec.shape[1])
    spec *= np.exp(2.0j * np.pi * k * shift / nbins)[None, :]
    h = np.fft.irfft(spec, n=nbins, axis=1)
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    h = np.divide(h, norms, out=np.zeros_like(h), where=norms > 0)
    phi = (phi + t.theta) % TWO_PI
    return h, phi


def region_grad_score(
    frag1: TactileProfile, frag2: TactileProfile, t: RigidTransform2D, params: MatchParams | None = None
) -> tuple[float, dict]:
    """Mean local gradient score over e1 boundary samples paired with their
    nearest neighbours on t(e2); invalid windows are skipped."""
    p = params or MatchParams()
    t1, t2 = _table(frag1, p), _table(frag2, p)
    score, used, skipped = _grad_component(t1, t2, t, p, stride=1)
    if used == 0:
        raise ValueError("no usable boundary samples for the gradient score")
    return score, {"used": used, "skipped": skipped}


def _grad_component(
    t1: _ScoreTable, t2: _ScoreTable, t: RigidTransform2D, params: MatchParams, stride: int,
    idx: np.ndarray | None = None,
) -> tuple[float, int, int]:
    sel = np.arange(0, t1.pts.shape[0], stride)
    if idx is None:
        _, idx = kernels.nn_distances(t1.pts[sel], t.apply(t2.pts))
    h2, phi2 = transform_histograms(t2.hists[idx], t2.phis[idx], t, params.hist_bins)
    ok = t1.valid[sel] & t2.valid[idx]
    used = int(ok.sum())
    if used == 0:
        return 0.0, 0, int(sel.size)
    dphi = np.abs(t1.phis[sel][ok] - phi2[ok]) % TWO_PI
    dphi = np.minimum(dphi, TWO_PI - dphi)
    dh = np.linalg.norm(t1.hists[sel][ok] - h2[ok], axis=1)
    vals = np.exp(-dphi / params.sigma_phi - dh / params.sigma_h)
    return float(vals.sum() / used), used, int(sel.size - used)


def height_score(
    x1: ExtremaSet, x2: ExtremaSet, t: RigidTransform2D, params: MatchParams | None = None,
    center: tuple[float, float] = (0.0, 0.0),
) -> tuple[float, dict]:
    """alpha/(1 + d/delta) + (1-alpha)*rho with d the best peak-to-trough
    pairing across the transform and rho the height-range ratio."""
    p = params or MatchParams()
    r1, r2 = x1.height_range, x2.height_range
    if r1 <= 0 or r2 <= 0:
        raise ValueError("height ranges must be positive")
    c = np.asarray(center, dtype=np.float64)
    d = math.inf
    for a_pts, b_pts in ((x1.max_points() - c, x2.min_points() - c), (x1.min_points() - c, x2.max_points() - c)):
        if a_pts.shape[0] == 0 or b_pts.shape[0] == 0:
            continue
        bt = t.apply(b_pts)
        dist = np.sqrt(((a_pts[:, None, :] - bt[None, :, :]) ** 2).sum(-1))
        d = min(d, float(dist.min()))
    rho = min(r1, r2) / max(r1, r2)
    diagnostics = {"d": None if math.isinf(d) else d, "rho": rho, "no_pairing": math.isinf(d)}
    d_term = 0.0 if math.isinf(d) else p.alpha_height / (1.0 + d / p.delta)
    return d_term + (1.0 - p.alpha_height) * rho, diagnostics


def fuse(edge: float, grad: float, height: float, weights: tuple[float, float, float] = (0.4, 0.3, 0.3)) -> float:
    if abs(sum(weights) - 1.0) > 1e-12 or any(w < 0 for w in weights):
        raise ValueError(f"weights must be nonnegative and sum to 1, got {weights}")
    return weights[0] * edge + weights[1] * grad + weights[2] * height


def _score_candidate(
    t1: _ScoreTable, t2: _ScoreTable, t: RigidTransform2D, params: MatchParams, stride: int
) -> ScoreBreakdown:
    sel = np.arange(0, t1.pts.shape[0], stride)
    e2t = t.apply(t2.pts)
    dists, idx = kernels.nn_distances(t1.pts[sel], e2t)
    s_edge = math.exp(-kernels.sequential_mean(dists) / params.chamfer_scale)
    s_grad, used, skipped = _grad_component(t1, t2, t, params, stride, idx=idx)
    # extrema are already centred in the tables
    d = math.inf
    for a_pts, b_pts in ((t1.maxima, t2.minima), (t1.minima, t2.maxima)):
        if a_pts.shape[0] == 0 or b_pts.shape[0] == 0:
            continue
        bt = t.apply(b_pts)
        dist = np.sqrt(((a_pts[:, None, :] - bt[None, :, :]) ** 2).sum(-1))
        d = min(d, float(dist.min()))
    rho = min(t1.height_range, t2.height_range) / max(t1.height_range, t2.height_range)
    d_term = 0.0 if math.isinf(d) else params.alpha_height / (1.0 + d / params.delta)
    s_height = d_term + (1.0 - params.alpha_height) * rho
    fused = fuse(s_edge, s_grad, s_height, params.weights)
    return ScoreBreakdown(
        edge=s_edge,
        gradient=s_grad,
        height=s_height,
        fused=fused,
        transform=t,
        diagnostics={
            "d": None if math.isinf(d) else d,
            "rho": rho,
            "grad_samples": used,
            "grad_skipped": skipped,
            "stride": stride,
        },
    )


def _centroid_aligned(t1: _ScoreTable, t2: _ScoreTable, mirror: bool, theta: float) -> RigidTransform2D:
    bare = RigidTransform2D(mirror, theta, 0.0, 0.0)
    moved = bare.apply(t2.centroid[None, :])[0]
    return RigidTransform2D(mirror, theta, float(t1.centroid[0] - moved[0]), float(t1.centroid[1] - moved[1]))


def _nudge_translation(
    t1: _ScoreTable, t2: _ScoreTable, t: RigidTransform2D, stride: int, rounds: int = 2
) -> RigidTransform2D:
    """Correct the centroid translation by the mean nearest-neighbour offset.

    Contact masks of mating presses differ slightly (the relief flips sign
    between sides), which biases contour centroids by a few pixels; a
    translation-only correspondence step removes that bias. Rotation is never
    touched here, the fine sweep owns it.
    """
    sel = np.arange(0, t1.pts.shape[0], stride)
    pts1 = t1.pts[sel]
    for _ in range(rounds):
        moved = t.apply(t2.pts)
        _, idx = kernels.nn_distances(pts1, moved)
        delta = pts1 - moved[idx]
        t = RigidTransform2D(t.mirror, t.theta, t.tx + float(delta[:, 0].mean()), t.ty + float(delta[:, 1].mean()))
    return t


def search_transform(
    frag1: TactileProfile, frag2: TactileProfile, params: MatchParams | None = None
) -> list[ScoreBreakdown]:
    """Coarse mirror/rotation sweep with centroid-aligned translation, then a
    fine sweep (step/8) around the best basins; all candidates fused-scored
    and ranked with a deterministic tie-break."""
    p = params or MatchParams()
    t1, t2 = _table(frag1, p), _table(frag2, p)
    if t1.pts.shape[0] == 0 or t2.pts.shape[0] == 0:
        raise ValueError("profiles must carry nonempty contours")
    mirrors = {"both": (False, True), "on": (True,), "off": (False,)}[p.mirror_mode]
    step = math.radians(p.sweep_step_deg)
    n_coarse = int(round(TWO_PI / step))
    stride = max(1, p.coarse_stride)
    results: dict[tuple[bool, float], ScoreBreakdown] = {}
    coarse: list[ScoreBreakdown] = []
    for mirror in mirrors:
        for k in range(n_coarse):
            t = _centroid_aligned(t1, t2, mirror, k * step)
            sb = _score_candidate(t1, t2, t, p, stride=stride)
            coarse.append(sb)
            results[(mirror, t.theta)] = sb
    coarse.sort(key=lambda sb: (-sb.fused, sb.transform.theta, sb.transform.tx, sb.transform.ty))
    # translation-correct the leading coarse candidates before picking basins
    corrected = []
    for sb in coarse[: max(8, 4 * p.refine_basins)]:
        t = _nudge_translation(t1, t2, sb.transform, stride)
        corrected.append(_score_candidate(t1, t2, t, p, stride=stride))
    corrected.sort(key=lambda sb: (-sb.fused, sb.transform.theta, sb.transform.tx, sb.transform.ty))
    basins: list[ScoreBreakdown] = []
    for sb in corrected:
        if len(basins) >= p.refine_basins:
            break
        if all(
            b.transform.mirror != sb.transform.mirror
            or angle_diff(b.transform.theta, sb.transform.theta) > 2.0 * step + 1e-9
            for b in basins
        ):
            basins.append(sb)
    fine_step = step / 8.0
    for sb in basins:
        base_theta = sb.transform.theta
        # lock the translation at the basin centre so the fine sweep cannot
        # trade rotation error against translation
        anchor = _nudge_translation(t1, t2, _centroid_aligned(t1, t2, sb.transform.mirror, base_theta), stride=1)
        moved = RigidTransform2D(anchor.mirror, anchor.theta, 0.0, 0.0).apply(t2.centroid[None, :])[0]
        pivot = np.array([moved[0] + anchor.tx, moved[1] + anchor.ty])
        for k in range(-8, 9):
            theta = (base_theta + k * fine_step) % TWO_PI
            key = (sb.transform.mirror, theta)
            bare = RigidTransform2D(sb.transform.mirror, theta, 0.0, 0.0)
            at = bare.apply(t2.centroid[None, :])[0]
            t = RigidTransform2D(sb.transform.mirror, theta, float(pivot[0] - at[0]), float(pivot[1] - at[1]))
            results[key] = _score_candidate(t1, t2, t, p, stride=1)
    ranked = sorted(
        results.values(),
        key=lambda sb: (-sb.fused, sb.transform.theta, sb.transform.tx, sb.transform.ty),
    )
    # settle the winner's translation at its final rotation
    best = ranked[0]
    t = _nudge_translation(t1, t2, best.transform, stride=1)
    refined = _score_candidate(t1, t2, t, p, stride=1)
    if refined.fused >= best.fused:
        ranked.insert(0, refined)
    return ranked


def match_fragments(
    frag1: FragmentView, frag2: FragmentView, params: MatchParams | None = None
) -> list[ScoreBreakdown]:
    """Best alignments across all edge-sample pairs of two fragments."""
    p = params or MatchParams()
    merged: list[ScoreBreakdown] = []
    for i, prof1 in enumerate(frag1.profiles):
        for j, prof2 in enumerate(frag2.profiles):
            for sb in search_transform(prof1, prof2, p):
                sb.diagnostics["sample1"] = i
                sb.diagnostics["sample2"] = j
                merged.append(sb)
    merged.sort(key=lambda sb: (-sb.fused, sb.transform.theta, sb.transform.tx, sb.transform.ty))
    return merged


def best_score(frag1: FragmentView, frag2: FragmentView, params: MatchParams | None = None) -> ScoreBreakdown:
    ranked = match_fragments(frag1, frag2, params)
    if not ranked:
        raise ValueError("no candidate transforms produced")
    return ranked[0]
