"""Fragment database: record storage with on-disk persistence, visual-index
queries with the IoU/chamfer combination, the tactile fallback policy,
material-restricted rematching, nearest-centroid material classification and
greedy assembly planning."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .matching import FragmentView, MatchParams, ScoreBreakdown, TactileProfile, match_fragments
from .partial import PartialParams, align_gap
from .raster import extract_contours
from .synth import MATERIALS
from .tactile import ExtremaSet, GradientField, HeightMap
from .transform import RigidTransform2D

FALLBACK_GAP = 0.05  # relative Top-1 vs Top-2/Top-3 score gap
FALLBACK_MIN_IOU = 0.70
UNKNOWN_FUSED_FLOOR = 0.5


@dataclass
class FragmentRecord:
    id: str
    visual_mask: np.ndarray
    contour: np.ndarray
    material: str
    tactile: TactileProfile | None = None
    color_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    color_var: tuple[float, float, float] = (0.01, 0.01, 0.01)
    source_scene: str = ""

    @property
    def tactile_missing(self) -> bool:
        return self.tactile is None


@dataclass
class QueryResult:
    ranked: list[tuple[str, float, float, float]]  # (id, combined, iou, chamfer_px)
    fallback_triggered: bool
    fallback_reason: str  # none | close_scores | low_iou

    def top_ids(self, k: int) -> list[str]:
        return [r[0] for r in self.ranked[:k]]


@dataclass
class PlanStep:
    fragment_id: str
    transform: RigidTransform2D  # pose in the seed fragment's frame
    mate_id: str | None
    score: float


@dataclass
class AssemblyPlan:
    steps: list[PlanStep]

    def order(self) -> list[str]:
        return [s.fragment_id for s in self.steps]


class DuplicateRecordError(ValueError):
    pass


class FragmentDatabase:
    """In-memory record set with an append-only directory representation."""

    def __init__(self) -> None:
        self.records: dict[str, FragmentRecord] = {}

    def __len__(self) -> int:
        return len(self.records)

    def insert(self, record: FragmentRecord) -> str:
        if record.id in self.records:
            raise DuplicateRecordError(f"record id {record.id!r} already present")
        if record.material not in MATERIALS:
            raise ValueError(f"unknown material {record.material!r}")
        if not record.visual_mask.any():
            raise ValueError("visual mask is empty")
        boundary = extract_contours(record.visual_mask)
        if not boundary or set(map(tuple, record.contour.tolist())) != set(map(tuple, boundary[0].tolist())):
            raise ValueError("contour is not the boundary of the visual mask")
        self.records[record.id] = record
        return record.id

    def get(self, rec_id: str) -> FragmentRecord:
        return self.records[rec_id]

    def query(self, mask: np.ndarray, k: int = 3, params: PartialParams | None = None) -> QueryResult:
        """Rank records by aligning the query mask onto each stored visual
        mask (centroid + rotation sweep) and combining IoU with a chamfer
        exponential."""
        if not self.records:
            raise ValueError("query against an empty database")
        if not np.asarray(mask).any():
            raise ValueError("query mask is empty")
        p = params or PartialParams(scale_clamp=(0.5, 2.0))
        rows = []
        for rec_id in sorted(self.records):
            rec = self.records[rec_id]
            try:
                fit = align_gap(mask, rec.visual_mask, p)
                rows.append((rec_id, fit.combined, fit.iou, fit.chamfer_px))
            except ValueError:
                rows.append((rec_id, 0.0, 0.0, float("inf")))
        rows.sort(key=lambda r: (-r[1], r[0]))
        scores = [r[1] for r in rows]
        max_iou = max((r[2] for r in rows), default=0.0)
        flag, reason = fallback_decision(scores, max_iou)
        return QueryResult(ranked=rows[: max(k, 3)], fallback_triggered=flag, fallback_reason=reason)

    def save(self, root: str | os.PathLike) -> None:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        for rec_id in sorted(self.records):
            rec = self.records[rec_id]
            d = root / rec_id
            d.mkdir(parents=True, exist_ok=True)
            formats.write_pgm(d / "mask.pgm", rec.visual_mask)
            meta = {
                "id": rec.id,
                "material": rec.material,
                "contour": rec.contour.tolist(),
                "color_mean": list(rec.color_mean),
                "color_var": list(rec.color_var),
                "source_scene": rec.source_scene,
                "tactile_missing": rec.tactile_missing,
            }
            if rec.tactile is not None:
                t = rec.tactile
                formats.write_ffh(d / "height.ffh", t.height.h)
                formats.write_ffh(d / "gradx.ffh", t.grads.gx)
                formats.write_ffh(d / "grady.ffh", t.grads.gy)
                formats.write_sidecar(d / "height.txt", units="px", gauge="mean-zero")
                meta["tactile"] = {
                    "contour": t.contour.tolist(),
                    "domain_rle": _rle_encode(t.grads.domain),
                    "shape": list(t.grads.domain.shape),
                    "extrema": {
                        "maxima": t.extrema.maxima,
                        "minima": t.extrema.minima,
                        "height_range": t.extrema.height_range,
                    },
                }
            with open(d / "meta.json", "w", encoding="ascii") as fh:
                json.dump(meta, fh, sort_keys=True, indent=1)
                fh.write("\n")

    @classmethod
    def load(cls, root: str | os.PathLike) -> "FragmentDatabase":
        db = cls()
        root = Path(root)
        for d in sorted(p for p in root.iterdir() if p.is_dir()):
            with open(d / "meta.json", "r", encoding="ascii") as fh:
                meta = json.load(fh)
            mask = formats.read_mask(d / "mask.pgm")
            tactile = None
            if not meta.get("tactile_missing", True):
                tm = meta["tactile"]
                domain = _rle_decode(tm["domain_rle"], tuple(tm["shape"]))
                grads = GradientField(
                    gx=formats.read_ffh(d / "gradx.ffh"),
                    gy=formats.read_ffh(d / "grady.ffh"),
                    domain=domain,
                )
                height = HeightMap(h=formats.read_ffh(d / "height.ffh"), domain=domain)
                ex = tm["extrema"]
                tactile = TactileProfile(
                    contour=np.array(tm["contour"], dtype=np.int64),
                    grads=grads,
                    height=height,
                    extrema=ExtremaSet(
                        maxima=[tuple(v) for v in ex["maxima"]],
                        minima=[tuple(v) for v in ex["minima"]],
                        height_range=ex["height_range"],
                    ),
                )
            db.insert(
                FragmentRecord(
                    id=meta["id"],
                    visual_mask=mask,
                    contour=np.array(meta["contour"], dtype=np.int64),
                    material=meta["material"],
                    tactile=tactile,
                    color_mean=tuple(meta["color_mean"]),
                    color_var=tuple(meta["color_var"]),
                    source_scene=meta.get("source_scene", ""),
                )
            )
        return db


def _rle_encode(mask: np.ndarray) -> list[int]:
    flat = np.asarray(mask, dtype=bool).ravel()
    runs = []
    val = False
    run = 0
    for v in flat.tolist():
        if v == val:
            run += 1
        else:
            runs.append(run)
            val = v
            run = 1
    runs.append(run)
    return runs


def _rle_decode(runs: list[int], shape: tuple[int, int]) -> np.ndarray:
    flat = np.zeros(shape[0] * shape[1], dtype=bool)
    pos = 0
    val = False
    for run in runs:
        if val:
            flat[pos : pos + run] = True
        pos += run
        val = not val
    return flat.reshape(shape)


def fallback_decision(scores: list[float], max_iou: float) -> tuple[bool, str]:
    """Tactile re-sampling trigger: Top-1 within 5% (relative) of Top-2 or
    Top-3, or best IoU below the reliability threshold. The close-scores
    clause takes precedence in the reported reason."""
    if not scores:
        raise ValueError("fallback decision needs at least one candidate score")
    s1 = scores[0]
    close = False
    if s1 > 0:
        if len(scores) > 1 and (s1 - scores[1]) / s1 < FALLBACK_GAP:
            close = True
        if len(scores) > 2 and (s1 - scores[2]) / s1 < FALLBACK_GAP:
            close = True
    low = max_iou < FALLBACK_MIN_IOU
    if close:
        return True, "close_scores"
    if low:
        return True, "low_iou"
    return False, "none"


@dataclass
class RematchResult:
    ranked: list[tuple[str, float]]  # (record id, fused score)
    unknown: bool
    diagnostic: str = ""


def rematch_with_tactile(
    query: FragmentRecord,
    candidates: list[FragmentRecord],
    params: MatchParams | None = None,
) -> RematchResult:
    """Restrict candidates to the query's material class and re-rank them by
    the fused tactile matching score.

    Identification compares two presses of the same physical edge side, so
    the default search runs without the midline flip; the mirrored search is
    what makes a complementary mate look like a near-perfect match.
    """
    if query.tactile is None:
        raise ValueError("query record carries no tactile profile")
    if params is None:
        params = MatchParams(mirror_mode="off")
    same = [c for c in candidates if c.material == query.material and c.tactile is not None]
    if not same:
        return RematchResult(ranked=[], unknown=True, diagnostic="no same-material candidates")
    qview = FragmentView(id=query.id, profiles=[query.tactile], material=query.material)
    rows = []
    for cand in same:
        cview = FragmentView(id=cand.id, profiles=[cand.tactile], material=cand.material)
        best = match_fragments(qview, cview, params)[0]
        rows.append((cand.id, best.fused))
    rows.sort(key=lambda r: (-r[1], r[0]))
    unknown = rows[0][1] < UNKNOWN_FUSED_FLOOR
    return RematchResult(ranked=rows, unknown=unknown)


# --- material classification -------------------------------------------------


@dataclass
class MaterialCentroids:
    feature_mean: np.ndarray
    feature_std: np.ndarray
    centroids: dict[str, np.ndarray] = field(default_factory=dict)


def material_features(
    height: HeightMap, grads: GradientField, color_mean, color_var
) -> np.ndarray:
    """Roughness and appearance features: height RMS and range, mean gradient
    magnitude, then the three-channel colour mean and variance."""
    dom = height.domain
    vals = height.h[dom] - height.h[dom].mean()
    rms = float(np.sqrt(np.mean(vals**2)))
    rng = float(vals.max() - vals.min()) if vals.size else 0.0
    gmag = float(np.hypot(grads.gx[grads.domain], grads.gy[grads.domain]).mean()) if grads.domain.any() else 0.0
    return np.array([rms, rng, gmag, *color_mean, *color_var], dtype=np.float64)


def fit_material_centroids(samples: list[tuple[np.ndarray, str]]) -> MaterialCentroids:
    feats = np.stack([f for f, _ in samples])
    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    std[std < 1e-12] = 1.0
    z = (feats - mean) / std
    cents = MaterialCentroids(feature_mean=mean, feature_std=std)
    for mat in MATERIALS:
        rows = z[[i for i, (_, m) in enumerate(samples) if m == mat]]
        if rows.shape[0]:
            cents.centroids[mat] = rows.mean(axis=0)
    return cents


def classify_material(features: np.ndarray, centroids: MaterialCentroids) -> str:
    """Nearest centroid over z-scored features; ties break to the first
    class in the material enumeration."""
    if not centroids.centroids:
        raise ValueError("no fitted material centroids")
    z = (features - centroids.feature_mean) / centroids.feature_std
    best_mat = None
    best_d = math.inf
    for mat in MATERIALS:
        if mat not in centroids.centroids:
            continue
        d = float(np.linalg.norm(z - centroids.centroids[mat]))
        if d < best_d:
            best_d = d
            best_mat = mat
    return best_mat


# --- assembly planning --------------------------------------------------------


def plan_assembly(
    fragment_ids: list[str],
    pairwise: dict[tuple[str, str], ScoreBreakdown],
) -> AssemblyPlan:
    """Greedy sequencing: seed with the best-scoring pair, then repeatedly
    place the unplaced fragment with the strongest link to any placed one,
    composing its pose into the seed frame. Ties break by id order.

    pairwise keys are ordered (a, b): the stored transform maps b's sample
    coords into a's frame.
    """
    ids = sorted(fragment_ids)
    if len(ids) < 2:
        raise ValueError("assembly needs at least two fragments")

    def link(a: str, b: str) -> tuple[float, RigidTransform2D | None, bool]:
        if (a, b) in pairwise:
            sb = pairwise[(a, b)]
            return sb.fused, sb.transform, False
        if (b, a) in pairwise:
            sb = pairwise[(b, a)]
            return sb.fused, sb.transform, True
        return -math.inf, None, False

    best_pair = None
    best_score = -math.inf
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            s, _, _ = link(a, b)
            if s > best_score:
                best_score = s
                best_pair = (a, b)
    if best_pair is None or not math.isfinite(best_score):
        raise ValueError("no pairwise scores available")

    a, b = best_pair
    poses: dict[str, RigidTransform2D] = {a: RigidTransform2D()}
    s, t, flipped = link(a, b)
    poses[b] = t.inverse() if flipped else t
    steps = [
        PlanStep(fragment_id=a, transform=poses[a], mate_id=None, score=s),
        PlanStep(fragment_id=b, transform=poses[b], mate_id=a, score=s),
    ]
    placed = {a, b}
    while len(placed) < len(ids):
        best = None  # (score, frag, mate, transform)
        for frag in ids:
            if frag in placed:
                continue
            for mate in sorted(placed):
                s, t, flipped = link(mate, frag)
                if t is None:
                    continue
                cand = (s, frag, mate, t if not flipped else t.inverse())
                if best is None or cand[0] > best[0] or (cand[0] == best[0] and (cand[1], cand[2]) < (best[1], best[2])):
                    best = cand
        if best is None:
            raise ValueError("assembly graph is disconnected")
        s, frag, mate, t = best
        poses[frag] = poses[mate].compose(t)
        steps.append(PlanStep(fragment_id=frag, transform=poses[frag], mate_id=mate, score=s))
        placed.add(frag)
    return AssemblyPlan(steps=steps)
