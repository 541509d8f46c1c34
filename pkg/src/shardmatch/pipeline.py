"""Scene-level glue: render and reconstruct every tactile sample of a scene
into matcher-ready fragment views, and evaluate pairwise rankings against
the scene's ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import synth, tactile
from .matching import FragmentView, MatchParams, ScoreBreakdown, TactileProfile, match_fragments
from .raster import extract_contours
from .synth import FracturedScene, SampleSpec
from .transform import RigidTransform2D, angle_diff


@dataclass
class SampleRecon:
    spec: SampleSpec
    profile: TactileProfile
    qa_rmse_rel: float  # reconstruction error / true height range over the contact


def reconstruct_sample(
    scene: FracturedScene, spec: SampleSpec, noise_sigma: float = 0.0, noise_seed: int = 0
) -> SampleRecon:
    h_true, _ = synth.sample_true_field(scene, spec)
    rng = np.random.default_rng([noise_seed, 7, spec.edge_index, int(spec.mirrored)])
    frame = synth.render_tactile(h_true, noise_sigma=noise_sigma, rng=rng)
    baseline = synth.flat_baseline()
    contact, grads, height = tactile.reconstruct(frame, baseline=baseline)
    if not contact.any():
        raise ValueError(f"no contact detected for sample {spec.frag_id}/{spec.edge_index}")
    contours = extract_contours(contact)
    profile = TactileProfile(
        contour=contours[0],
        grads=grads,
        height=height,
        extrema=tactile.find_extrema(height),
    )
    truth = h_true - h_true[contact].mean()
    got = height.h - height.h[contact].mean()
    rng_h = float(h_true[contact].max() - h_true[contact].min())
    qa = float(np.sqrt(np.mean((got - truth)[contact] ** 2)) / rng_h) if rng_h > 0 else 0.0
    return SampleRecon(spec=spec, profile=profile, qa_rmse_rel=qa)


def reconstruct_scene(
    scene: FracturedScene, noise_sigma: float = 0.0, noise_seed: int = 0
) -> tuple[dict[str, FragmentView], list[SampleRecon]]:
    """One FragmentView per fragment, profiles ordered by edge index."""
    recons = [reconstruct_sample(scene, s, noise_sigma, noise_seed) for s in scene.samples]
    views: dict[str, FragmentView] = {}
    for f in scene.fragments:
        profs = [r.profile for r in recons if r.spec.frag_id == f.id]
        views[f.id] = FragmentView(id=f.id, profiles=profs, material=f.material)
    return views, recons


def rank_partners(
    views: dict[str, FragmentView], query_id: str, params: MatchParams | None = None
) -> list[tuple[str, ScoreBreakdown]]:
    """All other fragments ranked by their best fused score against the query."""
    out = []
    for other_id in sorted(views):
        if other_id == query_id:
            continue
        ranked = match_fragments(views[query_id], views[other_id], params)
        out.append((other_id, ranked[0]))
    out.sort(key=lambda kv: (-kv[1].fused, kv[0]))
    return out


def build_record(
    scene: FracturedScene,
    frag_id: str,
    scene_name: str = "",
    noise_sigma: float = 0.0,
    noise_seed: int = 0,
):
    """Database record for one fragment: observed visual mask and contour
    plus the reconstructed tactile profile of its longest fracture edge."""
    from .database import FragmentRecord
    from .raster import extract_contours as _contours

    frag = scene.fragment(frag_id)
    visual = synth.observed_mask(scene, frag_id)
    ei = synth.primary_edge(scene, frag_id)
    spec = next(s for s in scene.samples if s.frag_id == frag_id and s.edge_index == ei)
    recon = reconstruct_sample(scene, spec, noise_sigma, noise_seed)
    rid = synth.global_id(scene_name, frag_id) if scene_name else frag_id
    return FragmentRecord(
        id=rid,
        visual_mask=visual,
        contour=_contours(visual)[0],
        material=frag.material,
        tactile=recon.profile,
        color_mean=frag.color_mean,
        color_var=frag.color_var,
        source_scene=scene_name,
    )


@dataclass
class RetrievalQuery:
    query_id: str
    visual_mask: np.ndarray
    tactile: TactileProfile
    color_mean: tuple[float, float, float]
    color_var: tuple[float, float, float]
    in_database: bool


def build_retrieval_setup(mixed, exclude_holdout: bool = True, noise_sigma: float = 0.0, noise_seed: int = 0):
    """Database and query list for a mixed workspace. Every fragment is
    queried with its own observed view; fresh tactile presses stand in for
    the fallback re-sampling."""
    from .database import FragmentDatabase

    db = FragmentDatabase()
    queries: list[RetrievalQuery] = []
    for name, scene in mixed.objects:
        for frag in scene.fragments:
            gid = synth.global_id(name, frag.id)
            record = build_record(scene, frag.id, name, noise_sigma, noise_seed)
            in_db = not (exclude_holdout and gid == mixed.holdout)
            if in_db:
                db.insert(record)
            fresh_spec = synth.fresh_sample(scene, frag.id, seed=noise_seed * 7919 + 11)
            fresh = reconstruct_sample(scene, fresh_spec, noise_sigma, noise_seed)
            queries.append(
                RetrievalQuery(
                    query_id=gid,
                    visual_mask=record.visual_mask,
                    tactile=fresh.profile,
                    color_mean=frag.color_mean,
                    color_var=frag.color_var,
                    in_database=in_db,
                )
            )
    return db, queries


@dataclass
class RetrievalRow:
    query_id: str
    top1_id: str
    top1_correct: bool
    top3_correct: bool
    max_iou: float
    fallback: bool
    fallback_reason: str
    rematched: bool
    unknown: bool

    def csv_row(self) -> str:
        return (
            f"{self.query_id},{self.top1_id},{int(self.top1_correct)},"
            f"{int(self.top3_correct)},{self.max_iou:.4f},{int(self.fallback)}"
        )


def evaluate_retrieval(db, queries: list[RetrievalQuery], params: MatchParams | None = None):
    """Visual query, fallback policy, and material-restricted tactile
    rematch for every query; summary mirrors the retrieval benchmark."""
    from .database import FragmentRecord, classify_material, fit_material_centroids, material_features, rematch_with_tactile

    samples = []
    for rec in db.records.values():
        if rec.tactile is None:
            continue
        samples.append(
            (material_features(rec.tactile.height, rec.tactile.grads, rec.color_mean, rec.color_var), rec.material)
        )
    centroids = fit_material_centroids(samples)

    rows: list[RetrievalRow] = []
    for q in queries:
        res = db.query(q.visual_mask, k=3)
        top_ids = res.top_ids(3)
        top1 = top_ids[0]
        top3_ok = q.query_id in top_ids
        max_iou = max(r[2] for r in res.ranked)
        rematched = False
        unknown = False
        if res.fallback_triggered:
            feats = material_features(q.tactile.height, q.tactile.grads, q.color_mean, q.color_var)
            material = classify_material(feats, centroids)
            probe = FragmentRecord(
                id=q.query_id,
                visual_mask=q.visual_mask,
                contour=np.zeros((0, 2), dtype=np.int64),
                material=material,
                tactile=q.tactile,
                color_mean=q.color_mean,
                color_var=q.color_var,
            )
            rem = rematch_with_tactile(probe, list(db.records.values()), params)
            rematched = True
            if rem.ranked:
                top1 = rem.ranked[0][0]
                top3_ok = q.query_id in [r[0] for r in rem.ranked[:3]]
            unknown = rem.unknown
        rows.append(
            RetrievalRow(
                query_id=q.query_id,
                top1_id=top1,
                top1_correct=(top1 == q.query_id) and q.in_database,
                top3_correct=top3_ok and q.in_database,
                max_iou=max_iou,
                fallback=res.fallback_triggered,
                fallback_reason=res.fallback_reason,
                rematched=rematched,
                unknown=unknown,
            )
        )
    in_db_rows = [r for r in rows if any(q.query_id == r.query_id and q.in_database for q in queries)]
    summary = {
        "queries": len(rows),
        "top1_accuracy": sum(r.top1_correct for r in in_db_rows) / max(len(in_db_rows), 1),
        "top3_accuracy": sum(r.top3_correct for r in in_db_rows) / max(len(in_db_rows), 1),
        "mean_iou": float(np.mean([r.max_iou for r in rows])),
        "fallback_count": sum(r.fallback for r in rows),
        "unknown_ids": [r.query_id for r in rows if r.unknown],
    }
    return rows, summary


@dataclass
class PairRecovery:
    edge_index: int
    id_a: str
    id_b: str
    truth: RigidTransform2D
    found: RigidTransform2D
    rot_err_deg: float
    trans_err_px: float
    fused: float


def recover_pair(
    scene: FracturedScene,
    views: dict[str, FragmentView],
    edge_index: int,
    params: MatchParams | None = None,
) -> PairRecovery:
    """Match the two fragments of one adjacency and compare the winning
    transform with the exact sample-frame ground truth."""
    samp_a, samp_b = synth.edge_samples(scene, edge_index)
    truth = synth.ground_truth_pair_transform(samp_a, samp_b)
    ranked = match_fragments(views[samp_a.frag_id], views[samp_b.frag_id], params)
    best = ranked[0]
    t = best.transform
    rot_err = np.degrees(angle_diff(t.theta, truth.theta)) if t.mirror == truth.mirror else 180.0
    trans_err = float(np.hypot(t.tx - truth.tx, t.ty - truth.ty))
    edge = scene.edges[edge_index]
    return PairRecovery(
        edge_index=edge_index,
        id_a=edge.id_a,
        id_b=edge.id_b,
        truth=truth,
        found=t,
        rot_err_deg=rot_err,
        trans_err_px=trans_err,
        fused=best.fused,
    )
