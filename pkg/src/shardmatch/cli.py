"""Command-line surface: scene generation, tactile reconstruction, pairwise
matching, assembly planning, database management, retrieval evaluation and
vision-only gap alignment.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import formats, pipeline, sceneio, synth
from .database import FragmentDatabase, plan_assembly
from .matching import MatchParams, match_fragments
from .partial import AreaRatioError, PartialParams, align_gap, sweep_profile
from .raster import extract_contours
from .tactile import find_extrema, reconstruct
from .transform import RigidTransform2D

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_PARAM_KEYS = {
    "sigma_phi", "sigma_h", "delta", "alpha_height", "weights", "hist_bins",
    "window", "sweep_step_deg", "chamfer_scale", "mirror_mode", "coarse_stride",
    "refine_basins",
}


class DataError(RuntimeError):
    pass


def _load_params(args) -> MatchParams:
    overrides = {}
    if getattr(args, "params", None):
        with open(args.params, "r", encoding="ascii") as fh:
            data = json.load(fh)
        unknown = set(data) - _PARAM_KEYS
        if unknown:
            raise DataError(f"unknown parameter keys in {args.params}: {sorted(unknown)}")
        overrides.update(data)
    if getattr(args, "weights", None):
        parts = [float(v) for v in args.weights.split(",")]
        if len(parts) != 3:
            raise DataError("--weights expects we,wg,wh")
        overrides["weights"] = parts
    if getattr(args, "sweep_step_deg", None):
        overrides["sweep_step_deg"] = args.sweep_step_deg
    if "weights" in overrides:
        overrides["weights"] = tuple(overrides["weights"])
    return MatchParams(**overrides)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def cmd_gen(args) -> int:
    out = Path(args.out)
    if args.mixed:
        mixed = synth.mixed_scene(args.seed, amplitude=args.amplitude, roughness=args.roughness)
        ws = sceneio.workspace_from_mixed(mixed, args.seed, args.noise_sigma, args.seed)
    else:
        poly = synth.shape_polygon(args.shape)
        scene = synth.fracture(poly, args.seeds, args.roughness, seed=args.seed, material=args.material)
        if args.seeds > 1:
            synth.synth_edge_heights(scene, amplitude=args.amplitude, seed=args.seed)
        ws = sceneio.Workspace(
            objects=[("obj0", scene)], seed=args.seed, noise_sigma=args.noise_sigma, noise_seed=args.seed
        )
    sceneio.write_workspace(ws, out)
    print(f"wrote workspace with {sum(len(s.fragments) for _, s in ws.objects)} fragments to {out}")
    return EXIT_OK


def _reconstruct_workspace(ws: sceneio.Workspace, scene_dir: Path, out: Path) -> list[str]:
    rows = []
    for name, scene in ws.objects:
        baseline = synth.flat_baseline()
        for spec in scene.samples:
            frame = sceneio.load_sample_frame(scene_dir, name, spec)
            contact, grads, height = reconstruct(frame, baseline=baseline)
            if not contact.any():
                raise DataError(f"no contact detected in {name}/{sceneio.sample_dirname(spec)}")
            extrema = find_extrema(height)
            sd = out / name / sceneio.sample_dirname(spec)
            sd.mkdir(parents=True, exist_ok=True)
            formats.write_pgm(sd / "contact.pgm", contact)
            formats.write_ffh(sd / "height.ffh", height.h)
            formats.write_sidecar(sd / "height.txt", units="px", gauge="mean-zero")
            formats.write_ffh(sd / "gradx.ffh", grads.gx)
            formats.write_ffh(sd / "grady.ffh", grads.gy)
            _write_json(
                sd / "extrema.json",
                {
                    "maxima": extrema.maxima,
                    "minima": extrema.minima,
                    "height_range": extrema.height_range,
                },
            )
            truth = formats.read_ffh(scene_dir / name / "samples" / sceneio.sample_dirname(spec) / "truth.ffh")
            t = truth - truth[contact].mean()
            got = height.h - height.h[contact].mean()
            rng_h = float(truth[contact].max() - truth[contact].min())
            rmse_rel = float(np.sqrt(np.mean((got - t)[contact] ** 2)) / rng_h) if rng_h > 0 else 0.0
            rows.append(f"{name}/{sceneio.sample_dirname(spec)},{rmse_rel:.6f}")
    return rows


def cmd_reconstruct(args) -> int:
    scene_dir = Path(args.scene)
    ws = sceneio.load_workspace(scene_dir)
    out = Path(args.out)
    rows = _reconstruct_workspace(ws, scene_dir, out)
    formats.write_csv(out / "qa.csv", "sample,rmse_rel", rows)
    print(f"reconstructed {len(rows)} samples; QA report at {out / 'qa.csv'}")
    return EXIT_OK


def _views_of(ws: sceneio.Workspace, noise_sigma: float, noise_seed: int):
    views = {}
    scenes = {}
    for name, scene in ws.objects:
        v, _ = pipeline.reconstruct_scene(scene, noise_sigma, noise_seed)
        for fid, view in v.items():
            views[synth.global_id(name, fid)] = view
        scenes[name] = scene
    return views, scenes


def cmd_match(args) -> int:
    ws = sceneio.load_workspace(Path(args.scene))
    params = _load_params(args)
    out = Path(args.out)
    report = {"format_version": sceneio.FORMAT_VERSION, "params": params.to_dict(), "pairs": []}
    for name, scene in ws.objects:
        views, _ = pipeline.reconstruct_scene(scene, ws.noise_sigma, ws.noise_seed)
        ids = sorted(views)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                if not (views[a].profiles and views[b].profiles):
                    continue
                ranked = match_fragments(views[a], views[b], params)
                entry = {
                    "object": name,
                    "a": a,
                    "b": b,
                    "candidates": [
                        {
                            "edge": sb.edge,
                            "gradient": sb.gradient,
                            "height": sb.height,
                            "fused": sb.fused,
                            "transform": sceneio._transform_dict(sb.transform),
                        }
                        for sb in ranked[: args.top]
                    ],
                }
                report["pairs"].append(entry)
    _write_json(out / "match_report.json", report)
    print(f"matched {len(report['pairs'])} pairs; report at {out / 'match_report.json'}")
    return EXIT_OK


def cmd_assemble(args) -> int:
    ws = sceneio.load_workspace(Path(args.scene))
    params = _load_params(args)
    out = Path(args.out)
    payload = {"format_version": sceneio.FORMAT_VERSION, "params": params.to_dict(), "objects": []}
    for name, scene in ws.objects:
        views, _ = pipeline.reconstruct_scene(scene, ws.noise_sigma, ws.noise_seed)
        ids = sorted(fid for fid in views if views[fid].profiles)
        pairwise = {}
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                pairwise[(a, b)] = match_fragments(views[a], views[b], params)[0]
        plan = plan_assembly(ids, pairwise)
        payload["objects"].append(
            {
                "object": name,
                "steps": [
                    {
                        "fragment": s.fragment_id,
                        "mate": s.mate_id,
                        "score": s.score,
                        "transform": sceneio._transform_dict(s.transform),
                    }
                    for s in plan.steps
                ],
            }
        )
    _write_json(out / "assembly.json", payload)
    print(f"assembly plan written to {out / 'assembly.json'}")
    return EXIT_OK


def cmd_db_add(args) -> int:
    ws = sceneio.load_workspace(Path(args.scene))
    db_dir = Path(args.db)
    db = FragmentDatabase.load(db_dir) if db_dir.exists() and any(db_dir.glob("*/meta.json")) else FragmentDatabase()
    exclude = set(args.exclude or [])
    if args.exclude_holdout and ws.holdout:
        exclude.add(ws.holdout)
    added = 0
    for name, scene in ws.objects:
        for frag in scene.fragments:
            gid = synth.global_id(name, frag.id)
            if gid in exclude or gid in db.records:
                continue
            db.insert(pipeline.build_record(scene, frag.id, name, ws.noise_sigma, ws.noise_seed))
            added += 1
    db.save(db_dir)
    print(f"database now holds {len(db)} records ({added} added) at {db_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ws = sceneio.load_workspace(Path(args.scene))
    db = FragmentDatabase.load(Path(args.db))
    if len(db) == 0:
        raise DataError(f"database at {args.db} is empty")
    queries = []
    for name, scene in ws.objects:
        for frag in scene.fragments:
            gid = synth.global_id(name, frag.id)
            fresh_spec = synth.fresh_sample(scene, frag.id, seed=ws.noise_seed * 7919 + 11)
            fresh = pipeline.reconstruct_sample(scene, fresh_spec, ws.noise_sigma, ws.noise_seed)
            queries.append(
                pipeline.RetrievalQuery(
                    query_id=gid,
                    visual_mask=synth.observed_mask(scene, frag.id),
                    tactile=fresh.profile,
                    color_mean=frag.color_mean,
                    color_var=frag.color_var,
                    in_database=gid in db.records,
                )
            )
    params = _load_params(args)
    rows, summary = pipeline.evaluate_retrieval(db, queries, params)
    out = Path(args.out)
    formats.write_csv(
        out / "eval.csv",
        "query_id,top1_id,top1_correct,top3_correct,max_iou,fallback",
        [r.csv_row() for r in rows],
    )
    _write_json(out / "summary.json", {"format_version": sceneio.FORMAT_VERSION, "params": params.to_dict(), **summary})
    print(
        f"eval: top1 {summary['top1_accuracy']:.0%}, top3 {summary['top3_accuracy']:.0%}, "
        f"fallbacks {summary['fallback_count']}, unknown {summary['unknown_ids']}"
    )
    return EXIT_OK


def cmd_partial(args) -> int:
    fragment = formats.read_mask(args.fragment)
    gap = formats.read_mask(args.gap)
    p = PartialParams(step_deg=args.step_deg, include_mirror=args.mirror)
    rows = sweep_profile(fragment, gap, p)
    fit = align_gap(fragment, gap, p)
    out = Path(args.out)
    formats.write_csv(
        out / "sweep.csv",
        "theta_deg,iou,chamfer_px,combined",
        [f"{r['theta_deg']:.2f},{r['iou']:.6f},{r['chamfer_px']:.6f},{r['combined']:.6f}" for r in rows],
    )
    _write_json(
        out / "alignment.json",
        {
            "format_version": sceneio.FORMAT_VERSION,
            "params": p.to_dict(),
            "theta_deg": math.degrees(fit.transform.theta),
            "mirror": fit.transform.mirror,
            "tx": fit.transform.tx,
            "ty": fit.transform.ty,
            "scale": fit.scale,
            "iou": fit.iou,
            "chamfer_px": fit.chamfer_px,
            "combined": fit.combined,
        },
    )
    print(f"best angle {math.degrees(fit.transform.theta):.1f} deg, iou {fit.iou:.3f}; outputs at {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shardmatch", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a seeded fracture workspace")
    g.add_argument("--shape", default="square", choices=("square", "disc", "hex"))
    g.add_argument("--seeds", type=int, default=6)
    g.add_argument("--roughness", type=float, default=0.5)
    g.add_argument("--amplitude", type=float, default=4.0)
    g.add_argument("--material", default="glass")
    g.add_argument("--mixed", action="store_true", help="five-object mixed-material workspace")
    g.add_argument("--noise-sigma", type=float, default=0.0)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("reconstruct", help="tactile profiles from stored frames")
    r.add_argument("--scene", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reconstruct)

    m = sub.add_parser("match", help="pairwise fused matching report")
    m.add_argument("--scene", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--params")
    m.add_argument("--weights")
    m.add_argument("--sweep-step-deg", type=float, dest="sweep_step_deg")
    m.add_argument("--top", type=int, default=3)
    m.set_defaults(func=cmd_match)

    a = sub.add_parser("assemble", help="greedy assembly plan")
    a.add_argument("--scene", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--params")
    a.add_argument("--weights")
    a.add_argument("--sweep-step-deg", type=float, dest="sweep_step_deg")
    a.set_defaults(func=cmd_assemble)

    d = sub.add_parser("db-add", help="insert a workspace's fragments into a database")
    d.add_argument("--scene", required=True)
    d.add_argument("--db", required=True)
    d.add_argument("--exclude", nargs="*")
    d.add_argument("--exclude-holdout", action="store_true")
    d.set_defaults(func=cmd_db_add)

    e = sub.add_parser("eval", help="retrieval evaluation against a database")
    e.add_argument("--scene", required=True)
    e.add_argument("--db", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--params")
    e.add_argument("--weights")
    e.add_argument("--sweep-step-deg", type=float, dest="sweep_step_deg")
    e.set_defaults(func=cmd_eval)

    p = sub.add_parser("partial", help="vision-only gap alignment sweep")
    p.add_argument("--fragment", required=True)
    p.add_argument("--gap", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--step-deg", type=float, default=1.0, dest="step_deg")
    p.add_argument("--mirror", action="store_true")
    p.set_defaults(func=cmd_partial)

    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (FileNotFoundError, DataError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, AreaRatioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
