"""Workspace directories: a manifest plus rasters for every object, fragment,
and tactile press. Writing is fully deterministic for a given scene and
noise seed, so identical configurations produce byte-identical trees."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats, synth
from .synth import EdgeRelief, EdgeSpec, FracturedScene, FragmentTruth, MixedScene, SampleSpec
from .transform import RigidTransform2D

FORMAT_VERSION = 1


@dataclass
class Workspace:
    objects: list[tuple[str, FracturedScene]]
    seed: int
    noise_sigma: float
    noise_seed: int
    twin_objects: tuple[str, str] | None = None
    holdout: str | None = None

    def scene(self, name: str) -> FracturedScene:
        for n, s in self.objects:
            if n == name:
                return s
        raise KeyError(name)


def _transform_dict(t: RigidTransform2D) -> dict:
    return {"mirror": t.mirror, "theta": t.theta, "tx": t.tx, "ty": t.ty}


def _transform_from(d: dict) -> RigidTransform2D:
    return RigidTransform2D(bool(d["mirror"]), float(d["theta"]), float(d["tx"]), float(d["ty"]))


def sample_dirname(spec: SampleSpec) -> str:
    return f"{spec.frag_id}_e{spec.edge_index:02d}"


def write_workspace(ws: Workspace, root: str | os.PathLike) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "format_version": FORMAT_VERSION,
        "seed": ws.seed,
        "noise_sigma": ws.noise_sigma,
        "noise_seed": ws.noise_seed,
        "twin_objects": list(ws.twin_objects) if ws.twin_objects else None,
        "holdout": ws.holdout,
        "objects": [],
    }
    for name, scene in ws.objects:
        od = root / name
        (od / "fragments").mkdir(parents=True, exist_ok=True)
        (od / "views").mkdir(parents=True, exist_ok=True)
        formats.write_pgm(od / "object.pgm", scene.object_mask)
        obj = {
            "name": name,
            "seed": scene.seed,
            "roughness": scene.roughness,
            "amplitude": scene.amplitude,
            "shape": list(scene.shape),
            "fragments": [],
            "edges": [],
            "samples": [],
        }
        for frag in scene.fragments:
            formats.write_pgm(od / "fragments" / f"{frag.id}.pgm", frag.mask)
            formats.write_pgm(od / "views" / f"{frag.id}.pgm", synth.observed_mask(scene, frag.id))
            obj["fragments"].append(
                {
                    "id": frag.id,
                    "material": frag.material,
                    "theta": frag.theta,
                    "centroid": list(frag.centroid),
                    "color_mean": list(frag.color_mean),
                    "color_var": list(frag.color_var),
                    "amp_scale": frag.amp_scale,
                }
            )
        for edge in scene.edges:
            e = {
                "id_a": edge.id_a,
                "id_b": edge.id_b,
                "polyline": [[float(x), float(y)] for x, y in edge.polyline],
                "length": edge.length,
                "sampleable": edge.sampleable,
                "span": [edge.span_lo, edge.span_hi],
            }
            if edge.relief is not None:
                r = edge.relief
                e["relief"] = {
                    "centers": [[float(x), float(y)] for x, y in r.centers],
                    "signs": [float(v) for v in r.signs],
                    "arc_pos": [float(v) for v in r.arc_pos],
                    "sigma": r.sigma,
                    "amplitude": r.amplitude,
                    "base": r.base,
                }
            obj["edges"].append(e)
        for spec in scene.samples:
            obj["samples"].append(
                {
                    "frag_id": spec.frag_id,
                    "edge_index": spec.edge_index,
                    "side_sign": spec.side_sign,
                    "mirrored": spec.mirrored,
                    "view": _transform_dict(spec.view),
                }
            )
            sd = od / "samples" / sample_dirname(spec)
            sd.mkdir(parents=True, exist_ok=True)
            height, _ = synth.sample_true_field(scene, spec)
            rng = np.random.default_rng([ws.noise_seed, 7, spec.edge_index, int(spec.mirrored)])
            frame = synth.render_tactile(height, noise_sigma=ws.noise_sigma, rng=rng)
            for ch, nm in enumerate("rgb"):
                formats.write_pgm16(sd / f"{nm}.pgm", frame.channels[ch])
            formats.write_lights(sd / "lights.txt", frame.lights)
            formats.write_ffh(sd / "truth.ffh", height)
            formats.write_sidecar(sd / "truth.txt", units="px", gauge="raw")
        manifest["objects"].append(obj)
    with open(root / "manifest.json", "w", encoding="ascii") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_workspace(root: str | os.PathLike) -> Workspace:
    root = Path(root)
    with open(root / "manifest.json", "r", encoding="ascii") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported workspace format_version {manifest.get('format_version')}")
    objects = []
    for obj in manifest["objects"]:
        name = obj["name"]
        od = root / name
        object_mask = formats.read_mask(od / "object.pgm")
        fragments = []
        for f in obj["fragments"]:
            fragments.append(
                FragmentTruth(
                    id=f["id"],
                    mask=formats.read_mask(od / "fragments" / f"{f['id']}.pgm"),
                    material=f["material"],
                    theta=float(f["theta"]),
                    centroid=tuple(f["centroid"]),
                    color_mean=tuple(f["color_mean"]),
                    color_var=tuple(f["color_var"]),
                    amp_scale=float(f["amp_scale"]),
                )
            )
        edges = []
        for e in obj["edges"]:
            poly = np.array(e["polyline"], dtype=np.float64)
            segs, length = synth._segment_table(poly)
            spec = EdgeSpec(
                id_a=e["id_a"],
                id_b=e["id_b"],
                polyline=poly,
                segs=segs,
                length=float(e["length"]),
                sampleable=bool(e["sampleable"]),
                span_lo=float(e["span"][0]),
                span_hi=float(e["span"][1]),
            )
            if "relief" in e:
                r = e["relief"]
                spec.relief = EdgeRelief(
                    centers=np.array(r["centers"], dtype=np.float64),
                    signs=np.array(r["signs"], dtype=np.float64),
                    arc_pos=np.array(r["arc_pos"], dtype=np.float64),
                    sigma=float(r["sigma"]),
                    amplitude=float(r["amplitude"]),
                    base=float(r["base"]),
                )
            edges.append(spec)
        samples = [
            SampleSpec(
                frag_id=s["frag_id"],
                edge_index=int(s["edge_index"]),
                side_sign=float(s["side_sign"]),
                mirrored=bool(s["mirrored"]),
                view=_transform_from(s["view"]),
            )
            for s in obj["samples"]
        ]
        scene = FracturedScene(
            shape=tuple(obj["shape"]),
            object_mask=object_mask,
            fragments=fragments,
            edges=edges,
            samples=samples,
            seed=int(obj["seed"]),
            roughness=float(obj["roughness"]),
            amplitude=float(obj["amplitude"]),
        )
        objects.append((name, scene))
    twins = manifest.get("twin_objects")
    return Workspace(
        objects=objects,
        seed=int(manifest["seed"]),
        noise_sigma=float(manifest["noise_sigma"]),
        noise_seed=int(manifest["noise_seed"]),
        twin_objects=tuple(twins) if twins else None,
        holdout=manifest.get("holdout"),
    )


def load_sample_frame(root: str | os.PathLike, obj_name: str, spec: SampleSpec):
    """Tactile frame for one press as stored on disk."""
    from .tactile import TactileFrame

    sd = Path(root) / obj_name / "samples" / sample_dirname(spec)
    if not (sd / "lights.txt").exists():
        raise FileNotFoundError(f"missing light vectors file: {sd / 'lights.txt'}")
    lights = formats.read_lights(sd / "lights.txt")
    channels = np.stack([formats.read_pgm(sd / f"{nm}.pgm") for nm in "rgb"])
    return TactileFrame(channels=channels, lights=lights)


def workspace_from_mixed(mixed: MixedScene, seed: int, noise_sigma: float, noise_seed: int) -> Workspace:
    return Workspace(
        objects=mixed.objects,
        seed=seed,
        noise_sigma=noise_sigma,
        noise_seed=noise_seed,
        twin_objects=mixed.twin_objects,
        holdout=mixed.holdout,
    )
