"""Tactile reconstruction and contour matching for reassembling fractured
flat objects from photometric edge presses."""

from .database import (
    AssemblyPlan,
    FragmentDatabase,
    FragmentRecord,
    QueryResult,
    classify_material,
    fallback_decision,
    fit_material_centroids,
    plan_assembly,
    rematch_with_tactile,
)
from .matching import (
    FragmentView,
    MatchParams,
    ScoreBreakdown,
    TactileProfile,
    edge_score,
    fuse,
    height_score,
    local_grad_score,
    match_fragments,
    orientation_histogram,
    region_grad_score,
    search_transform,
)
from .partial import GapAlignment, PartialParams, align_gap, sweep_profile
from .raster import MetricReport, centroid, chamfer, extract_contours, iou, longest_chord, tversky_loss
from .tactile import (
    ExtremaSet,
    GradientField,
    HeightMap,
    NormalMap,
    TactileFrame,
    divergence,
    find_extrema,
    normals_to_gradients,
    poisson_solve_dct,
    segment_contact,
    solve_normals,
)
from .transform import RigidTransform2D

__version__ = "0.1.0"

__all__ = [
    "AssemblyPlan",
    "ExtremaSet",
    "FragmentDatabase",
    "FragmentRecord",
    "FragmentView",
    "GapAlignment",
    "GradientField",
    "HeightMap",
    "MatchParams",
    "MetricReport",
    "NormalMap",
    "PartialParams",
    "QueryResult",
    "RigidTransform2D",
    "ScoreBreakdown",
    "TactileFrame",
    "TactileProfile",
    "align_gap",
    "centroid",
    "chamfer",
    "classify_material",
    "divergence",
    "edge_score",
    "extract_contours",
    "fallback_decision",
    "find_extrema",
    "fit_material_centroids",
    "fuse",
    "height_score",
    "iou",
    "local_grad_score",
    "longest_chord",
    "match_fragments",
    "normals_to_gradients",
    "orientation_histogram",
    "plan_assembly",
    "poisson_solve_dct",
    "region_grad_score",
    "rematch_with_tactile",
    "search_transform",
    "segment_contact",
    "solve_normals",
    "sweep_profile",
    "tversky_loss",
]
