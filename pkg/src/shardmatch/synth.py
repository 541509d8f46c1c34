"""Seeded ground-truth factory: 2D cell fracture of polygons, complementary
fracture-edge relief, sensor-view tactile windows, and Lambertian rendering.

Every quantity is a pure function of the scene seed, so scenes regenerate
bit-identically and every matching test has exact ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi

from . import kernels
from .raster import FOUR_CONN
from .tactile import TactileFrame
from .transform import RigidTransform2D

MATERIALS = ("glass", "acrylic", "plastic", "colored_crystal", "colorless_crystal")

# relief roughness multiplier and nominal RGB appearance per material class
MATERIAL_PRESETS: dict[str, tuple[float, tuple[float, float, float], float]] = {
    "glass": (0.60, (0.62, 0.72, 0.80), 0.020),
    "acrylic": (1.00, (0.70, 0.68, 0.58), 0.035),
    "plastic": (1.50, (0.52, 0.58, 0.47), 0.050),
    "colored_crystal": (0.80, (0.78, 0.45, 0.52), 0.060),
    "colorless_crystal": (0.85, (0.80, 0.81, 0.86), 0.015),
}

DEFAULT_LIGHTS = np.array(
    [
        [math.cos(math.radians(45)) * math.cos(a), math.cos(math.radians(45)) * math.sin(a), math.sin(math.radians(45))]
        for a in (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)
    ],
    dtype=np.float64,
)

SAMPLE_SIZE = 128
SAMPLE_CENTER = (SAMPLE_SIZE - 1) / 2.0
TUBE_HALFWIDTH = 24.0
BLOB_SIGMA = 6.0
RELIEF_FLAT = 5.0  # relief untouched this close to the edge curve
RELIEF_CUT = 12.0  # relief fully faded here, the rim is pure dome
MIN_EDGE_LEN = 30.0
MAX_SAMPLE_SPAN = 66.0
TAPER_LO = 6.0  # asymmetric arc taper so presses are not mirror-degenerate
TAPER_HI = 16.0
ANGLE_STEP_DEG = 0.25  # observation angles live on the fine-sweep grid


@dataclass
class EdgeRelief:
    """Signed relief blobs shared by both sides of one fracture edge."""

    centers: np.ndarray  # (k, 2) assembly coords on the edge polyline
    signs: np.ndarray  # (k,) +-1
    arc_pos: np.ndarray  # (k,) arc positions
    sigma: float
    amplitude: float
    base: float


@dataclass
class EdgeSpec:
    id_a: str
    id_b: str
    polyline: np.ndarray  # (n, 2) float assembly coords, smoothed
    segs: np.ndarray  # (n-1, 5) rows (x0, y0, x1, y1, s0) for the kernels
    length: float
    sampleable: bool
    span_lo: float = 0.0
    span_hi: float = 0.0
    relief: EdgeRelief | None = None


@dataclass
class SampleSpec:
    """One tactile press of one fragment's fracture edge."""

    frag_id: str
    edge_index: int
    side_sign: float  # +1 for the lower-id fragment, -1 for the other
    mirrored: bool
    view: RigidTransform2D  # assembly coords -> centred sensor coords


@dataclass
class FragmentTruth:
    id: str
    mask: np.ndarray  # assembly-frame partition mask
    material: str
    theta: float  # observation rotation, radians on the ANGLE_STEP grid
    centroid: tuple[float, float]
    color_mean: tuple[float, float, float]
    color_var: tuple[float, float, float]
    amp_scale: float = 1.0


@dataclass
class FracturedScene:
    shape: tuple[int, int]
    object_mask: np.ndarray
    fragments: list[FragmentTruth]
    edges: list[EdgeSpec]
    samples: list[SampleSpec] = field(default_factory=list)
    seed: int = 0
    roughness: float = 0.0
    amplitude: float = 1.0

    def fragment(self, frag_id: str) -> FragmentTruth:
        for f in self.fragments:
            if f.id == frag_id:
                return f
        raise KeyError(frag_id)

    def samples_of(self, frag_id: str) -> list[SampleSpec]:
        return [s for s in self.samples if s.frag_id == frag_id]

    def adjacent_ids(self, frag_id: str) -> set[str]:
        out = set()
        for e in self.edges:
            if e.id_a == frag_id:
                out.add(e.id_b)
            elif e.id_b == frag_id:
                out.add(e.id_a)
        return out


def shape_polygon(name: str, shape: tuple[int, int] = (160, 160)) -> np.ndarray:
    """Built-in object outlines: square, disc, hexagon."""
    h, w = shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    r = 0.44 * min(w, h)
    if name == "square":
        return np.array([[cx - r, cy - r], [cx + r, cy - r], [cx + r, cy + r], [cx - r, cy + r]])
    if name == "disc":
        t = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
        return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=1)
    if name == "hex":
        t = np.linspace(0.0, 2.0 * np.pi, 6, endpoint=False) + np.pi / 6.0
        return np.stack([cx + r * np.cos(t), cy + r * np.sin(t)], axis=1)
    raise ValueError(f"unknown shape {name!r} (use square, disc or hex)")


def polygon_mask(vertices: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Rasterise a simple polygon by the crossing-number rule at pixel centres."""
    verts = np.asarray(vertices, dtype=np.float64)
    if verts.ndim != 2 or verts.shape[0] < 3:
        raise ValueError("polygon needs at least 3 vertices")
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    inside = np.zeros(shape, dtype=bool)
    n = verts.shape[0]
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        cond = (y0 <= ys) != (y1 <= ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x0 + (ys - y0) * (x1 - x0) / (y1 - y0)
        inside ^= cond & (xs < xi)
    if not inside.any():
        raise ValueError("degenerate polygon: rasterised to an empty mask")
    return inside


def _smooth_displacement(shape: tuple[int, int], roughness: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Low-frequency vector noise used to roughen cell boundaries; the same
    displacement warps every pixel, keeping the partition exact."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    out = []
    for _ in range(2):
        acc = np.zeros(shape, dtype=np.float64)
        for _ in range(4):
            wavelength = rng.uniform(18.0, 48.0)
            ang = rng.uniform(0.0, 2.0 * np.pi)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            k = 2.0 * np.pi / wavelength
            acc += rng.uniform(0.5, 1.0) * np.sin(k * (xs * np.cos(ang) + ys * np.sin(ang)) + phase)
        peak = np.abs(acc).max()
        if peak > 0:
            acc *= (6.0 * roughness) / peak
        out.append(acc)
    return out[0], out[1]


def _connect_labels(labels: np.ndarray, mask: np.ndarray, n: int) -> np.ndarray:
    """Reassign minor disconnected islands of each label to the neighbouring
    label with the most contact, keeping the partition exact."""
    labels = labels.copy()
    for _ in range(16):
        changed = False
        for k in range(n):
            part = labels == k
            comp, nc = ndi.label(part, structure=FOUR_CONN)
            if nc <= 1:
                continue
            areas = ndi.sum_labels(np.ones_like(comp), comp, index=np.arange(1, nc + 1))
            keep = int(np.argmax(areas)) + 1
            for c in range(1, nc + 1):
                if c == keep:
                    continue
                island = comp == c
                ring = ndi.binary_dilation(island, structure=FOUR_CONN) & ~island & mask
                votes = labels[ring]
                votes = votes[votes != k]
                if votes.size == 0:
                    continue
                counts = np.bincount(votes, minlength=n)
                labels[island] = int(np.argmax(counts))
                changed = True
        if not changed:
            return labels
    return labels


def _edge_chain(labels: np.ndarray, a: int, b: int) -> np.ndarray:
    """Ordered midpoint chain between two touching cells."""
    pts = []
    la, lb = labels == a, labels == b
    right = la[:, :-1] & lb[:, 1:]
    ys, xs = np.nonzero(right)
    pts.extend([(x + 0.5, float(y)) for y, x in zip(ys.tolist(), xs.tolist())])
    left = lb[:, :-1] & la[:, 1:]
    ys, xs = np.nonzero(left)
    pts.extend([(x + 0.5, float(y)) for y, x in zip(ys.tolist(), xs.tolist())])
    down = la[:-1, :] & lb[1:, :]
    ys, xs = np.nonzero(down)
    pts.extend([(float(x), y + 0.5) for y, x in zip(ys.tolist(), xs.tolist())])
    up = lb[:-1, :] & la[1:, :]
    ys, xs = np.nonzero(up)
    pts.extend([(float(x), y + 0.5) for y, x in zip(ys.tolist(), xs.tolist())])
    if not pts:
        return np.zeros((0, 2), dtype=np.float64)
    arr = np.array(sorted(set(pts)), dtype=np.float64)
    # greedy nearest-neighbour chain from an extremal point
    start = int(np.lexsort((arr[:, 0], arr[:, 1]))[0])
    todo = np.ones(arr.shape[0], dtype=bool)
    order = [start]
    todo[start] = False
    cur = start
    while todo.any():
        d = np.linalg.norm(arr[todo] - arr[cur], axis=1)
        nxt_local = int(np.argmin(d))
        nxt = int(np.nonzero(todo)[0][nxt_local])
        if d[nxt_local] > 3.0:
            break  # disjoint stub; keep the main chain
        order.append(nxt)
        todo[nxt] = False
        cur = nxt
    return arr[order]


def _resample_smooth(chain: np.ndarray, step: float = 1.0, window: int = 7) -> np.ndarray:
    """Arc-length resample then moving-average the chain into a smooth polyline."""
    if chain.shape[0] < 2:
        return chain
    d = np.linalg.norm(np.diff(chain, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(d)])
    total = s[-1]
    if total <= step:
        return chain[[0, -1]]
    grid = np.arange(0.0, total + step / 2, step)
    x = np.interp(grid, s, chain[:, 0])
    y = np.interp(grid, s, chain[:, 1])
    if window > 1 and x.size > window:
        kern = np.ones(window) / window
        pad = window // 2
        xp = np.concatenate([np.full(pad, x[0]), x, np.full(pad, x[-1])])
        yp = np.concatenate([np.full(pad, y[0]), y, np.full(pad, y[-1])])
        x = np.convolve(xp, kern, mode="valid")
        y = np.convolve(yp, kern, mode="valid")
    return np.stack([x, y], axis=1)


def _segment_table(polyline: np.ndarray) -> tuple[np.ndarray, float]:
    d = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
    s0 = np.concatenate([[0.0], np.cumsum(d)[:-1]])
    segs = np.column_stack([polyline[:-1], polyline[1:], s0])
    return segs, float(d.sum())


def _quantized_angle(rng: np.random.Generator) -> float:
    """Observation angles sit at odd multiples of 45 degrees, so any two
    sensor frames differ by an exact multiple of 90 degrees. Mating presses
    then rasterise on commensurate grids (the flatland analogue of two
    rigidly opposed sensors on one gripper) and ground-truth alignments are
    grid-exact."""
    return math.radians(45.0 + 90.0 * float(rng.integers(0, 4)))


def fracture(
    vertices: np.ndarray,
    n_seeds: int,
    roughness: float,
    seed: int,
    shape: tuple[int, int] = (160, 160),
    material: str = "glass",
) -> FracturedScene:
    """Voronoi-style partition of the polygon with roughened shared edges.

    Pixels are assigned to the nearest site after a smooth seeded warp of the
    pixel coordinates, so cells stay an exact partition of the object mask.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    if material not in MATERIALS:
        raise ValueError(f"unknown material {material!r}")
    mask = polygon_mask(vertices, shape)
    if n_seeds > int(mask.sum()):
        raise ValueError("more seeds than foreground pixels")
    for attempt in range(32):
        rng = np.random.default_rng([seed, attempt])
        scene = _try_fracture(mask, n_seeds, roughness, seed, shape, material, rng)
        if scene is not None:
            return scene
    raise RuntimeError(f"could not fracture into {n_seeds} usable fragments (seed {seed})")


def _try_fracture(mask, n_seeds, roughness, seed, shape, material, rng) -> FracturedScene | None:
    h, w = shape
    ys, xs = np.nonzero(mask)
    sites = []
    while len(sites) < n_seeds:
        i = rng.integers(0, xs.size)
        p = (float(xs[i]), float(ys[i]))
        if all((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 > 36.0 for q in sites):
            sites.append(p)
    sites_a = np.array(sites)

    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = _smooth_displacement(shape, roughness, rng)
    px = gx + dx
    py = gy + dy
    dist = (px[:, :, None] - sites_a[None, None, :, 0]) ** 2 + (py[:, :, None] - sites_a[None, None, :, 1]) ** 2
    labels = np.where(mask, np.argmin(dist, axis=2), -1)
    labels = _connect_labels(labels, mask, n_seeds)
    counts = [(labels == k).sum() for k in range(n_seeds)]
    if min(counts) < 60:
        return None

    fragments = []
    for k in range(n_seeds):
        fmask = labels == k
        fys, fxs = np.nonzero(fmask)
        mat = material
        scale, color, cvar = MATERIAL_PRESETS[mat]
        amp_scale = scale * rng.uniform(0.95, 1.05)
        cm = tuple(float(np.clip(c + rng.normal(0.0, 0.01), 0.0, 1.0)) for c in color)
        cv = tuple(float(max(cvar * rng.uniform(0.8, 1.2), 1e-4)) for _ in range(3))
        fragments.append(
            FragmentTruth(
                id=f"f{k:02d}",
                mask=fmask,
                material=mat,
                theta=_quantized_angle(rng),
                centroid=(float(fxs.mean()), float(fys.mean())),
                color_mean=cm,
                color_var=cv,
                amp_scale=amp_scale,
            )
        )

    edges = []
    for a in range(n_seeds):
        for b in range(a + 1, n_seeds):
            chain = _edge_chain(labels, a, b)
            if chain.shape[0] < 4:
                continue
            poly = _resample_smooth(chain)
            segs, length = _segment_table(poly)
            edges.append(
                EdgeSpec(
                    id_a=f"f{a:02d}",
                    id_b=f"f{b:02d}",
                    polyline=poly,
                    segs=segs,
                    length=length,
                    sampleable=length >= MIN_EDGE_LEN,
                )
            )
    if n_seeds > 1:
        covered = {f.id for f in fragments if any(e.sampleable and f.id in (e.id_a, e.id_b) for e in edges)}
        if len(covered) < n_seeds:
            return None
        # the adjacency graph over sampleable edges must connect the scene
        ids = {f.id: i for i, f in enumerate(fragments)}
        parent = list(range(n_seeds))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for e in edges:
            if e.sampleable:
                ra, rb = find(ids[e.id_a]), find(ids[e.id_b])
                parent[ra] = rb
        if len({find(i) for i in range(n_seeds)}) != 1:
            return None

    scene = FracturedScene(
        shape=shape,
        object_mask=mask,
        fragments=fragments,
        edges=edges,
        seed=seed,
        roughness=roughness,
        amplitude=1.0,
    )
    return scene


def synth_edge_heights(scene: FracturedScene, amplitude: float, seed: int) -> None:
    """Attach complementary relief blobs to every adjacency and build the
    per-side sensor views. Side A (lower fragment id) keeps the relief sign;
    side B carries the negated relief and a mirrored sensor view."""
    if not scene.edges:
        raise ValueError("scene has no adjacency to synthesise relief for")
    scene.amplitude = amplitude
    scene.samples = []
    for ei, edge in enumerate(scene.edges):
        rng = np.random.default_rng([seed, 101, ei])
        span = min(edge.length, MAX_SAMPLE_SPAN)
        lo = (edge.length - span) / 2.0
        hi = lo + span
        edge.span_lo, edge.span_hi = lo, hi
        m_lo, m_hi = _relief_arc_margins(span)
        usable = span - m_lo - m_hi
        k = int(np.clip(round(usable / 14.0), 2, 3))
        arc_pos = _place_blobs(rng, lo + m_lo, hi - m_hi, k, min_sep=16.0)
        signs = np.ones(k)
        signs[1::2] = -1.0
        if rng.integers(0, 2) == 1:
            signs = -signs
        heights = 1.0 + 0.25 * rng.uniform(-1.0, 1.0, size=k)
        amp_a = scene.fragment(edge.id_a).amp_scale
        amp_b = scene.fragment(edge.id_b).amp_scale
        pair_amp = amplitude * 0.5 * (amp_a + amp_b)
        centers = np.stack([_point_at_arc(edge, s) for s in arc_pos])
        edge.relief = EdgeRelief(
            centers=centers,
            signs=signs * heights,
            arc_pos=arc_pos,
            sigma=BLOB_SIGMA,
            amplitude=1.5 * pair_amp,
            base=pair_amp,
        )
        if not edge.sampleable:
            continue
        mid = _point_at_arc(edge, (lo + hi) / 2.0)
        pair: list[SampleSpec] = []
        for frag_id, mirrored, sign in ((edge.id_a, False, 1.0), (edge.id_b, True, -1.0)):
            frag = scene.fragment(frag_id)
            view = _view_transform(frag)
            anchor = np.round(view.apply(mid[None, :])[0])
            jx, jy = rng.integers(-6, 7), rng.integers(-6, 7)
            shift = RigidTransform2D(False, 0.0, -(anchor[0] + jx), -(anchor[1] + jy))
            mirror = RigidTransform2D(True, 0.0, 0.0, 0.0) if mirrored else RigidTransform2D()
            pair.append(
                SampleSpec(
                    frag_id=frag_id,
                    edge_index=ei,
                    side_sign=sign,
                    mirrored=mirrored,
                    view=mirror.compose(shift).compose(view),
                )
            )
        _commensurate(pair[0], pair[1])
        scene.samples.extend(pair)


def _view_transform(frag: FragmentTruth) -> RigidTransform2D:
    c, s = math.cos(frag.theta), math.sin(frag.theta)
    gx, gy = frag.centroid
    return RigidTransform2D(False, frag.theta, -(c * gx - s * gy), -(s * gx + c * gy))


def _commensurate(samp_a: SampleSpec, samp_b: SampleSpec) -> None:
    """Nudge sample_b's sensor frame so the exact pair transform carries an
    integer translation; with the 90-degree-multiple relative rotation the
    two sensor grids then sample identical physical points."""
    t = samp_a.view.compose(samp_b.view.inverse())
    resid = np.array([t.tx - round(t.tx), t.ty - round(t.ty)])
    # pre-shifting sample_b's frame by eps changes the pair translation by -L@eps
    c, s = math.cos(t.theta), math.sin(t.theta)
    sign = -1.0 if t.mirror else 1.0
    lin = np.array([[c * sign, -s], [s * sign, c]])
    eps = np.linalg.solve(lin, resid)
    samp_b.view = RigidTransform2D(False, 0.0, float(eps[0]), float(eps[1])).compose(samp_b.view)


def _place_blobs(rng: np.random.Generator, lo: float, hi: float, k: int, min_sep: float) -> np.ndarray:
    """Seeded blob arc positions with a minimum separation; placement is
    deliberately non-symmetric so arc reversal never reproduces the pattern."""
    if hi <= lo:
        mid = 0.5 * (lo + hi)
        return mid + np.linspace(-2.0, 2.0, k)
    if hi - lo < (k - 1) * min_sep:
        return np.linspace(lo, hi, k) + rng.uniform(-2.0, 2.0, size=k)
    for _ in range(200):
        pos = np.sort(rng.uniform(lo, hi, size=k))
        if k == 1 or np.diff(pos).min() >= min_sep:
            return pos
    return np.linspace(lo, hi, k) + rng.uniform(-2.0, 2.0, size=k)


def _point_at_arc(edge: EdgeSpec, s: float) -> np.ndarray:
    d = np.linalg.norm(np.diff(edge.polyline, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(d)])
    x = np.interp(s, cum, edge.polyline[:, 0])
    y = np.interp(s, cum, edge.polyline[:, 1])
    return np.array([x, y])


def _tube_cap(dist: np.ndarray) -> np.ndarray:
    """Contact dome profile across the tube: cosine-squared from 1 on the
    edge curve to 0 at the tube rim (C1 at both ends)."""
    cap = np.zeros_like(dist)
    inside = dist < TUBE_HALFWIDTH
    cap[inside] = np.cos(dist[inside] * (np.pi / 2.0) / TUBE_HALFWIDTH) ** 2
    return cap


def _relief_window(dist: np.ndarray) -> np.ndarray:
    """Confine relief to the tube core so the rim slope profile (and with it
    the detected contact boundary) is identical for both sides of the edge."""
    w = np.zeros_like(dist)
    w[dist <= RELIEF_FLAT] = 1.0
    ramp = (dist > RELIEF_FLAT) & (dist < RELIEF_CUT)
    w[ramp] = np.cos((dist[ramp] - RELIEF_FLAT) * (np.pi / 2.0) / (RELIEF_CUT - RELIEF_FLAT)) ** 2
    return w


def _relief_arc_margins(span: float) -> tuple[float, float]:
    """Relief-free margins at the two span ends; the detected contact
    boundary at the arc tapers must not depend on the relief sign."""
    return min(16.0, 0.27 * span), min(22.0, 0.37 * span)


def _relief_arc_window(arc: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    m_lo, m_hi = _relief_arc_margins(span)
    a = lo + max(m_lo - 8.0, 2.0)
    b = hi - max(m_hi - 8.0, 2.0)
    ramp = 8.0
    w = np.ones_like(arc)
    w[(arc < a) | (arc > b)] = 0.0
    rise = (arc >= a) & (arc < a + ramp) & (arc <= b)
    w[rise] = np.sin((arc[rise] - a) * (np.pi / 2.0) / ramp) ** 2
    fall = (arc > b - ramp) & (arc <= b) & (arc >= a)
    w[fall] = np.minimum(w[fall], np.sin((b - arc[fall]) * (np.pi / 2.0) / ramp) ** 2)
    return w


def _arc_taper(arc: np.ndarray, lo: float, hi: float) -> np.ndarray:
    t = np.ones_like(arc)
    t[(arc < lo) | (arc > hi)] = 0.0
    rise = (arc >= lo) & (arc < lo + TAPER_LO)
    t[rise] = np.sin((arc[rise] - lo) * (np.pi / 2.0) / TAPER_LO) ** 2
    fall = (arc > hi - TAPER_HI) & (arc <= hi)
    t[fall] = np.sin((hi - arc[fall]) * (np.pi / 2.0) / TAPER_HI) ** 2
    return t


def sample_true_field(scene: FracturedScene, sample: SampleSpec) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth sensor-frame height field and its contact support."""
    edge = scene.edges[sample.edge_index]
    relief = edge.relief
    if relief is None:
        raise ValueError("edge relief missing; call synth_edge_heights first")
    gy, gx = np.mgrid[0:SAMPLE_SIZE, 0:SAMPLE_SIZE].astype(np.float64)
    pts = np.stack([gx.ravel() - SAMPLE_CENTER, gy.ravel() - SAMPLE_CENTER], axis=1)
    q = sample.view.inverse().apply(pts)
    dist, arc = kernels.polyline_field(edge.segs, q)
    cap = _tube_cap(dist) * _arc_taper(arc, edge.span_lo, edge.span_hi)
    relief_sum = np.zeros(q.shape[0], dtype=np.float64)
    for c, b in zip(relief.centers, relief.signs):
        dd = (q[:, 0] - c[0]) ** 2 + (q[:, 1] - c[1]) ** 2
        relief_sum += b * np.exp(-dd / (2.0 * relief.sigma**2))
    relief_sum *= _relief_window(dist) * _relief_arc_window(arc, edge.span_lo, edge.span_hi)
    height = cap * (relief.base + sample.side_sign * relief.amplitude * relief_sum)
    support = (dist <= TUBE_HALFWIDTH) & (cap > 0.0)
    return height.reshape(SAMPLE_SIZE, SAMPLE_SIZE), support.reshape(SAMPLE_SIZE, SAMPLE_SIZE)


def edge_profiles(scene: FracturedScene, edge_index: int, step: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """1D relief profiles h(s) along the edge for side A and side B;
    complementary by construction: h_a + h_b = 2 * base."""
    edge = scene.edges[edge_index]
    relief = edge.relief
    if relief is None:
        raise ValueError("edge relief missing; call synth_edge_heights first")
    s = np.arange(edge.span_lo, edge.span_hi + step / 2, step)
    pts = np.stack([_point_at_arc(edge, v) for v in s])
    total = np.zeros(s.size)
    for c, b in zip(relief.centers, relief.signs):
        dd = ((pts - c) ** 2).sum(axis=1)
        total += b * np.exp(-dd / (2.0 * relief.sigma**2))
    total *= _relief_arc_window(s, edge.span_lo, edge.span_hi)
    h_a = relief.base + relief.amplitude * total
    h_b = relief.base - relief.amplitude * total
    return np.stack([s, h_a], axis=1), np.stack([s, h_b], axis=1)


def fd_gradients(height: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients, one-sided on the borders."""
    gx = np.zeros_like(height)
    gy = np.zeros_like(height)
    gx[:, 1:-1] = (height[:, 2:] - height[:, :-2]) * 0.5
    gx[:, 0] = height[:, 1] - height[:, 0]
    gx[:, -1] = height[:, -1] - height[:, -2]
    gy[1:-1, :] = (height[2:, :] - height[:-2, :]) * 0.5
    gy[0, :] = height[1, :] - height[0, :]
    gy[-1, :] = height[-1, :] - height[-2, :]
    return gx, gy


def render_tactile(
    height: np.ndarray,
    lights: np.ndarray = DEFAULT_LIGHTS,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> TactileFrame:
    """Lambertian three-light render of a height field."""
    gx, gy = fd_gradients(np.asarray(height, dtype=np.float64))
    denom = np.sqrt(1.0 + gx * gx + gy * gy)
    n = np.stack([-gx / denom, -gy / denom, 1.0 / denom], axis=0)
    channels = np.empty((3,) + height.shape, dtype=np.float64)
    for k in range(3):
        channels[k] = np.maximum(0.0, lights[k, 0] * n[0] + lights[k, 1] * n[1] + lights[k, 2] * n[2])
    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        channels = channels + rng.normal(0.0, noise_sigma, size=channels.shape)
    return TactileFrame(channels=np.clip(channels, 0.0, 1.0), lights=lights)


def flat_baseline(lights: np.ndarray = DEFAULT_LIGHTS, shape: tuple[int, int] = (SAMPLE_SIZE, SAMPLE_SIZE)) -> TactileFrame:
    return render_tactile(np.zeros(shape), lights=lights, noise_sigma=0.0)


def observed_mask(scene: FracturedScene, frag_id: str, canvas: tuple[int, int] | None = None) -> np.ndarray:
    """Fragment mask as it lies on the table: rotated by its observation
    angle about its centroid, re-centred on the canvas."""
    frag = scene.fragment(frag_id)
    if canvas is None:
        canvas = scene.shape
    ch, cw = canvas
    view = _view_transform(frag)
    centre_shift = RigidTransform2D(False, 0.0, (cw - 1) / 2.0, (ch - 1) / 2.0)
    full = centre_shift.compose(view)
    inv = full.inverse()
    aff = np.empty((2, 3))
    c, s = math.cos(inv.theta), math.sin(inv.theta)
    aff[0] = (c, -s, inv.tx)
    aff[1] = (s, c, inv.ty)
    warped = kernels.warp_bilinear(frag.mask.astype(np.float64), aff, canvas)
    return warped > 0.5


def ground_truth_pair_transform(sample_a: SampleSpec, sample_b: SampleSpec) -> RigidTransform2D:
    """Exact transform taking sample_b sensor coords onto sample_a's."""
    return sample_a.view.compose(sample_b.view.inverse())


def rotate_mask(mask: np.ndarray, theta: float, about: tuple[float, float] | None = None) -> np.ndarray:
    """Bilinear rotation of a binary mask about a point (default centroid),
    re-thresholded at 0.5."""
    m = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(m)
    if about is None:
        about = (float(xs.mean()), float(ys.mean()))
    c, s = math.cos(-theta), math.sin(-theta)
    inv = np.array(
        [
            [c, -s, about[0] - c * about[0] + s * about[1]],
            [s, c, about[1] - s * about[0] - c * about[1]],
        ]
    )
    return kernels.warp_bilinear(m.astype(np.float64), inv, m.shape) > 0.5


@dataclass
class MixedScene:
    """Several fractured objects in one workspace, one material each; the two
    crystal objects are shape twins (same fracture geometry, different
    observation poses) and one plastic fragment is held out of the database."""

    objects: list[tuple[str, FracturedScene]]
    twin_objects: tuple[str, str]
    holdout: str  # global fragment id, e.g. "plastic0/f01"


def global_id(obj_name: str, frag_id: str) -> str:
    return f"{obj_name}/{frag_id}"


def mixed_scene(seed: int, amplitude: float = 4.0, roughness: float = 0.6) -> MixedScene:
    """Seeded 20-fragment, five-material workspace with a shape-twin pair."""
    spec = [
        ("glass0", "glass", "square", 1),
        ("acrylic0", "acrylic", "disc", 2),
        ("plastic0", "plastic", "hex", 3),
        ("crystalC0", "colored_crystal", "square", 4),
        ("crystalL0", "colorless_crystal", "square", 4),  # twin geometry
    ]
    objects = []
    for name, material, shape, sub in spec:
        poly = shape_polygon(shape)
        scene = fracture(poly, 4, roughness, seed=seed * 101 + sub, material=material)
        if name == "crystalL0":
            rng = np.random.default_rng([seed, 909])
            for frag in scene.fragments:
                frag.theta = _quantized_angle(rng)
        synth_edge_heights(scene, amplitude=amplitude, seed=seed * 113 + sub)
        objects.append((name, scene))
    return MixedScene(objects=objects, twin_objects=("crystalC0", "crystalL0"), holdout="plastic0/f01")


def primary_edge(scene: FracturedScene, frag_id: str) -> int:
    """The fragment's longest sampleable edge (the one its database profile
    is stored for); ties break to the lowest edge index."""
    candidates = [
        (ei, e)
        for ei, e in enumerate(scene.edges)
        if e.sampleable and frag_id in (e.id_a, e.id_b)
    ]
    if not candidates:
        raise ValueError(f"fragment {frag_id} has no sampleable edge")
    return max(candidates, key=lambda t: (t[1].length, -t[0]))[0]


def fresh_sample(scene: FracturedScene, frag_id: str, seed: int) -> SampleSpec:
    """Re-press the fragment's longest sampleable edge under a new
    observation pose (the fallback path's fresh tactile data)."""
    ei = primary_edge(scene, frag_id)
    edge = scene.edges[ei]
    stored = next(s for s in scene.samples if s.frag_id == frag_id and s.edge_index == ei)
    rng = np.random.default_rng([seed, 33, ei])
    frag = scene.fragment(frag_id)
    retake = FragmentTruth(
        id=frag.id,
        mask=frag.mask,
        material=frag.material,
        theta=_quantized_angle(rng),
        centroid=frag.centroid,
        color_mean=frag.color_mean,
        color_var=frag.color_var,
        amp_scale=frag.amp_scale,
    )
    view = _view_transform(retake)
    mid = _point_at_arc(edge, (edge.span_lo + edge.span_hi) / 2.0)
    anchor = np.round(view.apply(mid[None, :])[0])
    jx, jy = rng.integers(-6, 7), rng.integers(-6, 7)
    shift = RigidTransform2D(False, 0.0, -(anchor[0] + jx), -(anchor[1] + jy))
    mirror = RigidTransform2D(True, 0.0, 0.0, 0.0) if stored.mirrored else RigidTransform2D()
    fresh = SampleSpec(
        frag_id=frag_id,
        edge_index=ei,
        side_sign=stored.side_sign,
        mirrored=stored.mirrored,
        view=mirror.compose(shift).compose(view),
    )
    _commensurate(stored, fresh)
    return fresh


def notched_square(angle_deg: float, seed: int = 0, shape: tuple[int, int] = (160, 160)) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Partial-fracture test scene: a square body with an asymmetric notch.

    Returns (fragment, gap, body): the gap is the notch region cut from the
    square, the fragment is the gap rotated by -angle about its centroid, so
    a gap aligner should recover +angle.
    """
    rng = np.random.default_rng([seed, 5150])
    h, w = shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    half = 0.40 * min(w, h)
    square = polygon_mask(
        np.array([[cx - half, cy - half], [cx + half, cy - half], [cx + half, cy + half], [cx - half, cy + half]]),
        shape,
    )
    # jagged pentagon notch, deliberately asymmetric so the sweep peak is unique
    n0 = np.array([cx - 18.0, cy + 4.0])
    verts = n0 + np.array([[0.0, 0.0], [34.0, -9.0], [46.0, 14.0], [22.0, 30.0], [-4.0, 21.0]])
    verts += rng.uniform(-2.0, 2.0, size=verts.shape)
    gap = polygon_mask(verts, shape) & square
    body = square & ~gap
    fragment = rotate_mask(gap, -math.radians(angle_deg))
    return fragment, gap, body


def edge_samples(scene: FracturedScene, edge_index: int) -> tuple[SampleSpec, SampleSpec]:
    pair = [s for s in scene.samples if s.edge_index == edge_index]
    if len(pair) != 2:
        raise ValueError(f"edge {edge_index} has {len(pair)} samples, expected 2")
    return pair[0], pair[1]
