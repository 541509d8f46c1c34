"""Photometric tactile frames to contact masks, normals, gradients and
gauge-fixed height maps: segmentation, per-pixel light-system inversion,
divergence assembly with Neumann borders, and the cosine-domain solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi
from scipy.fft import dctn, idctn

from . import kernels
from .raster import largest_component

EPS_Z = 1e-3
CONTACT_TAU = 0.04
MAX_LIGHT_CONDITION = 1e6


class ContactAreaWarning(UserWarning):
    """Contact segmentation covered nearly the whole frame."""


@dataclass
class TactileFrame:
    """Three intensity channels in [0, 1] plus their unit light directions."""

    channels: np.ndarray  # (3, h, w) float64
    lights: np.ndarray  # (3, 3) float64, rows are unit vectors
    light_condition: float = field(init=False)

    def __post_init__(self) -> None:
        self.channels = np.asarray(self.channels, dtype=np.float64)
        self.lights = np.asarray(self.lights, dtype=np.float64)
        if self.channels.ndim != 3 or self.channels.shape[0] != 3:
            raise ValueError(f"channels must be (3, h, w), got {self.channels.shape}")
        if self.lights.shape != (3, 3):
            raise ValueError("lights must be three 3-vectors")
        lo, hi = self.channels.min(), self.channels.max()
        if lo < -1e-12 or hi > 1.0 + 1e-12:
            raise ValueError(f"intensities outside [0, 1]: range [{lo}, {hi}]")
        norms = np.linalg.norm(self.lights, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError(f"light vectors must be unit norm, got {norms}")
        self.light_condition = float(np.linalg.cond(self.lights))

    @property
    def shape(self) -> tuple[int, int]:
        return self.channels.shape[1], self.channels.shape[2]


@dataclass
class NormalMap:
    normals: np.ndarray  # (h, w, 3)
    valid: np.ndarray  # (h, w) bool


@dataclass
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    domain: np.ndarray

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.gx, self.gy)


@dataclass
class HeightMap:
    """Scalar height over a domain; the gauge convention is zero mean."""

    h: np.ndarray
    domain: np.ndarray

    def __post_init__(self) -> None:
        self.h = np.asarray(self.h, dtype=np.float64)
        self.domain = np.asarray(self.domain, dtype=bool)

    def domain_mean(self) -> float:
        return float(self.h[self.domain].mean())

    def height_range(self) -> float:
        vals = self.h[self.domain]
        return float(vals.max() - vals.min())


@dataclass
class ExtremaSet:
    maxima: list[tuple[int, int, float]]  # (x, y, height)
    minima: list[tuple[int, int, float]]
    height_range: float

    def max_points(self) -> np.ndarray:
        return np.array([(x, y) for x, y, _ in self.maxima], dtype=np.float64).reshape(-1, 2)

    def min_points(self) -> np.ndarray:
        return np.array([(x, y) for x, y, _ in self.minima], dtype=np.float64).reshape(-1, 2)


def segment_contact(frame: TactileFrame, baseline: TactileFrame, tau: float = CONTACT_TAU) -> np.ndarray:
    """Threshold the max-channel deviation from the baseline frame, clean
    with a 3x3 open/close, and keep the largest component."""
    if frame.shape != baseline.shape:
        raise ValueError("frame and baseline dimensions differ")
    if not np.allclose(frame.lights, baseline.lights):
        raise ValueError("frame and baseline light rigs differ")
    diff = np.abs(frame.channels - baseline.channels).max(axis=0)
    mask = diff > tau
    if not mask.any():
        return mask
    box = np.ones((3, 3), dtype=bool)
    mask = ndi.binary_opening(mask, structure=box)
    mask = ndi.binary_closing(mask, structure=box)
    mask = largest_component(mask)
    ratio = mask.mean()
    if ratio > 0.9:
        warnings.warn(
            f"contact covers {ratio:.0%} of the frame; segmentation is suspect",
            ContactAreaWarning,
            stacklevel=2,
        )
    return mask


def solve_normals(frame: TactileFrame, contact: np.ndarray) -> NormalMap:
    """Least-squares inversion of the three-light system at contact pixels."""
    if frame.light_condition >= MAX_LIGHT_CONDITION:
        raise ValueError(f"light matrix is ill-conditioned (cond={frame.light_condition:.3g})")
    contact = np.asarray(contact, dtype=bool)
    if contact.shape != frame.shape:
        raise ValueError("contact mask dimensions differ from frame")
    if not contact.any():
        raise ValueError("empty contact mask")
    h, w = frame.shape
    pinv = np.linalg.pinv(frame.lights)
    intens = frame.channels[:, contact]  # (3, n)
    raw = pinv @ intens  # (3, n)
    norms = np.linalg.norm(raw, axis=0)
    ok = norms >= 1e-9
    unit = np.zeros_like(raw)
    unit[:, ok] = raw[:, ok] / norms[ok]
    ok &= unit[2] > EPS_Z
    normals = np.zeros((h, w, 3), dtype=np.float64)
    valid = np.zeros((h, w), dtype=bool)
    ys, xs = np.nonzero(contact)
    normals[ys, xs, :] = unit.T
    valid[ys[ok], xs[ok]] = True
    normals[~valid] = 0.0
    return NormalMap(normals=normals, valid=valid)


def normals_to_gradients(nmap: NormalMap, eps_z: float = EPS_Z) -> GradientField:
    """Gx = -nx/nz, Gy = -ny/nz on valid pixels; zero elsewhere."""
    nz = nmap.normals[..., 2]
    domain = nmap.valid & (nz > eps_z)
    gx = np.zeros(nz.shape, dtype=np.float64)
    gy = np.zeros(nz.shape, dtype=np.float64)
    gx[domain] = -nmap.normals[..., 0][domain] / nz[domain]
    gy[domain] = -nmap.normals[..., 1][domain] / nz[domain]
    return GradientField(gx=gx, gy=gy, domain=domain)


def divergence(g: GradientField) -> np.ndarray:
    """Divergence of the gradient field, central in the interior, with the
    border cells carrying the Neumann flux (half-sum of the two adjacent
    gradient samples) so the cosine-domain solve sees consistent data."""
    gx, gy = g.gx, g.gy
    h, w = gx.shape
    if h < 2 or w < 2:
        raise ValueError("divergence needs at least a 2x2 grid")
    f = np.zeros((h, w), dtype=np.float64)
    f[:, 1:-1] += (gx[:, 2:] - gx[:, :-2]) * 0.5
    f[:, 0] += (gx[:, 0] + gx[:, 1]) * 0.5
    f[:, -1] -= (gx[:, -1] + gx[:, -2]) * 0.5
    f[1:-1, :] += (gy[2:, :] - gy[:-2, :]) * 0.5
    f[0, :] += (gy[0, :] + gy[1, :]) * 0.5
    f[-1, :] -= (gy[-1, :] + gy[-2, :]) * 0.5
    return f


def poisson_solve_dct(f: np.ndarray, domain: np.ndarray | None = None) -> HeightMap:
    """Solve the Neumann Poisson system in the type-II orthonormal cosine
    domain and gauge the result to zero mean over the domain."""
    f = np.asarray(f, dtype=np.float64)
    h, w = f.shape
    if h < 2 or w < 2:
        raise ValueError("poisson solve needs at least a 2x2 grid")
    fhat = dctn(f, type=2, norm="ortho")
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    lam = (2.0 * np.cos(np.pi * u / w))[None, :] + (2.0 * np.cos(np.pi * v / h))[:, None] - 4.0
    lam[0, 0] = 1.0  # gauge: zero out the constant mode below
    hhat = fhat / lam
    hhat[0, 0] = 0.0
    height = idctn(hhat, type=2, norm="ortho")
    if domain is None:
        domain = np.ones((h, w), dtype=bool)
    else:
        domain = np.asarray(domain, dtype=bool)
    height = height - height[domain].mean()
    return HeightMap(h=height, domain=domain)


def find_extrema(heightmap: HeightMap, window: int = 5, prominence: float | None = None) -> ExtremaSet:
    """Strict local extrema over a Chebyshev window, prominence-filtered
    against the opposite domain extreme and sorted by |height| descending."""
    domain = heightmap.domain
    if not domain.any():
        raise ValueError("height map has an empty domain")
    h = heightmap.h
    vals = h[domain]
    lo, hi = float(vals.min()), float(vals.max())
    rng = hi - lo
    if prominence is None:
        prominence = 0.05 * rng
    is_max, is_min = kernels.local_extrema(h, domain, int(window))

    def collect(flags: np.ndarray, keep: np.ndarray) -> list[tuple[int, int, float]]:
        ys, xs = np.nonzero(flags & keep)
        items = [(int(x), int(y), float(h[y, x])) for x, y in zip(xs, ys)]
        items.sort(key=lambda t: (-abs(t[2]), t[1], t[0]))
        return items

    maxima = collect(is_max, h > lo + prominence)
    minima = collect(is_min, h < hi - prominence)
    return ExtremaSet(maxima=maxima, minima=minima, height_range=rng)


def reconstruct(frame: TactileFrame, baseline: TactileFrame | None = None,
                contact: np.ndarray | None = None) -> tuple[np.ndarray, GradientField, HeightMap]:
    """Full chain: contact mask, gradients, and gauge-fixed height map."""
    if contact is None:
        if baseline is None:
            raise ValueError("reconstruct needs a baseline frame or an explicit contact mask")
        contact = segment_contact(frame, baseline)
    nmap = solve_normals(frame, contact)
    grads = normals_to_gradients(nmap)
    f = divergence(grads)
    height = poisson_solve_dct(f, domain=grads.domain)
    return contact, grads, height
