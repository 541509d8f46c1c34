"""Planar rigid transforms with an optional pre-rotation midline mirror.

A transform acts on centred coordinates (origin at the tactile image
centre), so the mirror is the flip about the image's vertical midline:

    T(p) = R(theta) . M^mirror . p + (tx, ty),   M(x, y) = (-x, y)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def _wrap(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    return t


@dataclass(frozen=True)
class RigidTransform2D:
    mirror: bool = False
    theta: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", _wrap(float(self.theta)))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (n, 2) array of centred (x, y) points."""
        p = np.asarray(points, dtype=np.float64)
        x = -p[..., 0] if self.mirror else p[..., 0]
        y = p[..., 1]
        c, s = math.cos(self.theta), math.sin(self.theta)
        out = np.empty_like(p)
        out[..., 0] = c * x - s * y + self.tx
        out[..., 1] = s * x + c * y + self.ty
        return out

    def compose(self, other: "RigidTransform2D") -> "RigidTransform2D":
        """Return self applied after other: (self.compose(other))(p) = self(other(p))."""
        mirror = self.mirror != other.mirror
        theta = self.theta + (-other.theta if self.mirror else other.theta)
        t2 = np.array([-other.tx if self.mirror else other.tx, other.ty])
        c, s = math.cos(self.theta), math.sin(self.theta)
        tx = c * t2[0] - s * t2[1] + self.tx
        ty = s * t2[0] + c * t2[1] + self.ty
        return RigidTransform2D(mirror, theta, tx, ty)

    def inverse(self) -> "RigidTransform2D":
        if self.mirror:
            theta = self.theta
            c, s = math.cos(theta), math.sin(theta)
            mx, my = -self.tx, self.ty
            return RigidTransform2D(True, theta, -(c * mx - s * my), -(s * mx + c * my))
        theta = -self.theta
        c, s = math.cos(theta), math.sin(theta)
        return RigidTransform2D(False, theta, -(c * self.tx - s * self.ty), -(s * self.tx + c * self.ty))

    def rotation_deg(self) -> float:
        return math.degrees(self.theta)

    def inverse_pixel_affine(self, center: tuple[float, float]) -> np.ndarray:
        """(2, 3) affine taking output pixel coords to input pixel coords.

        Treats the transform as mapping input pixels to output pixels about
        the given centre; the result feeds the bilinear warp kernels.
        """
        inv = self.inverse()
        cx, cy = center
        c, s = math.cos(inv.theta), math.sin(inv.theta)
        sign = -1.0 if inv.mirror else 1.0
        # q = R M (p - c) + c + t, expanded to an affine in pixel coords
        a = np.empty((2, 3), dtype=np.float64)
        a[0, 0] = c * sign
        a[0, 1] = -s
        a[0, 2] = -c * sign * cx + s * cy + cx + inv.tx
        a[1, 0] = s * sign
        a[1, 1] = c
        a[1, 2] = -s * sign * cx - c * cy + cy + inv.ty
        return a


def angle_diff(a: float, b: float) -> float:
    """Circular difference |a - b| wrapped to [0, pi]."""
    d = math.fmod(abs(a - b), TWO_PI)
    return min(d, TWO_PI - d)
