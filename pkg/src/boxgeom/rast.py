"""Rasterized 3D bounding box: four binary channels (front, rear, side, roof)
cropped to the vehicle's 2D bounding box."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .box3d import FACES, Box3D
from .errors import DegenerateInput
from .geom import Rect, as_point, as_points

CHANNELS = ("front", "rear", "side", "roof")


def _cross_terms(xs, ys, q: np.ndarray) -> list[np.ndarray]:
    out = []
    for i in range(4):
        a, b = q[i], q[(i + 1) % 4]
        out.append((b[0] - a[0]) * (ys - a[1]) - (b[1] - a[1]) * (xs - a[0]))
    return out


def _exact_inside(x: Fraction, y: Fraction, q: list[tuple[Fraction, Fraction]]) -> bool:
    pos = neg = True
    for i in range(4):
        (ax, ay), (bx, by) = q[i], q[(i + 1) % 4]
        c = (bx - ax) * (y - ay) - (by - ay) * (x - ax)
        pos &= c >= 0
        neg &= c <= 0
    return pos or neg


def _inside_mask(xs, ys, quad, exact_point) -> np.ndarray:
    """Inclusive inside test, exact for the points ``exact_point(index)`` names.

    The float signed areas decide every point outside a narrow band around
    the edges; points inside the band are re-evaluated in rational arithmetic.
    """
    q = as_points(quad, 4)
    crosses = _cross_terms(xs, ys, q)
    scale = max(1.0, float(np.abs(q).max()), float(np.abs(xs).max(initial=0)), float(np.abs(ys).max(initial=0)))
    band = 1e-9 * scale**2
    pos = np.ones(xs.shape, dtype=bool)
    neg = np.ones(xs.shape, dtype=bool)
    unsure = np.zeros(xs.shape, dtype=bool)
    for c in crosses:
        pos &= c >= -band
        neg &= c <= band
        unsure |= np.abs(c) <= band
    inside = pos | neg
    unsure &= inside
    if unsure.any():
        qf = [(Fraction(float(x)), Fraction(float(y))) for x, y in q]
        for idx in zip(*np.nonzero(unsure)):
            inside[idx] = _exact_inside(*exact_point(idx), qf)
    return inside


def points_in_quad(xs, ys, quad) -> np.ndarray:
    """Vectorized inclusive inside test for a convex quad of either winding.

    Exact for the given float coordinates: boundary points count as inside.
    """
    xs, ys = np.broadcast_arrays(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
    shape = xs.shape
    xs, ys = xs.reshape(-1), ys.reshape(-1)
    inside = _inside_mask(xs, ys, quad, lambda idx: (Fraction(float(xs[idx])), Fraction(float(ys[idx]))))
    return inside.reshape(shape)


def point_in_quad(p, quad) -> bool:
    p = as_point(p)
    return bool(points_in_quad(np.array(p[0]), np.array(p[1]), quad))


@dataclass(frozen=True, eq=False)
class RastMask:
    data: np.ndarray  # (h, w, 4) uint8 of 0/1
    crop: Rect

    def to_png_array(self) -> np.ndarray:
        return (self.data * 255).astype(np.uint8)


def pixel_centers(bbox2d: Rect, out_w: int, out_h: int) -> tuple[np.ndarray, np.ndarray]:
    """Image coordinates of the output pixel centres, mapped affinely from
    ``bbox2d`` onto an ``out_h x out_w`` grid."""
    sx = bbox2d.width / out_w
    sy = bbox2d.height / out_h
    cols = bbox2d.x0 + (np.arange(out_w) + 0.5) * sx
    rows = bbox2d.y0 + (np.arange(out_h) + 0.5) * sy
    return np.meshgrid(cols, rows)


def rasterize(box: Box3D, bbox2d: Rect, out_w: int, out_h: int) -> RastMask:
    """Four-channel face mask; shared edges resolved front/rear > side > roof."""
    box.validate()
    if bbox2d.area <= 0:
        raise DegenerateInput("2D bounding box has zero area")
    if out_w < 1 or out_h < 1:
        raise DegenerateInput("output size must be positive")
    xs, ys = pixel_centers(bbox2d, out_w, out_h)
    # exact pixel centres for points the float test cannot settle
    x0, y0 = Fraction(float(bbox2d.x0)), Fraction(float(bbox2d.y0))
    sx = (Fraction(float(bbox2d.x1)) - x0) / out_w
    sy = (Fraction(float(bbox2d.y1)) - y0) / out_h

    def exact_center(idx):
        r, c = idx
        return x0 + (c + Fraction(1, 2)) * sx, y0 + (r + Fraction(1, 2)) * sy

    data = np.zeros((out_h, out_w, 4), dtype=np.uint8)
    taken = np.zeros((out_h, out_w), dtype=bool)
    order = (
        (0 if box.d == 1 else 1, FACES["front"]),
        (2, FACES["side"]),
        (3, FACES["roof"]),
    )
    for channel, idx in order:
        inside = _inside_mask(xs, ys, box.b[list(idx)], exact_center) & ~taken
        data[..., channel] = inside
        taken |= inside
    return RastMask(data, bbox2d)
