"""Single-image 3D box estimation from a contour probability map and the
directions toward the three vanishing points.

The direction predictor is external; it delivers three 60-bin distributions
over line angles in [-90, 90) (3 degree bins). This module encodes ground
truth into that space, decodes predictions back to angles, traces the
vehicle outline along rays from the 2D box centre and assembles the box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .box3d import Box3D, DirectionTriplet, canonical_angle, construct_box, vanishing_point
from .errors import DegenerateInput, EmptyContour, OutOfRange, VPAtCenter
from .geom import Rect, as_points, convex_hull, sample_bilinear

N_BINS = 60
BIN_WIDTH = 3.0
ANGLE_MIN = -90.0
CONTOUR_THRESHOLD = 0.1
DECODE_WINDOW = 5
RAY_STEP = 0.5
MIN_RAYS = 8


@dataclass(frozen=True, eq=False)
class ContourPolygon:
    points: np.ndarray  # (N, 2), perimeter-traversal order
    bbox: Rect
    scores: np.ndarray


def bin_centers() -> np.ndarray:
    return ANGLE_MIN + BIN_WIDTH * np.arange(N_BINS) + BIN_WIDTH / 2.0


def encode_angle(theta: float) -> int:
    """Bin index of an angle in [-90, 90)."""
    if not (ANGLE_MIN <= theta < -ANGLE_MIN):
        raise OutOfRange(f"angle {theta} outside [-90, 90)")
    return min(N_BINS - 1, int(math.floor((theta - ANGLE_MIN) / BIN_WIDTH)))


def one_hot(theta: float) -> np.ndarray:
    row = np.zeros(N_BINS)
    row[encode_angle(theta)] = 1.0
    return row


def decode_bins(row) -> float:
    """Angle from one 60-bin distribution.

    Weighted mean of the bin centres in a 5-bin window around the arg-max;
    next to either end of the range the arg-max centre is returned as is.
    """
    row = np.asarray(row, dtype=float)
    if row.shape != (N_BINS,):
        raise DegenerateInput(f"expected {N_BINS} bins, got {row.shape}")
    centers = bin_centers()
    k = int(np.argmax(row))
    half = DECODE_WINDOW // 2
    if k < half or k > N_BINS - 1 - half:
        return float(centers[k])
    w = row[k - half : k + half + 1]
    if w.sum() <= 0:
        return float(centers[k])
    return float(np.dot(w, centers[k - half : k + half + 1]) / w.sum())


def decode_direction_bins(probs) -> tuple[float, float, float]:
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (3, N_BINS):
        raise DegenerateInput(f"expected a 3x{N_BINS} array, got {probs.shape}")
    return tuple(decode_bins(r) for r in probs)


def check_direction_bins(probs, tol: float = 1e-6) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (3, N_BINS):
        raise DegenerateInput(f"expected a 3x{N_BINS} array, got {probs.shape}")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > tol):
        raise DegenerateInput("each direction row must be a probability distribution")
    return probs


def _vp_angle(vp, center: np.ndarray) -> float:
    vp = np.asarray(vp, dtype=float).reshape(-1)
    if vp.shape == (3,) and vp[2] == 0:
        v = vp[:2]
    else:
        p = vp[:2] / vp[2] if vp.shape == (3,) else vp
        v = p - center
        if math.hypot(v[0], v[1]) < 1.0:
            raise VPAtCenter(f"vanishing point {p.tolist()} is at the 2D box centre")
    if not np.all(np.isfinite(v)) or math.hypot(v[0], v[1]) == 0:
        raise VPAtCenter("degenerate vanishing direction")
    return canonical_angle(v)


def gt_directions(vps, bbox2d: Rect) -> tuple[float, float, float]:
    """Ground-truth line angles from the 2D box centre toward each VP.

    ``vps`` is either a Box3D (VPs from its edge families) or three VPs,
    each a finite point ``(x, y)`` or homogeneous ``(x, y, w)``; ``w == 0``
    marks a VP at infinity whose direction is ``(x, y)``.
    """
    center = bbox2d.center
    if isinstance(vps, Box3D):
        vps = [vanishing_point(vps, fam) for fam in ("f", "s", "r")]
    return tuple(_vp_angle(vp, center) for vp in vps)


def perimeter_pixels(bbox2d: Rect) -> np.ndarray:
    """Integer border pixels of the box, clockwise on screen from the top-left."""
    x0, y0 = int(round(bbox2d.x0)), int(round(bbox2d.y0))
    x1, y1 = int(round(bbox2d.x1)), int(round(bbox2d.y1))
    top = [(x, y0) for x in range(x0, x1)]
    right = [(x1, y) for y in range(y0, y1)]
    bottom = [(x, y1) for x in range(x1, x0, -1)]
    left = [(x0, y) for y in range(y1, y0, -1)]
    return np.asarray(top + right + bottom + left, dtype=float)


def extract_contour(prob: np.ndarray, bbox2d: Rect, threshold: float = CONTOUR_THRESHOLD) -> ContourPolygon:
    """Global maximum of the contour map along each centre->border ray."""
    prob = np.clip(np.asarray(prob, dtype=float), 0.0, 1.0)
    if prob.ndim != 2:
        raise DegenerateInput("contour map must be single-channel")
    h, w = prob.shape
    if bbox2d.area < 64:
        raise DegenerateInput("2D bounding box smaller than 64 px^2")
    if not Rect(0, 0, w - 1, h - 1).contains(bbox2d, tol=0.5):
        raise DegenerateInput("2D bounding box exceeds the contour map")
    c = bbox2d.center
    ends = perimeter_pixels(bbox2d)
    lengths = np.hypot(ends[:, 0] - c[0], ends[:, 1] - c[1])
    n = int(math.ceil(lengths.max() / RAY_STEP)) + 1
    t = np.arange(n) * RAY_STEP
    # (rays, samples); samples beyond the ray end are masked off
    frac = np.minimum(t[None, :] / lengths[:, None], 1.0)
    xs = c[0] + frac * (ends[:, 0:1] - c[0])
    ys = c[1] + frac * (ends[:, 1:2] - c[1])
    vals = sample_bilinear(prob, xs, ys)
    vals[t[None, :] > lengths[:, None] + 1e-9] = -1.0
    best = np.argmax(vals, axis=1)
    score = vals[np.arange(len(ends)), best]
    keep = score >= threshold
    if keep.sum() < MIN_RAYS:
        raise EmptyContour(f"only {int(keep.sum())} rays reached the threshold {threshold}")
    pts = np.column_stack([xs[np.arange(len(ends)), best], ys[np.arange(len(ends)), best]])
    return ContourPolygon(pts[keep], bbox2d, score[keep])


def estimate_box(prob: np.ndarray, bbox2d: Rect, angles, d: int = 1, threshold: float = CONTOUR_THRESHOLD) -> Box3D:
    """Contour -> convex hull -> supporting-line box construction."""
    contour = extract_contour(prob, bbox2d, threshold)
    hull = convex_hull(contour.points)
    dirs = DirectionTriplet.from_angles(*angles)
    return construct_box(hull, dirs, d)


def mean_vertex_error(a: Box3D, b: Box3D) -> float:
    return float(np.mean(np.linalg.norm(as_points(a.b) - as_points(b.b), axis=1)))

