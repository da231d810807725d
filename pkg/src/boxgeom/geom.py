"""Homogeneous 2D geometry: lines, intersections, homographies and warping.

Image coordinates put the origin at the top-left pixel centre, x grows to the
right and y grows downwards. Pixel ``(row, col)`` sits at ``(x=col, y=row)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import (
    DegenerateInput,
    DegenerateQuad,
    ParallelLines,
    SingularHomography,
)

_SNAP = 1e-9


def as_point(p) -> np.ndarray:
    """Return ``p`` as a finite float array of shape (2,)."""
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.shape != (2,):
        raise DegenerateInput(f"expected a 2D point, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateInput(f"point has non-finite coordinates: {arr}")
    return arr


def as_points(pts, n: int | None = None) -> np.ndarray:
    arr = np.asarray(pts, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DegenerateInput(f"expected an (N, 2) point array, got {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise DegenerateInput(f"expected {n} points, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateInput("point array has non-finite coordinates")
    return arr


def cross2(u, v) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


@dataclass(frozen=True)
class HomogLine:
    """Line ``a*x + b*y + c = 0`` with ``a**2 + b**2 == 1``."""

    a: float
    b: float
    c: float

    @classmethod
    def from_coeffs(cls, a: float, b: float, c: float) -> "HomogLine":
        norm = float(np.hypot(a, b))
        if norm < 1e-12:
            raise DegenerateInput("line normal (a, b) is zero")
        return cls(float(a) / norm, float(b) / norm, float(c) / norm)

    @classmethod
    def through(cls, p, direction) -> "HomogLine":
        """Line through ``p`` running along ``direction``."""
        p = as_point(p)
        d = as_point(direction)
        if np.hypot(*d) < 1e-12:
            raise DegenerateInput("zero direction vector")
        a, b = -d[1], d[0]
        return cls.from_coeffs(a, b, -(a * p[0] + b * p[1]))

    @property
    def normal(self) -> np.ndarray:
        return np.array([self.a, self.b])

    @property
    def direction(self) -> np.ndarray:
        return np.array([self.b, -self.a])

    def signed_distance(self, p) -> float:
        p = np.asarray(p, dtype=float)
        return float(self.a * p[0] + self.b * p[1] + self.c)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])


def line_through(p, q) -> HomogLine:
    """Line through two distinct points."""
    p = as_point(p)
    q = as_point(q)
    if np.hypot(*(q - p)) <= 1e-9:
        raise DegenerateInput(f"points {p} and {q} coincide")
    return HomogLine.through(p, q - p)


def intersect(l1: HomogLine, l2: HomogLine) -> np.ndarray:
    """Intersection point of two non-parallel lines.

    Both lines carry unit normals, so the 2x2 determinant is the sine of the
    angle between them.
    """
    det = l1.a * l2.b - l2.a * l1.b
    if abs(det) < 1e-9:
        raise ParallelLines("lines are parallel or nearly so")
    x = (l1.b * l2.c - l2.b * l1.c) / det
    y = (l2.a * l1.c - l1.a * l2.c) / det
    return np.array([x, y])


def polygon_area(pts) -> float:
    """Signed shoelace area; positive for counter-clockwise in a y-up frame."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def is_convex(pts, tol: float = 1e-12) -> bool:
    """True if the polygon is strictly convex with consistent winding."""
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    if n < 3:
        return False
    crosses = []
    for i in range(n):
        e1 = pts[(i + 1) % n] - pts[i]
        e2 = pts[(i + 2) % n] - pts[(i + 1) % n]
        crosses.append(cross2(e1, e2))
    crosses = np.asarray(crosses)
    scale = max(1.0, float(np.max(np.abs(pts)))) ** 2
    return bool(np.all(crosses > tol * scale) or np.all(crosses < -tol * scale))


def check_quad(quad) -> np.ndarray:
    """Validate a quadrilateral given as 4 corners in cyclic order."""
    q = as_points(quad, 4)
    scale = max(1.0, float(np.ptp(q, axis=0).max())) ** 2
    for i in range(4):
        a, b, c = q[i], q[(i + 1) % 4], q[(i + 2) % 4]
        if abs(cross2(b - a, c - a)) <= 1e-10 * scale:
            raise DegenerateQuad(f"collinear corners in quad {q.tolist()}")
    return q


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return max(0.0, self.width) * max(0.0, self.height)

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0])

    def contains(self, other: "Rect", tol: float = 0.0) -> bool:
        return (
            other.x0 >= self.x0 - tol
            and other.y0 >= self.y0 - tol
            and other.x1 <= self.x1 + tol
            and other.y1 <= self.y1 + tol
        )

    def translated(self, dx: float, dy: float) -> "Rect":
        return Rect(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def as_list(self) -> list[float]:
        return [float(self.x0), float(self.y0), float(self.x1), float(self.y1)]

    @classmethod
    def from_points(cls, pts) -> "Rect":
        pts = as_points(pts)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


@dataclass(frozen=True, eq=False)
class Homography:
    """Projective map of the plane, stored with ``m[2, 2] == 1`` when possible."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise SingularHomography("homography has non-finite entries")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        else:
            m = m / np.linalg.norm(m)
        if abs(np.linalg.det(m)) <= 1e-12:
            raise SingularHomography("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]]))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.m @ other.m)

    def apply(self, pts) -> np.ndarray:
        """Map an (N, 2) array (or a single point) through the homography."""
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        p = np.atleast_2d(pts)
        hom = np.column_stack([p, np.ones(len(p))]) @ self.m.T
        out = hom[:, :2] / hom[:, 2:3]
        return out[0] if single else out


def _normalizing_transform(pts: np.ndarray) -> np.ndarray:
    # zero mean, unit RMS distance
    c = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - c) ** 2, axis=1)))
    if rms < 1e-12:
        raise DegenerateQuad("quad corners coincide")
    s = 1.0 / rms
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def homography_from_quads(src, dst) -> Homography:
    """Exact homography mapping the 4 ``src`` corners onto the 4 ``dst`` corners.

    Both point sets are conditioned to zero mean and unit RMS before the
    8x8 linear solve (``h33`` fixed to 1 in normalized coordinates).
    """
    src = check_quad(src)
    dst = check_quad(dst)
    ts = _normalizing_transform(src)
    td = _normalizing_transform(dst)
    s = np.column_stack([src, np.ones(4)]) @ ts.T
    d = np.column_stack([dst, np.ones(4)]) @ td.T
    a = np.zeros((8, 8))
    rhs = np.zeros(8)
    for i in range(4):
        x, y = s[i, 0], s[i, 1]
        u, v = d[i, 0], d[i, 1]
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]
        rhs[2 * i] = u
        rhs[2 * i + 1] = v
    try:
        h = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateQuad("no homography between these quads") from exc
    hn = np.append(h, 1.0).reshape(3, 3)
    return Homography(np.linalg.inv(td) @ hn @ ts)


def sample_bilinear(img: np.ndarray, xs, ys) -> np.ndarray:
    """Bilinear samples of ``img`` at float coordinates; zero outside the image.

    A coordinate is in bounds when ``0 <= x <= w - 1`` and ``0 <= y <= h - 1``
    (with a 1e-6 px slack for round-off). Returns float64 with shape
    ``xs.shape + img.shape[2:]``.
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    xs = np.where(np.abs(xs - np.rint(xs)) < _SNAP, np.rint(xs), xs)
    ys = np.where(np.abs(ys - np.rint(ys)) < _SNAP, np.rint(ys), ys)
    eps = 1e-6
    valid = (xs >= -eps) & (xs <= w - 1 + eps) & (ys >= -eps) & (ys <= h - 1 + eps)
    xc = np.clip(xs, 0.0, w - 1)
    yc = np.clip(ys, 0.0, h - 1)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    src = img.astype(float, copy=False)
    extra = (np.newaxis,) * (img.ndim - 2)
    fx = fx[(...,) + extra]
    fy = fy[(...,) + extra]
    top = src[y0, x0] * (1.0 - fx) + src[y0, x1] * fx
    bot = src[y1, x0] * (1.0 - fx) + src[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return np.where(valid[(...,) + extra], out, 0.0)


def cast_like(values: np.ndarray, dtype) -> np.ndarray:
    """Round/clip float results back into an image dtype."""
    dtype = np.dtype(dtype)
    if np.issubdtype(dtype, np.integer):
        info = np.iinfo(dtype)
        return np.clip(np.rint(values), info.min, info.max).astype(dtype)
    return values.astype(dtype)


def warp_perspective(img: np.ndarray, h: Homography, out_w: int, out_h: int) -> np.ndarray:
    """Warp ``img`` by ``h`` into an ``out_h x out_w`` canvas.

    Output pixel ``(u, v)`` takes the bilinear sample of the input at
    ``h^-1 (u, v)``; samples falling outside the input are black.
    """
    if out_w < 1 or out_h < 1:
        raise DegenerateInput(f"output size must be positive, got {out_w}x{out_h}")
    inv = np.linalg.inv(h.m)
    vs, us = np.mgrid[0:out_h, 0:out_w].astype(float)
    den = inv[2, 0] * us + inv[2, 1] * vs + inv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = (inv[0, 0] * us + inv[0, 1] * vs + inv[0, 2]) / den
        ys = (inv[1, 0] * us + inv[1, 1] * vs + inv[1, 2]) / den
    # points mapped through the line at infinity have no preimage
    bad = ~np.isfinite(xs) | ~np.isfinite(ys) | (den <= 0)
    xs = np.where(bad, -1e9, xs)
    ys = np.where(bad, -1e9, ys)
    return cast_like(sample_bilinear(img, xs, ys), np.asarray(img).dtype)


def convex_hull(points) -> np.ndarray:
    """Hull vertices of a point cloud in qhull's cyclic order.

    Raises DegenerateInput when the points do not span a 2D region.
    """
    pts = as_points(points)
    if len(pts) < 3:
        raise DegenerateInput("need at least 3 points for a hull")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateInput("points are collinear or coincident") from exc
    return pts[hull.vertices]
