"""3D bounding boxes of vehicles as seen in the image.

Vertex convention (all in image pixels)::

        b3 ------- b2          roof   = b0 b1 b2 b3
       /|         /|           front  = b0 b1 b5 b4   (rear when d == 0)
     b0 ------- b1 |           side   = b1 b2 b6 b5
      | b7 -----|- b6
      |/        |/             b_i and b_{i+4} share a vertical edge
     b4 ------- b5

``b1`` is the corner nearest to the camera and is shared by the three
visible faces; ``b7`` is hidden. Edges b0b1, b5b4, ... run along the first
direction (``u_f``), b1b2, b5b6, ... along the second (``u_s``) and the
vertical edges b5b1, ... along the third (``u_r``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousAssembly,
    DegenerateFace,
    DegenerateInput,
    DegenerateSilhouette,
    NonOrthogonalConfiguration,
    ParallelLines,
)
from .geom import (
    Homography,
    as_point,
    as_points,
    convex_hull,
    intersect,
    is_convex,
    line_through,
    polygon_area,
)

FRONT = (0, 1, 5, 4)
SIDE = (1, 2, 6, 5)
ROOF = (0, 1, 2, 3)
FACES = {"front": FRONT, "side": SIDE, "roof": ROOF}

# parallel edge families, each listed as (start, end) pairs
EDGE_FAMILIES = {
    "f": ((1, 0), (2, 3), (5, 4), (6, 7)),
    "s": ((1, 2), (0, 3), (5, 6), (4, 7)),
    "r": ((5, 1), (4, 0), (6, 2), (7, 3)),
}

MIN_SEPARATION_DEG = 5.0


@dataclass(frozen=True, eq=False)
class Box3D:
    """Projected 3D bounding box: vertices ``b`` (8x2) and direction flag ``d``.

    ``d == 1`` means the vehicle moves toward the camera, so the
    b0 b1 b5 b4 face is its front; ``d == 0`` makes that face the rear.
    """

    b: np.ndarray
    d: int = 1

    def __post_init__(self):
        b = as_points(self.b, 8).copy()
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        if self.d not in (0, 1):
            raise DegenerateInput(f"direction flag must be 0 or 1, got {self.d!r}")
        object.__setattr__(self, "d", int(self.d))

    def face(self, name: str) -> np.ndarray:
        return self.b[list(FACES[name])]

    def validate(self) -> "Box3D":
        """Raise DegenerateFace unless every visible face is a convex quad and
        the space diagonals b2b4 / b3b5 cross."""
        for name, idx in FACES.items():
            if not is_convex(self.b[list(idx)]):
                raise DegenerateFace(f"{name} face is not a convex quadrilateral")
        try:
            box_center(self)
        except (ParallelLines, DegenerateInput) as exc:
            raise DegenerateFace("box diagonals do not intersect") from exc
        return self

    def is_valid(self) -> bool:
        try:
            self.validate()
        except DegenerateFace:
            return False
        return True

    def translated(self, dx: float, dy: float) -> "Box3D":
        return Box3D(self.b + np.array([dx, dy]), self.d)

    def scaled(self, s: float) -> "Box3D":
        return Box3D(self.b * s, self.d)

    def transformed(self, h: Homography) -> "Box3D":
        return Box3D(h.apply(self.b), self.d)

    def with_direction(self, d: int) -> "Box3D":
        return Box3D(self.b, d)

    def to_json(self) -> dict:
        return {"b": [[float(x), float(y)] for x, y in self.b], "d": self.d}

    @classmethod
    def from_json(cls, obj: dict) -> "Box3D":
        return cls(np.asarray(obj["b"], dtype=float), int(obj["d"]))


@dataclass(frozen=True)
class Viewpoint2D:
    """Unit vectors from the box centre toward the front, side and roof face
    centres, plus the direction flag."""

    v_f: tuple[float, float]
    v_s: tuple[float, float]
    v_r: tuple[float, float]
    d: int

    def as_array(self) -> np.ndarray:
        return np.array([self.v_f, self.v_s, self.v_r], dtype=float)

    def to_json(self) -> dict:
        return {"v_f": list(self.v_f), "v_s": list(self.v_s), "v_r": list(self.v_r), "d": self.d}


def canonical_angle(v) -> float:
    """Angle in degrees in [-90, 90) of the (undirected) line along ``v``."""
    x, y = float(v[0]), float(v[1])
    if x < 0 or (x == 0 and y < 0):
        x, y = -x, -y
    ang = math.degrees(math.atan2(y, x))
    if ang >= 90.0:
        ang -= 180.0
    return ang


def line_separation(a_deg: float, b_deg: float) -> float:
    """Smallest angle between two undirected lines, in degrees."""
    diff = abs(a_deg - b_deg) % 180.0
    return min(diff, 180.0 - diff)


@dataclass(frozen=True)
class DirectionTriplet:
    """Image directions of the three box edge families, stored as canonical
    unit vectors with angle in [-90, 90)."""

    u_f: tuple[float, float]
    u_s: tuple[float, float]
    u_r: tuple[float, float]

    @classmethod
    def from_vectors(cls, u_f, u_s, u_r) -> "DirectionTriplet":
        return cls.from_angles(canonical_angle(u_f), canonical_angle(u_s), canonical_angle(u_r))

    @classmethod
    def from_angles(cls, th_f: float, th_s: float, th_r: float) -> "DirectionTriplet":
        vecs = []
        for th in (th_f, th_s, th_r):
            th = canonical_angle((math.cos(math.radians(th)), math.sin(math.radians(th))))
            vecs.append((math.cos(math.radians(th)), math.sin(math.radians(th))))
        return cls(*vecs)

    @property
    def angles(self) -> tuple[float, float, float]:
        return tuple(canonical_angle(u) for u in (self.u_f, self.u_s, self.u_r))

    def min_separation(self) -> float:
        a = self.angles
        return min(line_separation(a[i], a[j]) for i, j in ((0, 1), (0, 2), (1, 2)))


@dataclass(frozen=True)
class CameraCalib:
    principal: tuple[float, float]
    f: float

    def __post_init__(self):
        if not (math.isfinite(self.f) and self.f > 0):
            raise DegenerateInput(f"focal length must be finite and positive, got {self.f}")
        p = as_point(self.principal)
        object.__setattr__(self, "principal", (float(p[0]), float(p[1])))

    @classmethod
    def default_for_image(cls, width: int, height: int, f: float) -> "CameraCalib":
        """Principal point at the image centre."""
        return cls(((width - 1) / 2.0, (height - 1) / 2.0), f)

    def to_json(self) -> dict:
        return {"principal": list(self.principal), "focal": self.f}

    @classmethod
    def from_json(cls, obj: dict) -> "CameraCalib":
        return cls(tuple(obj["principal"]), float(obj["focal"]))


def box_center(box: Box3D) -> np.ndarray:
    """Projected box centre: crossing of the space diagonals b2b4 and b5b3."""
    b = box.b
    return intersect(line_through(b[2], b[4]), line_through(b[5], b[3]))


def face_center(box: Box3D, name: str) -> np.ndarray:
    q = box.face(name)
    try:
        return intersect(line_through(q[0], q[2]), line_through(q[1], q[3]))
    except (ParallelLines, DegenerateInput) as exc:
        raise DegenerateFace(f"{name} face diagonals do not intersect") from exc


def view_vectors(box: Box3D) -> Viewpoint2D:
    try:
        cc = box_center(box)
    except (ParallelLines, DegenerateInput) as exc:
        raise DegenerateFace("box diagonals do not intersect") from exc
    out = []
    for name in ("front", "side", "roof"):
        v = face_center(box, name) - cc
        n = math.hypot(v[0], v[1])
        if n < 1e-9:
            raise DegenerateFace(f"{name} face centre coincides with the box centre")
        out.append((float(v[0] / n), float(v[1] / n)))
    return Viewpoint2D(out[0], out[1], out[2], box.d)


def _perp(v: np.ndarray) -> np.ndarray:
    return np.array([-v[1], v[0]])


def construct_box(hull, dirs: DirectionTriplet, d: int = 1) -> Box3D:
    """Fit the 3D box around a convex silhouette, vanishing points at infinity.

    Each direction gives two supporting lines of the silhouette. The box is
    an affinely projected cuboid spanned from the bottom-near corner b5 by
    edges along ``W`` (u_f), ``L`` (u_s) and ``H`` (u_r, pointing up). The
    edge signs follow from requiring the three visible faces to meet at b1,
    i.e. ``H`` lies inside the cone of ``W`` and ``L``.

    Six supporting lines over-determine the five box parameters, so five
    lines are kept tight and the remaining one is pushed outward by the
    smallest non-negative amount. The box then contains the silhouette
    and all edges are exactly parallel to the given directions.
    """
    try:
        pts = convex_hull(as_points(hull))
    except DegenerateInput as exc:
        raise DegenerateSilhouette(str(exc)) from exc
    if abs(polygon_area(pts)) < 9.0:
        raise DegenerateSilhouette("silhouette area below 9 px^2")
    if dirs.min_separation() <= MIN_SEPARATION_DEG:
        raise AmbiguousAssembly(
            f"directions {dirs.angles} are within {MIN_SEPARATION_DEG} deg of each other"
        )

    uf = np.asarray(dirs.u_f, dtype=float)
    us = np.asarray(dirs.u_s, dtype=float)
    ur = np.asarray(dirs.u_r, dtype=float)
    if ur[1] > 0:
        ur = -ur
    alpha, beta = np.linalg.solve(np.column_stack([uf, us]), ur)
    W = np.sign(alpha) * uf
    L = np.sign(beta) * us
    H = ur

    nW = _perp(W)
    if nW @ L < 0:
        nW = -nW
    nL = _perp(L)
    if nL @ W < 0:
        nL = -nL
    nH = _perp(H)
    if nH @ W < 0:
        nH = -nH

    pw, pl, ph = pts @ nW, pts @ nL, pts @ nH
    # unknowns z = (Px, Py, w, l, h); each row is one box edge line
    rows = np.array(
        [
            [nW[0], nW[1], 0.0, 0.0, 0.0],
            [nW[0], nW[1], 0.0, nW @ L, nW @ H],
            [nL[0], nL[1], 0.0, 0.0, 0.0],
            [nL[0], nL[1], nL @ W, 0.0, nL @ H],
            [nH[0], nH[1], 0.0, nH @ L, 0.0],
            [nH[0], nH[1], nH @ W, 0.0, 0.0],
        ]
    )
    targets = np.array([pw.min(), pw.max(), pl.min(), pl.max(), ph.min(), ph.max()])
    # +1: the box edge must lie at or beyond the max; -1: at or before the min
    outward = np.array([-1.0, 1.0, -1.0, 1.0, -1.0, 1.0])

    best = None
    for j in range(6):
        keep = [i for i in range(6) if i != j]
        try:
            z = np.linalg.solve(rows[keep], targets[keep])
        except np.linalg.LinAlgError:
            continue
        slack = outward[j] * (rows[j] @ z - targets[j])
        if slack < -1e-7 or np.any(z[2:] <= 1e-9):
            continue
        if best is None or slack < best[0] - 1e-12:
            best = (slack, z)
    if best is None:
        raise DegenerateSilhouette("no box with positive edge lengths fits the silhouette")

    z = best[1]
    p5 = z[:2]
    w, l, h = z[2:]
    b = np.empty((8, 2))
    b[5] = p5
    b[4] = p5 + w * W
    b[6] = p5 + l * L
    b[1] = p5 + h * H
    b[0] = b[4] + h * H
    b[2] = b[6] + h * H
    b[3] = b[0] + l * L
    b[7] = b[4] + l * L
    box = Box3D(b, d)
    try:
        box.validate()
    except DegenerateFace as exc:
        raise DegenerateSilhouette(str(exc)) from exc
    return box


def focal_from_vps(u, v, principal) -> float:
    """Focal length from two vanishing points of orthogonal directions."""
    u = as_point(u)
    v = as_point(v)
    p = as_point(principal)
    dot = float((u - p) @ (v - p))
    if dot >= 0:
        raise NonOrthogonalConfiguration(
            "vanishing points must lie on opposite sides of the principal point"
        )
    return math.sqrt(-dot)


def viewpoint_3d(box: Box3D, calib: CameraCalib) -> np.ndarray:
    """Unit camera-frame ray toward the projected box centre."""
    c = box_center(box)
    px, py = calib.principal
    w = np.array([c[0] - px, c[1] - py, calib.f])
    return w / np.linalg.norm(w)


def vanishing_point(box: Box3D, family: str) -> np.ndarray:
    """Homogeneous least-squares vanishing point (unit 3-vector) of one edge
    family. The third coordinate is 0 when the edges are parallel."""
    lines = []
    for i, j in EDGE_FAMILIES[family]:
        ln = line_through(box.b[i], box.b[j])
        lines.append(ln.as_array())
    _, _, vt = np.linalg.svd(np.asarray(lines))
    vp = vt[-1]
    return vp / np.linalg.norm(vp)


def edge_direction_3d(box: Box3D, family: str, calib: CameraCalib) -> np.ndarray:
    """Camera-frame unit 3D direction of an edge family, signed to follow the
    first edge of the family (b1->b0, b1->b2 or b5->b1)."""
    vp = vanishing_point(box, family)
    i, j = EDGE_FAMILIES[family][0]
    edge = box.b[j] - box.b[i]
    px, py = calib.principal
    if abs(vp[2]) < 1e-12:
        dvec = np.array([vp[0], vp[1], 0.0])
        sign = np.sign(edge @ dvec[:2])
    else:
        x = vp[:2] / vp[2]
        dvec = np.array([x[0] - px, x[1] - py, calib.f])
        sign = np.sign(edge @ (x - box.b[i]))
    if sign == 0:
        raise DegenerateFace(f"edge family {family!r} has zero-length edges")
    dvec = sign * dvec
    return dvec / np.linalg.norm(dvec)


def vehicle_frame(box: Box3D, calib: CameraCalib) -> np.ndarray:
    """Rows (forward, left, up) of the vehicle's axes in camera coordinates.

    The raw edge directions are orthonormalized with ``up`` kept exact.
    """
    along = edge_direction_3d(box, "s", calib)
    up = edge_direction_3d(box, "r", calib)
    # b1->b2 runs away from the b0b1b4b5 face, which is the front when d == 1
    forward = -along if box.d == 1 else along
    forward = forward - (forward @ up) * up
    forward /= np.linalg.norm(forward)
    left = np.cross(up, forward)
    return np.vstack([forward, left, up])


def vehicle_viewpoint(box: Box3D, calib: CameraCalib) -> np.ndarray:
    """Unit vector from the box centre toward the camera, in vehicle axes
    (forward, left, up)."""
    to_camera = -viewpoint_3d(box, calib)
    return vehicle_frame(box, calib) @ to_camera


def azimuth_elevation(box: Box3D, calib: CameraCalib) -> tuple[float, float]:
    """Azimuth (0 = frontal view, degrees in [-180, 180)) and elevation
    (positive when the camera is above the vehicle)."""
    v = vehicle_viewpoint(box, calib)
    az = math.degrees(math.atan2(v[1], v[0]))
    if az >= 180.0:
        az -= 360.0
    el = math.degrees(math.asin(max(-1.0, min(1.0, float(v[2])))))
    return az, el


def angular_distance(w1, w2) -> float:
    """Angle in degrees between two 3D directions (exactly 0 for equal ones)."""
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    return math.degrees(math.atan2(float(np.linalg.norm(np.cross(w1, w2))), float(w1 @ w2)))
