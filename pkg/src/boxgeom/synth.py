"""Synthetic cuboids, renders and contour maps for fixtures and self-checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .box3d import FACES, Box3D, CameraCalib, DirectionTriplet
from .geom import Rect


def _unit(deg: float) -> np.ndarray:
    r = math.radians(deg)
    return np.array([math.cos(r), math.sin(r)])


def affine_box(b1, w_vec, l_vec, h_vec, d: int = 1) -> Box3D:
    """Parallel-projected cuboid from the near-top corner ``b1`` and the three
    edge vectors b1->b0, b1->b2 and b5->b1."""
    b1 = np.asarray(b1, dtype=float)
    w_vec, l_vec, h_vec = (np.asarray(v, dtype=float) for v in (w_vec, l_vec, h_vec))
    b5 = b1 - h_vec
    b = np.empty((8, 2))
    b[1] = b1
    b[0] = b1 + w_vec
    b[2] = b1 + l_vec
    b[3] = b1 + w_vec + l_vec
    b[5] = b5
    b[4] = b5 + w_vec
    b[6] = b5 + l_vec
    b[7] = b5 + w_vec + l_vec
    return Box3D(b, d)


@dataclass(frozen=True)
class SyntheticCuboid:
    box: Box3D
    dirs: DirectionTriplet


def random_affine_cuboid(rng: np.random.Generator, center=(160.0, 160.0)) -> SyntheticCuboid:
    """A random parallel-projected cuboid whose three visible faces meet at b1.

    The vertical edge points up within +-12 deg; the two horizontal edge
    directions sit 25-110 deg either side of it so that each face stays
    reasonably wide.
    """
    while True:
        up = -90.0 + rng.uniform(-12.0, 12.0)
        a = rng.uniform(25.0, 110.0)
        c = rng.uniform(25.0, 110.0)
        if a + c > 165.0:
            continue
        w_dir = _unit(up - a)
        l_dir = _unit(up + c)
        h_dir = _unit(up)
        w, l, h = rng.uniform(25.0, 90.0), rng.uniform(40.0, 120.0), rng.uniform(25.0, 70.0)
        box = affine_box(np.zeros(2), w * w_dir, l * l_dir, h * h_dir, d=int(rng.integers(0, 2)))
        shift = np.asarray(center) - box.b.mean(axis=0)
        box = box.translated(*shift)
        dirs = DirectionTriplet.from_vectors(w_dir, l_dir, h_dir)
        if dirs.min_separation() > 8.0 and box.is_valid():
            return SyntheticCuboid(box, dirs)


def look_at_camera(cam_pos, target, f: float, principal) -> tuple[np.ndarray, np.ndarray, CameraCalib]:
    """Rotation (world->camera, rows right/down/forward), camera centre and
    calibration for a camera at ``cam_pos`` aimed at ``target`` (world z up)."""
    cam_pos = np.asarray(cam_pos, dtype=float)
    fwd = np.asarray(target, dtype=float) - cam_pos
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.vstack([right, down, fwd])
    return rot, cam_pos, CameraCalib(tuple(principal), f)


def project(points3d, rot, cam_pos, calib: CameraCalib) -> np.ndarray:
    pc = (np.asarray(points3d, dtype=float) - cam_pos) @ rot.T
    px, py = calib.principal
    return np.column_stack([calib.f * pc[:, 0] / pc[:, 2] + px, calib.f * pc[:, 1] / pc[:, 2] + py])


def perspective_box(
    azimuth: float,
    elevation: float,
    distance: float = 30.0,
    dims=(4.5, 1.8, 1.5),
    f: float = 800.0,
    principal=(320.0, 240.0),
) -> tuple[Box3D, CameraCalib]:
    """Vehicle-sized cuboid (length, width, height in metres) seen by a pinhole
    camera placed at the given azimuth (0 = in front) and elevation.

    The vehicle's forward axis is world +x. The face toward the camera at the
    vehicle's ends becomes b0b1b4b5 and ``d`` records whether it is the front.
    """
    length, width, height = dims
    center = np.array([0.0, 0.0, height / 2.0])
    az, el = math.radians(azimuth), math.radians(elevation)
    cam = center + distance * np.array(
        [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
    )
    rot, cam_pos, calib = look_at_camera(cam, center, f, principal)

    end_x = length / 2.0 if cam[0] >= 0 else -length / 2.0
    side_y = width / 2.0 if cam[1] >= 0 else -width / 2.0
    d = 1 if cam[0] >= 0 else 0
    corners = []
    for z in (height, 0.0):
        corners += [
            (end_x, -side_y, z),
            (end_x, side_y, z),
            (-end_x, side_y, z),
            (-end_x, -side_y, z),
        ]
    b = project(np.asarray(corners), rot, cam_pos, calib)
    return Box3D(b, d), calib


def render_faces(box: Box3D, shape, colors=None, background=(0, 0, 0)) -> np.ndarray:
    """Flood-fill each visible face with a flat colour (pixel-centre test)."""
    from .rast import points_in_quad

    if colors is None:
        colors = {"front": (255, 0, 0), "side": (0, 255, 0), "roof": (0, 0, 255)}
    h, w = shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = background
    # paint in reverse priority so that front/rear wins on shared edges
    for name in ("roof", "side", "front"):
        mask = points_in_quad(xs, ys, box.b[list(FACES[name])])
        img[mask] = colors[name]
    return img


def distance_to_polygon(xs, ys, poly) -> np.ndarray:
    """Euclidean distance from each (x, y) to the closed polygon outline."""
    poly = np.asarray(poly, dtype=float)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    best = np.full(xs.shape, np.inf)
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        ab = b - a
        t = ((xs - a[0]) * ab[0] + (ys - a[1]) * ab[1]) / float(ab @ ab)
        t = np.clip(t, 0.0, 1.0)
        dx = xs - (a[0] + t * ab[0])
        dy = ys - (a[1] + t * ab[1])
        best = np.minimum(best, np.hypot(dx, dy))
    return best


def outline_map(poly, shape, strength: float = 1.0, half_width: float = 1.0) -> np.ndarray:
    """Contour probability map: a tent ridge of the given peak along ``poly``."""
    h, w = shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    dist = distance_to_polygon(xs, ys, poly)
    return strength * np.clip(1.0 - dist / half_width, 0.0, 1.0)


def silhouette_polygon(box: Box3D) -> np.ndarray:
    """Outer hexagon b0 b3 b2 b6 b5 b4 of a box whose faces meet at b1."""
    return box.b[[0, 3, 2, 6, 5, 4]]


def padded_bbox(box: Box3D, pad: float = 4.0) -> Rect:
    r = Rect.from_points(box.b)
    return Rect(
        math.floor(r.x0 - pad), math.floor(r.y0 - pad), math.ceil(r.x1 + pad), math.ceil(r.y1 + pad)
    )
