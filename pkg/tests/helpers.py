"""Synthetic fixtures and independent oracles shared across the test modules."""

from fractions import Fraction

import numpy as np

from boxgeom.box3d import FACES
from boxgeom.dataset import Label, Record
from boxgeom.geom import Rect
from boxgeom.synth import perspective_box

LABELS = {
    "a": Label("skoda", "octavia", "combi", "mk3"),
    "b": Label("vw", "passat", "sedan", "b7"),
    "c": Label("vw", "passat", "sedan", "b8"),
}


def make_record(rid, camera, track, label="a", box=None, bbox=(10, 10, 60, 50), image_size=(640, 480), image_path=None):
    return Record(
        record_id=str(rid),
        image_path=image_path or f"img/{rid}.png",
        camera_id=str(camera),
        track_id=str(track),
        bbox2d=Rect(*bbox),
        label=LABELS[label],
        box3d=box,
        image_size=image_size,
    )


def viewpoint_record(rid, camera, track, azimuth, elevation=10.0, label="a", dims=(4.5, 1.8, 1.5)):
    """Record whose box3d is a vehicle seen from the given viewpoint, plus its calibration."""
    box, calib = perspective_box(azimuth, elevation, dims=dims)
    x0, y0 = np.floor(box.b.min(axis=0))
    x1, y1 = np.ceil(box.b.max(axis=0))
    rec = make_record(rid, camera, track, label, box=box, bbox=(x0, y0, x1, y1), image_size=(641, 481))
    return rec, calib


def track_dataset(n_cameras, tracks_per_camera, labels=("a", "b"), images_per_track=1, prefix=""):
    """Every camera holds ``tracks_per_camera`` tracks of every label."""
    records = []
    for cam in range(n_cameras):
        for lab in labels:
            for t in range(tracks_per_camera):
                track = f"{prefix}c{cam}-{lab}-{t}"
                for i in range(images_per_track):
                    records.append(make_record(f"{track}-{i}", f"cam{cam}", track, lab))
    return records


def write_box_fixture(root, n=4, seed=7):
    """``n`` rendered cuboids with annotations and contour maps under ``root``."""
    from boxgeom.dataset import Annotations, save_annotations
    from boxgeom.io import write_png
    from boxgeom.synth import outline_map, padded_bbox, random_affine_cuboid, render_faces, silhouette_polygon

    rng = np.random.default_rng(seed)
    colors = {"front": (200, 30, 30), "side": (30, 200, 30), "roof": (30, 30, 200)}
    records = []
    for k in range(n):
        c = random_affine_cuboid(rng)
        rid = f"rec{k:02d}"
        write_png(root / "img" / f"{rid}.png", render_faces(c.box, (320, 320), colors, background=(90, 90, 90)))
        contour = outline_map(silhouette_polygon(c.box), (320, 320))
        write_png(root / "contours" / f"{rid}.png", np.round(contour * 255).astype(np.uint8))
        bb = padded_bbox(c.box)
        records.append(make_record(rid, f"cam{k % 2}", f"trk{k}", "ab"[k % 2], box=c.box, bbox=bb.as_list(), image_size=(320, 320)))
    save_annotations(root / "ann.json", Annotations(records))
    return records


def write_eval_fixture(root, n_cameras=4, tracks=16, images_per_track=2, seed=0):
    """Viewpoint-annotated dataset plus a shared camera table under ``root``."""
    from boxgeom.dataset import Annotations, save_annotations

    rng = np.random.default_rng(seed)
    records, cams = [], {}
    for cam in range(n_cameras):
        for lab in ("a", "b"):
            for t in range(tracks):
                track = f"c{cam}-{lab}-{t}"
                for i in range(images_per_track):
                    az = float(rng.uniform(-60, 60))
                    rec, calib = viewpoint_record(f"{track}-{i}", f"cam{cam}", track, az, label=lab)
                    records.append(rec)
                    cams[f"cam{cam}"] = calib
    save_annotations(root / "ann.json", Annotations(records, cams))
    return records


def scanline_mask(quad, xs_exact, ys_exact):
    """Independent oracle: exact rational scan-line fill of a convex quad.

    For each pixel-centre row the horizontal line is clipped against the
    polygon edges to an [xl, xr] interval; boundary points count as inside.
    """
    q = [(Fraction(x), Fraction(y)) for x, y in quad]
    out = np.zeros((len(ys_exact), len(xs_exact)), dtype=bool)
    for r, y in enumerate(ys_exact):
        hits = []
        for i in range(4):
            (x0, y0), (x1, y1) = q[i], q[(i + 1) % 4]
            if y0 == y1:
                if y == y0:
                    hits += [x0, x1]
                continue
            if min(y0, y1) <= y <= max(y0, y1):
                hits.append(x0 + (y - y0) * (x1 - x0) / (y1 - y0))
        if not hits:
            continue
        xl, xr = min(hits), max(hits)
        for c, x in enumerate(xs_exact):
            out[r, c] = xl <= x <= xr
    return out


def oracle_rast(box, bbox, out_w, out_h):
    sx = (Fraction(bbox.x1) - Fraction(bbox.x0)) / out_w
    sy = (Fraction(bbox.y1) - Fraction(bbox.y0)) / out_h
    xs = [Fraction(bbox.x0) + (j + Fraction(1, 2)) * sx for j in range(out_w)]
    ys = [Fraction(bbox.y0) + (i + Fraction(1, 2)) * sy for i in range(out_h)]
    masks = {name: scanline_mask(box.b[list(idx)], xs, ys) for name, idx in FACES.items()}
    ref = np.zeros((out_h, out_w, 4), dtype=np.uint8)
    taken = np.zeros((out_h, out_w), dtype=bool)
    for ch, name in ((0 if box.d == 1 else 1, "front"), (2, "side"), (3, "roof")):
        m = masks[name] & ~taken
        ref[..., ch] = m
        taken |= m
    return ref


def brute_force_ap(d, y):
    """Enumerate every threshold, count TP/FP directly, integrate stepwise."""
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=bool)
    ap, prev_r = 0.0, 0.0
    for t in sorted(set(d.tolist())):
        called = d <= t
        tp = int(np.sum(called & y))
        p = tp / int(np.sum(called))
        r = tp / int(np.sum(y))
        ap += (r - prev_r) * p
        prev_r = r
    return ap


def monotone_maps(rng, n):
    maps = []
    for _ in range(n):
        kind = int(rng.integers(0, 4))
        a, b = float(rng.uniform(0.5, 3.0)), float(rng.uniform(-2, 2))
        if kind == 0:
            maps.append(lambda x, a=a, b=b: a * x + b)
        elif kind == 1:
            maps.append(lambda x, a=a: np.exp(a * x))
        elif kind == 2:
            maps.append(lambda x, a=a: (x + 1.0) ** a)
        else:
            knots = np.r_[-1.0, np.sort(rng.uniform(-1, 3, 6)), 3.0]
            vals = np.cumsum(rng.uniform(0.1, 2.0, len(knots)))
            maps.append(lambda x, k=knots, v=vals: np.interp(x, k, v))
    return maps
