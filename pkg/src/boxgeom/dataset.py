"""Annotation records, validation, camera-disjoint splits and statistics.

Annotation file (JSON)::

    {
      "records": [
        {"record_id": "...", "image_path": "...", "camera_id": "...",
         "track_id": "...", "bbox2d": [x0, y0, x1, y1],
         "label": {"make": .., "model": .., "submodel": .., "year": ..},
         "box3d": {"b": [[x, y] x 8], "d": 0|1},      # optional
         "mask_path": "...",                           # optional
         "image_size": [width, height]}                # optional
      ],
      "cameras": {"<camera_id>": {"principal": [x, y], "focal": f}}   # optional
    }
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .box3d import Box3D, CameraCalib, azimuth_elevation, focal_from_vps, vanishing_point
from .errors import BoxGeomError, DegenerateFace, InsufficientData
from .geom import Rect

LABEL_FIELDS = ("make", "model", "submodel", "year")
MIN_TRAIN_TRACKS = 15
MIN_TEST_TRACKS = 1


@dataclass(frozen=True)
class Label:
    make: str
    model: str
    submodel: str
    year: str

    def key(self, mode: str = "hard") -> tuple[str, ...]:
        """Class key: the full label for ``hard``, model year dropped for ``medium``."""
        if mode == "hard":
            return (self.make, self.model, self.submodel, self.year)
        if mode == "medium":
            return (self.make, self.model, self.submodel)
        raise ValueError(f"unknown split mode {mode!r}")


@dataclass(frozen=True)
class Record:
    record_id: str
    image_path: str
    camera_id: str
    track_id: str
    bbox2d: Rect
    label: Label
    box3d: Optional[Box3D] = None
    mask_path: Optional[str] = None
    image_size: Optional[tuple[int, int]] = None

    @classmethod
    def from_json(cls, obj: dict) -> "Record":
        lab = obj["label"]
        return cls(
            record_id=str(obj["record_id"]),
            image_path=str(obj["image_path"]),
            camera_id=str(obj["camera_id"]),
            track_id=str(obj["track_id"]),
            bbox2d=Rect(*[float(v) for v in obj["bbox2d"]]),
            label=Label(*[str(lab[k]) for k in LABEL_FIELDS]),
            box3d=Box3D.from_json(obj["box3d"]) if obj.get("box3d") is not None else None,
            mask_path=obj.get("mask_path"),
            image_size=tuple(int(v) for v in obj["image_size"]) if obj.get("image_size") else None,
        )

    def to_json(self) -> dict:
        out = {
            "record_id": self.record_id,
            "image_path": self.image_path,
            "camera_id": self.camera_id,
            "track_id": self.track_id,
            "bbox2d": self.bbox2d.as_list(),
            "label": {k: getattr(self.label, k) for k in LABEL_FIELDS},
        }
        if self.box3d is not None:
            out["box3d"] = self.box3d.to_json()
        if self.mask_path is not None:
            out["mask_path"] = self.mask_path
        if self.image_size is not None:
            out["image_size"] = list(self.image_size)
        return out


@dataclass
class Annotations:
    records: list[Record]
    cameras: dict[str, CameraCalib] = field(default_factory=dict)
    root: Optional[Path] = None

    def image_path(self, rec: Record) -> Path:
        p = Path(rec.image_path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def to_json(self) -> dict:
        out: dict = {"records": [r.to_json() for r in self.records]}
        if self.cameras:
            out["cameras"] = {k: v.to_json() for k, v in sorted(self.cameras.items())}
        return out


def load_annotations(path) -> Annotations:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    records = [Record.from_json(r) for r in obj.get("records", [])]
    cameras = {str(k): CameraCalib.from_json(v) for k, v in obj.get("cameras", {}).items()}
    return Annotations(records, cameras, path.parent)


def save_annotations(path, ann: Annotations) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(ann.to_json(), fh, indent=1)
        fh.write("\n")


@dataclass
class ValidationReport:
    n_images: int
    n_tracks: int
    n_classes: int
    n_makes: int
    n_cameras: int
    violations: list[tuple[str, str]]

    def to_json(self) -> dict:
        return {
            "images": self.n_images,
            "tracks": self.n_tracks,
            "classes": self.n_classes,
            "makes": self.n_makes,
            "cameras": self.n_cameras,
            "violations": [{"record_id": r, "problem": p} for r, p in self.violations],
        }


def validate(records: list[Record], image_root: Optional[Path] = None) -> ValidationReport:
    """Report records that break the annotation invariants, plus counts.

    Image bounds come from ``image_size`` or, when ``image_root`` is given,
    from the image file header.
    """
    violations: list[tuple[str, str]] = []
    seen: set[str] = set()
    track_cams: dict[str, set[str]] = defaultdict(set)
    track_labels: dict[str, set[Label]] = defaultdict(set)
    track_first: dict[str, str] = {}
    for rec in records:
        if rec.record_id in seen:
            violations.append((rec.record_id, "duplicate record_id"))
        seen.add(rec.record_id)
        track_cams[rec.track_id].add(rec.camera_id)
        track_labels[rec.track_id].add(rec.label)
        track_first.setdefault(rec.track_id, rec.record_id)

        bb = rec.bbox2d
        if bb.area <= 0:
            violations.append((rec.record_id, "bbox2d has no area"))
        size = rec.image_size
        if size is None and image_root is not None:
            size = _image_size(Path(image_root) / rec.image_path)
        if size is not None and not Rect(0, 0, size[0], size[1]).contains(bb):
            violations.append((rec.record_id, "bbox2d extends outside the image"))
        if rec.box3d is not None:
            try:
                rec.box3d.validate()
            except DegenerateFace as exc:
                violations.append((rec.record_id, f"invalid box3d: {exc}"))

    for track, cams in track_cams.items():
        if len(cams) > 1:
            violations.append((track_first[track], f"track {track} spans cameras {sorted(cams)}"))
        if len(track_labels[track]) > 1:
            violations.append((track_first[track], f"track {track} has {len(track_labels[track])} labels"))

    return ValidationReport(
        n_images=len(records),
        n_tracks=len(track_cams),
        n_classes=len({r.label.key("hard") for r in records}),
        n_makes=len({r.label.make for r in records}),
        n_cameras=len({r.camera_id for r in records}),
        violations=violations,
    )


def _image_size(path: Path) -> Optional[tuple[int, int]]:
    from PIL import Image

    try:
        with Image.open(path) as im:
            return im.size
    except OSError:
        return None


@dataclass(frozen=True)
class Split:
    name: str
    train_track_ids: tuple[str, ...]
    test_track_ids: tuple[str, ...]
    class_list: tuple[tuple[str, ...], ...]

    def class_index(self) -> dict[tuple[str, ...], int]:
        return {c: i for i, c in enumerate(self.class_list)}

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "train_tracks": list(self.train_track_ids),
            "test_tracks": list(self.test_track_ids),
            "classes": [list(c) for c in self.class_list],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Split":
        return cls(
            obj["name"],
            tuple(str(t) for t in obj["train_tracks"]),
            tuple(str(t) for t in obj["test_tracks"]),
            tuple(tuple(str(v) for v in c) for c in obj["classes"]),
        )


def make_splits(
    records: list[Record],
    mode: str = "hard",
    rng=0,
    train_fraction: float = 0.5,
    min_train_tracks: int = MIN_TRAIN_TRACKS,
    min_test_tracks: int = MIN_TEST_TRACKS,
) -> Split:
    """Camera-disjoint split: a random subset of cameras supplies all training
    tracks, the rest supply the test tracks. Only classes with at least
    ``min_train_tracks`` training and ``min_test_tracks`` test tracks stay.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    cameras = sorted({r.camera_id for r in records})
    if len(cameras) < 2:
        raise InsufficientData("need at least two cameras to split")
    n_train = min(len(cameras) - 1, max(1, int(round(train_fraction * len(cameras)))))
    order = rng.permutation(len(cameras))
    train_cams = {cameras[i] for i in order[:n_train]}

    track_class: dict[str, tuple[str, ...]] = {}
    track_train: dict[str, bool] = {}
    for r in records:
        track_class[r.track_id] = r.label.key(mode)
        track_train[r.track_id] = r.camera_id in train_cams

    n_tr: Counter = Counter()
    n_te: Counter = Counter()
    for t, c in track_class.items():
        (n_tr if track_train[t] else n_te)[c] += 1
    kept = sorted(c for c in set(track_class.values()) if n_tr[c] >= min_train_tracks and n_te[c] >= min_test_tracks)
    if not kept:
        raise InsufficientData("no class passes the track-count thresholds")
    keep = set(kept)
    train = sorted(t for t, c in track_class.items() if c in keep and track_train[t])
    test = sorted(t for t, c in track_class.items() if c in keep and not track_train[t])
    return Split(mode, tuple(train), tuple(test), tuple(kept))


def load_split(path) -> Split:
    with open(path, encoding="utf-8") as fh:
        return Split.from_json(json.load(fh))


def calib_for(rec: Record, cameras: dict[str, CameraCalib]) -> Optional[CameraCalib]:
    """Camera calibration for a record.

    Uses the camera table when available; otherwise the principal point is
    the image centre and the focal length comes from the two horizontal
    vanishing points of the record's own 3D box.
    """
    if rec.camera_id in cameras:
        return cameras[rec.camera_id]
    if rec.box3d is None or rec.image_size is None:
        return None
    principal = ((rec.image_size[0] - 1) / 2.0, (rec.image_size[1] - 1) / 2.0)
    vf = vanishing_point(rec.box3d, "f")
    vs = vanishing_point(rec.box3d, "s")
    if abs(vf[2]) < 1e-12 or abs(vs[2]) < 1e-12:
        return None
    try:
        f = focal_from_vps(vf[:2] / vf[2], vs[:2] / vs[2], principal)
    except BoxGeomError:
        return None
    return CameraCalib(principal, f)


def azimuth_bin(azimuth: float, n_bins: int = 12) -> int:
    """Bin index for an azimuth with bin 0 centred on 0 deg (frontal)."""
    width = 360.0 / n_bins
    return int(math.floor(((azimuth + width / 2.0) % 360.0) / width)) % n_bins


def stats(
    records: list[Record],
    cameras: Optional[dict[str, CameraCalib]] = None,
    n_azimuth_bins: int = 12,
    elevation_edges=tuple(range(-90, 91, 10)),
    bbox_bin: float = 20.0,
) -> dict:
    """Histograms of 2D box sizes, per-class sample counts and viewpoints."""
    cameras = cameras or {}
    widths = np.array([r.bbox2d.width for r in records], dtype=float)
    heights = np.array([r.bbox2d.height for r in records], dtype=float)
    top = max(bbox_bin, float(max(widths.max(initial=0), heights.max(initial=0))))
    edges = np.arange(0.0, top + bbox_bin, bbox_bin)
    dims_hist, _, _ = np.histogram2d(widths, heights, bins=[edges, edges])

    per_class = Counter("/".join(r.label.key("hard")) for r in records)

    az_hist = np.zeros(n_azimuth_bins, dtype=int)
    el_edges = np.asarray(elevation_edges, dtype=float)
    el_hist = np.zeros(len(el_edges) - 1, dtype=int)
    skipped = 0
    for r in records:
        calib = calib_for(r, cameras) if r.box3d is not None else None
        if calib is None:
            skipped += 1
            continue
        try:
            az, el = azimuth_elevation(r.box3d, calib)
        except BoxGeomError:
            skipped += 1
            continue
        az_hist[azimuth_bin(az, n_azimuth_bins)] += 1
        k = int(np.clip(np.searchsorted(el_edges, el, side="right") - 1, 0, len(el_hist) - 1))
        el_hist[k] += 1

    return {
        "n_records": len(records),
        "bbox_edges": edges.tolist(),
        "bbox_dims": dims_hist.astype(int).tolist(),
        "per_class": dict(sorted(per_class.items())),
        "azimuth_bin_width": 360.0 / n_azimuth_bins,
        "azimuth": az_hist.tolist(),
        "elevation_edges": el_edges.tolist(),
        "elevation": el_hist.tolist(),
        "viewpoint_skipped": skipped,
    }
