"""Evaluation on externally produced predictions: track-level accuracy,
same-type verification (PR curve, AP) and the viewpoint-gap breakdown.

Prediction files are JSON-lines ``{"record_id": .., "probs": [..]}`` and/or
``{"record_id": .., "feat": [..]}``. Large feature dumps can instead be a
BXT1 ``(N, D)`` float32 tensor next to a ``.ids`` text file holding the N
record ids, one per line.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .box3d import CameraCalib, vehicle_viewpoint, viewpoint_3d
from .dataset import Record, Split, calib_for
from .errors import DegenerateInput, InsufficientData, MissingPrediction, ZeroVector
from .io import read_bxt, read_jsonl

PAIR_SAMPLES = 9
GAP_EDGES = (0.0, 2.0, 5.0, 10.0, 180.0)
PROB_TOL = 1e-4


@dataclass
class PredictionSet:
    probs: dict[str, np.ndarray] = field(default_factory=dict)
    feats: dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self) -> "PredictionSet":
        dims = {len(v) for v in self.probs.values()}
        if len(dims) > 1:
            raise DegenerateInput(f"probability vectors have mixed lengths {sorted(dims)}")
        for rid, p in self.probs.items():
            if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
                raise DegenerateInput(f"{rid}: probabilities must be non-negative and sum to 1")
        fdims = {len(v) for v in self.feats.values()}
        if len(fdims) > 1:
            raise DegenerateInput(f"feature vectors have mixed lengths {sorted(fdims)}")
        return self

    def prob(self, record_id: str) -> np.ndarray:
        try:
            return self.probs[record_id]
        except KeyError:
            raise MissingPrediction(record_id) from None

    def feat(self, record_id: str) -> np.ndarray:
        try:
            return self.feats[record_id]
        except KeyError:
            raise MissingPrediction(record_id) from None

    @classmethod
    def from_rows(cls, rows: Iterable[dict]) -> "PredictionSet":
        out = cls()
        for row in rows:
            rid = str(row["record_id"])
            if "probs" in row:
                out.probs[rid] = np.asarray(row["probs"], dtype=float)
            if "feat" in row:
                out.feats[rid] = np.asarray(row["feat"], dtype=float)
        return out.validate()

    @classmethod
    def load(cls, path) -> "PredictionSet":
        path = Path(path)
        if path.suffix.lower() == ".bxt":
            arr = read_bxt(path).astype(float)
            ids = path.with_suffix(".ids").read_text(encoding="utf-8").split()
            if arr.ndim != 2 or arr.shape[0] != len(ids):
                raise DegenerateInput(f"{path}: expected ({len(ids)}, D) features")
            return cls(feats=dict(zip(ids, arr))).validate()
        return cls.from_rows(read_jsonl(path))


def argmax_lowest(p: np.ndarray) -> int:
    # np.argmax already returns the first maximum
    return int(np.argmax(p))


def split_test_items(records: Sequence[Record], split: Split) -> list[tuple[str, str, int]]:
    """``(record_id, track_id, class_index)`` for every test image of a split."""
    test = set(split.test_track_ids)
    index = split.class_index()
    items = [
        (r.record_id, r.track_id, index[r.label.key(split.name)])
        for r in records
        if r.track_id in test and r.label.key(split.name) in index
    ]
    return sorted(items)


def track_accuracy(preds: PredictionSet, items: Sequence[tuple[str, str, int]]) -> tuple[float, float]:
    """Image accuracy and track accuracy (argmax of the mean track probability)."""
    if not items:
        raise InsufficientData("no test images")
    by_track: dict[str, list[np.ndarray]] = defaultdict(list)
    truth: dict[str, int] = {}
    correct = 0
    for rid, track, cls in items:
        p = preds.prob(rid)
        correct += argmax_lowest(p) == cls
        by_track[track].append(p)
        truth[track] = cls
    track_correct = sum(argmax_lowest(np.mean(ps, axis=0)) == truth[t] for t, ps in by_track.items())
    return correct / len(items), track_correct / len(by_track)


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine distance of a zero feature vector")
    return float(1.0 - (a @ b) / (na * nb))


@dataclass(frozen=True, eq=False)
class PRCurve:
    precision: np.ndarray
    recall: np.ndarray
    thresholds: np.ndarray
    average_precision: float

    def rows(self) -> list[dict]:
        return [
            {"threshold": float(t), "precision": float(p), "recall": float(r)}
            for t, p, r in zip(self.thresholds, self.precision, self.recall)
        ]


def pr_curve(distances, same) -> PRCurve:
    """Precision/recall over every distance threshold (pairs with distance
    <= threshold are called "same"). AP is the stepwise area
    ``sum (R_k - R_{k-1}) * P_k``. The first point sits at recall 0 with the
    precision of the best-scored pair(s)."""
    d = np.asarray(distances, dtype=float)
    y = np.asarray(same, dtype=bool)
    if d.shape != y.shape or d.size == 0:
        raise DegenerateInput("distances and labels must be equal-length and non-empty")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise InsufficientData("verification needs at least one positive pair")
    order = np.argsort(d, kind="stable")
    d, y = d[order], y[order]
    # last index of each group of tied scores
    last = np.r_[np.nonzero(np.diff(d))[0], d.size - 1]
    tp = np.cumsum(y)[last]
    n = last + 1
    precision = tp / n
    recall = tp / n_pos
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return PRCurve(
        np.r_[precision[0], precision],
        np.r_[0.0, recall],
        np.r_[d[last[0]], d[last]],
        ap,
    )


def track_images(records: Sequence[Record]) -> dict[str, list[str]]:
    out: dict[str, list[str]] = defaultdict(list)
    for r in sorted(records, key=lambda r: r.record_id):
        out[r.track_id].append(r.record_id)
    return dict(out)


def pair_distances(
    pairs: Sequence[tuple[str, str, bool]],
    images: dict[str, list[str]],
    feats: PredictionSet,
    rng: np.random.Generator,
    n_samples: int = PAIR_SAMPLES,
) -> np.ndarray:
    """Median cosine distance of ``n_samples`` random image pairs per track pair.

    Indices for all pairs are drawn up front in pair order, so the result
    does not depend on how scoring is later distributed.
    """
    draws = []
    for a, b, _ in pairs:
        ia = rng.integers(0, len(images[a]), n_samples)
        ib = rng.integers(0, len(images[b]), n_samples)
        draws.append((ia, ib))
    out = np.empty(len(pairs))
    for k, ((a, b, _), (ia, ib)) in enumerate(zip(pairs, draws)):
        ds = [cosine_distance(feats.feat(images[a][i]), feats.feat(images[b][j])) for i, j in zip(ia, ib)]
        out[k] = float(np.median(ds))
    return out


def verification(
    pairs: Sequence[tuple[str, str, bool]],
    images: dict[str, list[str]],
    feats: PredictionSet,
    rng=0,
) -> PRCurve:
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    dists = pair_distances(pairs, images, feats, rng)
    return pr_curve(dists, [s for _, _, s in pairs])


def sample_track_pairs(
    track_class: dict[str, tuple],
    n_pairs: int,
    rng=0,
    min_positive_frac: float = 0.01,
) -> list[tuple[str, str, bool]]:
    """Random pairs of distinct tracks, topped up with same-class pairs so at
    least ``min_positive_frac`` of them are positives."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    tracks = sorted(track_class)
    if len(tracks) < 2 or n_pairs < 1:
        raise InsufficientData("need at least two tracks and one pair")
    ia = rng.integers(0, len(tracks), n_pairs)
    ib = (ia + rng.integers(1, len(tracks), n_pairs)) % len(tracks)
    pairs = [(tracks[i], tracks[j], track_class[tracks[i]] == track_class[tracks[j]]) for i, j in zip(ia, ib)]

    need = math.ceil(min_positive_frac * n_pairs) - sum(p[2] for p in pairs)
    if need > 0:
        groups: dict[tuple, list[str]] = defaultdict(list)
        for t in tracks:
            groups[track_class[t]].append(t)
        multi = [g for _, g in sorted(groups.items()) if len(g) >= 2]
        if not multi:
            raise InsufficientData("no class has two tracks; cannot form positive pairs")
        negatives = [k for k, p in enumerate(pairs) if not p[2]]
        for k in negatives[:need]:
            g = multi[int(rng.integers(0, len(multi)))]
            i, j = rng.choice(len(g), size=2, replace=False)
            pairs[k] = (g[i], g[j], True)
    return pairs


def _viewpoint(rec: Record, cameras: dict[str, CameraCalib], frame: str) -> np.ndarray:
    calib = calib_for(rec, cameras)
    if rec.box3d is None or calib is None:
        raise InsufficientData(f"{rec.record_id}: viewpoint needs box3d and camera calibration")
    if frame == "vehicle":
        return vehicle_viewpoint(rec.box3d, calib)
    if frame == "camera":
        return viewpoint_3d(rec.box3d, calib)
    raise ValueError(f"unknown viewpoint frame {frame!r}")


def viewpoint_gaps(
    test_records: Sequence[Record],
    train_records: Sequence[Record],
    cameras: Optional[dict[str, CameraCalib]] = None,
    frame: str = "vehicle",
) -> np.ndarray:
    """Per test record, the smallest angle (deg) to any training viewpoint."""
    cameras = cameras or {}
    if not train_records:
        raise InsufficientData("no training records")
    wt = np.array([_viewpoint(r, cameras, frame) for r in test_records]).reshape(-1, 3)
    wr = np.array([_viewpoint(r, cameras, frame) for r in train_records]).reshape(-1, 3)
    nearest = wr[np.argmax(wt @ wr.T, axis=1)]
    # atan2 form stays exact for identical directions, unlike arccos near 1
    sin = np.linalg.norm(np.cross(wt, nearest), axis=1)
    cos = np.sum(wt * nearest, axis=1)
    return np.degrees(np.arctan2(sin, cos))


def viewpoint_gap_analysis(
    test_records: Sequence[Record],
    train_records: Sequence[Record],
    preds_base: PredictionSet,
    preds_mod: PredictionSet,
    split: Split,
    cameras: Optional[dict[str, CameraCalib]] = None,
    edges: Sequence[float] = GAP_EDGES,
    frame: str = "vehicle",
) -> list[dict]:
    """Accuracy improvement (percent points) of ``preds_mod`` over
    ``preds_base`` per viewpoint-gap bin, plus each bin's share of test images.

    ``frame="vehicle"`` compares directions toward the camera expressed in
    each vehicle's own axes; ``frame="camera"`` compares raw camera rays.
    """
    index = split.class_index()
    test_records = sorted(test_records, key=lambda r: r.record_id)
    gaps = viewpoint_gaps(test_records, train_records, cameras, frame)
    edges = np.asarray(edges, dtype=float)
    k = np.clip(np.searchsorted(edges, gaps, side="right") - 1, 0, len(edges) - 2)
    truth = np.array([index[r.label.key(split.name)] for r in test_records])
    base_ok = np.array([argmax_lowest(preds_base.prob(r.record_id)) for r in test_records]) == truth
    mod_ok = np.array([argmax_lowest(preds_mod.prob(r.record_id)) for r in test_records]) == truth

    rows = []
    n = len(test_records)
    for b in range(len(edges) - 1):
        sel = k == b
        cnt = int(sel.sum())
        acc_b = float(base_ok[sel].mean()) if cnt else float("nan")
        acc_m = float(mod_ok[sel].mean()) if cnt else float("nan")
        rows.append(
            {
                "bin_lo": float(edges[b]),
                "bin_hi": float(edges[b + 1]),
                "count": cnt,
                "share_pct": 100.0 * cnt / n if n else 0.0,
                "acc_base": acc_b,
                "acc_mod": acc_m,
                "improvement_pp": 100.0 * (acc_m - acc_b),
            }
        )
    return rows


def write_csv(path, rows: Sequence[dict]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def plot_pr(curve: PRCurve, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 4), dpi=100)
    ax.step(curve.recall, curve.precision, where="post")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_title(f"AP = {curve.average_precision:.4f}")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
