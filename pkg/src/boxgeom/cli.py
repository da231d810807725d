"""Command-line batch frontend.

Every subcommand writes its outputs plus ``manifest.json`` (inputs with
SHA-256, seed, resolved options, tool version) into ``--out``. Records are
processed in ``record_id`` order, so outputs do not depend on ``--workers``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .augment import AugmentConfig, SeedPolicy, augment_sample
from .box3d import Box3D, Viewpoint2D, view_vectors
from .dataset import Annotations, Record, load_annotations, load_split, make_splits, stats, validate
from .errors import BoxGeomError
from .estimate import check_direction_bins, decode_direction_bins, encode_angle, estimate_box, gt_directions, mean_vertex_error
from .evaluation import (
    GAP_EDGES,
    PredictionSet,
    plot_pr,
    sample_track_pairs,
    split_test_items,
    track_accuracy,
    track_images,
    verification,
    viewpoint_gap_analysis,
    write_csv,
)
from .io import load_config, read_image, read_jsonl, read_probability_map, write_json, write_jsonl, write_png
from .rast import rasterize
from .unpack import DEFAULT_TARGET, layout_from_box, unpack

log = logging.getLogger("boxgeom")

EXIT_RECORD_ERROR = 1
EXIT_USAGE = 2

DEFAULTS = {"seed": 0, "workers": 1, "target_size": DEFAULT_TARGET, "pairs": 10000, "epoch": 0}


class UsageError(Exception):
    """Bad or missing input; exits with code 2."""


class RecordError(Exception):
    def __init__(self, record_id: str, cause: Exception):
        super().__init__(f"{record_id}: {cause}")
        self.record_id = record_id


def _setup_logging() -> None:
    level = os.environ.get("BOXGEOM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _load_ann(path) -> Annotations:
    p = _existing(path, "annotation file")
    try:
        return load_annotations(p)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"cannot parse annotation file {p}: {exc}") from exc


def _write_manifest(out: Path, args, inputs: dict[str, Path], extra: Optional[dict] = None) -> None:
    options = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "config_data")}
    manifest = {
        "tool": "boxgeom",
        "version": __version__,
        "command": args.command,
        "seed": args.seed,
        "options": {k: str(v) if isinstance(v, Path) else v for k, v in options.items()},
        "config": args.config_data,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in sorted(inputs.items()) if p.is_file()},
    }
    if extra:
        manifest.update(extra)
    write_json(out / "manifest.json", manifest)


def _run_records(
    fn: Callable, jobs: Sequence[tuple], args
) -> tuple[list, list[str]]:
    """Map ``fn`` over jobs (first element is the record id) in order.

    ``fn`` returns a result or raises; failures abort unless ``--skip-bad``.
    """
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(_guarded, [fn] * len(jobs), jobs, chunksize=8))
    else:
        outcomes = [_guarded(fn, job) for job in jobs]
    results, skipped = [], []
    for job, (ok, value) in zip(jobs, outcomes):
        if ok:
            results.append(value)
            continue
        if not args.skip_bad:
            raise RecordError(job[0], value)
        log.warning("skipping %s: %s", job[0], value)
        skipped.append(job[0])
    return results, skipped


def _guarded(fn, job):
    try:
        return True, fn(*job)
    except (BoxGeomError, OSError, ValueError, KeyError) as exc:
        return False, exc


# -- unpack ----------------------------------------------------------------


def _unpack_one(record_id: str, image_path: str, box_json: Optional[dict], bbox, target: int, out: str, want_view: bool, want_rast: bool):
    if box_json is None:
        raise ValueError("record has no box3d")
    box = Box3D.from_json(box_json)
    img = read_image(image_path)
    layout = layout_from_box(box, target)
    u = unpack(img, box, layout)
    write_png(Path(out) / "unpacked" / f"{record_id}.png", u.pixels)
    write_json(Path(out) / "unpacked" / f"{record_id}.json", {"layout": layout.to_json(), "box3d": box.to_json()})
    if want_view:
        write_json(Path(out) / "view" / f"{record_id}.json", {"view": view_vectors(box).to_json(), "layout": layout.to_json()})
    if want_rast:
        from .geom import Rect

        mask = rasterize(box, Rect(*bbox), target, target)
        write_png(Path(out) / "rast" / f"{record_id}.png", mask.to_png_array())
    return record_id


def cmd_unpack(args) -> None:
    ann = _load_ann(args.annotations)
    out = Path(args.out)
    jobs = [
        (
            r.record_id,
            str(ann.image_path(r)),
            r.box3d.to_json() if r.box3d is not None else None,
            r.bbox2d.as_list(),
            args.target_size,
            str(out),
            args.view,
            args.rast,
        )
        for r in _sorted(ann.records)
    ]
    done, skipped = _run_records(_unpack_one, jobs, args)
    _write_manifest(out, args, {"annotations": Path(args.annotations)}, {"records": done, "skipped": skipped})


# -- augment ---------------------------------------------------------------


def _augment_one(record_id: str, path: str, seed: int, epoch: int, cfg: dict, view_path: Optional[str], out: str):
    img = read_image(path)
    view = None
    if view_path is not None:
        with open(view_path, encoding="utf-8") as fh:
            v = json.load(fh)["view"]
        view = Viewpoint2D(tuple(v["v_f"]), tuple(v["v_s"]), tuple(v["v_r"]), int(v["d"]))
    res = augment_sample(img, record_id, SeedPolicy(seed), AugmentConfig.from_dict(cfg), epoch=epoch, view=view)
    write_png(Path(out) / "augmented" / f"{record_id}.png", res.image)
    row = {"record_id": record_id, "applied": res.applied}
    if res.view is not None:
        row["view"] = res.view.to_json()
    return row


def cmd_augment(args) -> None:
    src = _existing(args.input, "input directory")
    img_dir = src / "unpacked" if (src / "unpacked").is_dir() else src
    view_dir = src / "view"
    out = Path(args.out)
    cfg = AugmentConfig.from_dict(args.config_data.get("augment", {})).to_dict()
    jobs = []
    for p in sorted(img_dir.glob("*.png")):
        vp = view_dir / f"{p.stem}.json"
        jobs.append((p.stem, str(p), args.seed, args.epoch, cfg, str(vp) if args.view and vp.is_file() else None, str(out)))
    rows, skipped = _run_records(_augment_one, jobs, args)
    write_jsonl(out / "augment_log.jsonl", rows)
    _write_manifest(out, args, {}, {"input": str(src), "augment": cfg, "skipped": skipped})


# -- estimate-bb -----------------------------------------------------------


def _draw_box(draw, b: np.ndarray, color) -> None:
    edges = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4), (0, 4), (1, 5), (2, 6), (3, 7)]
    for i, j in edges:
        draw.line([tuple(b[i]), tuple(b[j])], fill=color, width=1)


def _estimate_one(record_id: str, contour_path: str, bbox, angles, d: int, gt_json: Optional[dict], image_path: Optional[str], out: str, overlay: bool):
    from .geom import Rect

    prob = read_probability_map(contour_path)
    box = estimate_box(prob, Rect(*bbox), angles, d)
    row = {"record_id": record_id, "box3d": box.to_json(), "angles": list(angles)}
    gt = Box3D.from_json(gt_json) if gt_json is not None else None
    if gt is not None:
        row["vertex_error"] = mean_vertex_error(box, gt)
    if overlay:
        from PIL import Image, ImageDraw

        if image_path is not None and Path(image_path).is_file():
            base = Image.fromarray(read_image(image_path)).convert("RGB")
        else:
            base = Image.fromarray((prob * 255).astype(np.uint8)).convert("RGB")
        draw = ImageDraw.Draw(base)
        if gt is not None:
            _draw_box(draw, gt.b, (0, 255, 0))
        _draw_box(draw, box.b, (255, 0, 0))
        Path(out, "overlays").mkdir(parents=True, exist_ok=True)
        base.save(Path(out) / "overlays" / f"{record_id}.png", format="PNG")
    return row


def cmd_estimate_bb(args) -> None:
    ann = _load_ann(args.annotations)
    contours = _existing(args.contours, "contour directory")
    out = Path(args.out)
    inputs = {"annotations": Path(args.annotations)}
    preds: dict[str, dict] = {}
    if args.directions:
        inputs["directions"] = _existing(args.directions, "direction file")
        preds = {str(r["record_id"]): r for r in read_jsonl(args.directions)}
    jobs = []
    for r in _sorted(ann.records):
        try:
            if r.record_id in preds:
                row = preds[r.record_id]
                angles = row["angles"] if "angles" in row else decode_direction_bins(check_direction_bins(row["bins"]))
                d = int(row.get("d", r.box3d.d if r.box3d is not None else 1))
            elif args.directions is None and r.box3d is not None:
                angles = gt_directions(r.box3d, r.bbox2d)
                d = r.box3d.d
            else:
                raise ValueError("no direction prediction")
        except (BoxGeomError, ValueError, KeyError) as exc:
            if not args.skip_bad:
                raise RecordError(r.record_id, exc) from exc
            log.warning("skipping %s: %s", r.record_id, exc)
            continue
        jobs.append(
            (
                r.record_id,
                str(contours / f"{r.record_id}.png"),
                r.bbox2d.as_list(),
                tuple(float(a) for a in angles),
                d,
                r.box3d.to_json() if r.box3d is not None else None,
                str(ann.image_path(r)),
                str(out),
                args.overlay,
            )
        )
    rows, skipped = _run_records(_estimate_one, jobs, args)
    write_jsonl(out / "boxes.jsonl", rows)
    errs = [{"record_id": r["record_id"], "vertex_error": r["vertex_error"]} for r in rows if "vertex_error" in r]
    if errs:
        write_csv(out / "vertex_errors.csv", errs)
    _write_manifest(out, args, inputs, {"skipped": skipped})


# -- dataset commands ------------------------------------------------------


def cmd_gt_directions(args) -> None:
    ann = _load_ann(args.annotations)
    out = Path(args.out)
    rows, skipped = [], []
    for r in _sorted(ann.records):
        try:
            if r.box3d is None:
                raise ValueError("record has no box3d")
            angles = gt_directions(r.box3d, r.bbox2d)
            rows.append({"record_id": r.record_id, "angles": list(angles), "bin_index": [encode_angle(a) for a in angles], "d": r.box3d.d})
        except (BoxGeomError, ValueError) as exc:
            if not args.skip_bad:
                raise RecordError(r.record_id, exc) from exc
            skipped.append(r.record_id)
    write_jsonl(out / "directions.jsonl", rows)
    _write_manifest(out, args, {"annotations": Path(args.annotations)}, {"skipped": skipped})


def cmd_make_splits(args) -> None:
    ann = _load_ann(args.annotations)
    out = Path(args.out)
    split = make_splits(ann.records, args.mode, args.seed, args.train_fraction)
    write_json(out / f"split_{args.mode}.json", split.to_json())
    _write_manifest(out, args, {"annotations": Path(args.annotations)})
    print(f"{args.mode}: {len(split.class_list)} classes, {len(split.train_track_ids)} train / {len(split.test_track_ids)} test tracks")


def cmd_stats(args) -> None:
    ann = _load_ann(args.annotations)
    out = Path(args.out)
    write_json(out / "stats.json", stats(_sorted(ann.records), ann.cameras))
    _write_manifest(out, args, {"annotations": Path(args.annotations)})


def cmd_validate(args) -> None:
    ann = _load_ann(args.annotations)
    report = validate(_sorted(ann.records), ann.root if args.check_images else None)
    out = Path(args.out)
    write_json(out / "validation.json", report.to_json())
    _write_manifest(out, args, {"annotations": Path(args.annotations)})
    print(
        f"{report.n_images} images, {report.n_tracks} tracks, {report.n_classes} classes, "
        f"{report.n_makes} makes, {report.n_cameras} cameras, {len(report.violations)} violations"
    )


# -- evaluation ------------------------------------------------------------


def _load_preds(path, what: str) -> PredictionSet:
    return PredictionSet.load(_existing(path, what))


def cmd_eval_classification(args) -> None:
    ann = _load_ann(args.annotations)
    split = load_split(_existing(args.split, "split file"))
    preds = _load_preds(args.preds, "prediction file")
    image_acc, track_acc = track_accuracy(preds, split_test_items(ann.records, split))
    out = Path(args.out)
    write_csv(out / "classification.csv", [{"split": split.name, "image_acc": image_acc, "track_acc": track_acc}])
    _write_manifest(out, args, {"annotations": Path(args.annotations), "split": Path(args.split), "preds": Path(args.preds)})
    print(f"image accuracy {image_acc:.4f}, track accuracy {track_acc:.4f}")


def cmd_eval_verification(args) -> None:
    ann = _load_ann(args.annotations)
    split = load_split(_existing(args.split, "split file"))
    feats = _load_preds(args.feats, "feature file")
    test = set(split.test_track_ids)
    test_records = [r for r in ann.records if r.track_id in test]
    track_class = {r.track_id: r.label.key(split.name) for r in test_records}
    rng = np.random.default_rng(args.seed)
    pairs = sample_track_pairs(track_class, args.pairs, rng)
    curve = verification(pairs, track_images(test_records), feats, rng)
    out = Path(args.out)
    write_csv(out / "pr_curve.csv", curve.rows())
    write_csv(out / "verification.csv", [{"pairs": len(pairs), "positives": sum(p[2] for p in pairs), "average_precision": curve.average_precision}])
    if args.plot:
        plot_pr(curve, out / "pr_curve.png")
    _write_manifest(out, args, {"annotations": Path(args.annotations), "split": Path(args.split), "feats": Path(args.feats)})
    print(f"average precision {curve.average_precision:.4f} over {len(pairs)} pairs")


def cmd_eval_viewpoint_gap(args) -> None:
    ann = _load_ann(args.annotations)
    split = load_split(_existing(args.split, "split file"))
    base = _load_preds(args.preds_base, "base prediction file")
    mod = _load_preds(args.preds_mod, "prediction file")
    train, test = set(split.train_track_ids), set(split.test_track_ids)
    rows = viewpoint_gap_analysis(
        [r for r in ann.records if r.track_id in test],
        [r for r in ann.records if r.track_id in train],
        base,
        mod,
        split,
        ann.cameras,
        GAP_EDGES,
        args.frame,
    )
    out = Path(args.out)
    write_csv(out / "viewpoint_gap.csv", rows)
    _write_manifest(
        out,
        args,
        {"annotations": Path(args.annotations), "split": Path(args.split), "preds_base": Path(args.preds_base), "preds_mod": Path(args.preds_mod)},
    )
    for row in rows:
        print(f"{row['bin_lo']:g}-{row['bin_hi']:g} deg: {row['share_pct']:.1f}% of test, {row['improvement_pp']:+.2f} pp")


# -- parser ----------------------------------------------------------------


def _sorted(records: Sequence[Record]) -> list[Record]:
    return sorted(records, key=lambda r: r.record_id)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--skip-bad", action="store_true", help="skip records that fail instead of aborting")

    parser = argparse.ArgumentParser(prog="boxgeom", description="3D box geometry toolkit for vehicle images")
    parser.add_argument("--version", action="version", version=f"boxgeom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("unpack", parents=[common], help="unpack box faces into flat images")
    p.add_argument("annotations")
    p.add_argument("--target-size", type=int, default=None)
    p.add_argument("--view", action="store_true", help="write view-vector sidecars")
    p.add_argument("--rast", action="store_true", help="write 4-channel face masks")
    p.set_defaults(func=cmd_unpack)

    p = sub.add_parser("augment", parents=[common], help="training-mode augmentation of unpacked images")
    p.add_argument("input", help="unpack output directory or a directory of PNGs")
    p.add_argument("--epoch", type=int, default=None)
    p.add_argument("--view", action="store_true", help="update view sidecars for flips")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("estimate-bb", parents=[common], help="estimate 3D boxes from contour maps")
    p.add_argument("annotations")
    p.add_argument("--contours", required=True, help="directory of <record_id>.png contour maps")
    p.add_argument("--directions", help="JSON-lines {record_id, bins: 3x60} or {record_id, angles}; ground truth when omitted")
    p.add_argument("--overlay", action="store_true", help="write debug overlays (GT green, estimate red)")
    p.set_defaults(func=cmd_estimate_bb)

    p = sub.add_parser("gt-directions", parents=[common], help="ground-truth direction angles")
    p.add_argument("annotations")
    p.set_defaults(func=cmd_gt_directions)

    p = sub.add_parser("make-splits", parents=[common], help="camera-disjoint train/test split")
    p.add_argument("annotations")
    p.add_argument("--mode", choices=("hard", "medium"), default="hard")
    p.add_argument("--train-fraction", type=float, default=None)
    p.set_defaults(func=cmd_make_splits)

    p = sub.add_parser("stats", parents=[common], help="dataset histograms")
    p.add_argument("annotations")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("validate", parents=[common], help="check annotation invariants")
    p.add_argument("annotations")
    p.add_argument("--check-images", action="store_true", help="read image headers for bounds checks")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval-classification", parents=[common], help="image and track accuracy")
    p.add_argument("annotations")
    p.add_argument("--split", required=True)
    p.add_argument("--preds", required=True)
    p.set_defaults(func=cmd_eval_classification)

    p = sub.add_parser("eval-verification", parents=[common], help="same-type verification PR/AP")
    p.add_argument("annotations")
    p.add_argument("--split", required=True)
    p.add_argument("--feats", required=True)
    p.add_argument("--pairs", type=int, default=None)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_eval_verification)

    p = sub.add_parser("eval-viewpoint-gap", parents=[common], help="improvement by viewpoint gap")
    p.add_argument("annotations")
    p.add_argument("--split", required=True)
    p.add_argument("--preds-base", required=True)
    p.add_argument("--preds-mod", required=True)
    p.add_argument("--frame", choices=("vehicle", "camera"), default="vehicle")
    p.set_defaults(func=cmd_eval_viewpoint_gap)
    return parser


def _resolve(args) -> None:
    """Fill unset options from the config file, then from built-in defaults."""
    cfg = load_config(_existing(args.config, "config file")) if args.config else {}
    args.config_data = cfg
    for key, default in (*DEFAULTS.items(), ("train_fraction", 0.5)):
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, cfg.get(key, default))
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _resolve(args)
        args.func(args)
    except UsageError as exc:
        print(f"boxgeom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RecordError as exc:
        print(f"boxgeom: record failed: {exc} (use --skip-bad to continue)", file=sys.stderr)
        return EXIT_RECORD_ERROR
    except BoxGeomError as exc:
        print(f"boxgeom: error: {exc}", file=sys.stderr)
        return EXIT_RECORD_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
