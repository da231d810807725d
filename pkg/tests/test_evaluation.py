import math

import numpy as np
import pytest
from helpers import brute_force_ap, make_record, monotone_maps, track_dataset, viewpoint_record
from sklearn.metrics import average_precision_score

from boxgeom.dataset import Split, make_splits
from boxgeom.errors import DegenerateInput, InsufficientData, MissingPrediction, ZeroVector
from boxgeom.evaluation import (
    PAIR_SAMPLES,
    PredictionSet,
    argmax_lowest,
    cosine_distance,
    pair_distances,
    pr_curve,
    sample_track_pairs,
    split_test_items,
    track_accuracy,
    track_images,
    verification,
    viewpoint_gap_analysis,
    viewpoint_gaps,
    write_csv,
)
from boxgeom.io import write_bxt


def test_hand_track_example():
    preds = PredictionSet.from_rows(
        [{"record_id": f"i{k}", "probs": p} for k, p in enumerate([[0.6, 0.4], [0.3, 0.7], [0.3, 0.7]])]
    )
    items = [(f"i{k}", "t", 1) for k in range(3)]
    image_acc, track_acc = track_accuracy(preds, items)
    assert track_acc == 1.0 and image_acc == pytest.approx(2 / 3)
    assert np.allclose(np.mean([preds.prob(f"i{k}") for k in range(3)], axis=0), [0.4, 0.6])


def test_argmax_tie_breaks_low():
    assert argmax_lowest(np.array([0.5, 0.5])) == 0
    assert argmax_lowest(np.array([0.2, 0.4, 0.4])) == 1


def test_single_image_tracks_equal_accuracies(rng):
    probs = rng.dirichlet(np.ones(4), 50)
    preds = PredictionSet({f"r{k}": p for k, p in enumerate(probs)})
    items = [(f"r{k}", f"t{k}", int(rng.integers(0, 4))) for k in range(50)]
    a, b = track_accuracy(preds, items)
    assert a == b


def test_perfect_predictor():
    items = [(f"r{k}", f"t{k // 3}", k % 2) for k in range(12)]
    items = [(rid, f"{tr}-{c}", c) for rid, tr, c in items]
    preds = PredictionSet({rid: np.eye(2)[c] for rid, _, c in items})
    assert track_accuracy(preds, items) == (1.0, 1.0)


def test_missing_prediction():
    preds = PredictionSet({"a": np.array([1.0, 0.0])})
    with pytest.raises(MissingPrediction):
        track_accuracy(preds, [("a", "t", 0), ("b", "t", 0)])
    with pytest.raises(InsufficientData):
        track_accuracy(preds, [])


def test_track_score_invariant_to_uniform_duplication(rng):
    for _ in range(20):
        probs = rng.dirichlet(np.ones(3), 30)
        tracks = rng.integers(0, 8, 30)
        truth = {t: int(rng.integers(0, 3)) for t in range(8)}
        items = [(f"r{k}", f"t{tracks[k]}", truth[tracks[k]]) for k in range(30)]
        preds = PredictionSet({f"r{k}": p for k, p in enumerate(probs)})
        m = int(rng.integers(2, 5))
        dup_items = [(f"{rid}#{j}", tr, c) for rid, tr, c in items for j in range(m)]
        dup = PredictionSet({f"{rid}#{j}": preds.prob(rid) for rid, _, _ in items for j in range(m)})
        assert track_accuracy(dup, dup_items)[1] == track_accuracy(preds, items)[1]


def test_prediction_set_validation(tmp_path):
    with pytest.raises(DegenerateInput):
        PredictionSet.from_rows([{"record_id": "a", "probs": [0.5, 0.6]}])
    with pytest.raises(DegenerateInput):
        PredictionSet.from_rows([{"record_id": "a", "probs": [1.0]}, {"record_id": "b", "probs": [0.5, 0.5]}])
    with pytest.raises(DegenerateInput):
        PredictionSet.from_rows([{"record_id": "a", "probs": [1.2, -0.2]}])
    ok = PredictionSet.from_rows([{"record_id": 7, "probs": [0.49995, 0.5]}])
    assert "7" in ok.probs


def test_prediction_set_from_bxt(tmp_path, rng):
    feats = rng.normal(size=(3, 5)).astype(np.float32)
    write_bxt(tmp_path / "f.bxt", feats)
    (tmp_path / "f.ids").write_text("a\nb\nc\n")
    ps = PredictionSet.load(tmp_path / "f.bxt")
    assert np.array_equal(ps.feat("b"), feats[1].astype(float))
    (tmp_path / "f.ids").write_text("a\nb\n")
    with pytest.raises(DegenerateInput):
        PredictionSet.load(tmp_path / "f.bxt")


def test_split_test_items():
    recs = track_dataset(4, 16, images_per_track=2)
    split = make_splits(recs, rng=0)
    items = split_test_items(recs, split)
    assert len(items) == 2 * len(split.test_track_ids)
    assert {c for _, _, c in items} == {0, 1}


def test_cosine_distance():
    assert cosine_distance([1, 0], [0, 2]) == pytest.approx(1.0)
    assert cosine_distance([1, 1], [2, 2]) == pytest.approx(0.0, abs=1e-15)
    assert cosine_distance([1, 0], [-1, 0]) == pytest.approx(2.0)
    with pytest.raises(ZeroVector):
        cosine_distance([0, 0], [1, 0])


def test_ap_matches_brute_force_oracle(rng):
    for trial in range(50):
        d = rng.random(20)
        if trial % 2:
            d = np.round(d * 5) / 5  # force ties
        y = rng.random(20) < 0.4
        y[int(rng.integers(0, 20))] = True
        curve = pr_curve(d, y)
        assert abs(curve.average_precision - brute_force_ap(d, y)) <= 1e-9
        assert abs(curve.average_precision - average_precision_score(y, -d)) <= 1e-9


def test_ap_hand_example():
    # sorted: + - + -  -> P at recalls 0.5, 1.0 is 1 and 2/3
    curve = pr_curve([0.1, 0.2, 0.3, 0.4], [True, False, True, False])
    assert curve.average_precision == pytest.approx(0.5 * 1 + 0.5 * 2 / 3)


def test_pr_curve_shape_and_recall_zero_point(rng):
    d = rng.random(30)
    y = rng.random(30) < 0.5
    y[0] = True
    curve = pr_curve(d, y)
    assert curve.recall[0] == 0.0 and curve.recall[-1] == 1.0
    assert np.all(np.diff(curve.recall) >= 0)
    best = np.argmin(d)
    assert curve.precision[0] == float(y[best])
    assert len(curve.rows()) == len(curve.recall)


def test_pr_curve_errors():
    with pytest.raises(InsufficientData):
        pr_curve([0.1, 0.2], [False, False])
    with pytest.raises(DegenerateInput):
        pr_curve([], [])


def test_ap_invariant_under_monotone_maps(rng):
    d = rng.random(40)
    y = rng.random(40) < 0.3
    y[0] = True
    ap = pr_curve(d, y).average_precision
    for f in monotone_maps(rng, 10):
        assert abs(pr_curve(f(d), y).average_precision - ap) <= 1e-12


def test_separable_features_give_ap_one(rng):
    track_class = {f"t{k}": (k % 3,) for k in range(30)}
    images = {t: [f"{t}-{i}" for i in range(3)] for t in track_class}
    basis = np.eye(3)
    feats = PredictionSet(feats={f"{t}-{i}": 2.0 * basis[c[0]] for t, c in track_class.items() for i in range(3)})
    pairs = sample_track_pairs(track_class, 300, rng)
    assert verification(pairs, images, feats, rng).average_precision == 1.0


class _FixedDraws:
    """Stand-in generator returning scripted index draws."""

    def __init__(self, draws):
        self.draws = list(draws)

    def integers(self, lo, hi, n):
        return np.asarray(self.draws.pop(0))


def test_median_of_nine_is_fifth_order_statistic(rng):
    # image j of track b sits at angle theta_j from track a's only image
    dists = rng.permutation(np.arange(1, 10) * 0.1)
    thetas = np.arccos(1.0 - dists)
    images = {"a": ["a0"], "b": [f"b{j}" for j in range(9)]}
    feats = {"a0": np.array([1.0, 0.0])}
    feats.update({f"b{j}": np.array([math.cos(t), math.sin(t)]) for j, t in enumerate(thetas)})
    out = pair_distances([("a", "b", False)], images, PredictionSet(feats=feats), _FixedDraws([np.zeros(9, int), np.arange(9)]))
    assert PAIR_SAMPLES == 9
    assert out[0] == pytest.approx(np.sort(dists)[4]) and out[0] == pytest.approx(0.5)


def test_verification_zero_vector():
    feats = PredictionSet(feats={"a0": np.zeros(3), "b0": np.ones(3)})
    with pytest.raises(ZeroVector):
        verification([("a", "b", True)], {"a": ["a0"], "b": ["b0"]}, feats, 0)


def test_verification_deterministic(rng):
    track_class = {f"t{k}": (k % 4,) for k in range(40)}
    images = {t: [f"{t}-{i}" for i in range(5)] for t in track_class}
    feats = PredictionSet(feats={im: rng.normal(size=8) for ims in images.values() for im in ims})
    pairs = sample_track_pairs(track_class, 200, 3)
    a = verification(pairs, images, feats, 11)
    b = verification(pairs, images, feats, 11)
    assert a.average_precision == b.average_precision and np.array_equal(a.precision, b.precision)
    # the draws for one pair do not depend on later pairs
    first = pair_distances(pairs[:5], images, feats, np.random.default_rng(4))
    full = pair_distances(pairs, images, feats, np.random.default_rng(4))
    assert np.array_equal(first, full[:5])


def test_sample_track_pairs_positive_fraction():
    track_class = {f"t{k}": (f"c{k}",) for k in range(200)}
    track_class.update({"x1": ("dup",), "x2": ("dup",)})
    pairs = sample_track_pairs(track_class, 1000, 0)
    assert len(pairs) == 1000
    assert sum(p[2] for p in pairs) >= 10
    assert all(a != b for a, b, _ in pairs)
    assert all(s == (track_class[a] == track_class[b]) for a, b, s in pairs)
    with pytest.raises(InsufficientData):
        sample_track_pairs({f"t{k}": (f"c{k}",) for k in range(5)}, 100, 0)


def test_track_images_sorted():
    recs = [make_record("r2", "c", "t"), make_record("r1", "c", "t"), make_record("r3", "c", "u")]
    assert track_images(recs) == {"t": ["r1", "r2"], "u": ["r3"]}


def _gap_fixture(test_az, train_az):
    cams = {}
    test, train = [], []
    for k, az in enumerate(test_az):
        r, c = viewpoint_record(f"te{k}", "cam1", f"te{k}", az, label="a" if k % 2 else "b")
        test.append(r)
        cams["cam1"] = c
    for k, az in enumerate(train_az):
        r, c = viewpoint_record(f"tr{k}", "cam0", f"tr{k}", az, label="a" if k % 2 else "b")
        train.append(r)
        cams["cam0"] = c
    return test, train, cams


def test_viewpoint_gap_identical_views_first_bin():
    azs = [10.0, 50.0, 130.0, 200.0, -40.0, 95.0]
    test, train, cams = _gap_fixture(azs, azs)
    gaps = viewpoint_gaps(test, train, cams)
    assert np.all(gaps == 0.0)
    split = Split("hard", tuple(r.track_id for r in train), tuple(r.track_id for r in test), (("vw", "passat", "sedan", "b7"), ("skoda", "octavia", "combi", "mk3")))
    truth = {r.record_id: split.class_index()[r.label.key()] for r in test}
    base = PredictionSet({rid: np.eye(2)[1 - c] for rid, c in truth.items()})
    mod = PredictionSet({rid: np.eye(2)[c] for rid, c in truth.items()})
    rows = viewpoint_gap_analysis(test, train, base, mod, split, cams)
    assert rows[0]["count"] == len(test) and rows[0]["share_pct"] == 100.0
    assert rows[0]["improvement_pp"] == 100.0
    assert sum(r["share_pct"] for r in rows) == pytest.approx(100.0)


def test_viewpoint_gap_matches_3d_angle():
    el = math.radians(10.0)

    def ray(az):
        a = math.radians(az)
        return np.array([math.cos(el) * math.cos(a), math.cos(el) * math.sin(a), math.sin(el)])

    test, train, cams = _gap_fixture([3.0, 20.0, 47.0], [0.0, 40.0])
    gaps = viewpoint_gaps(test, train, cams)
    expected = [min(math.degrees(math.acos(np.clip(ray(t) @ ray(s), -1, 1))) for s in (0.0, 40.0)) for t in (3.0, 20.0, 47.0)]
    assert gaps == pytest.approx(expected, abs=1e-6)


def test_viewpoint_gap_bins_sum_to_100(rng):
    test, train, cams = _gap_fixture(list(rng.uniform(-180, 180, 25)), list(rng.uniform(-180, 180, 8)))
    split = Split("hard", (), tuple(r.track_id for r in test), (("vw", "passat", "sedan", "b7"), ("skoda", "octavia", "combi", "mk3")))
    probs = PredictionSet({r.record_id: rng.dirichlet([1, 1]) for r in test})
    rows = viewpoint_gap_analysis(test, train, probs, probs, split, cams)
    assert sum(r["share_pct"] for r in rows) == pytest.approx(100.0)
    assert sum(r["count"] for r in rows) == 25
    assert [r["bin_lo"] for r in rows] == [0.0, 2.0, 5.0, 10.0]
    assert all(r["improvement_pp"] == 0 or math.isnan(r["improvement_pp"]) for r in rows)


def test_viewpoint_gap_camera_frame():
    test, train, cams = _gap_fixture([30.0], [30.0])
    assert viewpoint_gaps(test, train, cams, frame="camera")[0] == 0.0
    with pytest.raises(ValueError):
        viewpoint_gaps(test, train, cams, frame="world")


def test_write_csv(tmp_path):
    write_csv(tmp_path / "a.csv", [{"x": 1, "y": 0.5}])
    assert (tmp_path / "a.csv").read_text().splitlines() == ["x,y", "1,0.5"]
