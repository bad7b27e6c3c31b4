import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icfdet import evaluation as ev
from icfdet.boxes import Annotation, BoundingBox, Detection, iou
from oracles import curve_oracle, match_oracle, mr_oracle


def ann(img, x, y, w, h, ignore=False):
    return Annotation(img, BoundingBox(x, y, w, h), ignore)


def det(img, x, y, w, h, score):
    return Detection(img, BoundingBox(x, y, w, h), score)


def random_instance(rng, n_images=3, max_dets=4, max_anns=3):
    dets, anns = [], []
    ids = [f"im{i}" for i in range(n_images)]
    for img in ids:
        for _ in range(int(rng.integers(0, max_dets + 1))):
            dets.append(
                det(
                    img,
                    float(rng.integers(0, 40)),
                    float(rng.integers(0, 40)),
                    float(rng.integers(5, 30)),
                    float(rng.integers(5, 30)),
                    float(np.round(rng.uniform(-2, 2), 3)),
                )
            )
        for _ in range(int(rng.integers(0, max_anns + 1))):
            anns.append(
                ann(
                    img,
                    float(rng.integers(0, 40)),
                    float(rng.integers(0, 40)),
                    float(rng.integers(5, 30)),
                    float(rng.integers(5, 30)),
                    ignore=bool(rng.random() < 0.2),
                )
            )
    return dets, anns, ids


class TestIou:
    def test_identical(self):
        assert iou(BoundingBox(1, 2, 3, 4), BoundingBox(1, 2, 3, 4)) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(5, 5, 2, 2)) == 0.0

    def test_one_seventh(self):
        # inter = 1, union = 4 + 4 - 1 = 7
        assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 2, 2)) == pytest.approx(1 / 7)


class TestFilterReasonable:
    def test_tall_unchanged(self):
        anns = [ann("a", 0, 0, 25, 50), ann("a", 0, 0, 30, 60)]
        assert ev.filter_reasonable(anns) == anns

    def test_boundary_strict(self):
        out = ev.filter_reasonable([ann("a", 0, 0, 25, 49), ann("a", 0, 0, 25, 50)])
        assert out[0].ignore and not out[1].ignore

    def test_count_matches_oracle(self):
        rng = np.random.default_rng(0)
        anns = [ann("a", 0, 0, 10, float(rng.integers(20, 80))) for _ in range(50)]
        out = ev.filter_reasonable(anns, min_height=50)
        assert sum(a.ignore for a in out) == sum(1 for a in anns if a.box.h < 50)


class TestMatchImage:
    def test_no_detections_one_miss(self):
        res = ev.match_image([], [ann("a", 0, 0, 10, 20)])
        assert len(res.misses) == 1 and not res.matches and not res.false_positives

    def test_single_match(self):
        res = ev.match_image(
            [det("a", 0, 0, 10, 20, 1.0)], [ann("a", 1, 1, 10, 20)], iou_threshold=0.5
        )
        assert len(res.matches) == 1 and not res.false_positives and not res.misses

    def test_ignore_absorbs_detection(self):
        res = ev.match_image(
            [det("a", 0, 0, 10, 20, 1.0)], [ann("a", 0, 0, 10, 20, ignore=True)]
        )
        assert res.ignored and not res.false_positives and not res.misses

    def test_mixed_ids_rejected(self):
        with pytest.raises(ev.EvalError):
            ev.match_image([det("a", 0, 0, 1, 1, 0.0)], [ann("b", 0, 0, 1, 1)])

    def test_randomized_matches_oracle(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            dets, anns, _ = random_instance(rng, n_images=1)
            res = ev.match_image(dets, anns, 0.5)
            pairs, fps, misses = match_oracle(dets, anns, 0.5)
            assert res.matches == pairs
            assert res.false_positives == fps
            assert res.misses == misses

    def test_accounting_identity(self):
        for seed in range(200):
            rng = np.random.default_rng(seed + 10_000)
            dets, anns, _ = random_instance(rng, n_images=1)
            res = ev.match_image(dets, anns, 0.5)
            n_real = sum(1 for a in anns if not a.ignore)
            assert len(res.matches) + len(res.misses) == n_real
            matched_anns = [a for _, a in res.matches]
            assert len(set(id(a) for a in matched_anns)) == len(matched_anns)


class TestSweepCurve:
    def test_perfect_detector(self):
        anns = [ann("a", 0, 0, 10, 20), ann("b", 5, 5, 10, 20)]
        dets = [det("a", 0, 0, 10, 20, 2.0), det("b", 5, 5, 10, 20, 1.0)]
        curve = ev.sweep_curve(dets, anns)
        assert curve.fppi == (0.0,)
        assert curve.miss_rate == (0.0,)

    def test_no_detections(self):
        curve = ev.sweep_curve([], [ann("a", 0, 0, 10, 20)], image_ids=["a"])
        assert curve.fppi == (0.0,) and curve.miss_rate == (1.0,)

    def test_hand_computed_three_images(self):
        anns = [ann("a", 0, 0, 10, 20), ann("b", 0, 0, 10, 20), ann("c", 0, 0, 10, 20)]
        dets = [
            det("a", 0, 0, 10, 20, 3.0),  # TP
            det("b", 30, 30, 10, 20, 2.0),  # FP
            det("b", 0, 0, 10, 20, 1.0),  # TP
        ]
        curve = ev.sweep_curve(dets, anns, image_ids=["a", "b", "c"])
        # th=3: tp=1 fp=0 -> (0, 2/3); th=2: tp=1 fp=1 -> (1/3, 2/3);
        # th=1: tp=2 fp=1 -> (1/3, 1/3) collapses with previous fppi
        assert curve.fppi == (0.0, 1 / 3)
        assert curve.miss_rate == (2 / 3, 1 / 3)

    def test_zero_positives_rejected(self):
        with pytest.raises(ev.EvalError):
            ev.sweep_curve([det("a", 0, 0, 1, 1, 0.0)], [], image_ids=["a"])

    def test_matches_brute_force_oracle(self):
        for seed in range(50):
            rng = np.random.default_rng(seed + 500)
            dets, anns, ids = random_instance(rng)
            if not any(not a.ignore for a in anns):
                anns.append(ann("im0", 0, 0, 10, 20))
            curve = ev.sweep_curve(dets, anns, 0.5, image_ids=ids)
            pts = curve_oracle(dets, anns, 0.5, ids)
            assert len(pts) == len(curve.fppi)
            for (of, om), f, m in zip(pts, curve.fppi, curve.miss_rate):
                assert f == pytest.approx(of, abs=1e-9)
                assert m == pytest.approx(om, abs=1e-9)
            assert ev.log_avg_miss_rate(curve) == pytest.approx(mr_oracle(pts), abs=1e-9)

    def test_monotone_under_threshold(self):
        rng = np.random.default_rng(4242)
        dets, anns, ids = random_instance(rng, n_images=4, max_dets=6)
        anns.append(ann("im0", 0, 0, 10, 20))
        curve = ev.sweep_curve(dets, anns, 0.5, image_ids=ids)
        assert all(b > a for a, b in zip(curve.fppi, curve.fppi[1:]))
        assert all(b <= a for a, b in zip(curve.miss_rate, curve.miss_rate[1:]))


class TestLogAvgMissRate:
    def test_constant_half(self):
        curve = ev.EvalCurve((0.001, 10.0), (0.5, 0.5), 10, 10)
        assert ev.log_avg_miss_rate(curve) == pytest.approx(0.5, abs=1e-15)

    def test_geometric_sequence_gives_tenth(self):
        refs = ev.MR_REF_FPPI
        curve = ev.EvalCurve(tuple(refs), tuple(reversed(refs)), 10, 10)
        # miss rates are the 9 reference values themselves (descending);
        # geometric mean = 10^(-1)
        assert ev.log_avg_miss_rate(curve) == pytest.approx(0.1, abs=1e-12)

    def test_all_misses(self):
        curve = ev.EvalCurve((0.0,), (1.0,), 5, 5)
        assert ev.log_avg_miss_rate(curve) == 1.0

    def test_clamp_floor(self):
        curve = ev.EvalCurve((0.001, 5.0), (0.8, 0.0), 5, 5)
        assert ev.log_avg_miss_rate(curve) >= 1e-5

    def test_range(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(1, 6))
            fppi = tuple(sorted(rng.uniform(0, 3, n)))
            if len(set(fppi)) != n:
                continue
            miss = tuple(sorted(rng.uniform(0, 1, n), reverse=True))
            mr = ev.log_avg_miss_rate(ev.EvalCurve(fppi, miss, 5, 5))
            assert 1e-5 <= mr <= 1.0


class TestPrAuc:
    def test_perfect_detector(self):
        anns = [ann("a", 0, 0, 10, 20)]
        dets = [det("a", 0, 0, 10, 20, 1.0)]
        assert ev.pr_auc(dets, anns) == pytest.approx(1.0)

    def test_zero_true_positives(self):
        anns = [ann("a", 0, 0, 10, 20)]
        dets = [det("a", 50, 50, 10, 20, 1.0)]
        assert ev.pr_auc(dets, anns) == 0.0

    def test_hand_integrated_four_detections(self):
        # scores 4 (TP), 3 (FP), 2 (TP), 1 (FP); 2 positives
        anns = [ann("a", 0, 0, 10, 20), ann("a", 100, 100, 10, 20)]
        dets = [
            det("a", 0, 0, 10, 20, 4.0),
            det("a", 50, 50, 10, 20, 3.0),
            det("a", 100, 100, 10, 20, 2.0),
            det("a", 200, 200, 10, 20, 1.0),
        ]
        # (r,p): (0,1) (0.5,1) (0.5,0.5) (1,2/3) (1,0.5)
        expected = 0.5 * (1 + 1) / 2 + 0.0 + 0.5 * (0.5 + 2 / 3) / 2 + 0.0
        assert ev.pr_auc(dets, anns) == pytest.approx(expected, abs=1e-12)

    def test_dominance_consistency(self):
        # detector B = A plus one extra TP: AUC must not drop, MR must not rise
        anns = [ann("a", 0, 0, 10, 20), ann("b", 0, 0, 10, 20)]
        dets_a = [det("a", 0, 0, 10, 20, 2.0)]
        dets_b = dets_a + [det("b", 0, 0, 10, 20, 1.0)]
        assert ev.pr_auc(dets_b, anns) >= ev.pr_auc(dets_a, anns)
        ids = ["a", "b"]
        mr_a = ev.log_avg_miss_rate(ev.sweep_curve(dets_a, anns, image_ids=ids))
        mr_b = ev.log_avg_miss_rate(ev.sweep_curve(dets_b, anns, image_ids=ids))
        assert mr_b <= mr_a


class TestProperties:
    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_adding_fp_never_lowers_miss_rate(self, seed):
        rng = np.random.default_rng(seed)
        dets, anns, ids = random_instance(rng)
        anns = [a for a in anns if not a.ignore]
        if not anns:
            anns = [ann("im0", 0, 0, 10, 20)]
        pure_fp = det("im1", 900.0, 900.0, 5, 5, float(rng.uniform(-2, 2)))
        base = ev.sweep_curve(dets, anns, image_ids=ids)
        more = ev.sweep_curve(dets + [pure_fp], anns, image_ids=ids)

        def miss_at(curve, th_fppi):
            best = curve.miss_rate[0]
            for f, m in zip(curve.fppi, curve.miss_rate):
                if f <= th_fppi:
                    best = m
            return best

        for ref in (0.01, 0.1, 1.0, 10.0):
            assert miss_at(more, ref) >= miss_at(base, ref) - 1e-12
        assert ev.log_avg_miss_rate(more) >= ev.log_avg_miss_rate(base) - 1e-12


def test_eval_on_train_memorized(tiny_model, tiny_dataset):
    from conftest import TINY_PYRAMID

    model, _, _ = tiny_model
    mr = ev.eval_on_train(model, tiny_dataset.train_index, TINY_PYRAMID)
    # 24 trees memorize 6 training images nearly perfectly
    assert mr <= 0.2


def test_eval_on_train_empty_forest(tiny_model, tiny_dataset):
    import dataclasses

    from conftest import TINY_PYRAMID

    model, _, _ = tiny_model
    empty = dataclasses.replace(model, trees=())
    mr = ev.eval_on_train(empty, tiny_dataset.train_index, TINY_PYRAMID)
    assert mr == 1.0
