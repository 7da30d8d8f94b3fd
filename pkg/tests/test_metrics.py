import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parlorvision.errors import ContractViolation, InputError
from parlorvision.metrics import (
    DEFAULT_IOU_THRESHOLDS,
    EvalConfig,
    average_precision,
    evaluate,
    iou,
    match_detections,
)
from parlorvision.types import BBox, Detection, GtAnnotation

from oracles import oracle_evaluate
from support import instance_to_package, make_instance


def box(x, y, w, h):
    return BBox(float(x), float(y), float(w), float(h))


finite_boxes = st.builds(
    box,
    st.integers(0, 500),
    st.integers(0, 500),
    st.integers(0, 200),
    st.integers(0, 200),
)


class TestIou:
    def test_identical_boxes(self):
        b = box(0, 0, 10, 10)
        assert iou(b, b) == 1.0

    def test_disjoint_boxes(self):
        assert iou(box(0, 0, 10, 10), box(20, 20, 5, 5)) == 0.0

    def test_half_overlap(self):
        # overlap 50, union 150
        assert iou(box(0, 0, 10, 10), box(5, 0, 10, 10)) == pytest.approx(1 / 3, abs=1e-12)

    def test_degenerate_box_never_overlaps(self):
        assert iou(box(0, 0, 0, 10), box(0, 0, 10, 10)) == 0.0
        assert iou(box(3, 3, 0, 0), box(3, 3, 0, 0)) == 0.0

    @given(finite_boxes, finite_boxes)
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0

    @given(finite_boxes)
    def test_self_iou_is_one_for_nondegenerate(self, b):
        if b.w > 0 and b.h > 0:
            assert iou(b, b) == 1.0

    @given(finite_boxes, finite_boxes, st.integers(-300, 300), st.integers(-300, 300))
    def test_translation_invariance(self, a, b, dx, dy):
        shifted_a = box(a.x + dx, a.y + dy, a.w, a.h)
        shifted_b = box(b.x + dx, b.y + dy, b.w, b.h)
        assert iou(shifted_a, shifted_b) == pytest.approx(iou(a, b), abs=1e-12)

    @given(finite_boxes, finite_boxes, st.sampled_from([0.5, 2.0, 3.0, 8.0]))
    def test_scale_invariance(self, a, b, s):
        scaled_a = box(a.x * s, a.y * s, a.w * s, a.h * s)
        scaled_b = box(b.x * s, b.y * s, b.w * s, b.h * s)
        assert iou(scaled_a, scaled_b) == pytest.approx(iou(a, b), abs=1e-9)


def det(score, bbox, image_id=0, class_id=1):
    return Detection(image_id=image_id, class_id=class_id, bbox=bbox, score=score)


def gt(gt_id, bbox, image_id=0, class_id=1):
    return GtAnnotation(id=gt_id, image_id=image_id, class_id=class_id, bbox=bbox)


class TestMatchDetections:
    def test_single_candidate_above_threshold(self):
        # IoU((0,0,10,10), (1,0,10,10)) = 9/11 ~ 0.82
        dets = [det(0.9, box(0, 0, 10, 10))]
        gts = [gt(0, box(1, 0, 10, 10))]
        assert match_detections(dets, gts, 0.5) == [(0, 0)]

    def test_below_threshold_is_unmatched(self):
        # IoU((0,0,10,10), (6,0,10,10)) = 40/160 = 0.25
        dets = [det(0.9, box(0, 0, 10, 10))]
        gts = [gt(0, box(6, 0, 10, 10))]
        assert match_detections(dets, gts, 0.5) == []

    def test_higher_score_wins_single_gt(self):
        # hand enumeration: assignments {d0->g0}, {d1->g0}; greedy takes d0 first
        dets = [det(0.9, box(0, 0, 10, 10)), det(0.8, box(1, 1, 10, 10))]
        gts = [gt(7, box(0, 0, 10, 10))]
        assert match_detections(dets, gts, 0.5) == [(0, 7)]

    def test_score_tie_broken_by_index(self):
        dets = [det(0.8, box(1, 1, 10, 10)), det(0.8, box(0, 0, 10, 10))]
        gts = [gt(3, box(0, 0, 10, 10))]
        assert match_detections(dets, gts, 0.5) == [(0, 3)]

    def test_gt_tie_broken_by_ascending_id(self):
        dets = [det(0.9, box(0, 0, 10, 10))]
        gts = [gt(5, box(0, 0, 10, 10)), gt(2, box(0, 0, 10, 10))]
        assert match_detections(dets, gts, 0.5) == [(0, 2)]

    def test_each_gt_matched_at_most_once(self):
        dets = [det(0.9, box(0, 0, 10, 10)), det(0.8, box(0, 0, 10, 10))]
        gts = [gt(0, box(0, 0, 10, 10))]
        assert match_detections(dets, gts, 0.5) == [(0, 0)]

    def test_mixed_image_id_rejected(self):
        dets = [det(0.9, box(0, 0, 10, 10), image_id=0)]
        gts = [gt(0, box(0, 0, 10, 10), image_id=1)]
        with pytest.raises(ContractViolation):
            match_detections(dets, gts, 0.5)

    def test_mixed_class_id_rejected(self):
        dets = [det(0.9, box(0, 0, 10, 10), class_id=1)]
        gts = [gt(0, box(0, 0, 10, 10), class_id=2)]
        with pytest.raises(ContractViolation):
            match_detections(dets, gts, 0.5)


class TestAveragePrecision:
    def test_perfect_single_detection(self):
        assert average_precision([True], total_gt=1) == 1.0

    def test_total_miss(self):
        assert average_precision([], total_gt=1) == 0.0

    def test_tp_then_fp_over_two_gt(self):
        # PR points: (0.5, 1.0) then (0.5, 0.5); grid levels 0.00..0.50 keep
        # precision 1.0 (51 of 101 levels), the rest contribute 0.
        assert average_precision([True, False], total_gt=2) == 51 / 101
        assert average_precision([True, False], total_gt=2) == pytest.approx(0.50495, abs=1e-5)

    def test_no_gt_is_undefined(self):
        assert average_precision([False, False], total_gt=0) is None

    def test_negative_gt_rejected(self):
        with pytest.raises(ContractViolation):
            average_precision([], total_gt=-1)


class TestEvalConfig:
    def test_defaults(self):
        cfg = EvalConfig()
        assert cfg.iou_thresholds == DEFAULT_IOU_THRESHOLDS
        assert cfg.iou_thresholds[0] == 0.5
        assert cfg.iou_thresholds[-1] == 0.95
        assert len(cfg.iou_thresholds) == 10
        assert cfg.recall_points == 101
        assert cfg.small_area_max == 1024

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"iou_thresholds": (0.5, 0.5)},
            {"iou_thresholds": (0.9, 0.5)},
            {"iou_thresholds": (0.0, 0.5)},
            {"iou_thresholds": (0.5, 1.2)},
            {"iou_thresholds": ()},
            {"recall_points": 1},
            {"small_area_max": 0},
        ],
    )
    def test_invalid_config_rejected(self, kwargs):
        with pytest.raises(ValueError):
            EvalConfig(**kwargs)


def perfect_instance(area_side):
    gts = []
    dets = []
    images = {0: (200, 200)}
    for k in range(4):
        b = box(5 + 45 * k, 10, area_side, area_side)
        gts.append(gt(k, b))
        dets.append(det(1.0, b))
    return gts, dets, images


class TestEvaluate:
    def test_perfect_small_object_detector(self):
        gts, dets, images = perfect_instance(30)  # area 900 < 1024
        result = evaluate(gts, dets, images)
        assert result.map_small == 1.0
        assert result.map_all == 1.0

    def test_nothing_in_small_band(self):
        # area ~2000 px^2: sqrt(2000) is not integral, use 50x40
        gts = []
        dets = []
        images = {0: (400, 400)}
        for k in range(4):
            b = box(5 + 60 * k, 10, 50, 40)
            gts.append(gt(k, b))
            dets.append(det(1.0, b))
        result = evaluate(gts, dets, images)
        assert result.map_small is None
        assert result.map_all == 1.0

    def test_empty_inputs_all_undefined(self):
        result = evaluate([], [], {0: (100, 100)})
        assert result.ap == {}
        assert result.map_all is None
        assert result.map_small is None

    def test_unknown_image_id_rejected(self):
        with pytest.raises(InputError):
            evaluate([gt(0, box(0, 0, 5, 5), image_id=9)], [], {0: (100, 100)})
        with pytest.raises(InputError):
            evaluate([], [det(0.5, box(0, 0, 5, 5), image_id=9)], {0: (100, 100)})

    def test_explicit_class_ids_add_undefined_cells(self):
        gts, dets, images = perfect_instance(30)
        result = evaluate(gts, dets, images, class_ids=[1, 2])
        assert result.class_ids == (1, 2)
        assert all(result.ap[(2, t, b)] is None
                   for t in DEFAULT_IOU_THRESHOLDS for b in ("all", "small"))
        assert result.map_all == 1.0

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(1234)
        for _ in range(40):
            instance = make_instance(rng)
            gts, dets, images = instance_to_package(instance)
            cfg = EvalConfig()
            result = evaluate(gts, dets, images, cfg)
            cells, map_all, map_small = oracle_evaluate(
                instance["gts"], instance["dets"], images,
                cfg.iou_thresholds, cfg.recall_points, cfg.small_area_max)
            assert set(result.ap) == set(cells)
            for key, expected in cells.items():
                got = result.ap[key]
                if expected is None:
                    assert got is None, key
                else:
                    assert got == pytest.approx(expected, abs=1e-9), key
            if map_all is None:
                assert result.map_all is None
            else:
                assert result.map_all == pytest.approx(map_all, abs=1e-9)
            if map_small is None:
                assert result.map_small is None
            else:
                assert result.map_small == pytest.approx(map_small, abs=1e-9)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(77)
        for _ in range(10):
            instance = make_instance(rng)
            gts, dets, images = instance_to_package(instance)
            base = evaluate(gts, dets, images)
            perm_gts = list(gts)
            perm_dets = list(dets)
            rng.shuffle(perm_gts)
            rng.shuffle(perm_dets)
            shuffled = evaluate(perm_gts, perm_dets, images)
            assert shuffled.ap == base.ap

    def test_trailing_false_positive_never_raises_ap(self):
        rng = np.random.default_rng(99)
        for _ in range(10):
            instance = make_instance(rng)
            gts, dets, images = instance_to_package(instance)
            if not dets:
                continue
            lowest = min(d.score for d in dets)
            extra = Detection(image_id=next(iter(images)), class_id=instance["classes"][0],
                              bbox=box(0, 0, 3, 3), score=max(0.0, lowest / 2))
            base = evaluate(gts, dets, images)
            bumped = evaluate(gts, dets + [extra], images)
            for key, value in base.ap.items():
                if value is None:
                    assert bumped.ap[key] is None
                else:
                    assert bumped.ap[key] <= value + 1e-12, key

    def test_removing_untouched_gt_never_lowers_ap(self):
        rng = np.random.default_rng(555)
        for _ in range(20):
            instance = make_instance(rng)
            gts, dets, images = instance_to_package(instance)
            victim = None
            for g in gts:
                if all(iou(g.bbox, d.bbox) == 0.0 for d in dets):
                    victim = g
                    break
            if victim is None:
                continue
            base = evaluate(gts, dets, images)
            slimmed = evaluate([g for g in gts if g is not victim], dets, images)
            for key, after in slimmed.ap.items():
                before = base.ap.get(key)
                if before is None or after is None:
                    continue
                assert after >= before - 1e-12, key
