import json

import numpy as np
import pytest

from pangrade.errors import DimensionMismatchError, EmptyDatasetError
from pangrade.formats import canonical_json
from pangrade.masks import BinaryMask
from pangrade.metrics import (
    DEFAULT_AP_THRESHOLDS,
    EvaluationReport,
    MetricConfig,
    average_precision,
    average_recall,
    evaluate_dataset,
    evaluate_image,
    match_greedy_by_iou,
    panoptic_quality,
    semantic_iou,
)
from pangrade.panoptic import PanopticMap, SegmentInfo
from pangrade.taxonomy import banana_taxonomy

from oracles import brute_force_evaluate
from support import map_from_raster, perturbed_copy, random_panoptic_map

TAX = banana_taxonomy("single")
TAX4 = banana_taxonomy("four")


def instance(sid, pixels, category=4, score=None):
    mask = BinaryMask(np.asarray(pixels, dtype=bool))
    return (mask, SegmentInfo(sid, category, mask.area, score))


def rect_instance(sid, size, x0, y0, x1, y1, score=None):
    pixels = np.zeros((size, size), dtype=bool)
    pixels[y0:y1, x0:x1] = True
    return instance(sid, pixels, score=score)


class TestSemanticIou:
    def test_identity(self):
        pmap = map_from_raster([[1, 2], [0, 2]], {1: 2, 2: 4})
        per_cat, miou = semantic_iou(pmap, pmap, TAX)
        assert per_cat == {2: 1.0, 4: 1.0}
        assert miou == 1.0

    def test_half_fruit_half_defect(self):
        size = 8
        gt = np.zeros((size, size), dtype=np.int64)
        gt[: size // 2] = 1  # fruit
        gt[size // 2 :] = 2  # defect
        gt_map = map_from_raster(gt, {1: 2, 2: 4})
        pred_map = map_from_raster(np.ones_like(gt), {1: 2})
        per_cat, _ = semantic_iou(pred_map, gt_map, TAX)
        assert per_cat[2] == 0.5
        assert per_cat[4] == 0.0

    def test_void_pixels_excluded(self):
        rng = np.random.default_rng(1)
        size = 16
        gt = np.zeros((size, size), dtype=np.int64)
        gt[size // 2 :, : size // 2] = 1
        gt[size // 2 :, size // 2 :] = 2
        pred = rng.integers(0, 3, size=(size, size))
        gt_map = map_from_raster(gt, {1: 2, 2: 4})

        def build_pred(raster):
            present = {int(i) for i in np.unique(raster) if i != 0}
            return map_from_raster(raster, {k: v for k, v in {1: 2, 2: 4}.items() if k in present})

        full = semantic_iou(build_pred(pred), gt_map, TAX)
        crop = semantic_iou(
            build_pred(pred[size // 2 :]),
            map_from_raster(gt[size // 2 :], {1: 2, 2: 4}),
            TAX,
        )
        # categories defined on the valid half agree; the crop has no void
        for cid, value in crop[0].items():
            assert full[0][cid] == pytest.approx(value, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            semantic_iou(PanopticMap.empty(2, 2), PanopticMap.empty(3, 3), TAX)


def test_oversized_segment_ids_rejected():
    from pangrade.errors import ValidationError

    big = 1 << 26
    pmap = map_from_raster([[big, 0]], {big: 4})
    with pytest.raises(ValidationError):
        panoptic_quality(pmap, pmap, TAX)


class TestGreedyMatching:
    def test_nothing_reaches_min_iou(self):
        a = [rect_instance(1, 8, 0, 0, 2, 2)]
        b = [rect_instance(1, 8, 5, 5, 8, 8)]
        result = match_greedy_by_iou(a, b, 0.5)
        assert result.matches == []
        assert len(result.unmatched_gts) == 1
        assert len(result.unmatched_preds) == 1

    def test_identical_singletons(self):
        inst = rect_instance(1, 8, 1, 1, 4, 4)
        result = match_greedy_by_iou([inst], [inst], 0.5)
        assert len(result.matches) == 1
        assert result.matches[0][2] == 1.0

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_unique_above_half(self, seed):
        # disjoint masks per side, min_iou > 0.5: greedy must equal the
        # unique matching (each gt overlaps at most one pred above 0.5)
        rng = np.random.default_rng(seed)
        gt_map = random_panoptic_map(rng, TAX, size=32, max_things=4)
        pred_map = perturbed_copy(rng, gt_map, TAX, with_scores=False)
        gts = [(gt_map.mask_of(s), gt_map.segment(s)) for s in gt_map.segment_ids]
        preds = [(pred_map.mask_of(s), pred_map.segment(s)) for s in pred_map.segment_ids]
        result = match_greedy_by_iou(preds, gts, 0.51)
        from pangrade.masks import iou as mask_iou

        expected = set()
        for gmask, ginfo in gts:
            for pmask, pinfo in preds:
                if mask_iou(gmask, pmask) >= 0.51:
                    expected.add((ginfo.segment_id, pinfo.segment_id))
        got = {(g[1].segment_id, p[1].segment_id) for g, p, _ in result.matches}
        assert got == expected


class TestAveragePrecision:
    def test_perfect_predictions(self):
        insts = [rect_instance(1, 16, 0, 0, 4, 4, score=0.3), rect_instance(2, 16, 8, 8, 12, 12, score=0.9)]
        for t in DEFAULT_AP_THRESHOLDS:
            assert average_precision(insts, insts, t) == 1.0

    def test_iou_point_six(self):
        # one gt, one pred with IoU exactly 0.6: 3x5 vs 5x5 overlap
        gt = [rect_instance(1, 16, 0, 0, 5, 5)]
        pred = [rect_instance(1, 16, 0, 0, 5, 3)]
        from pangrade.masks import iou as mask_iou

        assert mask_iou(pred[0][0], gt[0][0]) == pytest.approx(0.6, abs=1e-12)
        assert average_precision(pred, gt, 0.50) == 1.0
        assert average_precision(pred, gt, 0.75) == 0.0
        ap_values = [average_precision(pred, gt, t) for t in DEFAULT_AP_THRESHOLDS]
        assert sum(ap_values) / len(ap_values) == pytest.approx(0.3, abs=1e-12)
        assert average_recall(pred, gt) == pytest.approx(0.3, abs=1e-12)

    def test_no_predictions(self):
        gt = [rect_instance(1, 8, 0, 0, 4, 4)]
        assert average_precision([], gt, 0.5) == 0.0
        assert average_recall([], gt) == 0.0

    def test_score_ranking_matters(self):
        # high-scoring FP before the TP drags interpolated precision down
        gt = [rect_instance(1, 16, 0, 0, 4, 4)]
        good = rect_instance(1, 16, 0, 0, 4, 4, score=0.9)
        bad = rect_instance(2, 16, 10, 10, 14, 14, score=0.95)
        ap_clean = average_precision([good], gt, 0.5)
        ap_fp_first = average_precision([good, bad], gt, 0.5)
        assert ap_clean == 1.0
        assert ap_fp_first == pytest.approx(0.5, abs=1e-12)


class TestPanopticQuality:
    def test_identity(self):
        rng = np.random.default_rng(2)
        pmap = random_panoptic_map(rng, TAX, size=24, max_things=3)
        per_cat, overall = panoptic_quality(pmap, pmap, TAX)
        for row in per_cat.values():
            assert row["pq"] == 1.0 and row["sq"] == 1.0 and row["rq"] == 1.0
        assert overall == 1.0

    def test_matched_a_missed_b(self):
        raster = np.zeros((8, 8), dtype=np.int64)
        raster[0:2, 0:2] = 1  # defect A
        raster[4:6, 4:6] = 2  # defect B, equal area
        gt = map_from_raster(raster, {1: 4, 2: 4})
        pred_raster = np.zeros_like(raster)
        pred_raster[0:2, 0:2] = 7
        pred = map_from_raster(pred_raster, {7: 4})
        per_cat, overall = panoptic_quality(pred, gt, TAX)
        assert per_cat[4]["pq"] == pytest.approx(2 / 3, abs=1e-12)
        assert per_cat[4]["tp"] == 1 and per_cat[4]["fn"] == 1 and per_cat[4]["fp"] == 0

    def test_empty_prediction(self):
        raster = np.zeros((8, 8), dtype=np.int64)
        raster[0:4, 0:4] = 1
        gt = map_from_raster(raster, {1: 4})
        per_cat, overall = panoptic_quality(PanopticMap.empty(8, 8), gt, TAX)
        assert per_cat[4]["pq"] == 0.0
        assert overall == 0.0

    def test_mostly_void_prediction_not_fp(self):
        gt_raster = np.zeros((8, 8), dtype=np.int64)
        gt_raster[0, 0] = 1
        gt = map_from_raster(gt_raster, {1: 4})
        # pred segment: 1 px on the gt defect, 7 px on gt void
        pred_raster = np.zeros_like(gt_raster)
        pred_raster[0, 0:8] = 2
        pred = map_from_raster(pred_raster, {2: 4})
        per_cat, _ = panoptic_quality(pred, gt, TAX)
        # void-excluded IoU is 1/1 > 0.5: matched as TP
        assert per_cat[4]["tp"] == 1 and per_cat[4]["fp"] == 0

    @pytest.mark.parametrize("seed", range(15))
    def test_pq_equals_sq_times_rq(self, seed):
        rng = np.random.default_rng(seed)
        gt = random_panoptic_map(rng, TAX, size=32, max_things=4)
        pred = perturbed_copy(rng, gt, TAX)
        per_cat, _ = panoptic_quality(pred, gt, TAX)
        for row in per_cat.values():
            if row["tp"] > 0:
                assert abs(row["pq"] - row["sq"] * row["rq"]) <= 1e-12


class TestEvaluateImage:
    def test_identity_all_ones(self):
        rng = np.random.default_rng(3)
        pmap = random_panoptic_map(rng, TAX, size=32, max_things=3, with_scores=True)
        report = evaluate_image(pmap, pmap, TAX)
        assert report.miou == 1.0
        assert report.pq == 1.0
        for m in report.per_category.values():
            for name in ("iou", "pq", "sq", "rq"):
                assert getattr(m, name) == 1.0
            if m.ap is not None:
                assert m.ap == m.ap50 == m.ap75 == m.ar == 1.0

    def test_absent_category_omitted(self):
        pmap = map_from_raster([[1, 0]], {1: 2})
        report = evaluate_image(pmap, pmap, TAX)
        assert 4 not in report.per_category
        assert 3 not in report.per_category

    def test_single_threshold_ap_equals_ap50(self):
        rng = np.random.default_rng(4)
        gt = random_panoptic_map(rng, TAX, size=32, max_things=4)
        pred = perturbed_copy(rng, gt, TAX)
        full = evaluate_image(pred, gt, TAX)
        single = evaluate_image(pred, gt, TAX, MetricConfig(ap_thresholds=(0.50,)))
        for cid, m in full.per_category.items():
            if m.ap50 is not None:
                assert single.per_category[cid].ap == pytest.approx(m.ap50, abs=1e-12)

    def test_removing_tp_never_raises_recall(self):
        rng = np.random.default_rng(5)
        gt = random_panoptic_map(rng, TAX, size=32, max_things=4)
        pred = perturbed_copy(rng, gt, TAX)
        preds = [(pred.mask_of(s), pred.segment(s)) for s in pred.segment_ids
                 if pred.segment(s).category_id == 4]
        gts = [(gt.mask_of(s), gt.segment(s)) for s in gt.segment_ids
               if gt.segment(s).category_id == 4]
        if not preds or not gts:
            pytest.skip("seed produced no defect instances")
        for drop in range(len(preds)):
            remaining = preds[:drop] + preds[drop + 1 :]
            for t in DEFAULT_AP_THRESHOLDS:
                cfg = MetricConfig(ap_thresholds=(t,))
                assert average_recall(remaining, gts, cfg) <= average_recall(preds, gts, cfg) + 1e-12

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(100 + seed)
        gt = random_panoptic_map(rng, TAX, size=24, max_things=4, with_scores=False)
        pred = perturbed_copy(rng, gt, TAX, with_scores=True)
        report = evaluate_image(pred, gt, TAX)
        want = brute_force_evaluate([("", pred, gt)], TAX, DEFAULT_AP_THRESHOLDS)
        assert set(report.per_category) == set(want["per_category"])
        for cid, row in want["per_category"].items():
            m = report.per_category[cid]
            for name in ("iou", "ap", "ap50", "ap75", "ar", "pq", "sq", "rq"):
                got_v = getattr(m, name)
                want_v = row.get(name)
                if want_v is None:
                    assert got_v is None, (cid, name)
                else:
                    assert got_v == pytest.approx(want_v, abs=1e-9), (cid, name)
            assert (m.tp, m.fp, m.fn) == (row["tp"], row["fp"], row["fn"])
        if want["miou"] is None:
            assert report.miou is None
        else:
            assert report.miou == pytest.approx(want["miou"], abs=1e-9)
        if want["pq"] is None:
            assert report.pq is None
        else:
            assert report.pq == pytest.approx(want["pq"], abs=1e-9)


class TestEvaluateDataset:
    def make_pairs(self, n, seed=0):
        rng = np.random.default_rng(seed)
        pairs = []
        for i in range(n):
            gt = random_panoptic_map(rng, TAX, size=24, max_things=3)
            pred = perturbed_copy(rng, gt, TAX)
            pairs.append((f"img_{i:03d}", pred, gt))
        return pairs

    def test_single_image_equals_evaluate_image(self):
        ((image_id, pred, gt),) = self.make_pairs(1, seed=7)
        via_dataset = evaluate_dataset([(image_id, pred, gt)], TAX)
        via_image = evaluate_image(pred, gt, TAX)
        a = via_dataset.to_json_obj()
        b = via_image.to_json_obj()
        assert a == b

    def test_duplicated_image_identical_metrics(self):
        ((image_id, pred, gt),) = self.make_pairs(1, seed=8)
        single = evaluate_dataset([(image_id, pred, gt)], TAX)
        double = evaluate_dataset([(image_id, pred, gt), (image_id, pred, gt)], TAX)
        for cid, m in single.per_category.items():
            d = double.per_category[cid]
            for name in ("iou", "ap", "ap50", "ap75", "ar", "pq", "sq", "rq"):
                sv, dv = getattr(m, name), getattr(d, name)
                if sv is None:
                    assert dv is None
                else:
                    assert dv == pytest.approx(sv, abs=1e-12), (cid, name)

    def test_order_invariant_bytes(self):
        pairs = self.make_pairs(5, seed=9)
        fwd = evaluate_dataset(pairs, TAX)
        rev = evaluate_dataset(list(reversed(pairs)), TAX)
        assert canonical_json(fwd.to_json_obj()) == canonical_json(rev.to_json_obj())

    def test_empty_dataset(self):
        with pytest.raises(EmptyDatasetError):
            evaluate_dataset([], TAX)

    def test_matches_brute_force_accumulated(self):
        pairs = self.make_pairs(4, seed=11)
        report = evaluate_dataset(pairs, TAX)
        want = brute_force_evaluate(pairs, TAX, DEFAULT_AP_THRESHOLDS)
        for cid, row in want["per_category"].items():
            m = report.per_category[cid]
            for name in ("iou", "ap", "ar", "pq"):
                if row.get(name) is not None:
                    assert getattr(m, name) == pytest.approx(row[name], abs=1e-9), (cid, name)

    def test_report_json_round_trip(self):
        pairs = self.make_pairs(2, seed=13)
        report = evaluate_dataset(pairs, TAX)
        obj = json.loads(canonical_json(report.to_json_obj()))
        back = EvaluationReport.from_json_obj(obj)
        assert back.to_json_obj() == report.to_json_obj()

    def test_four_category_taxonomy(self):
        rng = np.random.default_rng(14)
        gt = random_panoptic_map(rng, TAX4, size=32, max_things=5)
        pred = perturbed_copy(rng, gt, TAX4)
        report = evaluate_image(pred, gt, TAX4)
        want = brute_force_evaluate([("", pred, gt)], TAX4, DEFAULT_AP_THRESHOLDS)
        for cid, row in want["per_category"].items():
            m = report.per_category[cid]
            if "ap" in row:
                assert m.ap == pytest.approx(row["ap"], abs=1e-9)
            if "pq" in row:
                assert m.pq == pytest.approx(row["pq"], abs=1e-9)
