"""Semantic, instance, and panoptic evaluation of predicted maps.

Conventions, fixed here because the cited benchmarks leave room:

* Semantic IoU excludes ground-truth void (id-0) pixels from both sets.
  Prediction void projects onto the void-role category, i.e. abstention
  counts as predicting scene background.
* Instance AP/AR use plain mask IoU. Predictions are ranked by
  (score desc, area desc, image_id asc, segment id asc); a missing score
  ranks as 1.0. Each prediction greedily takes the highest-IoU unmatched
  ground truth with IoU >= t (ties: lower gt id). AP interpolates
  precision at recall levels i/(points-1); AR is the mean final recall
  over the AP thresholds.
* PQ matches pairs with void-excluded IoU strictly > 0.5 (the matching
  is then unique); unmatched predictions with more than half their area
  on ground-truth void are not counted as false positives. Categories
  enter the PQ mean only when tp+fp+fn > 0.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatchError, EmptyDatasetError, ValidationError
from .masks import BinaryMask, iou as mask_iou
from .panoptic import PanopticMap, SegmentInfo, to_semantic
from .taxonomy import KIND_THING, CategoryTaxonomy

DEFAULT_AP_THRESHOLDS = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)

Instance = tuple[BinaryMask, SegmentInfo]


@dataclass(frozen=True)
class MetricConfig:
    ap_thresholds: tuple[float, ...] = DEFAULT_AP_THRESHOLDS
    pq_match_threshold: float = 0.5
    recall_curve_points: int = 101

    def __post_init__(self):
        ts = tuple(self.ap_thresholds)
        if not ts or any(not 0.0 < t <= 1.0 for t in ts):
            raise ValidationError("AP thresholds must lie in (0, 1]")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError("AP thresholds must be strictly increasing")
        if self.recall_curve_points < 2:
            raise ValidationError("recall curve needs at least 2 points")
        object.__setattr__(self, "ap_thresholds", ts)


@dataclass(frozen=True)
class CategoryMetrics:
    iou: float | None = None
    ap: float | None = None
    ap50: float | None = None
    ap75: float | None = None
    ar: float | None = None
    pq: float | None = None
    sq: float | None = None
    rq: float | None = None
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True)
class EvaluationReport:
    per_category: dict[int, CategoryMetrics]
    miou: float | None
    pq: float | None
    image_count: int

    def __post_init__(self):
        for cid, m in self.per_category.items():
            if m.pq is not None and m.tp > 0:
                if abs(m.pq - m.sq * m.rq) > 1e-12:
                    raise ValidationError(f"category {cid}: pq != sq*rq")
            for name in ("iou", "ap", "ap50", "ap75", "ar", "pq", "sq", "rq"):
                v = getattr(m, name)
                if v is not None and not -1e-12 <= v <= 1 + 1e-12:
                    raise ValidationError(f"category {cid}: {name}={v} outside [0, 1]")

    def to_json_obj(self) -> dict:
        per_cat = {}
        for cid, m in self.per_category.items():
            row: dict = {"tp": m.tp, "fp": m.fp, "fn": m.fn}
            for name in ("iou", "ap", "ap50", "ap75", "ar", "pq", "sq", "rq"):
                v = getattr(m, name)
                if v is not None:
                    row[name] = v
            per_cat[str(cid)] = row
        overall: dict = {}
        if self.miou is not None:
            overall["miou"] = self.miou
        if self.pq is not None:
            overall["pq"] = self.pq
        return {"image_count": self.image_count, "overall": overall, "per_category": per_cat}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "EvaluationReport":
        per_cat = {}
        for cid, row in obj["per_category"].items():
            per_cat[int(cid)] = CategoryMetrics(
                iou=row.get("iou"), ap=row.get("ap"), ap50=row.get("ap50"),
                ap75=row.get("ap75"), ar=row.get("ar"), pq=row.get("pq"),
                sq=row.get("sq"), rq=row.get("rq"),
                tp=row.get("tp", 0), fp=row.get("fp", 0), fn=row.get("fn", 0),
            )
        overall = obj.get("overall", {})
        return cls(per_cat, overall.get("miou"), overall.get("pq"), obj["image_count"])


# ---------------------------------------------------------------------------
# Pairwise matching


@dataclass(frozen=True)
class MatchResult:
    matches: list[tuple[Instance, Instance, float]]  # (gt, pred, iou)
    unmatched_gts: list[Instance]
    unmatched_preds: list[Instance]


def match_greedy_by_iou(
    preds: Sequence[Instance], gts: Sequence[Instance], min_iou: float
) -> MatchResult:
    """Greedy one-to-one matching of instance lists by descending IoU.

    Candidate pairs with IoU >= min_iou are consumed best-first; ties
    break on lower gt id, then lower pred id. Category handling is the
    caller's concern: lists are normally per-category.
    """
    candidates = []
    for gi, (gmask, ginfo) in enumerate(gts):
        for pi, (pmask, pinfo) in enumerate(preds):
            value = mask_iou(pmask, gmask)
            if value >= min_iou:
                candidates.append((-value, ginfo.segment_id, pinfo.segment_id, gi, pi))
    candidates.sort()
    used_g: set[int] = set()
    used_p: set[int] = set()
    matches = []
    for neg_iou, _, _, gi, pi in candidates:
        if gi in used_g or pi in used_p:
            continue
        used_g.add(gi)
        used_p.add(pi)
        matches.append((gts[gi], preds[pi], -neg_iou))
    return MatchResult(
        matches=matches,
        unmatched_gts=[g for i, g in enumerate(gts) if i not in used_g],
        unmatched_preds=[p for i, p in enumerate(preds) if i not in used_p],
    )


# ---------------------------------------------------------------------------
# Semantic IoU


def _check_dims(pred: PanopticMap, gt: PanopticMap) -> None:
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise DimensionMismatchError(
            f"prediction is {pred.width}x{pred.height}, ground truth {gt.width}x{gt.height}"
        )


def _semantic_counts(
    pred: PanopticMap, gt: PanopticMap, taxonomy: CategoryTaxonomy
) -> dict[int, tuple[int, int]]:
    """Per-category (intersection, union) pixel counts, GT void excluded."""
    _check_dims(pred, gt)
    gt_sem = to_semantic(gt, taxonomy)
    pred_sem = to_semantic(pred, taxonomy)
    valid = gt.id_raster != 0
    counts = {}
    for cat in taxonomy.categories:
        cid = cat.category_id
        g = (gt_sem == cid) & valid
        p = (pred_sem == cid) & valid
        counts[cid] = (int((g & p).sum()), int((g | p).sum()))
    return counts


def semantic_iou(
    pred: PanopticMap, gt: PanopticMap, taxonomy: CategoryTaxonomy
) -> tuple[dict[int, float], float | None]:
    """Per-category semantic IoU plus the mean over defined categories."""
    counts = _semantic_counts(pred, gt, taxonomy)
    per_cat = {cid: i / u for cid, (i, u) in counts.items() if u > 0}
    miou = sum(per_cat.values()) / len(per_cat) if per_cat else None
    return per_cat, miou


# ---------------------------------------------------------------------------
# Panoptic quality

_OFFSET = 1 << 25


def _intersections(pred: PanopticMap, gt: PanopticMap) -> dict[tuple[int, int], int]:
    for pmap in (pred, gt):
        if pmap.segment_ids and max(pmap.segment_ids) >= _OFFSET:
            raise ValidationError(
                f"segment ids must stay below {_OFFSET} for pair counting"
            )
    keys, counts = np.unique(
        gt.id_raster * _OFFSET + pred.id_raster, return_counts=True
    )
    return {
        (int(k) // _OFFSET, int(k) % _OFFSET): int(c) for k, c in zip(keys, counts)
    }


def _pq_counts(
    pred: PanopticMap,
    gt: PanopticMap,
    taxonomy: CategoryTaxonomy,
    threshold: float,
    inter: dict[tuple[int, int], int] | None = None,
) -> dict[int, list]:
    """Per-category [tp, fp, fn, iou_sum]; matching by void-excluded IoU."""
    _check_dims(pred, gt)
    if inter is None:
        inter = _intersections(pred, gt)
    pred_void = {pid: inter.get((0, pid), 0) for pid in pred.segment_ids}
    stats: dict[int, list] = {}

    def row(cid: int) -> list:
        return stats.setdefault(cid, [0, 0, 0, 0.0])

    matched_gt: set[int] = set()
    matched_pred: set[int] = set()
    for (gid, pid), count in sorted(inter.items()):
        if gid == 0 or pid == 0:
            continue
        gseg = gt.segment(gid)
        pseg = pred.segment(pid)
        if gseg.category_id != pseg.category_id:
            continue
        union = gseg.area + pseg.area - count - pred_void[pid]
        value = count / union
        if value > threshold:
            r = row(gseg.category_id)
            r[0] += 1
            r[3] += value
            matched_gt.add(gid)
            matched_pred.add(pid)
    for gid, gseg in gt.segments.items():
        if gid not in matched_gt:
            row(gseg.category_id)[2] += 1
    for pid, pseg in pred.segments.items():
        if pid in matched_pred:
            continue
        if pred_void[pid] / pseg.area > 0.5:
            continue  # mostly on unlabeled ground truth: not a false positive
        row(pseg.category_id)[1] += 1
    return stats


def panoptic_quality(
    pred: PanopticMap, gt: PanopticMap, taxonomy: CategoryTaxonomy, threshold: float = 0.5
) -> tuple[dict[int, dict], float | None]:
    """Per-category PQ/SQ/RQ plus the overall mean."""
    for pmap in (pred, gt):
        for seg in pmap.segments.values():
            taxonomy.get(seg.category_id)
    stats = _pq_counts(pred, gt, taxonomy, threshold)
    per_cat = {}
    for cid, (tp, fp, fn, iou_sum) in sorted(stats.items()):
        if tp + fp + fn == 0:
            continue
        per_cat[cid] = _pq_row(tp, fp, fn, iou_sum)
    overall = (
        sum(r["pq"] for r in per_cat.values()) / len(per_cat) if per_cat else None
    )
    return per_cat, overall


def _pq_row(tp: int, fp: int, fn: int, iou_sum: float) -> dict:
    denom = tp + 0.5 * fp + 0.5 * fn
    return {
        "pq": iou_sum / denom,
        "sq": iou_sum / tp if tp > 0 else 0.0,
        "rq": tp / denom,
        "tp": tp,
        "fp": fp,
        "fn": fn,
    }


# ---------------------------------------------------------------------------
# Instance detection metrics (AP family)


@dataclass(frozen=True)
class _Detection:
    sort_key: tuple
    tp_flags: tuple[bool, ...]  # one flag per AP threshold


def _detection_sort_key(info: SegmentInfo, image_id: str) -> tuple:
    score = 1.0 if info.score is None else info.score
    return (-score, -info.area, image_id, info.segment_id)


def _image_detections(
    pred: PanopticMap,
    gt: PanopticMap,
    category_id: int,
    thresholds: Sequence[float],
    image_id: str,
    inter: dict[tuple[int, int], int] | None = None,
) -> tuple[int, list[_Detection]]:
    """Match one image's detections of one category at every threshold."""
    gt_segs = [s for s in gt.segments.values() if s.category_id == category_id]
    pred_segs = [s for s in pred.segments.values() if s.category_id == category_id]
    if inter is None:
        inter = _intersections(pred, gt)
    pred_segs.sort(key=lambda s: _detection_sort_key(s, image_id))

    ious = {}
    for p in pred_segs:
        for g in gt_segs:
            count = inter.get((g.segment_id, p.segment_id), 0)
            ious[(p.segment_id, g.segment_id)] = count / (g.area + p.area - count)

    detections = []
    for t_index, t in enumerate(thresholds):
        matched: set[int] = set()
        for rank, p in enumerate(pred_segs):
            best = None
            for g in sorted(gt_segs, key=lambda s: s.segment_id):
                if g.segment_id in matched:
                    continue
                value = ious[(p.segment_id, g.segment_id)]
                if value >= t and (best is None or value > best[0]):
                    best = (value, g.segment_id)
            hit = best is not None
            if hit:
                matched.add(best[1])
            if t_index == 0:
                detections.append([_detection_sort_key(p, image_id), [hit]])
            else:
                detections[rank][1].append(hit)
    return len(gt_segs), [_Detection(key, tuple(flags)) for key, flags in detections]


def _interpolated_ap(
    detections: list[_Detection], gt_count: int, t_index: int, points: int
) -> float:
    if gt_count == 0:
        return 0.0
    ordered = sorted(detections, key=lambda d: d.sort_key)
    recalls = []
    precisions = []
    tp = 0
    for rank, det in enumerate(ordered, start=1):
        if det.tp_flags[t_index]:
            tp += 1
        recalls.append(tp / gt_count)
        precisions.append(tp / rank)
    envelope = precisions[:]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    total = 0.0
    for i in range(points):
        level = i / (points - 1)
        idx = bisect_left(recalls, level)
        if idx < len(envelope):
            total += envelope[idx]
    return total / points


def _ap_family(
    detections: list[_Detection],
    gt_count: int,
    config: MetricConfig,
) -> dict[str, float]:
    """AP (mean over thresholds), AP@.50/.75 when configured, and AR."""
    values = {}
    ap_per_t = [
        _interpolated_ap(detections, gt_count, i, config.recall_curve_points)
        for i in range(len(config.ap_thresholds))
    ]
    values["ap"] = sum(ap_per_t) / len(ap_per_t)
    for name, wanted in (("ap50", 0.50), ("ap75", 0.75)):
        for i, t in enumerate(config.ap_thresholds):
            if abs(t - wanted) < 1e-9:
                values[name] = ap_per_t[i]
                break
    if gt_count == 0:
        values["ar"] = 0.0
    else:
        recalls = []
        for i in range(len(config.ap_thresholds)):
            tp = sum(1 for d in detections if d.tp_flags[i])
            recalls.append(tp / gt_count)
        values["ar"] = sum(recalls) / len(recalls)
    return values


def average_precision(
    preds: Sequence[Instance],
    gts: Sequence[Instance],
    threshold: float,
    recall_curve_points: int = 101,
) -> float:
    """Single-category AP@threshold for in-memory instance lists."""
    gt_count, detections = _instances_to_detections(preds, gts, (threshold,))
    return _interpolated_ap(detections, gt_count, 0, recall_curve_points)


def average_recall(
    preds: Sequence[Instance],
    gts: Sequence[Instance],
    config: MetricConfig = MetricConfig(),
) -> float:
    """Mean recall over the configured AP thresholds."""
    gt_count, detections = _instances_to_detections(preds, gts, config.ap_thresholds)
    if gt_count == 0:
        return 0.0
    recalls = []
    for i in range(len(config.ap_thresholds)):
        tp = sum(1 for d in detections if d.tp_flags[i])
        recalls.append(tp / gt_count)
    return sum(recalls) / len(recalls)


def _instances_to_detections(
    preds: Sequence[Instance], gts: Sequence[Instance], thresholds: Sequence[float]
) -> tuple[int, list[_Detection]]:
    ordered = sorted(preds, key=lambda inst: _detection_sort_key(inst[1], ""))
    detections = []
    for t_index, t in enumerate(thresholds):
        matched: set[int] = set()
        for rank, (pmask, pinfo) in enumerate(ordered):
            best = None
            for gmask, ginfo in sorted(gts, key=lambda inst: inst[1].segment_id):
                if ginfo.segment_id in matched:
                    continue
                value = mask_iou(pmask, gmask)
                if value >= t and (best is None or value > best[0]):
                    best = (value, ginfo.segment_id)
            hit = best is not None
            if hit:
                matched.add(best[1])
            if t_index == 0:
                detections.append([_detection_sort_key(pinfo, ""), [hit]])
            else:
                detections[rank][1].append(hit)
    return len(gts), [_Detection(key, tuple(flags)) for key, flags in detections]


# ---------------------------------------------------------------------------
# Full evaluation


class _Accumulator:
    """Merges per-image counts; finalizes curves and means once."""

    def __init__(self, taxonomy: CategoryTaxonomy, config: MetricConfig):
        self.taxonomy = taxonomy
        self.config = config
        self.image_count = 0
        self.present: set[int] = set()
        self.sem: dict[int, list[int]] = {}  # cid -> [inter, union]
        self.pq: dict[int, list] = {}  # cid -> [tp, fp, fn, iou_sum]
        self.gt_counts: dict[int, int] = {}
        self.detections: dict[int, list[_Detection]] = {}

    def add_image(self, image_id: str, pred: PanopticMap, gt: PanopticMap) -> None:
        _check_dims(pred, gt)
        for pmap in (pred, gt):
            for seg in pmap.segments.values():
                self.taxonomy.get(seg.category_id)
            pmap.validate_against(self.taxonomy)
        self.image_count += 1
        inter = _intersections(pred, gt)
        for pmap in (pred, gt):
            self.present.update(seg.category_id for seg in pmap.segments.values())
        for cid, (i, u) in _semantic_counts(pred, gt, self.taxonomy).items():
            row = self.sem.setdefault(cid, [0, 0])
            row[0] += i
            row[1] += u
        pq_counts = _pq_counts(pred, gt, self.taxonomy, self.config.pq_match_threshold, inter)
        for cid, counts in pq_counts.items():
            row = self.pq.setdefault(cid, [0, 0, 0, 0.0])
            for k in range(3):
                row[k] += counts[k]
            row[3] += counts[3]
        for cat in self.taxonomy.categories:
            if cat.kind != KIND_THING:
                continue
            gt_count, dets = _image_detections(
                pred, gt, cat.category_id, self.config.ap_thresholds, image_id, inter
            )
            self.gt_counts[cat.category_id] = self.gt_counts.get(cat.category_id, 0) + gt_count
            self.detections.setdefault(cat.category_id, []).extend(dets)

    def finalize(self) -> EvaluationReport:
        per_category = {}
        for cid in sorted(self.present):
            kwargs: dict = {}
            inter, union = self.sem.get(cid, (0, 0))
            if union > 0:
                kwargs["iou"] = inter / union
            tp, fp, fn, iou_sum = self.pq.get(cid, (0, 0, 0, 0.0))
            kwargs.update({"tp": tp, "fp": fp, "fn": fn})
            if tp + fp + fn > 0:
                row = _pq_row(tp, fp, fn, iou_sum)
                kwargs.update({"pq": row["pq"], "sq": row["sq"], "rq": row["rq"]})
            if self.taxonomy.get(cid).kind == KIND_THING:
                kwargs.update(
                    _ap_family(self.detections.get(cid, []), self.gt_counts.get(cid, 0), self.config)
                )
            per_category[cid] = CategoryMetrics(**kwargs)
        ious = [m.iou for m in per_category.values() if m.iou is not None]
        pqs = [m.pq for m in per_category.values() if m.pq is not None]
        return EvaluationReport(
            per_category=per_category,
            miou=sum(ious) / len(ious) if ious else None,
            pq=sum(pqs) / len(pqs) if pqs else None,
            image_count=self.image_count,
        )


def evaluate_image(
    pred: PanopticMap,
    gt: PanopticMap,
    taxonomy: CategoryTaxonomy,
    config: MetricConfig = MetricConfig(),
) -> EvaluationReport:
    """All metrics for one image pair."""
    acc = _Accumulator(taxonomy, config)
    acc.add_image("", pred, gt)
    return acc.finalize()


def evaluate_dataset(
    pairs: Iterable[tuple[str, PanopticMap, PanopticMap]],
    taxonomy: CategoryTaxonomy,
    config: MetricConfig = MetricConfig(),
) -> EvaluationReport:
    """Accumulate (image_id, pred, gt) triples; order-independent.

    Detections and pixel counts are pooled across images before any curve
    or ratio is computed, and accumulation runs in ascending image_id
    order so outputs are byte-stable.
    """
    items = sorted(pairs, key=lambda item: item[0])
    if not items:
        raise EmptyDatasetError("no image pairs to evaluate")
    acc = _Accumulator(taxonomy, config)
    for image_id, pred, gt in items:
        acc.add_image(image_id, pred, gt)
    return acc.finalize()
