"""Grading outputs (defect count, relative size) and agreement analyses.

Relative defect size is the instance area divided by the foreground-fruit
area plus the total defect area; defect pixels sit on the fruit, so they
belong in the denominator. `denominator="fruit_only"` restores the plain
foreground-fruit denominator. Background-fruit and void pixels never enter
any denominator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyInputError,
    NoForegroundFruitError,
    NoMatchesError,
    UnpairedInputWarning,
    ValidationError,
    ZeroVarianceError,
)
from .masks import BinaryMask, iou as mask_iou
from .metrics import match_greedy_by_iou
from .panoptic import PanopticMap, extract_instances
from .taxonomy import ROLE_DEFECT, ROLE_FRUIT_FG, CategoryTaxonomy

DENOM_FRUIT_PLUS_DEFECTS = "fruit_plus_defects"
DENOM_FRUIT_ONLY = "fruit_only"
DEFAULT_BIN_EDGES = (1, 10, 100, 1000, 10000)


@dataclass(frozen=True)
class DefectSize:
    segment_id: int
    category_id: int
    area_px: int
    relative_size: float


@dataclass(frozen=True)
class GradeRecord:
    image_id: str
    counts: dict[int, int]  # defect category -> instance count
    total: int
    defects: list[DefectSize]

    def __post_init__(self):
        if self.total != len(self.defects):
            raise ValidationError("total must equal the defect list length")

    def to_json_obj(self) -> dict:
        return {
            "image_id": self.image_id,
            "counts": {str(cid): n for cid, n in self.counts.items()},
            "total": self.total,
            "defects": [
                {
                    "segment_id": d.segment_id,
                    "category_id": d.category_id,
                    "area_px": d.area_px,
                    "relative_size": d.relative_size,
                }
                for d in self.defects
            ],
        }


def grade(
    pmap: PanopticMap,
    taxonomy: CategoryTaxonomy,
    image_id: str = "",
    denominator: str = DENOM_FRUIT_PLUS_DEFECTS,
) -> GradeRecord:
    """Count defect instances and compute their relative sizes."""
    if denominator not in (DENOM_FRUIT_PLUS_DEFECTS, DENOM_FRUIT_ONLY):
        raise ValidationError(f"unknown denominator mode {denominator!r}")
    if taxonomy.fruit_foreground_id is None:
        raise NoForegroundFruitError("taxonomy has no fruit_foreground category")
    fg_area = sum(
        seg.area for _, seg in extract_instances(pmap, taxonomy, ROLE_FRUIT_FG)
    )
    defects = extract_instances(pmap, taxonomy, ROLE_DEFECT)
    defect_area = sum(seg.area for _, seg in defects)
    denom = fg_area + defect_area if denominator == DENOM_FRUIT_PLUS_DEFECTS else fg_area
    if denom == 0:
        raise NoForegroundFruitError(
            f"{image_id or 'image'}: relative-size denominator is zero "
            "(no foreground fruit pixels)"
        )
    counts = {cid: 0 for cid in taxonomy.defect_ids}
    sizes = []
    for _, seg in defects:
        counts[seg.category_id] += 1
        sizes.append(
            DefectSize(seg.segment_id, seg.category_id, seg.area, seg.area / denom)
        )
    return GradeRecord(image_id=image_id, counts=counts, total=len(sizes), defects=sizes)


# ---------------------------------------------------------------------------
# Count agreement


@dataclass(frozen=True)
class CountAgreement:
    matrix: dict[tuple[int, int], int]  # (annotated, predicted) -> images
    exact_rate: float
    within_one_rate: float
    n: int

    def __post_init__(self):
        if sum(self.matrix.values()) != self.n:
            raise ValidationError("matrix cells must sum to the comparison count")
        if not self.exact_rate <= self.within_one_rate <= 1.0:
            raise ValidationError("exact rate cannot exceed the within-one rate")

    def to_json_obj(self) -> dict:
        return {
            "matrix": [
                {"annotated": a, "predicted": p, "n": n}
                for (a, p), n in sorted(self.matrix.items())
            ],
            "exact_rate": self.exact_rate,
            "within_one_rate": self.within_one_rate,
            "n": self.n,
        }


def count_agreement(
    pairs: list[tuple[PanopticMap, PanopticMap]],
    taxonomy: CategoryTaxonomy,
    per_category: bool = False,
) -> CountAgreement:
    """Compare defect counts per image between two mask sources.

    Counts compare total defects; with per_category=True every
    (image, defect category) combination contributes one comparison.
    """
    if not pairs:
        raise EmptyInputError("no map pairs")

    def defect_counts(pmap: PanopticMap) -> dict[int, int]:
        counts = {cid: 0 for cid in taxonomy.defect_ids}
        for _, seg in extract_instances(pmap, taxonomy, ROLE_DEFECT):
            counts[seg.category_id] += 1
        return counts

    matrix: dict[tuple[int, int], int] = {}
    n = 0
    for gt_map, pred_map in pairs:
        gt_counts = defect_counts(gt_map)
        pred_counts = defect_counts(pred_map)
        if per_category:
            cells = [(gt_counts[cid], pred_counts[cid]) for cid in taxonomy.defect_ids]
        else:
            cells = [(sum(gt_counts.values()), sum(pred_counts.values()))]
        for cell in cells:
            matrix[cell] = matrix.get(cell, 0) + 1
            n += 1
    exact = sum(cnt for (a, p), cnt in matrix.items() if a == p)
    within = sum(cnt for (a, p), cnt in matrix.items() if abs(a - p) <= 1)
    return CountAgreement(matrix, exact / n, within / n, n)


# ---------------------------------------------------------------------------
# Size agreement


@dataclass(frozen=True)
class SizeAgreement:
    pairs: list[tuple[float, float]]  # (annotated, predicted) relative sizes
    pearson_r: float
    slope: float
    intercept: float
    n: int

    def __post_init__(self):
        if abs(self.pearson_r) > 1.0 + 1e-12:
            raise ValidationError(f"|pearson_r| must be <= 1, got {self.pearson_r}")
        if self.n != len(self.pairs):
            raise ValidationError("n must equal the pair count")

    def to_json_obj(self) -> dict:
        return {
            "pairs": [{"annotated": a, "predicted": p} for a, p in self.pairs],
            "pearson_r": self.pearson_r,
            "slope": self.slope,
            "intercept": self.intercept,
            "n": self.n,
        }


def size_agreement(
    pairs: list[tuple[PanopticMap, PanopticMap]],
    taxonomy: CategoryTaxonomy,
    min_iou: float = 0.5,
    denominator: str = DENOM_FRUIT_PLUS_DEFECTS,
) -> SizeAgreement:
    """Match defect instances across sources and correlate relative sizes.

    Defects are pooled over defect categories for matching (the analysis
    treats defects as one class); unmatched instances are excluded. The
    regression line fits predicted on annotated sizes.
    """
    if not pairs:
        raise EmptyInputError("no map pairs")
    size_pairs: list[tuple[float, float]] = []
    for gt_map, pred_map in pairs:
        gt_defects = extract_instances(gt_map, taxonomy, ROLE_DEFECT)
        pred_defects = extract_instances(pred_map, taxonomy, ROLE_DEFECT)
        if not gt_defects or not pred_defects:
            continue
        gt_sizes = {
            d.segment_id: d.relative_size
            for d in grade(gt_map, taxonomy, denominator=denominator).defects
        }
        pred_sizes = {
            d.segment_id: d.relative_size
            for d in grade(pred_map, taxonomy, denominator=denominator).defects
        }
        result = match_greedy_by_iou(pred_defects, gt_defects, min_iou)
        for (_, ginfo), (_, pinfo), _ in result.matches:
            size_pairs.append((gt_sizes[ginfo.segment_id], pred_sizes[pinfo.segment_id]))
    if not size_pairs:
        raise NoMatchesError(f"no instance pairs reached IoU {min_iou}")
    anno = np.array([a for a, _ in size_pairs])
    pred = np.array([p for _, p in size_pairs])
    var_a = float(((anno - anno.mean()) ** 2).mean())
    var_p = float(((pred - pred.mean()) ** 2).mean())
    if var_a == 0.0 or var_p == 0.0:
        raise ZeroVarianceError("relative sizes have zero variance on one axis")
    cov = float(((anno - anno.mean()) * (pred - pred.mean())).mean())
    slope = cov / var_a
    intercept = float(pred.mean() - slope * anno.mean())
    r = cov / (var_a**0.5 * var_p**0.5)
    return SizeAgreement(size_pairs, r, slope, intercept, len(size_pairs))


# ---------------------------------------------------------------------------
# Mask agreement binned by annotated size


@dataclass(frozen=True)
class SizeBin:
    low: int
    high: int | None  # None = open-ended
    n: int
    mean_iou: float | None
    median_iou: float | None
    q1_iou: float | None
    q3_iou: float | None

    @property
    def label(self) -> str:
        return f"[{self.low},{self.high if self.high is not None else 'inf'})"


@dataclass(frozen=True)
class MaskAgreement:
    bins: list[SizeBin]
    raw: list[tuple[int, float]]  # (annotated area, iou) per pair
    bin_edges: tuple[int, ...] = field(default=DEFAULT_BIN_EDGES)

    def to_json_obj(self) -> dict:
        return {
            "bin_edges": list(self.bin_edges),
            "bins": [
                {
                    "label": b.label,
                    "low": b.low,
                    "high": b.high,
                    "n": b.n,
                    "mean_iou": b.mean_iou,
                    "median_iou": b.median_iou,
                    "q1_iou": b.q1_iou,
                    "q3_iou": b.q3_iou,
                }
                for b in self.bins
            ],
            "raw": [{"area": a, "iou": v} for a, v in self.raw],
        }


def mask_agreement_by_size(
    pairs: list[tuple[BinaryMask, BinaryMask]],
    bin_edges: tuple[int, ...] = DEFAULT_BIN_EDGES,
) -> MaskAgreement:
    """Bin (annotated, generated) mask IoU by annotated-mask pixel area.

    Default bins are area decades [1,10), [10,100), ... [10000, inf);
    quartiles use linear interpolation. Pairs whose annotated mask is
    empty cannot be binned and are skipped with a warning.
    """
    if not pairs:
        raise EmptyInputError("no mask pairs")
    if len(bin_edges) < 1 or any(b <= a for a, b in zip(bin_edges, bin_edges[1:])):
        raise ValidationError(f"bin edges must be strictly increasing: {bin_edges}")
    raw: list[tuple[int, float]] = []
    for annotated, generated in pairs:
        if annotated.area < bin_edges[0]:
            warnings.warn(
                f"annotated mask area {annotated.area} below first bin edge; skipped",
                UnpairedInputWarning,
                stacklevel=2,
            )
            continue
        raw.append((annotated.area, mask_iou(annotated, generated)))
    bins = []
    for i, low in enumerate(bin_edges):
        high = bin_edges[i + 1] if i + 1 < len(bin_edges) else None
        values = [v for a, v in raw if a >= low and (high is None or a < high)]
        if values:
            arr = np.array(values)
            q1, med, q3 = (float(q) for q in np.percentile(arr, [25, 50, 75]))
            bins.append(SizeBin(low, high, len(values), float(arr.mean()), med, q1, q3))
        else:
            bins.append(SizeBin(low, high, 0, None, None, None, None))
    return MaskAgreement(bins, raw, tuple(bin_edges))


# ---------------------------------------------------------------------------
# CSV renderers (one row per image / per pair)


def grades_to_csv(records: list[GradeRecord], taxonomy: CategoryTaxonomy) -> str:
    cols = [f"count[{taxonomy.get(cid).name}]" for cid in taxonomy.defect_ids]
    lines = ["image_id,total," + ",".join(cols) + ",relative_sizes"]
    for rec in records:
        sizes = ";".join(f"{d.relative_size:.6f}" for d in rec.defects)
        counts = ",".join(str(rec.counts[cid]) for cid in taxonomy.defect_ids)
        lines.append(f"{rec.image_id},{rec.total},{counts},{sizes}")
    return "\n".join(lines) + "\n"


def counts_to_csv(agreement: CountAgreement) -> str:
    lines = ["annotated,predicted,n"]
    for (a, p), n in sorted(agreement.matrix.items()):
        lines.append(f"{a},{p},{n}")
    return "\n".join(lines) + "\n"


def sizes_to_csv(agreement: SizeAgreement) -> str:
    lines = ["annotated_relative_size,predicted_relative_size"]
    for a, p in agreement.pairs:
        lines.append(f"{a:.9f},{p:.9f}")
    return "\n".join(lines) + "\n"


def mask_agreement_to_csv(agreement: MaskAgreement) -> str:
    lines = ["annotated_area,iou"]
    for area, value in agreement.raw:
        lines.append(f"{area},{value:.9f}")
    return "\n".join(lines) + "\n"
