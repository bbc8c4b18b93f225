"""Deterministic k-fold splitting and fold-report aggregation.

Splits use a named, versioned PRNG: the id list is sorted, permuted with
numpy's PCG64 generator seeded directly with the given seed, and dealt
round-robin, so the same (ids, k, seed) triple yields identical folds on
every platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import KeyMismatchError, MalformedExportError, TooFewImagesError, ValidationError
from .formats import DatasetManifest, canonical_json
from .metrics import EvaluationReport
from .taxonomy import ROLE_DEFECT, ROLE_FRUIT_BG, ROLE_FRUIT_FG, CategoryTaxonomy


@dataclass(frozen=True)
class SplitSpec:
    k: int
    seed: int
    assignments: dict[str, int]  # image_id -> fold index

    def __post_init__(self):
        sizes = self.fold_sizes()
        if len(sizes) != self.k or max(sizes) - min(sizes) > 1:
            raise ValidationError(f"fold sizes must differ by at most 1, got {sizes}")

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for fold in self.assignments.values():
            sizes[fold] += 1
        return sizes

    def fold_ids(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.assignments.items() if f == fold)

    def to_json_bytes(self) -> bytes:
        return canonical_json(
            {"k": self.k, "seed": self.seed, "assignments": self.assignments}
        )

    @classmethod
    def from_json_bytes(cls, data: bytes) -> "SplitSpec":
        try:
            obj = json.loads(data.decode("utf-8"))
            return cls(
                int(obj["k"]), int(obj["seed"]),
                {str(i): int(f) for i, f in obj["assignments"].items()},
            )
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedExportError(f"bad splits JSON: {exc}") from None


def kfold_split(manifest: DatasetManifest, k: int = 5, seed: int = 0) -> SplitSpec:
    """Assign every manifest image to one of k near-equal folds."""
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    ids = sorted(manifest.image_ids)
    if len(ids) < k:
        raise TooFewImagesError(f"{len(ids)} images cannot fill {k} folds")
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(ids))
    assignments = {ids[int(j)]: i % k for i, j in enumerate(order)}
    return SplitSpec(k=k, seed=seed, assignments=assignments)


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class MetricAggregate:
    mean: float
    std: float  # population standard deviation
    fold_values: tuple[float, ...]

    def __post_init__(self):
        if self.std < 0:
            raise ValidationError("std must be >= 0")
        if not min(self.fold_values) - 1e-12 <= self.mean <= max(self.fold_values) + 1e-12:
            raise ValidationError("mean must lie within the fold value range")


@dataclass(frozen=True)
class AggregateReport:
    metrics: dict[str, MetricAggregate]
    fold_count: int

    def to_json_obj(self) -> dict:
        return {
            "fold_count": self.fold_count,
            "metrics": {
                key: {"mean": m.mean, "std": m.std, "fold_values": list(m.fold_values)}
                for key, m in sorted(self.metrics.items())
            },
        }


def flatten_report(report: EvaluationReport) -> dict[str, float]:
    """One flat {metric_key: value} view of a report; absent metrics are
    absent keys. Category keys look like 'category.4.ap'."""
    flat: dict[str, float] = {}
    for cid, m in sorted(report.per_category.items()):
        for name in ("iou", "ap", "ap50", "ap75", "ar", "pq", "sq", "rq"):
            value = getattr(m, name)
            if value is not None:
                flat[f"category.{cid}.{name}"] = value
    if report.miou is not None:
        flat["overall.miou"] = report.miou
    if report.pq is not None:
        flat["overall.pq"] = report.pq
    return flat


def aggregate(fold_reports: list[EvaluationReport]) -> AggregateReport:
    """Mean and population std per metric across fold reports."""
    if len(fold_reports) < 2:
        raise ValidationError("aggregation needs at least 2 fold reports")
    flats = [flatten_report(r) for r in fold_reports]
    keys = set(flats[0])
    for i, flat in enumerate(flats[1:], start=1):
        if set(flat) != keys:
            diff = sorted(keys.symmetric_difference(flat))
            raise KeyMismatchError(f"fold {i} metric keys differ: {diff[:6]}")
    metrics = {}
    for key in sorted(keys):
        values = tuple(flat[key] for flat in flats)
        # sum in sorted order so statistics are exactly fold-order invariant
        ordered = sorted(values)
        mean = sum(ordered) / len(ordered)
        std = (sum((v - mean) ** 2 for v in ordered) / len(ordered)) ** 0.5
        metrics[key] = MetricAggregate(mean=mean, std=std, fold_values=values)
    return AggregateReport(metrics=metrics, fold_count=len(fold_reports))


# ---------------------------------------------------------------------------
# Table rendering


def format_value(value: float) -> str:
    """3-decimal fixed format with the leading zero stripped: .779"""
    text = f"{value:.3f}"
    if text.startswith("0."):
        text = text[1:]
    elif text.startswith("-0."):
        text = "-" + text[2:]
    return text


def format_cell(agg: MetricAggregate) -> str:
    return f"{format_value(agg.mean)} ± {format_value(agg.std)}"


def default_layout(taxonomy: CategoryTaxonomy) -> list[tuple[str, str]]:
    """Column layout: AP, AP@50, AP@75, AR, defect IoU, fruit IoUs, mIoU, PQ."""
    layout: list[tuple[str, str]] = []
    defect_ids = taxonomy.ids_with_role(ROLE_DEFECT)
    single = len(defect_ids) == 1
    for cid in defect_ids:
        prefix = "" if single else f"{taxonomy.get(cid).name} "
        layout.append((f"{prefix}AP", f"category.{cid}.ap"))
        layout.append((f"{prefix}AP@50", f"category.{cid}.ap50"))
        layout.append((f"{prefix}AP@75", f"category.{cid}.ap75"))
        layout.append((f"{prefix}AR", f"category.{cid}.ar"))
        layout.append((f"{prefix}IoU", f"category.{cid}.iou"))
    for role, header in ((ROLE_FRUIT_FG, "IoU FG"), (ROLE_FRUIT_BG, "IoU BG")):
        ids = taxonomy.ids_with_role(role)
        if ids:
            layout.append((header, f"category.{ids[0]}.iou"))
    layout.append(("mIoU", "overall.miou"))
    layout.append(("PQ", "overall.pq"))
    return layout


def render_table_markdown(
    report: AggregateReport, layout: list[tuple[str, str]], label: str = "run"
) -> str:
    headers = [h for h, _ in layout]
    cells = [
        format_cell(report.metrics[key]) if key in report.metrics else "-"
        for _, key in layout
    ]
    lines = [
        "| model | " + " | ".join(headers) + " |",
        "| --- | " + " | ".join("---" for _ in headers) + " |",
        f"| {label} | " + " | ".join(cells) + " |",
    ]
    return "\n".join(lines) + "\n"


def render_table_csv(report: AggregateReport, layout: list[tuple[str, str]]) -> str:
    lines = ["metric,mean,std"]
    for header, key in layout:
        if key in report.metrics:
            m = report.metrics[key]
            lines.append(f"{header},{format_value(m.mean)},{format_value(m.std)}")
        else:
            lines.append(f"{header},,")
    return "\n".join(lines) + "\n"
