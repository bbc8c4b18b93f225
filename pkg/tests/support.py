"""Shared builders for tests: raster-first map construction and random data."""

from __future__ import annotations

import numpy as np

from pangrade.panoptic import PanopticMap, SegmentInfo
from pangrade.taxonomy import CategoryTaxonomy


def map_from_raster(raster, categories: dict[int, int], scores: dict[int, float] | None = None) -> PanopticMap:
    """Build a PanopticMap from an id raster and {segment_id: category_id}."""
    raster = np.asarray(raster, dtype=np.int64)
    scores = scores or {}
    segments = {}
    ids, counts = np.unique(raster, return_counts=True)
    for sid, area in zip(ids, counts):
        sid = int(sid)
        if sid == 0:
            continue
        segments[sid] = SegmentInfo(sid, categories[sid], int(area), scores.get(sid))
    return PanopticMap(raster, segments)


def paint_rect(raster, sid: int, x0: int, y0: int, x1: int, y1: int) -> None:
    raster[y0:y1, x0:x1] = sid


def random_panoptic_map(
    rng: np.random.Generator,
    taxonomy: CategoryTaxonomy,
    size: int = 48,
    max_things: int = 4,
    with_scores: bool = False,
) -> PanopticMap:
    """Random map: optional stuff blobs plus scattered thing rectangles."""
    raster = np.zeros((size, size), dtype=np.int64)
    categories: dict[int, int] = {}
    scores: dict[int, float] = {}
    sid = 0
    stuff_ids = [c.category_id for c in taxonomy.categories if c.kind == "stuff"]
    thing_ids = list(taxonomy.thing_ids)
    for cat in stuff_ids:
        if rng.random() < 0.7:
            sid += 1
            w = int(rng.integers(size // 4, size // 2 + 1))
            h = int(rng.integers(size // 4, size // 2 + 1))
            x0 = int(rng.integers(0, size - w + 1))
            y0 = int(rng.integers(0, size - h + 1))
            paint_rect(raster, sid, x0, y0, x0 + w, y0 + h)
            categories[sid] = cat
    n_things = int(rng.integers(0, max_things + 1))
    for _ in range(n_things):
        sid += 1
        w = int(rng.integers(2, max(3, size // 6)))
        h = int(rng.integers(2, max(3, size // 6)))
        x0 = int(rng.integers(0, size - w + 1))
        y0 = int(rng.integers(0, size - h + 1))
        paint_rect(raster, sid, x0, y0, x0 + w, y0 + h)
        categories[sid] = int(rng.choice(thing_ids))
        if with_scores:
            scores[sid] = round(float(rng.uniform(0.05, 1.0)), 6)
    # overwrites may have erased earlier segments entirely; drop those
    present = set(int(i) for i in np.unique(raster) if i != 0)
    categories = {k: v for k, v in categories.items() if k in present}
    scores = {k: v for k, v in scores.items() if k in present}
    return map_from_raster(raster, categories, scores)


def perturbed_copy(
    rng: np.random.Generator,
    source: PanopticMap,
    taxonomy: CategoryTaxonomy,
    with_scores: bool = True,
) -> PanopticMap:
    """Shift/drop/add segments of a map to make a plausible 'prediction'."""
    size = source.height
    raster = np.zeros_like(source.id_raster)
    categories: dict[int, int] = {}
    scores: dict[int, float] = {}
    sid = 0
    for old_sid, seg in source.segments.items():
        if rng.random() < 0.15:
            continue  # miss this segment
        mask = source.id_raster == old_sid
        dy, dx = int(rng.integers(-2, 3)), int(rng.integers(-2, 3))
        shifted = np.zeros_like(mask)
        ys, xs = np.nonzero(mask)
        ys2, xs2 = ys + dy, xs + dx
        keep = (ys2 >= 0) & (ys2 < size) & (xs2 >= 0) & (xs2 < size)
        shifted[ys2[keep], xs2[keep]] = True
        if not shifted.any():
            continue
        sid += 1
        raster[shifted] = sid
        categories[sid] = seg.category_id
        if with_scores:
            scores[sid] = round(float(rng.uniform(0.3, 1.0)), 6)
    if rng.random() < 0.4 and taxonomy.thing_ids:
        sid += 1
        w, h = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        x0 = int(rng.integers(0, size - w + 1))
        y0 = int(rng.integers(0, size - h + 1))
        paint_rect(raster, sid, x0, y0, x0 + w, y0 + h)
        categories[sid] = int(rng.choice(list(taxonomy.thing_ids)))
        if with_scores:
            scores[sid] = round(float(rng.uniform(0.05, 0.6)), 6)
    present = set(int(i) for i in np.unique(raster) if i != 0)
    categories = {k: v for k, v in categories.items() if k in present}
    scores = {k: v for k, v in scores.items() if k in present}
    # areas changed by overwrites, rebuild from raster
    return map_from_raster(raster, categories, scores)
