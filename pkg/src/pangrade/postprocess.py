"""Instance postprocessing: flatten, re-instance, and merge nearby blobs.

Per thing category the steps are: (1) union all instance masks into one
binary map, (2) split it into connected components, (3) dilate every
component by d pixels and merge components whose dilations overlap,
transitively. Two components merge exactly when their minimum pairwise
Chebyshev distance is <= 2d. Pixels never move: only the grouping of
same-category pixels into instances changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotAThingCategoryError, ValidationError
from .masks import BinaryMask
from .panoptic import PanopticMap, SegmentInfo
from .taxonomy import KIND_STUFF, KIND_THING, CategoryTaxonomy


@dataclass(frozen=True)
class PostprocessConfig:
    d: int = 5
    connectivity: int = 8

    def __post_init__(self):
        if self.d < 0:
            raise ValidationError(f"dilation radius must be >= 0, got {self.d}")
        if self.connectivity not in (4, 8):
            raise ValidationError(f"connectivity must be 4 or 8, got {self.connectivity}")


def flatten_category(pmap: PanopticMap, taxonomy: CategoryTaxonomy, category_id: int) -> BinaryMask:
    """Union of all instance masks of one thing category."""
    cat = taxonomy.get(category_id)
    if cat.kind != KIND_THING:
        raise NotAThingCategoryError(f"category {category_id} ({cat.name}) is stuff")
    ids = [sid for sid, seg in pmap.segments.items() if seg.category_id == category_id]
    if not ids:
        return BinaryMask.zeros(pmap.width, pmap.height)
    return BinaryMask(np.isin(pmap.id_raster, ids))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _row_runs(row: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate(([0], row.astype(np.int8), [0]))
    diff = np.diff(padded)
    starts = np.nonzero(diff == 1)[0]
    ends = np.nonzero(diff == -1)[0]
    return list(zip(starts.tolist(), ends.tolist()))


def connected_components(mask: BinaryMask, connectivity: int = 8) -> list[BinaryMask]:
    """Partition set pixels into maximal connected components.

    Uses run-based two-pass labeling with union-find. Components are
    returned ordered by (min row, min col); ties fall back to the first
    pixel in row-major order.
    """
    if connectivity not in (4, 8):
        raise ValidationError(f"connectivity must be 4 or 8, got {connectivity}")
    pixels = mask.pixels
    height, width = pixels.shape

    runs: list[tuple[int, int, int]] = []  # (row, start, end)
    row_spans: list[tuple[int, int]] = []  # [start, end) indices into runs per row
    for y in range(height):
        begin = len(runs)
        for s, e in _row_runs(pixels[y]):
            runs.append((y, s, e))
        row_spans.append((begin, len(runs)))

    uf = _UnionFind(len(runs))
    # 8-connectivity joins runs whose column spans touch diagonally
    reach = 1 if connectivity == 8 else 0
    for y in range(1, height):
        pb, pe = row_spans[y - 1]
        cb, ce = row_spans[y]
        i = pb
        for j in range(cb, ce):
            _, cs, ce_ = runs[j]
            while i < pe and runs[i][2] + reach <= cs:
                i += 1
            k = i
            while k < pe and runs[k][1] < ce_ + reach:
                uf.union(j, k)
                k += 1

    members: dict[int, list[int]] = {}
    for idx in range(len(runs)):
        members.setdefault(uf.find(idx), []).append(idx)

    components = []
    for run_ids in members.values():
        comp = np.zeros((height, width), dtype=bool)
        min_row = min(runs[i][0] for i in run_ids)
        min_col = min(runs[i][1] for i in run_ids)
        first = min((runs[i][0], runs[i][1]) for i in run_ids)
        for i in run_ids:
            y, s, e = runs[i]
            comp[y, s:e] = True
        components.append(((min_row, min_col, first), BinaryMask(comp)))
    components.sort(key=lambda item: item[0])
    return [m for _, m in components]


def dilate(mask: BinaryMask, d: int) -> BinaryMask:
    """Expand by the Chebyshev ball of radius d (3x3 square, iterated)."""
    if d < 0:
        raise ValidationError(f"dilation radius must be >= 0, got {d}")
    out = mask.pixels
    for _ in range(d):
        padded = np.zeros((out.shape[0] + 2, out.shape[1] + 2), dtype=bool)
        padded[1:-1, 1:-1] = out
        out = (
            padded[:-2, :-2] | padded[:-2, 1:-1] | padded[:-2, 2:]
            | padded[1:-1, :-2] | padded[1:-1, 1:-1] | padded[1:-1, 2:]
            | padded[2:, :-2] | padded[2:, 1:-1] | padded[2:, 2:]
        )
    return BinaryMask(out)


def _bbox(pixels: np.ndarray) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(pixels)
    return int(ys.min()), int(xs.min()), int(ys.max()), int(xs.max())


def postprocess_instances(
    pmap: PanopticMap, taxonomy: CategoryTaxonomy, config: PostprocessConfig = PostprocessConfig()
) -> PanopticMap:
    """Regroup thing instances per the three-step merge algorithm.

    Stuff segments and the per-pixel category assignment are untouched.
    Merged instances get fresh ids numbered after the largest stuff id,
    in ascending (min row, min col) order of the merged pixel group;
    scores combine by area-weighted mean and vanish if any member segment
    carried no score.
    """
    raster = pmap.id_raster
    new_raster = np.zeros_like(raster)
    segments: dict[int, SegmentInfo] = {}

    stuff_ids = []
    thing_cats = set()
    for sid, seg in pmap.segments.items():
        if taxonomy.get(seg.category_id).kind == KIND_STUFF:
            stuff_ids.append(sid)
        else:
            thing_cats.add(seg.category_id)
    for sid in stuff_ids:
        seg = pmap.segment(sid)
        new_raster[raster == sid] = sid
        segments[sid] = seg

    groups = []  # (sort_key, category_id, group_pixels)
    for category_id in sorted(thing_cats):
        flat = flatten_category(pmap, taxonomy, category_id)
        comps = connected_components(flat, config.connectivity)
        dilated = [dilate(c, config.d).pixels for c in comps]
        boxes = [_bbox(p) for p in dilated]
        uf = _UnionFind(len(comps))
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                if uf.find(i) == uf.find(j):
                    continue
                bi, bj = boxes[i], boxes[j]
                if bi[2] < bj[0] or bj[2] < bi[0] or bi[3] < bj[1] or bj[3] < bi[1]:
                    continue
                if (dilated[i] & dilated[j]).any():
                    uf.union(i, j)
        merged: dict[int, np.ndarray] = {}
        for i, comp in enumerate(comps):
            root = uf.find(i)
            if root in merged:
                merged[root] = merged[root] | comp.pixels
            else:
                merged[root] = comp.pixels
        for group in merged.values():
            ys, xs = np.nonzero(group)
            key = (int(ys.min()), int(xs.min()), category_id)
            groups.append((key, category_id, group))

    groups.sort(key=lambda item: item[0])
    next_id = max(stuff_ids, default=0)
    for _, category_id, group in groups:
        next_id += 1
        source_ids, weights = np.unique(raster[group], return_counts=True)
        scores = [pmap.segment(int(s)).score for s in source_ids if s != 0]
        if scores and all(s is not None for s in scores):
            w = np.array([int(c) for s, c in zip(source_ids, weights) if s != 0], dtype=float)
            score = float(np.dot(w, np.array(scores)) / w.sum())
        else:
            score = None
        new_raster[group] = next_id
        segments[next_id] = SegmentInfo(next_id, category_id, int(group.sum()), score)

    return PanopticMap(new_raster, segments)
