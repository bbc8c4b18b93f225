"""Panoptic maps: a segment-id raster paired with a segment table."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnknownCategoryError, ValidationError
from .masks import BinaryMask
from .taxonomy import KIND_STUFF, CategoryTaxonomy

VOID_ID = 0


@dataclass(frozen=True)
class SegmentInfo:
    segment_id: int
    category_id: int
    area: int
    score: float | None = None

    def __post_init__(self):
        if self.segment_id <= 0:
            raise ValidationError(f"segment id must be positive: {self.segment_id}")
        if self.area <= 0:
            raise ValidationError(f"segment {self.segment_id} area must be > 0")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValidationError(
                f"segment {self.segment_id} score {self.score} outside [0, 1]"
            )


@dataclass(frozen=True)
class Prompt:
    """Coarse localization input: a pixel box or a pixel point."""

    kind: str  # "box" | "point"
    category_id: int
    box: tuple[int, int, int, int] | None = None  # x_min, y_min, x_max, y_max
    point: tuple[int, int] | None = None  # x, y

    def __post_init__(self):
        if self.kind == "box":
            if self.box is None or self.point is not None:
                raise ValidationError("box prompt requires box coordinates only")
            x_min, y_min, x_max, y_max = self.box
            if not (x_min < x_max and y_min < y_max):
                raise ValidationError(f"degenerate box {self.box}")
            if x_min < 0 or y_min < 0:
                raise ValidationError(f"box {self.box} outside image bounds")
        elif self.kind == "point":
            if self.point is None or self.box is not None:
                raise ValidationError("point prompt requires point coordinates only")
            if self.point[0] < 0 or self.point[1] < 0:
                raise ValidationError(f"point {self.point} outside image bounds")
        else:
            raise ValidationError(f"unknown prompt kind {self.kind!r}")

    def check_bounds(self, width: int, height: int) -> None:
        if self.kind == "box":
            if self.box[2] > width or self.box[3] > height:
                raise ValidationError(
                    f"box {self.box} exceeds image bounds {width}x{height}"
                )
        else:
            if self.point[0] >= width or self.point[1] >= height:
                raise ValidationError(
                    f"point {self.point} exceeds image bounds {width}x{height}"
                )


class PanopticMap:
    """Per-pixel segment-id raster plus one SegmentInfo row per id.

    Invariants enforced on construction: the nonzero raster ids and table
    ids coincide, and stored areas equal raster pixel counts. Instances are
    immutable; id 0 marks void (unlabeled) pixels.
    """

    __slots__ = ("_raster", "_segments")

    def __init__(self, id_raster: np.ndarray, segments: dict[int, SegmentInfo] | list[SegmentInfo]):
        raster = np.asarray(id_raster)
        if raster.ndim != 2 or raster.size < 1:
            raise ValidationError(f"id raster must be a nonempty 2-D array, got {raster.shape}")
        if np.any(raster < 0):
            raise ValidationError("id raster holds negative ids")
        raster = raster.astype(np.int64, copy=True)
        raster.setflags(write=False)

        if isinstance(segments, dict):
            table = dict(segments)
        else:
            table = {seg.segment_id: seg for seg in segments}
            if len(table) != len(segments):
                raise ValidationError("duplicate segment ids in table")
        for sid, seg in table.items():
            if sid != seg.segment_id:
                raise ValidationError(f"table key {sid} != segment id {seg.segment_id}")

        ids, counts = np.unique(raster, return_counts=True)
        raster_areas = {int(i): int(c) for i, c in zip(ids, counts) if i != VOID_ID}
        if set(raster_areas) != set(table):
            missing = set(raster_areas) - set(table)
            extra = set(table) - set(raster_areas)
            raise ValidationError(
                f"raster/table id mismatch (raster-only={sorted(missing)}, table-only={sorted(extra)})"
            )
        for sid, area in raster_areas.items():
            if table[sid].area != area:
                raise ValidationError(
                    f"segment {sid}: stored area {table[sid].area} != raster area {area}"
                )
        self._raster = raster
        self._segments = dict(sorted(table.items()))

    @classmethod
    def empty(cls, width: int, height: int) -> "PanopticMap":
        return cls(np.zeros((height, width), dtype=np.int64), {})

    @property
    def id_raster(self) -> np.ndarray:
        return self._raster

    @property
    def segments(self) -> dict[int, SegmentInfo]:
        return dict(self._segments)

    @property
    def segment_ids(self) -> tuple[int, ...]:
        return tuple(self._segments)

    @property
    def width(self) -> int:
        return self._raster.shape[1]

    @property
    def height(self) -> int:
        return self._raster.shape[0]

    def segment(self, segment_id: int) -> SegmentInfo:
        return self._segments[segment_id]

    def mask_of(self, segment_id: int) -> BinaryMask:
        if segment_id not in self._segments:
            raise KeyError(f"no segment with id {segment_id}")
        return BinaryMask(self._raster == segment_id)

    def validate_against(self, taxonomy: CategoryTaxonomy) -> None:
        """Check taxonomy-dependent invariants (known categories, one
        segment per stuff category)."""
        stuff_seen: dict[int, int] = {}
        for seg in self._segments.values():
            cat = taxonomy.get(seg.category_id)
            if cat.kind == KIND_STUFF:
                if seg.category_id in stuff_seen:
                    raise ValidationError(
                        f"stuff category {seg.category_id} has segments "
                        f"{stuff_seen[seg.category_id]} and {seg.segment_id}"
                    )
                stuff_seen[seg.category_id] = seg.segment_id

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PanopticMap):
            return NotImplemented
        return self._segments == other._segments and bool(
            np.array_equal(self._raster, other._raster)
        )

    def __repr__(self) -> str:
        return f"PanopticMap({self.width}x{self.height}, {len(self._segments)} segments)"


def to_semantic(pmap: PanopticMap, taxonomy: CategoryTaxonomy) -> np.ndarray:
    """Project a panoptic map to a per-pixel category raster.

    Void (id-0) pixels map onto the void-role category id; instance
    identity is discarded.
    """
    for seg in pmap.segments.values():
        taxonomy.get(seg.category_id)
    ids = np.fromiter((VOID_ID, *pmap.segment_ids), dtype=np.int64)
    cats = np.fromiter(
        (taxonomy.void_id, *(seg.category_id for seg in pmap.segments.values())),
        dtype=np.int64,
    )
    # segment ids are stored ascending and every raster value appears in ids
    return cats[np.searchsorted(ids, pmap.id_raster)]


def extract_instances(
    pmap: PanopticMap,
    taxonomy: CategoryTaxonomy,
    role: str | tuple[str, ...],
) -> list[tuple[BinaryMask, SegmentInfo]]:
    """Masks and infos of all segments whose category role matches.

    Returned in ascending segment-id order; masks are disjoint because
    each pixel carries one id.
    """
    roles = (role,) if isinstance(role, str) else tuple(role)
    out = []
    for sid, seg in pmap.segments.items():
        cat = taxonomy.get(seg.category_id)
        if cat.role in roles:
            out.append((pmap.mask_of(sid), seg))
    return out
