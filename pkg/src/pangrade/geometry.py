"""Resize-and-pad geometry shared by maps, masks, and prompts.

The longest side is scaled to the target side with nearest-neighbor
sampling (interpolation would invent segment ids); the shorter side is
centered and padded with void. The returned transform carries scale and
offsets so downstream consumers can map prompts forward and masks back.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SegmentDroppedWarning
from .masks import BinaryMask
from .panoptic import PanopticMap, SegmentInfo


@dataclass(frozen=True)
class PadTransform:
    source_width: int
    source_height: int
    target_side: int
    content_width: int
    content_height: int
    x_offset: int
    y_offset: int

    @property
    def scale_x(self) -> float:
        return self.content_width / self.source_width

    @property
    def scale_y(self) -> float:
        return self.content_height / self.source_height

    def apply_point(self, x: int, y: int) -> tuple[int, int]:
        """Map a source pixel center into padded coordinates."""
        px = self.x_offset + min(int((x + 0.5) * self.scale_x), self.content_width - 1)
        py = self.y_offset + min(int((y + 0.5) * self.scale_y), self.content_height - 1)
        return px, py

    def apply_box(self, box: tuple[int, int, int, int]) -> tuple[int, int, int, int]:
        """Map a half-open pixel box into padded coordinates (never degenerate)."""
        x0, y0, x1, y1 = box
        nx0 = self.x_offset + int(np.floor(x0 * self.scale_x))
        ny0 = self.y_offset + int(np.floor(y0 * self.scale_y))
        nx1 = self.x_offset + min(int(np.ceil(x1 * self.scale_x)), self.content_width)
        ny1 = self.y_offset + min(int(np.ceil(y1 * self.scale_y)), self.content_height)
        if nx1 <= nx0:
            nx1 = nx0 + 1
        if ny1 <= ny0:
            ny1 = ny0 + 1
        return nx0, ny0, nx1, ny1

    def source_index_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-neighbor source row/col index for each content pixel."""
        rows = np.minimum(
            ((np.arange(self.content_height) + 0.5) / self.scale_y).astype(np.int64),
            self.source_height - 1,
        )
        cols = np.minimum(
            ((np.arange(self.content_width) + 0.5) / self.scale_x).astype(np.int64),
            self.source_width - 1,
        )
        return rows, cols

    def push_raster(self, raster: np.ndarray, fill=0) -> np.ndarray:
        """Resample a source raster into the padded target grid."""
        rows, cols = self.source_index_grids()
        content = raster[np.ix_(rows, cols)]
        out = np.full((self.target_side, self.target_side), fill, dtype=raster.dtype)
        out[
            self.y_offset : self.y_offset + self.content_height,
            self.x_offset : self.x_offset + self.content_width,
        ] = content
        return out

    def pull_mask(self, padded: np.ndarray) -> np.ndarray:
        """Sample a padded-resolution boolean raster back at source resolution."""
        ys = self.y_offset + np.minimum(
            ((np.arange(self.source_height) + 0.5) * self.scale_y).astype(np.int64),
            self.content_height - 1,
        )
        xs = self.x_offset + np.minimum(
            ((np.arange(self.source_width) + 0.5) * self.scale_x).astype(np.int64),
            self.content_width - 1,
        )
        return padded[np.ix_(ys, xs)]


def pad_transform(width: int, height: int, side: int) -> PadTransform:
    if side < 1:
        raise ValueError(f"target side must be >= 1, got {side}")
    if width >= height:
        content_w = side
        content_h = max(1, round(height * side / width))
    else:
        content_h = side
        content_w = max(1, round(width * side / height))
    return PadTransform(
        source_width=width,
        source_height=height,
        target_side=side,
        content_width=content_w,
        content_height=content_h,
        x_offset=(side - content_w) // 2,
        y_offset=(side - content_h) // 2,
    )


def resize_pad_mask(mask: BinaryMask, side: int) -> tuple[BinaryMask, PadTransform]:
    tf = pad_transform(mask.width, mask.height, side)
    return BinaryMask(tf.push_raster(mask.pixels, fill=False)), tf


def resize_pad(obj: BinaryMask | PanopticMap, side: int):
    """Resize-and-pad either a mask or a panoptic map to side x side."""
    if isinstance(obj, BinaryMask):
        return resize_pad_mask(obj, side)
    if isinstance(obj, PanopticMap):
        return resize_pad_map(obj, side)
    raise TypeError(f"expected BinaryMask or PanopticMap, got {type(obj).__name__}")


def resize_pad_map(pmap: PanopticMap, side: int) -> tuple[PanopticMap, PadTransform]:
    """Resample a panoptic map to side x side; vanished segments are dropped
    with a SegmentDroppedWarning."""
    tf = pad_transform(pmap.width, pmap.height, side)
    raster = tf.push_raster(pmap.id_raster, fill=0)
    ids, counts = np.unique(raster, return_counts=True)
    areas = {int(i): int(c) for i, c in zip(ids, counts) if i != 0}
    segments = {}
    for sid, seg in pmap.segments.items():
        if sid not in areas:
            warnings.warn(
                f"segment {sid} shrank to zero pixels at side {side} and was dropped",
                SegmentDroppedWarning,
                stacklevel=2,
            )
            continue
        segments[sid] = SegmentInfo(sid, seg.category_id, areas[sid], seg.score)
    return PanopticMap(raster, segments), tf
