"""Binary pixel masks, their run-length codec, and overlap arithmetic."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, LengthMismatchError, ValidationError


class BinaryMask:
    """A single-instance pixel set on a fixed row-major grid.

    The pixel array is copied on construction and frozen; instances are
    immutable and safe to share between threads.
    """

    __slots__ = ("_pixels", "_area")

    def __init__(self, pixels: np.ndarray):
        arr = np.asarray(pixels)
        if arr.ndim != 2:
            raise ValidationError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.size < 1:
            raise ValidationError("mask grid must contain at least one pixel")
        arr = arr.astype(bool, copy=True)
        arr.setflags(write=False)
        self._pixels = arr
        self._area = int(arr.sum())

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def area(self) -> int:
        return self._area

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and bool(
            np.array_equal(self._pixels, other._pixels)
        )

    def __hash__(self) -> int:  # pragma: no cover - masks are not dict keys
        return hash((self._pixels.shape, self._pixels.tobytes()))

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, area={self.area})"


def rle_encode(mask: BinaryMask) -> str:
    """Encode a mask as alternating run lengths in row-major order.

    The first run counts zeros and may be empty; a trailing zero run is
    omitted, so an all-zero mask encodes as a single run. Runs are emitted
    as space-separated decimal counts, which keeps files byte-comparable.
    """
    flat = mask.pixels.ravel()
    # Sentinels on both ends turn value changes into run boundaries.
    padded = np.concatenate(([-1], flat.astype(np.int8), [-1]))
    boundaries = np.nonzero(np.diff(padded))[0]
    runs = np.diff(boundaries)
    if flat.size and flat[0]:
        runs = np.concatenate(([0], runs))
    return " ".join(str(int(r)) for r in runs)


def rle_decode(runs: str, width: int, height: int) -> BinaryMask:
    """Inverse of :func:`rle_encode`.

    Raises LengthMismatchError when the run sum differs from width*height.
    """
    counts = [int(tok) for tok in runs.split()] if runs.strip() else []
    if any(c < 0 for c in counts):
        raise LengthMismatchError(f"negative run length in {runs!r}")
    total = sum(counts)
    if total != width * height:
        raise LengthMismatchError(
            f"run sum {total} != pixel count {width * height} ({width}x{height})"
        )
    flat = np.zeros(width * height, dtype=bool)
    pos = 0
    value = False
    for count in counts:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    return BinaryMask(flat.reshape(height, width))


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection-over-union of two same-sized masks.

    Two empty masks score 1.0 (agreement on absence); metric matching never
    feeds that case because only nonempty segments are considered.
    """
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatchError(
            f"mask shapes differ: {a.pixels.shape} vs {b.pixels.shape}"
        )
    intersection = int(np.count_nonzero(a.pixels & b.pixels))
    union = a.area + b.area - intersection
    if union == 0:
        return 1.0
    return intersection / union
