"""File formats: LabelStudio exports, panoptic PNG+JSON pairs, taxonomy
and manifest JSON.

The panoptic interchange pair is `<image_id>.png` (8-bit RGB encoding
segment id as R + 256*G + 65536*B, id 0 = void) plus `<image_id>.json`
listing the segment table. Writers are byte-deterministic: fixed PNG
encoder settings, sorted JSON keys, UTF-8, trailing newline.

The LabelStudio parser targets the annotation-level JSON export: a list
of tasks, each with `data.image` (the image id is its basename stem) and
`annotations[*].result[*]` entries of type `rectanglelabels` (percent
coordinates, one box per defect) or `keypointlabels` (percent point). A
result may carry an optional `hand_mask` {width, height, rle} object in
the toolkit's RLE form; these are the validation masks.
"""

from __future__ import annotations

import io
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    AreaMismatchError,
    BadPngError,
    DimensionMismatchError,
    IdNotInTableError,
    IdOverflowError,
    MalformedExportError,
    PercentOutOfRangeError,
    SegmentOverwriteWarning,
    UnpairedInputWarning,
    ValidationError,
)
from .masks import BinaryMask, rle_decode, rle_encode
from .panoptic import PanopticMap, Prompt, SegmentInfo
from .taxonomy import KIND_STUFF, Category, CategoryTaxonomy

MAX_SEGMENT_ID = 2**24 - 1


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    prompt: Prompt
    category_id: int
    hand_mask: BinaryMask | None = None


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: str
    width: int
    height: int
    annotation_count: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"{self.image_id}: dimensions must be >= 1")


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    taxonomy_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValidationError("manifest image_ids are not unique")

    def get(self, image_id: str) -> ManifestEntry:
        for entry in self.entries:
            if entry.image_id == image_id:
                return entry
        raise KeyError(image_id)

    @property
    def image_ids(self) -> tuple[str, ...]:
        return tuple(e.image_id for e in self.entries)


def canonical_json(obj) -> bytes:
    """Stable JSON bytes: sorted keys, 2-space indent, UTF-8, one newline."""
    return (json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# LabelStudio export


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _percent(value, what: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise MalformedExportError(f"{what} is not a number: {value!r}") from None
    if not 0.0 <= v <= 100.0:
        raise PercentOutOfRangeError(f"{what} = {v} outside [0, 100]")
    return v


def _box_from_percent(value: dict, width: int, height: int) -> tuple[int, int, int, int]:
    x = _percent(value.get("x"), "rectangle x")
    y = _percent(value.get("y"), "rectangle y")
    w = _percent(value.get("width"), "rectangle width")
    h = _percent(value.get("height"), "rectangle height")
    if x + w > 100.0 + 1e-9 or y + h > 100.0 + 1e-9:
        raise PercentOutOfRangeError(f"rectangle extends past 100%: x+w={x + w}, y+h={y + h}")
    x0 = _round_half_up(x / 100.0 * width)
    y0 = _round_half_up(y / 100.0 * height)
    x1 = _round_half_up((x + w) / 100.0 * width)
    y1 = _round_half_up((y + h) / 100.0 * height)
    x0, x1 = max(0, x0), min(width, x1)
    y0, y1 = max(0, y0), min(height, y1)
    # sub-pixel boxes can collapse under rounding; keep a 1-px footprint
    if x1 <= x0:
        x1 = min(width, x0 + 1)
        x0 = x1 - 1
    if y1 <= y0:
        y1 = min(height, y0 + 1)
        y0 = y1 - 1
    return x0, y0, x1, y1


def _point_from_percent(value: dict, width: int, height: int) -> tuple[int, int]:
    x = _percent(value.get("x"), "keypoint x")
    y = _percent(value.get("y"), "keypoint y")
    px = min(_round_half_up(x / 100.0 * width), width - 1)
    py = min(_round_half_up(y / 100.0 * height), height - 1)
    return px, py


def _image_id_from_task(task: dict) -> str:
    data = task.get("data")
    if not isinstance(data, dict) or "image" not in data:
        raise MalformedExportError("task has no data.image field")
    name = str(data["image"]).replace("\\", "/").rsplit("/", 1)[-1]
    stem = name.rsplit(".", 1)[0] if "." in name else name
    if not stem:
        raise MalformedExportError(f"cannot derive image id from {data['image']!r}")
    return stem


def _hand_mask_from_result(result: dict) -> BinaryMask | None:
    payload = result.get("hand_mask")
    if payload is None:
        return None
    try:
        return rle_decode(payload["rle"], int(payload["width"]), int(payload["height"]))
    except (KeyError, TypeError) as exc:
        raise MalformedExportError(f"bad hand_mask payload: {exc}") from None


def parse_labelstudio_export(
    data: bytes, manifest: DatasetManifest, taxonomy: CategoryTaxonomy
) -> list[AnnotationRecord]:
    """Parse an annotation-level LabelStudio JSON export into records.

    Percent coordinates are converted with half-up rounding
    (px = floor(pct/100 * side + 0.5)) and clipped to the image bounds
    taken from the manifest.
    """
    try:
        tasks = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedExportError(f"export is not valid UTF-8 JSON: {exc}") from None
    if not isinstance(tasks, list):
        raise MalformedExportError("export root must be a list of tasks")

    records: list[AnnotationRecord] = []
    for task in tasks:
        if not isinstance(task, dict):
            raise MalformedExportError("task entries must be objects")
        image_id = _image_id_from_task(task)
        try:
            entry = manifest.get(image_id)
        except KeyError:
            raise MalformedExportError(f"image {image_id!r} not in manifest") from None
        for annotation in task.get("annotations", []):
            if not isinstance(annotation, dict):
                raise MalformedExportError(f"{image_id}: annotation entries must be objects")
            for result in annotation.get("result", []):
                record = _parse_result(result, image_id, entry, taxonomy)
                if record is not None:
                    records.append(record)
    return records


def _parse_result(
    result: dict, image_id: str, entry: ManifestEntry, taxonomy: CategoryTaxonomy
) -> AnnotationRecord | None:
    if not isinstance(result, dict):
        raise MalformedExportError(f"{image_id}: result entries must be objects")
    rtype = result.get("type")
    value = result.get("value")
    if rtype is None or not isinstance(value, dict):
        raise MalformedExportError(f"{image_id}: result misses type or value")
    if rtype == "rectanglelabels":
        labels = value.get("rectanglelabels")
        if not labels:
            raise MalformedExportError(f"{image_id}: rectangle without labels")
        category = taxonomy.by_name(labels[0])
        box = _box_from_percent(value, entry.width, entry.height)
        prompt = Prompt(kind="box", category_id=category.category_id, box=box)
        prompt.check_bounds(entry.width, entry.height)
        return AnnotationRecord(image_id, prompt, category.category_id, _hand_mask_from_result(result))
    if rtype == "keypointlabels":
        labels = value.get("keypointlabels")
        if not labels:
            raise MalformedExportError(f"{image_id}: keypoint without labels")
        category = taxonomy.by_name(labels[0])
        point = _point_from_percent(value, entry.width, entry.height)
        prompt = Prompt(kind="point", category_id=category.category_id, point=point)
        prompt.check_bounds(entry.width, entry.height)
        return AnnotationRecord(image_id, prompt, category.category_id, _hand_mask_from_result(result))
    # other result types (relations, choices, ...) carry no geometry
    return None


# ---------------------------------------------------------------------------
# Panoptic pair


def ids_to_rgb(raster: np.ndarray) -> np.ndarray:
    rgb = np.empty((*raster.shape, 3), dtype=np.uint8)
    rgb[..., 0] = raster & 0xFF
    rgb[..., 1] = (raster >> 8) & 0xFF
    rgb[..., 2] = (raster >> 16) & 0xFF
    return rgb


def rgb_to_ids(rgb: np.ndarray) -> np.ndarray:
    arr = rgb.astype(np.int64)
    return arr[..., 0] + 256 * arr[..., 1] + 65536 * arr[..., 2]


def write_panoptic(pmap: PanopticMap, image_id: str = "") -> tuple[bytes, bytes]:
    """Encode a map as a deterministic (png bytes, json bytes) pair."""
    for sid in pmap.segment_ids:
        if sid > MAX_SEGMENT_ID:
            raise IdOverflowError(f"segment id {sid} exceeds 24-bit RGB encoding")
    image = Image.fromarray(ids_to_rgb(pmap.id_raster), mode="RGB")
    buf = io.BytesIO()
    image.save(buf, format="PNG", optimize=False, compress_level=6)
    segments = []
    for sid, seg in pmap.segments.items():
        row: dict = {"id": sid, "category_id": seg.category_id, "area": seg.area}
        if seg.score is not None:
            row["score"] = seg.score
        segments.append(row)
    sidecar = {
        "image_id": image_id,
        "width": pmap.width,
        "height": pmap.height,
        "segments": segments,
    }
    return buf.getvalue(), canonical_json(sidecar)


def read_panoptic(png_bytes: bytes, json_bytes: bytes, taxonomy: CategoryTaxonomy) -> PanopticMap:
    """Decode a panoptic pair, checking id table and stored areas."""
    try:
        image = Image.open(io.BytesIO(png_bytes))
        image.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise BadPngError(f"cannot decode PNG: {exc}") from None
    if image.mode != "RGB":
        raise BadPngError(f"panoptic PNG must be 8-bit RGB, got mode {image.mode}")
    raster = rgb_to_ids(np.asarray(image))

    try:
        sidecar = json.loads(json_bytes.decode("utf-8"))
        width, height = int(sidecar["width"]), int(sidecar["height"])
        rows = sidecar["segments"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedExportError(f"bad panoptic sidecar JSON: {exc}") from None
    if (raster.shape[1], raster.shape[0]) != (width, height):
        raise DimensionMismatchError(
            f"PNG is {raster.shape[1]}x{raster.shape[0]} but sidecar says {width}x{height}"
        )

    table: dict[int, SegmentInfo] = {}
    for row in rows:
        try:
            seg = SegmentInfo(
                int(row["id"]), int(row["category_id"]), int(row["area"]),
                float(row["score"]) if "score" in row else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedExportError(f"bad segment row {row!r}: {exc}") from None
        table[seg.segment_id] = seg

    ids, counts = np.unique(raster, return_counts=True)
    counted = {int(i): int(c) for i, c in zip(ids, counts) if i != 0}
    missing = sorted(set(counted) - set(table))
    if missing:
        raise IdNotInTableError(f"raster ids missing from sidecar: {missing}")
    for sid, seg in table.items():
        actual = counted.get(sid, 0)
        if seg.area != actual:
            raise AreaMismatchError(
                f"segment {sid}: sidecar area {seg.area} != raster area {actual}"
            )
    pmap = PanopticMap(raster, table)
    pmap.validate_against(taxonomy)
    return pmap


# ---------------------------------------------------------------------------
# Taxonomy and manifest files


def taxonomy_to_json(taxonomy: CategoryTaxonomy) -> bytes:
    cats = [
        {
            "id": c.category_id,
            "name": c.name,
            "kind": c.kind,
            "role": c.role,
            "color": list(c.color),
        }
        for c in sorted(taxonomy.categories, key=lambda c: c.category_id)
    ]
    return canonical_json({"categories": cats})


def taxonomy_from_json(data: bytes) -> CategoryTaxonomy:
    try:
        payload = json.loads(data.decode("utf-8"))
        cats = tuple(
            Category(
                int(row["id"]), str(row["name"]), str(row["kind"]), str(row["role"]),
                tuple(int(v) for v in row["color"]),
            )
            for row in payload["categories"]
        )
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedExportError(f"bad taxonomy JSON: {exc}") from None
    return CategoryTaxonomy(cats)


def manifest_to_json(manifest: DatasetManifest) -> bytes:
    entries = [
        {
            "image_id": e.image_id,
            "image_path": e.image_path,
            "width": e.width,
            "height": e.height,
            "annotation_count": e.annotation_count,
        }
        for e in manifest.entries
    ]
    payload: dict = {"entries": entries}
    if manifest.taxonomy_path is not None:
        payload["taxonomy"] = manifest.taxonomy_path
    return canonical_json(payload)


def manifest_from_json(data: bytes) -> DatasetManifest:
    try:
        payload = json.loads(data.decode("utf-8"))
        entries = tuple(
            ManifestEntry(
                str(row["image_id"]), str(row["image_path"]),
                int(row["width"]), int(row["height"]),
                int(row.get("annotation_count", 0)),
            )
            for row in payload["entries"]
        )
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedExportError(f"bad manifest JSON: {exc}") from None
    return DatasetManifest(entries, payload.get("taxonomy"))


def mask_to_json_payload(mask: BinaryMask) -> dict:
    return {"width": mask.width, "height": mask.height, "rle": rle_encode(mask)}


# ---------------------------------------------------------------------------
# Rasterizing annotation records into a ground-truth panoptic map


def rasterize_annotations(
    records: list[AnnotationRecord],
    width: int,
    height: int,
    taxonomy: CategoryTaxonomy,
) -> PanopticMap:
    """Paint records into a panoptic map in file order (last writer wins).

    A record contributes its hand mask when present, otherwise its box
    fill. Point-only records have no raster extent and are skipped with a
    warning. Records of one stuff category share a single segment; every
    overwrite of already-painted pixels warns with both segment ids, and
    fully overwritten segments are dropped.
    """
    raster = np.zeros((height, width), dtype=np.int64)
    categories: dict[int, int] = {}
    stuff_segment: dict[int, int] = {}
    next_id = 0
    for index, record in enumerate(records):
        cat = taxonomy.get(record.category_id)
        if record.hand_mask is not None:
            if (record.hand_mask.width, record.hand_mask.height) != (width, height):
                raise DimensionMismatchError(
                    f"{record.image_id}: hand mask is "
                    f"{record.hand_mask.width}x{record.hand_mask.height}, image is {width}x{height}"
                )
            footprint = record.hand_mask.pixels
        elif record.prompt.kind == "box":
            x0, y0, x1, y1 = record.prompt.box
            footprint = np.zeros((height, width), dtype=bool)
            footprint[y0:y1, x0:x1] = True
        else:
            warnings.warn(
                f"{record.image_id}: record {index} is a point prompt without a mask; "
                "nothing to rasterize",
                UnpairedInputWarning,
                stacklevel=2,
            )
            continue

        if cat.kind == KIND_STUFF and record.category_id in stuff_segment:
            sid = stuff_segment[record.category_id]
        else:
            next_id += 1
            sid = next_id
            if cat.kind == KIND_STUFF:
                stuff_segment[record.category_id] = sid
            categories[sid] = record.category_id

        covered = raster[footprint]
        for other in np.unique(covered):
            if other != 0 and other != sid:
                warnings.warn(
                    f"{record.image_id}: segment {sid} overwrites pixels of segment {int(other)}",
                    SegmentOverwriteWarning,
                    stacklevel=2,
                )
        raster[footprint] = sid

    ids, counts = np.unique(raster, return_counts=True)
    areas = {int(i): int(c) for i, c in zip(ids, counts) if i != 0}
    segments = {}
    for sid, cat_id in categories.items():
        if sid not in areas:
            warnings.warn(
                f"segment {sid} was fully overwritten and dropped",
                SegmentOverwriteWarning,
                stacklevel=2,
            )
            continue
        segments[sid] = SegmentInfo(sid, cat_id, areas[sid])
    pmap = PanopticMap(raster, segments)
    pmap.validate_against(taxonomy)
    return pmap
