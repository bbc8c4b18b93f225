"""Synthetic fixture dataset: fruit-with-defects maps, coarse annotations,
and perturbed predictions.

Writes a self-contained directory:

    taxonomy.json   manifest.json   export.json
    images/<id>.png         rendered flat-color photos
    gt/<id>.{png,json}      ground-truth panoptic pairs
    pred/<id>.{png,json}    perturbed, scored prediction pairs

The export carries one record per ground-truth segment with an exact
hand mask, so `ingest --rasterize` reproduces the gt/ pairs byte for
byte. Everything is a pure function of (n_images, seed, size).
"""

from __future__ import annotations

import argparse
import io
from pathlib import Path

import numpy as np
from PIL import Image

from .formats import (
    DatasetManifest,
    ManifestEntry,
    manifest_to_json,
    mask_to_json_payload,
    taxonomy_to_json,
    write_panoptic,
)
from .masks import BinaryMask
from .panoptic import PanopticMap, SegmentInfo, to_semantic
from .taxonomy import CategoryTaxonomy, banana_taxonomy


def _ellipse(size: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    return ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0


def _gt_raster(rng: np.random.Generator, size: int) -> tuple[np.ndarray, dict[int, int]]:
    """Raster plus {segment_id: category_id}; ids in paint order."""
    raster = np.zeros((size, size), dtype=np.int64)
    margin = 2  # keep a true-void border
    interior = np.zeros_like(raster, dtype=bool)
    interior[margin : size - margin, margin : size - margin] = True

    fruit = _ellipse(
        size,
        cy=size * rng.uniform(0.42, 0.58),
        cx=size * rng.uniform(0.42, 0.58),
        ry=size * rng.uniform(0.26, 0.34),
        rx=size * rng.uniform(0.30, 0.40),
    ) & interior

    background_banana = None
    if rng.random() < 0.6:
        background_banana = (
            _ellipse(
                size,
                cy=size * rng.uniform(0.1, 0.25),
                cx=size * rng.uniform(0.2, 0.8),
                ry=size * 0.12,
                rx=size * 0.2,
            )
            & interior
            & ~fruit
        )
        if background_banana.sum() < 20:
            background_banana = None

    defects = []
    n_defects = int(rng.integers(1, 5))
    for _ in range(n_defects):
        for _attempt in range(20):
            ry = rng.uniform(2.0, size * 0.06)
            rx = rng.uniform(2.0, size * 0.06)
            cy = rng.uniform(0, size)
            cx = rng.uniform(0, size)
            blob = _ellipse(size, cy, cx, ry, rx) & fruit
            for existing in defects:
                blob &= ~existing
            if blob.sum() >= 6:
                defects.append(blob)
                break

    categories: dict[int, int] = {}
    sid = 0

    def paint(mask: np.ndarray, category_id: int) -> None:
        nonlocal sid
        sid += 1
        raster[mask] = sid
        categories[sid] = category_id

    scene = interior & ~fruit
    if background_banana is not None:
        scene &= ~background_banana
    paint(scene, 1)  # explicit Background stuff segment
    paint(fruit & ~np.any(defects, axis=0) if defects else fruit, 2)
    if background_banana is not None:
        paint(background_banana, 3)
    for blob in defects:
        paint(blob, 4)
    return raster, categories


def _perturbed(
    rng: np.random.Generator, raster: np.ndarray, categories: dict[int, int], size: int
) -> tuple[np.ndarray, dict[int, int], dict[int, float]]:
    pred = np.zeros_like(raster)
    pred_categories: dict[int, int] = {}
    scores: dict[int, float] = {}
    sid = 0
    for old_sid in sorted(categories):
        category_id = categories[old_sid]
        mask = raster == old_sid
        if category_id == 4 and rng.random() < 0.12:
            continue  # missed defect
        dy = int(rng.integers(-3, 4)) if category_id == 4 else int(rng.integers(-1, 2))
        dx = int(rng.integers(-3, 4)) if category_id == 4 else int(rng.integers(-1, 2))
        ys, xs = np.nonzero(mask)
        ys2, xs2 = ys + dy, xs + dx
        keep = (ys2 >= 0) & (ys2 < size) & (xs2 >= 0) & (xs2 < size)
        if not keep.any():
            continue
        sid += 1
        pred[ys2[keep], xs2[keep]] = sid
        pred_categories[sid] = category_id
        if category_id == 4:
            scores[sid] = round(float(rng.uniform(0.4, 0.99)), 6)
    if rng.random() < 0.3:
        sid += 1
        cy, cx = rng.uniform(0, size), rng.uniform(0, size)
        blob = _ellipse(size, cy, cx, rng.uniform(1.5, 3.5), rng.uniform(1.5, 3.5))
        blob[pred != 0] = False
        if blob.sum() >= 3:
            pred[blob] = sid
            pred_categories[sid] = 4  # spurious defect
            scores[sid] = round(float(rng.uniform(0.3, 0.7)), 6)
    present = {int(i) for i in np.unique(pred) if i != 0}
    return (
        pred,
        {k: v for k, v in pred_categories.items() if k in present},
        {k: v for k, v in scores.items() if k in present},
    )


def _build_map(raster, categories, scores=None) -> PanopticMap:
    scores = scores or {}
    ids, counts = np.unique(raster, return_counts=True)
    segments = {
        int(i): SegmentInfo(int(i), categories[int(i)], int(c), scores.get(int(i)))
        for i, c in zip(ids, counts)
        if i != 0
    }
    return PanopticMap(raster, segments)


def _render_image(pmap: PanopticMap, taxonomy: CategoryTaxonomy) -> bytes:
    sem = to_semantic(pmap, taxonomy)
    rgb = np.zeros((*sem.shape, 3), dtype=np.uint8)
    for cat in taxonomy.categories:
        rgb[sem == cat.category_id] = cat.color
    rgb[pmap.id_raster == 0] = (0, 0, 0)
    buf = io.BytesIO()
    Image.fromarray(rgb, "RGB").save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def _export_tasks(
    image_id: str, pmap: PanopticMap, taxonomy: CategoryTaxonomy, size: int
) -> dict:
    results = []
    for sid in pmap.segment_ids:
        seg = pmap.segment(sid)
        mask = pmap.mask_of(sid)
        name = taxonomy.get(seg.category_id).name
        ys, xs = np.nonzero(mask.pixels)
        if taxonomy.get(seg.category_id).kind == "thing":
            x0, x1 = int(xs.min()), int(xs.max()) + 1
            y0, y1 = int(ys.min()), int(ys.max()) + 1
            results.append(
                {
                    "type": "rectanglelabels",
                    "value": {
                        "x": x0 / size * 100,
                        "y": y0 / size * 100,
                        "width": (x1 - x0) / size * 100,
                        "height": (y1 - y0) / size * 100,
                        "rectanglelabels": [name],
                    },
                    "hand_mask": mask_to_json_payload(mask),
                }
            )
        else:
            # the segment pixel nearest its centroid: always on the object,
            # even for ring-shaped background regions
            d2 = (ys - ys.mean()) ** 2 + (xs - xs.mean()) ** 2
            py, px = int(ys[d2.argmin()]), int(xs[d2.argmin()])
            results.append(
                {
                    "type": "keypointlabels",
                    "value": {"x": px / size * 100, "y": py / size * 100, "keypointlabels": [name]},
                    "hand_mask": mask_to_json_payload(mask),
                }
            )
    return {
        "data": {"image": f"images/{image_id}.png"},
        "annotations": [{"result": results}],
    }


def make_synthetic_dataset(
    out_dir: str | Path, n_images: int = 12, seed: int = 7, size: int = 96
) -> Path:
    """Write the fixture dataset; returns the output directory path."""
    import json

    out = Path(out_dir)
    taxonomy = banana_taxonomy("single")
    for sub in ("images", "gt", "pred"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    entries = []
    tasks = []
    rng = np.random.default_rng(seed)
    for i in range(n_images):
        image_id = f"img_{i:03d}"
        raster, categories = _gt_raster(rng, size)
        gt_map = _build_map(raster, categories)
        pred_raster, pred_categories, scores = _perturbed(rng, raster, categories, size)
        pred_map = _build_map(pred_raster, pred_categories, scores)

        (out / "images" / f"{image_id}.png").write_bytes(_render_image(gt_map, taxonomy))
        for name, pmap in (("gt", gt_map), ("pred", pred_map)):
            png, sidecar = write_panoptic(pmap, image_id)
            (out / name / f"{image_id}.png").write_bytes(png)
            (out / name / f"{image_id}.json").write_bytes(sidecar)
        tasks.append(_export_tasks(image_id, gt_map, taxonomy, size))
        entries.append(
            ManifestEntry(
                image_id, f"images/{image_id}.png", size, size,
                annotation_count=len(gt_map.segments),
            )
        )

    (out / "taxonomy.json").write_bytes(taxonomy_to_json(taxonomy))
    manifest = DatasetManifest(tuple(entries), taxonomy_path="taxonomy.json")
    (out / "manifest.json").write_bytes(manifest_to_json(manifest))
    (out / "export.json").write_text(json.dumps(tasks, indent=2) + "\n", encoding="utf-8")
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Write a synthetic fixture dataset.")
    parser.add_argument("out_dir")
    parser.add_argument("--images", type=int, default=12)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--size", type=int, default=96)
    args = parser.parse_args(argv)
    path = make_synthetic_dataset(args.out_dir, args.images, args.seed, args.size)
    print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
