import json

import numpy as np
import pytest

from pangrade.errors import (
    AreaMismatchError,
    BadPngError,
    IdNotInTableError,
    IdOverflowError,
    MalformedExportError,
    PercentOutOfRangeError,
    SegmentOverwriteWarning,
    UnknownCategoryNameError,
    UnpairedInputWarning,
)
from pangrade.formats import (
    AnnotationRecord,
    DatasetManifest,
    ManifestEntry,
    manifest_from_json,
    manifest_to_json,
    mask_to_json_payload,
    parse_labelstudio_export,
    rasterize_annotations,
    read_panoptic,
    rgb_to_ids,
    taxonomy_from_json,
    taxonomy_to_json,
    write_panoptic,
)
from pangrade.masks import BinaryMask, rle_encode
from pangrade.panoptic import PanopticMap, Prompt, SegmentInfo
from pangrade.taxonomy import banana_taxonomy

from support import map_from_raster, random_panoptic_map

TAX4 = banana_taxonomy("four")
TAX1 = banana_taxonomy("single")


def export_bytes(tasks) -> bytes:
    return json.dumps(tasks).encode("utf-8")


def rect_task(image, x, y, w, h, label, **extra):
    result = {"type": "rectanglelabels", "value": {"x": x, "y": y, "width": w, "height": h, "rectanglelabels": [label]}}
    result.update(extra)
    return {"data": {"image": image}, "annotations": [{"result": [result]}]}


MANIFEST = DatasetManifest(
    (
        ManifestEntry("img_a", "images/img_a.jpg", 400, 300, 1),
        ManifestEntry("img_b", "images/img_b.jpg", 640, 480, 0),
    )
)


class TestLabelStudioParse:
    def test_percent_to_pixel(self):
        data = export_bytes([rect_task("/upload/img_a.jpg", 25, 10, 50, 40, "New Scar")])
        (record,) = parse_labelstudio_export(data, MANIFEST, TAX4)
        assert record.prompt.box == (100, 30, 300, 150)
        assert record.prompt.box[0] == 100 and record.prompt.box[2] == 300

    def test_empty_results(self):
        data = export_bytes([{"data": {"image": "img_a.jpg"}, "annotations": [{"result": []}]}])
        assert parse_labelstudio_export(data, MANIFEST, TAX4) == []

    def test_category_name_lookup(self):
        data = export_bytes([rect_task("img_a.jpg", 0, 0, 10, 10, "New Scar")])
        (record,) = parse_labelstudio_export(data, MANIFEST, TAX4)
        assert record.category_id == TAX4.by_name("New Scar").category_id == 7

    def test_keypoint(self):
        task = {
            "data": {"image": "img_b.png"},
            "annotations": [
                {
                    "result": [
                        {
                            "type": "keypointlabels",
                            "value": {"x": 50.0, "y": 50.0, "keypointlabels": ["Foreground Banana"]},
                        }
                    ]
                }
            ],
        }
        (record,) = parse_labelstudio_export(export_bytes([task]), MANIFEST, TAX4)
        assert record.prompt.kind == "point"
        assert record.prompt.point == (320, 240)

    def test_hand_mask_round_trip(self):
        mask = BinaryMask(np.eye(300, 400, dtype=bool))
        data = export_bytes(
            [rect_task("img_a.jpg", 0, 0, 50, 50, "Old Scar", hand_mask=mask_to_json_payload(mask))]
        )
        (record,) = parse_labelstudio_export(data, MANIFEST, TAX4)
        assert record.hand_mask == mask

    def test_unknown_name(self):
        data = export_bytes([rect_task("img_a.jpg", 0, 0, 1, 1, "Sunburn")])
        with pytest.raises(UnknownCategoryNameError):
            parse_labelstudio_export(data, MANIFEST, TAX4)

    def test_percent_out_of_range(self):
        data = export_bytes([rect_task("img_a.jpg", 90, 0, 20, 10, "New Scar")])
        with pytest.raises(PercentOutOfRangeError):
            parse_labelstudio_export(data, MANIFEST, TAX4)
        data = export_bytes([rect_task("img_a.jpg", -5, 0, 20, 10, "New Scar")])
        with pytest.raises(PercentOutOfRangeError):
            parse_labelstudio_export(data, MANIFEST, TAX4)

    def test_missing_fields(self):
        with pytest.raises(MalformedExportError):
            parse_labelstudio_export(b"{not json", MANIFEST, TAX4)
        with pytest.raises(MalformedExportError):
            parse_labelstudio_export(export_bytes([{"annotations": []}]), MANIFEST, TAX4)
        with pytest.raises(MalformedExportError):
            parse_labelstudio_export(
                export_bytes([rect_task("unknown.jpg", 0, 0, 1, 1, "New Scar")]), MANIFEST, TAX4
            )

    @pytest.mark.parametrize("seed", range(10))
    def test_boxes_always_inside_bounds(self, seed):
        rng = np.random.default_rng(seed)
        tasks = []
        for _ in range(20):
            x = float(rng.uniform(0, 100))
            y = float(rng.uniform(0, 100))
            w = float(rng.uniform(0, 100 - x))
            h = float(rng.uniform(0, 100 - y))
            tasks.append(rect_task("img_a.jpg", x, y, w, h, "New Scar"))
        records = parse_labelstudio_export(export_bytes(tasks), MANIFEST, TAX4)
        assert len(records) == 20
        for record in records:
            x0, y0, x1, y1 = record.prompt.box
            assert 0 <= x0 < x1 <= 400
            assert 0 <= y0 < y1 <= 300


class TestPanopticPair:
    def test_void_only_map(self):
        png, sidecar = write_panoptic(PanopticMap.empty(4, 3), "empty")
        payload = json.loads(sidecar)
        assert payload["segments"] == []
        back = read_panoptic(png, sidecar, TAX1)
        assert back == PanopticMap.empty(4, 3)

    def test_rgb_id_decoding(self):
        rgb = np.array([[[44, 1, 0]]], dtype=np.uint8)
        assert rgb_to_ids(rgb)[0, 0] == 300

    def test_segments_sorted_by_id(self):
        pmap = map_from_raster([[2, 1]], {1: 4, 2: 4})
        _, sidecar = write_panoptic(pmap, "x")
        payload = json.loads(sidecar)
        assert [row["id"] for row in payload["segments"]] == [1, 2]

    def test_round_trip_preserves_scores(self):
        pmap = map_from_raster([[1, 2, 0]], {1: 4, 2: 2}, scores={1: 0.625})
        png, sidecar = write_panoptic(pmap, "img")
        back = read_panoptic(png, sidecar, TAX1)
        assert back == pmap
        assert back.segment(1).score == 0.625
        assert back.segment(2).score is None

    def test_deterministic_bytes(self):
        rng = np.random.default_rng(0)
        pmap = random_panoptic_map(rng, TAX1, size=32, with_scores=True)
        assert write_panoptic(pmap, "a") == write_panoptic(pmap, "a")

    def test_large_ids_survive(self):
        raster = np.array([[300, 0], [70000, 70000]], dtype=np.int64)
        pmap = map_from_raster(raster, {300: 4, 70000: 4})
        png, sidecar = write_panoptic(pmap, "big")
        assert read_panoptic(png, sidecar, TAX1) == pmap

    def test_id_overflow(self):
        raster = np.array([[2**24, 0]], dtype=np.int64)
        pmap = map_from_raster(raster, {2**24: 4})
        with pytest.raises(IdOverflowError):
            write_panoptic(pmap, "too-big")

    def test_id_not_in_table(self):
        pmap = map_from_raster([[1, 1]], {1: 4})
        png, sidecar = write_panoptic(pmap, "x")
        broken = json.loads(sidecar)
        broken["segments"] = []
        with pytest.raises(IdNotInTableError):
            read_panoptic(png, json.dumps(broken).encode(), TAX1)

    def test_area_mismatch(self):
        pmap = map_from_raster([[1, 1]], {1: 4})
        png, sidecar = write_panoptic(pmap, "x")
        broken = json.loads(sidecar)
        broken["segments"][0]["area"] = 5
        with pytest.raises(AreaMismatchError):
            read_panoptic(png, json.dumps(broken).encode(), TAX1)

    def test_bad_png(self):
        with pytest.raises(BadPngError):
            read_panoptic(b"not a png", b"{}", TAX1)

    @pytest.mark.parametrize("seed", range(8))
    def test_random_round_trips(self, seed):
        rng = np.random.default_rng(seed)
        pmap = random_panoptic_map(rng, TAX1, size=40, with_scores=seed % 2 == 0)
        png, sidecar = write_panoptic(pmap, f"r{seed}")
        assert read_panoptic(png, sidecar, TAX1) == pmap


class TestTaxonomyManifestFiles:
    def test_taxonomy_round_trip(self):
        data = taxonomy_to_json(TAX4)
        assert taxonomy_from_json(data) == TAX4

    def test_manifest_round_trip(self):
        manifest = DatasetManifest(MANIFEST.entries, taxonomy_path="taxonomy.json")
        data = manifest_to_json(manifest)
        assert manifest_from_json(data) == manifest

    def test_bad_taxonomy_json(self):
        with pytest.raises(MalformedExportError):
            taxonomy_from_json(b'{"categories": [{"id": "x"}]}')


class TestRasterize:
    def test_boxes_and_masks(self):
        records = [
            AnnotationRecord("img", Prompt("box", 4, box=(0, 0, 2, 2)), 4),
            AnnotationRecord("img", Prompt("box", 4, box=(4, 4, 6, 6)), 4),
        ]
        pmap = rasterize_annotations(records, 8, 8, TAX1)
        assert len(pmap.segments) == 2
        assert pmap.segment(1).area == 4 and pmap.segment(2).area == 4

    def test_overwrite_warns(self):
        records = [
            AnnotationRecord("img", Prompt("box", 4, box=(0, 0, 4, 4)), 4),
            AnnotationRecord("img", Prompt("box", 4, box=(2, 2, 6, 6)), 4),
        ]
        with pytest.warns(SegmentOverwriteWarning):
            pmap = rasterize_annotations(records, 8, 8, TAX1)
        assert pmap.segment(1).area == 12  # lost the 2x2 overlap
        assert pmap.segment(2).area == 16

    def test_stuff_records_share_a_segment(self):
        fg = TAX1.fruit_foreground_id
        records = [
            AnnotationRecord("img", Prompt("box", fg, box=(0, 0, 2, 2)), fg),
            AnnotationRecord("img", Prompt("box", fg, box=(4, 0, 6, 2)), fg),
        ]
        pmap = rasterize_annotations(records, 8, 8, TAX1)
        assert len(pmap.segments) == 1
        assert pmap.segment(1).area == 8

    def test_point_records_skipped(self):
        records = [AnnotationRecord("img", Prompt("point", 2, point=(1, 1)), 2)]
        with pytest.warns(UnpairedInputWarning):
            pmap = rasterize_annotations(records, 4, 4, TAX1)
        assert pmap.segments == {}
