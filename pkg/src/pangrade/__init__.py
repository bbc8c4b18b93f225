"""Panoptic mask postprocessing, segmentation metrics, and defect grading."""

from .errors import PangradeError, PangradeWarning
from .formats import (
    AnnotationRecord,
    DatasetManifest,
    ManifestEntry,
    canonical_json,
    manifest_from_json,
    manifest_to_json,
    parse_labelstudio_export,
    rasterize_annotations,
    read_panoptic,
    taxonomy_from_json,
    taxonomy_to_json,
    write_panoptic,
)
from .geometry import PadTransform, pad_transform, resize_pad, resize_pad_map, resize_pad_mask
from .grading import (
    CountAgreement,
    GradeRecord,
    MaskAgreement,
    SizeAgreement,
    count_agreement,
    grade,
    mask_agreement_by_size,
    size_agreement,
)
from .crossval import AggregateReport, SplitSpec, aggregate, kfold_split
from .masks import BinaryMask, iou, rle_decode, rle_encode
from .metrics import (
    EvaluationReport,
    MetricConfig,
    average_precision,
    average_recall,
    evaluate_dataset,
    evaluate_image,
    match_greedy_by_iou,
    panoptic_quality,
    semantic_iou,
)
from .panoptic import PanopticMap, Prompt, SegmentInfo, extract_instances, to_semantic
from .postprocess import (
    PostprocessConfig,
    connected_components,
    dilate,
    flatten_category,
    postprocess_instances,
)
from .taxonomy import Category, CategoryTaxonomy, banana_taxonomy

__version__ = "0.1.0"

__all__ = [
    "AggregateReport",
    "AnnotationRecord",
    "BinaryMask",
    "Category",
    "CategoryTaxonomy",
    "CountAgreement",
    "DatasetManifest",
    "EvaluationReport",
    "GradeRecord",
    "ManifestEntry",
    "MaskAgreement",
    "MetricConfig",
    "PadTransform",
    "PangradeError",
    "PangradeWarning",
    "PanopticMap",
    "PostprocessConfig",
    "Prompt",
    "SegmentInfo",
    "SizeAgreement",
    "SplitSpec",
    "aggregate",
    "average_precision",
    "average_recall",
    "banana_taxonomy",
    "canonical_json",
    "connected_components",
    "count_agreement",
    "dilate",
    "evaluate_dataset",
    "evaluate_image",
    "extract_instances",
    "flatten_category",
    "grade",
    "iou",
    "kfold_split",
    "manifest_from_json",
    "manifest_to_json",
    "mask_agreement_by_size",
    "match_greedy_by_iou",
    "pad_transform",
    "panoptic_quality",
    "parse_labelstudio_export",
    "postprocess_instances",
    "rasterize_annotations",
    "read_panoptic",
    "resize_pad",
    "resize_pad_map",
    "resize_pad_mask",
    "rle_decode",
    "rle_encode",
    "semantic_iou",
    "size_agreement",
    "taxonomy_from_json",
    "taxonomy_to_json",
    "to_semantic",
    "write_panoptic",
]
