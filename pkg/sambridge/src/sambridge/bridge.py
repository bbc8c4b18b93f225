"""Turn coarse prompts into panoptic maps via a promptable predictor.

Images are resized and padded to the configured square side before
prompting; prompts are transformed with the same geometry and predicted
masks are mapped back to native resolution. Prompts rasterize in order
(later prompts overwrite earlier pixels, each overwrite warns); prompts
of one stuff category share a single output segment.
"""

from __future__ import annotations

import warnings

import numpy as np
from PIL import Image

from pangrade.errors import SegmentOverwriteWarning, ValidationError
from pangrade.geometry import pad_transform
from pangrade.masks import BinaryMask
from pangrade.panoptic import PanopticMap, Prompt, SegmentInfo
from pangrade.taxonomy import KIND_STUFF, CategoryTaxonomy

from .config import BridgeConfig
from .predictors import PromptablePredictor


class PromptOutOfBoundsError(ValidationError):
    """A prompt lies outside its image."""


def _padded_image(image_rgb: np.ndarray, side: int) -> tuple[np.ndarray, "pad_transform"]:
    h, w = image_rgb.shape[:2]
    tf = pad_transform(w, h, side)
    resized = Image.fromarray(image_rgb, "RGB").resize(
        (tf.content_width, tf.content_height), resample=Image.BILINEAR
    )
    out = np.zeros((side, side, 3), dtype=np.uint8)
    out[
        tf.y_offset : tf.y_offset + tf.content_height,
        tf.x_offset : tf.x_offset + tf.content_width,
    ] = np.asarray(resized)
    return out, tf


def predict_prompt_masks(
    image_rgb: np.ndarray,
    prompts: list[Prompt],
    config: BridgeConfig,
    predictor: PromptablePredictor,
) -> list[BinaryMask]:
    """One native-resolution mask per prompt, best candidate by quality.

    Boxes go through box mode, points through point mode, mirroring how
    defects get boxes and fruits get reference points.
    """
    h, w = image_rgb.shape[:2]
    for i, prompt in enumerate(prompts):
        try:
            prompt.check_bounds(w, h)
        except ValidationError as exc:
            raise PromptOutOfBoundsError(f"prompt {i}: {exc}") from None
    padded, tf = _padded_image(image_rgb, config.image_side)
    predictor.set_image(padded)
    masks = []
    for prompt in prompts:
        if prompt.kind == "box":
            candidates = predictor.predict_box(tf.apply_box(prompt.box), config.multimask)
        else:
            candidates = predictor.predict_point(tf.apply_point(*prompt.point), config.multimask)
        best = max(candidates, key=lambda c: c.quality)
        masks.append((BinaryMask(tf.pull_mask(best.mask)), best.quality))
    return masks


def generate_masks(
    image_rgb: np.ndarray,
    prompts: list[Prompt],
    taxonomy: CategoryTaxonomy,
    config: BridgeConfig,
    predictor: PromptablePredictor,
) -> PanopticMap:
    """Rasterize per-prompt masks into a panoptic map in prompt order."""
    h, w = image_rgb.shape[:2]
    if not prompts:
        return PanopticMap.empty(w, h)
    predicted = predict_prompt_masks(image_rgb, prompts, config, predictor)
    raster = np.zeros((h, w), dtype=np.int64)
    categories: dict[int, int] = {}
    qualities: dict[int, list[float]] = {}
    stuff_segment: dict[int, int] = {}
    next_id = 0
    for index, (prompt, (mask, quality)) in enumerate(zip(prompts, predicted)):
        cat = taxonomy.get(prompt.category_id)
        if cat.kind == KIND_STUFF and prompt.category_id in stuff_segment:
            sid = stuff_segment[prompt.category_id]
        else:
            next_id += 1
            sid = next_id
            if cat.kind == KIND_STUFF:
                stuff_segment[prompt.category_id] = sid
            categories[sid] = prompt.category_id
        footprint = mask.pixels
        covered = raster[footprint]
        for other in np.unique(covered):
            if other != 0 and other != sid:
                warnings.warn(
                    f"prompt {index}: segment {sid} overwrites pixels of segment {int(other)}",
                    SegmentOverwriteWarning,
                    stacklevel=2,
                )
        raster[footprint] = sid
        qualities.setdefault(sid, []).append(float(np.clip(quality, 0.0, 1.0)))

    ids, counts = np.unique(raster, return_counts=True)
    areas = {int(i): int(c) for i, c in zip(ids, counts) if i != 0}
    segments = {}
    for sid, category_id in categories.items():
        if sid not in areas:
            warnings.warn(
                f"segment {sid} was fully overwritten or empty and was dropped",
                SegmentOverwriteWarning,
                stacklevel=2,
            )
            continue
        score = min(qualities[sid])  # merged stuff keeps its weakest prompt score
        segments[sid] = SegmentInfo(sid, category_id, areas[sid], score)
    pmap = PanopticMap(raster, segments)
    pmap.validate_against(taxonomy)
    return pmap


def compare_backbones(
    image_rgb: np.ndarray,
    prompts: list[Prompt],
    annotated_masks: list[BinaryMask],
    config: BridgeConfig,
    predictor_factory,
    backbones: tuple[str, ...],
) -> dict[str, list[tuple[BinaryMask, BinaryMask]]]:
    """Per-backbone (annotated, generated) mask pairs for one image.

    The pairs feed the primary toolkit's mask-agreement analysis; one row
    per prompt per backbone, compared before any rasterization so prompts
    never steal pixels from each other.
    """
    if len(annotated_masks) != len(prompts):
        raise ValidationError(
            f"{len(prompts)} prompts but {len(annotated_masks)} annotated masks"
        )
    out: dict[str, list[tuple[BinaryMask, BinaryMask]]] = {}
    for backbone in backbones:
        run_config = BridgeConfig(
            backbone=backbone,
            image_side=config.image_side,
            device=config.device,
            multimask=config.multimask,
        )
        predictor = predictor_factory(run_config)
        predicted = predict_prompt_masks(image_rgb, prompts, run_config, predictor)
        out[backbone] = [
            (annotated, generated) for annotated, (generated, _) in zip(annotated_masks, predicted)
        ]
    return out
