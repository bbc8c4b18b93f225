"""Promptable mask predictors.

Two backends share one interface: an adapter around the segment-anything
package (needs torch plus a user-supplied checkpoint), and a dependency-free
contrast-threshold predictor used for tests, fixtures, and offline runs.
Candidate quality scores always lie in [0, 1]; callers keep the best one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from pangrade.masks import BinaryMask
from pangrade.postprocess import connected_components

from .config import SAM_MODEL_TYPES, BridgeConfig


class ModelLoadFailureError(RuntimeError):
    """The requested segmentation backend could not be initialized."""


@dataclass(frozen=True)
class MaskCandidate:
    mask: np.ndarray  # bool, same resolution as the image given to set_image
    quality: float


class PromptablePredictor(Protocol):
    def set_image(self, image_rgb: np.ndarray) -> None: ...

    def predict_box(self, box: tuple[int, int, int, int], multimask: bool) -> list[MaskCandidate]: ...

    def predict_point(self, point: tuple[int, int], multimask: bool) -> list[MaskCandidate]: ...


# ---------------------------------------------------------------------------
# Classical fallback backend


def _grayscale(image_rgb: np.ndarray) -> np.ndarray:
    rgb = image_rgb.astype(np.float64) / 255.0
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def _otsu_threshold(values: np.ndarray) -> tuple[float, float]:
    """Threshold plus separability (between-class over total variance)."""
    total_var = float(values.var())
    if total_var == 0.0:
        return float(values.mean()), 0.0
    hist, edges = np.histogram(values, bins=64, range=(0.0, 1.0))
    centers = (edges[:-1] + edges[1:]) / 2
    weights = hist / hist.sum()
    best_t, best_between = centers[0], -1.0
    for i in range(1, len(centers)):
        w0 = weights[:i].sum()
        w1 = 1.0 - w0
        if w0 == 0.0 or w1 == 0.0:
            continue
        mu0 = (weights[:i] * centers[:i]).sum() / w0
        mu1 = (weights[i:] * centers[i:]).sum() / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
        if between > best_between:
            best_between, best_t = between, centers[i]
    separability = min(1.0, best_between / total_var)
    return float(best_t), float(separability)


def _components(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components, largest first (ties: scan order)."""
    comps = connected_components(BinaryMask(mask), connectivity=8)
    ordered = sorted(enumerate(comps), key=lambda item: (-item[1].area, item[0]))
    return [c.pixels for _, c in ordered]


def _jaccard(a: np.ndarray, b: np.ndarray) -> float:
    union = int((a | b).sum())
    return int((a & b).sum()) / union if union else 1.0


class ThresholdPredictor:
    """Contrast-threshold segmentation for high-contrast imagery.

    Box prompts: Otsu-split the box interior and keep the side whose mean
    intensity differs most from the surrounding ring. Point prompts: flood
    fill by intensity tolerance around the seed. Deterministic throughout.
    """

    def __init__(self, config: BridgeConfig | None = None):
        self.config = config or BridgeConfig()
        self._gray: np.ndarray | None = None

    def set_image(self, image_rgb: np.ndarray) -> None:
        if image_rgb.ndim != 3 or image_rgb.shape[2] != 3:
            raise ValueError(f"expected HxWx3 RGB image, got shape {image_rgb.shape}")
        self._gray = _grayscale(image_rgb)

    def _require_image(self) -> np.ndarray:
        if self._gray is None:
            raise ModelLoadFailureError("set_image was not called")
        return self._gray

    def predict_box(self, box: tuple[int, int, int, int], multimask: bool = True) -> list[MaskCandidate]:
        gray = self._require_image()
        h, w = gray.shape
        x0, y0, x1, y1 = box
        margin = max(2, (x1 - x0 + y1 - y0) // 20)
        wx0, wy0 = max(0, x0 - margin), max(0, y0 - margin)
        wx1, wy1 = min(w, x1 + margin), min(h, y1 + margin)
        inside = np.zeros_like(gray, dtype=bool)
        inside[y0:y1, x0:x1] = True
        ring = np.zeros_like(gray, dtype=bool)
        ring[wy0:wy1, wx0:wx1] = True
        ring &= ~inside

        values = gray[inside]
        threshold, separability = _otsu_threshold(values)
        low = inside & (gray <= threshold)
        high = inside & (gray > threshold)
        if ring.any():
            ring_mean = float(gray[ring].mean())
        else:
            ring_mean = float(values.mean())

        def side_contrast(side: np.ndarray) -> float:
            return abs(float(gray[side].mean()) - ring_mean) if side.any() else -1.0

        foreground = low if side_contrast(low) >= side_contrast(high) else high
        if not foreground.any():
            foreground = inside
        comps = _components(foreground)
        largest = comps[0]

        padded = np.zeros((h + 2, w + 2), dtype=bool)
        padded[1:-1, 1:-1] = largest
        fattened = (
            padded[:-2, 1:-1] | padded[2:, 1:-1] | padded[1:-1, :-2]
            | padded[1:-1, 2:] | padded[1:-1, 1:-1]
        )
        fattened &= inside | ring

        candidates = [largest, foreground, fattened]
        if not multimask:
            candidates = candidates[:1]
        return [
            MaskCandidate(mask=c.copy(), quality=separability * _jaccard(c, foreground))
            for c in candidates
        ]

    def predict_point(self, point: tuple[int, int], multimask: bool = True) -> list[MaskCandidate]:
        gray = self._require_image()
        x, y = point
        seed_value = gray[y, x]
        tolerances = (4 / 255, 12 / 255, 24 / 255) if multimask else (12 / 255,)
        out = []
        for tol in tolerances:
            similar = np.abs(gray - seed_value) <= tol
            component = next(c for c in _components(similar) if c[y, x])
            padded = np.zeros((gray.shape[0] + 2, gray.shape[1] + 2), dtype=bool)
            padded[1:-1, 1:-1] = component
            ring = (
                padded[:-2, 1:-1] | padded[2:, 1:-1] | padded[1:-1, :-2] | padded[1:-1, 2:]
            ) & ~component
            if ring.any():
                contrast = float(np.abs(gray[ring] - seed_value).mean())
            else:
                contrast = 0.0  # component fills the image; nothing to contrast
            quality = min(1.0, contrast * 4.0)
            out.append(MaskCandidate(mask=component, quality=quality))
        return out


# ---------------------------------------------------------------------------
# segment-anything adapter


class SamPredictorAdapter:
    """Thin wrapper around segment_anything.SamPredictor.

    Requires the optional `sam` extra and a checkpoint file matching the
    configured backbone.
    """

    def __init__(self, config: BridgeConfig, checkpoint: str):
        try:
            from segment_anything import SamPredictor, sam_model_registry
        except ImportError as exc:
            raise ModelLoadFailureError(
                "segment-anything is not installed (pip install 'sambridge[sam]')"
            ) from exc
        model_type = SAM_MODEL_TYPES[config.backbone]
        try:
            sam = sam_model_registry[model_type](checkpoint=checkpoint)
        except (OSError, RuntimeError, KeyError) as exc:
            raise ModelLoadFailureError(f"cannot load {model_type} checkpoint: {exc}") from exc
        sam.to(config.device)
        self._predictor = SamPredictor(sam)

    def set_image(self, image_rgb: np.ndarray) -> None:
        self._predictor.set_image(image_rgb)

    def predict_box(self, box, multimask: bool = True) -> list[MaskCandidate]:
        masks, scores, _ = self._predictor.predict(
            box=np.asarray(box, dtype=np.float64), multimask_output=multimask
        )
        return [
            MaskCandidate(mask=m.astype(bool), quality=float(np.clip(s, 0.0, 1.0)))
            for m, s in zip(masks, scores)
        ]

    def predict_point(self, point, multimask: bool = True) -> list[MaskCandidate]:
        masks, scores, _ = self._predictor.predict(
            point_coords=np.asarray([point], dtype=np.float64),
            point_labels=np.ones(1, dtype=np.int64),
            multimask_output=multimask,
        )
        return [
            MaskCandidate(mask=m.astype(bool), quality=float(np.clip(s, 0.0, 1.0)))
            for m, s in zip(masks, scores)
        ]


def build_predictor(
    backend: str, config: BridgeConfig, checkpoint: str | None = None
) -> PromptablePredictor:
    if backend == "threshold":
        return ThresholdPredictor(config)
    if backend == "sam":
        if checkpoint is None:
            raise ModelLoadFailureError("the sam backend needs --checkpoint")
        return SamPredictorAdapter(config, checkpoint)
    raise ValueError(f"unknown backend {backend!r}")
