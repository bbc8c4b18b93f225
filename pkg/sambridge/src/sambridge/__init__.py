"""Promptable zero-shot mask generation bridge for the pangrade toolkit."""

from .bridge import PromptOutOfBoundsError, compare_backbones, generate_masks, predict_prompt_masks
from .config import BACKBONES, BridgeConfig
from .predictors import (
    MaskCandidate,
    ModelLoadFailureError,
    PromptablePredictor,
    SamPredictorAdapter,
    ThresholdPredictor,
    build_predictor,
)

__version__ = "0.1.0"

__all__ = [
    "BACKBONES",
    "BridgeConfig",
    "MaskCandidate",
    "ModelLoadFailureError",
    "PromptOutOfBoundsError",
    "PromptablePredictor",
    "SamPredictorAdapter",
    "ThresholdPredictor",
    "build_predictor",
    "compare_backbones",
    "generate_masks",
    "predict_prompt_masks",
]
