"""Bridge configuration."""

from __future__ import annotations

from dataclasses import dataclass

BACKBONES = ("base", "large", "huge")

# segment-anything registry names and checkpoint file stems per backbone
SAM_MODEL_TYPES = {"base": "vit_b", "large": "vit_l", "huge": "vit_h"}


@dataclass(frozen=True)
class BridgeConfig:
    backbone: str = "large"
    image_side: int = 1024
    device: str = "cpu"
    multimask: bool = True

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.image_side < 256:
            raise ValueError(f"image side must be >= 256, got {self.image_side}")
