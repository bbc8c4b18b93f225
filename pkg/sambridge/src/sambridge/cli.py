"""sam-bridge: run a promptable segmentation backend over coarse
annotations and emit pangrade panoptic pairs.

Outputs land as <image_id>.png/<image_id>.json (written atomically via a
temp file) plus a bridge_run.json metadata record. Exit codes mirror the
primary CLI: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from pangrade.errors import PangradeError
from pangrade.formats import (
    DatasetManifest,
    ManifestEntry,
    canonical_json,
    parse_labelstudio_export,
    taxonomy_from_json,
    write_panoptic,
)

from .bridge import generate_masks
from .config import BACKBONES, BridgeConfig
from .predictors import ModelLoadFailureError, build_predictor

USAGE_ERROR = 1
DATA_ERROR = 2

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"ERROR {USAGE_ERROR}: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _discover_images(images_dir: Path) -> dict[str, Path]:
    found = {}
    for path in sorted(images_dir.iterdir()):
        if path.suffix.lower() in IMAGE_SUFFIXES:
            found[path.stem] = path
    if not found:
        raise PangradeError(f"{images_dir}: no images found")
    return found


def _manifest_from_images(images: dict[str, Path]) -> DatasetManifest:
    entries = []
    for stem, path in images.items():
        try:
            with Image.open(path) as img:
                width, height = img.size
        except (UnidentifiedImageError, OSError) as exc:
            raise PangradeError(f"{path}: unreadable image: {exc}") from None
        entries.append(ManifestEntry(stem, str(path), width, height))
    return DatasetManifest(tuple(entries))


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sam-bridge", description=__doc__.splitlines()[0])
    parser.add_argument("--images", required=True, help="directory of input photos")
    parser.add_argument("--annotations", required=True, help="LabelStudio export JSON")
    parser.add_argument("--taxonomy", required=True)
    parser.add_argument("--out", required=True, help="output directory for panoptic pairs")
    parser.add_argument("--backbone", choices=BACKBONES, default="large")
    parser.add_argument("--backend", choices=("sam", "threshold"), default="sam",
                        help="'threshold' is the dependency-free classical backend")
    parser.add_argument("--checkpoint", help="SAM checkpoint path (sam backend)")
    parser.add_argument("--size", type=int, default=1024, help="square prompting side")
    parser.add_argument("--device", default="cpu")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = BridgeConfig(backbone=args.backbone, image_side=args.size, device=args.device)
        taxonomy = taxonomy_from_json(Path(args.taxonomy).read_bytes())
        images = _discover_images(Path(args.images))
        manifest = _manifest_from_images(images)
        records = parse_labelstudio_export(
            Path(args.annotations).read_bytes(), manifest, taxonomy
        )
        predictor = build_predictor(args.backend, config, args.checkpoint)

        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        generated = 0
        for image_id in manifest.image_ids:
            image_records = [r for r in records if r.image_id == image_id]
            with Image.open(images[image_id]) as img:
                image_rgb = np.asarray(img.convert("RGB"))
            prompts = [r.prompt for r in image_records]
            pmap = generate_masks(image_rgb, prompts, taxonomy, config, predictor)
            png, sidecar = write_panoptic(pmap, image_id)
            _atomic_write(out_dir / f"{image_id}.png", png)
            _atomic_write(out_dir / f"{image_id}.json", sidecar)
            generated += 1
        _atomic_write(
            out_dir / "bridge_run.json",
            canonical_json(
                {
                    "backbone": config.backbone,
                    "backend": args.backend,
                    "image_side": config.image_side,
                    "prompt_space": "padded",
                    "images": generated,
                }
            ),
        )
        return 0
    except (PangradeError, ModelLoadFailureError, ValueError) as exc:
        print(f"ERROR {DATA_ERROR}: {exc}", file=sys.stderr)
        return DATA_ERROR
    except OSError as exc:
        print(f"ERROR {DATA_ERROR}: {exc}", file=sys.stderr)
        return DATA_ERROR


def main(argv=None) -> None:
    raise SystemExit(run(argv))


if __name__ == "__main__":
    main()
