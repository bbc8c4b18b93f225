"""Batch command-line surface: pangrade <subcommand>.

Exit codes: 0 success, 1 usage error, 2 data error. Warnings and errors
go to standard error; every output file is byte-deterministic for fixed
inputs and flags, and re-running a subcommand overwrites outputs with
identical bytes. PANGRADE_LOG=debug|info|warning sets verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .crossval import (
    SplitSpec,
    aggregate,
    default_layout,
    kfold_split,
    render_table_csv,
    render_table_markdown,
)
from .errors import PangradeError, UnpairedInputWarning
from .formats import (
    canonical_json,
    manifest_from_json,
    mask_to_json_payload,
    parse_labelstudio_export,
    rasterize_annotations,
    read_panoptic,
    taxonomy_from_json,
    write_panoptic,
)
from .geometry import resize_pad_map
from .grading import (
    count_agreement,
    counts_to_csv,
    grade,
    grades_to_csv,
    mask_agreement_by_size,
    mask_agreement_to_csv,
    size_agreement,
    sizes_to_csv,
)
from .masks import BinaryMask
from .metrics import EvaluationReport, MetricConfig, evaluate_dataset
from .panoptic import PanopticMap
from .postprocess import PostprocessConfig, postprocess_instances
from .taxonomy import CategoryTaxonomy

log = logging.getLogger("pangrade")

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"ERROR {USAGE_ERROR}: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _load_taxonomy(path: str) -> CategoryTaxonomy:
    return taxonomy_from_json(Path(path).read_bytes())


def _pair_stems(directory: Path) -> list[str]:
    stems = sorted(p.stem for p in directory.glob("*.png"))
    missing = [s for s in stems if not (directory / f"{s}.json").exists()]
    if missing:
        raise PangradeError(f"{directory}: missing sidecar JSON for {missing[:5]}")
    if not stems:
        raise PangradeError(f"{directory}: no panoptic pairs found")
    return stems


def _read_pair(directory: Path, stem: str, taxonomy: CategoryTaxonomy) -> PanopticMap:
    return read_panoptic(
        (directory / f"{stem}.png").read_bytes(),
        (directory / f"{stem}.json").read_bytes(),
        taxonomy,
    )


def _write_pair(directory: Path, stem: str, pmap: PanopticMap) -> None:
    png, sidecar = write_panoptic(pmap, stem)
    (directory / f"{stem}.png").write_bytes(png)
    (directory / f"{stem}.json").write_bytes(sidecar)


def _matched_stems(pred_dir: Path, gt_dir: Path, allow_missing: bool) -> list[str]:
    pred = set(_pair_stems(pred_dir))
    gt = set(_pair_stems(gt_dir))
    unmatched = sorted(pred.symmetric_difference(gt))
    if unmatched:
        if not allow_missing:
            raise PangradeError(
                f"unmatched image stems between {pred_dir} and {gt_dir}: {unmatched[:5]}"
            )
        for stem in unmatched:
            warnings.warn(f"skipping unmatched stem {stem}", UnpairedInputWarning, stacklevel=2)
    return sorted(pred & gt)


def _parallel_map(fn, items, jobs: int):
    """Apply fn over items; results return in input order regardless of jobs."""
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_ingest(args) -> int:
    taxonomy = _load_taxonomy(args.taxonomy)
    manifest = manifest_from_json(Path(args.manifest).read_bytes())
    records = parse_labelstudio_export(Path(args.export).read_bytes(), manifest, taxonomy)
    rows = []
    for rec in records:
        row: dict = {
            "image_id": rec.image_id,
            "category_id": rec.category_id,
            "prompt": {"kind": rec.prompt.kind},
        }
        if rec.prompt.kind == "box":
            row["prompt"]["box"] = list(rec.prompt.box)
        else:
            row["prompt"]["point"] = list(rec.prompt.point)
        if rec.hand_mask is not None:
            row["hand_mask"] = mask_to_json_payload(rec.hand_mask)
        rows.append(row)
    Path(args.out_annotations).write_bytes(canonical_json({"annotations": rows}))
    log.info("parsed %d records from %s", len(records), args.export)

    if args.rasterize:
        out_dir = Path(args.rasterize)
        out_dir.mkdir(parents=True, exist_ok=True)
        for entry in sorted(manifest.entries, key=lambda e: e.image_id):
            image_records = [r for r in records if r.image_id == entry.image_id]
            pmap = rasterize_annotations(image_records, entry.width, entry.height, taxonomy)
            _write_pair(out_dir, entry.image_id, pmap)
        log.info("rasterized ground truth for %d images", len(manifest.entries))
    return 0


def _cmd_convert(args) -> int:
    taxonomy = _load_taxonomy(args.taxonomy)
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stems = _pair_stems(in_dir)

    def work(stem: str) -> tuple[str, PanopticMap]:
        pmap = _read_pair(in_dir, stem, taxonomy)
        if args.size is not None:
            pmap, _ = resize_pad_map(pmap, args.size)
        return stem, pmap

    for stem, pmap in _parallel_map(work, stems, args.jobs):
        _write_pair(out_dir, stem, pmap)
    return 0


def _cmd_postprocess(args) -> int:
    taxonomy = _load_taxonomy(args.taxonomy)
    config = PostprocessConfig(d=args.d, connectivity=args.connectivity)
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stems = _pair_stems(in_dir)

    def work(stem: str) -> tuple[str, PanopticMap]:
        return stem, postprocess_instances(_read_pair(in_dir, stem, taxonomy), taxonomy, config)

    for stem, pmap in _parallel_map(work, stems, args.jobs):
        _write_pair(out_dir, stem, pmap)
    log.info("postprocessed %d maps (d=%d, connectivity=%d)", len(stems), args.d, args.connectivity)
    return 0


def _select_fold(stems: list[str], split_path: str | None, fold: int | None) -> list[str]:
    if split_path is None:
        return stems
    if fold is None:
        raise PangradeError("--fold is required when --split is given")
    split = SplitSpec.from_json_bytes(Path(split_path).read_bytes())
    wanted = set(split.fold_ids(fold))
    return [s for s in stems if s in wanted]


def _cmd_evaluate(args) -> int:
    taxonomy = _load_taxonomy(args.taxonomy)
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    stems = _matched_stems(pred_dir, gt_dir, args.allow_missing)
    stems = _select_fold(stems, args.split, args.fold)
    if not stems:
        raise PangradeError("no image pairs selected for evaluation")

    def work(stem: str):
        return stem, _read_pair(pred_dir, stem, taxonomy), _read_pair(gt_dir, stem, taxonomy)

    pairs = _parallel_map(work, stems, args.jobs)
    report = evaluate_dataset(pairs, taxonomy, MetricConfig())
    Path(args.out).write_bytes(canonical_json(report.to_json_obj()))
    if args.markdown:
        Path(args.markdown).write_text(_report_markdown(report, taxonomy), encoding="utf-8")
    log.info("evaluated %d image pairs", len(stems))
    return 0


def _report_markdown(report: EvaluationReport, taxonomy: CategoryTaxonomy) -> str:
    lines = [
        f"Images: {report.image_count}",
        "",
        "| category | IoU | AP | AP@50 | AP@75 | AR | PQ | SQ | RQ | TP | FP | FN |",
        "| --- | --- | --- | --- | --- | --- | --- | --- | --- | --- | --- | --- |",
    ]

    def fmt(v) -> str:
        return "-" if v is None else f"{v:.3f}"

    for cid, m in sorted(report.per_category.items()):
        name = taxonomy.get(cid).name
        lines.append(
            f"| {name} | {fmt(m.iou)} | {fmt(m.ap)} | {fmt(m.ap50)} | {fmt(m.ap75)} "
            f"| {fmt(m.ar)} | {fmt(m.pq)} | {fmt(m.sq)} | {fmt(m.rq)} "
            f"| {m.tp} | {m.fp} | {m.fn} |"
        )
    lines.append("")
    lines.append(f"mIoU: {fmt(report.miou)}  PQ: {fmt(report.pq)}")
    return "\n".join(lines) + "\n"


def _cmd_grade(args) -> int:
    taxonomy = _load_taxonomy(args.taxonomy)
    in_dir = Path(args.in_dir)
    stems = _pair_stems(in_dir)

    def work(stem: str):
        pmap = _read_pair(in_dir, stem, taxonomy)
        return grade(pmap, taxonomy, image_id=stem, denominator=args.denominator)

    records = _parallel_map(work, stems, args.jobs)
    payload = {"denominator": args.denominator, "images": [r.to_json_obj() for r in records]}
    Path(args.out).write_bytes(canonical_json(payload))
    if args.csv:
        Path(args.csv).write_text(grades_to_csv(records, taxonomy), encoding="utf-8")
    log.info("graded %d maps", len(records))
    return 0


def _cmd_agreement(args) -> int:
    taxonomy = _load_taxonomy(args.taxonomy)
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    stems = _matched_stems(pred_dir, gt_dir, args.allow_missing)

    def load(stem: str):
        return _read_pair(gt_dir, stem, taxonomy), _read_pair(pred_dir, stem, taxonomy)

    map_pairs = _parallel_map(load, stems, args.jobs)

    if args.mode == "counts":
        result = count_agreement(map_pairs, taxonomy, per_category=args.per_category)
        csv_text = counts_to_csv(result)
    elif args.mode == "sizes":
        result = size_agreement(map_pairs, taxonomy, min_iou=args.min_iou)
        csv_text = sizes_to_csv(result)
    else:
        mask_pairs = []
        for (gt_map, pred_map), stem in zip(map_pairs, stems):
            pred_ids = set(pred_map.segment_ids)
            for sid in gt_map.segment_ids:
                gseg = gt_map.segment(sid)
                if taxonomy.get(gseg.category_id).kind != "thing":
                    continue
                if sid not in pred_ids or pred_map.segment(sid).category_id != gseg.category_id:
                    warnings.warn(
                        f"{stem}: segment {sid} has no same-id counterpart; skipped",
                        UnpairedInputWarning,
                        stacklevel=2,
                    )
                    continue
                mask_pairs.append((gt_map.mask_of(sid), pred_map.mask_of(sid)))
        bins = tuple(int(b) for b in args.bins.split(",")) if args.bins else None
        result = (
            mask_agreement_by_size(mask_pairs, bins)
            if bins
            else mask_agreement_by_size(mask_pairs)
        )
        csv_text = mask_agreement_to_csv(result)

    Path(args.out).write_bytes(canonical_json(result.to_json_obj()))
    if args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
    return 0


def _cmd_split(args) -> int:
    manifest = manifest_from_json(Path(args.manifest).read_bytes())
    spec = kfold_split(manifest, k=args.k, seed=args.seed)
    Path(args.out).write_bytes(spec.to_json_bytes())
    log.info("split %d images into %d folds", len(manifest.image_ids), args.k)
    return 0


def _cmd_report(args) -> int:
    taxonomy = _load_taxonomy(args.taxonomy)
    reports = []
    for path in args.reports:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        reports.append(EvaluationReport.from_json_obj(obj))
    agg = aggregate(reports)
    Path(args.out).write_bytes(canonical_json(agg.to_json_obj()))
    layout = default_layout(taxonomy)
    if args.markdown:
        Path(args.markdown).write_text(
            render_table_markdown(agg, layout, label=args.label), encoding="utf-8"
        )
    if args.csv:
        Path(args.csv).write_text(render_table_csv(agg, layout), encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# Wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pangrade", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[], help="parse a LabelStudio export")
    p.add_argument("--export", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--out-annotations", required=True)
    p.add_argument("--rasterize", metavar="DIR", help="also write GT panoptic pairs")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("convert", help="rewrite panoptic pairs, optionally resize-pad")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--size", type=int, help="target square side, e.g. 1024")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("postprocess", help="merge nearby same-class instances")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--d", type=int, default=5, help="dilation radius in pixels (default 5)")
    p.add_argument("--connectivity", type=int, default=8, choices=(4, 8),
                   help="component connectivity (default 8)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_postprocess)

    p = sub.add_parser(
        "evaluate",
        help="IoU/AP/AR/PQ of predictions against ground truth",
        description="Evaluate predicted panoptic pairs against ground truth. "
        "AP averages the 10 IoU thresholds 0.50, 0.55, ..., 0.95; AP@50 and "
        "AP@75 are reported alongside; PQ matches pairs at IoU > 0.5.",
    )
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--markdown", help="also render a markdown report")
    p.add_argument("--split", help="splits.json restricting evaluation to one fold")
    p.add_argument("--fold", type=int, help="fold index used with --split")
    p.add_argument("--allow-missing", action="store_true",
                   help="skip unmatched stems instead of failing")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("grade", help="defect counts and relative sizes")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--denominator", choices=("fruit_plus_defects", "fruit_only"),
                   default="fruit_plus_defects")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_grade)

    p = sub.add_parser("agreement", help="compare two mask sources")
    p.add_argument("mode", choices=("masks", "counts", "sizes"))
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--min-iou", type=float, default=0.5, help="size matching threshold")
    p.add_argument("--bins", help="comma-separated bin edges for masks mode")
    p.add_argument("--per-category", action="store_true",
                   help="counts mode: compare per defect category")
    p.add_argument("--allow-missing", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_agreement)

    p = sub.add_parser("split", help="deterministic k-fold assignment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, default=5, help="fold count (default 5)")
    p.add_argument("--seed", type=int, default=0, help="PCG64 shuffle seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("report", help="aggregate fold reports into a table")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--markdown")
    p.add_argument("--csv")
    p.add_argument("--label", default="run")
    p.set_defaults(func=_cmd_report)
    return parser


def _configure_logging(verbosity: int) -> None:
    env = os.environ.get("PANGRADE_LOG", "").lower()
    level = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING}.get(env)
    if level is None:
        level = logging.WARNING if verbosity == 0 else (
            logging.INFO if verbosity == 1 else logging.DEBUG
        )
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(message)s")


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except PangradeError as exc:
        print(f"ERROR {DATA_ERROR}: {exc}", file=sys.stderr)
        return DATA_ERROR
    except OSError as exc:
        print(f"ERROR {DATA_ERROR}: {exc}", file=sys.stderr)
        return DATA_ERROR


def main(argv=None) -> None:
    raise SystemExit(run(argv))


if __name__ == "__main__":
    main()
