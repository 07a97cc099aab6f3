"""Command-line pipeline over patch datasets.

Subcommands: simulate, segment, evaluate, fit-model, grain, synth-gt.
Datasets are described by a JSON manifest (array of {id, cyan_level,
magenta_level, image_path[, truth_path]}, paths relative to the manifest).
Exit codes: 0 success, 1 data/processing failure, 2 usage error. All
randomness flows from --seed, outputs embed the exact parameters used,
and reruns overwrite outputs bit-identically.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import imageio
from .graininess import BandPassSpec, component_grain_correlations
from .metrics import compare_label_maps
from .raster import RasterImage, luminance, normalize_white
from .reflectance_model import (
    PatchRecord,
    ReflectanceModel,
    coverage_ratios,
    fit_reflectance_model,
    predict_total_reflectance,
)
from .segmentation import SegmentationParams, fuse_channels, segment_patch
from .synthesis import (
    DEFAULT_INK_LEVELS,
    SimConfig,
    ground_truth_from_single_color,
    simulate_patch,
    synthesize_superimposed,
)

GRAIN_CSV_COLUMNS = (
    "id",
    "cyan_level",
    "magenta_level",
    "corr_pc",
    "corr_pm",
    "corr_o",
    "corr_w",
    "corr_recon",
)


class _UsageError(Exception):
    """Post-parse usage problem (exit code 2)."""


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.9g}"


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    cfg = json.loads(Path(path).read_text())
    unknown = set(cfg) - {"segmentation", "bandpass", "simulate"}
    if unknown:
        raise _UsageError(f"config: unknown sections {sorted(unknown)}")
    return cfg


def _seg_params(args, cfg: dict) -> SegmentationParams:
    params = SegmentationParams.from_dict(cfg.get("segmentation", {}))
    if args.seed is not None:
        params = replace(params, seed=args.seed)
    return params


def _band_spec(cfg: dict) -> BandPassSpec:
    return BandPassSpec.from_dict(cfg.get("bandpass", {}))


def _sim_config(args, cfg: dict) -> SimConfig:
    sim = SimConfig.from_dict(cfg.get("simulate", {}))
    if args.dpi is not None:
        sim = replace(sim, dpi=float(args.dpi))
    if args.seed is not None:
        sim = replace(sim, seed=args.seed)
    return sim


def _load_manifest(path: str):
    manifest_path = Path(path)
    if not manifest_path.exists():
        raise _UsageError(f"manifest not found: {manifest_path}")
    entries = json.loads(manifest_path.read_text())
    if not isinstance(entries, list):
        raise _UsageError(f"{manifest_path}: manifest must be a JSON array")
    if not entries:
        raise _UsageError(f"{manifest_path}: manifest is empty")
    base = manifest_path.parent
    out = []
    for i, e in enumerate(entries):
        if "id" not in e or "image_path" not in e:
            raise _UsageError(f"{manifest_path}: entry {i} lacks id/image_path")
        entry = dict(e)
        entry["image_path"] = str(base / e["image_path"])
        if e.get("truth_path"):
            entry["truth_path"] = str(base / e["truth_path"])
        out.append(entry)
    return out


def _effective_dpi(args) -> float:
    return float(args.dpi) if args.dpi is not None else 8000.0


def _params_echo(args, **extra) -> dict:
    echo = {"seed": args.seed if args.seed is not None else 42}
    echo.update(extra)
    return echo


# ---------------------------------------------------------------------------
# simulate


def _patch_id(cyan_pct: float, magenta_pct: float) -> str:
    return f"c{int(round(cyan_pct))}_m{int(round(magenta_pct))}"


def _write_patch(out: Path, patch_id: str, cfg: SimConfig) -> dict:
    img, truth = simulate_patch(cfg)
    imageio.save_image_png(out / f"{patch_id}.png", img)
    imageio.save_label_png(out / f"{patch_id}_truth.png", truth, dpi=cfg.dpi)
    imageio.atomic_write_json(out / f"{patch_id}.json", {"id": patch_id, "config": cfg.to_dict()})
    return {
        "id": patch_id,
        "cyan_level": round(cfg.cyan_level * 100, 6),
        "magenta_level": round(cfg.magenta_level * 100, 6),
        "image_path": f"{patch_id}.png",
        "truth_path": f"{patch_id}_truth.png",
    }


def cmd_simulate(args) -> int:
    cfg = _sim_config(args, _load_config(args.config))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.grid:
        entries = []
        index = 0
        for c in DEFAULT_INK_LEVELS:
            for m in DEFAULT_INK_LEVELS:
                patch_cfg = replace(
                    cfg, cyan_level=c / 100, magenta_level=m / 100, seed=cfg.seed + index
                )
                entries.append(_write_patch(out, _patch_id(c, m), patch_cfg))
                index += 1
        imageio.atomic_write_json(out / "manifest.json", entries)
        print(f"wrote {len(entries)} patches + manifest.json to {out}")
    else:
        if args.cyan is None or args.magenta is None:
            raise _UsageError("simulate: need --grid or both --cyan and --magenta (percent)")
        patch_cfg = replace(cfg, cyan_level=args.cyan / 100, magenta_level=args.magenta / 100)
        entry = _write_patch(out, _patch_id(args.cyan, args.magenta), patch_cfg)
        print(f"wrote {entry['id']} to {out}")
    return 0


# ---------------------------------------------------------------------------
# segment


def _segment_one(entry: dict, params: SegmentationParams, dpi: float, out_dir: str):
    """Worker: segment one patch, write outputs, return (id, metrics, error)."""
    patch_id = entry["id"]
    try:
        img = imageio.load_image_png(entry["image_path"], dpi=dpi)
        labels = segment_patch(img, params)
        imageio.save_label_png(Path(out_dir) / f"{patch_id}_labels.png", labels, dpi=img.dpi)
        metrics = None
        if entry.get("truth_path"):
            truth = imageio.load_label_png(entry["truth_path"])
            metrics = compare_label_maps(labels, truth).to_dict()
            imageio.atomic_write_json(Path(out_dir) / f"{patch_id}_metrics.json", metrics)
        return patch_id, metrics, None
    except (ValueError, OSError) as exc:
        return patch_id, None, f"{entry['image_path']}: {exc}"


def cmd_segment(args) -> int:
    cfg = _load_config(args.config)
    params = _seg_params(args, cfg)
    entries = _load_manifest(args.manifest)
    if args.truth:
        missing = [e["id"] for e in entries if not e.get("truth_path")]
        if missing:
            raise _UsageError(f"--truth given but manifest lacks truth_path for {missing}")
    else:
        entries = [{k: v for k, v in e.items() if k != "truth_path"} for e in entries]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dpi = _effective_dpi(args)

    work = [(e, params, dpi, str(out)) for e in entries]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_segment_one, *zip(*work)))
    else:
        results = [_segment_one(*w) for w in work]

    results.sort(key=lambda r: r[0])
    errors = {pid: err for pid, _, err in results if err}
    metric_dicts = [m for _, m, _ in results if m]
    summary = {
        "params": {**_params_echo(args), "segmentation": asdict(params)},
        "patches": [
            {"id": pid, "metrics": m, "error": err} for pid, m, err in results
        ],
        "errors": errors,
    }
    if metric_dicts:
        summary["mean_iou"] = float(np.mean([m["mean_iou"] for m in metric_dicts]))
        summary["pixel_accuracy"] = float(np.mean([m["pixel_accuracy"] for m in metric_dicts]))
    imageio.atomic_write_json(out / "summary.json", summary)
    for pid, err in errors.items():
        print(f"error: {pid}: {err}", file=sys.stderr)
    return 1 if errors else 0


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args) -> int:
    entries = _load_manifest(args.manifest)
    pred_dir = Path(args.pred)
    reports = {}
    failures = []
    for e in entries:
        if not e.get("truth_path"):
            raise _UsageError(f"evaluate: manifest entry {e['id']} lacks truth_path")
        pred_path = pred_dir / f"{e['id']}_labels.png"
        try:
            pred = imageio.load_label_png(pred_path)
            truth = imageio.load_label_png(e["truth_path"])
            reports[e["id"]] = compare_label_maps(pred, truth).to_dict()
        except (ValueError, OSError) as exc:
            failures.append(f"{pred_path}: {exc}")
    result = {
        "patches": reports,
        "errors": failures,
    }
    if reports:
        result["mean_iou"] = float(np.mean([r["mean_iou"] for r in reports.values()]))
        result["pixel_accuracy"] = float(
            np.mean([r["pixel_accuracy"] for r in reports.values()])
        )
    imageio.atomic_write_json(args.out, result)
    for msg in failures:
        print(f"error: {msg}", file=sys.stderr)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# fit-model


def _measured_reflectance(img: RasterImage, use_white_norm: bool) -> float:
    refl = luminance(img)
    if use_white_norm:
        refl = normalize_white(refl)
    return float(refl.samples.mean())


def _labels_for(entry: dict, labels_dir: str | None, img: RasterImage, params: SegmentationParams):
    if labels_dir is not None:
        return imageio.load_label_png(Path(labels_dir) / f"{entry['id']}_labels.png")
    return segment_patch(img, params)


def cmd_fit_model(args) -> int:
    cfg = _load_config(args.config)
    params = _seg_params(args, cfg)
    entries = _load_manifest(args.manifest)
    dpi = _effective_dpi(args)
    records = []
    for e in entries:
        img = imageio.load_image_png(e["image_path"], dpi=dpi)
        labels = _labels_for(e, args.labels, img, params)
        records.append(
            PatchRecord(
                id=e["id"],
                cyan_level=float(e.get("cyan_level", 0.0)),
                magenta_level=float(e.get("magenta_level", 0.0)),
                coverage=coverage_ratios(labels),
                total_reflectance=_measured_reflectance(img, args.normalize_white),
            )
        )
    model = fit_reflectance_model(records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    imageio.atomic_write_json(
        out / "model.json",
        {
            **model.to_dict(),
            "params": {
                **_params_echo(args),
                "segmentation": asdict(params),
                "normalize_white": args.normalize_white,
            },
        },
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "cyan_level", "magenta_level", "measured", "predicted"])
    for r in records:
        writer.writerow(
            [
                r.id,
                _fmt(r.cyan_level),
                _fmt(r.magenta_level),
                _fmt(r.total_reflectance),
                _fmt(predict_total_reflectance(r.coverage, model)),
            ]
        )
    imageio.atomic_write_text(out / "scatter.csv", buf.getvalue())
    print(f"fitted {model.n_patches} patches, residual rms {model.residual_rms:.3g}")
    return 0


# ---------------------------------------------------------------------------
# grain


def cmd_grain(args) -> int:
    cfg = _load_config(args.config)
    spec = _band_spec(cfg)
    if args.band is not None:
        spec = replace(spec, f_lo=args.band[0], f_hi=args.band[1])
    model_path = Path(args.model)
    if not model_path.exists():
        raise _UsageError(f"grain: model file not found: {model_path}")
    model = ReflectanceModel.from_dict(json.loads(model_path.read_text()))
    labels_dir = Path(args.labels)
    if not labels_dir.is_dir():
        raise _UsageError(f"grain: labels directory not found: {labels_dir}")
    entries = _load_manifest(args.manifest)
    dpi = _effective_dpi(args)

    rows = []
    for e in entries:
        img = imageio.load_image_png(e["image_path"], dpi=dpi)
        refl = luminance(img)
        if args.normalize_white:
            refl = normalize_white(refl)
        labels = imageio.load_label_png(labels_dir / f"{e['id']}_labels.png")
        report = component_grain_correlations(labels, refl, model, spec)
        rows.append(
            {
                "id": e["id"],
                "cyan_level": float(e.get("cyan_level", 0.0)),
                "magenta_level": float(e.get("magenta_level", 0.0)),
                "corr_pc": report.correlations["pc"],
                "corr_pm": report.correlations["pm"],
                "corr_o": report.correlations["o"],
                "corr_w": report.correlations["w"],
                "corr_recon": report.reconstruction_correlation,
            }
        )

    mean_row: dict = {"id": "mean", "cyan_level": None, "magenta_level": None}
    for col in GRAIN_CSV_COLUMNS[3:]:
        vals = [r[col] for r in rows if r[col] is not None]
        mean_row[col] = float(np.mean(vals)) if vals else None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GRAIN_CSV_COLUMNS)
    for r in rows + [mean_row]:
        writer.writerow([r["id"]] + [_fmt(r[c]) for c in GRAIN_CSV_COLUMNS[1:]])
    imageio.atomic_write_text(out / "grain.csv", buf.getvalue())
    imageio.atomic_write_json(
        out / "grain.json",
        {
            "patches": rows,
            "mean": mean_row,
            "params": {
                **_params_echo(args),
                "bandpass": asdict(spec),
                "model": model.to_dict(),
                "normalize_white": args.normalize_white,
            },
        },
    )
    print(f"wrote grain report for {len(rows)} patches to {out}")
    return 0


# ---------------------------------------------------------------------------
# synth-gt


def cmd_synth_gt(args) -> int:
    dpi = _effective_dpi(args)
    cyan_img = imageio.load_image_png(args.cyan_image, dpi=dpi)
    magenta_img = imageio.load_image_png(args.magenta_image, dpi=dpi)
    composite = synthesize_superimposed(cyan_img, magenta_img)
    cyan_mask = ground_truth_from_single_color(cyan_img, "red", args.threshold)
    magenta_mask = ground_truth_from_single_color(magenta_img, "green", args.threshold)
    truth = fuse_channels(cyan_mask, magenta_mask)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    imageio.save_image_png(out / "composite.png", composite)
    imageio.save_label_png(out / "truth_labels.png", truth, dpi=composite.dpi)
    imageio.save_mask_png(out / "gt_cyan_mask.png", cyan_mask, dpi=composite.dpi)
    imageio.save_mask_png(out / "gt_magenta_mask.png", magenta_mask, dpi=composite.dpi)
    imageio.atomic_write_json(
        out / "synth_gt.json",
        {
            "cyan_image": str(args.cyan_image),
            "magenta_image": str(args.magenta_image),
            "threshold": args.threshold,
            "params": _params_echo(args),
        },
    )
    print(f"wrote composite + ground truth to {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inkgrain",
        description="Decompose two-ink patch scans into color components and "
        "attribute band-pass graininess noise.",
    )
    parser.add_argument("--config", help="JSON config (segmentation/bandpass/simulate sections)")
    parser.add_argument("--dpi", type=float, help="scan resolution fallback (default 8000)")
    parser.add_argument("--seed", type=int, help="seed for all randomness (default 42)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel patch workers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate simulated patches")
    p.add_argument("--out", required=True)
    p.add_argument("--grid", action="store_true", help="full ink-level grid + manifest")
    p.add_argument("--cyan", type=float, help="cyan level in percent")
    p.add_argument("--magenta", type=float, help="magenta level in percent")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("segment", help="segment patches from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", action="store_true", help="score against manifest truth_path")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="score existing label maps against truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True, help="directory with <id>_labels.png")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fit-model", help="fit component reflectances over a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="reuse label maps from this directory")
    p.add_argument("--normalize-white", action="store_true")
    p.set_defaults(func=cmd_fit_model)

    p = sub.add_parser("grain", help="band-pass correlation report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True, help="fitted model JSON")
    p.add_argument("--labels", required=True, help="directory with <id>_labels.png")
    p.add_argument("--out", required=True)
    p.add_argument("--band", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--normalize-white", action="store_true")
    p.set_defaults(func=cmd_grain)

    p = sub.add_parser("synth-gt", help="superimposed composite + ground truth")
    p.add_argument("--cyan-image", required=True)
    p.add_argument("--magenta-image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, help="ink threshold (default: from histogram)")
    p.set_defaults(func=cmd_synth_gt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
