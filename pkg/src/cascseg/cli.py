"""Batch command-line driver: segment, eval, synth."""
from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import manifest as manifest_io
from . import metrics, raster, synth
from .backends import OracleBackend, RemoteBackend
from .cascade import run_pipeline
from .config import PipelineConfig, load_config

BACKEND_URL_ENV = "CS3_BACKEND_URL"

EXIT_OK = 0
EXIT_FAILED_IMAGES = 1
EXIT_BAD_INPUT = 2
EXIT_BACKEND_UNREACHABLE = 3


@click.group()
def main():
    """Staged cascade segmentation of overlapping curvilinear structures."""


def _load_pipeline_config(config_path: str | None) -> PipelineConfig:
    if config_path is None:
        return PipelineConfig().validate()
    try:
        return load_config(config_path)
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        click.echo(f"error: cannot parse config {config_path}: {exc}", err=True)
        sys.exit(EXIT_BAD_INPUT)


def _discover_inputs(input_dir: Path):
    """Scene export directories (image.png + gt.json) or bare PNG files."""
    scenes = sorted(
        d for d in input_dir.iterdir() if d.is_dir() and (d / "image.png").exists() and (d / "gt.json").exists()
    )
    if scenes:
        return [(d.name, d / "image.png", d) for d in scenes]
    return [(p.stem, p, None) for p in sorted(input_dir.glob("*.png"))]


@main.command()
@click.option("--input-dir", required=True, type=click.Path(path_type=Path))
@click.option("--output-dir", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=False), default=None,
              help="Pipeline config JSON; defaults apply when omitted.")
@click.option("--overlay", is_flag=True, help="Also write a colorized overlay PNG per image.")
def segment(input_dir: Path, output_dir: Path, config_path, overlay):
    """Run the cascade over every image in INPUT-DIR and write result manifests."""
    if not input_dir.is_dir():
        click.echo(f"error: input dir {input_dir} does not exist", err=True)
        sys.exit(EXIT_BAD_INPUT)
    cfg = _load_pipeline_config(config_path)
    env_url = os.environ.get(BACKEND_URL_ENV)
    if env_url:
        cfg.backend.url = env_url

    inputs = _discover_inputs(input_dir)
    if not inputs:
        click.echo(f"warning: no input images found in {input_dir}", err=True)
        sys.exit(EXIT_OK)

    remote = None
    if cfg.backend.kind == "remote":
        if not cfg.backend.url:
            click.echo("error: remote backend requires a url (config or CS3_BACKEND_URL)", err=True)
            sys.exit(EXIT_BAD_INPUT)
        remote = RemoteBackend(cfg.backend.url)
        if not remote.healthy():
            click.echo(f"error: backend at {cfg.backend.url} is unreachable", err=True)
            sys.exit(EXIT_BACKEND_UNREACHABLE)

    output_dir.mkdir(parents=True, exist_ok=True)
    config_echo = cfg.to_dict()

    def process(item):
        name, image_path, scene_dir = item
        img = raster.load_image(image_path)
        if cfg.backend.kind == "oracle":
            if scene_dir is None:
                raise ValueError("oracle backend needs generator exports (image.png + gt.json per scene)")
            backend = OracleBackend(synth.load_scene(scene_dir), cfg.backend.oracle)
        else:
            backend = remote
        state = run_pipeline(img, backend, cfg)
        doc = manifest_io.build_manifest(state, image_path.name, config_echo)
        manifest_io.write_manifest(doc, output_dir / f"{name}.json")
        if overlay:
            raster.save_image(manifest_io.overlay_image(img, state), output_dir / f"{name}_overlay.png")
        return name

    failures = []
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = {pool.submit(process, item): item[0] for item in inputs}
        for fut, name in futures.items():
            try:
                fut.result()
            except Exception as exc:  # per-image isolation: one failure never aborts the batch
                failures.append((name, str(exc)))

    click.echo(f"processed {len(inputs) - len(failures)}/{len(inputs)} images into {output_dir}")
    if failures:
        for name, err in sorted(failures):
            click.echo(f"failed: {name}: {err}", err=True)
        sys.exit(EXIT_FAILED_IMAGES)


def _gt_manifests(gt_dir: Path) -> dict[str, Path]:
    out = {}
    for d in sorted(gt_dir.iterdir()):
        if d.is_dir() and (d / "gt.json").exists():
            out[d.name] = d / "gt.json"
    if out:
        return out
    return {p.stem: p for p in sorted(gt_dir.glob("*.json"))}


@main.command("eval")
@click.option("--pred-dir", required=True, type=click.Path(path_type=Path))
@click.option("--gt-dir", required=True, type=click.Path(path_type=Path))
@click.option("--mode", type=click.Choice([m.value for m in metrics.EvalMode]),
              default=metrics.EvalMode.MATCHED_ONLY.value)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="Report JSON path (default: PRED-DIR/eval_report.json).")
def eval_cmd(pred_dir: Path, gt_dir: Path, mode, out_path):
    """Score predicted manifests in PRED-DIR against ground truth in GT-DIR."""
    if not pred_dir.is_dir() or not gt_dir.is_dir():
        click.echo("error: pred/gt directory missing", err=True)
        sys.exit(EXIT_BAD_INPUT)
    eval_mode = metrics.EvalMode(mode)
    gt_files = _gt_manifests(gt_dir)
    pred_files = {p.stem: p for p in sorted(pred_dir.glob("*.json")) if not p.stem.endswith("_report")}
    names = sorted(set(gt_files) & set(pred_files))
    skipped = sorted(set(gt_files) ^ set(pred_files))

    per_image = {}
    pooled_iou, pooled_dice, total_gt = [], [], 0
    for name in names:
        gt_doc = manifest_io.read_manifest(gt_files[name])
        pred_doc = manifest_io.read_manifest(pred_files[name])
        gt_ids, gt_masks = manifest_io.manifest_masks(gt_doc)
        pred_ids, pred_masks = manifest_io.manifest_masks(pred_doc)
        report = metrics.evaluate(gt_masks, pred_masks, eval_mode)
        per_image[name] = {
            "miou": report.miou,
            "mdice": report.mdice,
            "pairs": [
                {"gt_id": gt_ids[i], "pred_id": pred_ids[j], "iou": v} for i, j, v in report.pairs
            ],
            "unmatched_gt": [gt_ids[i] for i in report.unmatched_gt],
            "unmatched_pred": [pred_ids[j] for j in report.unmatched_pred],
        }
        total_gt += len(gt_masks)
        for i, j, v in report.pairs:
            pooled_iou.append(v)
            pooled_dice.append(metrics.dice(gt_masks[i], pred_masks[j]))

    denom = len(pooled_iou) if eval_mode is metrics.EvalMode.MATCHED_ONLY else total_gt
    agg_miou = sum(pooled_iou) / denom if denom else 0.0
    agg_mdice = sum(pooled_dice) / denom if denom else 0.0
    report_doc = {
        "schema": 1,
        "mode": eval_mode.value,
        "aggregate": {
            "miou": agg_miou,
            "mdice": agg_mdice,
            "images": len(names),
            "gt_instances": total_gt,
            "matched_pairs": len(pooled_iou),
        },
        "images": per_image,
        "skipped": skipped,
    }
    out_path = out_path or (pred_dir / "eval_report.json")
    with open(out_path, "w") as fh:
        json.dump(report_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

    click.echo(f"{'image':<24} {'mIoU':>8} {'mDice':>8} {'pairs':>6}")
    for name in names:
        row = per_image[name]
        click.echo(f"{name:<24} {row['miou']:>8.4f} {row['mdice']:>8.4f} {len(row['pairs']):>6}")
    click.echo(f"{'aggregate':<24} {agg_miou:>8.4f} {agg_mdice:>8.4f} {len(pooled_iou):>6}")
    if skipped:
        for name in skipped:
            click.echo(f"skipped (no counterpart): {name}", err=True)
        sys.exit(EXIT_FAILED_IMAGES)


@main.command("synth")
@click.option("--out-dir", required=True, type=click.Path(path_type=Path))
@click.option("--count", default=1, show_default=True, help="Number of scenes (consecutive seeds).")
@click.option("--seed", default=0, show_default=True, help="First seed.")
@click.option("--width", default=720, show_default=True)
@click.option("--height", default=540, show_default=True)
@click.option("--n-sperm", default=3, show_default=True)
@click.option("--overlap-bias", default=0.0, show_default=True)
@click.option("--tail-width", default=3, show_default=True)
@click.option("--noise-speck-count", default=6, show_default=True)
def synth_cmd(out_dir: Path, count, seed, width, height, n_sperm, overlap_bias, tail_width, noise_speck_count):
    """Generate synthetic scenes with ground truth under OUT-DIR."""
    params = synth.SceneParams(
        width=width,
        height=height,
        n_sperm=n_sperm,
        overlap_bias=overlap_bias,
        tail_width=tail_width,
        noise_speck_count=noise_speck_count,
    )
    try:
        params.validate()
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_BAD_INPUT)
    out_dir.mkdir(parents=True, exist_ok=True)
    for s in range(seed, seed + count):
        scene = synth.generate(params, s)
        synth.export_scene(scene, out_dir / f"scene_{s:05d}")
    click.echo(f"wrote {count} scene(s) under {out_dir}")


if __name__ == "__main__":
    main()
