"""Result manifest I/O: the JSON schema shared by pipeline, generator, evaluator."""
from __future__ import annotations

import base64
import json
from importlib import resources
from pathlib import Path

import numpy as np

from . import raster
from .cascade import CascadeState, RecordKind

SCHEMA_VERSION = 1


def manifest_schema() -> dict:
    """The versioned JSON schema shipped with the package."""
    text = resources.files("cascseg").joinpath("schemas/manifest.schema.json").read_text()
    return json.loads(text)


def build_manifest(state: CascadeState, image_name: str, config_echo: dict | None = None) -> dict:
    h, w = state.residual.shape[:2]
    instances = []
    for rec in state.records:
        entry = {
            "id": rec.id,
            "kind": rec.kind.value,
            "round": rec.round,
            "via_rescue": rec.via_rescue,
            "rle": base64.b64encode(raster.rle_encode(rec.mask)).decode("ascii"),
        }
        if rec.kind is RecordKind.COMPLETE:
            entry["head_id"] = rec.head_id
            entry["tail_id"] = rec.tail_id
        instances.append(entry)
    manifest = {
        "schema": SCHEMA_VERSION,
        "image": image_name,
        "width": int(w),
        "height": int(h),
        "instances": instances,
        "matches": [
            {
                "complete_id": m.complete_id,
                "head_id": m.head_id,
                "tail_id": m.tail_id,
                "distance": m.distance,
                "angle_diff": m.angle_diff,
            }
            for m in state.matches
        ],
        "telemetry": {
            "rounds": state.rounds_used,
            "extractions": list(state.extractions),
            "stop_reason": state.stop_reason,
            "rescued": sum(1 for r in state.records if r.kind is RecordKind.TAIL and r.via_rescue),
            "unmatched_heads": list(state.unmatched_heads),
            "unmatched_tails": list(state.unmatched_tails),
            "warnings": list(state.warnings),
        },
    }
    if config_echo is not None:
        manifest["config"] = config_echo
    return manifest


def write_manifest(manifest: dict, path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(path) -> dict:
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported manifest schema in {path}")
    return manifest


def manifest_masks(manifest: dict, kinds: tuple[str, ...] = ("complete",)) -> tuple[list[int], list[np.ndarray]]:
    """Decode instance masks of the requested kinds, in manifest order."""
    ids, masks = [], []
    for entry in manifest["instances"]:
        if entry["kind"] not in kinds:
            continue
        mask = raster.rle_decode(base64.b64decode(entry["rle"]))
        if mask.shape != (manifest["height"], manifest["width"]):
            raise ValueError(f"instance {entry['id']}: mask does not match manifest dimensions")
        ids.append(entry["id"])
        masks.append(mask)
    return ids, masks


def instance_color(instance_id: int) -> np.ndarray:
    """Deterministic distinct color for overlays, keyed by id."""
    hue = (instance_id * 47) % 180
    return np.rint(raster.hsv_to_rgb([float(hue), 210.0, 235.0])).astype(np.uint8)


def overlay_image(base_img, state: CascadeState) -> np.ndarray:
    """Blend complete (falling back to unmatched head/tail) masks over the image."""
    out = raster.as_image(base_img).astype(np.float64)
    completes = state.by_kind(RecordKind.COMPLETE)
    linked = {r.head_id for r in completes} | {r.tail_id for r in completes}
    for rec in state.records:
        if rec.kind is not RecordKind.COMPLETE and rec.id in linked:
            continue
        color = instance_color(rec.id).astype(np.float64)
        out[rec.mask] = 0.45 * out[rec.mask] + 0.55 * color
    return np.rint(out).astype(np.uint8)
