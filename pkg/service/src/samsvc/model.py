"""Mask generators: the real everything-mode model and a deterministic stub.

A generator is any callable taking an RGB uint8 array and returning a list of
boolean masks of the same height and width.
"""
from __future__ import annotations

import os

import numpy as np

from .config import ServiceConfig


def load_sam_generator(cfg: ServiceConfig):
    """Load the real model. Weights are a deployment concern: the service
    refuses to start when the checkpoint is missing instead of downloading."""
    if not cfg.checkpoint:
        raise RuntimeError("no model checkpoint configured (set SAMSVC_CHECKPOINT)")
    if not os.path.exists(cfg.checkpoint):
        raise FileNotFoundError(f"model checkpoint not found: {cfg.checkpoint}")
    try:
        from segment_anything import SamAutomaticMaskGenerator, sam_model_registry
    except ImportError as exc:
        raise RuntimeError(
            "the 'sam' extra (segment-anything, torch) is required for the real backend"
        ) from exc
    sam = sam_model_registry[cfg.model_type](checkpoint=cfg.checkpoint)
    sam.to(cfg.device)
    generator = SamAutomaticMaskGenerator(
        sam,
        points_per_side=cfg.points_per_side,
        pred_iou_thresh=cfg.pred_iou_thresh,
        stability_score_thresh=cfg.stability_score_thresh,
        min_mask_region_area=cfg.min_mask_region_area,
        output_mode="binary_mask",
    )

    def generate(image: np.ndarray) -> list[np.ndarray]:
        return [np.asarray(p["segmentation"], dtype=bool) for p in generator.generate(image)]

    return generate


def stub_generator(_cfg: ServiceConfig | None = None):
    """Deterministic model double for protocol tests and local dry runs.

    Emits two dimension-scaled masks for any input: a left-side rectangle and
    a centered disk.
    """

    def generate(image: np.ndarray) -> list[np.ndarray]:
        h, w = image.shape[:2]
        rect = np.zeros((h, w), dtype=bool)
        rect[h // 5 : (3 * h) // 5, w // 8 : (5 * w) // 16] = True
        yy, xx = np.mgrid[0:h, 0:w]
        disk = np.hypot(yy - h / 2.0, xx - 11 * w / 16.0) <= min(h, w) / 5.0
        return [rect, disk]

    return generate
