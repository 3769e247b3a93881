"""Service configuration, settable from the environment or CLI flags."""
from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass
class ServiceConfig:
    checkpoint: str = ""
    model_type: str = "vit_h"
    device: str = "cpu"
    host: str = "127.0.0.1"
    port: int = 8750
    points_per_side: int = 32
    pred_iou_thresh: float = 0.88
    stability_score_thresh: float = 0.95
    min_mask_region_area: int = 0

    def validate(self) -> "ServiceConfig":
        if not 1 <= self.port <= 65535:
            raise ValueError("port must be in [1, 65535]")
        if self.points_per_side < 1:
            raise ValueError("points_per_side must be >= 1")
        return self

    def proposal_params(self) -> dict:
        """Everything-mode parameters, surfaced by /health for provenance."""
        return {
            "model_type": self.model_type,
            "points_per_side": self.points_per_side,
            "pred_iou_thresh": self.pred_iou_thresh,
            "stability_score_thresh": self.stability_score_thresh,
            "min_mask_region_area": self.min_mask_region_area,
        }

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        cfg = cls()
        env = os.environ
        cfg.checkpoint = env.get("SAMSVC_CHECKPOINT", cfg.checkpoint)
        cfg.model_type = env.get("SAMSVC_MODEL_TYPE", cfg.model_type)
        cfg.device = env.get("SAMSVC_DEVICE", cfg.device)
        cfg.host = env.get("SAMSVC_HOST", cfg.host)
        cfg.port = int(env.get("SAMSVC_PORT", cfg.port))
        cfg.points_per_side = int(env.get("SAMSVC_POINTS_PER_SIDE", cfg.points_per_side))
        return cfg.validate()
