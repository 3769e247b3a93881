"""Scikit-learn-style front door for the cascade pipeline."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .backends import SegmenterBackend
from .cascade import CascadeConfig, CascadeState, run_pipeline
from .config import PipelineConfig
from .matching import MatchConfig
from .preprocess import PreprocessConfig


class CascadeSegmenter(BaseEstimator):
    """Unsupervised staged instance segmenter with an estimator interface.

    There is nothing to train: ``fit`` only validates parameters, after which
    ``predict`` runs the full cascade (head stage, tail rounds, overlap
    rescue, head-tail matching) per image and returns one
    :class:`~cascseg.cascade.CascadeState` per input. All knobs are plain
    constructor parameters so the object composes with ``get_params`` /
    ``set_params`` / ``clone``.

    Parameters mirror the pipeline configuration tree; ``backend`` must be a
    :class:`~cascseg.backends.SegmenterBackend` instance.
    """

    def __init__(
        self,
        backend: SegmenterBackend | None = None,
        brightness_delta: int = 0,
        contrast_gain: float = 1.2,
        saturation_gain: float = 1.3,
        whiten_s_max: int = 25,
        whiten_v_min: int = 200,
        denoise_min_area: int = 30,
        purple_h: tuple = (100.0, 180.0),
        purple_s: tuple = (20.0, 255.0),
        purple_v: tuple = (20.0, 255.0),
        head_purple_fraction_min: float = 0.5,
        max_rounds: int = 10,
        rescue_scale: int = 4,
        rescue_margin: int = 10,
        rescue_thicken_radius: int = 3,
        min_mask_area: int = 30,
        lambda_dis: float = 20.0,
        lambda_angle: float = 60.0,
        slope_fit_k: int = 10,
    ):
        self.backend = backend
        self.brightness_delta = brightness_delta
        self.contrast_gain = contrast_gain
        self.saturation_gain = saturation_gain
        self.whiten_s_max = whiten_s_max
        self.whiten_v_min = whiten_v_min
        self.denoise_min_area = denoise_min_area
        self.purple_h = purple_h
        self.purple_s = purple_s
        self.purple_v = purple_v
        self.head_purple_fraction_min = head_purple_fraction_min
        self.max_rounds = max_rounds
        self.rescue_scale = rescue_scale
        self.rescue_margin = rescue_margin
        self.rescue_thicken_radius = rescue_thicken_radius
        self.min_mask_area = min_mask_area
        self.lambda_dis = lambda_dis
        self.lambda_angle = lambda_angle
        self.slope_fit_k = slope_fit_k

    def to_config(self) -> PipelineConfig:
        """Assemble and validate the configuration tree from the parameters."""
        return PipelineConfig(
            preprocess=PreprocessConfig(
                brightness_delta=self.brightness_delta,
                contrast_gain=self.contrast_gain,
                saturation_gain=self.saturation_gain,
                whiten_s_max=self.whiten_s_max,
                whiten_v_min=self.whiten_v_min,
                denoise_min_area=self.denoise_min_area,
            ),
            cascade=CascadeConfig(
                purple_h=tuple(self.purple_h),
                purple_s=tuple(self.purple_s),
                purple_v=tuple(self.purple_v),
                head_purple_fraction_min=self.head_purple_fraction_min,
                max_rounds=self.max_rounds,
                rescue_scale=self.rescue_scale,
                rescue_margin=self.rescue_margin,
                rescue_thicken_radius=self.rescue_thicken_radius,
                min_mask_area=self.min_mask_area,
            ),
            matching=MatchConfig(
                lambda_dis=self.lambda_dis,
                lambda_angle=self.lambda_angle,
                slope_fit_k=self.slope_fit_k,
            ),
        ).validate()

    @classmethod
    def from_config(cls, cfg: PipelineConfig, backend: SegmenterBackend | None = None) -> "CascadeSegmenter":
        return cls(
            backend=backend,
            brightness_delta=cfg.preprocess.brightness_delta,
            contrast_gain=cfg.preprocess.contrast_gain,
            saturation_gain=cfg.preprocess.saturation_gain,
            whiten_s_max=cfg.preprocess.whiten_s_max,
            whiten_v_min=cfg.preprocess.whiten_v_min,
            denoise_min_area=cfg.preprocess.denoise_min_area,
            purple_h=cfg.cascade.purple_h,
            purple_s=cfg.cascade.purple_s,
            purple_v=cfg.cascade.purple_v,
            head_purple_fraction_min=cfg.cascade.head_purple_fraction_min,
            max_rounds=cfg.cascade.max_rounds,
            rescue_scale=cfg.cascade.rescue_scale,
            rescue_margin=cfg.cascade.rescue_margin,
            rescue_thicken_radius=cfg.cascade.rescue_thicken_radius,
            min_mask_area=cfg.cascade.min_mask_area,
            lambda_dis=cfg.matching.lambda_dis,
            lambda_angle=cfg.matching.lambda_angle,
            slope_fit_k=cfg.matching.slope_fit_k,
        )

    def fit(self, X=None, y=None):
        """Validate parameters; no training happens (the method is unsupervised)."""
        self.config_ = self.to_config()
        return self

    def predict(self, X) -> CascadeState | list[CascadeState]:
        """Run the cascade on one image (HxWx3 uint8) or an iterable of images."""
        if self.backend is None:
            raise ValueError("a segmenter backend is required to predict")
        if not hasattr(self, "config_"):
            self.fit()
        if isinstance(X, np.ndarray) and X.ndim == 3:
            return run_pipeline(X, self.backend, self.config_)
        return [run_pipeline(img, self.backend, self.config_) for img in X]
