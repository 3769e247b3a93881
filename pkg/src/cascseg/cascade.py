"""Staged segmentation engine: head stage, tail rounds, overlap rescue, matching.

One run owns a residual image that starts as the preprocessed input and loses
every retained mask (painted background-white), so later rounds see only what
remains. The run is strictly sequential; parallelism belongs to the caller at
the whole-image level.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import cv2
import numpy as np

from . import matching, preprocess, raster
from .backends import SegmenterBackend, ViewTransform, segment
from .skeleton import MaskKind, classify, skeletonize

if TYPE_CHECKING:
    from .config import PipelineConfig


class PipelineError(Exception):
    """A stage failed; the message carries the stage label."""


class RecordKind(Enum):
    HEAD = "head"
    TAIL = "tail"
    COMPLETE = "complete"


@dataclass
class CascadeConfig:
    purple_h: tuple[float, float] = (100.0, 180.0)
    purple_s: tuple[float, float] = (20.0, 255.0)
    purple_v: tuple[float, float] = (20.0, 255.0)
    head_purple_fraction_min: float = 0.5
    max_rounds: int = 10
    rescue_scale: int = 4
    rescue_margin: int = 10
    rescue_thicken_radius: int = 3
    min_mask_area: int = 30

    def validate(self) -> "CascadeConfig":
        if self.max_rounds < 2:
            raise ValueError("max_rounds must be >= 2")
        if self.rescue_scale < 1:
            raise ValueError("rescue_scale must be >= 1")
        if not 0.0 <= self.head_purple_fraction_min <= 1.0:
            raise ValueError("head_purple_fraction_min must be in [0, 1]")
        if self.rescue_margin < 0 or self.rescue_thicken_radius < 0 or self.min_mask_area < 0:
            raise ValueError("rescue/area parameters must be >= 0")
        return self


@dataclass
class InstanceRecord:
    id: int
    kind: RecordKind
    mask: np.ndarray
    round: int
    via_rescue: bool = False
    head_id: int | None = None
    tail_id: int | None = None


@dataclass
class MatchLink:
    complete_id: int
    head_id: int
    tail_id: int
    distance: float
    angle_diff: float


@dataclass
class CascadeState:
    residual: np.ndarray
    records: list[InstanceRecord] = field(default_factory=list)
    round: int = 0
    extractions: list[int] = field(default_factory=list)
    stop_reason: str | None = None
    warnings: list[str] = field(default_factory=list)
    matches: list[MatchLink] = field(default_factory=list)
    unmatched_heads: list[int] = field(default_factory=list)
    unmatched_tails: list[int] = field(default_factory=list)

    def next_id(self) -> int:
        return max((r.id for r in self.records), default=-1) + 1

    def by_kind(self, kind: RecordKind) -> list[InstanceRecord]:
        return [r for r in self.records if r.kind is kind]

    @property
    def rounds_used(self) -> int:
        """Full-frame segmenter passes: the head stage plus every tail round."""
        return 1 + self.round


def purple_mask(img, cfg: CascadeConfig) -> np.ndarray:
    """Pixels whose HSV lies inside the configured purple band."""
    hsv = raster.rgb_to_hsv(raster.as_image(img))
    out = np.ones(hsv.shape[:2], dtype=bool)
    for channel, (lo, hi) in enumerate((cfg.purple_h, cfg.purple_s, cfg.purple_v)):
        out &= (hsv[..., channel] >= lo) & (hsv[..., channel] <= hi)
    return out


def erase(img: np.ndarray, mask: np.ndarray) -> None:
    img[mask] = 255


def head_stage(img, backend: SegmenterBackend, cfg: "PipelineConfig") -> tuple[list[InstanceRecord], np.ndarray]:
    """Keep purple-dominated proposals as heads; erase them from the residual."""
    img = raster.as_image(img)
    ccfg = cfg.cascade.validate()
    purple = purple_mask(img, ccfg)
    residual = img.copy()
    records = []
    for proposal in segment(backend, img):
        mask = raster.as_mask(proposal, like=img)
        area = int(np.count_nonzero(mask))
        if area == 0:
            continue
        fraction = int(np.count_nonzero(mask & purple)) / area
        if fraction >= ccfg.head_purple_fraction_min:
            records.append(InstanceRecord(id=len(records), kind=RecordKind.HEAD, mask=mask, round=0))
            erase(residual, mask)
    return records, residual


def tail_round(state: CascadeState, backend: SegmenterBackend, cfg: "PipelineConfig") -> int:
    """One segment-filter-erase pass over the residual; returns the extraction count."""
    ccfg = cfg.cascade
    extracted = 0
    for proposal in segment(backend, state.residual):
        mask = raster.as_mask(proposal, like=state.residual)
        if int(np.count_nonzero(mask)) < ccfg.min_mask_area:
            continue
        mask = raster.fill_small_holes(mask, ccfg.min_mask_area)
        if classify(mask) is MaskKind.SINGLE_TAIL:
            state.records.append(
                InstanceRecord(id=state.next_id(), kind=RecordKind.TAIL, mask=mask, round=state.round)
            )
            erase(state.residual, mask)
            extracted += 1
    state.residual = preprocess.denoise_image(state.residual, cfg.preprocess.denoise_min_area)
    return extracted


def run_tail_loop(state: CascadeState, backend: SegmenterBackend, cfg: "PipelineConfig") -> CascadeState:
    """Iterate tail rounds until nothing changes or the round cap is reached."""
    while True:
        if state.round >= cfg.cascade.max_rounds:
            state.stop_reason = "round_cap"
            break
        state.round += 1
        before = state.residual.copy()
        count = tail_round(state, backend, cfg)
        state.extractions.append(count)
        if count == 0 and np.array_equal(before, state.residual):
            state.stop_reason = "converged"
            break
    return state


def _block_majority(mask: np.ndarray, scale: int) -> np.ndarray:
    h, w = mask.shape
    return mask.reshape(h // scale, scale, w // scale, scale).mean(axis=(1, 3)) >= 0.5


def emphasize_crop(window_img: np.ndarray, window_comp: np.ndarray, cfg: CascadeConfig):
    """Enlarge a residual overlap component and bolden its outline.

    Returns the emphasized crop (bilinear upscale with the thickened, smoothed
    outline painted in the component's mean color).
    """
    s = cfg.rescue_scale
    h, w = window_comp.shape
    big_img = cv2.resize(window_img, (w * s, h * s), interpolation=cv2.INTER_LINEAR)
    big_comp = np.kron(window_comp, np.ones((s, s), dtype=bool))
    edges = big_comp & ~raster.erode(big_comp, 1)
    band = raster.closing(raster.dilate(edges, cfg.rescue_thicken_radius), 1)
    mean_color = window_img[window_comp].mean(axis=0)
    big_img[band] = np.rint(mean_color).astype(np.uint8)
    return big_img


def rescue_overlaps(state: CascadeState, backend: SegmenterBackend, cfg: "PipelineConfig") -> CascadeState:
    """Enlarge-and-bold pass over residual overlap clusters.

    Each cluster (one connected segment whose skeleton has more than two
    endpoints) is cropped, upscaled, outline-thickened, smoothed, and
    re-segmented; single-tail results are mapped back to the base frame and
    recorded as rescued tails.
    """
    ccfg = cfg.cascade
    s = ccfg.rescue_scale
    fg = preprocess.foreground_mask(state.residual)
    for comp in raster.connected_components(fg, 8):
        if int(np.count_nonzero(comp)) < ccfg.min_mask_area:
            continue
        if classify(comp) is not MaskKind.OVERLAP_CLUSTER:
            continue
        ys, xs = np.nonzero(comp)
        if ys.max() - ys.min() < 2 or xs.max() - xs.min() < 2:
            state.warnings.append(
                f"rescue skipped: component at ({int(xs.min())}, {int(ys.min())}) smaller than 3x3"
            )
            continue
        y0 = max(0, int(ys.min()) - ccfg.rescue_margin)
        y1 = min(comp.shape[0], int(ys.max()) + 1 + ccfg.rescue_margin)
        x0 = max(0, int(xs.min()) - ccfg.rescue_margin)
        x1 = min(comp.shape[1], int(xs.max()) + 1 + ccfg.rescue_margin)
        emphasized = emphasize_crop(state.residual[y0:y1, x0:x1], comp[y0:y1, x0:x1], ccfg)
        view = ViewTransform(x0=x0, y0=y0, scale=s)
        # upscaled tubes carry scale-proportional end forks and corner spurs;
        # genuine cluster arms are an order of magnitude longer
        crop_spur_len = max(8, 10 * s)
        for proposal in segment(backend, emphasized, view=view):
            mask = raster.as_mask(proposal)
            if int(np.count_nonzero(mask)) < ccfg.min_mask_area * s * s:
                continue
            mask = raster.fill_small_holes(mask, ccfg.min_mask_area * s * s)
            if classify(mask, spur_len=crop_spur_len) is not MaskKind.SINGLE_TAIL:
                continue
            restored = np.zeros(state.residual.shape[:2], dtype=bool)
            restored[y0:y1, x0:x1] = _block_majority(mask, s)
            if int(np.count_nonzero(restored)) < ccfg.min_mask_area:
                continue
            state.records.append(
                InstanceRecord(
                    id=state.next_id(),
                    kind=RecordKind.TAIL,
                    mask=restored,
                    round=state.round,
                    via_rescue=True,
                )
            )
            erase(state.residual, restored)
    return state


def match_stage(state: CascadeState, cfg: "PipelineConfig") -> CascadeState:
    """Pair heads with tails and append spliced complete records."""
    heads = state.by_kind(RecordKind.HEAD)
    tails = state.by_kind(RecordKind.TAIL)
    skeletons = [skeletonize(t.mask, slope_k=cfg.matching.slope_fit_k) for t in tails]
    result = matching.match_and_splice(
        [h.mask for h in heads],
        skeletons,
        [t.mask for t in tails],
        cfg.matching,
        head_ids=[h.id for h in heads],
        tail_ids=[t.id for t in tails],
    )
    state.warnings.extend(result.warnings)
    tail_by_id = {t.id: t for t in tails}
    for cand, mask in zip(result.matches, result.complete_masks):
        cid = state.next_id()
        state.records.append(
            InstanceRecord(
                id=cid,
                kind=RecordKind.COMPLETE,
                mask=mask,
                round=tail_by_id[cand.tail_id].round,
                via_rescue=tail_by_id[cand.tail_id].via_rescue,
                head_id=cand.head_id,
                tail_id=cand.tail_id,
            )
        )
        state.matches.append(
            MatchLink(
                complete_id=cid,
                head_id=cand.head_id,
                tail_id=cand.tail_id,
                distance=cand.distance,
                angle_diff=cand.angle_diff,
            )
        )
    state.unmatched_heads = result.unmatched_heads
    state.unmatched_tails = result.unmatched_tails
    return state


def run_pipeline(img, backend: SegmenterBackend, cfg: "PipelineConfig") -> CascadeState:
    """Full cascade: preprocess, head stage, tail loop, rescue, match."""

    def stage(label, fn, *args):
        try:
            return fn(*args)
        except Exception as exc:
            raise PipelineError(f"{label}: {exc}") from exc

    img = raster.as_image(img)
    enhanced = stage("preprocess", preprocess.enhance, img, cfg.preprocess)
    head_records, residual = stage("head_stage", head_stage, enhanced, backend, cfg)
    state = CascadeState(residual=residual, records=list(head_records))
    state = stage("tail_loop", run_tail_loop, state, backend, cfg)
    state = stage("rescue", rescue_overlaps, state, backend, cfg)
    state = stage("match", match_stage, state, cfg)
    return state
