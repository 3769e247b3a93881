"""Head-tail assembly: ellipse fitting, candidate filtering, greedy splicing."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import as_mask, count_components, dilate
from .skeleton import Skeleton


@dataclass
class MatchConfig:
    lambda_dis: float = 20.0
    lambda_angle: float = 60.0
    slope_fit_k: int = 10

    def validate(self) -> "MatchConfig":
        if self.lambda_dis <= 0 or self.lambda_angle <= 0:
            raise ValueError("thresholds must be positive")
        if self.slope_fit_k < 2:
            raise ValueError("slope_fit_k must be >= 2")
        return self


@dataclass
class HeadGeometry:
    """Moments-based ellipse approximation of a head mask."""

    center: tuple[float, float]
    major_axis_endpoints: tuple[tuple[float, float], tuple[float, float]]
    major_len: float
    minor_len: float
    orientation: float  # degrees, mod 180


@dataclass
class MatchCandidate:
    head_id: int
    tail_id: int
    head_endpoint: tuple[float, float]
    tail_endpoint: tuple[int, int]
    distance: float
    angle_diff: float


@dataclass
class MatchResult:
    matches: list[MatchCandidate] = field(default_factory=list)
    complete_masks: list[np.ndarray] = field(default_factory=list)
    unmatched_heads: list[int] = field(default_factory=list)
    unmatched_tails: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def fit_ellipse(head_mask) -> HeadGeometry:
    """Fit an ellipse to a mask from its first and second central moments.

    The returned axis lengths are full axes (the 4-sigma extent that matches
    a solid ellipse of the same moments); the major-axis endpoints are the
    two tips used as matching anchors.
    """
    mask = as_mask(head_mask)
    ys, xs = np.nonzero(mask)
    if len(xs) < 5:
        raise ValueError("head mask too small to fit (area < 5)")
    cx, cy = xs.mean(), ys.mean()
    dx, dy = xs - cx, ys - cy
    mu20 = (dx * dx).mean()
    mu02 = (dy * dy).mean()
    mu11 = (dx * dy).mean()
    spread = np.sqrt((mu20 - mu02) ** 2 + 4 * mu11 * mu11)
    l1 = (mu20 + mu02 + spread) / 2
    l2 = (mu20 + mu02 - spread) / 2
    if l2 <= 1e-9:
        raise ValueError("degenerate head")
    theta = 0.5 * np.arctan2(2 * mu11, mu20 - mu02)
    major = 4.0 * np.sqrt(l1)
    minor = 4.0 * np.sqrt(l2)
    ux, uy = np.cos(theta), np.sin(theta)
    tips = (
        (cx + ux * major / 2, cy + uy * major / 2),
        (cx - ux * major / 2, cy - uy * major / 2),
    )
    return HeadGeometry(
        center=(float(cx), float(cy)),
        major_axis_endpoints=tips,
        major_len=float(major),
        minor_len=float(minor),
        orientation=float(np.degrees(theta) % 180.0),
    )


def angle_difference(a: float, b: float) -> float:
    """Difference of two undirected orientations, folded into [0, 90]."""
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


def enumerate_candidates(
    heads: list[HeadGeometry],
    tails: list[Skeleton],
    lambda_dis: float,
    lambda_angle: float,
    head_ids: list[int] | None = None,
    tail_ids: list[int] | None = None,
) -> list[MatchCandidate]:
    """All (head tip, tail endpoint) pairs within both thresholds.

    Ids default to list positions. The candidate list is sorted by angle
    difference, then distance, then ids, which is also the greedy acceptance
    order used by :func:`match_and_splice`.
    """
    if lambda_dis <= 0 or lambda_angle <= 0:
        raise ValueError("thresholds must be positive")
    head_ids = list(range(len(heads))) if head_ids is None else list(head_ids)
    tail_ids = list(range(len(tails))) if tail_ids is None else list(tail_ids)
    out = []
    for hid, geo in zip(head_ids, heads):
        for tid, skel in zip(tail_ids, tails):
            for ep, slope in zip(skel.endpoints, skel.terminal_slopes):
                adiff = angle_difference(geo.orientation, slope)
                if adiff > lambda_angle:
                    continue
                for tip in geo.major_axis_endpoints:
                    d = float(np.hypot(tip[0] - ep[0], tip[1] - ep[1]))
                    if d <= lambda_dis:
                        out.append(
                            MatchCandidate(
                                head_id=hid,
                                tail_id=tid,
                                head_endpoint=(float(tip[0]), float(tip[1])),
                                tail_endpoint=ep,
                                distance=d,
                                angle_diff=float(adiff),
                            )
                        )
    out.sort(
        key=lambda c: (c.angle_diff, c.distance, c.head_id, c.tail_id, c.head_endpoint, c.tail_endpoint)
    )
    return out


def _draw_segment(shape, p0, p1) -> np.ndarray:
    """3-px-wide digital segment between two (possibly subpixel) points."""
    mask = np.zeros(shape, dtype=bool)
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    n = max(2, int(np.ceil(np.hypot(*(p1 - p0)) * 2)) + 1)
    for t in np.linspace(0.0, 1.0, n):
        x, y = np.rint(p0 + t * (p1 - p0)).astype(int)
        if 0 <= y < shape[0] and 0 <= x < shape[1]:
            mask[y, x] = True
    return dilate(mask, 1)


def _nearest_pixel(mask: np.ndarray, point) -> tuple[float, float]:
    ys, xs = np.nonzero(mask)
    d2 = (xs - point[0]) ** 2 + (ys - point[1]) ** 2
    i = int(np.argmin(d2))
    return (float(xs[i]), float(ys[i]))


def splice(head_mask, tail_mask, head_endpoint, tail_endpoint) -> np.ndarray:
    """Union of a matched head and tail, bridged so the result is connected."""
    head_mask = as_mask(head_mask)
    tail_mask = as_mask(tail_mask, like=head_mask)
    union = head_mask | tail_mask
    if count_components(union, 8) == 1:
        return union
    union = union | _draw_segment(union.shape, head_endpoint, tail_endpoint)
    if count_components(union, 8) == 1:
        return union
    # ellipse tip can fall just outside the head mask; anchor the bridge
    union = union | _draw_segment(union.shape, head_endpoint, _nearest_pixel(head_mask, head_endpoint))
    union = union | _draw_segment(union.shape, tail_endpoint, _nearest_pixel(tail_mask, tail_endpoint))
    return union


def match_and_splice(
    head_masks: list[np.ndarray],
    tail_skeletons: list[Skeleton],
    tail_masks: list[np.ndarray],
    cfg: MatchConfig,
    head_ids: list[int] | None = None,
    tail_ids: list[int] | None = None,
) -> MatchResult:
    """Greedily resolve candidates (closest angle first) into complete masks.

    Each head matches at most one tail and vice versa. Unfittable heads are
    reported unmatched with a warning, never dropped silently.
    """
    cfg.validate()
    head_ids = list(range(len(head_masks))) if head_ids is None else list(head_ids)
    tail_ids = list(range(len(tail_skeletons))) if tail_ids is None else list(tail_ids)
    result = MatchResult()
    geos: list[HeadGeometry] = []
    usable_heads: list[int] = []
    for hid, mask in zip(head_ids, head_masks):
        try:
            geos.append(fit_ellipse(mask))
            usable_heads.append(hid)
        except ValueError as exc:
            result.warnings.append(f"head {hid}: {exc}")
            result.unmatched_heads.append(hid)
    candidates = enumerate_candidates(
        geos, tail_skeletons, cfg.lambda_dis, cfg.lambda_angle, usable_heads, tail_ids
    )
    head_mask_by_id = dict(zip(head_ids, head_masks))
    tail_mask_by_id = dict(zip(tail_ids, tail_masks))
    taken_heads: set[int] = set()
    taken_tails: set[int] = set()
    for cand in candidates:
        if cand.head_id in taken_heads or cand.tail_id in taken_tails:
            continue
        taken_heads.add(cand.head_id)
        taken_tails.add(cand.tail_id)
        result.matches.append(cand)
        result.complete_masks.append(
            splice(
                head_mask_by_id[cand.head_id],
                tail_mask_by_id[cand.tail_id],
                cand.head_endpoint,
                cand.tail_endpoint,
            )
        )
    result.unmatched_heads.extend(h for h in usable_heads if h not in taken_heads)
    result.unmatched_tails.extend(t for t in tail_ids if t not in taken_tails)
    return result
