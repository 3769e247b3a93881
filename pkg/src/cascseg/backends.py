"""Everything-mode segmenter backends.

Two implementations of the same call contract: a deterministic ground-truth
replay oracle for desk-scale runs, and a remote client for a model service.
Proposal masks are full-frame boolean arrays matching the presented image;
they may overlap (everything-mode proposals are not a partition).

The optional ``view`` argument tells a backend how the presented image maps
to the run's base frame (crop origin plus integer upscale). Real backends
ignore it; the oracle needs it to replay ground truth inside the rescue's
enlarged crops.
"""
from __future__ import annotations

import io
from abc import ABC, abstractmethod
from dataclasses import dataclass

import cv2
import numpy as np
import requests
from PIL import Image

from .raster import as_image, as_mask, dilate, rle_decode
from .skeleton import find_endpoints, prune_spurs, thin


class SegmenterError(Exception):
    """Base class for backend failures."""


class RemoteUnavailable(SegmenterError):
    """Transport failure or non-success status from the segmentation service."""


class MalformedResponse(SegmenterError):
    """The service answered with something outside the wire schema."""


class SegmentTimeout(SegmenterError):
    """The service did not answer within the configured timeout."""


@dataclass(frozen=True)
class ViewTransform:
    """Maps the presented image into the base frame: crop origin and upscale."""

    x0: int = 0
    y0: int = 0
    scale: int = 1

    @property
    def identity(self) -> bool:
        return self.x0 == 0 and self.y0 == 0 and self.scale == 1


class SegmenterBackend(ABC):
    name: str = "backend"
    deterministic: bool = False

    @abstractmethod
    def segment(self, image, view: ViewTransform | None = None) -> list[np.ndarray]:
        """Return zero or more proposal masks for the presented image."""


def segment(backend: SegmenterBackend, image, view: ViewTransform | None = None) -> list[np.ndarray]:
    """Call a backend and enforce the output contract (in-bounds full-frame masks)."""
    img = as_image(image)
    masks = backend.segment(img, view=view)
    for m in masks:
        if as_mask(m).shape != img.shape[:2]:
            raise MalformedResponse(
                f"backend {backend.name} returned a mask of shape {np.asarray(m).shape} "
                f"for an image of shape {img.shape[:2]}"
            )
    return masks


# --- ground-truth oracle ----------------------------------------------------


@dataclass
class OracleBehavior:
    """Behavioral switches modeling how the everything-mode segmenter acts.

    color_priority: color-distinct heads are always proposed while present.
    merge_overlaps: touching thin tails come back as one fused proposal.
    simple_first_quota: at most this many non-head proposals per call,
        simplest (fewest skeleton endpoints) first.
    separable_when_bold: stroke width (px) at which fused tails come back
        as separate proposals instead.
    """

    color_priority: bool = True
    merge_overlaps: bool = True
    simple_first_quota: int = 3
    separable_when_bold: int = 6

    def validate(self) -> "OracleBehavior":
        if self.simple_first_quota < 1:
            raise ValueError("simple_first_quota must be >= 1")
        if self.separable_when_bold < 1:
            raise ValueError("separable_when_bold must be >= 1")
        return self


def _stroke_width(mask: np.ndarray) -> float:
    """Mean stroke width of a tube-like mask: area over centerline length."""
    ys, xs = np.nonzero(mask)
    y0, y1 = ys.min(), ys.max() + 1
    x0, x1 = xs.min(), xs.max() + 1
    crop = np.pad(mask[y0:y1, x0:x1], 1)
    skel = thin(crop)
    length = int(np.count_nonzero(skel))
    if length == 0:
        return 0.0
    return float(np.count_nonzero(crop)) / length


def _simplicity_key(mask: np.ndarray):
    ys, xs = np.nonzero(mask)
    y0, y1 = ys.min(), ys.max() + 1
    x0, x1 = xs.min(), xs.max() + 1
    crop = mask[y0:y1, x0:x1]
    n_endpoints = len(find_endpoints(prune_spurs(thin(crop))))
    area = int(np.count_nonzero(mask))
    first = int(ys[0]) * mask.shape[1] + int(xs[0])
    return (n_endpoints, area, first)


class OracleBackend(SegmenterBackend):
    """Deterministic backend replaying scene ground truth under behavior rules.

    Per call: (a) with color_priority, emits every ground-truth head still
    present in the image; (b) groups surviving tails whose presented pixels
    touch and whose presented stroke width is below separable_when_bold into
    single fused masks (when merge_overlaps); (c) returns at most
    simple_first_quota non-head masks, simplest first. Instances already
    erased from the presented image are never returned, and returned masks
    never contain pixels the presentation does not show.
    """

    name = "oracle"
    deterministic = True

    def __init__(self, scene, behavior: OracleBehavior | None = None):
        self.scene = scene
        self.behavior = (behavior or OracleBehavior()).validate()
        self._shape = scene.image.shape[:2]

    # fraction of in-frame ground truth still visible for a part mask
    @staticmethod
    def _presented(part: np.ndarray, nonwhite: np.ndarray):
        present = part & nonwhite
        total = int(np.count_nonzero(part))
        return present, (int(np.count_nonzero(present)) / total if total else 0.0)

    def _frame_mask(self, mask: np.ndarray, view: ViewTransform, shape) -> np.ndarray:
        if view.identity and mask.shape == shape:
            return mask
        s = view.scale
        win = mask[view.y0 : view.y0 + shape[0] // s, view.x0 : view.x0 + shape[1] // s]
        if s == 1:
            return win.copy()
        # smooth upscale: blocky pixel replication would grow corner forks
        # that misread as extra tail termini downstream
        big = cv2.resize(win.astype(np.float32), (win.shape[1] * s, win.shape[0] * s),
                         interpolation=cv2.INTER_LINEAR)
        return big >= 0.5

    def segment(self, image, view: ViewTransform | None = None) -> list[np.ndarray]:
        img = as_image(image)
        view = view or ViewTransform()
        h, w = img.shape[:2]
        if view.identity:
            if (h, w) != self._shape:
                raise ValueError("presented image does not match the oracle's scene frame")
        else:
            if h % view.scale or w % view.scale:
                raise ValueError("presented crop is not an exact multiple of the view scale")
        nonwhite = (img != 255).any(axis=2)
        out: list[np.ndarray] = []

        if self.behavior.color_priority:
            for inst in self.scene.instances:
                part = self._frame_mask(inst.head_mask, view, (h, w))
                present, frac = self._presented(part, nonwhite)
                if frac >= 0.5:
                    out.append(present)

        alive = []
        widths = []
        for inst in self.scene.instances:
            part = self._frame_mask(inst.tail_mask, view, (h, w))
            present, frac = self._presented(part, nonwhite)
            if frac < 0.5:
                continue
            if not view.identity:
                total = int(np.count_nonzero(inst.tail_mask))
                in_window = int(np.count_nonzero(part)) / view.scale**2
                if total == 0 or in_window / total < 0.8:
                    continue  # tail only clips the crop window
            alive.append(present)
            widths.append(_stroke_width(present))

        groups = self._group_touching(alive)
        proposals: list[np.ndarray] = []
        for group in groups:
            if len(group) == 1:
                proposals.append(alive[group[0]])
                continue
            # a cluster stays indistinct while any member stroke is thin
            fused = self.behavior.merge_overlaps and min(widths[i] for i in group) < self.behavior.separable_when_bold
            if fused:
                union = np.zeros((h, w), dtype=bool)
                for idx in group:
                    union |= alive[idx]
                proposals.append(union)
            else:
                proposals.extend(alive[idx] for idx in group)
        proposals.sort(key=_simplicity_key)
        out.extend(proposals[: self.behavior.simple_first_quota])
        return out

    @staticmethod
    def _group_touching(masks: list[np.ndarray]) -> list[list[int]]:
        n = len(masks)
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        grown = [dilate(m, 1) for m in masks]
        for i in range(n):
            for j in range(i + 1, n):
                if (grown[i] & masks[j]).any():
                    ra, rb = find(i), find(j)
                    if ra != rb:
                        parent[rb] = ra
        groups: dict[int, list[int]] = {}
        for i in range(n):
            groups.setdefault(find(i), []).append(i)
        return [groups[k] for k in sorted(groups)]


def oracle_from_scene(scene, behavior: OracleBehavior | None = None) -> OracleBackend:
    """Build the deterministic ground-truth-driven backend for a scene."""
    return OracleBackend(scene, behavior)


# --- remote client ----------------------------------------------------------


def _png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_mask_payload(payload: dict, shape: tuple[int, int]) -> list[np.ndarray]:
    """Decode a /segment JSON body into masks, validating the schema strictly."""
    import base64

    try:
        width = int(payload["width"])
        height = int(payload["height"])
        entries = payload["masks"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"response missing required fields: {exc}") from exc
    if (height, width) != shape:
        raise MalformedResponse(
            f"response dimensions {width}x{height} do not match request {shape[1]}x{shape[0]}"
        )
    masks = []
    for entry in entries:
        try:
            blob = base64.b64decode(entry["rle"], validate=True)
            mask = rle_decode(blob)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"undecodable mask payload: {exc}") from exc
        if mask.shape != shape:
            raise MalformedResponse(
                f"mask dimensions {mask.shape[1]}x{mask.shape[0]} do not match request"
            )
        masks.append(mask)
    return masks


def remote_segment(endpoint_url: str, img, timeout: float = 60.0) -> list[np.ndarray]:
    """POST a PNG to {base}/segment and decode the JSON mask list."""
    img = as_image(img)
    url = endpoint_url.rstrip("/") + "/segment"
    try:
        resp = requests.post(
            url, data=_png_bytes(img), headers={"Content-Type": "image/png"}, timeout=timeout
        )
    except requests.Timeout as exc:
        raise SegmentTimeout(f"no answer from {url} within {timeout}s") from exc
    except requests.RequestException as exc:
        raise RemoteUnavailable(f"cannot reach {url}: {exc}") from exc
    if resp.status_code != 200:
        raise RemoteUnavailable(f"{url} answered HTTP {resp.status_code}")
    try:
        payload = resp.json()
    except ValueError as exc:
        raise MalformedResponse("response body is not JSON") from exc
    return decode_mask_payload(payload, img.shape[:2])


class RemoteBackend(SegmenterBackend):
    """Client for the segmentation service wire protocol."""

    name = "remote"
    deterministic = False

    def __init__(self, base_url: str, timeout: float = 60.0):
        self.base_url = base_url
        self.timeout = timeout

    def segment(self, image, view: ViewTransform | None = None) -> list[np.ndarray]:
        return remote_segment(self.base_url, image, timeout=self.timeout)

    def healthy(self) -> bool:
        try:
            resp = requests.get(self.base_url.rstrip("/") + "/health", timeout=self.timeout)
            return resp.status_code == 200
        except requests.RequestException:
            return False
