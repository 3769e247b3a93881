"""Centerline extraction and skeleton analysis for tail masks.

Terminal slopes and mask classification drive both the cascade's single-tail
filter (one connected segment, exactly two skeleton endpoints) and the
head-tail matcher.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize as _sk_skeletonize

from .raster import as_mask, count_components

# p2..p9 circular neighborhood, starting north, clockwise
_NB_OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
# step preference during an endpoint walk: 4-neighbors before diagonals
_STEP_ORDER = ((-1, 0), (0, 1), (1, 0), (0, -1), (-1, 1), (1, 1), (1, -1), (-1, -1))

_COUNT_KERNEL = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=np.uint8)


class MaskKind(Enum):
    SINGLE_TAIL = "single_tail"
    OVERLAP_CLUSTER = "overlap_cluster"
    OTHER = "other"


@dataclass
class Skeleton:
    """One-pixel-wide centerline with endpoint geometry.

    ``mask`` has the same shape as the source mask; ``endpoints`` are (x, y)
    pixels with exactly one skeleton neighbor, in row-major order;
    ``terminal_slopes`` holds one undirected orientation (degrees, mod 180)
    per endpoint.
    """

    mask: np.ndarray
    endpoints: list[tuple[int, int]] = field(default_factory=list)
    terminal_slopes: list[float] = field(default_factory=list)

    @property
    def pixels(self) -> set[tuple[int, int]]:
        ys, xs = np.nonzero(self.mask)
        return set(zip(xs.tolist(), ys.tolist()))


def _has_full_block(skel: np.ndarray) -> bool:
    return bool((skel[:-1, :-1] & skel[1:, :-1] & skel[:-1, 1:] & skel[1:, 1:]).any())


def _resolve_blocks(skel: np.ndarray) -> np.ndarray:
    # Sequentially delete simple points inside residual 2x2 blocks. A pixel is
    # simple here iff its deletion provably keeps local topology: one circular
    # run of foreground neighbors and a background 4-neighbor. Blocks whose
    # four pixels all fail this are topologically required and stay.
    img = np.pad(skel, 1)
    changed = True
    while changed:
        changed = False
        blocks = img[:-1, :-1] & img[1:, :-1] & img[:-1, 1:] & img[1:, 1:]
        if not blocks.any():
            break
        for by, bx in zip(*np.nonzero(blocks)):
            for y, x in ((by, bx), (by, bx + 1), (by + 1, bx), (by + 1, bx + 1)):
                if not img[y, x]:
                    continue
                nb = [bool(img[y + dy, x + dx]) for dy, dx in _NB_OFFSETS]
                runs = sum(1 for i in range(8) if not nb[i] and nb[(i + 1) % 8])
                if sum(nb) >= 2 and runs == 1 and not (nb[0] and nb[2] and nb[4] and nb[6]):
                    img[y, x] = False
                    changed = True
    return img[1:-1, 1:-1]


def thin(mask) -> np.ndarray:
    """Thin a mask to a one-pixel-wide skeleton, preserving topology.

    Component and hole counts are unchanged for every input. The result has
    no full 2x2 foreground block except around junctions where four arms meet
    the block diagonally, which no topology-preserving thinning can remove.
    """
    mask = as_mask(mask)
    if not mask.any():
        return mask.copy()
    ys, xs = np.nonzero(mask)
    y0, y1 = ys.min(), ys.max() + 1
    x0, x1 = xs.min(), xs.max() + 1
    crop = mask[y0:y1, x0:x1]
    skel = np.asarray(_sk_skeletonize(crop, method="lee")).astype(bool)
    if _has_full_block(skel):
        skel = _resolve_blocks(skel)
    out = np.zeros_like(mask)
    out[y0:y1, x0:x1] = skel
    return out


def neighbor_counts(skel_mask) -> np.ndarray:
    """Number of set 8-neighbors for every pixel (counts computed everywhere)."""
    skel_mask = as_mask(skel_mask)
    return ndimage.convolve(skel_mask.astype(np.uint8), _COUNT_KERNEL, mode="constant", cval=0)


def find_endpoints(skel_mask) -> list[tuple[int, int]]:
    """Pixels of a thinned mask with exactly one 8-neighbor, row-major order.

    An isolated pixel has zero neighbors and is deliberately not an endpoint.
    """
    skel_mask = as_mask(skel_mask)
    hits = skel_mask & (neighbor_counts(skel_mask) == 1)
    ys, xs = np.nonzero(hits)
    return list(zip(xs.tolist(), ys.tolist()))


def _walk_from_endpoint(skel_mask: np.ndarray, endpoint: tuple[int, int], k: int):
    h, w = skel_mask.shape
    x, y = endpoint
    path = [(x, y)]
    visited = {(x, y)}
    while len(path) < k:
        cx, cy = path[-1]
        cands = []
        for dy, dx in _STEP_ORDER:
            ny, nx = cy + dy, cx + dx
            if 0 <= ny < h and 0 <= nx < w and skel_mask[ny, nx] and (nx, ny) not in visited:
                cands.append((nx, ny))
        if not cands:
            break
        if len(cands) == 1:
            nxt = cands[0]
        elif len(cands) == 2 and abs(cands[0][0] - cands[1][0]) <= 1 and abs(cands[0][1] - cands[1][1]) <= 1:
            # corner doublet on a staircase, not a branch; 4-neighbor first
            nxt = cands[0]
        else:
            break  # reached a branch pixel
        path.append(nxt)
        visited.add(nxt)
    return path


def prune_spurs(skel_mask, min_len: int = 5) -> np.ndarray:
    """Remove branches shorter than ``min_len`` that end at a junction.

    Thinning sprouts short spurs at staircase corners of blocky or upscaled
    tubes; counting those as endpoints would misread a smooth tail as a
    cluster. Pruning never deletes a branch that ends at another endpoint
    (an isolated line keeps its full length) and keeps junction pixels, so
    connectivity is preserved.
    """
    skel = as_mask(skel_mask).copy()
    h, w = skel.shape
    for _ in range(8):
        changed = False
        counts = neighbor_counts(skel)
        for x, y in find_endpoints(skel):
            if not skel[y, x]:
                continue  # consumed by an earlier prune in this sweep
            path = [(x, y)]
            visited = {(x, y)}
            junction_hit = False
            while len(path) < min_len:
                cx, cy = path[-1]
                if counts[cy, cx] >= 3:
                    junction_hit = True
                    path.pop()  # the junction itself stays
                    break
                cands = [
                    (cx + dx, cy + dy)
                    for dy, dx in _STEP_ORDER
                    if 0 <= cy + dy < h and 0 <= cx + dx < w
                    and skel[cy + dy, cx + dx]
                    and (cx + dx, cy + dy) not in visited
                ]
                if not cands:
                    break
                if len(cands) == 1:
                    step = cands[0]
                elif len(cands) == 2 and abs(cands[0][0] - cands[1][0]) <= 1 and abs(cands[0][1] - cands[1][1]) <= 1:
                    step = cands[0]
                else:
                    junction_hit = True  # fan of branches right here
                    break
                path.append(step)
                visited.add(step)
            if junction_hit and path and len(path) < min_len:
                for px, py in path:
                    skel[py, px] = False
                changed = True
        if not changed:
            break
        # pruning a fork can leave a junction clump with no endpoint;
        # re-thinning collapses it back to a clean line end
        skel = thin(skel)
    return skel


def orientation_of_points(points) -> float:
    """Undirected orientation (degrees in [0, 180)) of the principal axis."""
    pts = np.asarray(points, dtype=np.float64)
    d = pts - pts.mean(axis=0)
    mu20 = (d[:, 0] ** 2).mean()
    mu02 = (d[:, 1] ** 2).mean()
    mu11 = (d[:, 0] * d[:, 1]).mean()
    return float(np.degrees(0.5 * np.arctan2(2 * mu11, mu20 - mu02)) % 180.0)


def terminal_slope(skel_mask, endpoint: tuple[int, int], k: int = 10) -> float:
    """Orientation of the skeleton near an endpoint, in degrees mod 180.

    Walks up to ``k`` pixels inward along the unique path (stopping at a
    branch pixel) and least-squares-fits a line to the visited pixels.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    skel_mask = as_mask(skel_mask)
    x, y = int(endpoint[0]), int(endpoint[1])
    if not (0 <= y < skel_mask.shape[0] and 0 <= x < skel_mask.shape[1]) or not skel_mask[y, x]:
        raise ValueError(f"({x}, {y}) is not a skeleton pixel")
    path = _walk_from_endpoint(skel_mask, (x, y), k)
    if len(path) < 2:
        raise ValueError("degenerate terminus")
    return orientation_of_points(path)


def skeletonize(mask, slope_k: int = 10, spur_len: int = 5) -> Skeleton:
    """Thin a mask (pruning sub-``spur_len`` corner spurs) and annotate it."""
    mask = as_mask(mask)
    if not mask.any():
        raise ValueError("empty mask")
    ys, xs = np.nonzero(mask)
    y0, y1 = ys.min(), ys.max() + 1
    x0, x1 = xs.min(), xs.max() + 1
    skel_crop = prune_spurs(thin(mask[y0:y1, x0:x1]), spur_len)
    eps_crop = find_endpoints(skel_crop)
    slopes = [terminal_slope(skel_crop, ep, slope_k) for ep in eps_crop]
    skel = np.zeros_like(mask)
    skel[y0:y1, x0:x1] = skel_crop
    endpoints = [(int(x + x0), int(y + y0)) for x, y in eps_crop]
    return Skeleton(mask=skel, endpoints=endpoints, terminal_slopes=slopes)


def classify(mask, spur_len: int = 5) -> MaskKind:
    """Sort a mask into single tail, overlap cluster, or other.

    A single tail is one connected skeleton segment ending in exactly two
    endpoints; an overlap cluster is one segment with more than two (several
    tails fused). Everything else (multiple segments, rings, blobs, isolated
    pixels) is other. Spurs shorter than ``spur_len`` do not count as
    endpoints (rasterization noise, not tail termini).
    """
    mask = as_mask(mask)
    if not mask.any():
        raise ValueError("empty mask")
    ys, xs = np.nonzero(mask)
    crop = mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    skel = prune_spurs(thin(crop), spur_len)
    if count_components(skel, 8) != 1:
        return MaskKind.OTHER
    n_endpoints = len(find_endpoints(skel))
    if n_endpoints == 2:
        return MaskKind.SINGLE_TAIL
    if n_endpoints > 2:
        return MaskKind.OVERLAP_CLUSTER
    return MaskKind.OTHER
