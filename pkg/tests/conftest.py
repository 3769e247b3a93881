"""Shared fixtures and independent brute-force oracles.

The oracles here (flood fill, 3x3 neighbor counting, exhaustive assignment)
deliberately avoid the library code paths they check.
"""
from __future__ import annotations

from itertools import permutations

import numpy as np
import pytest

import cascseg as cs


def flood_fill_components(mask: np.ndarray, connectivity: int = 8) -> list[np.ndarray]:
    """Reference connected components via BFS flood fill."""
    mask = np.asarray(mask, dtype=bool)
    if connectivity == 8:
        offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    else:
        offsets = [(-1, 0), (0, -1), (0, 1), (1, 0)]
    seen = np.zeros_like(mask)
    comps = []
    h, w = mask.shape
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or seen[sy, sx]:
                continue
            comp = np.zeros_like(mask)
            stack = [(sy, sx)]
            seen[sy, sx] = True
            while stack:
                y, x = stack.pop()
                comp[y, x] = True
                for dy, dx in offsets:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            comps.append(comp)
    return comps


def brute_force_endpoints(skel: np.ndarray) -> list[tuple[int, int]]:
    """Reference endpoint detector: per-pixel 3x3 neighbor count."""
    skel = np.asarray(skel, dtype=bool)
    h, w = skel.shape
    out = []
    for y in range(h):
        for x in range(w):
            if not skel[y, x]:
                continue
            n = 0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dy == 0 and dx == 0:
                        continue
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and skel[ny, nx]:
                        n += 1
            if n == 1:
                out.append((x, y))
    return out


def brute_force_best_assignment(matrix: np.ndarray):
    """Exhaustive maximum-total assignment over all injections (n, m <= 6)."""
    n, m = matrix.shape
    best_total, best_pairs = -1.0, []
    rows = list(range(n))
    if n <= m:
        for perm in permutations(range(m), n):
            total = sum(matrix[i, j] for i, j in zip(rows, perm))
            if total > best_total:
                best_total = total
                best_pairs = list(zip(rows, perm))
    else:
        for perm in permutations(rows, m):
            total = sum(matrix[i, j] for j, i in enumerate(perm))
            if total > best_total:
                best_total = total
                best_pairs = [(i, j) for j, i in enumerate(perm)]
    return best_total, best_pairs


def random_blob_mask(rng: np.random.Generator, shape=(32, 32), density=0.25) -> np.ndarray:
    from scipy.ndimage import binary_dilation

    mask = rng.random(shape) < density
    if rng.random() < 0.5:
        mask = binary_dilation(mask, np.ones((2, 2), dtype=bool))
    return mask


@pytest.fixture(scope="session")
def simple_scene() -> cs.SyntheticScene:
    """Three well-separated sperm, no overlap."""
    return cs.generate(cs.SceneParams(n_sperm=3, overlap_bias=0.0), seed=7)


@pytest.fixture(scope="session")
def crossing_scene() -> cs.SyntheticScene:
    """Two sperm whose tails genuinely cross (deterministic seed scan)."""
    params = cs.SceneParams(n_sperm=2, overlap_bias=1.0)
    for seed in range(200):
        scene = cs.generate(params, seed)
        a, b = scene.instances
        if not (a.tail_mask & b.tail_mask).any():
            continue
        if cs.classify(a.tail_mask | b.tail_mask) is cs.MaskKind.OVERLAP_CLUSTER:
            return scene
    raise RuntimeError("no crossing scene found in seed scan")


@pytest.fixture(scope="session")
def default_config() -> cs.PipelineConfig:
    return cs.PipelineConfig().validate()
