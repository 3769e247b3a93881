"""Raster primitives: images, binary masks, color conversion, components, morphology, RLE.

Conventions used across the package:

* an image is a ``uint8`` array of shape ``(height, width, 3)`` in RGB order;
* a mask is a ``bool`` array of shape ``(height, width)``;
* public geometry is expressed as ``(x, y)`` pairs, array indexing as ``[y, x]``;
* HSV uses the half-degree hue scale: h in [0, 180), s and v in [0, 255].
"""
from __future__ import annotations

import struct

import numpy as np
from PIL import Image
from scipy import ndimage

WHITE = np.array([255, 255, 255], dtype=np.uint8)

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


def as_image(arr) -> np.ndarray:
    """Validate and return an RGB image array (uint8, HxWx3)."""
    img = np.asarray(arr)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 RGB array, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image dimensions must be positive")
    if img.dtype != np.uint8:
        if np.issubdtype(img.dtype, np.integer) and img.min() >= 0 and img.max() <= 255:
            img = img.astype(np.uint8)
        else:
            raise ValueError(f"expected uint8 pixel data, got {img.dtype}")
    return img


def as_mask(arr, like: np.ndarray | None = None) -> np.ndarray:
    """Validate and return a boolean mask, optionally checked against a reference shape."""
    mask = np.asarray(arr)
    if mask.dtype != np.bool_:
        mask = mask.astype(bool)
    if mask.ndim != 2:
        raise ValueError(f"expected an HxW mask, got shape {mask.shape}")
    if like is not None and mask.shape != like.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match reference {like.shape[:2]}")
    return mask


def blank_image(width: int, height: int, color=WHITE) -> np.ndarray:
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = np.asarray(color, dtype=np.uint8)
    return img


def rgb_to_hsv(rgb) -> np.ndarray:
    """Hexcone RGB->HSV with h in [0, 180), s and v in [0, 255].

    Accepts a single (r, g, b) triple or any array of shape (..., 3) with
    8-bit channel values. Gray pixels (r=g=b) map to h=0, s=0.
    """
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ValueError("last axis must hold RGB triples")
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    v = arr.max(axis=-1)
    delta = v - arr.min(axis=-1)
    s = np.where(v > 0, 255.0 * delta / np.maximum(v, 1e-12), 0.0)
    dsafe = np.maximum(delta, 1e-12)
    hue = np.where(
        delta == 0,
        0.0,
        np.where(
            v == r,
            ((g - b) / dsafe) % 6.0,
            np.where(v == g, (b - r) / dsafe + 2.0, (r - g) / dsafe + 4.0),
        ),
    )
    return np.stack([hue * 30.0, s, v], axis=-1)


def hsv_to_rgb(hsv) -> np.ndarray:
    """Inverse of :func:`rgb_to_hsv`; returns float RGB in [0, 255]."""
    arr = np.asarray(hsv, dtype=np.float64)
    h, s, v = arr[..., 0], arr[..., 1], arr[..., 2]
    h6 = (h / 30.0) % 6.0
    i = np.floor(h6)
    f = h6 - i
    sn = s / 255.0
    p = v * (1.0 - sn)
    q = v * (1.0 - sn * f)
    t = v * (1.0 - sn * (1.0 - f))
    i = i.astype(np.int64)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def connected_components(mask, connectivity: int = 8) -> list[np.ndarray]:
    """Split a mask into its maximal connected regions.

    Returns disjoint masks whose union is the input, ordered by their
    top-left-most pixel in row-major order. An empty mask yields [].
    """
    mask = as_mask(mask)
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    structure = _STRUCT_8 if connectivity == 8 else _STRUCT_4
    labels, count = ndimage.label(mask, structure=structure)
    if count == 0:
        return []
    flat = labels.ravel()
    ids, first = np.unique(flat, return_index=True)
    order = [int(i) for _, i in sorted(zip(first[ids > 0], ids[ids > 0]))]
    slices = ndimage.find_objects(labels)
    out = []
    for lab in order:
        comp = np.zeros_like(mask)
        sl = slices[lab - 1]
        comp[sl] = labels[sl] == lab
        out.append(comp)
    return out


def count_components(mask, connectivity: int = 8) -> int:
    mask = as_mask(mask)
    structure = _STRUCT_8 if connectivity == 8 else _STRUCT_4
    return int(ndimage.label(mask, structure=structure)[1])


def disk_element(radius: float) -> np.ndarray:
    """Disk structuring element: pixels at Euclidean center distance <= radius."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    r = int(np.floor(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= radius * radius + 1e-9


def _bbox(mask: np.ndarray, pad: int = 0):
    ys, xs = np.nonzero(mask)
    h, w = mask.shape
    return (
        max(0, int(ys.min()) - pad),
        min(h, int(ys.max()) + 1 + pad),
        max(0, int(xs.min()) - pad),
        min(w, int(xs.max()) + 1 + pad),
    )


def dilate(mask, radius: float) -> np.ndarray:
    """Morphological dilation with a disk element; radius 0 is the identity."""
    mask = as_mask(mask)
    if radius == 0 or not mask.any():
        return mask.copy()
    y0, y1, x0, x1 = _bbox(mask, pad=int(np.ceil(radius)))
    out = np.zeros_like(mask)
    out[y0:y1, x0:x1] = ndimage.binary_dilation(mask[y0:y1, x0:x1], structure=disk_element(radius))
    return out


def erode(mask, radius: float) -> np.ndarray:
    """Morphological erosion with a disk element; radius 0 is the identity."""
    mask = as_mask(mask)
    if radius == 0 or not mask.any():
        return mask.copy()
    y0, y1, x0, x1 = _bbox(mask)
    out = np.zeros_like(mask)
    out[y0:y1, x0:x1] = ndimage.binary_erosion(mask[y0:y1, x0:x1], structure=disk_element(radius))
    return out


def closing(mask, radius: float) -> np.ndarray:
    return erode(dilate(mask, radius), radius)


def fill_small_holes(mask, max_area: int) -> np.ndarray:
    """Fill enclosed background pockets of at most ``max_area`` pixels.

    Pinholes appear where retained masks were erased out of a proposal; they
    would otherwise read as skeleton loops. Larger enclosed regions are kept.
    """
    mask = as_mask(mask)
    if max_area <= 0 or not mask.any():
        return mask.copy()
    y0, y1, x0, x1 = _bbox(mask)
    sub = mask[y0:y1, x0:x1]
    filled = ndimage.binary_fill_holes(sub)
    holes = filled & ~sub
    if not holes.any():
        return mask.copy()
    labels, count = ndimage.label(holes, structure=_STRUCT_4)
    areas = np.bincount(labels.ravel())
    small = areas <= max_area
    small[0] = False
    out = mask.copy()
    out[y0:y1, x0:x1] |= small[labels]
    return out


# --- run-length encoding -------------------------------------------------
#
# Byte layout (all little-endian uint32): width, height, run count, then
# (start, length) per foreground run. Runs index the column-major flattened
# mask and are maximal, sorted, and non-overlapping.


def rle_encode(mask) -> bytes:
    mask = as_mask(mask)
    h, w = mask.shape
    flat = mask.ravel(order="F")
    padded = np.concatenate([[False], flat, [False]]).astype(np.int8)
    diff = np.diff(padded)
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1)
    header = struct.pack("<III", w, h, len(starts))
    if len(starts) == 0:
        return header
    pairs = np.empty((len(starts), 2), dtype="<u4")
    pairs[:, 0] = starts
    pairs[:, 1] = ends - starts
    return header + pairs.tobytes()


def rle_decode(data: bytes) -> np.ndarray:
    if len(data) < 12:
        raise ValueError("malformed RLE: truncated header")
    w, h, count = struct.unpack_from("<III", data, 0)
    if w < 1 or h < 1:
        raise ValueError("malformed RLE: bad dimensions")
    if len(data) != 12 + 8 * count:
        raise ValueError("malformed RLE: payload size mismatch")
    total = w * h
    flat = np.zeros(total, dtype=bool)
    if count:
        pairs = np.frombuffer(data, dtype="<u4", offset=12).reshape(count, 2)
        starts = pairs[:, 0].astype(np.int64)
        lengths = pairs[:, 1].astype(np.int64)
        if (lengths < 1).any():
            raise ValueError("malformed RLE: empty run")
        if (starts + lengths > total).any():
            raise ValueError("malformed RLE: run exceeds pixel count")
        prev_end = -1
        for s, n in zip(starts.tolist(), lengths.tolist()):
            if s <= prev_end:
                raise ValueError("malformed RLE: overlapping or unsorted runs")
            flat[s : s + n] = True
            prev_end = s + n - 1
    return flat.reshape((h, w), order="F")


# --- PNG I/O --------------------------------------------------------------


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(img, path) -> None:
    Image.fromarray(as_image(img), mode="RGB").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def save_mask(mask, path) -> None:
    Image.fromarray(as_mask(mask).astype(np.uint8) * 255, mode="L").save(path, format="PNG")
