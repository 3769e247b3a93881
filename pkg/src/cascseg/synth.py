"""Deterministic generator of sperm-like scenes with exhaustive ground truth.

Every scene is a pure function of (params, seed). Heads are filled ellipses
colored inside the configured purple HSV band; tails are cubic Bezier tubes
rasterized without anti-aliasing, starting tangent to the head's major axis
at a boundary attachment point, so head-tail adjacency and slope agreement
hold by construction. Instance masks are the exact rendered footprints.
"""
from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import raster
from .matching import angle_difference
from .skeleton import MaskKind, classify, skeletonize


@dataclass
class SceneParams:
    width: int = 720
    height: int = 540
    n_sperm: int = 3
    overlap_bias: float = 0.0
    tail_width: int = 3
    noise_speck_count: int = 6
    head_hue: tuple[float, float] = (110.0, 170.0)
    head_sat: tuple[float, float] = (60.0, 190.0)
    head_val: tuple[float, float] = (120.0, 200.0)
    head_major: tuple[float, float] = (16.0, 20.0)
    head_minor: tuple[float, float] = (8.0, 10.0)
    tail_length: tuple[float, float] = (80.0, 150.0)

    def validate(self) -> "SceneParams":
        if self.width < 1 or self.height < 1:
            raise ValueError("canvas dimensions must be positive")
        if self.n_sperm < 0:
            raise ValueError("n_sperm must be >= 0")
        if not 0.0 <= self.overlap_bias <= 1.0:
            raise ValueError("overlap_bias must be in [0, 1]")
        if self.tail_width < 1:
            raise ValueError("tail_width must be >= 1")
        return self


@dataclass
class SpermInstance:
    id: int
    head_mask: np.ndarray
    tail_mask: np.ndarray
    full_mask: np.ndarray
    center: tuple[float, float]
    major_len: float
    minor_len: float
    orientation: float
    attachment: tuple[float, float]
    control_points: list[tuple[float, float]]


@dataclass
class SyntheticScene:
    image: np.ndarray
    instances: list[SpermInstance]
    seed: int
    params: SceneParams

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]


def _unit(deg: float) -> np.ndarray:
    rad = np.deg2rad(deg)
    return np.array([np.cos(rad), np.sin(rad)])


def _rotate(vec: np.ndarray, deg: float) -> np.ndarray:
    rad = np.deg2rad(deg)
    c, s = np.cos(rad), np.sin(rad)
    return np.array([vec[0] * c - vec[1] * s, vec[0] * s + vec[1] * c])


def _ellipse_mask(shape, center, semi_a, semi_b, theta_deg) -> np.ndarray:
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    r = max(semi_a, semi_b) + 2.0
    x0 = max(0, int(np.floor(center[0] - r)))
    x1 = min(w, int(np.ceil(center[0] + r)) + 1)
    y0 = max(0, int(np.floor(center[1] - r)))
    y1 = min(h, int(np.ceil(center[1] + r)) + 1)
    if x0 >= x1 or y0 >= y1:
        return out
    yy, xx = np.mgrid[y0:y1, x0:x1]
    th = np.deg2rad(theta_deg)
    dx = xx - center[0]
    dy = yy - center[1]
    u = dx * np.cos(th) + dy * np.sin(th)
    v = -dx * np.sin(th) + dy * np.cos(th)
    out[y0:y1, x0:x1] = (u / semi_a) ** 2 + (v / semi_b) ** 2 <= 1.0
    return out


def _bezier(control: np.ndarray, ts: np.ndarray) -> np.ndarray:
    p0, p1, p2, p3 = control
    t = ts[:, None]
    mt = 1.0 - t
    return mt**3 * p0 + 3 * mt**2 * t * p1 + 3 * mt * t**2 * p2 + t**3 * p3


def _tube_mask(shape, control: np.ndarray, width: int) -> np.ndarray:
    span = np.abs(control.max(0) - control.min(0)).sum() + 8
    ts = np.linspace(0.0, 1.0, max(64, int(3 * span)))
    pts = np.rint(_bezier(control, ts)).astype(np.int32)
    canvas = np.zeros(shape, dtype=np.uint8)
    cv2.polylines(canvas, [pts.reshape(-1, 1, 2)], False, 1, thickness=width, lineType=cv2.LINE_8)
    return canvas.astype(bool)


def _clip_point(p: np.ndarray, w: int, h: int, margin: int = 4) -> np.ndarray:
    return np.array([np.clip(p[0], margin, w - 1 - margin), np.clip(p[1], margin, h - 1 - margin)])


def _make_tail(rng, params: SceneParams, attachment, direction, own_head, other_heads, prev_controls):
    """Sample a tail tube; returns (mask, control_points) or None on failure."""
    w, h = params.width, params.height
    shape = (h, w)
    p0 = np.asarray(attachment, dtype=np.float64)
    for attempt in range(70):
        length = rng.uniform(*params.tail_length)
        steer = attempt < 40 and prev_controls and rng.random() < params.overlap_bias
        if steer:
            # route through the nearest of a few sampled points on earlier
            # tails, hitting it at a parameter that keeps the launch smooth
            cand_pts = []
            for _ in range(8):
                ctrl = prev_controls[int(rng.integers(len(prev_controls)))]
                t_probe = rng.uniform(0.2, 0.8)
                cand_pts.append(_bezier(np.asarray(ctrl), np.array([t_probe]))[0])
            target = min(cand_pts, key=lambda p: float(np.hypot(*(p - p0))))
            away = target - p0
            dist = float(np.hypot(*away))
            if dist < 25.0:
                continue
            p1 = _clip_point(p0 + direction * min(0.35 * length, 0.6 * dist), w, h)
            t_hit = float(np.clip(dist / (dist + 0.5 * length), 0.4, 0.8))
            leg = target - p1
            leg_n = float(np.hypot(*leg))
            if leg_n < 1e-6:
                continue
            p3 = _clip_point(target + leg / leg_n * 0.3 * length, w, h)
            mt = 1.0 - t_hit
            p2 = (target - mt**3 * p0 - 3 * mt**2 * t_hit * p1 - t_hit**3 * p3) / (3 * mt * t_hit**2)
            p2 = _clip_point(p2, w, h)
        else:
            p1 = _clip_point(p0 + direction * length * rng.uniform(0.28, 0.4), w, h)
            d1 = rng.uniform(-30, 30)
            d2 = d1 + rng.uniform(-30, 30)
            p2 = _clip_point(p1 + _rotate(direction, d1) * length * rng.uniform(0.28, 0.4), w, h)
            p3 = _clip_point(p2 + _rotate(direction, d2) * length * rng.uniform(0.28, 0.4), w, h)
        control = np.stack([p0, p1, p2, p3])
        samples = _bezier(control, np.linspace(0.0, 1.0, 64))
        arc = float(np.hypot(*np.diff(samples, axis=0).T).sum())
        if arc > 2.5 * params.tail_length[1]:
            continue
        mask = _tube_mask(shape, control, params.tail_width)
        if not mask.any():
            continue
        if (mask & other_heads).any():
            continue
        # the tube must meet its head but only graze it: deep overlap leaves
        # a ragged bite once the head mask is erased by the pipeline
        if not (raster.dilate(mask, 1) & own_head).any():
            continue
        if int(np.count_nonzero(mask & own_head)) > 8:
            continue
        if classify(mask) is not MaskKind.SINGLE_TAIL:
            continue
        # near-self-tangent curves read as single at native width but grow
        # bridge branches once thickened or upscaled; reject them
        if classify(raster.dilate(mask, 1)) is not MaskKind.SINGLE_TAIL:
            continue
        # tangency must hold as measured: steering can kink the launch
        sk = skeletonize(mask)
        if len(sk.endpoints) != 2:
            continue
        near = min(range(2), key=lambda i: np.hypot(sk.endpoints[i][0] - p0[0], sk.endpoints[i][1] - p0[1]))
        if np.hypot(sk.endpoints[near][0] - p0[0], sk.endpoints[near][1] - p0[1]) > 6:
            continue
        launch = float(np.degrees(np.arctan2(direction[1], direction[0]))) % 180.0
        if angle_difference(sk.terminal_slopes[near], launch) > 25.0:
            continue
        return mask, [tuple(map(float, p)) for p in control]
    return None


def generate(params: SceneParams, seed: int) -> SyntheticScene:
    """Render a scene and its ground truth; bit-identical for equal inputs."""
    params.validate()
    rng = np.random.default_rng(np.random.PCG64(seed))
    w, h = params.width, params.height
    image = rng.integers(246, 254, size=(h, w, 3)).astype(np.uint8)

    # heads first so tails can avoid every head
    heads = []
    margin = 30
    if params.n_sperm > 0 and (w < 2 * margin + 20 or h < 2 * margin + 20):
        raise ValueError("placement failed: canvas too small")
    for i in range(params.n_sperm):
        placed = False
        for _ in range(200):
            center = np.array([rng.uniform(margin, w - margin), rng.uniform(margin, h - margin)])
            orientation = rng.uniform(0.0, 180.0)
            semi_a = rng.uniform(*params.head_major) / 2.0
            semi_b = rng.uniform(*params.head_minor) / 2.0
            if any(
                np.hypot(*(center - prev["center"])) < semi_a + prev["semi_a"] + 4
                for prev in heads
            ):
                continue
            mask = _ellipse_mask((h, w), center, semi_a, semi_b, orientation)
            heads.append(
                {
                    "center": center,
                    "orientation": orientation,
                    "semi_a": semi_a,
                    "semi_b": semi_b,
                    "mask": mask,
                    "color": np.rint(
                        raster.hsv_to_rgb(
                            [
                                rng.uniform(*params.head_hue),
                                rng.uniform(*params.head_sat),
                                rng.uniform(*params.head_val),
                            ]
                        )
                    ).astype(np.uint8),
                    "tip_sign": 1.0 if rng.random() < 0.5 else -1.0,
                }
            )
            placed = True
            break
        if not placed:
            raise ValueError("placement failed: could not place head without overlap")

    # tails, each avoiding every other head
    instances: list[SpermInstance] = []
    all_heads = np.zeros((h, w), dtype=bool)
    for head in heads:
        all_heads |= head["mask"]
    prev_controls: list[list[tuple[float, float]]] = []
    tails = []
    for i, head in enumerate(heads):
        made = None
        attachment = None
        for tip_sign in (head["tip_sign"], -head["tip_sign"]):
            u = _unit(head["orientation"]) * tip_sign
            attachment = head["center"] + u * head["semi_a"]
            # probe the start offset: as far out as possible while the tube
            # still grazes the head rim (a deep bite would be erased with the
            # head at the pipeline's head stage)
            tube_start = attachment + u * (params.tail_width / 2.0)
            for extra in (1.0, 0.8, 0.6, 0.4, 0.2, 0.0):
                probe_start = attachment + u * (params.tail_width / 2.0 + extra)
                stub = np.stack([probe_start + u * (3.0 * k) for k in range(4)])
                probe = _tube_mask((h, w), stub, params.tail_width)
                if (raster.dilate(probe, 1) & head["mask"]).any():
                    tube_start = probe_start
                    break
            made = _make_tail(
                rng, params, tube_start, u, head["mask"], all_heads & ~head["mask"], prev_controls
            )
            if made is not None:
                break
        if made is None:
            raise ValueError("placement failed: could not route a tail")
        mask, control = made
        gray = int(rng.integers(60, 91))
        tails.append({"mask": mask, "gray": gray, "attachment": attachment, "control": control})
        prev_controls.append(control)

    # paint: tails, then specks, then heads (heads stay cleanly purple)
    for tail in tails:
        image[tail["mask"]] = tail["gray"]
    for _ in range(params.noise_speck_count):
        for _ in range(50):
            cx, cy = rng.uniform(4, w - 4), rng.uniform(4, h - 4)
            radius = rng.uniform(0.8, 1.6)
            if any(
                np.hypot(cx - head["center"][0], cy - head["center"][1])
                < head["semi_a"] + radius + 3
                for head in heads
            ):
                continue
            speck = _ellipse_mask((h, w), (cx, cy), radius, radius, 0.0)
            image[speck] = int(rng.integers(50, 121))
            break
    for head in heads:
        image[head["mask"]] = head["color"]

    for i, (head, tail) in enumerate(zip(heads, tails)):
        instances.append(
            SpermInstance(
                id=i,
                head_mask=head["mask"],
                tail_mask=tail["mask"],
                full_mask=head["mask"] | tail["mask"],
                center=tuple(map(float, head["center"])),
                major_len=float(head["semi_a"] * 2),
                minor_len=float(head["semi_b"] * 2),
                orientation=float(head["orientation"]),
                attachment=tuple(map(float, tail["attachment"])),
                control_points=tail["control"],
            )
        )
    return SyntheticScene(image=image, instances=instances, seed=seed, params=params)


# --- persistence ----------------------------------------------------------


def export_scene(scene: SyntheticScene, out_dir) -> Path:
    """Write image.png, per-instance mask PNGs, and the ground-truth manifest."""
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    raster.save_image(scene.image, out / "image.png")
    entries = []
    for inst in scene.instances:
        for part in ("head", "tail", "full"):
            raster.save_mask(getattr(inst, f"{part}_mask"), out / "masks" / f"inst_{inst.id:03d}_{part}.png")
        entries.append(
            {
                "id": inst.id,
                "kind": "complete",
                "rle": base64.b64encode(raster.rle_encode(inst.full_mask)).decode("ascii"),
                "geometry": {
                    "center": list(inst.center),
                    "major_len": inst.major_len,
                    "minor_len": inst.minor_len,
                    "orientation": inst.orientation,
                    "attachment": list(inst.attachment),
                    "control_points": [list(p) for p in inst.control_points],
                },
            }
        )
    manifest = {
        "schema": 1,
        "image": "image.png",
        "width": scene.width,
        "height": scene.height,
        "instances": entries,
        "scene": {"seed": scene.seed, "params": asdict(scene.params)},
    }
    with open(out / "gt.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _params_from_dict(d: dict) -> SceneParams:
    kwargs = dict(d)
    for key, val in kwargs.items():
        if isinstance(val, list):
            kwargs[key] = tuple(val)
    return SceneParams(**kwargs)


def load_scene(scene_dir) -> SyntheticScene:
    """Rebuild a scene from an export directory (image, masks, gt.json)."""
    src = Path(scene_dir)
    with open(src / "gt.json") as fh:
        manifest = json.load(fh)
    image = raster.load_image(src / "image.png")
    instances = []
    for entry in manifest["instances"]:
        gid = entry["id"]
        geo = entry["geometry"]
        head = raster.load_mask(src / "masks" / f"inst_{gid:03d}_head.png")
        tail = raster.load_mask(src / "masks" / f"inst_{gid:03d}_tail.png")
        full = raster.load_mask(src / "masks" / f"inst_{gid:03d}_full.png")
        instances.append(
            SpermInstance(
                id=gid,
                head_mask=head,
                tail_mask=tail,
                full_mask=full,
                center=tuple(geo["center"]),
                major_len=geo["major_len"],
                minor_len=geo["minor_len"],
                orientation=geo["orientation"],
                attachment=tuple(geo["attachment"]),
                control_points=[tuple(p) for p in geo["control_points"]],
            )
        )
    scene_info = manifest.get("scene", {})
    return SyntheticScene(
        image=image,
        instances=instances,
        seed=scene_info.get("seed", 0),
        params=_params_from_dict(scene_info.get("params", {})),
    )
