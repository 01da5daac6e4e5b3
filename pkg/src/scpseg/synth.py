"""Seeded synthetic two-region corpus with exact ground truth.

Each image is an elliptical object inside one half of a two-colored
background. The color step between the halves and the object contrast are
tuned so both candidate cuts are cheap, with the balanced background split
slightly preferred: an unconstrained normalized cut splits the background,
and scribbles are needed to steer the cut onto the object. Scribbles are
brush strokes (contiguous random walks): a few on the object and several
on the background spanning both halves, which is exactly the clustered
supervision an interactive user produces. Scribble files, ground truth and
a manifest are written alongside the images.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .ncut import rle_encode


@dataclass(frozen=True)
class SynthConfig:
    count: int = 20
    size: int = 64
    seed: int = 1
    strokes_object: int = 3
    strokes_background: int = 6
    stroke_length: int = 12
    noise_sigma: float = 4.0


def _clip_u8(a):
    return np.clip(np.round(a), 0, 255).astype(np.uint8)


def _random_stroke(rng, region_idx: np.ndarray, size: int, length: int) -> list:
    """Random-walk brush stroke constrained to the given pixel set."""
    allowed = set(int(p) for p in region_idx)
    cur = int(region_idx[rng.integers(len(region_idx))])
    out = [cur]
    steps = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (-1, -1))
    for _ in range(length * 3):
        if len(out) >= length:
            break
        y, x = divmod(cur, size)
        cand = []
        for dy, dx in steps:
            ny, nx = y + dy, x + dx
            if 0 <= ny < size and 0 <= nx < size and ny * size + nx in allowed:
                cand.append(ny * size + nx)
        if not cand:
            break
        cur = cand[int(rng.integers(len(cand)))]
        if cur not in out:
            out.append(cur)
    return out


def make_image(index: int, cfg: SynthConfig):
    """One synthetic (image, ground-truth labels, labeled pixel list)."""
    rng = np.random.Generator(np.random.PCG64([cfg.seed, index]))
    s = cfg.size

    # Two background halves separated by a moderate color step.
    color_a = rng.uniform(40, 100, size=3)
    step = rng.uniform(60, 90, size=3) * rng.choice([-1.0, 1.0], size=3)
    color_b = np.clip(color_a + step, 10, 245)
    horizontal = bool(rng.integers(0, 2))
    boundary = int(rng.uniform(0.42, 0.58) * s)

    yy, xx = np.mgrid[0:s, 0:s]
    axis = xx if horizontal else yy
    half = axis >= boundary
    img = np.where(half[:, :, None], color_b[None, None, :], color_a[None, None, :])
    img = img.astype(np.float64)

    # Elliptical object inside one half, contrast a notch above the step so
    # its cut is affordable but the balanced background split still wins
    # without constraints.
    side = int(rng.integers(0, 2))
    local = color_b if side else color_a
    lo = (boundary if side else 0) / s
    hi = (s if side else boundary) / s
    span = hi - lo
    cu = (lo + span * rng.uniform(0.38, 0.62)) * s
    cother = rng.uniform(0.3, 0.7) * s
    cx, cy = (cu, cother) if horizontal else (cother, cu)
    ry = rng.uniform(0.55, 0.8) * span * s / 2
    rx = rng.uniform(0.55, 0.8) * span * s / 2
    theta = rng.uniform(0, np.pi)
    dy, dx = yy - cy, xx - cx
    u = np.cos(theta) * dx + np.sin(theta) * dy
    v = -np.sin(theta) * dx + np.cos(theta) * dy
    mask = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0

    offset = rng.uniform(110, 150, size=3) * rng.choice([-1.0, 1.0], size=3)
    img[mask] = np.clip(local + offset, 5, 250)

    img += rng.normal(0.0, cfg.noise_sigma, size=img.shape)
    pixels = _clip_u8(img)
    gt = mask.astype(np.int64).ravel()

    labeled = _pick_scribbles(mask, cfg, horizontal, boundary, side, rng)
    return pixels, gt, labeled


def _pick_scribbles(mask, cfg: SynthConfig, horizontal, boundary, side, rng):
    """Strokes on the object plus background strokes alternating between the
    far half (without the object) and the near half, so must-links span the
    background step."""
    s = mask.shape[0]
    flat_obj = np.flatnonzero(mask.ravel())
    flat_bg = np.flatnonzero(~mask.ravel())
    axis_pos = (flat_bg % s) if horizontal else (flat_bg // s)
    in_far = (axis_pos >= boundary) != bool(side)
    far = flat_bg[in_far]
    near = flat_bg[~in_far]

    labeled = {}
    for _ in range(cfg.strokes_object):
        for p in _random_stroke(rng, flat_obj, s, cfg.stroke_length):
            labeled.setdefault(p, "object")
    for i in range(cfg.strokes_background):
        region = far if i % 2 == 0 else near
        for p in _random_stroke(rng, region, s, cfg.stroke_length):
            labeled.setdefault(p, "background")
    return sorted(labeled.items())


def generate_corpus(out_dir, cfg: SynthConfig) -> dict:
    """Write images, ground truth, scribbles and a manifest; returns the
    manifest dict."""
    from PIL import Image

    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i in range(cfg.count):
        pixels, gt, labeled = make_image(i, cfg)
        s = cfg.size
        img_name = f"img_{i:03d}.png"
        gt_name = f"gt_{i:03d}.json"
        scrib_name = f"scribbles_{i:03d}.json"

        Image.fromarray(pixels, mode="RGB").save(os.path.join(out_dir, img_name))
        with open(os.path.join(out_dir, gt_name), "w") as fh:
            json.dump({"k": 2, "ncut_value": 0.0, "labels_rle": rle_encode(gt)}, fh)
        with open(os.path.join(out_dir, scrib_name), "w") as fh:
            json.dump(
                {
                    "image": img_name,
                    "labeled": [
                        {"x": int(p % s), "y": int(p // s), "label": lab}
                        for p, lab in labeled
                    ],
                },
                fh,
                indent=1,
            )
        entries.append(
            {"image": img_name, "ground_truth": gt_name, "scribbles": scrib_name}
        )

    manifest = {
        "seed": cfg.seed,
        "size": cfg.size,
        "count": cfg.count,
        "stroke_length": cfg.stroke_length,
        "entries": entries,
    }
    with open(os.path.join(out_dir, "corpus.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest
