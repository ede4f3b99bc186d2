"""Synthetic bi-temporal change pairs for desk-scale training and testing.

Each pair shares a smooth random texture background; change is simulated by
solid geometric shapes (rectangles, discs, triangles) present in exactly one
temporal image. Shapes present in both images act as unchanged distractors.
The pixel mask is the exact union of the changed shape footprints, so the
generated ground truth is noise-free even though the images are not.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .data import generate_patch_labels, save_mask_png

# Generator constants (also quoted in the CLI help).
BACKGROUND_CELLS = 8        # coarse texture grid upsampled to image size
PIXEL_NOISE_STD = 0.02      # per-image additive Gaussian noise
BRIGHTNESS_JITTER = 0.05    # per-image global brightness offset, uniform +-
SHAPE_KINDS = ("rectangle", "disc", "triangle")
MIN_SHAPE_CONTRAST = 0.25   # min |shape color - local background| per pair
NONTRIVIAL_PATCH = 8        # regenerate until patch labels at this size are mixed


def _smooth_background(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = rng.random((BACKGROUND_CELLS, BACKGROUND_CELLS, 3)).astype(np.float32)
    channels = []
    for c in range(3):
        img = Image.fromarray(coarse[:, :, c], mode="F")
        channels.append(np.asarray(img.resize((size, size), Image.BILINEAR)))
    return np.clip(np.stack(channels, axis=-1), 0.0, 1.0)


def _raster_shape(rng: np.random.Generator, size: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    # extents span several stride-8 feature cells so shapes stay localizable
    kind = SHAPE_KINDS[rng.integers(0, len(SHAPE_KINDS))]
    extent = int(rng.integers(max(12, size * 5 // 16), max(16, size * 5 // 8)))
    r0 = int(rng.integers(0, size - extent))
    c0 = int(rng.integers(0, size - extent))
    if kind == "rectangle":
        h = int(rng.integers(extent // 2, extent)) + 1
        w = int(rng.integers(extent // 2, extent)) + 1
        return (rows >= r0) & (rows < r0 + h) & (cols >= c0) & (cols < c0 + w)
    if kind == "disc":
        radius = extent / 2.0
        cr, cc = r0 + radius, c0 + radius
        return (rows - cr) ** 2 + (cols - cc) ** 2 <= radius**2
    # triangle: three vertices inside the bounding box, half-plane tests
    pts = r0 + rng.random((3, 2)) * extent
    pts[:, 1] += c0 - r0
    (r1, c1), (r2, c2), (r3, c3) = pts
    d1 = (rows - r2) * (c1 - c2) - (r1 - r2) * (cols - c2)
    d2 = (rows - r3) * (c2 - c3) - (r2 - r3) * (cols - c3)
    d3 = (rows - r1) * (c3 - c1) - (r3 - r1) * (cols - c1)
    neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(neg & pos)


def _shape_color(rng: np.random.Generator, background: np.ndarray, footprint: np.ndarray) -> np.ndarray:
    local = background[footprint].mean(axis=0)
    for _ in range(16):
        color = rng.random(3).astype(np.float32)
        if np.abs(color - local).max() >= MIN_SHAPE_CONTRAST:
            return color
    return np.clip(1.0 - local, 0.0, 1.0)  # fall back to the complement


def _generate_pair(
    rng: np.random.Generator, size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    background = _smooth_background(rng, size)
    rows, cols = np.mgrid[0:size, 0:size]
    img_a = background.copy()
    img_b = background.copy()
    occupied = np.zeros((size, size), dtype=bool)
    mask = np.zeros((size, size), dtype=np.uint8)

    n_changed = int(rng.integers(1, 3))
    n_static = int(rng.integers(0, 2))
    min_area = max(64, size * size // 40)  # skip slivers the head cannot resolve
    placed_changed = 0
    for index in range(n_changed + n_static):
        changed = index < n_changed
        for _ in range(24):  # rejection-sample a free spot
            footprint = _raster_shape(rng, size, rows, cols)
            if footprint.sum() >= min_area and not (footprint & occupied).any():
                break
        else:
            continue
        occupied |= footprint
        color = _shape_color(rng, background, footprint)
        if changed:
            target = img_a if rng.integers(0, 2) == 0 else img_b
            target[footprint] = color
            mask[footprint] = 1
            placed_changed += 1
        else:
            img_a[footprint] = color
            img_b[footprint] = color
    if placed_changed == 0:
        raise RuntimeError("no changed shape placed")

    for img in (img_a, img_b):
        img += rng.normal(0.0, PIXEL_NOISE_STD, img.shape).astype(np.float32)
        img += np.float32(rng.uniform(-BRIGHTNESS_JITTER, BRIGHTNESS_JITTER))
        np.clip(img, 0.0, 1.0, out=img)
    return img_a, img_b, mask


def _nontrivial(mask: np.ndarray) -> bool:
    grid = generate_patch_labels(mask, NONTRIVIAL_PATCH, NONTRIVIAL_PATCH).grid
    return bool(grid.any()) and not bool(grid.all())


def _save_image(path: Path, img: np.ndarray) -> None:
    arr = np.round(img * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def synth_dataset(
    out_dir: str | Path,
    n_samples: int,
    image_size: int = 64,
    seed: int = 0,
    train_fraction: float = 0.8,
) -> dict[str, int]:
    """Write a train/test dataset of synthetic pairs; deterministic per seed.

    Returns the number of samples written per split.
    """
    if image_size % 64 != 0:
        raise ValueError(f"image_size must be divisible by 64, got {image_size}")
    if n_samples < 2:
        raise ValueError("need at least 2 samples to populate both splits")
    out = Path(out_dir)
    n_train = max(1, min(n_samples - 1, int(round(n_samples * train_fraction))))
    counts = {"train": n_train, "test": n_samples - n_train}

    for split in counts:
        for sub in ("A", "B", "label"):
            (out / split / sub).mkdir(parents=True, exist_ok=True)

    for index in range(n_samples):
        for attempt in range(64):
            rng = np.random.default_rng([seed, index, attempt])
            try:
                img_a, img_b, mask = _generate_pair(rng, image_size)
            except RuntimeError:
                continue
            if _nontrivial(mask):
                break
        else:
            raise RuntimeError(f"could not generate a usable pair for index {index}")
        split = "train" if index < n_train else "test"
        sid = f"synth_{index:05d}"
        _save_image(out / split / "A" / f"{sid}.png", img_a)
        _save_image(out / split / "B" / f"{sid}.png", img_b)
        save_mask_png(out / split / "label" / f"{sid}.png", mask)
    return counts
