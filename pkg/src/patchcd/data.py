"""Bi-temporal pair ingestion, patch-level label synthesis, and augmentation.

Annotation model: the full-resolution pixel mask is reduced to one binary
label per non-overlapping h x w patch ("does this patch contain any change"),
and that coarse grid is what supervises training. The pixel mask itself is
only consumed here, to build patch labels and to score predictions.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image


def check_patch_divisibility(height: int, width: int, patch_h: int, patch_w: int) -> None:
    """Reject image/patch combinations that do not tile exactly."""
    if patch_h <= 0 or patch_w <= 0:
        raise ValueError(f"patch size must be positive, got {patch_h}x{patch_w}")
    bad = []
    if height % patch_h != 0:
        bad.append(f"height {height} % patch_h {patch_h} = {height % patch_h}")
    if width % patch_w != 0:
        bad.append(f"width {width} % patch_w {patch_w} = {width % patch_w}")
    if bad:
        raise ValueError("image does not tile into patches: " + "; ".join(bad))


def _require_binary(mask: np.ndarray, what: str = "mask") -> np.ndarray:
    arr = np.asarray(mask)
    values = np.unique(arr)
    if not np.isin(values, (0, 1)).all():
        raise ValueError(f"{what} must be binary (0/1), found values {values.tolist()}")
    return arr.astype(np.uint8, copy=False)


@dataclasses.dataclass
class BiTemporalSample:
    """One registered image pair with an optional pixel-level change mask."""

    id: str
    image_t1: np.ndarray  # H x W x 3, float in [0, 1]
    image_t2: np.ndarray  # H x W x 3, float in [0, 1]
    pixel_mask: np.ndarray | None = None  # H x W, uint8 in {0, 1}

    def __post_init__(self):
        t1, t2 = np.asarray(self.image_t1), np.asarray(self.image_t2)
        if t1.ndim != 3 or t1.shape[2] != 3:
            raise ValueError(f"sample {self.id}: images must be HxWx3, got {t1.shape}")
        if t1.shape != t2.shape:
            raise ValueError(
                f"sample {self.id}: temporal images disagree in shape "
                f"({t1.shape} vs {t2.shape})"
            )
        for name, img in (("image_t1", t1), ("image_t2", t2)):
            if img.min() < 0.0 or img.max() > 1.0:
                raise ValueError(f"sample {self.id}: {name} values outside [0, 1]")
        if self.pixel_mask is not None:
            mask = _require_binary(self.pixel_mask, f"sample {self.id}: pixel_mask")
            if mask.shape != t1.shape[:2]:
                raise ValueError(
                    f"sample {self.id}: pixel_mask shape {mask.shape} does not match "
                    f"image shape {t1.shape[:2]}"
                )
            self.pixel_mask = mask

    @property
    def height(self) -> int:
        return self.image_t1.shape[0]

    @property
    def width(self) -> int:
        return self.image_t1.shape[1]


@dataclasses.dataclass
class PatchLabelGrid:
    """Binary per-patch labels plus their block-constant pixel expansion."""

    patch_h: int
    patch_w: int
    grid: np.ndarray      # (H/patch_h, W/patch_w), uint8 in {0, 1}
    expanded: np.ndarray  # (H, W), uint8, constant within each patch

    def __post_init__(self):
        self.grid = _require_binary(self.grid, "patch label grid")
        self.expanded = _require_binary(self.expanded, "expanded patch labels")
        gh, gw = self.grid.shape
        if self.expanded.shape != (gh * self.patch_h, gw * self.patch_w):
            raise ValueError(
                f"expanded shape {self.expanded.shape} does not match grid "
                f"{self.grid.shape} at patch {self.patch_h}x{self.patch_w}"
            )
        rebuilt = np.repeat(np.repeat(self.grid, self.patch_h, axis=0), self.patch_w, axis=1)
        if not np.array_equal(rebuilt, self.expanded):
            raise ValueError("expanded labels are not block-constant copies of the grid")


def patch_regions(
    height: int, width: int, patch_h: int, patch_w: int
) -> Iterator[tuple[int, tuple[int, int, int, int]]]:
    """Yield (k, (row_start, row_stop, col_start, col_stop)) in row-major order.

    The regions are disjoint and cover the image exactly once.
    """
    check_patch_divisibility(height, width, patch_h, patch_w)
    k = 0
    for r0 in range(0, height, patch_h):
        for c0 in range(0, width, patch_w):
            yield k, (r0, r0 + patch_h, c0, c0 + patch_w)
            k += 1


def crop_into_patch_grid(
    sample: BiTemporalSample, patch_h: int, patch_w: int
) -> Iterator[tuple[int, tuple[int, int, int, int]]]:
    """Tile a sample's image plane into non-overlapping patch regions."""
    return patch_regions(sample.height, sample.width, patch_h, patch_w)


def generate_patch_labels(pixel_mask: np.ndarray, patch_h: int, patch_w: int) -> PatchLabelGrid:
    """Mark a patch as changed iff any pixel inside it is changed."""
    mask = _require_binary(pixel_mask, "pixel mask")
    h, w = mask.shape
    check_patch_divisibility(h, w, patch_h, patch_w)
    gh, gw = h // patch_h, w // patch_w
    grid = mask.reshape(gh, patch_h, gw, patch_w).any(axis=(1, 3)).astype(np.uint8)
    expanded = np.repeat(np.repeat(grid, patch_h, axis=0), patch_w, axis=1)
    return PatchLabelGrid(patch_h=patch_h, patch_w=patch_w, grid=grid, expanded=expanded)


def local_max_downsample(values: np.ndarray, patch_h: int, patch_w: int) -> np.ndarray:
    """Reduce a full-resolution [0, 1] map to one max per patch.

    Applied to a block-constant label expansion this recovers the label grid
    exactly.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(
            f"map values outside [0, 1]: min {arr.min():.6g}, max {arr.max():.6g}"
        )
    h, w = arr.shape
    check_patch_divisibility(h, w, patch_h, patch_w)
    gh, gw = h // patch_h, w // patch_w
    return arr.reshape(gh, patch_h, gw, patch_w).max(axis=(1, 3))


def apply_augmentations(
    sample: BiTemporalSample,
    labels: PatchLabelGrid | None,
    hflip: bool = False,
    vflip: bool = False,
    temporal_exchange: bool = False,
) -> tuple[BiTemporalSample, PatchLabelGrid | None]:
    """Flip both images plus all label planes together; optionally swap t1/t2.

    Temporal exchange leaves every label untouched: change is symmetric in
    time order.
    """
    axes = []
    if hflip:
        axes.append(1)
    if vflip:
        axes.append(0)

    def flip(arr: np.ndarray) -> np.ndarray:
        return np.flip(arr, axis=tuple(axes)).copy() if axes else arr.copy()

    t1, t2 = flip(sample.image_t1), flip(sample.image_t2)
    if temporal_exchange:
        t1, t2 = t2, t1
    mask = flip(sample.pixel_mask) if sample.pixel_mask is not None else None
    out_sample = BiTemporalSample(id=sample.id, image_t1=t1, image_t2=t2, pixel_mask=mask)

    out_labels = None
    if labels is not None:
        out_labels = PatchLabelGrid(
            patch_h=labels.patch_h,
            patch_w=labels.patch_w,
            grid=flip(labels.grid),
            expanded=flip(labels.expanded),
        )
    return out_sample, out_labels


# On-disk layout: <root>/<split>/A/<id>.png, <root>/<split>/B/<id>.png and an
# optional <root>/<split>/label/<id>.png (8-bit grayscale, 0 or 255).
# Exported patch labels live in <root>/<split>/plabel_<h>x<w>/<id>.png as the
# block-constant expansion, re-exported byte-identically on rerun.

def _load_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.float32) / 255.0


def _load_mask(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    values = np.unique(arr)
    if not np.isin(values, (0, 255)).all():
        raise ValueError(
            f"mask {path} must use values {{0, 255}}, found {values.tolist()}"
        )
    return (arr == 255).astype(np.uint8)


def save_mask_png(path: Path, binary: np.ndarray) -> None:
    """Write a {0, 1} array as an 8-bit 0/255 grayscale PNG."""
    arr = _require_binary(binary) * np.uint8(255)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_dataset(root_dir: str | Path, split: str) -> list[BiTemporalSample]:
    """Load one split, sorted by sample id, validating every pair.

    The label directory is optional as a whole; when present every pair must
    have a mask.
    """
    split_dir = Path(root_dir) / split
    dir_a, dir_b = split_dir / "A", split_dir / "B"
    label_dir = split_dir / "label"
    for d in (dir_a, dir_b):
        if not d.is_dir():
            raise FileNotFoundError(f"missing image directory: {d}")

    ids_a = {p.stem for p in dir_a.glob("*.png")}
    ids_b = {p.stem for p in dir_b.glob("*.png")}
    missing = [str(dir_b / f"{i}.png") for i in sorted(ids_a - ids_b)]
    missing += [str(dir_a / f"{i}.png") for i in sorted(ids_b - ids_a)]
    if label_dir.is_dir():
        missing += [
            str(label_dir / f"{i}.png")
            for i in sorted(ids_a & ids_b)
            if not (label_dir / f"{i}.png").is_file()
        ]
    if missing:
        raise FileNotFoundError(
            "dataset is missing counterpart files: " + ", ".join(missing)
        )

    samples = []
    for sid in sorted(ids_a):
        t1 = _load_image(dir_a / f"{sid}.png")
        t2 = _load_image(dir_b / f"{sid}.png")
        if t1.shape != t2.shape:
            raise ValueError(
                f"shape mismatch for sample {sid}: "
                f"{dir_a / (sid + '.png')} is {t1.shape[:2]}, "
                f"{dir_b / (sid + '.png')} is {t2.shape[:2]}"
            )
        mask = _load_mask(label_dir / f"{sid}.png") if label_dir.is_dir() else None
        if mask is not None and mask.shape != t1.shape[:2]:
            raise ValueError(
                f"shape mismatch for sample {sid}: mask {label_dir / (sid + '.png')} "
                f"is {mask.shape}, images are {t1.shape[:2]}"
            )
        samples.append(BiTemporalSample(id=sid, image_t1=t1, image_t2=t2, pixel_mask=mask))
    return samples


def export_patch_labels(
    root_dir: str | Path, split: str, patch_sizes: Sequence[int]
) -> dict[int, Path]:
    """Export block-constant patch-label PNGs for every requested patch size.

    Rerunning rewrites byte-identical files. Divisibility failures are
    collected per file and reported together.
    """
    split_dir = Path(root_dir) / split
    label_dir = split_dir / "label"
    if not label_dir.is_dir():
        raise FileNotFoundError(f"missing label directory: {label_dir}")

    mask_paths = sorted(label_dir.glob("*.png"))
    out_dirs: dict[int, Path] = {}
    errors = []
    for size in patch_sizes:
        out_dir = split_dir / f"plabel_{size}x{size}"
        out_dir.mkdir(exist_ok=True)
        out_dirs[size] = out_dir
        for path in mask_paths:
            try:
                mask = _load_mask(path)
                labels = generate_patch_labels(mask, size, size)
            except ValueError as exc:
                errors.append(f"{path}: {exc}")
                continue
            save_mask_png(out_dir / path.name, labels.expanded)
    if errors:
        raise ValueError("patch label export failed for:\n" + "\n".join(errors))
    return out_dirs
