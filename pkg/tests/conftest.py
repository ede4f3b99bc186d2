import numpy as np
import pytest

from patchcd import TrainConfig, synth_dataset
from patchcd.data import save_mask_png
from PIL import Image


def tiny_config(**overrides) -> TrainConfig:
    """A desk-scale config small enough for unit tests."""
    base = dict(
        patch_h=8,
        patch_w=8,
        channels=16,
        num_prototypes=4,
        num_blocks=1,
        pooling_ratios=[12, 16, 20, 24],
        max_iterations=10,
        batch_size=2,
        checkpoint_every=5,
        log_every=1,
        seed=0,
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def small_synth_root(tmp_path_factory):
    """A 16-pair synthetic dataset shared by training smoke tests."""
    root = tmp_path_factory.mktemp("synth_small")
    synth_dataset(root, 16, image_size=64, seed=7)
    return root


def write_pair(root, split, sid, img_a, img_b, mask=None):
    for sub, img in (("A", img_a), ("B", img_b)):
        (root / split / sub).mkdir(parents=True, exist_ok=True)
        arr = np.round(np.asarray(img) * 255.0).astype(np.uint8)
        Image.fromarray(arr, mode="RGB").save(root / split / sub / f"{sid}.png")
    if mask is not None:
        (root / split / "label").mkdir(parents=True, exist_ok=True)
        save_mask_png(root / split / "label" / f"{sid}.png", mask)


@pytest.fixture()
def fixture_dataset(tmp_path):
    """Three deterministic 64x64 pairs with masks, ids in scrambled write order."""
    rng = np.random.default_rng(123)
    root = tmp_path / "ds"
    for sid in ("b_pair", "a_pair", "c_pair"):
        img_a = rng.random((64, 64, 3))
        img_b = rng.random((64, 64, 3))
        mask = (rng.random((64, 64)) < 0.1).astype(np.uint8)
        write_pair(root, "train", sid, img_a, img_b, mask)
    return root
