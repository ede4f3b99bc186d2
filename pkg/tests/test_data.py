"""Tiling, patch-label synthesis, augmentation, and dataset IO."""

import itertools

import numpy as np
import pytest
from PIL import Image

from patchcd.data import (
    BiTemporalSample,
    PatchLabelGrid,
    apply_augmentations,
    crop_into_patch_grid,
    export_patch_labels,
    generate_patch_labels,
    load_dataset,
    local_max_downsample,
    patch_regions,
    save_mask_png,
)
from conftest import write_pair


def brute_force_patch_labels(mask, ph, pw):
    gh, gw = mask.shape[0] // ph, mask.shape[1] // pw
    grid = np.zeros((gh, gw), dtype=np.uint8)
    for r in range(gh):
        for c in range(gw):
            cell = mask[r * ph : (r + 1) * ph, c * pw : (c + 1) * pw]
            grid[r, c] = 1 if (cell == 1).any() else 0
    return grid


def brute_force_max(values, ph, pw):
    gh, gw = values.shape[0] // ph, values.shape[1] // pw
    out = np.zeros((gh, gw))
    for r in range(gh):
        for c in range(gw):
            out[r, c] = values[r * ph : (r + 1) * ph, c * pw : (c + 1) * pw].max()
    return out


class TestPatchRegions:
    def test_256_with_128_gives_four_regions(self):
        regions = list(patch_regions(256, 256, 128, 128))
        assert len(regions) == 4
        assert regions[0] == (0, (0, 128, 0, 128))

    def test_whole_image_patch(self):
        regions = list(patch_regions(256, 256, 256, 256))
        assert regions == [(0, (0, 256, 0, 256))]

    def test_non_divisible_rejected_naming_both_axes(self):
        with pytest.raises(ValueError, match="height.*width") as exc:
            list(patch_regions(256, 256, 96, 96))
        assert "96" in str(exc.value)

    def test_partition_property(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            ph = int(rng.choice([4, 8, 16, 32]))
            pw = int(rng.choice([4, 8, 16, 32]))
            h = ph * int(rng.integers(1, 5))
            w = pw * int(rng.integers(1, 5))
            cover = np.zeros((h, w), dtype=int)
            ks = []
            for k, (r0, r1, c0, c1) in patch_regions(h, w, ph, pw):
                cover[r0:r1, c0:c1] += 1
                ks.append(k)
            assert (cover == 1).all()
            assert ks == list(range((h // ph) * (w // pw)))

    def test_crop_matches_sample_dims(self):
        sample = BiTemporalSample(
            id="x",
            image_t1=np.zeros((64, 64, 3)),
            image_t2=np.zeros((64, 64, 3)),
        )
        assert len(list(crop_into_patch_grid(sample, 32, 32))) == 4


class TestGeneratePatchLabels:
    def test_all_zero_mask(self):
        labels = generate_patch_labels(np.zeros((8, 8), dtype=np.uint8), 4, 4)
        assert labels.grid.shape == (2, 2)
        assert not labels.grid.any()
        assert not labels.expanded.any()

    def test_single_pixel(self):
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[5, 2] = 1
        labels = generate_patch_labels(mask, 4, 4)
        assert labels.grid.tolist() == [[0, 0], [1, 0]]

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            mask = (rng.random((32, 32)) < 0.2).astype(np.uint8)
            labels = generate_patch_labels(mask, 8, 8)
            assert np.array_equal(labels.grid, brute_force_patch_labels(mask, 8, 8))

    def test_expanded_is_block_constant(self):
        rng = np.random.default_rng(2)
        mask = (rng.random((32, 32)) < 0.3).astype(np.uint8)
        labels = generate_patch_labels(mask, 8, 4)
        for r in range(32):
            for c in range(32):
                assert labels.expanded[r, c] == labels.grid[r // 8, c // 4]

    def test_non_binary_mask_rejected(self):
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[0, 0] = 7
        with pytest.raises(ValueError, match="binary"):
            generate_patch_labels(mask, 4, 4)

    def test_coarsening_monotonicity(self):
        # a positive fine patch forces a positive coarse patch containing it
        rng = np.random.default_rng(3)
        for _ in range(30):
            mask = (rng.random((64, 64)) < 0.05).astype(np.uint8)
            fine = generate_patch_labels(mask, 8, 8).grid
            for size in (16, 32):
                coarse = generate_patch_labels(mask, size, size).grid
                step = size // 8
                gh, gw = fine.shape
                for r in range(gh):
                    for c in range(gw):
                        if fine[r, c]:
                            assert coarse[r // step, c // step] == 1


class TestLocalMaxDownsample:
    def test_expanded_labels_reproduce_grid(self):
        rng = np.random.default_rng(4)
        mask = (rng.random((32, 32)) < 0.3).astype(np.uint8)
        labels = generate_patch_labels(mask, 8, 8)
        down = local_max_downsample(labels.expanded.astype(np.float64), 8, 8)
        assert np.array_equal(down, labels.grid.astype(np.float64))

    def test_single_value(self):
        values = np.zeros((4, 4))
        values[0, 3] = 0.7
        down = local_max_downsample(values, 2, 2)
        assert down[0, 1] == 0.7
        assert down.sum() == 0.7

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            values = rng.random((16, 16))
            assert np.array_equal(
                local_max_downsample(values, 4, 4), brute_force_max(values, 4, 4)
            )

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match=r"outside \[0, 1\]"):
            local_max_downsample(np.full((4, 4), 1.5), 2, 2)


def _single_pixel_sample(width=8):
    rng = np.random.default_rng(6)
    mask = np.zeros((8, width), dtype=np.uint8)
    mask[5, 2] = 1
    sample = BiTemporalSample(
        id="s",
        image_t1=rng.random((8, width, 3)),
        image_t2=rng.random((8, width, 3)),
        pixel_mask=mask,
    )
    return sample, generate_patch_labels(mask, 4, 4)


class TestAugmentations:
    def test_temporal_exchange_is_involution(self):
        sample, labels = _single_pixel_sample()
        once, labels_once = apply_augmentations(sample, labels, temporal_exchange=True)
        twice, labels_twice = apply_augmentations(once, labels_once, temporal_exchange=True)
        assert np.array_equal(twice.image_t1, sample.image_t1)
        assert np.array_equal(twice.image_t2, sample.image_t2)
        assert np.array_equal(labels_twice.grid, labels.grid)

    def test_hflip_is_involution(self):
        sample, labels = _single_pixel_sample()
        once, labels_once = apply_augmentations(sample, labels, hflip=True)
        twice, labels_twice = apply_augmentations(once, labels_once, hflip=True)
        assert np.array_equal(twice.image_t1, sample.image_t1)
        assert np.array_equal(labels_twice.expanded, labels.expanded)

    def test_hflip_moves_single_pixel(self):
        sample, labels = _single_pixel_sample()
        flipped, flipped_labels = apply_augmentations(sample, labels, hflip=True)
        assert flipped.pixel_mask[5, 8 - 3] == 1
        assert flipped.pixel_mask.sum() == 1
        assert flipped_labels.grid.tolist() == [[0, 0], [0, 1]]

    def test_label_safety_for_all_flag_combinations(self):
        rng = np.random.default_rng(7)
        mask = (rng.random((16, 16)) < 0.2).astype(np.uint8)
        sample = BiTemporalSample(
            id="s",
            image_t1=rng.random((16, 16, 3)),
            image_t2=rng.random((16, 16, 3)),
            pixel_mask=mask,
        )
        labels = generate_patch_labels(mask, 4, 4)
        for hflip, vflip, tex in itertools.product((False, True), repeat=3):
            augmented, aug_labels = apply_augmentations(
                sample, labels, hflip=hflip, vflip=vflip, temporal_exchange=tex
            )
            regenerated = generate_patch_labels(augmented.pixel_mask, 4, 4)
            assert np.array_equal(regenerated.grid, aug_labels.grid)
            assert np.array_equal(regenerated.expanded, aug_labels.expanded)

    def test_temporal_exchange_leaves_labels_bitwise(self):
        sample, labels = _single_pixel_sample()
        swapped, swapped_labels = apply_augmentations(sample, labels, temporal_exchange=True)
        assert np.array_equal(swapped.pixel_mask, sample.pixel_mask)
        assert np.array_equal(swapped_labels.grid, labels.grid)
        assert np.array_equal(swapped.image_t1, sample.image_t2)


class TestSampleValidation:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="disagree"):
            BiTemporalSample(
                id="x",
                image_t1=np.zeros((8, 8, 3)),
                image_t2=np.zeros((8, 16, 3)),
            )

    def test_mask_values_checked(self):
        with pytest.raises(ValueError, match="binary"):
            BiTemporalSample(
                id="x",
                image_t1=np.zeros((8, 8, 3)),
                image_t2=np.zeros((8, 8, 3)),
                pixel_mask=np.full((8, 8), 3, dtype=np.uint8),
            )

    def test_expanded_grid_consistency_enforced(self):
        with pytest.raises(ValueError, match="block-constant"):
            PatchLabelGrid(
                patch_h=2,
                patch_w=2,
                grid=np.ones((1, 1), dtype=np.uint8),
                expanded=np.eye(2, dtype=np.uint8),
            )


class TestLoadDataset:
    def test_sorted_ids(self, fixture_dataset):
        samples = load_dataset(fixture_dataset, "train")
        assert [s.id for s in samples] == ["a_pair", "b_pair", "c_pair"]
        assert all(s.pixel_mask is not None for s in samples)
        assert samples[0].image_t1.shape == (64, 64, 3)

    def test_missing_counterpart_named(self, fixture_dataset):
        missing = fixture_dataset / "train" / "B" / "b_pair.png"
        missing.unlink()
        with pytest.raises(FileNotFoundError, match="b_pair"):
            load_dataset(fixture_dataset, "train")

    def test_corrupt_mask_value_named(self, fixture_dataset):
        path = fixture_dataset / "train" / "label" / "a_pair.png"
        arr = np.asarray(Image.open(path)).copy()
        arr[0, 0] = 7
        Image.fromarray(arr, mode="L").save(path)
        with pytest.raises(ValueError, match="a_pair"):
            load_dataset(fixture_dataset, "train")

    def test_shape_mismatch_named(self, fixture_dataset):
        path = fixture_dataset / "train" / "B" / "c_pair.png"
        Image.new("RGB", (32, 64)).save(path)
        with pytest.raises(ValueError, match="c_pair"):
            load_dataset(fixture_dataset, "train")

    def test_label_dir_optional(self, tmp_path):
        rng = np.random.default_rng(8)
        write_pair(tmp_path, "test", "only", rng.random((64, 64, 3)), rng.random((64, 64, 3)))
        samples = load_dataset(tmp_path, "test")
        assert samples[0].pixel_mask is None

    def test_decoded_tensors_round_trip_to_identical_bytes(self, fixture_dataset):
        # re-encoding what the loader decoded must reproduce the PNG bytes
        samples = load_dataset(fixture_dataset, "train")
        for sample in samples:
            path = fixture_dataset / "train" / "A" / f"{sample.id}.png"
            arr = np.round(sample.image_t1 * 255.0).astype(np.uint8)
            import io

            buf = io.BytesIO()
            Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
            assert buf.getvalue() == path.read_bytes()


class TestExportPatchLabels:
    def test_export_and_byte_identical_rerun(self, fixture_dataset):
        dirs = export_patch_labels(fixture_dataset, "train", [8, 16])
        assert set(dirs) == {8, 16}
        files = sorted(dirs[8].glob("*.png"))
        assert len(files) == 3
        before = {p: p.read_bytes() for p in files}
        export_patch_labels(fixture_dataset, "train", [8, 16])
        assert {p: p.read_bytes() for p in files} == before

    def test_exported_values_match_generator(self, fixture_dataset):
        dirs = export_patch_labels(fixture_dataset, "train", [16])
        samples = load_dataset(fixture_dataset, "train")
        for sample in samples:
            exported = np.asarray(Image.open(dirs[16] / f"{sample.id}.png"))
            expected = generate_patch_labels(sample.pixel_mask, 16, 16).expanded * 255
            assert np.array_equal(exported, expected)

    def test_divisibility_failures_listed_per_file(self, tmp_path):
        rng = np.random.default_rng(9)
        write_pair(
            tmp_path, "train", "odd",
            rng.random((48, 48, 3)), rng.random((48, 48, 3)),
            (rng.random((48, 48)) < 0.5).astype(np.uint8),
        )
        with pytest.raises(ValueError, match="odd"):
            export_patch_labels(tmp_path, "train", [32])


def test_save_mask_png_rejects_non_binary(tmp_path):
    with pytest.raises(ValueError, match="binary"):
        save_mask_png(tmp_path / "x.png", np.full((4, 4), 9, dtype=np.uint8))
