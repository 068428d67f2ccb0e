import logging

import numpy as np
import pytest
from PIL import Image
from skimage import exposure

from vesselpipe.data import (
    DatasetTag,
    FundusSample,
    clahe,
    extract_green,
    load_dataset,
    make_folds,
    random_flip,
)
from vesselpipe.errors import ConfigurationError
from vesselpipe.synthetic import make_samples, write_dataset


class FixedRNG:
    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def test_sample_rejects_mismatched_sizes():
    with pytest.raises(ValueError):
        FundusSample("a", rgb=np.zeros((4, 4, 3), np.uint8), gt=np.zeros((4, 5), np.uint8))


def test_sample_rejects_nonbinary_gt():
    with pytest.raises(ValueError):
        FundusSample("a", rgb=np.zeros((4, 4, 3), np.uint8), gt=np.full((4, 4), 255, np.uint8))


class TestLoad:
    def test_layout(self, tmp_path):
        write_dataset(tmp_path, DatasetTag.DRIVE, n=4, size=(30, 20))
        samples = load_dataset(tmp_path, DatasetTag.DRIVE)
        assert [s.id for s in samples] == ["01", "02", "03", "04"]
        for s in samples:
            assert s.rgb.shape == (30, 20, 3)
            assert s.gt is not None and s.fov_mask is not None
            assert set(np.unique(s.gt)) <= {0, 1}

    def test_without_masks(self, tmp_path):
        write_dataset(tmp_path, DatasetTag.STARE, n=2, with_masks=False)
        samples = load_dataset(tmp_path, "STARE")
        assert all(s.fov_mask is None for s in samples)
        assert samples[0].fov().all()

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_dataset(tmp_path, DatasetTag.CHASE_DB)

    def test_empty_directory(self, tmp_path, caplog):
        (tmp_path / "STARE" / "images").mkdir(parents=True)
        with caplog.at_level(logging.WARNING):
            assert load_dataset(tmp_path, DatasetTag.STARE) == []
        assert "no images" in caplog.text

    def test_dimension_mismatch_rejected(self, tmp_path, caplog):
        base = write_dataset(tmp_path, DatasetTag.STARE, n=2, size=(16, 16))
        Image.fromarray(np.zeros((10, 10), np.uint8)).save(base / "labels" / "02.png")
        with caplog.at_level(logging.WARNING):
            samples = load_dataset(tmp_path, DatasetTag.STARE)
        assert [s.id for s in samples] == ["01"]
        assert "rejecting 02" in caplog.text

    def test_green_matches_decoded_plane(self, tmp_path):
        base = write_dataset(tmp_path, DatasetTag.DRIVE, n=1, size=(24, 24))
        sample = load_dataset(tmp_path, DatasetTag.DRIVE)[0]
        _, g, _ = Image.open(base / "images" / "01.png").split()
        assert np.array_equal(extract_green(sample).green, np.asarray(g))


class TestGreen:
    def test_pixel(self):
        rgb = np.zeros((2, 2, 3), np.uint8)
        rgb[0, 0] = (10, 200, 30)
        out = extract_green(FundusSample("x", rgb=rgb))
        assert out.green[0, 0] == 200
        assert out.rgb is rgb

    def test_black(self):
        assert not extract_green(FundusSample("x", rgb=np.zeros((5, 6, 3), np.uint8))).green.any()

    def test_single_channel(self, caplog):
        gray = np.arange(12, dtype=np.uint8).reshape(3, 4)
        with caplog.at_level(logging.WARNING):
            out = extract_green(FundusSample("x", rgb=gray))
        assert np.array_equal(out.green, gray)
        assert "single-channel" in caplog.text


class TestClahe:
    def test_constant_stays_constant(self):
        out = clahe(np.full((64, 64), 128, np.uint8))
        assert len(np.unique(out)) == 1

    def test_range_and_shape(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, (50, 70), dtype=np.uint8)
        out = clahe(img)
        assert out.shape == img.shape and out.dtype == np.uint8

    def test_gradient_contrast_increases(self):
        img = np.tile(np.linspace(100, 120, 64).round().astype(np.uint8), (64, 1))
        out = clahe(img)
        assert out.std() > img.std()
        # an independent CLAHE agrees that contrast goes up on this raster
        ref = exposure.equalize_adapthist(img, clip_limit=0.01) * 255
        assert ref.std() > img.std()

    def test_deterministic(self):
        img = np.random.default_rng(1).integers(0, 256, (40, 40), dtype=np.uint8)
        assert np.array_equal(clahe(img), clahe(img))

    def test_tile_larger_than_image(self):
        img = np.random.default_rng(2).integers(0, 256, (4, 4), dtype=np.uint8)
        assert np.array_equal(clahe(img, tile_grid=(8, 8)), clahe(img, tile_grid=(1, 1)))

    @pytest.mark.parametrize("kw", [{"clip_limit": 0}, {"tile_grid": (0, 2)}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            clahe(np.zeros((8, 8), np.uint8), **kw)


class TestFlip:
    def sample(self):
        s = make_samples(1, size=(7, 9))[0]
        return extract_green(s)

    def test_both_flips_rotate(self):
        s = self.sample()
        out = random_flip(s, FixedRNG([0.1, 0.2]))
        for name in ("green", "gt", "fov_mask", "rgb"):
            assert np.array_equal(getattr(out, name), np.rot90(getattr(s, name), 2))

    def test_no_flip(self):
        s = self.sample()
        out = random_flip(s, FixedRNG([0.9, 0.7]))
        assert np.array_equal(out.green, s.green) and np.array_equal(out.gt, s.gt)

    def test_outcome_frequencies(self):
        s = FundusSample("x", rgb=None, green=np.arange(4, dtype=np.uint8).reshape(2, 2))
        rng = np.random.default_rng(0)
        outcomes = {}
        for _ in range(10_000):
            key = tuple(random_flip(s, rng).green.ravel())
            outcomes[key] = outcomes.get(key, 0) + 1
        assert len(outcomes) == 4
        for count in outcomes.values():
            assert abs(count / 10_000 - 0.25) < 0.02

    def test_seeded_stream_repeats(self):
        s = self.sample()
        a = [random_flip(s, r).green for r in [np.random.default_rng(3)] * 5]
        b = [random_flip(s, r).green for r in [np.random.default_rng(3)] * 5]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestFolds:
    def check_plan(self, plan, ids):
        tests = [i for _, _, t in plan.folds for i in t]
        assert sorted(tests) == sorted(ids)
        for train, val, test in plan.folds:
            assert not (set(train) & set(val) or set(train) & set(test) or set(val) & set(test))
            assert sorted(train + val + test) == sorted(ids)

    def test_stare(self):
        ids = [f"im{i:04d}" for i in range(20)]
        plan = make_folds(ids, DatasetTag.STARE, 5, np.random.default_rng(0))
        assert plan.k == 5
        for train, val, test in plan.folds:
            assert (len(train), len(val), len(test)) == (12, 4, 4)
        self.check_plan(plan, ids)

    def test_drive(self):
        ids = [f"{i:02d}_test" for i in range(1, 21)] + [f"{i:02d}_training" for i in range(21, 41)]
        plan = make_folds(ids, DatasetTag.DRIVE, 5, np.random.default_rng(0))
        assert len(plan.folds) == 1
        train, val, test = plan.folds[0]
        assert (len(train), len(val), len(test)) == (15, 5, 20)
        assert all("test" in i for i in test)

    def test_drive_numeric_stems(self):
        ids = [f"{i:02d}" for i in range(1, 41)]
        (train, val, test), = make_folds(ids, DatasetTag.DRIVE, 5, np.random.default_rng(1)).folds
        assert sorted(test) == [f"{i:02d}" for i in range(1, 21)]

    def test_leave_one_out(self):
        ids = list("abcdef")
        plan = make_folds(ids, DatasetTag.CHASE_DB, len(ids), np.random.default_rng(0))
        assert all(len(t) == 1 for _, _, t in plan.folds)
        self.check_plan(plan, ids)

    @pytest.mark.parametrize("k", [2, 3, 4, 5, 7])
    def test_exhaustive_for_any_k(self, k):
        ids = [str(i) for i in range(17)]
        self.check_plan(make_folds(ids, DatasetTag.AV_WIDE, k, np.random.default_rng(k)), ids)

    def test_too_many_folds(self):
        with pytest.raises(ConfigurationError):
            make_folds(["a", "b"], DatasetTag.STARE, 3, np.random.default_rng(0))

    def test_deterministic(self):
        ids = [str(i) for i in range(10)]
        a = make_folds(ids, DatasetTag.STARE, 5, np.random.default_rng(4))
        b = make_folds(ids, DatasetTag.STARE, 5, np.random.default_rng(4))
        assert a.folds == b.folds


def test_jpeg_images(tmp_path):
    base = write_dataset(tmp_path, DatasetTag.CHASE_DB, n=1, size=(20, 20))
    img = base / "images" / "01.png"
    Image.open(img).save(base / "images" / "01.jpg")
    img.unlink()
    (sample,) = load_dataset(tmp_path, DatasetTag.CHASE_DB)
    assert sample.rgb.shape == (20, 20, 3)
