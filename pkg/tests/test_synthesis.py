import numpy as np
import pytest

from inkgrain.raster import RasterImage, linear_to_srgb, srgb_to_linear
from inkgrain.metrics import iou
from inkgrain.segmentation import LABEL_O, LABEL_PC, LABEL_PM, LABEL_W
from inkgrain.synthesis import (
    SimConfig,
    ground_truth_from_single_color,
    simulate_patch,
    simulate_single_ink_pair,
    synthesize_superimposed,
)

# reduced resolution keeps drop counts realistic while tests stay fast
FAST_DPI = 2000.0


def cfg(c=0.0, m=0.0, seed=0, dpi=FAST_DPI, **kw):
    return SimConfig(cyan_level=c, magenta_level=m, dpi=dpi, seed=seed, **kw)


class TestSimConfig:
    def test_full_coverage_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            SimConfig(cyan_level=1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            SimConfig(avoidance=1.5)
        with pytest.raises(ValueError):
            SimConfig(dpi=-1)
        with pytest.raises(ValueError):
            SimConfig(noise_sigma=-0.1)

    def test_dict_roundtrip(self):
        c = cfg(0.3, 0.6, seed=5)
        assert SimConfig.from_dict(c.to_dict()) == c

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ValueError, match="unknown"):
            SimConfig.from_dict({"cyan": 0.5})


class TestSimulatePatch:
    def test_blank_patch(self):
        img, labels = simulate_patch(cfg(0.0, 0.0, seed=1))
        assert np.all(labels == LABEL_W)
        # white up to sensor noise
        assert srgb_to_linear(img.samples).mean() > 0.98

    def test_patch_geometry(self):
        img, labels = simulate_patch(cfg(0.3, 0.0, seed=2))
        px_per_mm = FAST_DPI / 25.4
        assert labels.shape == (round(2.4 * px_per_mm), round(3.2 * px_per_mm))
        assert img.samples.shape == labels.shape + (3,)
        assert img.dpi == FAST_DPI

    def test_partition_invariant(self):
        _, labels = simulate_patch(cfg(0.6, 0.45, seed=3))
        assert np.bincount(labels.ravel(), minlength=4).sum() == labels.size

    def test_reproducible_bit_identical(self):
        c = cfg(0.45, 0.3, seed=4)
        img_a, lab_a = simulate_patch(c)
        img_b, lab_b = simulate_patch(c)
        assert np.array_equal(img_a.samples, img_b.samples)
        assert np.array_equal(lab_a, lab_b)

    def test_different_seeds_differ(self):
        _, a = simulate_patch(cfg(0.45, 0.3, seed=1))
        _, b = simulate_patch(cfg(0.45, 0.3, seed=2))
        assert not np.array_equal(a, b)

    def test_white_fraction_follows_coverage_equation(self):
        # at 60% cyan the vacancy law предicts 40% white
        fractions = [
            np.mean(simulate_patch(cfg(0.6, 0.0, seed=s, dpi=4000))[1] == LABEL_W)
            for s in range(20)
        ]
        assert np.mean(fractions) == pytest.approx(0.40, abs=0.03)

    def test_nonwhite_fraction_monotone_in_level(self):
        levels = (0.0, 0.3, 0.45, 0.6, 0.75, 0.9)
        means = []
        for level in levels:
            vals = [
                np.mean(simulate_patch(cfg(level, 0.0, seed=s, dpi=1000))[1] != LABEL_W)
                for s in range(20)
            ]
            means.append(np.mean(vals))
        assert all(b > a for a, b in zip(means, means[1:]))

    def test_overlap_darker_than_either_ink(self):
        img, labels = simulate_patch(cfg(0.6, 0.6, seed=5, noise_sigma=0.0))
        lin = srgb_to_linear(img.samples)
        lum = lin.mean(axis=2)
        assert lum[labels == LABEL_O].mean() < lum[labels == LABEL_PC].mean()
        assert lum[labels == LABEL_O].mean() < lum[labels == LABEL_PM].mean()

    def test_avoidance_reduces_overlap(self):
        overlaps = []
        for seed in range(10):
            _, with_avoid = simulate_patch(cfg(0.6, 0.6, seed=seed, avoidance=1.0))
            _, without = simulate_patch(cfg(0.6, 0.6, seed=seed, avoidance=0.0))
            overlaps.append(
                (np.mean(with_avoid == LABEL_O), np.mean(without == LABEL_O))
            )
        assert all(a < b for a, b in overlaps)

    def test_single_ink_pair_levels(self):
        (ci, cl), (mi, ml) = simulate_single_ink_pair(cfg(0.45, 0.6, seed=6))
        assert set(np.unique(cl)) <= {LABEL_PC, LABEL_W}
        assert set(np.unique(ml)) <= {LABEL_PM, LABEL_W}


class TestSynthesizeSuperimposed:
    def test_identical_inputs_pass_through(self):
        img, _ = simulate_patch(cfg(0.3, 0.0, seed=7))
        out = synthesize_superimposed(img, img)
        assert np.allclose(out.samples, img.samples, atol=1e-12)

    def test_white_plus_white(self):
        white = RasterImage(np.ones((8, 8, 3)), FAST_DPI)
        out = synthesize_superimposed(white, white)
        assert np.all(out.samples == 1.0)

    def test_linear_light_average(self):
        a = RasterImage(np.full((4, 4, 3), linear_to_srgb(0.8)), 100)
        b = RasterImage(np.full((4, 4, 3), linear_to_srgb(0.2)), 100)
        out = synthesize_superimposed(a, b)
        assert srgb_to_linear(out.samples) == pytest.approx(0.5, abs=1e-12)

    def test_commutative_bit_exact(self):
        img_a, _ = simulate_patch(cfg(0.45, 0.0, seed=8))
        img_b, _ = simulate_patch(cfg(0.0, 0.6, seed=9))
        ab = synthesize_superimposed(img_a, img_b)
        ba = synthesize_superimposed(img_b, img_a)
        assert np.array_equal(ab.samples, ba.samples)

    def test_dimension_mismatch(self):
        a = RasterImage(np.ones((4, 4, 3)), 100)
        b = RasterImage(np.ones((5, 4, 3)), 100)
        with pytest.raises(ValueError, match="shapes"):
            synthesize_superimposed(a, b)

    def test_dpi_mismatch(self):
        a = RasterImage(np.ones((4, 4, 3)), 100)
        b = RasterImage(np.ones((4, 4, 3)), 200)
        with pytest.raises(ValueError, match="dpi"):
            synthesize_superimposed(a, b)


class TestGroundTruthFromSingleColor:
    def test_blank_scan_with_explicit_threshold(self):
        blank = RasterImage(np.ones((8, 8, 3)), 100)
        mask = ground_truth_from_single_color(blank, "red", threshold=0.5)
        assert not mask.any()

    def test_constant_channel_needs_explicit_threshold(self):
        blank = RasterImage(np.ones((8, 8, 3)), 100)
        with pytest.raises(ValueError, match="degenerate"):
            ground_truth_from_single_color(blank, "red")

    def test_three_dark_pixels(self):
        samples = np.ones((6, 6, 3))
        for where in [(0, 0), (2, 3), (5, 5)]:
            samples[where] = (0.1, 1.0, 1.0)
        img = RasterImage(samples, 100)
        mask = ground_truth_from_single_color(img, "red", threshold=0.5)
        assert mask.sum() == 3
        assert mask[0, 0] and mask[2, 3] and mask[5, 5]
        assert not ground_truth_from_single_color(img, "green", threshold=0.5).any()

    def test_recovers_simulator_truth(self):
        img, labels = simulate_patch(cfg(0.6, 0.0, seed=10))
        mask = ground_truth_from_single_color(img, "red")
        assert iou(mask, labels == LABEL_PC) >= 0.95

    def test_recovers_magenta_truth(self):
        img, labels = simulate_patch(cfg(0.0, 0.75, seed=11))
        mask = ground_truth_from_single_color(img, "green")
        assert iou(mask, labels == LABEL_PM) >= 0.95

    def test_bad_channel(self):
        img = RasterImage(np.ones((4, 4, 3)), 100)
        with pytest.raises(ValueError, match="channel"):
            ground_truth_from_single_color(img, "blue")

    def test_bad_threshold(self):
        img = RasterImage(np.ones((4, 4, 3)), 100)
        with pytest.raises(ValueError, match="threshold"):
            ground_truth_from_single_color(img, "red", threshold=1.5)
