import math

import numpy as np
import pytest

from giscsim.errors import InvalidParameterError, ShapeError
from giscsim.metrics import evaluate, evaluate_set, per_band_psnr, psnr, sam, ssim


def brute_force_psnr(a, b):
    """Independent oracle: explicit loop over every voxel."""
    total = 0.0
    count = 0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            for k in range(a.shape[2]):
                diff = float(a[i, j, k]) - float(b[i, j, k])
                total += diff * diff
                count += 1
    return 10.0 * math.log10(1.0 / (total / count))


def brute_force_sam(a, b):
    """Independent oracle: per-pixel arccos loop."""
    angles = []
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            u, v = a[i, j, :], b[i, j, :]
            nu, nv = np.linalg.norm(u), np.linalg.norm(v)
            if nu > 1e-12 and nv > 1e-12:
                angles.append(math.acos(max(-1.0, min(1.0, float(u @ v) / (nu * nv)))))
    return sum(angles) / len(angles)


class TestPsnr:
    def test_identical_hits_cap(self, rng):
        x = rng.random((12, 12, 4))
        assert psnr(x, x) == 100.0

    def test_closed_form_quarter_mse(self):
        x = np.zeros((16, 16, 3))
        assert psnr(x, np.full_like(x, 0.5)) == pytest.approx(6.0206, abs=1e-4)

    def test_matches_brute_force(self, rng):
        a, b = rng.random((9, 7, 5)), rng.random((9, 7, 5))
        assert abs(psnr(a, b) - brute_force_psnr(a, b)) <= 1e-9

    def test_symmetric(self, rng):
        a, b = rng.random((8, 8, 3)), rng.random((8, 8, 3))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            psnr(rng.random((4, 4, 2)), rng.random((4, 4, 3)))

    def test_monotone_under_noise(self):
        base = np.random.default_rng(0).random((24, 24, 4))
        means = []
        for sigma in (0.01, 0.02, 0.05, 0.1):
            vals = []
            for seed in range(20):
                noisy = base + sigma * np.random.default_rng(seed).standard_normal(base.shape)
                vals.append(psnr(base, noisy))
            means.append(np.mean(vals))
        assert means[0] > means[1] > means[2] > means[3]

    def test_per_band(self, rng):
        a = rng.random((8, 8, 3))
        b = a.copy()
        b[:, :, 1] += 0.5
        bands = per_band_psnr(a, b)
        assert bands[0] == 100.0 and bands[2] == 100.0
        assert bands[1] == pytest.approx(6.0206, abs=1e-4)


class TestSsim:
    def test_identical_is_one(self, rng):
        x = rng.random((24, 24, 3))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_inverted_below_one(self, rng):
        x = rng.random((24, 24, 2))
        assert ssim(x, 1.0 - x) < 1.0

    def test_constant_pair_stabilized(self):
        x = np.full((16, 16, 2), 0.3)
        assert ssim(x, x.copy()) == pytest.approx(1.0, abs=1e-12)

    def test_range(self, rng):
        a, b = rng.random((20, 20, 3)), rng.random((20, 20, 3))
        value = ssim(a, b)
        assert -1.0 <= value <= 1.0

    def test_symmetric(self, rng):
        a, b = rng.random((16, 16, 2)), rng.random((16, 16, 2))
        assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12

    def test_window_minimum(self, rng):
        with pytest.raises(InvalidParameterError):
            ssim(rng.random((8, 8, 2)), rng.random((8, 8, 2)))


class TestSam:
    def test_scale_invariance(self, rng):
        x = 0.1 + rng.random((10, 10, 5))
        assert sam(x, 2.0 * x) == pytest.approx(0.0, abs=1e-7)

    def test_orthogonal_spectra(self):
        a = np.zeros((4, 4, 2))
        b = np.zeros((4, 4, 2))
        a[:, :, 0] = 1.0
        b[:, :, 1] = 1.0
        assert sam(a, b) == pytest.approx(np.pi / 2, abs=1e-12)

    def test_matches_brute_force(self, rng):
        a, b = rng.random((9, 6, 4)), rng.random((9, 6, 4))
        assert abs(sam(a, b) - brute_force_sam(a, b)) <= 1e-9

    def test_zero_norm_pixels_excluded(self, rng):
        a, b = rng.random((6, 6, 3)), rng.random((6, 6, 3))
        a[0, 0, :] = 0.0
        expected = brute_force_sam(a, b)
        assert abs(sam(a, b) - expected) <= 1e-9

    def test_symmetric(self, rng):
        a, b = rng.random((8, 8, 3)), rng.random((8, 8, 3))
        assert sam(a, b) == sam(b, a)

    def test_needs_two_bands(self, rng):
        with pytest.raises(InvalidParameterError):
            sam(rng.random((4, 4, 1)), rng.random((4, 4, 1)))


class TestPermutationInvariance:
    def test_psnr_and_sam_spatially_permutation_invariant(self, rng):
        a, b = rng.random((10, 10, 4)), rng.random((10, 10, 4))
        perm = rng.permutation(100)
        ap = a.reshape(100, 4)[perm].reshape(10, 10, 4)
        bp = b.reshape(100, 4)[perm].reshape(10, 10, 4)
        assert psnr(ap, bp) == psnr(a, b)
        assert sam(ap, bp) == pytest.approx(sam(a, b), abs=1e-12)


class TestEvaluateSet:
    def test_single_pair_equals_aggregate(self, rng):
        a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
        aggregate, rows = evaluate_set([(a, b)])
        assert len(rows) == 1
        assert aggregate.psnr_db == rows[0].psnr_db
        assert aggregate.ssim == rows[0].ssim
        assert aggregate.sam_rad == rows[0].sam_rad

    def test_mean_of_two(self, rng):
        x = rng.random((16, 16, 3))
        # constant offsets with MSE 0.25 and 0.0625 -> PSNR 6.0206 / 12.0412
        aggregate, rows = evaluate_set(
            [
                (np.zeros((16, 16, 3)), np.full((16, 16, 3), 0.5)),
                (np.zeros((16, 16, 3)), np.full((16, 16, 3), 0.25)),
            ]
        )
        assert aggregate.psnr_db == pytest.approx(np.mean([r.psnr_db for r in rows]))
        assert rows[0].psnr_db == pytest.approx(6.0206, abs=1e-4)
        assert rows[1].psnr_db == pytest.approx(12.0412, abs=1e-4)

    def test_identical_inputs_report(self, rng):
        x = rng.random((16, 16, 3))
        report = evaluate(x, x)
        assert report.psnr_db == 100.0
        assert report.ssim == pytest.approx(1.0, abs=1e-12)
        assert report.sam_rad == 0.0

    def test_empty_rejected(self):
        with pytest.raises(InvalidParameterError):
            evaluate_set([])
