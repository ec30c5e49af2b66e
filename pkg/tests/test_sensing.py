from fractions import Fraction

import numpy as np
import pytest

from giscsim.errors import (
    CapacityError,
    ConfigError,
    InvalidParameterError,
    PairingError,
    ShapeError,
)
from giscsim.hsi import HsiCube
from giscsim.optics import Geometry, make_phase_screen
from giscsim.sensing import (
    CONVOLUTIONAL,
    DENSE,
    CalibrationSet,
    NoiseSpec,
    SensingOperator,
    adjoint,
    assemble_measurement,
    build_dense_matrix,
    calibrate,
    check_pairing,
    forward,
    reshape_measurement,
    sampling_rate,
)
from tests.conftest import DESK_WAVELENGTHS


class TestCalibrate:
    def test_single_band_counting(self, desk_screen):
        geo = Geometry(distance=5000.0, detector_size=8, magnification=2)
        calib = calibrate(desk_screen, geo, [600.0], n=4)
        assert len(calib.reference_patterns) == 1
        op = build_dense_matrix(calib)
        assert op.dense_matrix.shape == (64, 16)

    def test_fifteen_bands(self, desk_screen):
        geo = Geometry(distance=5000.0, detector_size=16, magnification=2)
        wavelengths = [560.0 + 10.0 * i for i in range(15)]
        calib = calibrate(desk_screen, geo, wavelengths, n=8)
        assert calib.bands == 15

    def test_deterministic(self, desk_screen):
        geo = Geometry(distance=5000.0, detector_size=16, magnification=2)
        a = calibrate(desk_screen, geo, [560.0, 600.0], n=8)
        b = calibrate(desk_screen, geo, [560.0, 600.0], n=8)
        for pa, pb in zip(a.reference_patterns, b.reference_patterns):
            assert np.array_equal(pa.intensity, pb.intensity)
        assert a.fingerprint() == b.fingerprint()

    def test_oversized_patterns(self, desk_calib):
        assert desk_calib.pattern_size == 32 + 2 * 16

    def test_screen_too_small(self):
        tiny = make_phase_screen(1, 32, 1.0, 4.0)
        geo = Geometry(distance=5000.0, detector_size=32, magnification=2)
        with pytest.raises(ConfigError, match="too small"):
            calibrate(tiny, geo, [600.0], n=16)

    def test_wavelengths_must_increase(self, desk_screen):
        geo = Geometry(distance=5000.0, detector_size=16, magnification=2)
        with pytest.raises(InvalidParameterError):
            calibrate(desk_screen, geo, [600.0, 560.0], n=8)


class TestDenseMatrix:
    def test_column_is_windowed_pattern(self, desk_calib, desk_dense):
        ref = desk_calib.reference_patterns[2].intensity
        k = (2 * 16 + 3) * 16 + 5  # band 2, row 3, col 5 (band-major)
        window = ref[2 * 3 : 2 * 3 + 32, 2 * 5 : 2 * 5 + 32]
        np.testing.assert_allclose(
            desk_dense.dense_matrix[:, k], window.ravel(), rtol=1e-6
        )

    def test_shape_and_sampling_rate(self, desk_dense):
        assert desk_dense.dense_matrix.shape == (1024, 2048)
        assert sampling_rate(16, 32, 8) == Fraction(1, 2)

    def test_paper_geometry_rate(self):
        assert sampling_rate(144, 288, 15) == Fraction(4, 15)

    def test_capacity_cap(self, desk_calib):
        with pytest.raises(CapacityError, match="convolutional"):
            SensingOperator(desk_calib, mode=DENSE, dense_cap_bytes=1024)

    def test_unit_l2_normalization(self, desk_calib):
        op = SensingOperator(desk_calib, mode=DENSE, column_norm="unit_l2")
        norms = np.linalg.norm(op.dense_matrix, axis=0)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)


class TestForwardAdjoint:
    def test_zero_in_zero_out(self, desk_conv):
        meas = forward(desk_conv, np.zeros((16, 16, 8)))
        assert np.all(meas.image == 0)

    def test_one_hot_matches_column(self, desk_conv, desk_dense):
        x = np.zeros((16, 16, 8))
        x[4, 7, 3] = 1.0
        y = forward(desk_conv, x).image
        k = (3 * 16 + 4) * 16 + 7
        np.testing.assert_allclose(y.ravel(), desk_dense.dense_matrix[:, k], rtol=1e-9)

    def test_dense_conv_forward_agree(self, desk_conv, desk_dense, rng):
        x = rng.random((16, 16, 8))
        yd = desk_dense.apply(x)
        yc = desk_conv.apply(x)
        assert np.abs(yd - yc).max() <= 1e-6 * np.abs(yd).max()

    def test_dense_conv_adjoint_agree(self, desk_conv, desk_dense, rng):
        y = rng.random((32, 32))
        ad = desk_dense.adjoint_apply(y)
        ac = desk_conv.adjoint_apply(y)
        assert np.abs(ad - ac).max() <= 1e-6 * np.abs(ad).max()

    def test_linearity(self, desk_conv, rng):
        x1, x2 = rng.random((16, 16, 8)), rng.random((16, 16, 8))
        lhs = desk_conv.apply(2.5 * x1 - 0.5 * x2)
        rhs = 2.5 * desk_conv.apply(x1) - 0.5 * desk_conv.apply(x2)
        assert np.abs(lhs - rhs).max() <= 1e-9 * np.abs(rhs).max()

    @pytest.mark.parametrize("column_norm", ["none", "unit_l2"])
    def test_dot_product_identity(self, desk_calib, column_norm, rng):
        op = SensingOperator(desk_calib, mode=CONVOLUTIONAL, column_norm=column_norm)
        scale = np.linalg.norm(op.total_reference_image())
        for _ in range(20):
            x = rng.standard_normal((16, 16, 8))
            y = rng.standard_normal((32, 32))
            lhs = float(np.sum(op.apply(x) * y))
            rhs = float(np.sum(x * op.adjoint_apply(y)))
            bound = 1e-6 * np.linalg.norm(x) * np.linalg.norm(y) * scale
            assert abs(lhs - rhs) <= bound

    def test_adjoint_of_zero(self, desk_conv):
        assert np.all(desk_conv.adjoint_apply(np.zeros((32, 32))) == 0)

    def test_one_hot_backprojection_peaks_at_voxel(self, desk_calib):
        # exhaustive over all 2048 voxels: adjoint(forward(e_k)) peaks at k,
        # i.e. every column of the Gram matrix is maximal on its diagonal
        op = SensingOperator(desk_calib, mode=DENSE, column_norm="unit_l2")
        gram = op.dense_matrix.T @ op.dense_matrix
        assert np.array_equal(np.argmax(gram, axis=0), np.arange(gram.shape[0]))

    def test_shape_mismatch(self, desk_conv):
        with pytest.raises(ShapeError):
            desk_conv.apply(np.zeros((8, 8, 8)))
        with pytest.raises(ShapeError):
            desk_conv.adjoint_apply(np.zeros((16, 16)))

    def test_cube_wavelength_pairing(self, desk_conv, rng):
        bad = HsiCube(rng.random((16, 16, 8)), [500.0 + i for i in range(8)])
        with pytest.raises(PairingError):
            desk_conv.apply(bad)
        good = HsiCube(rng.random((16, 16, 8)), DESK_WAVELENGTHS)
        assert forward(desk_conv, good).image.shape == (32, 32)


class TestNoise:
    @pytest.mark.parametrize("target", [10.0, 25.0, 40.0])
    def test_empirical_snr_matches_target(self, desk_conv, rng, target):
        x = rng.random((16, 16, 8))
        clean = desk_conv.apply(x)
        meas = forward(desk_conv, x, NoiseSpec("additive_gaussian", target), seed=7)
        snr = 10.0 * np.log10(np.sum(clean**2) / np.sum((meas.image - clean) ** 2))
        assert abs(snr - target) <= 0.1

    def test_noise_deterministic_in_seed(self, desk_conv, rng):
        x = rng.random((16, 16, 8))
        spec = NoiseSpec("additive_gaussian", 20.0)
        a = forward(desk_conv, x, spec, seed=3).image
        b = forward(desk_conv, x, spec, seed=3).image
        c = forward(desk_conv, x, spec, seed=4).image
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_none_noise_is_exact(self, desk_conv, rng):
        x = rng.random((16, 16, 8))
        meas = forward(desk_conv, x, NoiseSpec("none"), seed=3)
        np.testing.assert_array_equal(meas.image, desk_conv.apply(x))

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidParameterError):
            NoiseSpec("poisson")


class TestPairing:
    def test_fingerprint_mismatch_detected(self, desk_calib, desk_conv, rng):
        x = rng.random((16, 16, 8))
        meas = forward(desk_conv, x)
        other = SensingOperator(desk_calib, mode=CONVOLUTIONAL, column_norm="unit_l2")
        with pytest.raises(PairingError):
            check_pairing(other, meas)

    def test_adjoint_checks_pairing(self, desk_calib, desk_conv, rng):
        meas = forward(desk_conv, rng.random((16, 16, 8)))
        other = SensingOperator(desk_calib, mode=CONVOLUTIONAL, column_norm="unit_l2")
        with pytest.raises(PairingError):
            adjoint(other, meas)
        assert adjoint(desk_conv, meas).shape == (16, 16, 8)


class TestQuadrantReshape:
    def test_four_by_four_example(self):
        image = np.arange(16.0).reshape(4, 4)
        patches = reshape_measurement(image)
        np.testing.assert_array_equal(patches[:, :, 0], [[0, 1], [4, 5]])
        np.testing.assert_array_equal(patches[:, :, 1], [[2, 3], [6, 7]])
        np.testing.assert_array_equal(patches[:, :, 2], [[8, 9], [12, 13]])
        np.testing.assert_array_equal(patches[:, :, 3], [[10, 11], [14, 15]])

    def test_roundtrip_bit_exact(self, rng):
        image = rng.random((32, 32))
        np.testing.assert_array_equal(assemble_measurement(reshape_measurement(image)), image)

    def test_paper_sized_quadrants(self):
        patches = reshape_measurement(np.zeros((288, 288)))
        assert patches.shape == (144, 144, 4)

    def test_odd_side_rejected(self):
        with pytest.raises(ShapeError):
            reshape_measurement(np.zeros((5, 5)))


class TestInvariants:
    def test_nonneg_input_nonneg_measurement(self, desk_conv, rng):
        # up to FFT rounding, nonnegative cubes measure nonnegatively
        x = rng.random((16, 16, 8))
        y = desk_conv.apply(x)
        assert y.min() >= -1e-12 * y.max()

    def test_paper_geometry_dense_refused(self, rng):
        # 82944 x 311040 in float64 is ~193 GiB, far beyond the default cap
        from giscsim.optics import SpecklePattern

        patterns = [
            SpecklePattern(rng.random((576, 576)), 560.0 + 10.0 * i) for i in range(15)
        ]
        calib = CalibrationSet(
            patterns, [560.0 + 10.0 * i for i in range(15)], magnification=2, n=144, m=288
        )
        with pytest.raises(CapacityError, match="convolutional"):
            build_dense_matrix(calib)
