"""Shared fixtures: one desk-scale screen/calibration reused across tests."""

import numpy as np
import pytest

from giscsim.optics import Geometry, make_phase_screen
from giscsim.sensing import CONVOLUTIONAL, DENSE, SensingOperator, calibrate

DESK_WAVELENGTHS = [560.0 + 20.0 * i for i in range(8)]


@pytest.fixture(scope="session")
def desk_screen():
    # high phase depth + wide grains: decorrelated columns and bands
    return make_phase_screen(
        seed=42, size=256, pitch=1.0, correlation_length=24.0, refractive_delta=2.0
    )


@pytest.fixture(scope="session")
def desk_calib(desk_screen):
    geometry = Geometry(distance=5000.0, detector_size=32, magnification=2)
    return calibrate(desk_screen, geometry, DESK_WAVELENGTHS, n=16)


@pytest.fixture(scope="session")
def desk_calib_sr(desk_screen):
    geometry = Geometry(distance=5000.0, detector_size=32, magnification=2)
    return calibrate(desk_screen, geometry, DESK_WAVELENGTHS, n=16, super_rayleigh_gamma=2.0)


@pytest.fixture(scope="session")
def desk_dense(desk_calib):
    return SensingOperator(desk_calib, mode=DENSE)


@pytest.fixture(scope="session")
def desk_conv(desk_calib):
    return SensingOperator(desk_calib, mode=CONVOLUTIONAL)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
