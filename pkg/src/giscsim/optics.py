"""Speckle synthesis from a thin random phase modulator.

The modulator is a Gaussian random surface with a Gaussian autocorrelation.
A monochromatic source at object-plane offset (dx, dy) illuminates it as a
tilted plane wave (the collimated image of the source point); the field
picks up the phase 2*pi*refractive_delta*h/lambda and free-propagates to
the detector, where the intensity is recorded.

Two propagation windows are used:

* on-axis calibration patterns (``calibration_speckle``) run on the fully
  periodic screen grid, which makes the intensity statistics stationary
  across the whole detector;
* offset sources (``speckle_from_point_source``) embed the finite screen
  in a zero-padded window, because a tilted plane wave is not periodic on
  the screen grid.  Within this family a source offset translates the
  detected pattern by magnification * offset pixels (the memory effect).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidParameterError, MemoryEffectError, NumericError

# Ratio between the Gaussian smoothing sigma and the autocorrelation
# half-width at half maximum it produces: HWHM = 2*sigma*sqrt(ln 2).
_HWHM_PER_SIGMA = 2.0 * np.sqrt(np.log(2.0))

RAYLEIGH = "rayleigh"
SUPER_RAYLEIGH = "super_rayleigh"


@dataclass(frozen=True)
class PhaseScreen:
    """Random surface-height map of the modulator.

    ``grid`` is mean-free with unit sample variance; heights are in the
    same length units as the wavelength after the refractive_delta scaling
    (micrometers here).
    """

    grid: np.ndarray
    pitch: float  # spatial sampling interval, micrometers
    correlation_length: float  # autocorrelation HWHM, micrometers
    refractive_delta: float = 0.5
    seed: int = 0

    @property
    def size(self) -> int:
        return self.grid.shape[0]

    def phase(self, wavelength_nm: float) -> np.ndarray:
        """Phase delay in radians at the given wavelength."""
        if wavelength_nm <= 0:
            raise InvalidParameterError(f"wavelength must be positive, got {wavelength_nm}")
        wl_um = wavelength_nm * 1e-3
        return 2.0 * np.pi * self.refractive_delta * self.grid / wl_um


@dataclass
class ComplexField:
    """Scalar optical field sampled on a square grid."""

    data: np.ndarray  # complex128
    pitch: float  # micrometers
    wavelength: float  # nanometers

    @property
    def re(self) -> np.ndarray:
        return self.data.real

    @property
    def im(self) -> np.ndarray:
        return self.data.imag

    def energy(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2))


@dataclass(frozen=True)
class Geometry:
    """Propagation geometry between modulator and detector."""

    distance: float = 5000.0  # micrometers
    detector_size: int = 512  # pixels
    magnification: float = 2.0  # detector shift per object-plane pixel
    pad_factor: int = 4  # window oversizing for offset (aperture) sources


@dataclass
class SpecklePattern:
    """Detector-plane intensity pattern for one wavelength."""

    intensity: np.ndarray
    wavelength: float  # nanometers
    statistics_tag: str = RAYLEIGH
    gamma: float | None = None  # set for super_rayleigh patterns

    def __post_init__(self):
        if np.any(self.intensity < 0):
            raise InvalidParameterError("speckle intensity must be nonnegative")


@dataclass(frozen=True)
class SpeckleStats:
    mean: float
    stddev: float
    contrast: float  # stddev / mean
    sample_count: int


def make_phase_screen(
    seed: int, size: int, pitch: float, correlation_length: float, refractive_delta: float = 0.5
) -> PhaseScreen:
    """Generate a random phase screen.

    Gaussian white noise is smoothed with a periodic Gaussian kernel whose
    width is chosen so the autocorrelation of the result has a half-width
    at half maximum of ``correlation_length``, then the grid is
    mean-subtracted and rescaled to unit sample variance.  Deterministic
    for a given seed.
    """
    if size < 16:
        raise InvalidParameterError(f"screen size must be >= 16 pixels, got {size}")
    if correlation_length < pitch:
        raise InvalidParameterError(
            f"correlation_length ({correlation_length}) must be >= pitch ({pitch})"
        )
    rng = np.random.default_rng(np.uint64(seed))
    noise = rng.standard_normal((size, size))
    sigma_px = (correlation_length / pitch) / _HWHM_PER_SIGMA
    grid = ndimage.gaussian_filter(noise, sigma_px, mode="wrap")
    grid -= grid.mean()
    grid /= grid.std()
    grid -= grid.mean()  # second pass keeps |mean| at float rounding level
    return PhaseScreen(
        grid=grid,
        pitch=pitch,
        correlation_length=correlation_length,
        refractive_delta=refractive_delta,
        seed=seed,
    )


def _transfer_function(n: int, pitch: float, wavelength_nm: float, distance: float) -> np.ndarray:
    """Angular-spectrum transfer function exp(i*kz*z) with evanescent cutoff."""
    wl_um = wavelength_nm * 1e-3
    fx = np.fft.fftfreq(n, d=pitch)
    fx2 = fx * fx
    f2 = fx2[:, None] + fx2[None, :]
    kz2 = 1.0 / wl_um**2 - f2
    propagating = kz2 > 0.0
    h = np.zeros((n, n), dtype=np.complex128)
    h[propagating] = np.exp(1j * 2.0 * np.pi * distance * np.sqrt(kz2[propagating]))
    return h


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def propagate(field: ComplexField, distance: float) -> ComplexField:
    """Free-space propagation by the angular-spectrum method.

    The transfer function is unitary on propagating components and drops
    evanescent ones, so energy is conserved whenever the grid cannot
    represent evanescent frequencies (pitch > wavelength/sqrt(2)).
    Non-power-of-two grids are zero-padded to the next power of two and
    cropped back.
    """
    if field.wavelength <= 0:
        raise InvalidParameterError(f"wavelength must be positive, got {field.wavelength}")
    n = field.data.shape[0]
    if field.data.shape[0] != field.data.shape[1]:
        raise InvalidParameterError("propagate requires a square field")
    m = _next_pow2(n)
    if m != n:
        buf = np.zeros((m, m), dtype=np.complex128)
        buf[:n, :n] = field.data
    else:
        buf = np.asarray(field.data, dtype=np.complex128)
    h = _transfer_function(m, field.pitch, field.wavelength, distance)
    out = np.fft.ifft2(np.fft.fft2(buf) * h)
    if m != n:
        out = out[:n, :n]
    return ComplexField(data=out, pitch=field.pitch, wavelength=field.wavelength)


def calibration_speckle(
    screen: PhaseScreen, wavelength_nm: float, geometry: Geometry
) -> SpecklePattern:
    """On-axis reference speckle on the periodic screen grid.

    Statistics are stationary over the full window, which is what the
    sensing-operator calibration needs.  The detector crop is the top-left
    ``detector_size`` square.
    """
    if geometry.detector_size > screen.size:
        raise InvalidParameterError(
            f"detector_size {geometry.detector_size} exceeds screen size {screen.size}"
        )
    fld = ComplexField(
        data=np.exp(1j * screen.phase(wavelength_nm)),
        pitch=screen.pitch,
        wavelength=wavelength_nm,
    )
    out = propagate(fld, geometry.distance)
    intensity = np.abs(out.data[: geometry.detector_size, : geometry.detector_size]) ** 2
    return SpecklePattern(intensity=intensity, wavelength=wavelength_nm)


def speckle_from_point_source(
    screen: PhaseScreen,
    source_offset: tuple[float, float],
    wavelength_nm: float,
    geometry: Geometry,
) -> SpecklePattern:
    """Speckle pattern for a monochromatic source at an object-plane offset.

    The source appears at the modulator as a plane wave tilted by
    magnification * offset * pitch / (wavelength * distance) cycles per
    micrometer, so the detected pattern is, within the memory-effect
    approximation, the on-axis pattern translated by magnification *
    offset pixels.  The screen is embedded in a ``pad_factor`` times
    larger zero window (a tilted wave is not periodic on the screen grid)
    and the detector is the central ``detector_size`` crop.
    """
    if geometry.detector_size > screen.size:
        raise InvalidParameterError(
            f"detector_size {geometry.detector_size} exceeds screen size {screen.size}"
        )
    dx, dy = source_offset
    shift_x = geometry.magnification * dx
    shift_y = geometry.magnification * dy
    if max(abs(shift_x), abs(shift_y)) >= geometry.detector_size:
        raise MemoryEffectError(
            f"offset {source_offset} shifts the pattern by ({shift_x}, {shift_y}) px, "
            f"outside the {geometry.detector_size}-px detector"
        )
    size = screen.size
    window = geometry.pad_factor * size
    wl_um = wavelength_nm * 1e-3
    coords = np.arange(size) * screen.pitch
    f0x = shift_x * screen.pitch / (wl_um * geometry.distance)
    f0y = shift_y * screen.pitch / (wl_um * geometry.distance)
    tilt = np.exp(1j * 2.0 * np.pi * (f0x * coords[:, None] + f0y * coords[None, :]))
    buf = np.zeros((window, window), dtype=np.complex128)
    lo = (window - size) // 2
    buf[lo : lo + size, lo : lo + size] = tilt * np.exp(1j * screen.phase(wavelength_nm))
    out = propagate(
        ComplexField(data=buf, pitch=screen.pitch, wavelength=wavelength_nm),
        geometry.distance,
    )
    d = geometry.detector_size
    c = (window - d) // 2
    intensity = np.abs(out.data[c : c + d, c : c + d]) ** 2
    return SpecklePattern(intensity=intensity, wavelength=wavelength_nm)


def to_super_rayleigh(pattern: SpecklePattern, gamma: float) -> SpecklePattern:
    """Raise intensities to the power gamma, preserving the mean.

    Sharpens the intensity distribution: the output contrast exceeds the
    input contrast for gamma > 1 (equality only in the gamma -> 1 limit).
    """
    if gamma <= 1.0:
        raise InvalidParameterError(f"gamma must be > 1, got {gamma}")
    if pattern.statistics_tag != RAYLEIGH:
        raise InvalidParameterError("input pattern must carry Rayleigh statistics")
    powered = pattern.intensity**gamma
    mean_in = pattern.intensity.mean()
    mean_out = powered.mean()
    if mean_out > 0:
        powered *= mean_in / mean_out
    return SpecklePattern(
        intensity=powered,
        wavelength=pattern.wavelength,
        statistics_tag=SUPER_RAYLEIGH,
        gamma=gamma,
    )


def contrast(pattern: SpecklePattern) -> SpeckleStats:
    """Mean, population standard deviation, and their ratio."""
    values = pattern.intensity
    if values.size == 0:
        raise InvalidParameterError("cannot compute contrast of an empty pattern")
    mean = float(values.mean())
    std = float(values.std())
    if mean == 0.0:
        raise NumericError(
            "contrast undefined: pattern mean intensity is zero (all-zero pattern?)"
        )
    return SpeckleStats(mean=mean, stddev=std, contrast=std / mean, sample_count=values.size)
