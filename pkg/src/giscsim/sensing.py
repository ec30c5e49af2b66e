"""Sensing operator built from calibrated speckles.

The operator maps an n x n x B object cube to an m x m detector image.
The column for object voxel (row, col, band) is the band's oversized
reference pattern windowed at (mag*row, mag*col), so the forward map is a
strided cross-correlation per band and both forward and adjoint run
matrix-free over FFTs.  A dense matrix form exists for small instances
and doubles as the oracle for the convolutional path.

Voxel ordering in the dense matrix is band-major, then row-major within
a band: column index k = (band * n + row) * n + col.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    CapacityError,
    ConfigError,
    InvalidParameterError,
    PairingError,
    ShapeError,
)
from .hsi import HsiCube
from .optics import Geometry, PhaseScreen, SpecklePattern, calibration_speckle, to_super_rayleigh

DENSE = "dense"
CONVOLUTIONAL = "convolutional"

DEFAULT_DENSE_CAP_BYTES = 2 << 30  # refuse dense matrices above 2 GiB

# dense mode is exact but only viable on small instances; above this
# object size the convolutional mode is the default
DENSE_DEFAULT_MAX_N = 32


@dataclass
class NoiseSpec:
    kind: str = "none"  # "none" | "additive_gaussian"
    target_snr_db: float = 30.0

    def __post_init__(self):
        if self.kind not in ("none", "additive_gaussian"):
            raise InvalidParameterError(f"unknown noise kind {self.kind!r}")


@dataclass
class Measurement:
    """Single-shot detector image plus the noise bookkeeping."""

    image: np.ndarray  # (m, m)
    noise: NoiseSpec
    seed: int = 0
    fingerprint: int | None = None

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        if self.image.ndim != 2 or self.image.shape[0] != self.image.shape[1]:
            raise ShapeError(f"measurement must be square 2-D, got {self.image.shape}")
        if not np.all(np.isfinite(self.image)):
            raise InvalidParameterError("measurement contains non-finite values")


@dataclass
class CalibrationSet:
    """Per-wavelength reference patterns plus the imaging geometry.

    Patterns are (m + mag*n) square so every magnified shift of the n x n
    object grid stays inside them.
    """

    reference_patterns: list[SpecklePattern]
    wavelengths: list[float]
    magnification: int
    n: int
    m: int
    gamma: float | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.reference_patterns) != len(self.wavelengths):
            raise ShapeError("one reference pattern per wavelength required")
        shapes = {p.intensity.shape for p in self.reference_patterns}
        if len(shapes) > 1:
            raise ShapeError(f"reference patterns disagree on shape: {shapes}")

    @property
    def bands(self) -> int:
        return len(self.wavelengths)

    @property
    def pattern_size(self) -> int:
        return self.reference_patterns[0].intensity.shape[0]

    def fingerprint(self, column_norm: str = "none") -> int:
        """64-bit hash identifying the calibration + normalization."""
        payload = json.dumps(
            {
                "provenance": self.provenance,
                "wavelengths": self.wavelengths,
                "magnification": self.magnification,
                "n": self.n,
                "m": self.m,
                "gamma": self.gamma,
                "column_norm": column_norm,
            },
            sort_keys=True,
        ).encode("utf-8")
        return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def calibrate(
    screen: PhaseScreen,
    geometry: Geometry,
    wavelengths: list[float],
    n: int,
    super_rayleigh_gamma: float | None = None,
) -> CalibrationSet:
    """Record one on-axis reference pattern per wavelength.

    Patterns are taken on the periodic screen grid (stationary statistics)
    and oversized to m + mag*n so the whole shift family fits.  With
    ``super_rayleigh_gamma`` set, each pattern is sharpened to
    super-Rayleigh statistics before use.
    """
    if not wavelengths:
        raise InvalidParameterError("wavelength list is empty")
    if any(b <= a for a, b in zip(wavelengths, wavelengths[1:])):
        raise InvalidParameterError("wavelengths must be strictly increasing")
    if n < 4:
        raise InvalidParameterError(f"object grid must be at least 4 px, got n={n}")
    mag = geometry.magnification
    if mag != int(mag) or mag < 1:
        raise ConfigError(f"sensing requires a positive integer magnification, got {mag}")
    mag = int(mag)
    m = geometry.detector_size
    pattern_size = m + mag * n
    if pattern_size > screen.size:
        raise ConfigError(
            f"screen ({screen.size} px) too small to cover all shifts: "
            f"need m + mag*n = {pattern_size} px"
        )
    oversized = Geometry(
        distance=geometry.distance,
        detector_size=pattern_size,
        magnification=mag,
        pad_factor=geometry.pad_factor,
    )
    patterns = []
    for wl in wavelengths:
        pat = calibration_speckle(screen, wl, oversized)
        if super_rayleigh_gamma is not None:
            pat = to_super_rayleigh(pat, super_rayleigh_gamma)
        patterns.append(pat)
    provenance = {
        "screen_seed": screen.seed,
        "screen_size": screen.size,
        "pitch_um": screen.pitch,
        "corr_len_um": screen.correlation_length,
        "refractive_delta": screen.refractive_delta,
        "distance_um": geometry.distance,
    }
    return CalibrationSet(
        reference_patterns=patterns,
        wavelengths=list(wavelengths),
        magnification=mag,
        n=n,
        m=m,
        gamma=super_rayleigh_gamma,
        provenance=provenance,
    )


class SensingOperator:
    """Linear map from object cubes to detector images, with adjoint.

    ``mode`` selects the explicit-matrix path ("dense") or the FFT
    cross-correlation path ("convolutional"); both implement the same
    matrix and agree to float rounding.
    """

    def __init__(self, calib: CalibrationSet, mode: str = CONVOLUTIONAL,
                 column_norm: str = "none", dense_cap_bytes: int = DEFAULT_DENSE_CAP_BYTES):
        if mode not in (DENSE, CONVOLUTIONAL):
            raise InvalidParameterError(f"unknown operator mode {mode!r}")
        if column_norm not in ("none", "unit_l2"):
            raise InvalidParameterError(f"unknown column_norm {column_norm!r}")
        self.calib = calib
        self.mode = mode
        self.column_norm = column_norm
        self.fingerprint = calib.fingerprint(column_norm)
        self.n = calib.n
        self.m = calib.m
        self.bands = calib.bands
        self.mag = calib.magnification
        self.dense_matrix: np.ndarray | None = None
        self._refs = [np.asarray(p.intensity, dtype=np.float64) for p in calib.reference_patterns]
        self._ref_ffts: list[np.ndarray] | None = None
        self._col_norms = self._column_norms() if column_norm == "unit_l2" else None
        if mode == DENSE:
            nbytes = (self.m**2) * (self.n**2 * self.bands) * 8
            if nbytes > dense_cap_bytes:
                raise CapacityError(
                    f"dense matrix would take {nbytes / 2**30:.1f} GiB "
                    f"(cap {dense_cap_bytes / 2**30:.1f} GiB); use convolutional mode"
                )
            self.dense_matrix = self._build_dense()

    # -- construction ------------------------------------------------

    def _windows(self, ref: np.ndarray) -> np.ndarray:
        """(n, n, m, m) view: all magnified shift windows of one pattern."""
        v = sliding_window_view(ref, (self.m, self.m))
        return v[:: self.mag, :: self.mag][: self.n, : self.n]

    def _column_norms(self) -> np.ndarray:
        norms = np.empty((self.n, self.n, self.bands))
        for b, ref in enumerate(self._refs):
            w = self._windows(ref)
            norms[:, :, b] = np.sqrt(np.einsum("ijkl,ijkl->ij", w, w))
        if np.any(norms == 0):
            raise ConfigError("a calibration column has zero norm; cannot l2-normalize")
        return norms

    def _build_dense(self) -> np.ndarray:
        cols = []
        for b, ref in enumerate(self._refs):
            w = self._windows(ref).reshape(self.n * self.n, self.m * self.m)
            if self._col_norms is not None:
                w = w / self._col_norms[:, :, b].reshape(-1, 1)
            cols.append(w)
        return np.concatenate(cols, axis=0).T  # (mm, nnB)

    def _fft_refs(self) -> list[np.ndarray]:
        if self._ref_ffts is None:
            self._ref_ffts = [np.fft.rfft2(ref) for ref in self._refs]
        return self._ref_ffts

    # -- linear maps ---------------------------------------------------

    def _check_cube(self, x) -> np.ndarray:
        if isinstance(x, HsiCube):
            if x.wavelengths_nm != self.calib.wavelengths:
                raise PairingError(
                    f"cube wavelengths {x.wavelengths_nm} do not match "
                    f"calibration {self.calib.wavelengths}"
                )
            x = x.data
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n, self.n, self.bands):
            raise ShapeError(
                f"object cube must be {(self.n, self.n, self.bands)}, got {x.shape}"
            )
        return x

    def apply(self, x) -> np.ndarray:
        """Noiseless forward map: (n, n, B) -> (m, m)."""
        x = self._check_cube(x)
        if self.mode == DENSE:
            # the dense matrix already carries any column normalization
            flat = np.ascontiguousarray(x.transpose(2, 0, 1)).reshape(-1)
            return (self.dense_matrix @ flat).reshape(self.m, self.m)
        if self._col_norms is not None:
            x = x / self._col_norms
        size = self.calib.pattern_size
        y = np.zeros((self.m, self.m))
        for b, ref_fft in enumerate(self._fft_refs()):
            up = np.zeros((size, size))
            up[:: self.mag, :: self.mag][: self.n, : self.n] = x[:, :, b]
            corr = np.fft.irfft2(ref_fft * np.conj(np.fft.rfft2(up)), s=(size, size))
            y += corr[: self.m, : self.m]
        return y

    def adjoint_apply(self, y) -> np.ndarray:
        """Transpose map: (m, m) -> (n, n, B)."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.m, self.m):
            raise ShapeError(f"measurement must be {(self.m, self.m)}, got {y.shape}")
        if self.mode == DENSE:
            flat = self.dense_matrix.T @ y.reshape(-1)
            return flat.reshape(self.bands, self.n, self.n).transpose(1, 2, 0)
        size = self.calib.pattern_size
        pad = np.zeros((size, size))
        pad[: self.m, : self.m] = y
        y_fft = np.conj(np.fft.rfft2(pad))
        out = np.empty((self.n, self.n, self.bands))
        for b, ref_fft in enumerate(self._fft_refs()):
            corr = np.fft.irfft2(ref_fft * y_fft, s=(size, size))
            out[:, :, b] = corr[:: self.mag, :: self.mag][: self.n, : self.n]
        if self._col_norms is not None:
            out = out / self._col_norms
        return out

    def total_reference_image(self) -> np.ndarray:
        """Forward image of the all-ones cube (every column summed)."""
        return self.apply(np.ones((self.n, self.n, self.bands)))


def build_dense_matrix(calib: CalibrationSet, m: int | None = None,
                       column_norm: str = "none",
                       dense_cap_bytes: int = DEFAULT_DENSE_CAP_BYTES) -> SensingOperator:
    """Materialize the explicit sensing matrix (small instances only)."""
    if m is not None and m != calib.m:
        raise ConfigError(f"calibration was built for m={calib.m}, got m={m}")
    return SensingOperator(calib, mode=DENSE, column_norm=column_norm,
                           dense_cap_bytes=dense_cap_bytes)


def build_operator(calib: CalibrationSet, column_norm: str = "none",
                   mode: str | None = None) -> SensingOperator:
    """Build the default (matrix-free convolutional) operator.

    Dense mode is allowed only up to DENSE_DEFAULT_MAX_N objects; it is
    kept as the equivalence oracle for the convolutional path.
    """
    if mode is None:
        mode = CONVOLUTIONAL
    if mode == DENSE and calib.n > DENSE_DEFAULT_MAX_N:
        raise ConfigError(
            f"dense mode is limited to n <= {DENSE_DEFAULT_MAX_N}; "
            f"use convolutional mode for n={calib.n}"
        )
    return SensingOperator(calib, mode=mode, column_norm=column_norm)


def forward(op: SensingOperator, x, noise: NoiseSpec | None = None, seed: int = 0) -> Measurement:
    """Measure a cube: y = (sensing matrix) x + noise.

    Gaussian noise is scaled on the realized draw so the empirical SNR
    10*log10(|signal|^2 / |noise|^2) equals the target exactly.
    """
    noise = noise or NoiseSpec()
    clean = op.apply(x)
    image = clean
    if noise.kind == "additive_gaussian":
        rng = np.random.default_rng(np.uint64(seed))
        g = rng.standard_normal(clean.shape)
        signal = np.linalg.norm(clean)
        gnorm = np.linalg.norm(g)
        if signal > 0 and gnorm > 0:
            image = clean + g * (signal / gnorm) * 10.0 ** (-noise.target_snr_db / 20.0)
    return Measurement(image=image, noise=noise, seed=seed, fingerprint=op.fingerprint)


def adjoint(op: SensingOperator, y: Measurement | np.ndarray) -> np.ndarray:
    """Apply the operator transpose to a measurement."""
    if isinstance(y, Measurement):
        check_pairing(op, y)
        y = y.image
    return op.adjoint_apply(y)


def check_pairing(op: SensingOperator, measurement: Measurement) -> None:
    if measurement.fingerprint is not None and measurement.fingerprint != op.fingerprint:
        raise PairingError(
            f"measurement fingerprint {measurement.fingerprint:#018x} does not match "
            f"operator {op.fingerprint:#018x}; rebuild with the matching calibration"
        )


def reshape_measurement(image: np.ndarray) -> np.ndarray:
    """Split an m x m image into its four quadrants, stacked as channels.

    Channel order: top-left, top-right, bottom-left, bottom-right.
    """
    image = np.asarray(image)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ShapeError(f"expected a square 2-D image, got {image.shape}")
    m = image.shape[0]
    if m % 2:
        raise ShapeError(f"quadrant reshape requires even side length, got {m}")
    h = m // 2
    return np.stack(
        [image[:h, :h], image[:h, h:], image[h:, :h], image[h:, h:]], axis=-1
    )


def assemble_measurement(patches: np.ndarray) -> np.ndarray:
    """Inverse of reshape_measurement."""
    patches = np.asarray(patches)
    if patches.ndim != 3 or patches.shape[2] != 4 or patches.shape[0] != patches.shape[1]:
        raise ShapeError(f"expected (h, h, 4) quadrant stack, got {patches.shape}")
    top = np.concatenate([patches[:, :, 0], patches[:, :, 1]], axis=1)
    bottom = np.concatenate([patches[:, :, 2], patches[:, :, 3]], axis=1)
    return np.concatenate([top, bottom], axis=0)


def sampling_rate(n: int, m: int, bands: int):
    """Measurements per unknown, mm / (n*n*B), as an exact fraction."""
    from fractions import Fraction

    return Fraction(m * m, n * n * bands)
