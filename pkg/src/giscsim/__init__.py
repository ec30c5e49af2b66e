"""Desk-scale simulator and benchmark for a speckle-modulated snapshot
spectral camera: calibrated sensing operators, single-shot compressive
measurements, classical reconstruction, quality metrics, and training
data export for the companion neural reconstructor."""

from .errors import (
    CapacityError,
    ConfigError,
    DegenerateCalibrationError,
    FormatError,
    GiscError,
    InvalidParameterError,
    MemoryEffectError,
    NumericError,
    PairingError,
    ShapeError,
    StepSizeError,
)
from .hsi import (
    DatasetManifest,
    HsiCube,
    ManifestEntry,
    SliceSpec,
    load_hsib,
    select_bands,
    slice_cube,
    split,
    store_hsib,
)
from .metrics import MetricsReport, evaluate, evaluate_set, psnr, sam, ssim
from .optics import (
    ComplexField,
    Geometry,
    PhaseScreen,
    SpecklePattern,
    SpeckleStats,
    calibration_speckle,
    contrast,
    make_phase_screen,
    propagate,
    speckle_from_point_source,
    to_super_rayleigh,
)
from .recon import (
    ReconConfig,
    ReconResult,
    cs_reconstruct,
    dgi,
    dgi_values,
    gi_correlate,
    gi_correlation_values,
    reconstruct,
    soft_threshold,
)
from .sensing import (
    CalibrationSet,
    Measurement,
    NoiseSpec,
    SensingOperator,
    adjoint,
    assemble_measurement,
    build_dense_matrix,
    build_operator,
    calibrate,
    forward,
    reshape_measurement,
    sampling_rate,
)

__version__ = "0.1.0"
