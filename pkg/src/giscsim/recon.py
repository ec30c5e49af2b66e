"""Classical reconstruction: intensity correlation, differential variant,
and accelerated proximal-gradient compressive sensing.

All three consume a Measurement plus a SensingOperator and produce a
ReconResult whose estimate has the operator's (n, n, B) object shape.
The correlation solvers are matrix-free closed forms; the CS solver is
FISTA on  min 0.5*|Ax - y|^2 + tau*|Tx|_1  with an orthonormal sparsity
transform T (identity or per-band 2-D DCT).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as spfft

from .errors import (
    DegenerateCalibrationError,
    InvalidParameterError,
    StepSizeError,
)
from .hsi import HsiCube
from .sensing import Measurement, SensingOperator, check_pairing


@dataclass
class ReconConfig:
    """Solver knobs. ``step``/``tau`` accept "auto" or an explicit value."""

    algorithm: str = "cs_fista"  # gi | dgi | cs_fista
    max_iters: int = 200
    step: float | str = "auto"  # auto: safety_factor / power-iteration estimate
    tau: float | str = "auto"  # auto: 1e-3 * max|A^T y|
    tol: float = 1e-5
    transform: str = "identity"  # identity | dct2_per_band
    momentum: bool = True  # False gives plain ISTA
    restart: bool = True  # adaptive restart on objective increase
    power_iters: int = 50
    safety_factor: float = 0.95

    def __post_init__(self):
        if self.algorithm not in ("gi", "dgi", "cs_fista"):
            raise InvalidParameterError(f"unknown algorithm {self.algorithm!r}")
        if self.max_iters < 1:
            raise InvalidParameterError("max_iters must be >= 1")
        if not 0.0 < self.tol < 1.0:
            raise InvalidParameterError("tol must be in (0, 1)")


@dataclass
class ReconResult:
    estimate: HsiCube
    objective_trace: list[float] = field(default_factory=list)
    iterations_used: int = 0
    wall_time: float = 0.0
    wall_ms_trace: list[float] = field(default_factory=list)  # cumulative per iteration


def soft_threshold(values: np.ndarray, theta: float) -> np.ndarray:
    """Elementwise sign(v) * max(|v| - theta, 0)."""
    if theta < 0:
        raise InvalidParameterError(f"threshold must be >= 0, got {theta}")
    return np.sign(values) * np.maximum(np.abs(values) - theta, 0.0)


def _normalize_unit(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi > lo:
        return (values - lo) / (hi - lo)
    return np.zeros_like(values)


def _as_cube(values: np.ndarray, op: SensingOperator, name: str) -> HsiCube:
    return HsiCube(
        data=values.astype(np.float32),
        wavelengths_nm=op.calib.wavelengths,
        name=name,
    )


def _measurement_image(y, op: SensingOperator) -> np.ndarray:
    if isinstance(y, Measurement):
        check_pairing(op, y)
        return y.image
    return np.asarray(y, dtype=np.float64)


def gi_correlation_values(y, op: SensingOperator) -> np.ndarray:
    """Centered intensity correlation, raw (unnormalized) values.

    x_k = sum_j (y_j - mean(y)) (col_jk - mean_j(col_k)), evaluated
    matrix-free as adj(y) - mean(y) * adj(ones).
    """
    image = _measurement_image(y, op)
    return op.adjoint_apply(image) - image.mean() * op.adjoint_apply(
        np.ones_like(image)
    )


def dgi_values(y, op: SensingOperator) -> np.ndarray:
    """Differential correlation, raw values.

    x_k = <y S_k> - (<y>/<R>) <R S_k> with R the forward image of the
    all-ones cube; averages run over detector pixels.  Exactly invariant
    to adding any multiple of R to the measurement.
    """
    image = _measurement_image(y, op)
    reference = op.total_reference_image()
    ref_mean = reference.mean()
    if ref_mean == 0:
        raise DegenerateCalibrationError(
            "total reference intensity is zero; calibration is degenerate"
        )
    pixels = image.size
    return (
        op.adjoint_apply(image) - (image.mean() / ref_mean) * op.adjoint_apply(reference)
    ) / pixels


def gi_correlate(y, op: SensingOperator) -> ReconResult:
    """Correlation reconstruction, min-max normalized to [0, 1]."""
    start = time.perf_counter()
    values = gi_correlation_values(y, op)
    return ReconResult(
        estimate=_as_cube(_normalize_unit(values), op, "gi"),
        wall_time=time.perf_counter() - start,
    )


def dgi(y, op: SensingOperator) -> ReconResult:
    """Differential correlation reconstruction, normalized to [0, 1]."""
    start = time.perf_counter()
    values = dgi_values(y, op)
    return ReconResult(
        estimate=_as_cube(_normalize_unit(values), op, "dgi"),
        wall_time=time.perf_counter() - start,
    )


def estimate_lipschitz(op: SensingOperator, iters: int = 50, seed: int = 0) -> float:
    """Largest eigenvalue of (A^T A) by power iteration."""
    rng = np.random.default_rng(np.uint64(seed))
    v = rng.standard_normal((op.n, op.n, op.bands))
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(iters):
        w = op.adjoint_apply(op.apply(v))
        lam = np.linalg.norm(w)
        if lam == 0:
            return 1.0
        v = w / lam
    return float(lam)


class _Transform:
    """Orthonormal sparsity basis: coefficients = analyze(x)."""

    def __init__(self, kind: str):
        if kind not in ("identity", "dct2_per_band"):
            raise InvalidParameterError(f"unknown transform {kind!r}")
        self.kind = kind

    def analyze(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return x
        return spfft.dctn(x, axes=(0, 1), norm="ortho")

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return c
        return spfft.idctn(c, axes=(0, 1), norm="ortho")


def cs_reconstruct(y, op: SensingOperator, cfg: ReconConfig | None = None) -> ReconResult:
    """FISTA with soft thresholding in the configured transform.

    Runs from a zero start until the relative iterate change drops below
    ``cfg.tol`` or ``cfg.max_iters`` is hit.  The objective is recorded
    every iteration; a 10x blow-up over the initial objective aborts with
    a step-size error.  ``cfg.momentum=False`` gives plain ISTA, which is
    monotone for any step below the Lipschitz bound.
    """
    cfg = cfg or ReconConfig()
    start = time.perf_counter()
    image = _measurement_image(y, op)
    transform = _Transform(cfg.transform)

    if cfg.step == "auto":
        step = cfg.safety_factor / estimate_lipschitz(op, cfg.power_iters)
    else:
        step = float(cfg.step)
        if step <= 0:
            raise InvalidParameterError(f"step must be positive, got {step}")

    back = op.adjoint_apply(image)
    if cfg.tau == "auto":
        tau = 1e-3 * float(np.abs(back).max())
    else:
        tau = float(cfg.tau)
        if tau < 0:
            raise InvalidParameterError(f"tau must be >= 0, got {tau}")

    def objective(x: np.ndarray, residual: np.ndarray) -> float:
        value = 0.5 * float(np.sum(residual * residual))
        if tau > 0:
            value += tau * float(np.abs(transform.analyze(x)).sum())
        return value

    x = np.zeros((op.n, op.n, op.bands))
    z = x
    t = 1.0
    initial = objective(x, -image)
    prev_obj = initial
    trace: list[float] = []
    wall_ms: list[float] = []
    iterations = 0

    for iterations in range(1, cfg.max_iters + 1):
        residual_z = op.apply(z) - image
        grad = op.adjoint_apply(residual_z)
        x_new = z - step * grad
        if tau > 0:
            x_new = transform.synthesize(soft_threshold(transform.analyze(x_new), step * tau))
        obj = objective(x_new, op.apply(x_new) - image)
        trace.append(obj)
        wall_ms.append((time.perf_counter() - start) * 1e3)
        if initial > 0 and obj > 10.0 * initial:
            raise StepSizeError(
                f"objective grew from {initial:.3e} to {obj:.3e}; "
                "reduce the step size or use step='auto'"
            )
        if cfg.momentum:
            if cfg.restart and obj > prev_obj:
                t = 1.0  # adaptive restart: drop accumulated momentum
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = x_new + ((t - 1.0) / t_next) * (x_new - x)
            t = t_next
        else:
            z = x_new
        delta = np.linalg.norm(x_new - x)
        base = np.linalg.norm(x)
        x = x_new
        prev_obj = obj
        if delta <= cfg.tol * max(base, 1e-30):
            break

    return ReconResult(
        estimate=_as_cube(x, op, "cs_fista"),
        objective_trace=trace,
        iterations_used=iterations,
        wall_time=time.perf_counter() - start,
        wall_ms_trace=wall_ms,
    )


def reconstruct(y, op: SensingOperator, cfg: ReconConfig | None = None) -> ReconResult:
    """Dispatch on cfg.algorithm."""
    cfg = cfg or ReconConfig()
    if cfg.algorithm == "gi":
        return gi_correlate(y, op)
    if cfg.algorithm == "dgi":
        return dgi(y, op)
    if cfg.algorithm == "cs_fista":
        return cs_reconstruct(y, op, cfg)
    raise InvalidParameterError(f"unknown algorithm {cfg.algorithm!r}")
