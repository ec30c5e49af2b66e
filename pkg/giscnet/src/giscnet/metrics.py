"""Quality metrics for validation curves.

Conventions match the simulator's evaluator: volume PSNR with peak 1.0
capped at 100 dB, per-band 11x11 Gaussian-window SSIM, mean spectral
angle over valid pixels.
"""

from __future__ import annotations

import math

import numpy as np
import torch

PSNR_CAP_DB = 100.0
_WINDOW = 11
_SIGMA = 1.5
_C1 = 0.01**2
_C2 = 0.03**2


def psnr(truth: np.ndarray, estimate: np.ndarray) -> float:
    mse = float(np.mean((np.asarray(truth, np.float64) - np.asarray(estimate, np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def _window() -> torch.Tensor:
    half = _WINDOW // 2
    coords = torch.arange(-half, half + 1, dtype=torch.float64)
    g = torch.exp(-(coords**2) / (2.0 * _SIGMA**2))
    k = torch.outer(g, g)
    return (k / k.sum()).reshape(1, 1, _WINDOW, _WINDOW)


_KERNEL = _window()


def ssim(truth: np.ndarray, estimate: np.ndarray) -> float:
    """Mean single-scale SSIM over bands; needs height/width >= 11."""
    a = torch.from_numpy(np.asarray(truth, np.float64).transpose(2, 0, 1)).unsqueeze(1)
    b = torch.from_numpy(np.asarray(estimate, np.float64).transpose(2, 0, 1)).unsqueeze(1)

    def filt(img):
        return torch.nn.functional.conv2d(img, _KERNEL)

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + _C1) * (2 * cov + _C2)
    den = (mu_a**2 + mu_b**2 + _C1) * (var_a + var_b + _C2)
    return float((num / den).mean())


def sam(truth: np.ndarray, estimate: np.ndarray) -> float:
    a = np.asarray(truth, np.float64)
    b = np.asarray(estimate, np.float64)
    na = np.sqrt((a * a).sum(axis=2))
    nb = np.sqrt((b * b).sum(axis=2))
    valid = (na > 1e-12) & (nb > 1e-12)
    if not valid.any():
        return 0.0
    ua = a[valid] / na[valid, None]
    ub = b[valid] / nb[valid, None]
    chord = np.linalg.norm(ua - ub, axis=1)
    return float(np.mean(2.0 * np.arcsin(np.clip(0.5 * chord, 0.0, 1.0))))
