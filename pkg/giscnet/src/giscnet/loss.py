"""Training objective: scaled mean absolute error.

The weight multiplies the MEAN absolute residual (not the sum), so its
default of 50 is meaningful independently of cube size.
"""

from __future__ import annotations

import torch

DEFAULT_ALPHA = 50.0


def reconstruction_loss(
    truth: torch.Tensor, prediction: torch.Tensor, alpha: float = DEFAULT_ALPHA
) -> torch.Tensor:
    if truth.shape != prediction.shape:
        raise ValueError(f"shape mismatch: {tuple(truth.shape)} vs {tuple(prediction.shape)}")
    return alpha * torch.mean(torch.abs(truth - prediction))
