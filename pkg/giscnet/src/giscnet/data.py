"""Training-bundle access.

A bundle directory holds one (measurement, CS estimate, truth) HSIB
triple per slice plus bundle.json with the slice roles and shapes.  The
optional Gaussian denoiser smooths the two network inputs before the
stem; it defaults to off.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .hsib import read_cube


@dataclass
class BundleEntry:
    name: str
    role: str
    measurement: np.ndarray  # (m, m)
    cs_estimate: np.ndarray  # (n, n, B)
    truth: np.ndarray  # (n, n, B)


@dataclass
class Bundle:
    directory: Path
    speckle_kind: str
    wavelengths_nm: list[float]
    config_hash: str
    entries: list[BundleEntry]

    @property
    def bands(self) -> int:
        return len(self.wavelengths_nm)

    def subset(self, role: str) -> list[BundleEntry]:
        return [e for e in self.entries if e.role == role]


def load_bundle(directory) -> Bundle:
    directory = Path(directory)
    meta = json.loads((directory / "bundle.json").read_text())
    entries = []
    for item in meta["entries"]:
        y, _ = read_cube(directory / item["measurement"])
        cs, _ = read_cube(directory / item["cs_estimate"])
        gt, _ = read_cube(directory / item["truth"])
        entries.append(
            BundleEntry(
                name=item["name"],
                role=item["role"],
                measurement=y[:, :, 0],
                cs_estimate=cs,
                truth=gt,
            )
        )
    if not entries:
        raise ValueError(f"bundle at {directory} is empty")
    return Bundle(
        directory=directory,
        speckle_kind=meta.get("speckle_kind", "unknown"),
        wavelengths_nm=[float(w) for w in meta["wavelengths_nm"]],
        config_hash=meta.get("config_hash", ""),
        entries=entries,
    )


def gaussian_kernel(sigma: float, radius: int = 2) -> torch.Tensor:
    coords = torch.arange(-radius, radius + 1, dtype=torch.float32)
    g = torch.exp(-0.5 * (coords / sigma) ** 2)
    k = torch.outer(g, g)
    return k / k.sum()


class InputDenoiser:
    """Per-channel Gaussian smoothing of the network inputs."""

    def __init__(self, kind: str = "off", sigma: float = 0.8):
        if kind not in ("off", "gaussian"):
            raise ValueError(f"unknown denoiser {kind!r}")
        self.kind = kind
        self.kernel = gaussian_kernel(sigma) if kind == "gaussian" else None

    def __call__(self, image: torch.Tensor) -> torch.Tensor:
        if self.kernel is None:
            return image
        c = image.shape[1]
        k = self.kernel.to(image.dtype).expand(c, 1, -1, -1)
        pad = self.kernel.shape[0] // 2
        return torch.nn.functional.conv2d(image, k, padding=pad, groups=c)


def to_tensors(entries: list[BundleEntry], device="cpu", dtype=torch.float32):
    """Stack entries into (measurement, cs, truth) NCHW batches."""
    y = torch.stack(
        [torch.from_numpy(np.ascontiguousarray(e.measurement[None])) for e in entries]
    )
    cs = torch.stack(
        [torch.from_numpy(np.ascontiguousarray(e.cs_estimate.transpose(2, 0, 1))) for e in entries]
    )
    gt = torch.stack(
        [torch.from_numpy(np.ascontiguousarray(e.truth.transpose(2, 0, 1))) for e in entries]
    )
    return (
        y.to(device=device, dtype=dtype),
        cs.to(device=device, dtype=dtype),
        gt.to(device=device, dtype=dtype),
    )
