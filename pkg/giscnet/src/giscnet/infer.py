"""Checkpoint loading and deterministic inference to HSIB cubes."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import torch

from .data import InputDenoiser, load_bundle
from .hsib import write_cube
from .model import GiscNet, build_network
from .spec import NetworkSpec, TrainConfig


def load_checkpoint(path) -> tuple[GiscNet, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    spec = NetworkSpec(**payload["spec"])
    model = build_network(spec, bands=payload["bands"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


def infer(model: GiscNet, measurement: np.ndarray, cs_estimate: np.ndarray,
          denoiser: InputDenoiser | None = None) -> np.ndarray:
    """(m, m) measurement + (n, n, B) CS cube -> (n, n, B) estimate in [0, 1]."""
    model.eval()
    denoiser = denoiser or InputDenoiser()
    y = torch.from_numpy(np.ascontiguousarray(measurement, dtype=np.float32))[None, None]
    cs = torch.from_numpy(
        np.ascontiguousarray(cs_estimate.transpose(2, 0, 1), dtype=np.float32)
    )[None]
    with torch.no_grad():
        out = model(denoiser(y), denoiser(cs))[0].numpy().transpose(1, 2, 0)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def infer_bundle(checkpoint_path, bundle_dir, out_dir, role: str | None = None) -> list[Path]:
    """Reconstruct every bundle slice (optionally one role) to HSIB files.

    Each output gets a JSON sidecar carrying the algorithm name, speckle
    kind, and the originating config hash, so the simulator's evaluator
    can score the cubes directly.
    """
    model, payload = load_checkpoint(checkpoint_path)
    cfg = TrainConfig(**payload["train_config"])
    denoiser = InputDenoiser(cfg.denoiser, cfg.denoiser_sigma)
    bundle = load_bundle(bundle_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    algorithm = f"giscnet:{NetworkSpec(**payload['spec']).variant_name}"
    written = []
    for entry in bundle.entries:
        if role is not None and entry.role != role:
            continue
        cube = infer(model, entry.measurement, entry.cs_estimate, denoiser)
        path = out_dir / f"{entry.name}.hsib"
        write_cube(cube, bundle.wavelengths_nm, path, name=entry.name)
        sidecar = {
            "algorithm": algorithm,
            "speckle_kind": bundle.speckle_kind,
            "config_hash": bundle.config_hash,
            "checkpoint_epoch": payload["epoch"],
        }
        tmp = f"{path.with_suffix('.json')}.tmp.{os.getpid()}"
        with open(tmp, "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
        os.replace(tmp, path.with_suffix(".json"))
        written.append(path)
    return written
