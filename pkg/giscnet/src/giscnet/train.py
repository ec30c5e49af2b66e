"""Training loop: deterministic, checkpointed, with per-epoch curves.

Validation rows land in a CSV with the evaluator's column layout
(name, algorithm, speckle_kind, psnr_db, ssim, sam_rad), one row per
epoch.  A non-finite loss aborts immediately, leaving the last good
checkpoint on disk.
"""

from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import Bundle, BundleEntry, InputDenoiser, to_tensors
from .loss import reconstruction_loss
from .metrics import psnr, sam, ssim
from .model import build_network
from .spec import NetworkSpec, TrainConfig

CURVE_HEADER = ["name", "algorithm", "speckle_kind", "psnr_db", "ssim", "sam_rad"]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_psnr_db: float
    val_ssim: float
    val_sam_rad: float
    seconds: float


@dataclass
class TrainResult:
    checkpoint_path: Path
    curve_path: Path
    history: list[EpochRecord] = field(default_factory=list)

    @property
    def best_val_psnr(self) -> float:
        return max(r.val_psnr_db for r in self.history)


def _save_checkpoint(path: Path, model, spec, cfg, bands, epoch, bundle_meta):
    payload = {
        "state_dict": model.state_dict(),
        "spec": asdict(spec),
        "bands": bands,
        "train_config": asdict(cfg),
        "epoch": epoch,
        "speckle_kind": bundle_meta.get("speckle_kind", "unknown"),
        "config_hash": bundle_meta.get("config_hash", ""),
    }
    tmp = f"{path}.tmp.{os.getpid()}"
    torch.save(payload, tmp)
    os.replace(tmp, path)


def _write_curve(path: Path, rows: list[list[str]]):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    writer.writerows(rows)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def recalibrate_bn(model, measurement: torch.Tensor, cs: torch.Tensor, denoise) -> None:
    """Replace BN running statistics with exact training-set statistics.

    With few samples per epoch the momentum-averaged statistics lag the
    quickly-moving weights and eval-mode scores whipsaw; a cumulative
    pass over the training inputs pins them down (precise BN).
    """
    bns = [m for m in model.modules() if isinstance(m, torch.nn.BatchNorm2d)]
    saved = [bn.momentum for bn in bns]
    model.eval()  # keep dropout out of the statistics
    for bn in bns:
        bn.reset_running_stats()
        bn.momentum = None  # cumulative averaging
        bn.train()
    with torch.no_grad():
        model(denoise(measurement), denoise(cs))
    for bn, momentum in zip(bns, saved):
        bn.momentum = momentum


def _evaluate(model, entries: list[BundleEntry], denoise, device) -> tuple[float, float, float]:
    model.eval()
    scores = []
    with torch.no_grad():
        for entry in entries:
            y, cs, _ = to_tensors([entry], device=device)
            pred = model(denoise(y), denoise(cs))[0].cpu().numpy().transpose(1, 2, 0)
            pred = np.clip(pred, 0.0, 1.0)
            scores.append(
                (psnr(entry.truth, pred), ssim(entry.truth, pred), sam(entry.truth, pred))
            )
    arr = np.asarray(scores)
    return float(arr[:, 0].mean()), float(arr[:, 1].mean()), float(arr[:, 2].mean())


def train(
    bundle: Bundle,
    spec: NetworkSpec,
    cfg: TrainConfig,
    out_dir,
    device: str = "cpu",
    stop_psnr_db: float | None = None,
) -> TrainResult:
    """Train on the bundle's train slices, validating on its val slices.

    Falls back to validating on the training slices when the bundle has
    no val role (the overfit regime).  Stops early once the validation
    PSNR reaches ``stop_psnr_db``, when given.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed % 2**32)

    train_entries = bundle.subset("train") or bundle.entries
    val_entries = bundle.subset("val") or train_entries
    denoise = InputDenoiser(cfg.denoiser, cfg.denoiser_sigma)
    model = build_network(spec, bands=bundle.bands).to(device)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    if cfg.lr_schedule == "cosine":
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=cfg.epochs)
    elif cfg.lr_schedule == "constant":
        scheduler = None
    else:
        raise ValueError(f"unknown lr_schedule {cfg.lr_schedule!r}")

    checkpoint_path = out_dir / "checkpoint.pt"
    curve_path = out_dir / "curve.csv"
    bundle_meta = {"speckle_kind": bundle.speckle_kind, "config_hash": bundle.config_hash}
    algorithm = f"giscnet:{spec.variant_name}"

    y_all, cs_all, gt_all = to_tensors(train_entries, device=device)
    history: list[EpochRecord] = []
    curve_rows: list[list[str]] = []
    result = TrainResult(checkpoint_path=checkpoint_path, curve_path=curve_path,
                         history=history)

    order_rng = torch.Generator().manual_seed(cfg.seed)
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        model.train()
        perm = torch.randperm(len(train_entries), generator=order_rng)
        batches = [perm[lo : lo + cfg.batch_size]
                   for lo in range(0, len(train_entries), cfg.batch_size)]
        if len(batches) > 1 and len(batches[-1]) == 1:
            # batch-norm cannot run on a single sample at a 1x1 bottleneck
            batches[-2:] = [torch.cat(batches[-2:])]
        losses = []
        for idx in batches:
            optimizer.zero_grad()
            pred = model(denoise(y_all[idx]), denoise(cs_all[idx]))
            loss = reconstruction_loss(gt_all[idx], pred, cfg.alpha)
            if not torch.isfinite(loss):
                _write_curve(curve_path, curve_rows)
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}; last good checkpoint: "
                    f"{checkpoint_path if checkpoint_path.exists() else 'none'}"
                )
            loss.backward()
            if cfg.grad_clip_norm is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip_norm)
            optimizer.step()
            losses.append(float(loss.detach()))
        if scheduler is not None:
            scheduler.step()

        recalibrate_bn(model, y_all, cs_all, denoise)
        val_psnr, val_ssim, val_sam = _evaluate(model, val_entries, denoise, device)
        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_psnr_db=val_psnr,
            val_ssim=val_ssim,
            val_sam_rad=val_sam,
            seconds=time.perf_counter() - start,
        )
        history.append(record)
        curve_rows.append(
            [
                f"epoch_{epoch:04d}",
                algorithm,
                bundle.speckle_kind,
                f"{val_psnr:.6f}",
                f"{val_ssim:.6f}",
                f"{val_sam:.6f}",
            ]
        )
        _save_checkpoint(checkpoint_path, model, spec, cfg, bundle.bands, epoch, bundle_meta)
        _write_curve(curve_path, curve_rows)
        if stop_psnr_db is not None and val_psnr >= stop_psnr_db:
            break
    return result
