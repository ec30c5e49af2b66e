"""Config-driven experiment pipeline.

Stages write their outputs under the configured run directory:

    calibration/<kind>/band_NNN.hsib   oversized reference patterns
    slices/<name>.hsib                 ground-truth tiles + manifest.json
    measurements/<kind>/<name>.hsib    detector images + JSON sidecars
    estimates/<kind>/<algo>/<name>.hsib, .trace.csv
    bundle/<kind>/...                  training triples for the network
    eval/per_slice.csv, eval/summary.csv

Every artifact gets a JSON sidecar carrying the config hash, and stages
that join artifacts refuse mismatched hashes.  All writes are atomic
(temp file + rename); a stage rerun with the same config and master
seed reproduces its outputs byte for byte (trace wall-clock columns are
the documented exception).
"""

from __future__ import annotations

import csv
import glob
import io
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import (
    RAYLEIGH_KIND,
    SUPER_RAYLEIGH_KIND,
    ExperimentConfig,
    derive_seed,
)
from .errors import ConfigError, PairingError
from .hsi import (
    DatasetManifest,
    HsiCube,
    ManifestEntry,
    SliceSpec,
    _atomic_write,
    load_hsib,
    select_bands,
    slice_cube,
    split,
    store_hsib,
)
from .metrics import evaluate
from .optics import Geometry, contrast, make_phase_screen
from .pseudocolor import render_png
from .recon import ReconConfig, reconstruct
from .sensing import (
    CalibrationSet,
    Measurement,
    NoiseSpec,
    SensingOperator,
    calibrate,
    forward,
)
from .optics import SpecklePattern

MEASUREMENT_WAVELENGTH = [0.0]  # placeholder band position for panchromatic images


def _screen(cfg: ExperimentConfig):
    o = cfg.optics
    return make_phase_screen(
        seed=derive_seed(cfg.master_seed, "screen"),
        size=o.screen_size,
        pitch=o.pitch_um,
        correlation_length=o.corr_len_um,
        refractive_delta=o.refractive_delta,
    )


def _geometry(cfg: ExperimentConfig) -> Geometry:
    return Geometry(
        distance=cfg.optics.distance_um,
        detector_size=cfg.sensing.m,
        magnification=cfg.sensing.magnification,
    )


def _write_json(path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True).encode("utf-8"))


def _read_json(path) -> dict:
    with open(path, "rb") as fh:
        return json.loads(fh.read().decode("utf-8"))


def _run_tasks(tasks, workers: int):
    """Run thunks, optionally in a thread pool; tasks write their own files."""
    if workers <= 1:
        for task in tasks:
            task()
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for future in [pool.submit(t) for t in tasks]:
            future.result()


def write_resolved_config(cfg: ExperimentConfig) -> None:
    out = cfg.out_path()
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", {"config": cfg.to_dict(), "hash": cfg.config_hash()})


# -- gen-speckles ------------------------------------------------------


def cmd_gen_speckles(cfg: ExperimentConfig) -> list[Path]:
    """Write calibration patterns for every configured speckle kind."""
    write_resolved_config(cfg)
    screen = _screen(cfg)
    geometry = _geometry(cfg)
    wavelengths = cfg.sensing.wavelengths()
    written = []
    for kind in cfg.sensing.speckle_kinds:
        if kind not in (RAYLEIGH_KIND, SUPER_RAYLEIGH_KIND):
            raise ConfigError(f"unknown speckle kind {kind!r}")
        gamma = cfg.optics.gamma if kind == SUPER_RAYLEIGH_KIND else None
        calib = calibrate(screen, geometry, wavelengths, cfg.sensing.n, gamma)
        kind_dir = cfg.out_path() / "calibration" / kind
        kind_dir.mkdir(parents=True, exist_ok=True)
        stats = []
        for i, pattern in enumerate(calib.reference_patterns):
            cube = HsiCube.from_array(
                pattern.intensity[:, :, None], [pattern.wavelength], name=f"band_{i:03d}"
            )
            path = kind_dir / f"band_{i:03d}.hsib"
            store_hsib(cube, path)
            written.append(path)
            st = contrast(pattern)
            stats.append(
                {
                    "wavelength_nm": pattern.wavelength,
                    "contrast": st.contrast,
                    "mean": st.mean,
                    "sample_count": st.sample_count,
                }
            )
        _write_json(
            kind_dir / "calibration.json",
            {
                "kind": kind,
                "gamma": gamma,
                "provenance": calib.provenance,
                "wavelengths_nm": calib.wavelengths,
                "magnification": calib.magnification,
                "n": calib.n,
                "m": calib.m,
                "pattern_size": calib.pattern_size,
                "fingerprint": calib.fingerprint(cfg.sensing.column_norm),
                "band_stats": stats,
                "config_hash": cfg.config_hash(),
            },
        )
    return written


def load_calibration(cfg: ExperimentConfig, kind: str) -> CalibrationSet:
    kind_dir = cfg.out_path() / "calibration" / kind
    meta_path = kind_dir / "calibration.json"
    if not meta_path.exists():
        raise ConfigError(f"no calibration at {kind_dir}; run gen-speckles first")
    meta = _read_json(meta_path)
    patterns = []
    for i, wl in enumerate(meta["wavelengths_nm"]):
        cube = load_hsib(kind_dir / f"band_{i:03d}.hsib")
        intensity = np.asarray(cube.data[:, :, 0], dtype=np.float64) * cube.scale
        tag = SUPER_RAYLEIGH_KIND if meta["gamma"] else RAYLEIGH_KIND
        patterns.append(
            SpecklePattern(
                intensity=intensity,
                wavelength=wl,
                statistics_tag=tag,
                gamma=meta["gamma"],
            )
        )
    return CalibrationSet(
        reference_patterns=patterns,
        wavelengths=[float(w) for w in meta["wavelengths_nm"]],
        magnification=int(meta["magnification"]),
        n=int(meta["n"]),
        m=int(meta["m"]),
        gamma=meta["gamma"],
        provenance=meta["provenance"],
    )


# -- slice -------------------------------------------------------------


def _expand_cubes(patterns: list[str]) -> list[str]:
    paths = []
    for pattern in patterns:
        hits = sorted(glob.glob(pattern))
        if not hits and not any(ch in pattern for ch in "*?["):
            raise ConfigError(f"dataset cube not found: {pattern}")
        paths.extend(hits or [])
    if not paths:
        raise ConfigError("dataset.cubes matched no files")
    return paths


def cmd_slice(cfg: ExperimentConfig) -> DatasetManifest:
    """Cut dataset cubes into tiles and assign train/val roles."""
    write_resolved_config(cfg)
    ds = cfg.dataset
    out = cfg.out_path() / "slices"
    out.mkdir(parents=True, exist_ok=True)
    spec = SliceSpec(size=ds.slice_size, stride=ds.slice_stride)
    entries = []
    for path in _expand_cubes(ds.cubes):
        cube = load_hsib(path)
        cube.name = _safe_name(Path(path).stem)  # filenames key everything downstream
        if ds.band_lo_nm is not None and ds.band_hi_nm is not None:
            cube = select_bands(cube, ds.band_lo_nm, ds.band_hi_nm)
        tiles = slice_cube(cube, spec)
        indices = []
        for idx, tile in enumerate(tiles):
            store_hsib(tile, out / f"{tile.name}.hsib")
            _write_json(out / f"{tile.name}.json", {"data_hash": cfg.data_hash(),
                                                    "source": path, "slice_index": idx})
            indices.append(idx)
        entries.append(ManifestEntry(path=path, role="train", slice_indices=indices))
    manifest = split(
        DatasetManifest(entries=entries),
        fraction=ds.split_fraction,
        seed=derive_seed(cfg.master_seed, "split"),
    )
    manifest.save(out / "manifest.json")
    return manifest


def _safe_name(name: str) -> str:
    return "".join(ch if (ch.isalnum() or ch in "-_.") else "_" for ch in name) or "cube"


def _slice_files(cfg: ExperimentConfig) -> list[Path]:
    out = cfg.out_path() / "slices"
    files = sorted(out.glob("*.hsib"))
    if not files:
        raise ConfigError(f"no slices under {out}; run slice first")
    return files


# -- measure -----------------------------------------------------------


def cmd_measure(cfg: ExperimentConfig) -> list[Path]:
    """One measurement per slice per speckle kind."""
    write_resolved_config(cfg)
    noise = NoiseSpec(cfg.sensing.noise_kind, cfg.sensing.target_snr_db)
    slices = _slice_files(cfg)
    written = []
    for kind in cfg.sensing.speckle_kinds:
        calib = load_calibration(cfg, kind)
        op = SensingOperator(calib, column_norm=cfg.sensing.column_norm)
        kind_dir = cfg.out_path() / "measurements" / kind
        kind_dir.mkdir(parents=True, exist_ok=True)

        def task(slice_path: Path, kind=kind, op=op, kind_dir=kind_dir):
            cube = load_hsib(slice_path)
            seed = derive_seed(cfg.master_seed, "measure", kind, cube.name)
            meas = forward(op, cube, noise, seed)
            ycube = HsiCube.from_array(
                meas.image[:, :, None], MEASUREMENT_WAVELENGTH, name=cube.name
            )
            store_hsib(ycube, kind_dir / f"{cube.name}.hsib")
            _write_json(
                kind_dir / f"{cube.name}.json",
                {
                    "noise_kind": noise.kind,
                    "target_snr_db": noise.target_snr_db,
                    "seed": seed,
                    "operator_fingerprint": meas.fingerprint,
                    "data_hash": cfg.data_hash(),
                    "slice": cube.name,
                },
            )
            written.append(kind_dir / f"{cube.name}.hsib")

        _run_tasks([lambda p=p: task(p) for p in slices], cfg.workers)
    return sorted(written)


def load_measurement(cfg: ExperimentConfig, kind: str, name: str) -> Measurement:
    kind_dir = cfg.out_path() / "measurements" / kind
    sidecar = _read_json(kind_dir / f"{name}.json")
    if sidecar["data_hash"] != cfg.data_hash():
        raise PairingError(
            f"measurement {name} was produced under data config {sidecar['data_hash']}, "
            f"current config implies {cfg.data_hash()}"
        )
    cube = load_hsib(kind_dir / f"{name}.hsib")
    image = np.asarray(cube.data[:, :, 0], dtype=np.float64) * cube.scale
    return Measurement(
        image=image,
        noise=NoiseSpec(sidecar["noise_kind"], sidecar["target_snr_db"]),
        seed=sidecar["seed"],
        fingerprint=sidecar["operator_fingerprint"],
    )


# -- reconstruct -------------------------------------------------------


def cmd_reconstruct(cfg: ExperimentConfig, algorithm: str | None = None) -> list[Path]:
    """Run the configured solver over every measurement."""
    write_resolved_config(cfg)
    recon_cfg = cfg.recon if algorithm is None else _with_algorithm(cfg.recon, algorithm)
    written = []
    for kind in cfg.sensing.speckle_kinds:
        calib = load_calibration(cfg, kind)
        op = SensingOperator(calib, column_norm=cfg.sensing.column_norm)
        meas_dir = cfg.out_path() / "measurements" / kind
        if not meas_dir.exists():
            raise ConfigError(f"no measurements under {meas_dir}; run measure first")
        est_dir = cfg.out_path() / "estimates" / kind / recon_cfg.algorithm
        est_dir.mkdir(parents=True, exist_ok=True)

        def task(name: str, kind=kind, op=op, est_dir=est_dir):
            meas = load_measurement(cfg, kind, name)
            result = reconstruct(meas, op, recon_cfg)
            estimate = HsiCube(
                data=np.clip(result.estimate.data, 0.0, 1.0),  # clamp at export only
                wavelengths_nm=result.estimate.wavelengths_nm,
                name=name,
            )
            store_hsib(estimate, est_dir / f"{name}.hsib")
            _write_json(
                est_dir / f"{name}.json",
                {
                    "algorithm": recon_cfg.algorithm,
                    "speckle_kind": kind,
                    "iterations_used": result.iterations_used,
                    "config_hash": cfg.config_hash(),
                    "operator_fingerprint": op.fingerprint,
                },
            )
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["iter", "objective", "wall_ms"])
            for i, obj in enumerate(result.objective_trace, start=1):
                ms = result.wall_ms_trace[i - 1] if i <= len(result.wall_ms_trace) else 0.0
                writer.writerow([i, f"{obj:.10g}", f"{ms:.3f}"])
            _atomic_write(est_dir / f"{name}.trace.csv", buf.getvalue().encode())
            written.append(est_dir / f"{name}.hsib")

        names = sorted(p.stem for p in meas_dir.glob("*.hsib"))
        _run_tasks([lambda n=n: task(n) for n in names], cfg.workers)
    return sorted(written)


def _with_algorithm(recon_cfg: ReconConfig, algorithm: str) -> ReconConfig:
    import dataclasses

    return dataclasses.replace(recon_cfg, algorithm=algorithm)


# -- export-for-net ----------------------------------------------------


def cmd_export_for_net(cfg: ExperimentConfig) -> list[Path]:
    """Bundle (measurement, CS estimate, ground truth) triples per kind.

    The measurement is kept in its canonical m x m form; the quadrant
    reshape is the network's input convention and is not applied here.
    """
    write_resolved_config(cfg)
    out_root = cfg.out_path()
    manifest = DatasetManifest.load(out_root / "slices" / "manifest.json")
    roles = {}
    for entry in manifest.entries:
        for idx in entry.slice_indices:
            roles[(entry.path, idx)] = entry.role
    written = []
    for kind in cfg.sensing.speckle_kinds:
        bundle_dir = out_root / "bundle" / kind
        bundle_dir.mkdir(parents=True, exist_ok=True)
        cs_dir = out_root / "estimates" / kind / "cs_fista"
        if not cs_dir.exists():
            raise ConfigError(
                f"no cs_fista estimates under {cs_dir}; run reconstruct with cs_fista first"
            )
        entries = []
        for est_path in sorted(cs_dir.glob("*.hsib")):
            name = est_path.stem
            slice_path = out_root / "slices" / f"{name}.hsib"
            meas_path = out_root / "measurements" / kind / f"{name}.hsib"
            slice_meta = _read_json(out_root / "slices" / f"{name}.json")
            role = roles.get((slice_meta["source"], slice_meta["slice_index"]), "train")
            for suffix, src in (("y", meas_path), ("cs", est_path), ("gt", slice_path)):
                cube = load_hsib(src)
                dst = bundle_dir / f"{name}.{suffix}.hsib"
                store_hsib(cube, dst)
                written.append(dst)
            entries.append(
                {
                    "name": name,
                    "role": role,
                    "measurement": f"{name}.y.hsib",
                    "cs_estimate": f"{name}.cs.hsib",
                    "truth": f"{name}.gt.hsib",
                }
            )
        _write_json(
            bundle_dir / "bundle.json",
            {
                "speckle_kind": kind,
                "entries": entries,
                "measurement_shape": [cfg.sensing.m, cfg.sensing.m, 1],
                "cube_shape": [cfg.sensing.n, cfg.sensing.n, cfg.sensing.bands],
                "wavelengths_nm": cfg.sensing.wavelengths(),
                "config_hash": cfg.config_hash(),
            },
        )
    return written


# -- eval --------------------------------------------------------------


def cmd_eval(cfg: ExperimentConfig) -> Path:
    """Score every estimate against its ground-truth slice."""
    out_root = cfg.out_path()
    est_root = out_root / "estimates"
    if not est_root.exists():
        raise ConfigError(f"no estimates under {est_root}; run reconstruct first")
    rows = []
    expected_hash = cfg.config_hash()
    for kind_dir in sorted(est_root.iterdir()):
        if not kind_dir.is_dir():
            continue
        for algo_dir in sorted(kind_dir.iterdir()):
            if not algo_dir.is_dir():
                continue
            for est_path in sorted(algo_dir.glob("*.hsib")):
                sidecar = _read_json(est_path.with_suffix(".json"))
                if sidecar["config_hash"] != expected_hash:
                    raise PairingError(
                        f"{est_path} carries config hash {sidecar['config_hash']}, "
                        f"expected {expected_hash}; refusing to mix runs"
                    )
                truth = load_hsib(out_root / "slices" / est_path.name)
                estimate = load_hsib(est_path)
                report = evaluate(truth, estimate)
                rows.append(
                    {
                        "name": est_path.stem,
                        "algorithm": algo_dir.name,
                        "speckle_kind": kind_dir.name,
                        "psnr_db": report.psnr_db,
                        "ssim": report.ssim,
                        "sam_rad": report.sam_rad,
                    }
                )
    if not rows:
        raise ConfigError("nothing to evaluate")
    eval_dir = out_root / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    header = ["name", "algorithm", "speckle_kind", "psnr_db", "ssim", "sam_rad"]

    def fmt(row):
        return [
            row["name"],
            row["algorithm"],
            row["speckle_kind"],
            f"{row['psnr_db']:.6f}",
            f"{row['ssim']:.6f}",
            f"{row['sam_rad']:.6f}",
        ]

    rows.sort(key=lambda r: (r["speckle_kind"], r["algorithm"], r["name"]))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(fmt(row))
    _atomic_write(eval_dir / "per_slice.csv", buf.getvalue().encode())

    groups: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["speckle_kind"], row["algorithm"]), []).append(row)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for (kind, algo), members in sorted(groups.items()):
        writer.writerow(
            fmt(
                {
                    "name": "MEAN",
                    "algorithm": algo,
                    "speckle_kind": kind,
                    "psnr_db": float(np.mean([r["psnr_db"] for r in members])),
                    "ssim": float(np.mean([r["ssim"] for r in members])),
                    "sam_rad": float(np.mean([r["sam_rad"] for r in members])),
                }
            )
        )
    _atomic_write(eval_dir / "summary.csv", buf.getvalue().encode())
    return eval_dir / "summary.csv"


# -- render ------------------------------------------------------------


def cmd_render(cube_path, out_path) -> Path:
    cube = load_hsib(cube_path)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    render_png(cube, out_path)
    return out_path
