"""Experiment configuration: TOML file + command-line overrides.

Every pipeline stage is a pure function of (config, master seed); task
seeds are derived by hashing (master seed, task id), and the config hash
is stamped into every output sidecar so mismatched artifacts fail fast.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .recon import ReconConfig

RAYLEIGH_KIND = "rayleigh"
SUPER_RAYLEIGH_KIND = "super_rayleigh"


@dataclass
class OpticsConfig:
    screen_size: int = 512
    pitch_um: float = 1.0
    corr_len_um: float = 12.0
    distance_um: float = 5000.0
    refractive_delta: float = 0.5
    gamma: float = 2.0  # super-Rayleigh exponent


@dataclass
class SensingConfig:
    n: int = 16
    m: int = 32
    bands: int = 8
    wavelength_lo_nm: float = 560.0
    wavelength_hi_nm: float = 700.0
    magnification: int = 2
    noise_kind: str = "none"
    target_snr_db: float = 30.0
    column_norm: str = "none"
    speckle_kinds: list[str] = field(
        default_factory=lambda: [RAYLEIGH_KIND, SUPER_RAYLEIGH_KIND]
    )

    def wavelengths(self) -> list[float]:
        if self.bands == 1:
            return [self.wavelength_lo_nm]
        step = (self.wavelength_hi_nm - self.wavelength_lo_nm) / (self.bands - 1)
        return [self.wavelength_lo_nm + i * step for i in range(self.bands)]


@dataclass
class DatasetConfig:
    cubes: list[str] = field(default_factory=list)  # HSIB paths or glob patterns
    slice_size: int = 144
    slice_stride: int = 144
    split_fraction: float = 0.9
    band_lo_nm: float | None = None  # optional band selection before slicing
    band_hi_nm: float | None = None


@dataclass
class ExperimentConfig:
    out_dir: str = "runs/out"
    master_seed: int = 0
    workers: int = 1
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    recon: ReconConfig = field(default_factory=ReconConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def out_path(self) -> Path:
        return Path(self.out_dir)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Hash of the experiment identity.

        out_dir and workers are execution details: two runs of one
        experiment into different directories must produce artifacts
        that pair with each other.
        """
        payload = self.to_dict()
        payload.pop("out_dir", None)
        payload.pop("workers", None)
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.blake2b(blob, digest_size=8).hexdigest()

    def data_hash(self) -> str:
        """Hash of the measurement-defining part of the experiment.

        Slices and measurements depend on the seed, the optics, the
        sensing geometry, and the dataset, but not on solver settings:
        one measurement set is legitimately reconstructed under many
        recon configs.
        """
        payload = self.to_dict()
        for key in ("out_dir", "workers", "recon"):
            payload.pop(key, None)
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.blake2b(blob, digest_size=8).hexdigest()


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 64-bit task seed from the master seed and a task id."""
    text = json.dumps([int(master_seed), *[str(p) for p in parts]])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


_SECTION_TYPES = {
    "optics": OpticsConfig,
    "sensing": SensingConfig,
    "recon": ReconConfig,
    "dataset": DatasetConfig,
}


def _build_section(cls, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [{section}] block: {exc}") from exc


def load_config(path=None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Read a TOML config file and apply key=value overrides.

    Override keys are dotted (``optics.corr_len_um=8``); top-level keys
    (``out_dir``, ``master_seed``, ``workers``) take no prefix or the
    ``experiment.`` prefix.  Command-line values win over the file.
    """
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        key, text = item.split("=", 1)
        try:
            value = tomllib.loads(f"v = {text}")["v"]
        except tomllib.TOMLDecodeError:
            value = text  # bare string
        parts = key.strip().split(".")
        if len(parts) == 1 or parts[0] == "experiment":
            raw.setdefault("experiment", {})[parts[-1]] = value
        elif len(parts) == 2 and parts[0] in _SECTION_TYPES:
            raw.setdefault(parts[0], {})[parts[1]] = value
        else:
            raise ConfigError(f"unknown override target {key!r}")

    experiment = dict(raw.get("experiment", {}))
    known = {"out_dir", "master_seed", "workers"}
    unknown = set(experiment) - known
    if unknown:
        raise ConfigError(f"unknown keys in [experiment]: {sorted(unknown)}")
    sections = {
        name: _build_section(cls, dict(raw.get(name, {})), name)
        for name, cls in _SECTION_TYPES.items()
    }
    return ExperimentConfig(
        out_dir=str(experiment.get("out_dir", "runs/out")),
        master_seed=int(experiment.get("master_seed", 0)),
        workers=int(experiment.get("workers", 1)),
        optics=sections["optics"],
        sensing=sections["sensing"],
        recon=sections["recon"],
        dataset=sections["dataset"],
    )
