"""Hyperspectral cube container, HSIB file format, slicing, and splits.

HSIB layout (little-endian throughout):

    bytes 0..4   magic "HSIB" + version byte 0x01
    bytes 5..8   uint32 header length L
    bytes 9..9+L UTF-8 JSON header: {height, width, bands,
                 wavelengths_nm, scale, layout, dtype, name}
    remainder    height*width*bands float32 values, band-major,
                 row-major within a band

Loading normalizes the payload to [0, 1] and folds the normalization
factor into the recorded scale, so stored files always carry payloads
within [0, 1] and store(load(path)) reproduces the file bit-exactly.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidParameterError, ShapeError

MAGIC = b"HSIB\x01"

TRAIN, VAL, TEST = "train", "val", "test"


@dataclass
class HsiCube:
    """Height x width x bands volume with wavelength metadata.

    ``scale`` is the physical value a data value of 1.0 corresponds to
    (the maximum recorded when the cube was normalized).
    """

    data: np.ndarray
    wavelengths_nm: list[float]
    name: str = ""
    scale: float = 1.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ShapeError(f"cube data must be 3-D, got shape {self.data.shape}")
        self.wavelengths_nm = [float(w) for w in self.wavelengths_nm]
        if len(self.wavelengths_nm) != self.data.shape[2]:
            raise ShapeError(
                f"{len(self.wavelengths_nm)} wavelengths for {self.data.shape[2]} bands"
            )
        diffs = np.diff(self.wavelengths_nm)
        if len(diffs) and not np.all(diffs > 0):
            raise InvalidParameterError("wavelengths must be strictly ascending")
        if not np.all(np.isfinite(self.data)):
            raise InvalidParameterError(f"cube {self.name!r} contains non-finite values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_array(
        cls, data: np.ndarray, wavelengths_nm, name: str = "", normalize: bool = True
    ) -> "HsiCube":
        """Build a cube, max-normalizing the data to [0, 1] by default."""
        data = np.asarray(data, dtype=np.float32)
        scale = 1.0
        if normalize and data.size:
            peak = float(data.max())
            if peak > 0:
                data = data / np.float32(peak)
                scale = peak
        return cls(data=data, wavelengths_nm=list(wavelengths_nm), name=name, scale=scale)


@dataclass(frozen=True)
class SliceSpec:
    size: int = 144
    stride: int = 144

    def __post_init__(self):
        if self.size < 1 or self.stride < 1:
            raise InvalidParameterError("slice size and stride must be >= 1")


@dataclass
class ManifestEntry:
    path: str
    role: str
    slice_indices: list[int] = field(default_factory=list)


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    seed: int = 0
    split_fraction: float = 0.9

    def to_json(self) -> str:
        return json.dumps(
            {
                "entries": [
                    {"path": e.path, "role": e.role, "slice_indices": e.slice_indices}
                    for e in self.entries
                ],
                "seed": self.seed,
                "split_fraction": self.split_fraction,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        raw = json.loads(text)
        return cls(
            entries=[
                ManifestEntry(e["path"], e["role"], list(e["slice_indices"]))
                for e in raw["entries"]
            ],
            seed=int(raw["seed"]),
            split_fraction=float(raw["split_fraction"]),
        )

    def save(self, path) -> None:
        _atomic_write(path, self.to_json().encode("utf-8"))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path, "rb") as fh:
            return cls.from_json(fh.read().decode("utf-8"))


def _atomic_write(path, payload: bytes) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def store_hsib(cube: HsiCube, path) -> None:
    """Write a cube to an HSIB file (atomically: temp file then rename)."""
    header = {
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "wavelengths_nm": cube.wavelengths_nm,
        "scale": cube.scale,
        "layout": "band-major",
        "dtype": "f32le",
        "name": cube.name,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    # band-major payload: all of band 0 row-major, then band 1, ...
    payload = np.ascontiguousarray(cube.data.transpose(2, 0, 1)).astype("<f4").tobytes()
    blob = MAGIC + len(header_bytes).to_bytes(4, "little") + header_bytes + payload
    _atomic_write(path, blob)


def load_hsib(path) -> HsiCube:
    """Read an HSIB file, normalizing the payload to [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:5]!r}, expected {MAGIC!r}", offset=0)
    if len(blob) < 9:
        raise FormatError(f"{path}: truncated before header length field", offset=5)
    header_len = int.from_bytes(blob[5:9], "little")
    if len(blob) < 9 + header_len:
        raise FormatError(
            f"{path}: header claims {header_len} bytes, file has {len(blob) - 9}", offset=9
        )
    try:
        header = json.loads(blob[9 : 9 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: header is not valid JSON: {exc}", offset=9) from exc
    h, w, b = int(header["height"]), int(header["width"]), int(header["bands"])
    expected = h * w * b * 4
    actual = len(blob) - 9 - header_len
    if actual != expected:
        raise FormatError(
            f"{path}: payload length mismatch, expected {expected} bytes, got {actual}",
            offset=9 + header_len,
        )
    wavelengths = [float(x) for x in header["wavelengths_nm"]]
    if len(wavelengths) != b:
        raise FormatError(f"{path}: {len(wavelengths)} wavelengths for {b} bands", offset=9)
    if len(wavelengths) > 1 and not all(
        a < bnd for a, bnd in zip(wavelengths, wavelengths[1:])
    ):
        raise FormatError(f"{path}: wavelengths not strictly ascending", offset=9)
    flat = np.frombuffer(blob, dtype="<f4", offset=9 + header_len, count=h * w * b)
    data = flat.reshape(b, h, w).transpose(1, 2, 0).copy()
    scale = float(header.get("scale", 1.0))
    if data.size:
        peak = float(data.max())
        if peak > 1.0:
            data = data / np.float32(peak)
            scale *= peak
    return HsiCube(data=data, wavelengths_nm=wavelengths, name=header.get("name", ""), scale=scale)


def select_bands(cube: HsiCube, lo_nm: float, hi_nm: float) -> HsiCube:
    """Keep bands with lo_nm <= wavelength <= hi_nm (inclusive)."""
    keep = [i for i, wl in enumerate(cube.wavelengths_nm) if lo_nm <= wl <= hi_nm]
    if not keep:
        raise InvalidParameterError(
            f"[{lo_nm}, {hi_nm}] nm selects no bands from {cube.wavelengths_nm}"
        )
    return HsiCube(
        data=cube.data[:, :, keep],
        wavelengths_nm=[cube.wavelengths_nm[i] for i in keep],
        name=cube.name,
        scale=cube.scale,
    )


def slice_cube(cube: HsiCube, spec: SliceSpec) -> list[HsiCube]:
    """Cut a cube into a top-left-anchored grid of size x size tiles.

    Tiles are emitted in row-major order; border remainders are dropped.
    A cube smaller than the tile size yields an empty list with a warning.
    """
    if cube.height < spec.size or cube.width < spec.size:
        warnings.warn(
            f"cube {cube.name!r} ({cube.height}x{cube.width}) smaller than "
            f"slice size {spec.size}; no slices produced",
            stacklevel=2,
        )
        return []
    rows = (cube.height - spec.size) // spec.stride + 1
    cols = (cube.width - spec.size) // spec.stride + 1
    out = []
    for i in range(rows):
        for j in range(cols):
            r, c = i * spec.stride, j * spec.stride
            out.append(
                HsiCube(
                    data=cube.data[r : r + spec.size, c : c + spec.size, :].copy(),
                    wavelengths_nm=cube.wavelengths_nm,
                    name=f"{cube.name}_r{i}c{j}",
                    scale=cube.scale,
                )
            )
    return out


def split(manifest: DatasetManifest, fraction: float = 0.9, seed: int = 0) -> DatasetManifest:
    """Assign train/val roles to all non-test slices.

    Slices are shuffled deterministically by ``seed``; ceil(fraction * N)
    go to train and the remainder to val.  Test entries pass through
    untouched.
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidParameterError(f"split fraction must be in (0, 1), got {fraction}")
    test_entries = [e for e in manifest.entries if e.role == TEST]
    units = sorted(
        (e.path, idx) for e in manifest.entries if e.role != TEST for idx in e.slice_indices
    )
    rng = np.random.default_rng(np.uint64(seed))
    order = rng.permutation(len(units))
    n_train = int(np.ceil(fraction * len(units)))
    picked = {tuple(units[k]) for k in order[:n_train]}
    grouped: dict[tuple[str, str], list[int]] = {}
    for path, idx in units:
        role = TRAIN if (path, idx) in picked else VAL
        grouped.setdefault((path, role), []).append(idx)
    entries = [
        ManifestEntry(path=path, role=role, slice_indices=sorted(idxs))
        for (path, role), idxs in sorted(grouped.items())
    ]
    return DatasetManifest(
        entries=entries + test_entries, seed=seed, split_fraction=fraction
    )
