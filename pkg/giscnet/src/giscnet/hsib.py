"""Minimal reader/writer for the HSIB container the simulator exports.

Wire format: magic "HSIB"+0x01, uint32-le header length, UTF-8 JSON
header {height, width, bands, wavelengths_nm, scale, layout, dtype,
name}, then height*width*bands little-endian float32 values, band-major
and row-major within a band.  This module is the network side of that
file contract and deliberately has no other coupling to the simulator.
"""

from __future__ import annotations

import json
import os

import numpy as np

MAGIC = b"HSIB\x01"


class HsibError(ValueError):
    pass


def read_cube(path) -> tuple[np.ndarray, dict]:
    """Returns ((H, W, B) float32 array scaled back to physical units, header)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != MAGIC:
        raise HsibError(f"{path}: bad magic {blob[:5]!r}")
    header_len = int.from_bytes(blob[5:9], "little")
    header = json.loads(blob[9 : 9 + header_len].decode("utf-8"))
    h, w, b = header["height"], header["width"], header["bands"]
    expected = h * w * b * 4
    payload = blob[9 + header_len :]
    if len(payload) != expected:
        raise HsibError(f"{path}: expected {expected} payload bytes, got {len(payload)}")
    flat = np.frombuffer(payload, dtype="<f4")
    data = flat.reshape(b, h, w).transpose(1, 2, 0).copy()
    return data * np.float32(header.get("scale", 1.0)), header


def write_cube(data: np.ndarray, wavelengths_nm, path, name: str = "") -> None:
    """Writes normalized-to-[0,1] payload with the peak recorded as scale."""
    data = np.asarray(data, dtype=np.float32)
    scale = float(data.max()) if data.size and data.max() > 0 else 1.0
    if scale > 1.0:
        data = data / np.float32(scale)
    else:
        scale = 1.0
    header = {
        "height": int(data.shape[0]),
        "width": int(data.shape[1]),
        "bands": int(data.shape[2]),
        "wavelengths_nm": [float(x) for x in wavelengths_nm],
        "scale": scale,
        "layout": "band-major",
        "dtype": "f32le",
        "name": name,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(data.transpose(2, 0, 1)).astype("<f4").tobytes()
    tmp = f"{os.fspath(path)}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + len(header_bytes).to_bytes(4, "little") + header_bytes + payload)
    os.replace(tmp, path)
