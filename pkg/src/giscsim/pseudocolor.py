"""Pseudo-color rendering: fold all bands into one RGB image.

Bands are mapped to RGB through a fixed linear weighting: raised-cosine
response curves centered on the long/middle/short thirds of the band
range (the usual false-color display convention for spectral stacks),
normalized so every channel's weights sum to one.  With cube values in
[0, 1] the RGB output is a convex combination of band images, so it
stays in [0, 1] without clipping; gamma is 1.0.

The weighting rule is versioned; rendered files record the version so
images from different table generations are never compared silently.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import InvalidParameterError
from .hsi import HsiCube

WEIGHT_TABLE_VERSION = "v1"


def band_weights(wavelengths_nm) -> np.ndarray:
    """(3, B) RGB weight matrix for the given band positions.

    Channel centers sit at 5/6 (R), 1/2 (G), and 1/6 (B) of the covered
    range with raised-cosine falloff of half-width range/3; each row is
    normalized to unit sum.  A single-band cube gets equal weights.
    """
    wl = np.asarray(list(wavelengths_nm), dtype=np.float64)
    if wl.size == 0:
        raise InvalidParameterError("need at least one band")
    lo, hi = wl.min(), wl.max()
    if hi == lo:
        return np.full((3, wl.size), 1.0 / wl.size)
    span = hi - lo
    centers = np.array([lo + 5.0 * span / 6.0, lo + span / 2.0, lo + span / 6.0])
    half_width = span / 3.0
    u = (wl[None, :] - centers[:, None]) / half_width
    weights = np.where(np.abs(u) < 1.0, np.cos(0.5 * np.pi * np.clip(u, -1, 1)) ** 2, 0.0)
    sums = weights.sum(axis=1, keepdims=True)
    if np.any(sums == 0):
        # a channel with no band in reach falls back to panchromatic
        weights[sums[:, 0] == 0] = 1.0 / wl.size
        sums = weights.sum(axis=1, keepdims=True)
    return weights / sums


def to_rgb(cube: HsiCube) -> np.ndarray:
    """(H, W, 3) float image in [0, 1]."""
    w = band_weights(cube.wavelengths_nm)
    rgb = np.einsum("hwb,cb->hwc", np.asarray(cube.data, dtype=np.float64), w)
    return np.clip(rgb, 0.0, 1.0)


def render_png(cube: HsiCube, path) -> None:
    """Write the pseudo-color image as an 8-bit PNG."""
    rgb = np.round(to_rgb(cube) * 255.0).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
