"""Image containers and colorimetric conversions.

Scanned patches are handled as sRGB-encoded RGB rasters tagged with their
scan resolution. All reflectance math happens in linear light, so the sRGB
transfer is inverted first. Lightness (L*) conversions use the CIE
lightness function with the conventional 903.3 shadow-slope constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Rec. 709 luma weights, applied to linear-light channels.
LUMINANCE_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])

# CIE lightness function constants.
_LAB_EPS = (6.0 / 29.0) ** 3
_LAB_KAPPA = 903.3

# Slack for float round-off when validating [0, 1] sample ranges.
_RANGE_ATOL = 1e-9


def _as_float_array(samples, name: str) -> np.ndarray:
    arr = np.array(samples, dtype=np.float64, copy=True)
    if arr.size == 0:
        raise ValueError(f"{name}: image has no samples")
    return arr


@dataclass(frozen=True)
class RasterImage:
    """dpi-tagged RGB raster with samples normalized to [0, 1].

    Samples are stored sRGB-encoded, shape (height, width, 3), float64.
    The array is copied on construction and frozen, so instances are safe
    to share read-only across parallel workers.
    """

    samples: np.ndarray
    dpi: float

    def __post_init__(self):
        arr = _as_float_array(self.samples, "RasterImage")
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"RasterImage: expected (H, W, 3) samples, got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("RasterImage: width and height must be positive")
        if not self.dpi > 0:
            raise ValueError(f"RasterImage: dpi must be positive, got {self.dpi}")
        if arr.min() < -_RANGE_ATOL or arr.max() > 1 + _RANGE_ATOL:
            raise ValueError("RasterImage: samples must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class ReflectanceImage:
    """Single-channel per-pixel relative reflectance in [0, 1].

    Band-passed derivatives are signed and are handled as plain arrays,
    not as ReflectanceImage instances.
    """

    samples: np.ndarray
    dpi: float

    def __post_init__(self):
        arr = _as_float_array(self.samples, "ReflectanceImage")
        if arr.ndim != 2:
            raise ValueError(f"ReflectanceImage: expected (H, W) samples, got {arr.shape}")
        if not self.dpi > 0:
            raise ValueError(f"ReflectanceImage: dpi must be positive, got {self.dpi}")
        if arr.min() < -_RANGE_ATOL or arr.max() > 1 + _RANGE_ATOL:
            raise ValueError("ReflectanceImage: samples must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


def srgb_to_linear(v):
    """Invert the sRGB transfer: encoded sample in [0, 1] -> linear light.

    Piecewise per IEC 61966-2-1: v / 12.92 below 0.04045, else
    ((v + 0.055) / 1.055) ** 2.4. Accepts scalars or arrays.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.min() < 0 or arr.max() > 1:
        raise ValueError("srgb_to_linear: input must lie in [0, 1]")
    out = np.where(arr <= 0.04045, arr / 12.92, ((arr + 0.055) / 1.055) ** 2.4)
    return float(out) if np.isscalar(v) else out


def linear_to_srgb(v):
    """Forward sRGB transfer: linear light in [0, 1] -> encoded sample."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.min() < 0 or arr.max() > 1:
        raise ValueError("linear_to_srgb: input must lie in [0, 1]")
    out = np.where(arr <= 0.0031308, arr * 12.92, 1.055 * arr ** (1 / 2.4) - 0.055)
    return float(out) if np.isscalar(v) else out


def luminance(img: RasterImage) -> ReflectanceImage:
    """Per-pixel reflectance proxy: Rec. 709 weighting of linearized RGB."""
    lin = srgb_to_linear(img.samples)
    y = lin @ LUMINANCE_WEIGHTS
    return ReflectanceImage(np.clip(y, 0.0, 1.0), img.dpi)


def lstar_from_reflectance(r):
    """Relative reflectance in [0, 1] -> CIE lightness L* in [0, 100].

    L* = 116 * r**(1/3) - 16 above the (6/29)**3 knee, 903.3 * r below.
    """
    arr = np.asarray(r, dtype=np.float64)
    if arr.min() < 0 or arr.max() > 1:
        raise ValueError("lstar_from_reflectance: reflectance must lie in [0, 1]")
    out = np.where(arr > _LAB_EPS, 116.0 * np.cbrt(arr) - 16.0, _LAB_KAPPA * arr)
    return float(out) if np.isscalar(r) else out


def reflectance_from_lstar(l):
    """CIE lightness L* in [0, 100] -> relative reflectance in [0, 1].

    Inverse of lstar_from_reflectance: ((L* + 16) / 116) ** 3 for L* > 8,
    else L* / 903.3.
    """
    arr = np.asarray(l, dtype=np.float64)
    if arr.min() < 0 or arr.max() > 100:
        raise ValueError("reflectance_from_lstar: L* must lie in [0, 100]")
    out = np.where(arr > 8.0, ((arr + 16.0) / 116.0) ** 3, arr / _LAB_KAPPA)
    return float(out) if np.isscalar(l) else out


def normalize_white(img: ReflectanceImage, percentile: float = 0.99) -> ReflectanceImage:
    """Paper-white calibration: scale so the upper percentile maps to 1.

    The percentile (rather than the max) rejects specular and dust
    outliers. Results are clamped to [0, 1].
    """
    if not 0 < percentile < 1:
        raise ValueError(f"normalize_white: percentile must lie in (0, 1), got {percentile}")
    ref = float(np.quantile(img.samples, percentile))
    if ref <= 0:
        raise ValueError("normalize_white: degenerate calibration, white reference is zero")
    return ReflectanceImage(np.clip(img.samples / ref, 0.0, 1.0), img.dpi)
