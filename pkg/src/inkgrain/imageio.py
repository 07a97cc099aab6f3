"""File formats: PNG rasters with dpi metadata, label-map PNGs, and
lossless float raster dumps.

PNG pixel data goes through OpenCV (which handles 8- and 16-bit depths
uniformly); the pHYs resolution chunk is read and written directly so
integer dpi round-trips exactly. All writes are atomic (temp file +
rename), so parallel runs never leave partial outputs behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path

import cv2
import numpy as np

from .raster import RasterImage, ReflectanceImage
from .segmentation import LABEL_PNG_CODES, LABEL_W, validate_label_map

# Float raster dump: magic + u32 width/height/dpi (little-endian), then
# row-major float64 little-endian samples. Holds signed (band-passed)
# data losslessly, unlike the PNG exports.
FLOAT_RASTER_MAGIC = b"IGR1"
_HEADER = struct.Struct("<4sIII")

_METERS_PER_INCH = 0.0254
_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

_CODE_TO_LABEL = np.full(256, 255, dtype=np.uint8)
for _label, _code in LABEL_PNG_CODES.items():
    _CODE_TO_LABEL[_code] = _label
_LABEL_TO_CODE = np.zeros(LABEL_W + 1, dtype=np.uint8)
for _label, _code in LABEL_PNG_CODES.items():
    _LABEL_TO_CODE[_label] = _code


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: str | Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _phys_chunk(dpi: float) -> bytes:
    ppm = int(round(dpi / _METERS_PER_INCH))
    data = struct.pack(">IIB", ppm, ppm, 1)
    return (
        struct.pack(">I", len(data))
        + b"pHYs"
        + data
        + struct.pack(">I", zlib.crc32(b"pHYs" + data) & 0xFFFFFFFF)
    )


def _insert_phys(png: bytes, dpi: float) -> bytes:
    # IHDR is always first: signature + length + type + 13 data + crc
    ihdr_end = len(_PNG_SIGNATURE) + 4 + 4 + 13 + 4
    return png[:ihdr_end] + _phys_chunk(dpi) + png[ihdr_end:]


def read_png_dpi(path: str | Path) -> float | None:
    """dpi from the pHYs chunk, or None when absent or not in meters.

    The chunk stores dots per meter; converting back is rounded to the
    nearest integer dpi (scan resolutions are integral, and the meter
    quantization is far below 1 dpi).
    """
    blob = Path(path).read_bytes()
    if not blob.startswith(_PNG_SIGNATURE):
        raise ValueError(f"{path}: not a PNG file")
    pos = len(_PNG_SIGNATURE)
    while pos + 8 <= len(blob):
        (length,) = struct.unpack(">I", blob[pos : pos + 4])
        ctype = blob[pos + 4 : pos + 8]
        if ctype == b"pHYs" and length == 9:
            x, _y, unit = struct.unpack(">IIB", blob[pos + 8 : pos + 17])
            if unit == 1 and x > 0:
                return float(round(x * _METERS_PER_INCH))
            return None
        if ctype == b"IDAT" or ctype == b"IEND":
            return None
        pos += 12 + length
    return None


def _encode_png(array: np.ndarray) -> bytes:
    ok, buf = cv2.imencode(".png", array)
    if not ok:
        raise ValueError("PNG encoding failed")
    return buf.tobytes()


def _decode_png(path: str | Path) -> np.ndarray:
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise ValueError(f"{path}: cannot decode PNG")
    return arr


def load_image_png(path: str | Path, dpi: float | None = None) -> RasterImage:
    """Load an 8- or 16-bit RGB PNG as a RasterImage.

    Samples are promoted to float64 in [0, 1]. dpi is taken from the pHYs
    chunk when present; the argument is a fallback and a pHYs value wins.
    """
    arr = _decode_png(path)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ValueError(f"{path}: expected an RGB image, got shape {arr.shape}")
    arr = arr[:, :, :3][:, :, ::-1]  # BGR -> RGB
    if arr.dtype == np.uint8:
        samples = arr.astype(np.float64) / 255.0
    elif arr.dtype == np.uint16:
        samples = arr.astype(np.float64) / 65535.0
    else:
        raise ValueError(f"{path}: unsupported sample type {arr.dtype}")
    file_dpi = read_png_dpi(path)
    dpi = file_dpi if file_dpi is not None else dpi
    if dpi is None:
        raise ValueError(f"{path}: no pHYs chunk and no dpi given")
    return RasterImage(samples, dpi)


def save_image_png(path: str | Path, img: RasterImage) -> None:
    """Write a RasterImage as 8-bit RGB PNG with a pHYs dpi chunk."""
    arr = np.round(img.samples * 255.0).astype(np.uint8)
    atomic_write_bytes(path, _insert_phys(_encode_png(arr[:, :, ::-1]), img.dpi))


def save_reflectance_png(path: str | Path, img: ReflectanceImage) -> None:
    """Write a ReflectanceImage as 16-bit grayscale PNG with dpi chunk."""
    arr = np.round(np.clip(img.samples, 0.0, 1.0) * 65535.0).astype(np.uint16)
    atomic_write_bytes(path, _insert_phys(_encode_png(arr), img.dpi))


def load_reflectance_png(path: str | Path, dpi: float | None = None) -> ReflectanceImage:
    arr = _decode_png(path)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a grayscale image, got shape {arr.shape}")
    scale = 255.0 if arr.dtype == np.uint8 else 65535.0
    file_dpi = read_png_dpi(path)
    dpi = file_dpi if file_dpi is not None else dpi
    if dpi is None:
        raise ValueError(f"{path}: no pHYs chunk and no dpi given")
    return ReflectanceImage(arr.astype(np.float64) / scale, dpi)


def save_label_png(path: str | Path, labels: np.ndarray, dpi: float | None = None) -> None:
    """Write a label map as 8-bit grayscale PNG.

    Codes: white 255, pure cyan 85, pure magenta 170, overlap 0, so ink
    renders dark and overlap black.
    """
    arr = _LABEL_TO_CODE[validate_label_map(labels)]
    blob = _encode_png(arr)
    if dpi is not None:
        blob = _insert_phys(blob, dpi)
    atomic_write_bytes(path, blob)


def save_mask_png(path: str | Path, mask: np.ndarray, dpi: float | None = None) -> None:
    """Write a binary ink mask as 8-bit grayscale PNG, black = ink."""
    arr = np.where(np.asarray(mask, dtype=bool), 0, 255).astype(np.uint8)
    blob = _encode_png(arr)
    if dpi is not None:
        blob = _insert_phys(blob, dpi)
    atomic_write_bytes(path, blob)


def load_mask_png(path: str | Path) -> np.ndarray:
    """Read a binary ink mask written by save_mask_png (black = ink)."""
    arr = _decode_png(path)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    return arr < 128


def load_label_png(path: str | Path) -> np.ndarray:
    arr = _decode_png(path)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    if arr.dtype != np.uint8:
        raise ValueError(f"{path}: label maps must be 8-bit grayscale")
    labels = _CODE_TO_LABEL[arr]
    if labels.max() > LABEL_W:
        bad = sorted(int(v) for v in np.unique(arr) if _CODE_TO_LABEL[v] > LABEL_W)
        raise ValueError(f"{path}: unknown label codes {bad}")
    return labels


def save_float_raster(path: str | Path, samples: np.ndarray, dpi: float) -> None:
    """Lossless dump of a (possibly signed) 2-D float image."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("save_float_raster: samples must be 2-D")
    header = _HEADER.pack(FLOAT_RASTER_MAGIC, arr.shape[1], arr.shape[0], int(round(dpi)))
    atomic_write_bytes(path, header + arr.astype("<f8").tobytes())


def load_float_raster(path: str | Path) -> tuple[np.ndarray, float]:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated float raster")
    magic, width, height, dpi = _HEADER.unpack_from(blob)
    if magic != FLOAT_RASTER_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + width * height * 8
    if len(blob) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(blob)}")
    samples = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(height, width)
    return samples.copy(), float(dpi)
