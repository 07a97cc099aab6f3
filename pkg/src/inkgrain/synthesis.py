"""Synthetic evaluation data.

Three generators:

* a stochastic ink-drop simulator producing a patch scan together with
  its exact-geometry label map (the ground truth is the disc-membership
  partition, never a re-segmentation),
* transparency fusion of two single-ink images into a superimposed
  composite (no ink-ink interaction by construction),
* global-threshold ground-truth masks extracted from single-ink images.

Drops land on a fine addressability lattice (pitch = a quarter drop
diameter): a seeded random subset of cells fires and each center gets
Gaussian placement jitter. The occupied-cell fraction stays low, so disc
coverage follows the Poisson vacancy law that the drop-count calibration
inverts. Discs wrap toroidally, which removes border bias and keeps the
patch periodic for the frequency-domain analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.spatial import cKDTree

from .raster import RasterImage, linear_to_srgb, srgb_to_linear
from .segmentation import LABEL_O, LABEL_PC, LABEL_PM, LABEL_W, otsu_threshold

# Dataset convention: ink levels in percent.
DEFAULT_INK_LEVELS = (0, 30, 45, 60, 75, 90)

# Linear-light reflectance multipliers (subtractive rendering: overlap
# multiplies both and comes out darker than either ink).
CYAN_MULTIPLIER = np.array([0.20, 0.90, 0.95])
MAGENTA_MULTIPLIER = np.array([0.90, 0.20, 0.60])

# Lattice pitch as a fraction of the mean drop diameter.
_PITCH_FRACTION = 0.25

_CHANNEL_INDEX = {"red": 0, "green": 1}


@dataclass(frozen=True)
class SimConfig:
    """Simulator parameters. Levels are ink fractions in [0, 1)."""

    cyan_level: float = 0.0
    magenta_level: float = 0.0
    dpi: float = 8000.0
    patch_mm: tuple = (3.2, 2.4)
    drop_diameter_um: float = 30.0
    diameter_cv: float = 0.1
    placement_jitter_um: float = 10.0
    avoidance: float = 0.5
    noise_sigma: float = 0.01
    seed: int = 42

    def __post_init__(self):
        for name in ("cyan_level", "magenta_level"):
            level = getattr(self, name)
            if not 0 <= level < 1:
                raise ValueError(
                    f"SimConfig: {name} must lie in [0, 1); a full-coverage level has "
                    f"no finite drop count (got {level})"
                )
        if not self.dpi > 0:
            raise ValueError("SimConfig: dpi must be positive")
        if len(self.patch_mm) != 2 or min(self.patch_mm) <= 0:
            raise ValueError("SimConfig: patch_mm must be two positive extents")
        if not self.drop_diameter_um > 0:
            raise ValueError("SimConfig: drop_diameter_um must be positive")
        if self.diameter_cv < 0 or self.placement_jitter_um < 0 or self.noise_sigma < 0:
            raise ValueError("SimConfig: spreads must be >= 0")
        if not 0 <= self.avoidance <= 1:
            raise ValueError("SimConfig: avoidance must lie in [0, 1]")
        object.__setattr__(self, "patch_mm", tuple(float(v) for v in self.patch_mm))

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"SimConfig: unknown keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "cyan_level": self.cyan_level,
            "magenta_level": self.magenta_level,
            "dpi": self.dpi,
            "patch_mm": list(self.patch_mm),
            "drop_diameter_um": self.drop_diameter_um,
            "diameter_cv": self.diameter_cv,
            "placement_jitter_um": self.placement_jitter_um,
            "avoidance": self.avoidance,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
        }


def _patch_shape(cfg: SimConfig) -> tuple[int, int]:
    px_per_mm = cfg.dpi / 25.4
    return (
        int(round(cfg.patch_mm[1] * px_per_mm)),  # height
        int(round(cfg.patch_mm[0] * px_per_mm)),  # width
    )


def _drop_count(cfg: SimConfig, level: float, shape: tuple[int, int]) -> int:
    # invert coverage = 1 - exp(-n * E[disc area] / patch area)
    px_per_mm = cfg.dpi / 25.4
    d_px = cfg.drop_diameter_um * 1e-3 * px_per_mm
    mean_area = np.pi / 4 * d_px**2 * (1 + cfg.diameter_cv**2)
    return int(round(-np.log1p(-level) * shape[0] * shape[1] / mean_area))


def _lattice(cfg: SimConfig, shape: tuple[int, int]):
    px_per_mm = cfg.dpi / 25.4
    d_px = cfg.drop_diameter_um * 1e-3 * px_per_mm
    pitch = max(d_px * _PITCH_FRACTION, 1e-9)
    gy = max(1, int(round(shape[0] / pitch)))
    gx = max(1, int(round(shape[1] / pitch)))
    return gx, gy


def _cells_to_centers(cells: np.ndarray, gx: int, gy: int, shape: tuple[int, int]) -> np.ndarray:
    x = (cells % gx + 0.5) * (shape[1] / gx)
    y = (cells // gx + 0.5) * (shape[0] / gy)
    return np.stack([x, y], axis=1)


def _place_drops(rng: np.random.Generator, cfg: SimConfig, level: float, shape) -> np.ndarray:
    n = _drop_count(cfg, level, shape)
    if n == 0:
        return np.zeros((0, 2))
    gx, gy = _lattice(cfg, shape)
    if n > gx * gy:
        raise ValueError(
            f"SimConfig: level {level} needs {n} drops but the placement lattice "
            f"has only {gx * gy} cells"
        )
    cells = rng.permutation(gx * gy)[:n]
    jitter_px = cfg.placement_jitter_um * 1e-3 * cfg.dpi / 25.4
    return _cells_to_centers(cells, gx, gy, shape) + rng.normal(0, jitter_px, (n, 2))


def _draw_diameters(rng: np.random.Generator, cfg: SimConfig, n: int) -> np.ndarray:
    px_per_mm = cfg.dpi / 25.4
    d_px = cfg.drop_diameter_um * 1e-3 * px_per_mm
    if cfg.diameter_cv == 0:
        return np.full(n, d_px)
    s2 = np.log(1 + cfg.diameter_cv**2)
    return rng.lognormal(np.log(d_px) - s2 / 2, np.sqrt(s2), n)


def _rasterize_discs(centers: np.ndarray, diameters: np.ndarray, shape) -> np.ndarray:
    """Pixel-center disc membership, wrapping toroidally at the borders."""
    h, w = shape
    mask = np.zeros(shape, dtype=bool)
    for (x, y), d in zip(centers, diameters):
        r = d / 2
        x0, x1 = int(np.floor(x - r)), int(np.ceil(x + r)) + 1
        y0, y1 = int(np.floor(y - r)), int(np.ceil(y + r)) + 1
        ix = np.arange(x0, x1) % w
        iy = np.arange(y0, y1) % h
        disc = (np.arange(y0, y1) - y)[:, None] ** 2 + (np.arange(x0, x1) - x)[None, :] ** 2 <= r * r
        mask[np.ix_(iy, ix)] |= disc
    return mask


def _avoid_cyan(
    rng: np.random.Generator,
    cfg: SimConfig,
    magenta: np.ndarray,
    cyan: np.ndarray,
    shape,
) -> np.ndarray:
    """Re-sample magenta centers that land within one drop radius of a
    cyan center, each with probability `avoidance`, up to 10 attempts."""
    if len(magenta) == 0 or len(cyan) == 0 or cfg.avoidance == 0:
        return magenta
    px_per_mm = cfg.dpi / 25.4
    radius = cfg.drop_diameter_um * 1e-3 * px_per_mm / 2
    jitter_px = cfg.placement_jitter_um * 1e-3 * px_per_mm
    gx, gy = _lattice(cfg, shape)
    tree = cKDTree(cyan)
    magenta = magenta.copy()
    for _ in range(10):
        dist, _ = tree.query(magenta, k=1, workers=1)
        offending = dist < radius
        offending &= rng.random(len(magenta)) < cfg.avoidance
        if not offending.any():
            break
        n_bad = int(offending.sum())
        cells = rng.integers(0, gx * gy, n_bad)
        magenta[offending] = _cells_to_centers(cells, gx, gy, shape) + rng.normal(
            0, jitter_px, (n_bad, 2)
        )
    return magenta


def simulate_patch(cfg: SimConfig) -> tuple[RasterImage, np.ndarray]:
    """Simulate one patch; returns (scan image, truth label map).

    Deterministic for a fixed config. The label map is the exact disc
    partition; the image renders white (1,1,1) multiplied by each
    covering ink's reflectance, plus Gaussian sensor noise, encoded to
    sRGB.
    """
    shape = _patch_shape(cfg)
    rng = np.random.default_rng(cfg.seed)

    cyan_centers = _place_drops(rng, cfg, cfg.cyan_level, shape)
    cyan_diam = _draw_diameters(rng, cfg, len(cyan_centers))
    magenta_centers = _place_drops(rng, cfg, cfg.magenta_level, shape)
    magenta_centers = _avoid_cyan(rng, cfg, magenta_centers, cyan_centers, shape)
    magenta_diam = _draw_diameters(rng, cfg, len(magenta_centers))

    cyan_mask = _rasterize_discs(cyan_centers, cyan_diam, shape)
    magenta_mask = _rasterize_discs(magenta_centers, magenta_diam, shape)

    labels = np.full(shape, LABEL_W, dtype=np.uint8)
    labels[cyan_mask & ~magenta_mask] = LABEL_PC
    labels[magenta_mask & ~cyan_mask] = LABEL_PM
    labels[cyan_mask & magenta_mask] = LABEL_O

    lin = np.ones(shape + (3,))
    lin[cyan_mask] *= CYAN_MULTIPLIER
    lin[magenta_mask] *= MAGENTA_MULTIPLIER
    if cfg.noise_sigma > 0:
        lin += rng.normal(0, cfg.noise_sigma, lin.shape)
    encoded = linear_to_srgb(np.clip(lin, 0.0, 1.0))
    return RasterImage(encoded, cfg.dpi), labels


def simulate_single_ink_pair(cfg: SimConfig) -> tuple:
    """Cyan-only and magenta-only versions of a two-ink config.

    Convenience for the superimposition protocol; seeds are offset so the
    two single-ink patches are independent draws.
    """
    cyan_cfg = replace(cfg, magenta_level=0.0)
    magenta_cfg = replace(cfg, cyan_level=0.0, seed=cfg.seed + 1)
    return simulate_patch(cyan_cfg), simulate_patch(magenta_cfg)


def synthesize_superimposed(cyan_img: RasterImage, magenta_img: RasterImage) -> RasterImage:
    """Fuse two single-ink images with equal transparency.

    The per-pixel average is taken in linear light (physical averaging of
    reflected light is linear) and re-encoded. Commutative in its inputs.
    """
    if cyan_img.samples.shape != magenta_img.samples.shape:
        raise ValueError(
            f"synthesize_superimposed: shapes disagree, "
            f"{cyan_img.samples.shape} vs {magenta_img.samples.shape}"
        )
    if cyan_img.dpi != magenta_img.dpi:
        raise ValueError("synthesize_superimposed: dpi disagrees")
    mixed = 0.5 * (srgb_to_linear(cyan_img.samples) + srgb_to_linear(magenta_img.samples))
    return RasterImage(linear_to_srgb(mixed), cyan_img.dpi)


def ground_truth_from_single_color(
    img: RasterImage, channel: str, threshold: float | None = None
) -> np.ndarray:
    """Ink mask of a single-ink image by global threshold on the
    complementary channel (red for cyan, green for magenta).

    Works in linear light. With threshold=None the threshold comes from
    the channel's own histogram (constant channels raise).
    """
    if channel not in _CHANNEL_INDEX:
        raise ValueError(f"ground_truth_from_single_color: channel must be red or green, got {channel!r}")
    ch = srgb_to_linear(img.samples[:, :, _CHANNEL_INDEX[channel]])
    if threshold is None:
        threshold = otsu_threshold(ch.ravel())
    elif not 0 < threshold < 1:
        raise ValueError(f"ground_truth_from_single_color: threshold must lie in (0, 1), got {threshold}")
    return ch < threshold
