"""Area-coverage reflectance model.

A patch's total reflectance is modeled as the coverage-weighted sum of
four component reflectances (pure cyan, pure magenta, overlap, white):

    R_total = a_pc * R_pc + a_pm * R_pm + a_o * R_o + a_w * R_w

with the coverages summing to 1. Coverages come from segmentation label
maps; the component reflectances are fitted across a patch dataset by
ordinary least squares (no intercept: the sum-to-one constraint absorbs
it, and clamping coefficients would bias the residual diagnostics).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .raster import ReflectanceImage
from .segmentation import ALL_LABELS, LABEL_W, validate_label_map

# Singular-value ratio beyond which the coverage design is treated as
# rank deficient (e.g. datasets with one repeated ink level).
CONDITION_LIMIT = 1e10

_COMPONENT_ORDER = ("a_pc", "a_pm", "a_o", "a_w")


@dataclass(frozen=True)
class CoverageRatios:
    """Area fractions of the four components; they sum to 1."""

    a_pc: float
    a_pm: float
    a_o: float
    a_w: float

    def __post_init__(self):
        vals = self.as_array()
        if vals.min() < 0 or vals.max() > 1:
            raise ValueError(f"CoverageRatios: fractions must lie in [0, 1], got {vals}")
        if abs(vals.sum() - 1.0) > 1e-12:
            raise ValueError(f"CoverageRatios: fractions sum to {vals.sum()!r}, not 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.a_pc, self.a_pm, self.a_o, self.a_w])


@dataclass(frozen=True)
class ReflectanceModel:
    """Fitted component reflectances plus fit diagnostics."""

    r_pc: float
    r_pm: float
    r_o: float
    r_w: float
    residual_rms: float
    n_patches: int

    def __post_init__(self):
        if self.n_patches < 4:
            raise ValueError("ReflectanceModel: needs at least 4 patches")
        if self.residual_rms < 0:
            raise ValueError("ReflectanceModel: residual_rms must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.r_pc, self.r_pm, self.r_o, self.r_w])

    def to_dict(self) -> dict:
        return {
            "r_pc": self.r_pc,
            "r_pm": self.r_pm,
            "r_o": self.r_o,
            "r_w": self.r_w,
            "residual_rms": self.residual_rms,
            "n_patches": self.n_patches,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReflectanceModel":
        return cls(
            r_pc=float(d["r_pc"]),
            r_pm=float(d["r_pm"]),
            r_o=float(d["r_o"]),
            r_w=float(d["r_w"]),
            residual_rms=float(d["residual_rms"]),
            n_patches=int(d["n_patches"]),
        )


@dataclass(frozen=True)
class PatchRecord:
    """One dataset patch: ink levels, measured coverage, total reflectance.

    Levels are percentages (the dataset convention uses 0/30/45/60/75/90).
    total_reflectance is the spatial mean of the patch's calibrated
    reflectance image.
    """

    id: str
    cyan_level: float
    magenta_level: float
    coverage: CoverageRatios
    total_reflectance: float

    def __post_init__(self):
        if not 0 <= self.total_reflectance <= 1:
            raise ValueError(
                f"PatchRecord {self.id}: total_reflectance must lie in [0, 1], "
                f"got {self.total_reflectance}"
            )


def coverage_ratios(labels: np.ndarray) -> CoverageRatios:
    """Per-class area fractions of a label map."""
    labels = validate_label_map(labels)
    counts = np.bincount(labels.ravel(), minlength=len(ALL_LABELS))
    total = labels.size
    return CoverageRatios(*(counts[k] / total for k in ALL_LABELS))


def fit_reflectance_model(records) -> ReflectanceModel:
    """Least-squares fit of component reflectances over a patch dataset.

    Requires at least 4 records and a numerically rank-4 coverage design;
    otherwise the fit is ambiguous and a ValueError names the deficient
    coverage direction. Coefficients are reported unclamped, with a
    warning when one strays outside [0, 1].
    """
    records = list(records)
    if len(records) < 4:
        raise ValueError(f"fit_reflectance_model: need >= 4 records, got {len(records)}")
    design = np.stack([r.coverage.as_array() for r in records])
    y = np.array([r.total_reflectance for r in records])

    _, sv, vt = np.linalg.svd(design, full_matrices=False)
    if sv[-1] == 0 or sv[0] / sv[-1] > CONDITION_LIMIT:
        direction = ", ".join(
            f"{c:+.3f}*{n}" for c, n in zip(vt[-1], _COMPONENT_ORDER)
        )
        raise ValueError(
            "fit_reflectance_model: coverage design is rank deficient; "
            f"unconstrained direction {direction}"
        )
    coeffs, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    residual_rms = float(np.sqrt(np.mean((y - design @ coeffs) ** 2)))
    if coeffs.min() < 0 or coeffs.max() > 1:
        warnings.warn(
            f"fit_reflectance_model: coefficients outside [0, 1]: {coeffs}",
            stacklevel=2,
        )
    return ReflectanceModel(
        r_pc=float(coeffs[0]),
        r_pm=float(coeffs[1]),
        r_o=float(coeffs[2]),
        r_w=float(coeffs[3]),
        residual_rms=residual_rms,
        n_patches=len(records),
    )


def predict_total_reflectance(coverage: CoverageRatios, model: ReflectanceModel) -> float:
    """Coverage-weighted sum of the component reflectances."""
    return float(coverage.as_array() @ model.as_array())


def reconstruct_reflectance(
    labels: np.ndarray, model: ReflectanceModel, dpi: float
) -> ReflectanceImage:
    """Piecewise-constant reflectance image from labels and a model.

    Each pixel takes its component's fitted reflectance, so the spatial
    mean equals the predicted total reflectance of the label map's
    coverage.
    """
    labels = validate_label_map(labels)
    lut = np.empty(LABEL_W + 1)
    lut[list(ALL_LABELS)] = model.as_array()
    return ReflectanceImage(lut[labels], dpi)
