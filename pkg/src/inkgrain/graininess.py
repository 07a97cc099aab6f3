"""Band-pass graininess analysis.

Graininess is the 1-10 cycles/mm band of reflectance variation. A
frequency-domain Butterworth band-pass (low-pass times high-pass
magnitude response, DC gain exactly zero) isolates that band in scanned
patches; Pearson correlation between the band-passed reflectance and
band-passed per-component indicator images then attributes the noise to
individual color components.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .raster import ReflectanceImage
from .reflectance_model import ReflectanceModel, reconstruct_reflectance
from .segmentation import ALL_LABELS, LABEL_NAMES, validate_label_map

MM_PER_INCH = 25.4


@dataclass(frozen=True)
class BandPassSpec:
    """Band edges in cycles/mm and filter order."""

    f_lo: float = 1.0
    f_hi: float = 10.0
    order: int = 2

    def __post_init__(self):
        if not 0 < self.f_lo < self.f_hi:
            raise ValueError(f"BandPassSpec: need 0 < f_lo < f_hi, got {self.f_lo}, {self.f_hi}")
        if self.order < 1:
            raise ValueError(f"BandPassSpec: order must be >= 1, got {self.order}")

    @classmethod
    def from_dict(cls, d: dict) -> "BandPassSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"BandPassSpec: unknown keys {sorted(unknown)}")
        return cls(**d)


def butterworth_gain(f, spec: BandPassSpec = BandPassSpec()):
    """Band-pass magnitude response at frequency f (cycles/mm).

    Product of low-pass and high-pass Butterworth magnitudes:
        G(f) = (1 + (f/f_hi)^(2n))^-1/2 * (1 + (f_lo/f)^(2n))^-1/2
    with G(0) = 0, so the DC term is always rejected.
    """
    arr = np.asarray(f, dtype=np.float64)
    if arr.min() < 0:
        raise ValueError("butterworth_gain: frequency must be >= 0")
    n2 = 2 * spec.order
    safe = np.where(arr > 0, arr, 1.0)
    lp = (1.0 + (safe / spec.f_hi) ** n2) ** -0.5
    hp = (1.0 + (spec.f_lo / safe) ** n2) ** -0.5
    out = np.where(arr > 0, lp * hp, 0.0)
    return float(out) if np.isscalar(f) else out


def bandpass_array(samples: np.ndarray, dpi: float, spec: BandPassSpec = BandPassSpec()) -> np.ndarray:
    """Band-pass a 2-D image given its scan resolution.

    The spectrum bin at integer frequencies (u, v) cycles-per-axis maps to
    sqrt((u/W)^2 + (v/H)^2) * dpi / 25.4 cycles/mm and is scaled by the
    Butterworth gain. Output is signed with (numerically) zero mean.
    Odd-sized axes are mean-padded to even length for the transform and
    cropped back.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("bandpass_array: samples must be 2-D")
    if not dpi > 0:
        raise ValueError(f"bandpass_array: dpi must be positive, got {dpi}")
    if min(arr.shape) < 16:
        raise ValueError(f"bandpass_array: image too small to filter, shape {arr.shape}")
    h, w = arr.shape
    pad_h, pad_w = h % 2, w % 2
    if pad_h or pad_w:
        arr = np.pad(arr, ((0, pad_h), (0, pad_w)), mode="constant", constant_values=arr.mean())
    px_per_mm = dpi / MM_PER_INCH
    fy = np.fft.fftfreq(arr.shape[0]) * px_per_mm
    fx = np.fft.fftfreq(arr.shape[1]) * px_per_mm
    f_mm = np.hypot(fy[:, None], fx[None, :])
    gain = butterworth_gain(f_mm, spec)
    out = np.fft.ifft2(np.fft.fft2(arr) * gain).real
    out = out[:h, :w]
    # cropping the pad rows leaves a residual mean; the output is a
    # zero-mean band signal by contract, so remove it (linear, and a
    # no-op for even sizes)
    return out - out.mean()


def bandpass_filter(img: ReflectanceImage, spec: BandPassSpec = BandPassSpec()) -> np.ndarray:
    """Band-pass a reflectance image; returns a signed sample array."""
    return bandpass_array(img.samples, img.dpi, spec)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson product-moment correlation over all pixels."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"pearson: shapes disagree, {a.shape} vs {b.shape}")
    da = a - a.mean()
    db = b - b.mean()
    var_a = float(da @ da)
    var_b = float(db @ db)
    if var_a == 0 or var_b == 0:
        raise ValueError("pearson: correlation undefined for zero-variance input")
    return float((da @ db) / np.sqrt(var_a) / np.sqrt(var_b))


@dataclass(frozen=True)
class GrainReport:
    """Per-component band-pass correlations for one patch.

    correlations maps component name (pc/pm/o/w) to its coefficient, or
    None when the component's indicator has no variance (absent or
    all-covering). reconstruction_correlation compares the band-passed
    model reconstruction to the band-passed measured reflectance.
    """

    correlations: dict
    reconstruction_correlation: float | None

    def to_dict(self) -> dict:
        return {
            "correlations": dict(self.correlations),
            "reconstruction_correlation": self.reconstruction_correlation,
        }


def component_grain_correlations(
    labels: np.ndarray,
    reflectance: ReflectanceImage,
    model: ReflectanceModel,
    spec: BandPassSpec = BandPassSpec(),
) -> GrainReport:
    """Correlate each component's band-passed indicator with the
    band-passed reflectance image.

    Components with a constant indicator are reported as None rather than
    failing the whole report. Masks and reflectance are filtered with the
    same band.
    """
    labels = validate_label_map(labels)
    if labels.shape != reflectance.samples.shape:
        raise ValueError(
            f"component_grain_correlations: label/reflectance shapes disagree, "
            f"{labels.shape} vs {reflectance.samples.shape}"
        )
    bp_ref = bandpass_filter(reflectance, spec)
    corrs: dict[str, float | None] = {}
    for k in ALL_LABELS:
        indicator = (labels == k).astype(np.float64)
        if indicator.min() == indicator.max():
            corrs[LABEL_NAMES[k]] = None
            continue
        corrs[LABEL_NAMES[k]] = pearson(bandpass_array(indicator, reflectance.dpi, spec), bp_ref)

    recon = reconstruct_reflectance(labels, model, reflectance.dpi)
    if recon.samples.min() == recon.samples.max():
        recon_corr = None
    else:
        recon_corr = pearson(bandpass_filter(recon, spec), bp_ref)
    return GrainReport(correlations=corrs, reconstruction_correlation=recon_corr)
