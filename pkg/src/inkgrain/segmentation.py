"""Four-way color segmentation of two-ink patch scans.

The pipeline turns an RGB scan into a per-pixel partition over
{pure cyan, pure magenta, overlap, white}:

1. contrast stretch (pooled percentiles, so channel relationships survive),
2. linearize to light-linear RGB,
3. per channel: decide whether the channel carries ink at all, then split
   pixels into confident/ambiguous around an Otsu threshold,
4. assign ambiguous pixels by k-nearest-neighbor vote in RGB space using
   the confident pixels as exemplars,
5. fuse the per-ink masks into the four-way label map.

Cyan ink is detected in the red channel and magenta ink in the green
channel (each ink absorbs its complementary band). Everything is
deterministic for fixed inputs and parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from .raster import RasterImage, srgb_to_linear

# Label codes. PC/PM/O order matches the coverage-vector convention used
# by the reflectance model.
LABEL_PC = 0
LABEL_PM = 1
LABEL_O = 2
LABEL_W = 3
LABEL_NAMES = {LABEL_PC: "pc", LABEL_PM: "pm", LABEL_O: "o", LABEL_W: "w"}
ALL_LABELS = (LABEL_PC, LABEL_PM, LABEL_O, LABEL_W)

# Grayscale codes used in label-map PNG files. Overlap renders black so
# that "dark = ink" holds visually.
LABEL_PNG_CODES = {LABEL_PC: 85, LABEL_PM: 170, LABEL_O: 0, LABEL_W: 255}


@dataclass(frozen=True)
class SegmentationParams:
    """Tunables for segment_patch.

    window defaults to two drop diameters at 8000 dpi (30 um drops ->
    19 px, odd). ink_ratio_max is the dark/light mean-reflectance ratio
    (pre-stretch, linear light) above which a channel is treated as
    ink-free; it separates genuine ink absorption from the mild
    cross-channel absorption of the other ink.
    """

    contrast_lo: float = 0.01
    contrast_hi: float = 0.99
    window: int = 19
    offset: float = 0.04
    k: int = 5
    confidence_margin: float = 0.05
    ink_ratio_max: float = 0.75
    max_exemplars: int = 50_000
    seed: int = 42

    def __post_init__(self):
        if not 0 <= self.contrast_lo < self.contrast_hi <= 1:
            raise ValueError("SegmentationParams: need 0 <= contrast_lo < contrast_hi <= 1")
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("SegmentationParams: window must be odd and >= 3")
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError("SegmentationParams: k must be odd and >= 1")
        if self.confidence_margin < 0:
            raise ValueError("SegmentationParams: confidence_margin must be >= 0")
        if not 0 < self.ink_ratio_max < 1:
            raise ValueError("SegmentationParams: ink_ratio_max must lie in (0, 1)")
        if self.max_exemplars < 1:
            raise ValueError("SegmentationParams: max_exemplars must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentationParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"SegmentationParams: unknown keys {sorted(unknown)}")
        return cls(**d)


def enhance_contrast(img: RasterImage, lo: float = 0.01, hi: float = 0.99) -> RasterImage:
    """Stretch each channel so its lo/hi percentiles map to 0/1, clamped.

    Constant channels pass through unchanged.
    """
    if not lo < hi:
        raise ValueError(f"enhance_contrast: need lo < hi, got {lo} >= {hi}")
    out = np.empty_like(img.samples)
    for c in range(3):
        ch = img.samples[:, :, c]
        q_lo, q_hi = np.quantile(ch, [lo, hi])
        if q_hi <= q_lo:
            out[:, :, c] = ch
        else:
            out[:, :, c] = np.clip((ch - q_lo) / (q_hi - q_lo), 0.0, 1.0)
    return RasterImage(out, img.dpi)


def enhance_contrast_joint(img: RasterImage, lo: float = 0.01, hi: float = 0.99) -> RasterImage:
    """Stretch all channels by one affine map from pooled percentiles.

    Unlike the per-channel stretch this preserves between-channel ratios,
    which the ink-presence test in segment_patch relies on.
    """
    if not lo < hi:
        raise ValueError(f"enhance_contrast_joint: need lo < hi, got {lo} >= {hi}")
    q_lo, q_hi = np.quantile(img.samples, [lo, hi])
    if q_hi <= q_lo:
        return img
    return RasterImage(np.clip((img.samples - q_lo) / (q_hi - q_lo), 0.0, 1.0), img.dpi)


def adaptive_threshold(channel: np.ndarray, window: int, offset: float) -> np.ndarray:
    """Local-mean threshold: mark pixels darker than their surroundings.

    A pixel is set iff its value < (mean over the window x window
    neighborhood) - offset. Borders are handled by edge replication; the
    windowed means come from an integral image, so cost is independent of
    window size.
    """
    ch = np.asarray(channel, dtype=np.float64)
    if ch.ndim != 2:
        raise ValueError("adaptive_threshold: channel must be 2-D")
    if window % 2 == 0 or window < 3:
        raise ValueError(f"adaptive_threshold: window must be odd and >= 3, got {window}")
    if window > min(ch.shape):
        raise ValueError(f"adaptive_threshold: window {window} exceeds image extent {ch.shape}")
    pad = window // 2
    padded = np.pad(ch, pad, mode="edge")
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1))
    np.cumsum(padded, axis=0, out=integral[1:, 1:])
    np.cumsum(integral[1:, 1:], axis=1, out=integral[1:, 1:])
    h, w = ch.shape
    box = (
        integral[window:, window:]
        - integral[:h, window:]
        - integral[window:, :w]
        + integral[:h, :w]
    )
    local_mean = box / (window * window)
    return ch < local_mean - offset


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Histogram threshold maximizing between-class variance.

    Returns the midpoint of the chosen bin. The split ranking runs in
    exact integer arithmetic (counts and bin-index moments), so splits
    that are mathematically tied - e.g. anywhere across an empty gap
    between two modes - compare exactly equal; the middle of such a
    plateau is returned, landing the threshold midway between the modes.
    """
    vals = np.asarray(values, dtype=np.float64).ravel()
    if bins < 2:
        raise ValueError(f"otsu_threshold: bins must be >= 2, got {bins}")
    if vals.size == 0:
        raise ValueError("otsu_threshold: no samples")
    vmin, vmax = vals.min(), vals.max()
    if vmin == vmax:
        raise ValueError("otsu_threshold: degenerate histogram (constant input)")
    hist, edges = np.histogram(vals, bins=bins, range=(vmin, vmax))
    counts = hist.tolist()
    n_total = sum(counts)
    s_total = sum(c * i for i, c in enumerate(counts))
    # between-class variance in bin-index units is
    # (s0*n1 - s1*n0)^2 / (n0*n1) up to a constant factor; rank the
    # splits by that rational exactly via cross-multiplication
    best_num = best_den = 0
    ties: list[int] = []
    n0 = s0 = 0
    for i in range(bins - 1):
        n0 += counts[i]
        s0 += counts[i] * i
        n1 = n_total - n0
        if n0 == 0 or n1 == 0:
            num, den = 0, 1
        else:
            num = (s0 * n1 - (s_total - s0) * n0) ** 2
            den = n0 * n1
        if not ties or num * best_den > best_num * den:
            best_num, best_den = num, den
            ties = [i]
        elif num * best_den == best_num * den:
            ties.append(i)
    mids = (edges[:-1] + edges[1:]) / 2
    return float(mids[ties[len(ties) // 2]])


def _majority_vote(ranked_classes: np.ndarray) -> int:
    """Majority class of neighbors given in nearest-first order.

    Vote ties go to the class of the nearest neighbor belonging to any
    tied class.
    """
    counts = np.bincount(ranked_classes)
    best = counts.max()
    tied = np.flatnonzero(counts == best)
    if len(tied) == 1:
        return int(tied[0])
    tied_set = set(tied.tolist())
    for c in ranked_classes:
        if int(c) in tied_set:
            return int(c)
    raise AssertionError("unreachable: some neighbor must carry a tied class")


def knn_refine(
    ambiguous: np.ndarray,
    exemplar_features: np.ndarray,
    exemplar_classes: np.ndarray,
    k: int,
) -> np.ndarray:
    """Classify feature vectors by exact brute-force k-nearest neighbors.

    Neighbors are ordered by (Euclidean distance, exemplar input index),
    so distance ties resolve to the earlier exemplar. Vote ties go to the
    nearest neighbor carrying a tied class. Deterministic given input
    order.
    """
    amb = np.atleast_2d(np.asarray(ambiguous, dtype=np.float64))
    ex = np.atleast_2d(np.asarray(exemplar_features, dtype=np.float64))
    classes = np.asarray(exemplar_classes)
    if ex.shape[0] == 0:
        raise ValueError("knn_refine: cannot refine with an empty confident set")
    if ex.shape[0] != classes.shape[0]:
        raise ValueError("knn_refine: exemplar features and classes disagree in length")
    if amb.shape[1] != ex.shape[1]:
        raise ValueError("knn_refine: feature dimensions disagree")
    if not 1 <= k <= ex.shape[0]:
        raise ValueError(f"knn_refine: need 1 <= k <= {ex.shape[0]}, got {k}")
    out = np.empty(amb.shape[0], dtype=classes.dtype)
    chunk = max(1, int(4e6 / max(ex.shape[0], 1)))
    for start in range(0, amb.shape[0], chunk):
        block = amb[start : start + chunk]
        diff = block[:, None, :] - ex[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        # stable sort keeps input order among exact distance ties
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        for row, neigh in enumerate(order):
            out[start + row] = _majority_vote(classes[neigh])
    return out


def fuse_channels(cyan: np.ndarray, magenta: np.ndarray) -> np.ndarray:
    """Combine per-ink masks into the four-way label map.

    Per pixel: overlap iff both inks, pure cyan/magenta iff exactly one,
    white iff neither. The four classes partition the image by
    construction.
    """
    c = np.asarray(cyan, dtype=bool)
    m = np.asarray(magenta, dtype=bool)
    if c.shape != m.shape:
        raise ValueError(f"fuse_channels: mask shapes disagree, {c.shape} vs {m.shape}")
    labels = np.full(c.shape, LABEL_W, dtype=np.uint8)
    labels[c & ~m] = LABEL_PC
    labels[m & ~c] = LABEL_PM
    labels[c & m] = LABEL_O
    return labels


def _knn_assign_tree(
    ambiguous: np.ndarray,
    exemplar_features: np.ndarray,
    exemplar_classes: np.ndarray,
    k: int,
) -> np.ndarray:
    """KD-tree variant of the ambiguous-pixel vote for large inputs.

    Exact Euclidean k-nearest neighbors; only pixels at identical
    distances can rank differently than knn_refine. Classes here are
    binary and k is odd, so the majority is never tied.
    """
    tree = cKDTree(exemplar_features)
    _, idx = tree.query(ambiguous, k=k, workers=1)
    if idx.ndim == 1:  # k == 1
        idx = idx[:, None]
    votes = exemplar_classes[idx]
    return votes.sum(axis=1) * 2 > k


def _channel_ink_mask(
    lin_orig: np.ndarray,
    lin_stretched: np.ndarray,
    features: np.ndarray,
    params: SegmentationParams,
    details: dict | None,
    name: str,
) -> np.ndarray:
    """Binary ink mask for one channel (True = ink present)."""
    shape = lin_orig.shape
    if lin_orig.max() == lin_orig.min():
        return np.zeros(shape, dtype=bool)

    # Ink-presence test on the unstretched channel: genuine ink absorbs
    # its complementary band hard, the other ink only mildly.
    t0 = otsu_threshold(lin_orig.ravel())
    dark = lin_orig < t0
    ratio = float(lin_orig[dark].mean() / lin_orig[~dark].mean())
    if details is not None:
        details[f"{name}_ink_ratio"] = ratio
    if ratio > params.ink_ratio_max:
        return np.zeros(shape, dtype=bool)

    t = otsu_threshold(lin_stretched.ravel())
    base = lin_stretched < t
    confident = np.abs(lin_stretched - t) >= params.confidence_margin
    if details is not None:
        details[f"{name}_threshold"] = t
    mask = base.copy()
    ambiguous = ~confident
    if not ambiguous.any() or not confident.any():
        # nothing to refine, or no exemplars: keep the threshold labels
        return mask

    ex_idx = np.flatnonzero(confident.ravel())
    if len(ex_idx) > params.max_exemplars:
        rng = np.random.default_rng(params.seed)
        ex_idx = np.sort(rng.choice(ex_idx, params.max_exemplars, replace=False))
    ex_feats = features[ex_idx]
    ex_classes = base.ravel()[ex_idx].astype(np.uint8)
    k = min(params.k, len(ex_idx))
    assigned = _knn_assign_tree(features[ambiguous.ravel()], ex_feats, ex_classes, k)
    flat = mask.ravel()
    flat[ambiguous.ravel()] = assigned
    return flat.reshape(shape)


def segment_patch(
    img: RasterImage,
    params: SegmentationParams | None = None,
    return_details: bool = False,
):
    """Segment a patch scan into the four-way label map.

    Returns the uint8 label map, or (label map, details) when
    return_details is set. The details dict carries the per-channel
    thresholds, ink ratios, refined masks and the raw local-threshold
    masks (the intermediate per-channel segmentation before refinement).
    """
    if params is None:
        params = SegmentationParams()
    details: dict | None = {} if return_details else None

    stretched = enhance_contrast_joint(img, params.contrast_lo, params.contrast_hi)
    lin = srgb_to_linear(stretched.samples)
    lin_orig = srgb_to_linear(img.samples)
    features = lin.reshape(-1, 3)

    masks = {}
    for name, ch_index in (("cyan", 0), ("magenta", 1)):
        mask = _channel_ink_mask(
            lin_orig[:, :, ch_index], lin[:, :, ch_index], features, params, details, name
        )
        masks[name] = mask
        if details is not None:
            details[f"{name}_mask"] = mask
            if params.window <= min(img.height, img.width):
                details[f"{name}_raw_mask"] = adaptive_threshold(
                    lin[:, :, ch_index], params.window, params.offset
                )
    labels = fuse_channels(masks["cyan"], masks["magenta"])
    if details is not None:
        return labels, details
    return labels


def validate_label_map(labels: np.ndarray) -> np.ndarray:
    """Check dtype/shape/codes of a label map and return it as uint8."""
    arr = np.asarray(labels)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("label map must be a non-empty 2-D array")
    if arr.min() < 0 or arr.max() > LABEL_W:
        raise ValueError("label map contains codes outside {PC, PM, O, W}")
    return arr.astype(np.uint8, copy=False)
