"""Color decomposition and graininess attribution for two-ink patch scans."""

from .graininess import (
    BandPassSpec,
    GrainReport,
    bandpass_array,
    bandpass_filter,
    butterworth_gain,
    component_grain_correlations,
    pearson,
)
from .metrics import MetricReport, compare_label_maps, iou, mean_iou, pixel_accuracy
from .raster import (
    RasterImage,
    ReflectanceImage,
    linear_to_srgb,
    lstar_from_reflectance,
    luminance,
    normalize_white,
    reflectance_from_lstar,
    srgb_to_linear,
)
from .reflectance_model import (
    CoverageRatios,
    PatchRecord,
    ReflectanceModel,
    coverage_ratios,
    fit_reflectance_model,
    predict_total_reflectance,
    reconstruct_reflectance,
)
from .segmentation import (
    ALL_LABELS,
    LABEL_NAMES,
    LABEL_O,
    LABEL_PC,
    LABEL_PM,
    LABEL_W,
    SegmentationParams,
    adaptive_threshold,
    enhance_contrast,
    enhance_contrast_joint,
    fuse_channels,
    knn_refine,
    otsu_threshold,
    segment_patch,
)
from .synthesis import (
    DEFAULT_INK_LEVELS,
    SimConfig,
    ground_truth_from_single_color,
    simulate_patch,
    simulate_single_ink_pair,
    synthesize_superimposed,
)

__version__ = "0.1.0"
