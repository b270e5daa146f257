"""Evaluation toolkit for cardiac substructure segmentations.

Covers the non-neural parts of a segmentation study: volume preprocessing,
model-agnostic sliding-window inference, geometric metrics (DSC, HD95),
dose metrics (DVH, DMax, DMean, Vx), nonparametric cohort statistics, and
deterministic synthetic phantoms for end-to-end validation.
"""

from .dosimetry import DoseMetrics, DvhCurve, align_dose, dose_metrics, dvh, paired_dose_table
from .geom_metrics import StructureScore, dsc, edt, extract_surface, hd95, score_structures
from .inference import (
    PredictorError,
    ProbabilityMap,
    WindowPlan,
    argmax_labels,
    plan_windows,
    run_sliding_window,
    subprocess_predictor,
)
from .manifest import (
    CaseRecord,
    CohortManifest,
    SplitAssignment,
    kfold,
    load_manifest,
    save_manifest,
    stratified_split,
)
from .phantom import PhantomCase, PhantomSpec, generate_case, generate_cohort
from .stats import (
    CorrelationResult,
    TestResult,
    bonferroni,
    rank_sum_unpaired,
    spearman,
    summarize,
    wilcoxon_signed_rank,
)
from .structures import LABEL_IDS, NUM_CLASSES, SUBSTRUCTURES
from .volume import (
    VoxelGrid,
    canonicalize_orientation,
    load_nifti,
    normalize_hu,
    resample,
    resample_to_geometry,
    save_nifti,
    structure_mask,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
