"""warpkit: time-series classification with warping kernels.

Facial-expression-style multichannel sequences in, class decisions out:
a 3D point distribution model turns landmark sequences into shape-parameter
series, pseudo-DTW / global-alignment kernels compare them, PSD repair makes
the warping kernel usable, and a precomputed-kernel SVM with
leave-one-subject-out evaluation closes the loop.
"""

from .core import (
    LabeledDataset,
    LabeledSeries,
    TimeSeries,
    crop_dataset,
    crop_series,
    load_dataset,
    validate_series,
)
from .evaluate import (
    EvalReport,
    RocCurve,
    auc,
    early_curve,
    grid_search,
    loso_evaluate,
    loso_split,
    nested_grid_evaluate,
    roc_curve,
)
from .kernels import (
    AlignmentPath,
    GlobalAlignmentKernel,
    GramMatrix,
    KernelConfig,
    PseudoDtwKernel,
    count_alignments,
    dtw_distance,
    dtw_path,
    enumerate_alignments,
    ga_kernel,
    gram_matrix,
    kernel_rows,
    phi_sigma,
    sq_euclidean,
)
from .psdrepair import RepairReport, dtw_to_kernel, min_eigenvalue, nearest_correlation
from .shape import (
    PointDistributionModel,
    RigidParams,
    apply_pdm,
    build_pdm,
    procrustes_align,
    project_2d,
    remove_rigid,
    synth_dataset,
)
from .svm import (
    OneVsAllModel,
    OneVsRestPrecomputedSVC,
    PrecomputedKernelSVC,
    SvmModel,
    decision_values,
    kkt_violation,
    train_one_vs_all,
    train_svm,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentPath",
    "EvalReport",
    "GlobalAlignmentKernel",
    "GramMatrix",
    "KernelConfig",
    "LabeledDataset",
    "LabeledSeries",
    "OneVsAllModel",
    "OneVsRestPrecomputedSVC",
    "PointDistributionModel",
    "PrecomputedKernelSVC",
    "PseudoDtwKernel",
    "RepairReport",
    "RigidParams",
    "RocCurve",
    "SvmModel",
    "TimeSeries",
    "apply_pdm",
    "auc",
    "build_pdm",
    "count_alignments",
    "crop_dataset",
    "crop_series",
    "decision_values",
    "dtw_distance",
    "dtw_path",
    "dtw_to_kernel",
    "early_curve",
    "enumerate_alignments",
    "ga_kernel",
    "gram_matrix",
    "grid_search",
    "kernel_rows",
    "kkt_violation",
    "load_dataset",
    "loso_evaluate",
    "loso_split",
    "nested_grid_evaluate",
    "min_eigenvalue",
    "nearest_correlation",
    "phi_sigma",
    "procrustes_align",
    "project_2d",
    "remove_rigid",
    "roc_curve",
    "sq_euclidean",
    "synth_dataset",
    "train_one_vs_all",
    "train_svm",
    "validate_series",
]
