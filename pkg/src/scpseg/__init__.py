"""Constrained image segmentation with selective constraint propagation.

Library layout mirrors the processing stages: `features` (pixel feature
extraction), `graph` (sparse k-NN affinities), `constraints` (must/cannot
links and the selected subset), `scp` (the propagation solver), `fusion`
(L1 weight adjustment), `ncut` (spectral cuts), `evaluation` (metrics),
`pipeline` (orchestration, benchmarks) and `service` (interactive HTTP
API). The `scpseg` CLI fronts the pipeline.
"""

from .constraints import (
    ConstraintMatrix,
    ConstraintSet,
    LabeledPixels,
    SelectionIndex,
    build_z,
    derive_constraints,
    select_pixels,
)
from .evaluation import GroundTruth, MetricReport, adjusted_rand, infer_selected_labels
from .features import FeatureConfig, FeatureMap, RasterImage, extract_features, load_image
from .fusion import FusionParams, adjust_weights, patch_weights, soft_thr
from .graph import (
    GraphConfig,
    NormalizedOperators,
    SparseWeightMatrix,
    build_knn_graph,
    normalize,
    restrict,
    spmm_dense,
    spmv,
)
from .ncut import (
    Segmentation,
    SpectralConfig,
    k_way_cut,
    spectral_learning_edit,
    top_eigenvectors,
    two_way_cut,
)
from .pipeline import RunConfig, run_benchmark, run_scp_segmentation, segment_arrays
from .scp import (
    PropagationResult,
    PropagationState,
    ScpParams,
    closed_form_horizontal,
    closed_form_vertical,
    objective,
    propagate,
)

__version__ = "0.1.0"

__all__ = [
    "ConstraintMatrix",
    "ConstraintSet",
    "FeatureConfig",
    "FeatureMap",
    "FusionParams",
    "GraphConfig",
    "GroundTruth",
    "LabeledPixels",
    "MetricReport",
    "NormalizedOperators",
    "PropagationResult",
    "PropagationState",
    "RasterImage",
    "RunConfig",
    "ScpParams",
    "Segmentation",
    "SelectionIndex",
    "SparseWeightMatrix",
    "SpectralConfig",
    "adjust_weights",
    "adjusted_rand",
    "build_knn_graph",
    "build_z",
    "closed_form_horizontal",
    "closed_form_vertical",
    "derive_constraints",
    "extract_features",
    "infer_selected_labels",
    "k_way_cut",
    "load_image",
    "normalize",
    "objective",
    "patch_weights",
    "propagate",
    "restrict",
    "run_benchmark",
    "run_scp_segmentation",
    "segment_arrays",
    "select_pixels",
    "soft_thr",
    "spectral_learning_edit",
    "spmm_dense",
    "spmv",
    "top_eigenvectors",
    "two_way_cut",
]
