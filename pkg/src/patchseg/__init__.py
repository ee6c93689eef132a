"""Training-free image segmentation from patch feature grids.

The engine consumes pre-extracted per-patch feature vectors (CLSPF files),
clusters them with adaptive spectral clustering (eigengap elbow plus a
silhouette bandwidth search), and optionally sharpens the upsampled mask
with dense CRF mean-field refinement.
"""

from .cluster import (
    ClusterAssignment,
    ClusterSelection,
    candidate_range,
    cluster_embedding,
    derive_seed,
    select_clusters,
    silhouette,
)
from .crf import CrfConfig, mean_field_refine, mean_field_steps, unary_from_labels, upsample_labels
from .features import (
    ImageGeometry,
    PatchFeatureGrid,
    compute_geometry,
    make_grid,
    read_features,
    write_features,
)
from .metrics import (
    ConfusionTable,
    EvalResult,
    adjusted_rand_index,
    confusion_from_masks,
    evaluate,
    match_labels,
)
from .pipeline import (
    PipelineConfig,
    SegmentationResult,
    read_mask,
    render_mask,
    segment,
)
from .spectral import (
    EigenSystem,
    EigengapAnalysis,
    compute_affinity,
    eigendecompose,
    eigengap_elbow,
)
from .synth import PlantedSpec, block_model_eigenvalues, block_model_matrix, generate

__version__ = "0.1.0"

__all__ = [
    "ClusterAssignment",
    "ClusterSelection",
    "ConfusionTable",
    "CrfConfig",
    "EigenSystem",
    "EigengapAnalysis",
    "EvalResult",
    "ImageGeometry",
    "PatchFeatureGrid",
    "PipelineConfig",
    "PlantedSpec",
    "SegmentationResult",
    "adjusted_rand_index",
    "block_model_eigenvalues",
    "block_model_matrix",
    "candidate_range",
    "cluster_embedding",
    "compute_affinity",
    "compute_geometry",
    "confusion_from_masks",
    "derive_seed",
    "eigendecompose",
    "eigengap_elbow",
    "evaluate",
    "generate",
    "make_grid",
    "match_labels",
    "mean_field_refine",
    "mean_field_steps",
    "read_features",
    "read_mask",
    "render_mask",
    "segment",
    "select_clusters",
    "silhouette",
    "unary_from_labels",
    "upsample_labels",
    "write_features",
]
