"""Population-level cognitive impairment pattern discovery.

Pipeline: ensemble wrapper feature selection (seven classifiers, stratified
k-fold CV, consensus union), t-SNE projection to 2-D, raster segmentation by
morphological reconstruction, and per-cluster Mann-Whitney / Cohen's d
profiling that labels each cluster with an impairment subtype.
"""

__version__ = "0.1.0"

from .cohort import (
    CohortDataset,
    FeatureDescriptor,
    SyntheticGroundTruth,
    SyntheticSpec,
    default_descriptors,
    generate_synthetic,
    load_cohort,
    save_cohort,
    standardize,
)
from .classifiers import (
    ClassifierKind,
    CvResult,
    FittedModel,
    cross_validate,
    default_kinds,
    fit,
    predict,
    stratified_folds,
)
from .selection import (
    FeatureMask,
    SelectionReport,
    WrapperConfig,
    ensemble_consensus,
    run_ensemble_selection,
    wrapper_select,
)
from .embedding import Embedding2D, TsneParams, pairwise_affinities, tsne
from .segmentation import (
    ClusterAssignment,
    Marker,
    RasterConfig,
    RasterGrid,
    assign_clusters,
    auto_markers,
    rasterize,
    reconstruct,
    segment_embedding,
)
from .profiles import (
    ClusterProfile,
    FeatureStat,
    characterize_cluster,
    cohens_d,
    gradation_summary,
    interpret_effect,
    mann_whitney_exact_p,
    mann_whitney_u,
    subtype_label,
)

__all__ = [name for name in dir() if not name.startswith("_")]
