"""Selection-bias correction for community-level prediction.

Reweights individual observations so community aggregates match known
population margins (post-stratification, raking), with three refinements for
estimated demographics: estimator redistribution, adaptive binning, and
informed smoothing. Includes the downstream weighted-aggregation and
cross-validated ridge pipeline used to judge whether a correction helps.
"""

from .aggregate import FeatureIndex, aggregate_features
from .binning import BinCounts, adaptive_bin, count_per_bin, project_margins
from .evaluate import (
    BiasReport,
    ComparisonResult,
    combine_dependent_pvalues,
    compare_metrics,
    paired_residual_test,
    pearson_r,
    quantify_bias,
    r_squared,
    rmse,
)
from .io import Dataset, load_dataset, load_weights, save_dataset, save_weights
from .pipeline import (
    CorrelationFilter,
    EvalResult,
    FeatureMatrix,
    PipelineConfig,
    RandomizedPCA,
    RidgeRegressor,
    Standardizer,
    VarianceFilter,
    assign_folds,
    cross_validate,
    ridge_fit,
)
from .redistribute import (
    Redistributor,
    SourceBinBoundaries,
    build_source_bins,
    redistribute_all,
    redistribute_value,
)
from .search import GridSpec, backwards_eliminate, grid_search
from .synth import SynthSpec, generate
from .types import (
    CorrectionConfig,
    Individual,
    MarginTable,
    NationalTarget,
    OutcomeTable,
    Partition,
    ValidationReport,
    WeightAssignment,
    census_partition,
    survey_partition,
    validate_dataset,
)
from .weights import (
    JointCellTable,
    RakingError,
    StructuralZeroError,
    UndefinedCellError,
    assign_weights,
    cell_weight,
    correct_dataset,
    naive_joint,
    rake,
    smooth_sample_prob,
)

__version__ = "0.1.0"

__all__ = [
    "FeatureIndex",
    "aggregate_features",
    "BinCounts",
    "adaptive_bin",
    "count_per_bin",
    "project_margins",
    "BiasReport",
    "ComparisonResult",
    "combine_dependent_pvalues",
    "compare_metrics",
    "paired_residual_test",
    "pearson_r",
    "quantify_bias",
    "r_squared",
    "rmse",
    "Dataset",
    "load_dataset",
    "load_weights",
    "save_dataset",
    "save_weights",
    "CorrelationFilter",
    "EvalResult",
    "FeatureMatrix",
    "PipelineConfig",
    "RandomizedPCA",
    "RidgeRegressor",
    "Standardizer",
    "VarianceFilter",
    "assign_folds",
    "cross_validate",
    "ridge_fit",
    "Redistributor",
    "SourceBinBoundaries",
    "build_source_bins",
    "redistribute_all",
    "redistribute_value",
    "GridSpec",
    "backwards_eliminate",
    "grid_search",
    "SynthSpec",
    "generate",
    "CorrectionConfig",
    "Individual",
    "MarginTable",
    "NationalTarget",
    "OutcomeTable",
    "Partition",
    "ValidationReport",
    "WeightAssignment",
    "census_partition",
    "survey_partition",
    "validate_dataset",
    "JointCellTable",
    "RakingError",
    "StructuralZeroError",
    "UndefinedCellError",
    "assign_weights",
    "cell_weight",
    "correct_dataset",
    "naive_joint",
    "rake",
    "smooth_sample_prob",
]
