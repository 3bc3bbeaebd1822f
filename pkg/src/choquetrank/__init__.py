"""Multi-criteria relevance fusion with the discrete Choquet integral.

The library fuses per-document criterion scores into a single ranking
under a learned fuzzy measure (capacity), trains that measure against a
target IR metric, explains it through Shapley importance and pairwise
interaction indices, and evaluates runs with trec-style metrics.
"""

__version__ = "0.1.0"

from .aggregate import (
    AggregationError,
    AggregatorSpec,
    CriterionVector,
    RankedList,
    RankEntry,
    and_min_score,
    choquet_score,
    owa_score,
    prioritized_score,
    rank_query,
    weighted_sum_score,
)
from .data import (
    JudgedDataset,
    NormalizationPolicy,
    ParseError,
    generate_synthetic,
    normalize,
    parse_feature_file,
    parse_qrels,
    parse_run_file,
    write_feature_file,
    write_qrels,
    write_run_file,
)
from .evaluation import (
    Judgments,
    MetricError,
    MetricReport,
    ZeroVarianceError,
    average_precision,
    build_report,
    mean_over_queries,
    paired_t_test,
    parse_metric,
    precision_at_k,
)
from .indices import (
    ConstantInputError,
    interaction_index,
    interaction_matrix,
    shapley_importance,
    spearman_correlation,
)
from .measure import (
    Capacity,
    CapacityError,
    CapacityFormatError,
    CriterionSet,
    TwoAdditiveCapacity,
    ValidationReport,
    capacity_from_weights,
    expand_two_additive,
    read_capacity_file,
    validate_capacity,
    write_capacity_file,
)
from .training import (
    DegenerateTrainingError,
    FitResult,
    RankDeficientError,
    TrainingConfig,
    TrainingSample,
    TrainReport,
    TuningGrid,
    build_targets,
    candidate_to_capacity,
    generate_grid,
    least_squares_fit,
    train_pipeline,
    tune_select,
)

__all__ = [
    "AggregationError",
    "AggregatorSpec",
    "Capacity",
    "CapacityError",
    "CapacityFormatError",
    "ConstantInputError",
    "CriterionSet",
    "CriterionVector",
    "DegenerateTrainingError",
    "FitResult",
    "JudgedDataset",
    "Judgments",
    "MetricError",
    "MetricReport",
    "NormalizationPolicy",
    "ParseError",
    "RankDeficientError",
    "RankEntry",
    "RankedList",
    "TrainReport",
    "TrainingConfig",
    "TrainingSample",
    "TuningGrid",
    "TwoAdditiveCapacity",
    "ValidationReport",
    "ZeroVarianceError",
    "and_min_score",
    "average_precision",
    "build_report",
    "build_targets",
    "candidate_to_capacity",
    "capacity_from_weights",
    "choquet_score",
    "expand_two_additive",
    "generate_grid",
    "generate_synthetic",
    "interaction_index",
    "interaction_matrix",
    "least_squares_fit",
    "mean_over_queries",
    "normalize",
    "owa_score",
    "paired_t_test",
    "parse_feature_file",
    "parse_metric",
    "parse_qrels",
    "parse_run_file",
    "precision_at_k",
    "prioritized_score",
    "rank_query",
    "read_capacity_file",
    "shapley_importance",
    "spearman_correlation",
    "train_pipeline",
    "tune_select",
    "validate_capacity",
    "weighted_sum_score",
    "write_capacity_file",
    "write_feature_file",
    "write_qrels",
    "write_run_file",
]
