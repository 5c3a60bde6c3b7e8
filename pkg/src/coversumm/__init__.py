"""Exact k-nearest-neighbours-of-the-mean summaries over vector streams."""

__version__ = "0.1.0"

from .base import StepRecord, Summary
from .baselines import BASELINES, BruteForce, DecayLambda, NaiveTree, RandomReservoir
from .datagen import Dataset, GenSpec, generate
from .engine import VARIANTS, CoverSumm, Reservoir, ReservoirInvariantError
from .oracle_metrics import (
    AccuracyReport,
    bound_violation_rate,
    nn_accuracy,
    oracle_knn,
    oracle_stream,
)
from .sgtree import (
    EmptyIndexError,
    NeighborIndex,
    ReservoirResult,
    SGTree,
    TreeNode,
    check_invariants,
)
from .vectorspace import (
    BoundParams,
    DimensionMismatch,
    Point,
    RunningCentroid,
    centroid_bound,
    distance,
    distances,
    lambda_threshold,
)

__all__ = [
    "AccuracyReport",
    "BASELINES",
    "BoundParams",
    "BruteForce",
    "CoverSumm",
    "Dataset",
    "DecayLambda",
    "DimensionMismatch",
    "EmptyIndexError",
    "GenSpec",
    "NaiveTree",
    "NeighborIndex",
    "Point",
    "RandomReservoir",
    "Reservoir",
    "ReservoirInvariantError",
    "ReservoirResult",
    "RunningCentroid",
    "SGTree",
    "StepRecord",
    "Summary",
    "TreeNode",
    "VARIANTS",
    "bound_violation_rate",
    "centroid_bound",
    "check_invariants",
    "distance",
    "distances",
    "generate",
    "lambda_threshold",
    "nn_accuracy",
    "oracle_knn",
    "oracle_stream",
]
