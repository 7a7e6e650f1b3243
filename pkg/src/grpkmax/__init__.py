"""Sparse group k-max regularized least squares and grouped-sparsity baselines."""
from .errors import DataFormatError, DimensionError, DivergenceError, PowerIterationWarning
from .model import (
    GroupedDesign,
    GroupedVector,
    PenaltySpec,
    convert_lambda,
    objective,
    predict,
    residual,
)
from .optimality import OptimalityReport, check_theorem2, perturbation_oracle, stationary_residual
from .prox import (
    IndexPartition,
    block_shrink,
    kmax_penalty,
    kmax_shrink,
    kth_max_abs,
    partition_indices,
    soft_threshold,
    sparse_group_shrink,
)
from .solver import SolveOptions, SolveResult, lipschitz_estimate, solve, solve_path

__version__ = "0.1.0"
