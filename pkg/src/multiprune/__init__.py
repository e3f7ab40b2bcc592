"""Layer-wise post-training pruning with closed-form multi-weight compensation.

Removes several weights per row simultaneously and re-solves all remaining
weights in one shot against the layer's damped second-moment statistic,
supporting unstructured and N:M semi-structured sparsity with per-weight or
per-group mask selection and simultaneous or sequential compensation.
"""

from .compensator import (
    RowCompensation,
    StrategyCombo,
    compensate_mrp,
    compensate_mrp_row,
    compensate_sequential_s,
    predicted_loss_row,
    predicted_loss_total,
)
from .hessian import HessianState, accumulate, dampen, sub_inverse
from .mask_select import (
    PruneMask,
    mask_nm_solution_m,
    mask_nm_solution_s,
    mask_unstructured,
    score_solution_s,
)
from .oracle import OracleResult, exhaustive_best_mask, row_least_squares
from .pipeline import (
    LayerEntry,
    LayerReport,
    SemiStructured,
    SparsityConfig,
    Unstructured,
    load_manifest,
    prune_layer,
    prune_model,
)
from .tensor_store import DenseMatrix, TensorHeader, read_npy, write_npy

__version__ = "0.1.0"

__all__ = [
    "DenseMatrix",
    "TensorHeader",
    "read_npy",
    "write_npy",
    "HessianState",
    "accumulate",
    "dampen",
    "sub_inverse",
    "PruneMask",
    "score_solution_s",
    "mask_unstructured",
    "mask_nm_solution_s",
    "mask_nm_solution_m",
    "RowCompensation",
    "StrategyCombo",
    "compensate_mrp",
    "compensate_mrp_row",
    "compensate_sequential_s",
    "predicted_loss_row",
    "predicted_loss_total",
    "OracleResult",
    "row_least_squares",
    "exhaustive_best_mask",
    "SparsityConfig",
    "Unstructured",
    "SemiStructured",
    "LayerEntry",
    "LayerReport",
    "load_manifest",
    "prune_layer",
    "prune_model",
    "__version__",
]
