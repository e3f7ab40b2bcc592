"""Produces per-layer weight/calibration dumps for the pruning solver and
scores pruned tensors on held-out activations.

The solver is consumed purely through its external surfaces: NPY v1.0
tensor files, the JSON layer manifest, and the ``multiprune`` CLI.
"""

from .dump import dump_synthetic_layers, dump_toy_transformer_layers
from .evaluate import eval_layer_outputs, evaluate_run

__version__ = "0.1.0"

__all__ = [
    "dump_synthetic_layers",
    "dump_toy_transformer_layers",
    "eval_layer_outputs",
    "evaluate_run",
    "__version__",
]
