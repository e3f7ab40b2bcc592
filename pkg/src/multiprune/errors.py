"""Exception hierarchy for the pruning solver.

Plain ``ValueError`` / ``OSError`` are used for precondition misuse and file
system failures; the classes below cover the contract-level failure modes the
CLI maps to exit codes.
"""

from __future__ import annotations


class PruningError(Exception):
    """Base class for all solver-level failures (CLI exit code 1)."""


class ConfigError(PruningError):
    """Invalid sparsity/strategy configuration (CLI exit code 2)."""


# --- tensor container ------------------------------------------------------


class TensorFormatError(PruningError):
    """Base class for NPY container violations."""


class BadMagic(TensorFormatError):
    """File does not start with the NPY magic sequence."""


class UnsupportedVersion(TensorFormatError):
    """NPY container version other than 1.0."""


class UnsupportedDtype(TensorFormatError):
    """On-disk dtype is not little-endian f32/f64."""


class FortranOrderUnsupported(TensorFormatError):
    """Column-major payloads are rejected rather than silently transposed."""


class ShapeMismatch(TensorFormatError):
    """Header shape inconsistent with payload, or tensor is not 2-D."""


class NonFinite(PruningError):
    """Tensor contains NaN or Inf entries."""


# --- linear algebra --------------------------------------------------------


class DimMismatch(PruningError):
    """Operand dimensions are inconsistent."""


class NotPositiveDefinite(PruningError):
    """Cholesky factorization failed; calibration statistic is degenerate."""


class SingularSubmatrix(PruningError):
    """A principal submatrix solve failed despite an SPD parent.

    Carries a condition estimate of the offending submatrix when available.
    """

    def __init__(self, message: str, cond: float | None = None):
        if cond is not None:
            message = f"{message} (condition estimate {cond:.3e})"
        super().__init__(message)
        self.cond = cond


# --- mask selection --------------------------------------------------------


class ColsNotDivisible(PruningError):
    """Column count is not divisible by the N:M group width."""


class TooManyCombinations(PruningError):
    """Exhaustive subset enumeration would exceed the configured limit."""


# --- pipeline --------------------------------------------------------------


class ManifestError(PruningError):
    """Layer manifest is malformed."""
