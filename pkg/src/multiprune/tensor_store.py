"""Bit-exact NPY v1.0 reader/writer and the in-memory dense matrix type.

Only 2-D little-endian f32/f64 row-major tensors are accepted. Values are
widened to float64 internally; files written here are byte-identical to what
``numpy.save`` emits for a C-contiguous float array, so round trips through
either implementation reproduce the same bytes.
"""

from __future__ import annotations

import ast
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    FortranOrderUnsupported,
    NonFinite,
    ShapeMismatch,
    UnsupportedDtype,
    UnsupportedVersion,
)

MAGIC = b"\x93NUMPY"
_ALIGN = 64
_DESCRS = {"f32": "<f4", "f64": "<f8"}


@dataclass(frozen=True)
class DenseMatrix:
    """Immutable 2-D float64 row-major matrix.

    All entries are finite; the backing array is marked read-only so
    instances can be shared across threads without copying.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C")  # private copy
        if arr.ndim != 2:
            raise ShapeMismatch(f"expected a 2-D matrix, got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise NonFinite("matrix contains NaN or Inf entries")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class TensorHeader:
    """Parsed NPY preamble: dtype tag, (rows, cols) shape, storage order."""

    dtype: str  # "f32" or "f64"
    shape: tuple[int, int]
    fortran_order: bool = field(default=False)


def _parse_header(raw: bytes, path: str) -> TensorHeader:
    try:
        meta = ast.literal_eval(raw.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise BadMagic(f"{path}: unparseable NPY header") from exc
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise BadMagic(f"{path}: malformed NPY header dict")

    descr = meta["descr"]
    tags = {v: k for k, v in _DESCRS.items()}
    if descr not in tags:
        raise UnsupportedDtype(
            f"{path}: dtype {descr!r} not supported (expected '<f4' or '<f8')"
        )
    if meta["fortran_order"]:
        raise FortranOrderUnsupported(
            f"{path}: fortran_order=True (column-major) files are rejected"
        )
    shape = meta["shape"]
    if (
        not isinstance(shape, tuple)
        or len(shape) != 2
        or not all(isinstance(s, int) and s >= 0 for s in shape)
    ):
        raise ShapeMismatch(f"{path}: only 2-D tensors are supported, got shape {shape}")
    return TensorHeader(dtype=tags[descr], shape=shape)


def read_npy(path: str) -> DenseMatrix:
    """Read a 2-D f32/f64 NPY v1.0 file, widening to float64 in memory."""
    with open(path, "rb") as fh:
        blob = fh.read()

    if blob[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not an NPY file")
    if len(blob) < len(MAGIC) + 4:
        raise BadMagic(f"{path}: truncated NPY preamble")
    major, minor = blob[6], blob[7]
    if (major, minor) != (1, 0):
        raise UnsupportedVersion(f"{path}: NPY version {major}.{minor} rejected (need 1.0)")
    (hlen,) = struct.unpack("<H", blob[8:10])
    header = _parse_header(blob[10 : 10 + hlen], path)

    rows, cols = header.shape
    itemsize = 4 if header.dtype == "f32" else 8
    payload = blob[10 + hlen :]
    if len(payload) != rows * cols * itemsize:
        raise ShapeMismatch(
            f"{path}: header shape {header.shape} implies {rows * cols * itemsize} "
            f"payload bytes, found {len(payload)}"
        )
    values = np.frombuffer(payload, dtype=_DESCRS[header.dtype]).astype(np.float64)
    matrix = values.reshape(rows, cols)
    if not np.all(np.isfinite(matrix)):
        bad = np.argwhere(~np.isfinite(matrix))[0]
        raise NonFinite(f"{path}: non-finite entry at ({bad[0]}, {bad[1]})")
    return DenseMatrix(matrix)


def _build_preamble(descr: str, rows: int, cols: int) -> bytes:
    text = "{'descr': '%s', 'fortran_order': False, 'shape': (%d, %d), }" % (
        descr,
        rows,
        cols,
    )
    # magic(6) + version(2) + hlen(2) + text + pad + '\n', total a multiple of 64
    unpadded = len(MAGIC) + 2 + 2 + len(text) + 1
    pad = (-unpadded) % _ALIGN
    header = text + " " * pad + "\n"
    return MAGIC + bytes((1, 0)) + struct.pack("<H", len(header)) + header.encode("latin1")


def write_npy(m: DenseMatrix, dtype: str, path: str) -> None:
    """Write ``m`` as NPY v1.0 with the given on-disk dtype ("f32" or "f64")."""
    if dtype not in _DESCRS:
        raise UnsupportedDtype(f"dtype {dtype!r} not supported (expected 'f32' or 'f64')")
    if not np.all(np.isfinite(m.data)):
        raise NonFinite("refusing to write non-finite entries")
    payload = np.ascontiguousarray(m.data.astype(_DESCRS[dtype]))
    with open(path, "wb") as fh:
        fh.write(_build_preamble(_DESCRS[dtype], m.rows, m.cols))
        fh.write(payload.tobytes(order="C"))
