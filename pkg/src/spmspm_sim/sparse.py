"""Compressed sparse matrices (CSR/CSC as one parametric format) and fibers.

A ``CompressedMatrix`` stores a pointer vector over the major axis plus
parallel coordinate/value vectors over the minor axis.  CSR is the
row-major instance and CSC the column-major one; all of the machinery below
treats them identically, which is what lets the accelerator model run the
N-stationary dataflows by reinterpreting the operands.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, NamedTuple

import numpy as np

ELEMENT_BYTES = 4
POINTER_BYTES = 4


class StructuralError(ValueError):
    """Pointer/index vectors do not describe a valid compressed matrix."""


class MajorAxis(Enum):
    ROW = "row"  # CSR
    COL = "col"  # CSC

    @property
    def other(self) -> "MajorAxis":
        return MajorAxis.COL if self is MajorAxis.ROW else MajorAxis.ROW

    @property
    def format_name(self) -> str:
        return "CSR" if self is MajorAxis.ROW else "CSC"


class Element(NamedTuple):
    """One (coordinate, value) duple of a fiber."""

    coord: int
    value: int | float


Fiber = list  # list[Element], strictly sorted by coord


def check_fiber(fiber) -> None:
    prev = -1
    for e in fiber:
        if e[0] <= prev:
            raise StructuralError(f"fiber not strictly sorted at coord {e[0]}")
        prev = e[0]


@dataclass(frozen=True, eq=False)
class CompressedMatrix:
    major: MajorAxis
    n_rows: int
    n_cols: int
    ptr: np.ndarray
    idx: np.ndarray
    val: np.ndarray

    def __post_init__(self):
        ptr = np.asarray(self.ptr, dtype=np.int64)
        idx = np.asarray(self.idx, dtype=np.int64)
        val = np.asarray(self.val)
        if val.dtype.kind not in "iuf":
            val = val.astype(np.int64)
        object.__setattr__(self, "ptr", ptr)
        object.__setattr__(self, "idx", idx)
        object.__setattr__(self, "val", val)
        self._validate()

    def _validate(self) -> None:
        if self.n_rows < 0 or self.n_cols < 0:
            raise StructuralError("negative dimensions")
        ptr, idx = self.ptr, self.idx
        if ptr.ndim != 1 or len(ptr) != self.major_dim + 1:
            raise StructuralError(
                f"ptr has length {len(ptr)}, expected {self.major_dim + 1}")
        if ptr[0] != 0:
            raise StructuralError("ptr[0] must be 0")
        if np.any(np.diff(ptr) < 0):
            raise StructuralError("ptr must be non-decreasing")
        if ptr[-1] != len(idx) or len(idx) != len(self.val):
            raise StructuralError("ptr[-1], len(idx) and len(val) disagree")
        if len(idx):
            if idx.min() < 0 or idx.max() >= self.minor_dim:
                raise StructuralError("coordinate outside the minor dimension")
            # strictly increasing inside each fiber: a non-increasing step is
            # only allowed where a new fiber starts
            bad = np.flatnonzero(np.diff(idx) <= 0) + 1
            if len(bad):
                starts = set(ptr[1:-1].tolist())
                for pos in bad.tolist():
                    if pos not in starts:
                        raise StructuralError(
                            f"fiber coordinates not strictly increasing at position {pos}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def major_dim(self) -> int:
        return self.n_rows if self.major is MajorAxis.ROW else self.n_cols

    @property
    def minor_dim(self) -> int:
        return self.n_cols if self.major is MajorAxis.ROW else self.n_rows

    @property
    def nnz(self) -> int:
        return int(len(self.idx))

    @property
    def is_real(self) -> bool:
        return self.val.dtype.kind == "f"

    def compressed_size_bytes(self, element_bytes: int = ELEMENT_BYTES,
                              pointer_bytes: int = POINTER_BYTES) -> int:
        return self.nnz * element_bytes + len(self.ptr) * pointer_bytes

    def fiber_length(self, i: int) -> int:
        return int(self.ptr[i + 1] - self.ptr[i])

    def fiber(self, i: int) -> Fiber:
        return fiber_at(self, i)

    def fibers(self) -> Iterator[Fiber]:
        for i in range(self.major_dim):
            yield self.fiber(i)

    def fiber_lists(self) -> list[list[tuple]]:
        """All fibers as plain lists of ``(coord, value)`` tuples (Python scalars)."""
        idx = self.idx.tolist()
        val = self.val.tolist()
        ptr = self.ptr.tolist()
        return [list(zip(idx[ptr[i]:ptr[i + 1]], val[ptr[i]:ptr[i + 1]]))
                for i in range(self.major_dim)]

    def transposed_view(self) -> "CompressedMatrix":
        """The transpose, sharing the same vectors (CSR of X is CSC of X^T)."""
        return CompressedMatrix(self.major.other, self.n_cols, self.n_rows,
                                self.ptr, self.idx, self.val)

    def to_dense(self) -> np.ndarray:
        return decompress(self)

    def same_as(self, other: "CompressedMatrix") -> bool:
        return (self.major is other.major and self.shape == other.shape
                and np.array_equal(self.ptr, other.ptr)
                and np.array_equal(self.idx, other.idx)
                and np.array_equal(self.val, other.val))

    def __repr__(self) -> str:
        return (f"CompressedMatrix({self.major.format_name}, {self.n_rows}x{self.n_cols}, "
                f"nnz={self.nnz})")


def compress(dense, major: MajorAxis = MajorAxis.ROW) -> CompressedMatrix:
    """Encode the non-zeros of a dense 2-D array in CSR (ROW) or CSC (COL)."""
    dense = np.asarray(dense)
    if dense.ndim != 2:
        raise ValueError("dense matrix must be 2-D")
    n_rows, n_cols = dense.shape
    grid = dense if major is MajorAxis.ROW else dense.T
    mask = grid != 0
    counts = mask.sum(axis=1)
    ptr = np.zeros(grid.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    _, minor = np.nonzero(mask)
    val = grid[mask]
    if val.dtype.kind not in "if":
        val = val.astype(np.int64)
    return CompressedMatrix(major, n_rows, n_cols, ptr, minor, val)


def decompress(m: CompressedMatrix) -> np.ndarray:
    dtype = np.float64 if m.is_real else np.int64
    grid = np.zeros((m.major_dim, m.minor_dim), dtype=dtype)
    majors = np.repeat(np.arange(m.major_dim), np.diff(m.ptr))
    grid[majors, m.idx] = m.val
    return grid if m.major is MajorAxis.ROW else grid.T


def from_coo(n_rows: int, n_cols: int, rows, cols, vals,
             major: MajorAxis = MajorAxis.ROW) -> CompressedMatrix:
    """Build from coordinate triples; duplicates are summed, zeros dropped."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals)
    if len(rows) and (rows.min() < 0 or rows.max() >= n_rows
                      or cols.min() < 0 or cols.max() >= n_cols):
        raise StructuralError("coordinate outside the matrix")
    dtype = np.float64 if vals.dtype.kind == "f" else np.int64
    dense = np.zeros((n_rows, n_cols), dtype=dtype)
    np.add.at(dense, (rows, cols), vals.astype(dtype))
    return compress(dense, major)


def convert(m: CompressedMatrix, target: MajorAxis) -> CompressedMatrix:
    """Explicit CSR<->CSC conversion (counting-sort transpose of the fibers)."""
    if target is m.major:
        return m
    n_minor = m.minor_dim
    counts = np.bincount(m.idx, minlength=n_minor)
    ptr = np.zeros(n_minor + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    majors = np.repeat(np.arange(m.major_dim, dtype=np.int64), np.diff(m.ptr))
    # stable sort by minor coordinate keeps the old major order inside each new fiber
    order = np.argsort(m.idx, kind="stable")
    return CompressedMatrix(target, m.n_rows, m.n_cols, ptr, majors[order], m.val[order])


def fiber_at(m: CompressedMatrix, i: int) -> Fiber:
    if not 0 <= i < m.major_dim:
        raise IndexError(f"fiber index {i} out of range [0, {m.major_dim})")
    lo, hi = int(m.ptr[i]), int(m.ptr[i + 1])
    return [Element(c, v) for c, v in zip(m.idx[lo:hi].tolist(), m.val[lo:hi].tolist())]


def gen_sparse(n_rows: int, n_cols: int, sparsity: float, seed=None,
               value_range=(1, 255), real: bool = False) -> np.ndarray:
    """Random dense matrix with round(sparsity * size) zeros.

    Non-zero positions are drawn uniformly without replacement; values are
    uniform over ``value_range`` (inclusive for integers).
    """
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity must be in [0, 1], got {sparsity}")
    lo, hi = value_range
    if lo <= 0 <= hi:
        raise ValueError("value_range must exclude 0")
    rng = np.random.default_rng(seed)
    total = n_rows * n_cols
    nnz = total - int(round(sparsity * total))
    positions = rng.choice(total, size=nnz, replace=False) if nnz else np.empty(0, np.int64)
    if real:
        dense = np.zeros(total, dtype=np.float64)
        dense[positions] = rng.uniform(lo, hi, size=nnz)
    else:
        dense = np.zeros(total, dtype=np.int64)
        dense[positions] = rng.integers(lo, hi, size=nnz, endpoint=True)
    return dense.reshape(n_rows, n_cols)
