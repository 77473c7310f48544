"""Matrix file ingestion/export: Matrix Market coordinate and raw dense text."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .sparse import (CompressedMatrix, MajorAxis, StructuralError, compress, decompress,
                     from_coo)


class MatrixFormatError(ValueError):
    pass


def read_matrix(path, major: MajorAxis = MajorAxis.ROW, real: bool | None = None
                ) -> CompressedMatrix:
    """Read either format, sniffing the ``%%MatrixMarket`` banner."""
    text = Path(path).read_text()
    if text.lstrip().startswith("%%MatrixMarket"):
        return parse_matrix_market(text, major, real)
    return parse_dense_text(text, major, real)


def parse_matrix_market(text: str, major: MajorAxis = MajorAxis.ROW,
                        real: bool | None = None) -> CompressedMatrix:
    lines = text.splitlines()
    banner = lines[0].split()
    if (len(banner) < 5 or banner[1].lower() != "matrix"
            or banner[2].lower() != "coordinate"):
        raise MatrixFormatError(f"unsupported Matrix Market banner: {lines[0]!r}")
    field, symmetry = banner[3].lower(), banner[4].lower()
    if field not in ("integer", "real") or symmetry != "general":
        raise MatrixFormatError(f"unsupported field/symmetry: {field} {symmetry}")
    is_real = (field == "real") if real is None else real
    body = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixFormatError("missing size line")
    try:
        n_rows, n_cols, nnz = (int(x) for x in body[0].split())
    except ValueError as exc:
        raise MatrixFormatError(f"bad size line: {body[0]!r}") from exc
    entries = body[1:]
    if len(entries) != nnz:
        raise MatrixFormatError(f"expected {nnz} entries, found {len(entries)}")
    rows, cols, vals = [], [], []
    conv = float if is_real else int
    for ln in entries:
        parts = ln.split()
        if len(parts) != 3:
            raise MatrixFormatError(f"bad entry line: {ln!r}")
        try:
            rows.append(int(parts[0]) - 1)
            cols.append(int(parts[1]) - 1)
            vals.append(conv(parts[2]))
        except ValueError as exc:
            raise MatrixFormatError(f"bad entry line: {ln!r}") from exc
    dtype = np.float64 if is_real else np.int64
    try:
        return from_coo(n_rows, n_cols, rows, cols, np.asarray(vals, dtype=dtype), major)
    except StructuralError as exc:
        raise MatrixFormatError(str(exc)) from exc


def parse_dense_text(text: str, major: MajorAxis = MajorAxis.ROW,
                     real: bool | None = None) -> CompressedMatrix:
    tokens = text.split()
    if len(tokens) < 2:
        raise MatrixFormatError("dense text needs a 'rows cols' header")
    try:
        n_rows, n_cols = int(tokens[0]), int(tokens[1])
    except ValueError as exc:
        raise MatrixFormatError("bad dense header") from exc
    values = tokens[2:]
    if len(values) != n_rows * n_cols:
        raise MatrixFormatError(
            f"expected {n_rows * n_cols} values, found {len(values)}")
    if real is None:
        real = any(("." in v or "e" in v.lower()) for v in values)
    try:
        arr = np.array([float(v) if real else int(v) for v in values],
                       dtype=np.float64 if real else np.int64)
    except ValueError as exc:
        raise MatrixFormatError("non-numeric value in dense text") from exc
    return compress(arr.reshape(n_rows, n_cols), major)


def format_matrix_market(m: CompressedMatrix) -> str:
    field = "real" if m.is_real else "integer"
    dense = decompress(m)
    rows, cols = np.nonzero(dense)
    out = [f"%%MatrixMarket matrix coordinate {field} general",
           f"{m.n_rows} {m.n_cols} {len(rows)}"]
    for r, c in zip(rows.tolist(), cols.tolist()):
        v = dense[r, c]
        out.append(f"{r + 1} {c + 1} {repr(float(v)) if m.is_real else int(v)}")
    return "\n".join(out) + "\n"


def format_dense_text(m: CompressedMatrix) -> str:
    dense = decompress(m)
    out = [f"{m.n_rows} {m.n_cols}"]
    for row in dense:
        out.append(" ".join(repr(float(v)) if m.is_real else str(int(v)) for v in row))
    return "\n".join(out) + "\n"


def write_matrix(path, m: CompressedMatrix, fmt: str = "mtx") -> None:
    text = format_matrix_market(m) if fmt == "mtx" else format_dense_text(m)
    Path(path).write_text(text)
