"""Dataset parsers and synthetic generators feeding the finite-sum oracles.

Two external formats are supported bit-exactly, and both parsers reject
rather than repair malformed input:

* LIBSVM text: one sample per line, ``label idx:val idx:val ...`` with
  1-based strictly ascending indices; '#' starts a comment.  Indices are
  converted to 0-based at this boundary and converted back on serialization.
* IDX binary: big-endian header, magic 0x00000803 for image tensors and
  0x00000801 for label vectors.  Images are flattened and scaled to [0, 1];
  0-based digit labels are shifted to 1-based class indices.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DataError, ParameterError, ParseError


@dataclass(frozen=True)
class SparseMatrix:
    """Row-sparse matrix in CSR arrays; column indices strictly increase within a row."""

    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        if len(self.indptr) != self.n_rows + 1:
            raise DataError("indptr length must be n_rows + 1")
        for i in range(self.n_rows):
            cols = self.indices[self.indptr[i] : self.indptr[i + 1]]
            if cols.size and (np.any(np.diff(cols) <= 0) or cols[0] < 0 or cols[-1] >= self.n_cols):
                raise DataError(f"row {i} has out-of-range or non-ascending column indices")

    def row(self, i):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def to_csr(self):
        return sp.csr_matrix(
            (self.data, self.indices, self.indptr), shape=(self.n_rows, self.n_cols)
        )

    def to_dense(self):
        return self.to_csr().toarray()

    def __eq__(self, other):
        return (
            isinstance(other, SparseMatrix)
            and self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Features (SparseMatrix or dense array) plus one integer label per row."""

    features: object
    labels: np.ndarray

    def __post_init__(self):
        n = self.features.n_rows if isinstance(self.features, SparseMatrix) else len(self.features)
        if len(self.labels) != n:
            raise DataError(f"label count {len(self.labels)} != row count {n}")

    @property
    def n_rows(self):
        return len(self.labels)


def _iter_content_lines(stream):
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = (ln.decode("utf-8") if isinstance(ln, bytes) else ln for ln in stream)
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_libsvm(stream, n_cols=None):
    """Parse LIBSVM text (string or line iterable) into a LabeledDataset.

    Malformed lines (non-numeric tokens, indices < 1, non-ascending indices)
    raise ParseError with the 1-based line number; nothing is repaired.
    """
    labels = []
    indptr = [0]
    indices = []
    data = []
    max_col = -1
    for lineno, line in _iter_content_lines(stream):
        tokens = line.split()
        try:
            label_val = float(tokens[0])
        except ValueError:
            raise ParseError(f"non-numeric label {tokens[0]!r}", line=lineno) from None
        if not label_val.is_integer():
            raise ParseError(f"non-integer label {tokens[0]!r}", line=lineno)
        labels.append(int(label_val))
        prev = 0
        for tok in tokens[1:]:
            idx_s, _, val_s = tok.partition(":")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"malformed feature token {tok!r}", line=lineno) from None
            if not math.isfinite(val):
                raise ParseError(f"non-finite feature value in {tok!r}", line=lineno)
            if idx < 1:
                raise ParseError(f"feature index {idx} is below 1", line=lineno)
            if idx <= prev:
                raise ParseError(
                    f"feature index {idx} is not ascending (previous {prev})", line=lineno
                )
            prev = idx
            indices.append(idx - 1)
            data.append(val)
        indptr.append(len(indices))
        max_col = max(max_col, prev - 1)
    if n_cols is None:
        n_cols = max_col + 1
    elif n_cols < max_col + 1:
        raise DataError(f"n_cols={n_cols} is smaller than the largest index {max_col + 1}")
    features = SparseMatrix(
        n_rows=len(labels),
        n_cols=n_cols,
        indptr=np.asarray(indptr, dtype=np.int64),
        indices=np.asarray(indices, dtype=np.int64),
        data=np.asarray(data, dtype=np.float64),
    )
    return LabeledDataset(features=features, labels=np.asarray(labels, dtype=np.int64))


def serialize_libsvm(ds):
    """Inverse of parse_libsvm: 1-based indices, shortest round-trip value text."""
    if not isinstance(ds.features, SparseMatrix):
        raise DataError("serialization needs SparseMatrix features")
    lines = []
    for i in range(ds.n_rows):
        cols, vals = ds.features.row(i)
        parts = [str(int(ds.labels[i]))]
        parts.extend(f"{int(c) + 1}:{float(v)!r}" for c, v in zip(cols, vals))
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def normalize_rows(ds):
    """Scale every feature row to unit Euclidean norm; a zero row is a data error."""
    if isinstance(ds.features, SparseMatrix):
        norms = np.zeros(ds.n_rows)
        for i in range(ds.n_rows):
            _, vals = ds.features.row(i)
            norms[i] = np.linalg.norm(vals)
        zero = np.nonzero(norms == 0.0)[0]
        if zero.size:
            raise DataError(f"row {int(zero[0])} has zero norm and cannot be normalized")
        data = ds.features.data.copy()
        for i in range(ds.n_rows):
            lo, hi = ds.features.indptr[i], ds.features.indptr[i + 1]
            data[lo:hi] /= norms[i]
        features = SparseMatrix(
            n_rows=ds.features.n_rows,
            n_cols=ds.features.n_cols,
            indptr=ds.features.indptr,
            indices=ds.features.indices,
            data=data,
        )
    else:
        X = np.asarray(ds.features, dtype=np.float64)
        norms = np.linalg.norm(X, axis=1)
        zero = np.nonzero(norms == 0.0)[0]
        if zero.size:
            raise DataError(f"row {int(zero[0])} has zero norm and cannot be normalized")
        features = X / norms[:, None]
    return LabeledDataset(features=features, labels=ds.labels)


_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def read_idx(stream):
    """Read one IDX payload: images -> (N, rows*cols) floats in [0,1]; labels -> 1-based ints.

    Bad magic, truncation, or trailing bytes abort with DataError; no partial
    dataset is ever returned.
    """
    blob = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    if len(blob) < 4:
        raise DataError("IDX payload is too short for a magic number")
    (magic,) = struct.unpack(">I", blob[:4])
    if magic == _IDX_IMAGES_MAGIC:
        if len(blob) < 16:
            raise DataError("IDX image header is truncated")
        n, rows, cols = struct.unpack(">III", blob[4:16])
        expected = 16 + n * rows * cols
        if len(blob) != expected:
            raise DataError(f"IDX image payload has {len(blob)} bytes, expected {expected}")
        pixels = np.frombuffer(blob, dtype=np.uint8, offset=16)
        return pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    if magic == _IDX_LABELS_MAGIC:
        if len(blob) < 8:
            raise DataError("IDX label header is truncated")
        (n,) = struct.unpack(">I", blob[4:8])
        if len(blob) != 8 + n:
            raise DataError(f"IDX label payload has {len(blob)} bytes, expected {8 + n}")
        raw = np.frombuffer(blob, dtype=np.uint8, offset=8)
        return raw.astype(np.int64) + 1
    raise DataError(f"bad IDX magic 0x{magic:08x}")


def load_idx_dataset(images_path, labels_path):
    """Pair image and label IDX files into a LabeledDataset."""
    with open(images_path, "rb") as fh:
        images = read_idx(fh)
    with open(labels_path, "rb") as fh:
        labels = read_idx(fh)
    if images.ndim != 2:
        raise DataError(f"{images_path} does not hold an image tensor")
    if labels.ndim != 1:
        raise DataError(f"{labels_path} does not hold a label vector")
    if len(images) != len(labels):
        raise DataError(f"image count {len(images)} != label count {len(labels)}")
    return LabeledDataset(features=images, labels=labels)


def gen_synthetic_classes(rng, n, dim, c, separation):
    """Gaussian class blobs: pairwise class-mean distance = separation, balanced labels."""
    if c < 2:
        raise ParameterError(f"need at least 2 classes, got {c}")
    if c > dim:
        raise ParameterError(f"class count {c} exceeds dimension {dim}")
    if n < 1:
        raise ParameterError(f"need at least one sample, got {n}")
    means = np.zeros((c, dim))
    means[np.arange(c), np.arange(c)] = separation / np.sqrt(2.0)
    labels = (np.arange(n) % c) + 1
    X = means[labels - 1] + rng.standard_normal((n, dim))
    return LabeledDataset(features=X, labels=labels)
