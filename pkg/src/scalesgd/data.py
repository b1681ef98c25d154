"""Sparse sample / dataset containers, file ingestion and sample delivery."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DataError(Exception):
    """Raised for malformed input data or invalid dataset operations."""


class ParseError(DataError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class Sample:
    """One labeled sparse feature vector.

    Stored as parallel (indices, values) arrays with strictly increasing
    0-based indices. Explicit zeros are dropped on construction; values must
    be finite; the label is +1 or -1. Immutable after construction.
    """

    __slots__ = ("indices", "values", "label", "dim")

    def __init__(self, indices, values, label, dim):
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if indices.shape != values.shape or indices.ndim != 1:
            raise DataError("indices and values must be 1-d arrays of equal length")
        if dim < 1:
            raise DataError(f"dim must be positive, got {dim}")
        if label not in (-1, 1):
            raise DataError(f"label must be -1 or +1, got {label!r}")
        if not np.all(np.isfinite(values)):
            raise DataError("non-finite feature value")
        keep = values != 0.0
        if not keep.all():
            indices = indices[keep]
            values = values[keep]
        if indices.size:
            order = np.argsort(indices, kind="stable")
            indices = indices[order]
            values = values[order]
            if np.any(indices[1:] == indices[:-1]):
                raise DataError("duplicate feature index")
            if indices[0] < 0 or indices[-1] >= dim:
                raise DataError(f"feature index out of range [0, {dim})")
        indices.setflags(write=False)
        values.setflags(write=False)
        self.indices = indices
        self.values = values
        self.label = float(label)
        self.dim = int(dim)

    def dot(self, x):
        """Inner product with a dense vector of length dim."""
        if self.indices.size == 0:
            return 0.0
        return float(x[self.indices] @ self.values)

    def to_dense(self):
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self):
        return int(self.indices.size)

    def canonical(self):
        """Canonical svmlight text form: `<+1|-1> <i>:<v> ...`, 1-based ascending."""
        label = "+1" if self.label > 0 else "-1"
        parts = [label]
        parts.extend(f"{i + 1}:{repr(float(v))}" for i, v in zip(self.indices, self.values))
        return " ".join(parts)

    def key(self):
        """Hashable identity of (features, label); exact value equality."""
        return (self.label, self.indices.tobytes(), self.values.tobytes())

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.label == other.label
            and self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Sample(nnz={self.nnz}, label={int(self.label):+d}, dim={self.dim})"


class Dataset:
    """Ordered, immutable collection of samples sharing one ambient dimension.

    The stored order defines the default sampling sequence.
    """

    def __init__(self, samples, dim, name="dataset", meta=None):
        samples = list(samples)
        for s in samples:
            if s.dim != dim:
                raise DataError(f"sample dim {s.dim} != dataset dim {dim}")
        self.samples = samples
        self.dim = int(dim)
        self.name = name
        self.meta = dict(meta or {})
        self._csr = None

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def __iter__(self):
        return iter(self.samples)

    def labels(self):
        return np.array([s.label for s in self.samples])

    def csr(self):
        """Cached CSR view of the feature matrix (rows in stored order)."""
        if self._csr is None:
            import scipy.sparse as sp

            indptr = np.zeros(len(self.samples) + 1, dtype=np.int64)
            for i, s in enumerate(self.samples):
                indptr[i + 1] = indptr[i] + s.nnz
            indices = np.concatenate([s.indices for s in self.samples]) if self.samples else np.zeros(0, dtype=np.int64)
            data = np.concatenate([s.values for s in self.samples]) if self.samples else np.zeros(0)
            self._csr = sp.csr_matrix((data, indices, indptr), shape=(len(self.samples), self.dim))
        return self._csr

    def to_svmlight(self, path):
        with open(path, "w") as fh:
            for s in self.samples:
                fh.write(s.canonical())
                fh.write("\n")

    def __repr__(self):
        return f"Dataset({self.name!r}, n={len(self.samples)}, dim={self.dim})"


def _parse_label(token, lineno=None):
    try:
        raw = float(token)
    except ValueError:
        raise ParseError(f"malformed label token {token!r}", lineno) from None
    if raw in (1.0, -1.0):
        return raw
    if raw == 0.0:
        return -1.0  # {0,1} file convention remapped to {-1,+1}
    raise ParseError(f"label must be one of 0, 1, -1, +1; got {token!r}", lineno)


def parse_svmlight(line, dim_hint=0, lineno=None):
    """Parse one svmlight line (`<label> <i>:<v> ...`, indices 1-based).

    Returns a Sample with 0-based indices and dim = max(dim_hint, max index+1).
    """
    tokens = line.split()
    if not tokens:
        raise ParseError("empty line", lineno)
    label = _parse_label(tokens[0], lineno)
    indices = []
    values = []
    for tok in tokens[1:]:
        idx_s, sep, val_s = tok.partition(":")
        if not sep:
            raise ParseError(f"malformed feature token {tok!r}", lineno)
        try:
            idx = int(idx_s)
            val = float(val_s)
        except ValueError:
            raise ParseError(f"malformed feature token {tok!r}", lineno) from None
        if idx < 1:
            raise ParseError(f"feature index must be 1-based, got {idx}", lineno)
        if not math.isfinite(val):
            raise ParseError(f"non-finite value in token {tok!r}", lineno)
        indices.append(idx - 1)
        values.append(val)
    if len(set(indices)) != len(indices):
        raise ParseError("duplicate feature index", lineno)
    dim = max(dim_hint, max(indices) + 1 if indices else 1)
    return Sample(indices, values, label, dim)


def load_svmlight(path, dim_hint=0, name=None):
    """Load an svmlight file into a Dataset; dim is the max seen across lines."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rows.append(parse_svmlight(line, dim_hint=dim_hint, lineno=lineno))
    if not rows:
        raise DataError(f"{path}: no samples")
    dim = max(dim_hint, max(s.dim for s in rows))
    samples = [
        s if s.dim == dim else Sample(s.indices, s.values, s.label, dim) for s in rows
    ]
    return Dataset(samples, dim, name=name or str(path))


def parse_dense_csv(line, label_column, lineno=None, expected_cols=None):
    """Parse one dense CSV row; non-zero entries become sparse features."""
    cells = line.strip().split(",")
    if expected_cols is not None and len(cells) != expected_cols:
        raise ParseError(
            f"expected {expected_cols} columns, got {len(cells)}", lineno
        )
    if len(cells) < 2:
        raise ParseError("need at least one feature column", lineno)
    if not (0 <= label_column < len(cells)):
        raise ParseError(f"label column {label_column} out of range", lineno)
    label = _parse_label(cells[label_column], lineno)
    feats = []
    for j, cell in enumerate(cells):
        if j == label_column:
            continue
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(f"non-numeric cell {cell!r}", lineno) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite cell {cell!r}", lineno)
        feats.append(v)
    feats = np.array(feats)
    idx = np.nonzero(feats)[0]
    return Sample(idx, feats[idx], label, len(cells) - 1)


def load_dense_csv(path, label_column, name=None):
    rows = []
    expected = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            s = parse_dense_csv(line, label_column, lineno=lineno, expected_cols=expected)
            if expected is None:
                expected = s.dim + 1
            rows.append(s)
    if not rows:
        raise DataError(f"{path}: no samples")
    return Dataset(rows, rows[0].dim, name=name or str(path))


@dataclass(frozen=True)
class SplitSpec:
    """Train/test fractions and the seed making the split deterministic."""

    train_fraction: float
    test_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.train_fraction <= 1):
            raise DataError(f"train_fraction out of (0,1]: {self.train_fraction}")
        if not (0 <= self.test_fraction <= 1):
            raise DataError(f"test_fraction out of [0,1]: {self.test_fraction}")
        if self.train_fraction + self.test_fraction > 1 + 1e-12:
            raise DataError("train_fraction + test_fraction must be <= 1")


def split(ds, spec):
    """Deterministic disjoint train/test split; the unassigned remainder
    (e.g. 10% of a 70/20 split) is discarded and its size recorded in meta.
    """
    n = len(ds)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    n_train = int(math.floor(n * spec.train_fraction + 0.5))
    n_test = int(math.floor(n * spec.test_fraction + 0.5))
    n_train = max(1, min(n_train, n))
    n_test = min(n_test, n - n_train)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    perm = rng.permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train : n_train + n_test])
    discarded = n - n_train - n_test
    train = Dataset(
        [ds.samples[i] for i in train_idx],
        ds.dim,
        name=f"{ds.name}/train",
        meta={"discarded": discarded, "split_seed": spec.seed},
    )
    test = Dataset(
        [ds.samples[i] for i in test_idx],
        ds.dim,
        name=f"{ds.name}/test",
        meta={"discarded": discarded, "split_seed": spec.seed},
    )
    return train, test


class FiniteSource:
    """Sample provider over a finite dataset; cycles with wraparound.

    order="as_stored" replays the dataset order; order="shuffled" applies one
    fixed seeded permutation and cycles it. draw(t) is a pure function of
    (source, t).
    """

    def __init__(self, dataset, order="as_stored", seed=0):
        if len(dataset) == 0:
            raise DataError("source dataset is empty")
        if order not in ("as_stored", "shuffled"):
            raise DataError(f"unknown order policy {order!r}")
        self.dataset = dataset
        self.order = order
        self.seed = seed
        if order == "shuffled":
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
            self._perm = rng.permutation(len(dataset))
        else:
            self._perm = None

    @property
    def dim(self):
        return self.dataset.dim

    def index_at(self, t):
        """Dataset position drawn at step t (needed by dual trainers)."""
        if t < 0:
            raise DataError("draw index must be >= 0")
        pos = t % len(self.dataset)
        if self._perm is not None:
            pos = int(self._perm[pos])
        return pos

    def draw(self, t):
        return self.dataset.samples[self.index_at(t)]


def draw(src, t):
    """Module-level alias: t-th sample of any source."""
    return src.draw(t)
