"""
LIBSVM ingestion, row normalisation, synthetic datasets and CSV exports.

CSV files use a header row, comma separators and LF line endings. Floats
are written with ``repr`` so that they parse back to the same doubles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class DatasetMeta:
    N: int
    d: int
    density: float
    normalized: bool

    def __post_init__(self):
        if self.N < 1 or self.d < 1:
            raise ValueError("need N >= 1 and d >= 1")
        if not 0 <= self.density <= 1:
            raise ValueError("density must lie in [0, 1]")


@dataclass(frozen=True)
class Dataset:
    """Rows of `features` (CSR, N x d) are the samples; `labels` are +-1."""

    features: sp.csr_matrix
    labels: np.ndarray
    meta: DatasetMeta


def _meta(A, normalized):
    N, d = A.shape
    return DatasetMeta(N, d, A.nnz / float(N * d), normalized)


def read_libsvm(path, n_features=None) -> Dataset:
    """
    Parse a LIBSVM text file ("label idx:val idx:val ...", 1-based indices).

    Labels {0, 1} are mapped to {-1, +1}. The dimension is the largest index
    seen unless `n_features` is given.
    """
    rows, cols, vals, labels = [], [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                label = float(tokens[0])
            except ValueError:
                raise ValueError(f"line {lineno}: bad label {tokens[0]!r}") from None
            prev = 0
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                try:
                    j, v = int(idx), float(val)
                except ValueError:
                    raise ValueError(f"line {lineno}: bad feature {tok!r}") from None
                if not sep or j < 1:
                    raise ValueError(f"line {lineno}: bad feature {tok!r}")
                if j <= prev:
                    raise ValueError(f"line {lineno}: indices must be ascending")
                prev = j
                rows.append(len(labels))
                cols.append(j - 1)
                vals.append(v)
            labels.append(label)
    if not labels:
        raise ValueError(f"{path}: no samples")
    labels = np.array(labels)
    kinds = set(np.unique(labels).tolist())
    if kinds <= {-1.0, 1.0}:
        pass
    elif kinds <= {0.0, 1.0}:
        labels = 2.0 * labels - 1.0
    else:
        raise ValueError(f"{path}: labels must be binary, found {sorted(kinds)}")
    d = max(cols, default=-1) + 1
    if n_features is not None:
        if n_features < d:
            raise ValueError(f"{path}: index {d} exceeds n_features={n_features}")
        d = int(n_features)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(labels), max(d, 1)))
    A.sort_indices()
    return Dataset(A, labels, _meta(A, False))


def write_libsvm(dataset: Dataset, path) -> None:
    A = sp.csr_matrix(dataset.features)
    A.sort_indices()
    with open(path, "w", newline="\n") as fh:
        for i, b in enumerate(dataset.labels):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            feats = " ".join(f"{j + 1}:{v!r}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi].tolist()))
            fh.write(f"{int(b):+d} {feats}".rstrip() + "\n")


def normalize_rows(features):
    """
    Scale every non-zero row to unit l2 norm.

    Returns the normalised CSR matrix and the indices of all-zero rows,
    which are left as they are.
    """
    A = sp.csr_matrix(features, dtype=float, copy=True)
    norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).reshape(-1))
    zero = np.flatnonzero(norms == 0)
    scale = np.ones_like(norms)
    scale[norms > 0] = 1.0 / norms[norms > 0]
    A = sp.csr_matrix(sp.diags(scale) @ A)
    return A, zero


def normalize_dataset(ds: Dataset) -> Dataset:
    A, _ = normalize_rows(ds.features)
    return Dataset(A, ds.labels, _meta(A, True))


def synth_dataset(N, d, density=0.2, noise=0.0, seed=0) -> Dataset:
    """
    Gaussian features with a random sparsity mask, rows normalised, and
    labels sign(<w, a_n>) from a planted Gaussian w, each flipped with
    probability `noise`. Every row keeps at least one non-zero.
    """
    if N < 1 or d < 1:
        raise ValueError("need N >= 1 and d >= 1")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    if not 0 <= noise < 0.5:
        raise ValueError("noise must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, d))
    mask = rng.random((N, d)) < density
    mask[np.arange(N), rng.integers(d, size=N)] = True
    X *= mask
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    w = rng.standard_normal(d)
    margin = X @ w
    labels = np.where(margin >= 0, 1.0, -1.0)
    flip = rng.random(N) < noise
    labels[flip] *= -1
    A = sp.csr_matrix(X)
    return Dataset(A, labels, _meta(A, True))


# -- CSV exports --------------------------------------------------------------

def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def export_history_csv(history, envelope, path) -> None:
    """Columns k, bound, measured: one row per recorded point (K+1 rows)."""
    from .analysis import measured_series

    measured = measured_series(history, envelope.interpretation)
    k = np.arange(measured.shape[0])
    bound = envelope(k)
    with open(path, "w", newline="") as fh:
        out = _writer(fh)
        out.writerow(["k", "bound", "measured"])
        for row in zip(k.tolist(), bound.tolist(), measured.tolist()):
            out.writerow([row[0], repr(row[1]), repr(row[2])])


def read_history_csv(path):
    """Return arrays (k, bound, measured) from an exported history."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["k", "bound", "measured"]:
            raise ValueError(f"{path}: expected header k,bound,measured, got {header}")
        k, bound, measured = [], [], []
        for lineno, row in enumerate(reader, 2):
            if len(row) != 3:
                raise ValueError(f"{path}: line {lineno} has {len(row)} fields")
            try:
                k.append(int(row[0]))
                bound.append(float(row[1]))
                measured.append(float(row[2]))
            except ValueError:
                raise ValueError(f"{path}: line {lineno} is not numeric") from None
    if not k:
        raise ValueError(f"{path}: no data rows")
    return np.array(k), np.array(bound), np.array(measured)


def export_delays_csv(stats, path) -> None:
    """Columns worker, mean, std, max: one row per worker."""
    with open(path, "w", newline="") as fh:
        out = _writer(fh)
        out.writerow(["worker", "mean", "std", "max"])
        for w, mean, std, mx in stats.rows():
            out.writerow([w, repr(mean), repr(std), mx])


def read_delays_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["worker", "mean", "std", "max"]:
            raise ValueError(f"{path}: expected header worker,mean,std,max")
        return [(int(r[0]), float(r[1]), float(r[2]), int(r[3])) for r in reader]
