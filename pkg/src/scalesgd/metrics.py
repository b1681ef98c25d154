"""Dataset-character indices: sampling-sequence similarity, feature
statistics, sparsity/density and sample diversity."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import DataError


def l0_distance(a, b, tol=0.0):
    """Number of coordinates where two sparse samples differ.

    Sparse-aware: walks the union of supports and counts unequal values;
    with tol > 0, values closer than tol count as equal (for ingested float
    data; generators emit exactly-representable values so the default is
    exact comparison).
    """
    ai, av = a.indices, a.values
    bi, bv = b.indices, b.values
    if ai.size == 0 and bi.size == 0:
        return 0
    common, ka, kb = np.intersect1d(ai, bi, assume_unique=True, return_indices=True)
    if tol == 0.0:
        equal_on_common = int(np.count_nonzero(av[ka] == bv[kb]))
    else:
        equal_on_common = int(np.count_nonzero(np.abs(av[ka] - bv[kb]) <= tol))
    # |supp(a) Δ supp(b)| + |{k in common : a_k != b_k}|
    return int(ai.size + bi.size - common.size - equal_on_common)


def c_sim(seq, range_, tol=0.0):
    """Mean l0 distance from each sample to its next `range_` successors,
    cyclic over the sequence, averaged over the window then the sequence.
    """
    seq = list(seq)
    n = len(seq)
    if n == 0:
        raise DataError("c_sim of an empty sequence")
    if range_ < 1:
        raise DataError("range must be >= 1")
    total = 0
    for i in range(n):
        for j in range(1, range_ + 1):
            total += l0_distance(seq[i], seq[(i + j) % n], tol=tol)
    return total / range_ / n


def ls_async(seq, tau_max, tol=0.0):
    """Sequence similarity index for asynchronous trainers: c_sim at the
    staleness window."""
    return c_sim(seq, tau_max, tol=tol)


def within_batch_csim(batch, tol=0.0):
    """Mean pairwise l0 distance over all ordered pairs of a batch,
    self-pairs included (divisor b^2).

    This is the batch's similarity index for synchronous trainers: with the
    window equal to the batch length, the cyclic sum visits every member once
    for every anchor, so the value is the same for every ordering of the
    batch and no explicit maximization over orderings is needed.
    """
    batch = list(batch)
    b = len(batch)
    if b == 0:
        raise DataError("within_batch_csim of an empty batch")
    total = 0
    for i in range(b):
        for k in range(i + 1, b):
            total += 2 * l0_distance(batch[i], batch[k], tol=tol)
    return total / (b * b)


def ls_sync(batches, tol=0.0):
    """Max within-batch similarity index over a batched sampling sequence."""
    batches = list(batches)
    if not batches:
        raise DataError("ls_sync needs at least one batch")
    return max(within_batch_csim(b, tol=tol) for b in batches)


def feature_stats(ds):
    """Per-feature mean and population variance (divisor n); absent sparse
    entries count as zero."""
    n = len(ds)
    if n == 0:
        raise DataError("feature_stats of an empty dataset")
    dim = ds.dim
    sums = np.zeros(dim)
    for s in ds.samples:
        np.add.at(sums, s.indices, s.values)
    means = sums / n
    # Two-pass: var_k = [ (n - nnz_k) * mean_k^2 + sum_{support} (v - mean_k)^2 ] / n
    nnz = np.zeros(dim, dtype=np.int64)
    sq = np.zeros(dim)
    for s in ds.samples:
        np.add.at(nnz, s.indices, 1)
        np.add.at(sq, s.indices, (s.values - means[s.indices]) ** 2)
    variances = ((n - nnz) * means**2 + sq) / n
    return means, variances


def density(ds):
    """Fraction of stored (non-zero) entries; sparsity is 1 - density."""
    n = len(ds)
    if n == 0 or ds.dim == 0:
        return 0.0
    return sum(s.nnz for s in ds.samples) / (n * ds.dim)


def diversity(ds):
    """Number of distinct (features, label) samples under exact equality.

    Keys are canonical-serialization hashes; Python's dict/set semantics
    confirm full equality on hash collision.
    """
    return len({s.key() for s in ds.samples})


@dataclass
class CharacterReport:
    n: int
    dim: int
    density: float
    sparsity: float
    feature_means: np.ndarray
    feature_variances: np.ndarray
    mean_feature_variance: float
    diversity: int
    ls_async: Optional[float] = None
    ls_sync: Optional[float] = None

    def to_dict(self, full=False):
        out = {
            "n": self.n,
            "dim": self.dim,
            "density": self.density,
            "sparsity": self.sparsity,
            "mean_feature_variance": self.mean_feature_variance,
            "diversity": self.diversity,
            "ls_async": self.ls_async,
            "ls_sync": self.ls_sync,
        }
        if full:
            out["feature_means"] = self.feature_means.tolist()
            out["feature_variances"] = self.feature_variances.tolist()
        return out

    def to_json(self, full=False):
        return json.dumps(self.to_dict(full=full), indent=2, sort_keys=False)


def character_report(ds, tau_max=None, batch_size=None, tol=0.0):
    """Full dataset-character report; the LS fields are filled only when
    their windows (tau_max for async, batch_size for sync) are given."""
    means, variances = feature_stats(ds)
    dens = density(ds)
    report = CharacterReport(
        n=len(ds),
        dim=ds.dim,
        density=dens,
        sparsity=1.0 - dens,
        feature_means=means,
        feature_variances=variances,
        mean_feature_variance=float(variances.mean()),
        diversity=diversity(ds),
    )
    if tau_max is not None:
        report.ls_async = ls_async(ds.samples, tau_max, tol=tol)
    if batch_size is not None:
        chunks = [
            ds.samples[i : i + batch_size] for i in range(0, len(ds), batch_size)
        ]
        report.ls_sync = ls_sync(chunks, tol=tol)
    return report
