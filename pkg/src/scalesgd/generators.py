"""Deterministic dataset generators: ruler-labeled uniform data, mutation
streams with controlled sequence similarity, and diversity-controlled
replications."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DataError, Dataset, Sample

# spawn_key tags keep the per-purpose RNG streams independent
_TAG_SAMPLE = 0
_TAG_FIRST = 1
_TAG_MUTATE = 2


def _rng(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class RulerSpec:
    """Labeling vector (-1, 2, -3, 4, ...): entry k is (-1)^(k+1) * (k+1)."""

    dim: int


def ruler_values(indices):
    """Ruler entries at the given 0-based indices."""
    indices = np.asarray(indices, dtype=np.int64)
    return ((indices % 2) * 2 - 1) * (indices + 1.0)


def ruler_label(xi, ruler=None):
    """sign(xi . ruler) in {-1, +1}; sign(0) maps to +1."""
    if ruler is not None and ruler.dim != xi.dim:
        raise DataError(f"ruler dim {ruler.dim} != sample dim {xi.dim}")
    dot = float(ruler_values(xi.indices) @ xi.values) if xi.nnz else 0.0
    return 1.0 if dot >= 0 else -1.0


def _label_for(indices, values):
    dot = float(ruler_values(indices) @ values) if len(indices) else 0.0
    return 1.0 if dot >= 0 else -1.0


def _support_size(density, dim):
    k = int(math.floor(density * dim + 0.5))
    if k < 1:
        raise DataError(f"density {density} * dim {dim} rounds below one feature")
    return min(k, dim)


def gen_uniform_dataset(dim, n, value_range, density, seed, name=None):
    """n samples with round(density*dim) uniformly chosen support indices,
    values i.i.d. uniform over value_range, ruler labels. Pure in (args, seed).
    """
    low, high = value_range
    if not low < high:
        raise DataError(f"value range must satisfy low < high, got {value_range}")
    if n < 1:
        raise DataError("n must be >= 1")
    k = _support_size(density, dim)
    rng = _rng(seed, _TAG_SAMPLE)
    samples = []
    for _ in range(n):
        idx = rng.choice(dim, size=k, replace=False)
        vals = rng.uniform(low, high, size=k)
        samples.append(Sample(idx, vals, _label_for(idx, vals), dim))
    return Dataset(samples, dim, name=name or f"uniform_d{dim}_n{n}", meta={"seed": seed})


def gen_blocked_dataset(
    dim,
    n,
    value_range,
    density,
    blocks,
    seed,
    class_bias=0.75,
    noise_pool=0,
    noise_count=0,
    name=None,
):
    """Sparse corpus with topic structure, the stand-in for heterogeneous
    real corpora: the b-th contiguous block of samples draws its topical
    support from the b-th contiguous feature region (a corpus sorted by topic
    concentrates vocabulary), and topical features are class-affine the way
    topical vocabulary is.

    Each sample flips a fair label coin, then draws round(class_bias * k) of
    its k topical indices from the features whose parity agrees with the
    label and the rest from the disagreeing ones, so individual features
    carry strong class signal and logistic models fit quickly, as on real
    text. `noise_count` further indices per sample come from a shared pool of
    `noise_pool` class-neutral features at the front of the index range,
    mimicking Zipf-frequent vocabulary: they spread stochastic-gradient noise
    over many coordinates, which is what makes batch-size effects measurable.
    Values are i.i.d. uniform over value_range.
    """
    low, high = value_range
    if not low < high:
        raise DataError(f"value range must satisfy low < high, got {value_range}")
    if blocks < 1 or n < blocks:
        raise DataError("need at least one sample per block")
    if not (0.5 <= class_bias <= 1.0):
        raise DataError(f"class_bias out of [0.5, 1]: {class_bias}")
    if (noise_pool == 0) != (noise_count == 0) or noise_pool < 0 or noise_count < 0:
        raise DataError("noise_pool and noise_count must be given together")
    if noise_count > noise_pool and noise_pool:
        raise DataError("noise_count exceeds noise_pool")
    k_total = _support_size(density, dim)
    if noise_count >= k_total:
        raise DataError("noise_count must leave room for topical support")
    k = k_total - noise_count
    topic_lo = noise_pool
    region = (dim - topic_lo) // blocks
    if 2 * k > region:
        raise DataError(f"support {k} too large for feature region size {region}")
    rng = _rng(seed, _TAG_SAMPLE)
    k_agree = int(math.floor(class_bias * k + 0.5))
    samples = []
    for i in range(n):
        b = min(i * blocks // n, blocks - 1)
        lo = topic_lo + b * region
        hi = dim if b == blocks - 1 else topic_lo + (b + 1) * region
        label = 1.0 if rng.integers(2) else -1.0
        # odd indices lean +1, even lean -1 (the ruler's sign pattern)
        n_odd = (hi - lo) // 2 + (1 if (hi - lo) % 2 and lo % 2 else 0)
        odd0 = lo + (1 - lo % 2)
        even0 = lo + (lo % 2)
        n_even = (hi - lo) - n_odd
        if label > 0:
            agree0, n_agree_pool, other0, n_other_pool = odd0, n_odd, even0, n_even
        else:
            agree0, n_agree_pool, other0, n_other_pool = even0, n_even, odd0, n_odd
        idx_a = agree0 + 2 * rng.choice(n_agree_pool, size=k_agree, replace=False)
        idx_d = other0 + 2 * rng.choice(n_other_pool, size=k - k_agree, replace=False)
        parts = [idx_a, idx_d]
        if noise_count:
            parts.append(rng.choice(noise_pool, size=noise_count, replace=False))
        idx = np.concatenate(parts)
        vals = rng.uniform(low, high, size=k_total)
        samples.append(Sample(idx, vals, label, dim))
    return Dataset(
        samples, dim, name=name or f"blocked_d{dim}_n{n}_b{blocks}", meta={"seed": seed}
    )


@dataclass(frozen=True)
class StreamSpec:
    """Mutation-stream parameterization; sample t is a pure function of
    (spec, t) plus an optional origin for the first sample."""

    dim: int
    value_range: tuple
    density: float
    mutation_fraction: float
    seed: int

    def __post_init__(self):
        low, high = self.value_range
        if not low < high:
            raise DataError(f"value range must satisfy low < high, got {self.value_range}")
        if not (0 < self.density <= 1):
            raise DataError(f"density out of (0,1]: {self.density}")
        if not (0 <= self.mutation_fraction <= 1):
            raise DataError(f"mutation_fraction out of [0,1]: {self.mutation_fraction}")


def first_sample(spec, origin=None, seed=None):
    """Stream seed sample: a seeded draw from `origin` when given, else one
    uniform sample conforming to the spec."""
    seed = spec.seed if seed is None else seed
    if origin is not None:
        if len(origin) == 0:
            raise DataError("origin dataset is empty")
        if origin.dim != spec.dim:
            raise DataError(f"origin dim {origin.dim} != stream dim {spec.dim}")
        rng = _rng(seed, _TAG_FIRST)
        return origin.samples[int(rng.integers(len(origin)))]
    ds = gen_uniform_dataset(
        spec.dim, 1, spec.value_range, spec.density, seed, name="stream_first"
    )
    return ds.samples[0]


def ls_stream_next(prev, spec, t, target_support=None):
    """Sample t of a mutation stream, derived from sample t-1.

    ceil(mutation_fraction*dim) distinct coordinates are redrawn uniformly
    over value_range; for sparse streams (density < 1) coordinates are then
    zeroed uniformly until the support is back to the first sample's size.
    Both draws come from an RNG keyed by (spec.seed, t), so the chain is
    replayable from any prefix.
    """
    if prev.dim != spec.dim:
        raise DataError(f"prev dim {prev.dim} != stream dim {spec.dim}")
    low, high = spec.value_range
    n_mut = int(math.ceil(spec.mutation_fraction * spec.dim))
    rng = _rng(spec.seed, _TAG_MUTATE, t)
    dense = prev.to_dense()
    if n_mut > 0:
        mut_idx = rng.choice(spec.dim, size=n_mut, replace=False)
        dense[mut_idx] = rng.uniform(low, high, size=n_mut)
    if spec.density < 1.0:
        target = target_support if target_support is not None else _support_size(spec.density, spec.dim)
        support = np.nonzero(dense)[0]
        excess = support.size - target
        if excess > 0:
            kill = rng.choice(support.size, size=excess, replace=False)
            dense[support[kill]] = 0.0
    idx = np.nonzero(dense)[0]
    vals = dense[idx]
    return Sample(idx, vals, _label_for(idx, vals), spec.dim)


class StreamSource:
    """Infinite deterministic sample stream; draw(t) is a pure function of
    (spec, origin, t). A forward cache plus periodic checkpoints keep both
    sequential consumption and replays from zero O(1) amortized per draw.
    """

    CHECKPOINT_EVERY = 1024

    def __init__(self, spec, origin=None):
        self.spec = spec
        self.first = first_sample(spec, origin)
        self.target_support = self.first.nnz
        self._checkpoints = {0: self.first}
        self._cache_t = 0
        self._cache = self.first

    @property
    def dim(self):
        return self.spec.dim

    def draw(self, t):
        if t < 0:
            raise DataError("draw index must be >= 0")
        if t >= self._cache_t:
            cur, start = self._cache, self._cache_t
        else:
            start = (t // self.CHECKPOINT_EVERY) * self.CHECKPOINT_EVERY
            while start not in self._checkpoints:
                start -= self.CHECKPOINT_EVERY
            cur = self._checkpoints[start]
        for step in range(start + 1, t + 1):
            cur = ls_stream_next(cur, self.spec, step, target_support=self.target_support)
            if step % self.CHECKPOINT_EVERY == 0:
                self._checkpoints.setdefault(step, cur)
        if t >= self._cache_t:
            self._cache_t, self._cache = t, cur
        return cur

    def prefix(self, n):
        """Materialize samples 0..n-1 (e.g. for sequence-similarity metrics)."""
        return [self.draw(t) for t in range(n)]


def diversity_replicate(ds, parts, pattern):
    """Cut the dataset into `parts` contiguous equal chunks (remainder to the
    last) and concatenate chunks in `pattern` order."""
    if parts < 1:
        raise DataError("parts must be >= 1")
    if len(ds) < parts:
        raise DataError(f"cannot cut {len(ds)} samples into {parts} chunks")
    if not pattern:
        raise DataError("pattern must be non-empty")
    if any(not (0 <= p < parts) for p in pattern):
        raise DataError(f"pattern entries must lie in [0, {parts})")
    base = len(ds) // parts
    chunks = [
        ds.samples[i * base : (i + 1) * base if i < parts - 1 else len(ds)]
        for i in range(parts)
    ]
    out = []
    for p in pattern:
        out.extend(chunks[p])
    label = "".join(str(p) for p in pattern)
    return Dataset(out, ds.dim, name=f"{ds.name}/rep{label}", meta=dict(ds.meta))
