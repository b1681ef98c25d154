"""L2-regularized logistic regression: loss, sparse subgradient, dataset
logloss and the dual-side machinery the dual trainer needs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import DataError

EPS_ALPHA = 1e-12  # dual variables live in [EPS_ALPHA, 1 - EPS_ALPHA]


def logloss_scalar(t):
    """log(1 + exp(-t)) without overflow for any finite t."""
    if t >= 0:
        return math.log1p(math.exp(-t))
    return -t + math.log1p(math.exp(t))


def logloss_vec(t):
    return np.logaddexp(0.0, -t)


@dataclass(frozen=True)
class ObjectiveSpec:
    lam: float = 0.01

    def __post_init__(self):
        if self.lam < 0:
            raise DataError(f"lambda must be >= 0, got {self.lam}")


def point_loss(x, s, lam):
    """Regularized loss of one sample: logloss(label * (xi . x)) + lam/2 ||x||^2."""
    t = s.label * s.dot(x)
    reg = 0.5 * lam * float(x @ x) if lam else 0.0
    return logloss_scalar(t) + reg


def point_subgradient(x, s, lam):
    """Gradient of point_loss, split so trainers can keep steps sparse.

    Returns (indices, values, dense_scale): the full gradient is the sparse
    part scattered onto `indices` plus dense_scale * x.
    """
    t = s.label * s.dot(x)
    coef = -s.label * expit(-t)
    return s.indices, coef * s.values, lam


def margin_coefficient(t, label):
    """d/dmargin of the logloss term, folded with the label: the sparse part
    of the gradient is this coefficient times the sample's values."""
    return -label * expit(-t)


def dataset_logloss(x, ds):
    """Mean unregularized logloss over a dataset (the evaluation metric;
    regularization is a training-time device and is excluded so curves stay
    comparable across lambda)."""
    if len(ds) == 0:
        raise DataError("logloss of an empty dataset")
    margins = ds.labels() * ds.csr().dot(x)
    return float(logloss_vec(margins).mean())


def primal_objective(x, ds, lam):
    """Full regularized training objective at x."""
    margins = ds.labels() * ds.csr().dot(x)
    return float(logloss_vec(margins).mean()) + 0.5 * lam * float(x @ x)


def clamp_alpha(a):
    return min(max(a, EPS_ALPHA), 1.0 - EPS_ALPHA)


def logistic_conjugate(a):
    """Convex conjugate of the logloss evaluated at -a:
    a*log(a) + (1-a)*log(1-a), finite on the clamped open interval."""
    if not (0.0 <= a <= 1.0):
        raise DataError(f"conjugate argument outside [0,1]: {a}")
    a = clamp_alpha(a)
    return a * math.log(a) + (1.0 - a) * math.log1p(-a)


def logistic_conjugate_vec(alpha):
    a = np.clip(alpha, EPS_ALPHA, 1.0 - EPS_ALPHA)
    return a * np.log(a) + (1.0 - a) * np.log1p(-a)


class DualState:
    """Dual variables alpha (one per sample, in (0,1)) and the primal-linked
    vector v = (1/(lam*n)) * sum_i alpha_i * label_i * xi_i, maintained
    incrementally."""

    def __init__(self, ds, lam, alpha0=EPS_ALPHA):
        if lam <= 0:
            raise DataError("dual formulation needs lambda > 0")
        self.ds = ds
        self.lam = lam
        self.n = len(ds)
        self.alpha = np.full(self.n, clamp_alpha(alpha0))
        self.v = self._recompute_v()

    def _recompute_v(self):
        v = np.zeros(self.ds.dim)
        scale = 1.0 / (self.lam * self.n)
        for i, s in enumerate(self.ds.samples):
            if s.nnz:
                v[s.indices] += (scale * self.alpha[i] * s.label) * s.values
        return v

    def recompute_v(self):
        return self._recompute_v()

    def apply_update(self, index, delta):
        """Shift alpha[index] by delta, keeping v consistent."""
        new = self.alpha[index] + delta
        if not (0.0 < new < 1.0):
            raise DataError(f"alpha update leaves (0,1): {new}")
        s = self.ds.samples[index]
        self.alpha[index] = new
        if s.nnz:
            self.v[s.indices] += (delta * s.label / (self.lam * self.n)) * s.values

    def dual_objective(self):
        conj = logistic_conjugate_vec(self.alpha)
        return float(-conj.mean()) - 0.5 * self.lam * float(self.v @ self.v)

    def primal_point(self):
        """x recovered from v; identity because the regularizer is 0.5||.||^2."""
        return self.v


def duality_gap(x_from_v, dual, ds=None, lam=None):
    """Primal objective at the dual-derived point minus the dual objective;
    non-negative up to numerical slack by weak duality."""
    ds = ds if ds is not None else dual.ds
    lam = lam if lam is not None else dual.lam
    return primal_objective(x_from_v, ds, lam) - dual.dual_objective()
