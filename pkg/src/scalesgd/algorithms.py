"""Deterministic simulators of the four parallel trainers plus the
sequential baseline, under the perfect-computer accounting (time is counted
in server iterations; asynchronous time divides by the worker count)."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .data import DataError, Dataset, FiniteSource
from .objective import EPS_ALPHA, DualState, dataset_logloss, duality_gap

_TAG_DELAY = 10
_TAG_QUANT = 11

ALGORITHMS = ("seq_sgd", "hogwild", "minibatch", "dadm", "ecd_psgd")


class ConfigError(Exception):
    pass


class DivergedError(Exception):
    """Training iterate left the finite range; carries the partial trace."""

    def __init__(self, server_iter, trace):
        super().__init__(f"diverged at server iteration {server_iter}")
        self.server_iter = server_iter
        self.trace = trace


@dataclass
class RunConfig:
    algorithm: str
    workers: int = 1
    gamma: float = 0.1
    lam: float = 0.01
    batch_size: Optional[int] = None      # minibatch; pinned to workers
    local_batch_size: int = 1             # dadm per-worker batch
    worker_minibatch: int = 1             # hogwild per-worker batch
    delay_model: str = "round_robin"      # round_robin | uniform
    tau_max: Optional[int] = None         # staleness bound for uniform delay
    topology: str = "ring"                # ring | complete
    compression: str = "identity"         # identity | stochastic_quantize
    quantize_bits: int = 8
    seed: int = 0
    max_server_iters: int = 1000
    eval_every: int = 10
    epsilon_target: Optional[float] = None
    target_train: bool = False            # declare the target on train loss
    dadm_passes: int = 5
    record_gap: bool = False
    # Per-server-step width of the draw window. Defaults to the run's own
    # consumption; sweeps pin it to the largest sweep point's consumption so
    # every worker count reads a prefix of the same windows and cross-m gaps
    # measure parallelism, not sampling luck.
    draw_stride: Optional[int] = None

    def validated(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.gamma < 0 or self.lam < 0:
            raise ConfigError("gamma and lambda must be >= 0")
        if self.max_server_iters < 1 or self.eval_every < 1:
            raise ConfigError("iteration counts must be >= 1")
        cfg = self
        if self.algorithm == "minibatch":
            # one gradient per worker per round: the batch is the worker count
            if self.batch_size is None:
                cfg = replace(cfg, batch_size=self.workers)
            elif self.batch_size != self.workers:
                raise ConfigError("minibatch requires batch_size == workers")
        if self.algorithm == "hogwild":
            if self.delay_model == "round_robin":
                cfg = replace(cfg, tau_max=cfg.workers)
            elif self.delay_model == "uniform":
                if cfg.tau_max is None or cfg.tau_max < 1:
                    raise ConfigError("uniform delay needs tau_max >= 1")
            else:
                raise ConfigError(f"unknown delay model {self.delay_model!r}")
            if cfg.worker_minibatch < 1:
                raise ConfigError("worker_minibatch must be >= 1")
        if self.algorithm == "ecd_psgd":
            if self.topology not in ("ring", "complete"):
                raise ConfigError(f"unknown topology {self.topology!r}")
            if self.compression not in ("identity", "stochastic_quantize"):
                raise ConfigError(f"unknown compression {self.compression!r}")
            if self.compression == "stochastic_quantize" and self.quantize_bits < 1:
                raise ConfigError("quantize_bits must be >= 1")
        if self.algorithm == "dadm" and self.local_batch_size < 1:
            raise ConfigError("local_batch_size must be >= 1")
        if cfg.draw_stride is not None and cfg.draw_stride < cfg.consumption_per_step():
            raise ConfigError("draw_stride smaller than per-step sample consumption")
        return cfg

    def consumption_per_step(self):
        """Samples drawn per server iteration."""
        if self.algorithm == "minibatch":
            return self.batch_size if self.batch_size is not None else self.workers
        if self.algorithm == "hogwild":
            return self.worker_minibatch
        if self.algorithm == "ecd_psgd":
            return self.workers
        if self.algorithm == "dadm":
            return self.workers * self.local_batch_size
        return 1

    def stride(self):
        return self.draw_stride if self.draw_stride is not None else self.consumption_per_step()


@dataclass
class Problem:
    """Objective parameterization plus the evaluation datasets."""

    lam: float
    train: Dataset
    test: Dataset


@dataclass
class TraceRow:
    server_iter: int
    worker_iters: int
    pca_time: float
    train_logloss: float
    test_logloss: float


TRACE_HEADER = "server_iter,worker_iters,pca_time,train_logloss,test_logloss"


class Trace:
    def __init__(self, algorithm, workers):
        self.algorithm = algorithm
        self.workers = workers
        self.rows = []
        self.max_staleness = None
        self.duality_gaps = None  # list of (server_iter, gap) when recorded

    def append(self, row):
        if self.rows and row.server_iter <= self.rows[-1].server_iter:
            raise ValueError("server_iter must be strictly increasing")
        self.rows.append(row)

    def to_csv_text(self):
        lines = [TRACE_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.server_iter},{r.worker_iters},{repr(float(r.pca_time))},"
                f"{repr(float(r.train_logloss))},{repr(float(r.test_logloss))}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv_text())

    @classmethod
    def from_csv(cls, path, algorithm="unknown", workers=1):
        with open(path) as fh:
            header = fh.readline().strip()
            if header != TRACE_HEADER:
                raise DataError(f"{path}: unexpected trace header {header!r}")
            trace = cls(algorithm, workers)
            for line in fh:
                if not line.strip():
                    continue
                si, wi, pt, tr, te = line.strip().split(",")
                trace.append(TraceRow(int(si), int(wi), float(pt), float(tr), float(te)))
        return trace

    def loss_at_iter(self, fixed_iter, column="test_logloss"):
        """Loss at the nearest evaluated server iteration <= fixed_iter."""
        best = None
        for r in self.rows:
            if r.server_iter <= fixed_iter:
                best = r
            else:
                break
        if best is None:
            raise DataError(f"no evaluation at or before iteration {fixed_iter}")
        return getattr(best, column)

    def first_iter_reaching(self, epsilon, column="test_logloss"):
        for r in self.rows:
            if getattr(r, column) <= epsilon:
                return r.server_iter
        return None

    def final(self):
        return self.rows[-1]


def _eval_row(x, j, cfg, problem, trace):
    if not np.all(np.isfinite(x)):
        raise DivergedError(j, trace)
    train_ll = dataset_logloss(x, problem.train)
    test_ll = dataset_logloss(x, problem.test)
    if cfg.algorithm == "hogwild":
        worker_iters = math.ceil(j / cfg.workers) if j else 0
        pca_time = j / cfg.workers
    else:
        worker_iters = j
        pca_time = float(j)
    return TraceRow(j, worker_iters, pca_time, train_ll, test_ll)


def _target_hit(row, cfg):
    if cfg.epsilon_target is None:
        return False
    loss = row.train_logloss if cfg.target_train else row.test_logloss
    return loss <= cfg.epsilon_target


def _sgd_step(x, x_eval, batch, gamma, lam, scratch):
    """One descent update x - gamma * (lam * x_eval + mean sparse grad at
    x_eval). All gradient-descent trainers share this arithmetic path so the
    degenerate single-worker configurations reduce to the sequential
    baseline bit-for-bit."""
    touched = []
    for s in batch:
        t = s.label * s.dot(x_eval)
        coef = -s.label * float(expit(-t))
        if s.nnz:
            scratch[s.indices] += coef * s.values
            touched.append(s.indices)
    scratch /= len(batch)
    x_new = x - gamma * (lam * x_eval + scratch)
    for idx in touched:
        scratch[idx] = 0.0
    return x_new


def _run_descent_family(src, cfg, problem):
    """Shared driver for seq_sgd / minibatch / hogwild."""
    dim = src.dim
    x = np.zeros(dim)
    scratch = np.zeros(dim)
    trace = Trace(cfg.algorithm, cfg.workers)

    hog = cfg.algorithm == "hogwild"
    per_step = cfg.consumption_per_step()
    stride = cfg.stride()

    if hog:
        buf_len = cfg.workers if cfg.delay_model == "round_robin" else cfg.tau_max + 1
        snapshots = np.zeros((buf_len, dim))
        delay_rng = None
        if cfg.delay_model == "uniform":
            delay_rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(_TAG_DELAY,)))
            )
        max_tau = 0

    j = 0
    while True:
        at_eval = j % cfg.eval_every == 0 or j == cfg.max_server_iters
        if at_eval:
            row = _eval_row(x, j, cfg, problem, trace)
            trace.append(row)
            if _target_hit(row, cfg):
                break
        if j == cfg.max_server_iters:
            break
        batch = [src.draw(j * stride + i) for i in range(per_step)]
        if hog:
            snapshots[j % buf_len] = x
            if cfg.delay_model == "round_robin":
                tau = min(j, cfg.workers - 1)
            else:
                tau = min(int(delay_rng.integers(0, cfg.tau_max + 1)), j)
            max_tau = max(max_tau, tau)
            x_eval = snapshots[(j - tau) % buf_len]
        else:
            x_eval = x
        x = _sgd_step(x, x_eval, batch, cfg.gamma, cfg.lam, scratch)
        j += 1

    if hog:
        trace.max_staleness = max_tau
    return trace


def run_seq_sgd(src, cfg, problem):
    cfg = cfg.validated()
    if cfg.algorithm != "seq_sgd":
        cfg = replace(cfg, algorithm="seq_sgd", workers=1).validated()
    return _run_descent_family(src, cfg, problem)


def run_minibatch(src, cfg, problem):
    cfg = cfg.validated()
    return _run_descent_family(src, cfg, problem)


def run_hogwild(src, cfg, problem):
    cfg = cfg.validated()
    return _run_descent_family(src, cfg, problem)


def mixing_matrix(topology, m):
    """Doubly stochastic symmetric mixing weights on the topology edges."""
    if m < 1:
        raise ConfigError("worker count must be >= 1")
    if m == 1:
        return np.ones((1, 1))
    if topology == "complete":
        return np.full((m, m), 1.0 / m)
    if topology == "ring":
        if m == 2:
            return np.full((2, 2), 0.5)
        w = np.zeros((m, m))
        third = 1.0 / 3.0
        for i in range(m):
            w[i, i] = third
            w[i, (i + 1) % m] += third
            w[i, (i - 1) % m] += third
        return w
    raise ConfigError(f"unknown topology {topology!r}")


def stochastic_quantize(z, bits, rng):
    """Unbiased stochastic grid quantization: coordinates round to one of
    2^bits - 1 levels of |z|max with probabilities that keep E[C(z)] = z."""
    m = float(np.max(np.abs(z))) if z.size else 0.0
    if m == 0.0:
        return z.copy()
    levels = float(2**bits - 1)
    u = np.abs(z) / m * levels
    lo = np.floor(u)
    frac = u - lo
    bump = rng.random(z.shape) < frac
    return np.sign(z) * ((lo + bump) * (m / levels))


def run_ecd_psgd(src, cfg, problem):
    """Gossip trainer with extrapolated compressed neighbor estimates.

    Per lockstep round t (1-based): every worker takes a gradient at its own
    model, averages neighbor estimates through the mixing matrix, steps,
    extrapolates z = (1 - t/2) x_t + (t/2) x_{t+1}, and broadcasts the
    compressed z; estimates update as y <- (1 - 2/t) y + (2/t) C(z). The
    evaluated model is the worker average.
    """
    cfg = cfg.validated()
    if cfg.workers == 1 and cfg.compression == "identity":
        # exact degenerate case: y tracks x identically, so the round is a
        # plain sequential step; run it there to keep traces bit-identical
        seq = replace(cfg, algorithm="seq_sgd", workers=1).validated()
        trace = _run_descent_family(src, seq, problem)
        trace.algorithm = "ecd_psgd"
        return trace

    m = cfg.workers
    dim = src.dim
    w_mat = mixing_matrix(cfg.topology, m)
    x_nodes = np.zeros((m, dim))
    y_est = np.zeros((m, dim))  # shared consensus estimates of each worker's y
    quant_rng = None
    if cfg.compression == "stochastic_quantize":
        quant_rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(_TAG_QUANT,)))
        )
    trace = Trace(cfg.algorithm, m)
    consensus_spread = 0.0

    k = 0
    while True:
        at_eval = k % cfg.eval_every == 0 or k == cfg.max_server_iters
        if at_eval:
            x_bar = x_nodes.mean(axis=0)
            consensus_spread = max(consensus_spread, float(np.max(np.abs(x_nodes - x_bar))))
            row = _eval_row(x_bar, k, cfg, problem, trace)
            trace.append(row)
            if _target_hit(row, cfg):
                break
        if k == cfg.max_server_iters:
            break
        t = k + 1  # algorithm round counter starts at 1
        stride = cfg.stride()
        grads = np.empty((m, dim))
        for i in range(m):
            s = src.draw(k * stride + i)
            gi = cfg.lam * x_nodes[i]
            margin = s.label * s.dot(x_nodes[i])
            coef = -s.label * float(expit(-margin))
            if s.nnz:
                gi[s.indices] += coef * s.values
            grads[i] = gi
        x_half = w_mat @ y_est
        x_next = x_half - cfg.gamma * grads
        z = (1.0 - t / 2.0) * x_nodes + (t / 2.0) * x_next
        if cfg.compression == "identity":
            z_c = z
        else:
            z_c = np.stack([stochastic_quantize(z[i], cfg.quantize_bits, quant_rng) for i in range(m)])
        y_est = (1.0 - 2.0 / t) * y_est + (2.0 / t) * z_c
        x_nodes = x_next
        k += 1
    trace.consensus_spread = consensus_spread
    return trace


def _conjugate_value(a):
    a = min(max(a, EPS_ALPHA), 1.0 - EPS_ALPHA)
    return a * math.log(a) + (1.0 - a) * math.log1p(-a)


def _solve_coordinate(a, sv, sq_norm, lam_nl):
    """Maximize -conj(a + d) - y xi . v_run * d - ||xi||^2 d^2 / (2 lam_nl)
    over d keeping a + d inside the clamped open interval.

    `sv` is label * (xi . v_run), `sq_norm` is ||xi||^2, lam_nl = lam * n/m.
    The derivative -log((a+d)/(1-a-d)) - sv - sq_norm*d/lam_nl is strictly
    decreasing, so a bracketed Newton iteration cannot miss the maximizer.
    """
    lo = EPS_ALPHA - a
    hi = (1.0 - EPS_ALPHA) - a
    q = sq_norm / lam_nl

    def deriv(d):
        ad = a + d
        return -math.log(ad / (1.0 - ad)) - sv - q * d

    d_lo = deriv(lo)
    if d_lo <= 0.0:
        return lo
    d_hi = deriv(hi)
    if d_hi >= 0.0:
        return hi
    d = 0.0
    if not (lo < d < hi):
        d = 0.5 * (lo + hi)
    b_lo, b_hi = lo, hi
    for _ in range(100):
        ad = a + d
        g = -math.log(ad / (1.0 - ad)) - sv - q * d
        if abs(g) < 1e-13:
            return d
        if g > 0.0:
            b_lo = d
        else:
            b_hi = d
        h = -1.0 / ad - 1.0 / (1.0 - ad) - q
        d_new = d - g / h
        if not (b_lo < d_new < b_hi):
            d_new = 0.5 * (b_lo + b_hi)
        if d_new == d:
            return d
        d = d_new
    return d


def dadm_local_solve(dual, q_indices, n_local, passes=5, track_objective=False):
    """One worker's approximate maximization of its local dual subproblem:
    cyclic coordinate sweeps with safeguarded Newton on each 1-d slice.

    Returns (deltas aligned with q_indices, delta_v_local). The quadratic
    term carries scale lam * n_local, so adding full-weight updates across
    workers keeps the global dual ascending.
    """
    lam = dual.lam
    lam_nl = lam * n_local
    v_run = dual.v.copy()
    deltas = np.zeros(len(q_indices))
    objectives = []

    def local_objective():
        quad = -0.5 * lam_nl * float(v_run @ v_run)
        conj = -sum(
            _conjugate_value(dual.alpha[i] + deltas[p]) for p, i in enumerate(q_indices)
        )
        return conj + quad

    for _ in range(passes):
        for pos, i in enumerate(q_indices):
            s = dual.ds.samples[i]
            if s.nnz == 0:
                continue
            a_cur = dual.alpha[i] + deltas[pos]
            sv = s.label * s.dot(v_run)
            sq = float(s.values @ s.values)
            d = _solve_coordinate(a_cur, sv, sq, lam_nl)
            if d != 0.0:
                deltas[pos] += d
                v_run[s.indices] += (s.label * d / lam_nl) * s.values
        if track_objective:
            objectives.append(local_objective())

    delta_v = np.zeros(dual.ds.dim)
    for pos, i in enumerate(q_indices):
        s = dual.ds.samples[i]
        if deltas[pos] != 0.0 and s.nnz:
            delta_v[s.indices] += (s.label * deltas[pos] / lam_nl) * s.values
    if track_objective:
        return deltas, delta_v, objectives
    return deltas, delta_v


def run_dadm(src, cfg, problem):
    """Distributed dual coordinate trainer: per round every worker solves an
    aggressively-scaled local dual subproblem on its own batch; the server
    folds the scaled local vector updates back (1/m of the n/m-scaled
    updates, i.e. full-weight coordinate moves on the global dual)."""
    cfg = cfg.validated()
    if not isinstance(src, FiniteSource):
        raise ConfigError("dadm needs a finite sample source (dual variables are per-sample)")
    ds = src.dataset
    n = len(ds)
    m = cfg.workers
    if m > n:
        raise ConfigError("more workers than samples")
    dual = DualState(ds, cfg.lam)
    n_local = n / m
    stride = cfg.stride()
    trace = Trace(cfg.algorithm, m)
    gaps = [] if cfg.record_gap else None

    k = 0
    while True:
        at_eval = k % cfg.eval_every == 0 or k == cfg.max_server_iters
        if at_eval:
            row = _eval_row(dual.primal_point(), k, cfg, problem, trace)
            trace.append(row)
            if _target_hit(row, cfg):
                break
        if gaps is not None:
            gaps.append((k, duality_gap(dual.primal_point(), dual)))
        if k == cfg.max_server_iters:
            break
        base = k * stride
        updates = {}
        for w in range(m):
            q = [src.index_at(base + w * cfg.local_batch_size + r) for r in range(cfg.local_batch_size)]
            deltas, _ = dadm_local_solve(dual, q, n_local, passes=cfg.dadm_passes)
            for pos, i in enumerate(q):
                updates[i] = updates.get(i, 0.0) + float(deltas[pos])
        for i, total in updates.items():
            effective = min(max(dual.alpha[i] + total, EPS_ALPHA), 1.0 - EPS_ALPHA) - dual.alpha[i]
            if effective != 0.0:
                dual.apply_update(i, effective)
        k += 1

    if gaps is not None:
        trace.duality_gaps = gaps
    return trace


def run(src, cfg, problem):
    """Dispatch on cfg.algorithm."""
    cfg = cfg.validated()
    fn = {
        "seq_sgd": run_seq_sgd,
        "hogwild": run_hogwild,
        "minibatch": run_minibatch,
        "dadm": run_dadm,
        "ecd_psgd": run_ecd_psgd,
    }[cfg.algorithm]
    return fn(src, cfg, problem)
