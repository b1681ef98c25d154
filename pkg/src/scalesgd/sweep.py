"""Worker-count sweeps: per-worker cost, gain growth under both accounting
conventions, and detection of the scalability upper bound."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

from .algorithms import ConfigError, DivergedError, RunConfig, run

DEFAULT_THETA = 1e-3  # "close to zero" threshold on logloss growth
DEFAULT_EPSILON_MARGIN = 1.05  # target = margin * best single-worker loss


class TargetNotReachedError(Exception):
    pass


class SweepError(Exception):
    def __init__(self, message, workers=None):
        super().__init__(message)
        self.workers = workers


def cost_to_epsilon(trace, m, epsilon, column="test_logloss"):
    """Iterations per worker to reach the target loss: the asynchronous
    trainer's workers share the server count, synchronous workers all attend
    every server iteration."""
    it = trace.first_iter_reaching(epsilon, column)
    if it is None:
        raise TargetNotReachedError(
            f"target {epsilon} not reached within {trace.final().server_iter} iterations"
        )
    if trace.algorithm == "hogwild":
        return math.ceil(it / m)
    return it


def gain_growth_async(costs):
    """growth(m_i) = cost(m_i) - cost(m_{i+1}); positive means the next
    worker count still pays off."""
    return [costs[i] - costs[i + 1] for i in range(len(costs) - 1)]


def gain_growth_sync(losses):
    """growth(m_i) = loss(m_i) - loss(m_{i+1}) at a fixed iteration."""
    return [losses[i] - losses[i + 1] for i in range(len(losses) - 1)]


@dataclass
class UpperBoundReport:
    bound_low: Optional[int]
    bound_high: Optional[int]
    situation: str  # negative_growth | growth_below_theta | not_reached

    def to_dict(self):
        return {
            "bound_low": self.bound_low,
            "bound_high": self.bound_high,
            "situation": self.situation,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"


def detect_upper_bound(growths, mode, theta, worker_counts):
    """First sweep interval where growth turns negative (async mode) or
    lands in [0, theta) (sync mode); endpoints are always adjacent sweep
    points."""
    if not growths:
        raise SweepError("no growths to inspect")
    if len(growths) != len(worker_counts) - 1:
        raise SweepError("growths must have one entry per adjacent worker-count pair")
    for i, g in enumerate(growths):
        if mode == "async_cost" and g < 0:
            return UpperBoundReport(worker_counts[i], worker_counts[i + 1], "negative_growth")
        if mode == "sync_gain" and 0 <= g < theta:
            return UpperBoundReport(worker_counts[i], worker_counts[i + 1], "growth_below_theta")
    return UpperBoundReport(worker_counts[-1], None, "not_reached")


@dataclass
class GainGrowthTable:
    worker_counts: list
    metrics: list
    growths: list

    def to_csv_text(self):
        lines = ["m,metric,gain_growth"]
        for i, m in enumerate(self.worker_counts):
            metric = self.metrics[i]
            metric_s = str(metric) if isinstance(metric, int) else repr(float(metric))
            if i < len(self.growths):
                g = self.growths[i]
                g_s = str(g) if isinstance(g, int) else repr(float(g))
            else:
                g_s = ""
            lines.append(f"{m},{metric_s},{g_s}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv_text())


def table_and_report(worker_counts, metrics, mode, theta=DEFAULT_THETA):
    """Assemble the growth table and upper-bound report from per-m metrics
    (costs for async mode, fixed-iteration losses for sync mode)."""
    if mode == "async_cost":
        growths = gain_growth_async(metrics)
    elif mode == "sync_gain":
        growths = gain_growth_sync(metrics)
    else:
        raise SweepError(f"unknown sweep mode {mode!r}")
    report = detect_upper_bound(growths, mode, theta, worker_counts) if growths else UpperBoundReport(
        worker_counts[-1], None, "not_reached"
    )
    return GainGrowthTable(list(worker_counts), list(metrics), growths), report


@dataclass
class SweepConfig:
    base: RunConfig
    worker_counts: list
    mode: str  # async_cost | sync_gain
    fixed_iter: Optional[int] = None
    epsilon: Optional[float] = None
    theta: float = DEFAULT_THETA

    def validated(self):
        if not self.worker_counts:
            raise ConfigError("worker_counts must be non-empty")
        if any(m < 1 for m in self.worker_counts):
            raise ConfigError("worker counts must be positive")
        if any(a >= b for a, b in zip(self.worker_counts, self.worker_counts[1:])):
            raise ConfigError("worker_counts must be strictly increasing")
        if self.mode not in ("async_cost", "sync_gain"):
            raise ConfigError(f"unknown sweep mode {self.mode!r}")
        if self.mode == "sync_gain" and self.fixed_iter is None:
            raise ConfigError("sync_gain mode needs fixed_iter")
        if self.theta < 0:
            raise ConfigError("theta must be >= 0")
        return self


@dataclass
class SweepResult:
    worker_counts: list
    metrics: list
    traces: dict
    table: GainGrowthTable
    report: UpperBoundReport
    epsilon: Optional[float] = None


def _cfg_for_workers(base, m, worker_counts=None):
    cfg = replace(base, workers=m)
    if base.algorithm == "minibatch":
        cfg = replace(cfg, batch_size=None)  # re-pin batch to the worker count
    if base.algorithm == "hogwild" and base.delay_model == "round_robin":
        cfg = replace(cfg, tau_max=None)
    if worker_counts is not None and base.draw_stride is None:
        # align draw windows across sweep points: every m reads a prefix of
        # the windows the largest m consumes
        widest = replace(cfg, workers=max(worker_counts), batch_size=None).validated()
        cfg = replace(cfg, draw_stride=widest.consumption_per_step())
    return cfg.validated()


def default_epsilon(base, make_source, problem, worker_counts=None):
    """Dataset-relative target: a small margin above the best loss the
    single-worker baseline attains inside the iteration budget."""
    cfg = replace(
        _cfg_for_workers(base, 1, worker_counts), epsilon_target=None
    )
    trace = run(make_source(), cfg, problem)
    column = "train_logloss" if base.target_train else "test_logloss"
    best = min(getattr(r, column) for r in trace.rows)
    return DEFAULT_EPSILON_MARGIN * best


def run_sweep(sweep, make_source, problem, jobs=1):
    """Run every worker count with the identical seed and draw sequence,
    then assemble the growth table and upper-bound report.

    `make_source` is a zero-argument factory so each run (and each thread)
    gets its own stream cursor; finite sources may be shared and the factory
    can simply return the same object.
    """
    sweep = sweep.validated()
    epsilon = sweep.epsilon
    if sweep.mode == "async_cost" and epsilon is None:
        epsilon = default_epsilon(sweep.base, make_source, problem, sweep.worker_counts)

    def one(m):
        cfg = _cfg_for_workers(sweep.base, m, sweep.worker_counts)
        if sweep.mode == "async_cost":
            cfg = replace(cfg, epsilon_target=epsilon)
        else:
            cfg = replace(cfg, epsilon_target=None, max_server_iters=sweep.fixed_iter)
        try:
            return run(make_source(), cfg, problem)
        except DivergedError as e:
            raise SweepError(f"run with {m} workers diverged at iteration {e.server_iter}", workers=m) from e

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            traces = dict(zip(sweep.worker_counts, pool.map(one, sweep.worker_counts)))
    else:
        traces = {m: one(m) for m in sweep.worker_counts}

    column = "train_logloss" if sweep.base.target_train else "test_logloss"
    metrics = []
    for m in sweep.worker_counts:
        if sweep.mode == "async_cost":
            try:
                metrics.append(cost_to_epsilon(traces[m], m, epsilon, column))
            except TargetNotReachedError as e:
                raise SweepError(f"run with {m} workers: {e}", workers=m) from e
        else:
            metrics.append(traces[m].loss_at_iter(sweep.fixed_iter, column))

    table, report = table_and_report(sweep.worker_counts, metrics, sweep.mode, sweep.theta)
    return SweepResult(list(sweep.worker_counts), metrics, traces, table, report, epsilon)
