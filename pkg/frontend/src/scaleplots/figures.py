"""Render convergence curves and gain-growth charts from the trainer's CSV
and JSON artifacts. Pure consumer: no metric is recomputed here."""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

TRACE_HEADER = ["server_iter", "worker_iters", "pca_time", "train_logloss", "test_logloss"]

# stripping the Software tag keeps PNG bytes identical across reruns
_PNG_METADATA = {"Software": None}


class PlotInputError(Exception):
    pass


def read_trace(path):
    """Load one trace CSV into a dict of numeric columns."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotInputError(f"{path}: empty file") from None
        if header != TRACE_HEADER:
            raise PlotInputError(
                f"{path}: header mismatch, expected {','.join(TRACE_HEADER)}"
            )
        cols = {name: [] for name in header}
        for row in reader:
            if not row:
                continue
            for name, cell in zip(header, row):
                cols[name].append(float(cell))
    if not cols["server_iter"]:
        raise PlotInputError(f"{path}: trace has no rows")
    return cols


def _label_sort_key(label):
    m = re.fullmatch(r"m(\d+)", label)
    return (0, int(m.group(1))) if m else (1, label)


def plot_convergence(trace_paths, out, labels=None, x="server_iter", y="test_logloss",
                     bound_path=None, dpi=100):
    """One curve per trace; legend ordered by worker count when labels look
    like m<k>. Returns the figure after writing the image."""
    if not trace_paths:
        raise PlotInputError("no traces given")
    if labels is None:
        labels = [Path(p).stem for p in trace_paths]
    if len(labels) != len(trace_paths):
        raise PlotInputError("labels must match traces")
    traces = [read_trace(p) for p in trace_paths]
    for p, t in zip(trace_paths, traces):
        for col in (x, y):
            if col not in t:
                raise PlotInputError(f"{p}: no column {col!r}")

    order = sorted(range(len(labels)), key=lambda i: _label_sort_key(labels[i]))
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in order:
        ax.plot(traces[i][x], traces[i][y], label=labels[i])
    ax.set_xlabel("iteration" if x == "server_iter" else x)
    ax.set_ylabel(y.replace("_", " "))
    ax.legend()
    if bound_path:
        bound = read_bound(bound_path)
        if bound["bound_high"] is not None:
            ax.set_title(
                f"scalability bound between {bound['bound_low']} and {bound['bound_high']} workers"
            )
    fig.tight_layout()
    fig.savefig(out, dpi=dpi, metadata=_PNG_METADATA)
    plt.close(fig)
    return fig


def read_gain_growth(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["m", "metric", "gain_growth"]:
            raise PlotInputError(f"{path}: header mismatch, expected m,metric,gain_growth")
        ms, metrics, growths = [], [], []
        for row in reader:
            if not row:
                continue
            ms.append(int(row[0]))
            metrics.append(float(row[1]))
            growths.append(float(row[2]) if row[2] != "" else None)
    if not ms:
        raise PlotInputError(f"{path}: empty table")
    return ms, metrics, growths


def read_bound(path):
    with open(path) as fh:
        bound = json.load(fh)
    for key in ("bound_low", "bound_high", "situation"):
        if key not in bound:
            raise PlotInputError(f"{path}: missing key {key!r}")
    return bound


def plot_gain_growth(table_path, out, bound_path=None, dpi=100):
    """Bar chart of gain growth per worker count; the detected upper-bound
    interval, when bounded, is shaded."""
    ms, _, growths = read_gain_growth(table_path)
    xs = [m for m, g in zip(ms, growths) if g is not None]
    ys = [g for g in growths if g is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(xs, ys, color=["tab:blue" if g >= 0 else "tab:red" for g in ys])
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("workers")
    ax.set_ylabel("gain growth")
    shaded = None
    if bound_path:
        bound = read_bound(bound_path)
        if bound["bound_high"] is not None:
            shaded = (bound["bound_low"], bound["bound_high"])
            ax.axvspan(*shaded, alpha=0.2, color="tab:red")
            ax.set_title(f"upper bound in ({shaded[0]}, {shaded[1]}): {bound['situation']}")
        else:
            ax.set_title(bound["situation"])
    fig.tight_layout()
    fig.savefig(out, dpi=dpi, metadata=_PNG_METADATA)
    plt.close(fig)
    return fig, shaded
