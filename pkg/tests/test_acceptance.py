"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Long-running trend experiments use module-scoped datasets."""

import math
import time

import numpy as np
import pytest

from scalesgd.algorithms import (
    Problem,
    RunConfig,
    dadm_local_solve,
    run,
    run_dadm,
    run_hogwild,
    run_minibatch,
    run_seq_sgd,
    run_ecd_psgd,
)
from scalesgd.data import Dataset, FiniteSource, Sample, SplitSpec, split
from scalesgd.generators import (
    StreamSource,
    StreamSpec,
    diversity_replicate,
    gen_blocked_dataset,
    gen_uniform_dataset,
)
from scalesgd.metrics import c_sim, within_batch_csim
from scalesgd.objective import EPS_ALPHA, DualState, point_loss, point_subgradient
from scalesgd.sweep import SweepConfig, run_sweep, table_and_report


def report(name, ok, detail=""):
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------- fixtures

@pytest.fixture(scope="module")
def realsim_analog():
    """Stand-in for the real-sim corpus: dim 20958, 72309 samples, values in
    (0,1), sparse, topic-blocked with a Zipf-like common vocabulary."""
    ds = gen_blocked_dataset(
        20958, 72309, (0, 1), 86 / 20958, 4, seed=12,
        class_bias=0.9, noise_pool=6000, noise_count=60,
    )
    train, test = split(ds, SplitSpec(0.7, 0.2, seed=2))
    return ds, train, test


@pytest.fixture(scope="module")
def dense_synthetic():
    """High-variance dense dataset: dim 28, U(-4,3) features, ruler labels."""
    ds = gen_uniform_dataset(28, 100000, (-4, 3), 1.0, seed=21)
    train, test = split(ds, SplitSpec(0.7, 0.2, seed=2))
    return train, test


@pytest.fixture(scope="module")
def tiny_problem():
    ds = gen_uniform_dataset(20, 150, (-1, 1), 0.4, seed=7)
    train, test = split(ds, SplitSpec(0.7, 0.2, seed=1))
    return FiniteSource(train), Problem(0.01, train, test)


# ------------------------------------------------------- 1. reductions

def test_reduction_equivalences(tiny_problem):
    src, prob = tiny_problem
    started = time.monotonic()
    kw = dict(gamma=0.1, lam=0.01, seed=3, max_server_iters=300, eval_every=10)
    ref = run_seq_sgd(src, RunConfig("seq_sgd", **kw), prob).to_csv_text()
    same_mb = run_minibatch(src, RunConfig("minibatch", workers=1, **kw), prob).to_csv_text() == ref
    same_hw = run_hogwild(src, RunConfig("hogwild", workers=1, **kw), prob).to_csv_text() == ref
    same_ecd = run_ecd_psgd(src, RunConfig("ecd_psgd", workers=1, **kw), prob).to_csv_text() == ref
    elapsed = time.monotonic() - started
    report(
        "reduction-equivalences",
        same_mb and same_hw and same_ecd and elapsed < 60,
        f"minibatch={same_mb} hogwild={same_hw} ecd={same_ecd} ({elapsed:.1f}s)",
    )


# ------------------------------------------------ 2. gradient correctness

def test_gradient_finite_differences():
    rng = np.random.default_rng(171)
    h = 1e-6
    worst = 0.0
    for _ in range(1000):
        dim = int(rng.integers(1, 10))
        x = rng.normal(size=dim)
        vals = rng.normal(size=dim)
        vals[np.abs(vals) < 0.05] = 0.3
        label = 1.0 if rng.random() < 0.5 else -1.0
        idx = np.nonzero(vals)[0]
        s = Sample(idx, vals[idx], label, dim)
        lam = float(rng.uniform(0, 0.5))
        gi, gv, scale = point_subgradient(x, s, lam)
        g = scale * x.copy()
        g[gi] += gv
        k = int(rng.integers(dim))
        e = np.zeros(dim)
        e[k] = h
        num = (point_loss(x + e, s, lam) - point_loss(x - e, s, lam)) / (2 * h)
        rel = abs(g[k] - num) / max(1.0, abs(num))
        worst = max(worst, rel)
    report("gradient-finite-difference", worst < 1e-6, f"worst rel err {worst:.2e}")


# ---------------------------------------------- 3. metric oracle equivalence

def test_metric_oracle_equivalence():
    rng = np.random.default_rng(72)

    def sample_of(dense_row, dim):
        idx = np.nonzero(dense_row)[0]
        return Sample(idx, dense_row[idx], 1.0, dim)

    def oracle(rows, window):
        n = len(rows)
        total = 0
        for i in range(n):
            for j in range(1, window + 1):
                total += int(np.sum(rows[i] != rows[(i + j) % n]))
        return total / window / n

    exact = True
    for _ in range(200):
        n = int(rng.integers(1, 21))
        dim = int(rng.integers(1, 11))
        rows = [rng.integers(0, 3, size=dim).astype(float) for _ in range(n)]
        window = int(rng.integers(1, n + 1))
        seq = [sample_of(r, dim) for r in rows]
        if c_sim(seq, window) != oracle(rows, window):
            exact = False
            break

    perm_ok = True
    for _ in range(50):
        b = int(rng.integers(1, 9))
        batch = [sample_of(rng.integers(0, 3, size=6).astype(float), 6) for _ in range(b)]
        base = within_batch_csim(batch)
        for _ in range(20):
            p = rng.permutation(b)
            if within_batch_csim([batch[i] for i in p]) != base:
                perm_ok = False
                break
    report("metric-oracle-equivalence", exact and perm_ok,
           f"c_sim exact={exact} permutation-invariant={perm_ok}")


# ------------------------------------------------------- 4. staleness bound

def test_theorem1_staleness(tiny_problem):
    src, prob = tiny_problem
    observed = {}
    for m in (2, 4, 8):
        cfg = RunConfig("hogwild", workers=m, gamma=0.05, lam=0.01, seed=3,
                        max_server_iters=10_000, eval_every=2500)
        observed[m] = run_hogwild(src, cfg, prob).max_staleness
    ok = all(observed[m] == m - 1 for m in observed)
    report("theorem1-staleness", ok, f"max tau per m: {observed}")


# -------------------------------------------------------- 5. dadm soundness

def test_dadm_soundness():
    sub = gen_blocked_dataset(20958, 200, (0, 1), 86 / 20958, 4, seed=12,
                              class_bias=0.9, noise_pool=6000, noise_count=60)
    _, te = split(sub, SplitSpec(0.7, 0.2, seed=2))
    src = FiniteSource(sub)
    prob = Problem(0.01, sub, te)
    gap_ok = True
    detail = []
    for m in (1, 4):
        cfg = RunConfig("dadm", workers=m, local_batch_size=4, lam=0.01, seed=3,
                        max_server_iters=300, eval_every=50, record_gap=True)
        tr = run_dadm(src, cfg, prob)
        gaps = [g for _, g in tr.duality_gaps]
        nonneg = min(gaps) >= -1e-9
        noninc = all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))
        gap_ok = gap_ok and nonneg and noninc
        detail.append(f"m={m} min={min(gaps):.1e} nonneg={nonneg} noninc={noninc}")

    # single-coordinate solve vs 1e-4 brute-force grid, within 1e-3 objective
    dual = DualState(sub, 0.01)
    rng = np.random.default_rng(4)
    for i in range(5):
        dual.apply_update(i, float(rng.uniform(0.2, 0.8)) - dual.alpha[i])
    i = 7
    n_local = len(sub) / 4
    lam_nl = 0.01 * n_local
    s = sub.samples[i]

    def local_objective(d):
        a = min(max(dual.alpha[i] + d, EPS_ALPHA), 1 - EPS_ALPHA)
        conj = a * math.log(a) + (1 - a) * math.log1p(-a)
        v_new = dual.v.copy()
        v_new[s.indices] += (s.label * d / lam_nl) * s.values
        return -conj - 0.5 * lam_nl * float(v_new @ v_new)

    deltas, _ = dadm_local_solve(dual, [i], n_local, passes=1)
    grid = np.arange(EPS_ALPHA - dual.alpha[i], 1 - EPS_ALPHA - dual.alpha[i], 1e-4)
    best_grid = max(local_objective(d) for d in grid)
    solver_val = local_objective(float(deltas[0]))
    solve_ok = solver_val >= best_grid - 1e-3
    detail.append(f"solver-grid delta {solver_val - best_grid:+.2e}")
    report("dadm-soundness", gap_ok and solve_ok, "; ".join(detail))


# ------------------------------------- 6. sparsity / variance trend

def test_sparsity_variance_trend(realsim_analog, dense_synthetic):
    started = time.monotonic()
    _, train, test = realsim_analog
    src = FiniteSource(train, order="shuffled", seed=6)
    prob = Problem(0.01, train, test)
    base = RunConfig("hogwild", gamma=0.1, lam=0.01, seed=3,
                     max_server_iters=20_000, eval_every=100)
    res = run_sweep(SweepConfig(base, [1, 2, 3, 4, 5, 6, 7, 8], "async_cost"),
                    lambda: src, prob)
    iters = {m: res.traces[m].first_iter_reaching(res.epsilon) for m in res.worker_counts}
    growth_pct = (iters[8] - iters[1]) / iters[1]
    sparse_ok = growth_pct < 0.15 and res.metrics[-1] < res.metrics[0] / 4

    dtrain, dtest = dense_synthetic
    dsrc = FiniteSource(dtrain, order="shuffled", seed=5)
    dprob = Problem(0.01, dtrain, dtest)
    dbase = RunConfig("hogwild", gamma=0.2, lam=0.01, worker_minibatch=4, seed=3,
                      max_server_iters=30_000, eval_every=50)
    dres = run_sweep(SweepConfig(dbase, [1, 2, 3, 4, 5, 6, 7, 8], "async_cost"),
                     lambda: dsrc, dprob)
    growths = dres.table.growths
    first_neg = next((k for k, g in enumerate(growths) if g < 0), None)
    dense_ok = (
        dres.report.situation == "negative_growth"
        and dres.report.bound_low <= 8
        and first_neg is not None
        and all(g > 0 for g in growths[:first_neg])
    )
    elapsed = time.monotonic() - started
    report(
        "sparsity-variance-trend",
        sparse_ok and dense_ok and elapsed < 600,
        f"sparse iters m1={iters[1]} m8={iters[8]} (+{100*growth_pct:.1f}%); "
        f"dense growths={growths} bound={dres.report.to_dict()} ({elapsed:.0f}s)",
    )


# --------------------------------------------------- 7. mini-batch trend

def test_minibatch_trend(realsim_analog, dense_synthetic):
    started = time.monotonic()
    dtrain, dtest = dense_synthetic
    dsrc = FiniteSource(dtrain, order="shuffled", seed=5)
    dprob = Problem(0.01, dtrain, dtest)
    at50 = {}
    for m in (2, 3):
        cfg = RunConfig("minibatch", workers=m, gamma=0.1, lam=0.01, seed=3,
                        max_server_iters=50, eval_every=10, draw_stride=3)
        at50[m] = run_minibatch(dsrc, cfg, dprob).loss_at_iter(50)
    example6_ok = at50[3] < at50[2]

    _, train, test = realsim_analog
    src = FiniteSource(train, order="shuffled", seed=6)
    prob = Problem(0.01, train, test)
    fixed_it, ev = 5600, 400
    traces = {}
    for m in range(14, 20):
        cfg = RunConfig("minibatch", workers=m, gamma=0.5, lam=0.01, seed=3,
                        max_server_iters=fixed_it, eval_every=ev, draw_stride=19)
        traces[m] = run_minibatch(src, cfg, prob)
    losses = [traces[m].loss_at_iter(fixed_it) for m in range(14, 20)]
    growths = [losses[i] - losses[i + 1] for i in range(5)]
    # noise tolerance: largest one-eval-step loss movement at the fixed iteration
    tol = max(
        abs(traces[m].loss_at_iter(fixed_it) - traces[m].loss_at_iter(fixed_it - ev))
        for m in range(14, 20)
    )
    positive = all(g > 0 for g in growths)
    noninc = all(growths[i + 1] <= growths[i] + tol for i in range(4))
    elapsed = time.monotonic() - started
    report(
        "minibatch-trend",
        example6_ok and positive and noninc and elapsed < 600,
        f"loss@50 m2={at50[2]:.4f} m3={at50[3]:.4f}; growths(14..19)="
        f"{[round(g, 6) for g in growths]} tol={tol:.1e} ({elapsed:.0f}s)",
    )


# --------------------------------------------------------- 8. LS trend

def test_ls_trend():
    started = time.monotonic()
    mb_wins = 0
    for seed in (101, 102, 103):
        gaps = {}
        for frac in (0.1, 0.9):
            spec = StreamSpec(dim=1000, value_range=(-4, 3), density=1.0,
                              mutation_fraction=frac, seed=seed)
            test = gen_uniform_dataset(1000, 2000, (-4, 3), 1.0, seed ^ 0x5EED)
            train_eval = Dataset(StreamSource(spec).prefix(200), 1000, "prefix")
            prob = Problem(0.01, train_eval, test)
            losses = {}
            for m in (1, 8):
                cfg = RunConfig("minibatch", workers=m, gamma=0.01, lam=0.01, seed=3,
                                max_server_iters=1000, eval_every=200, draw_stride=8)
                losses[m] = run_minibatch(StreamSource(spec), cfg, prob).loss_at_iter(1000)
            gaps[frac] = losses[1] - losses[8]
        mb_wins += gaps[0.9] > gaps[0.1]

    hw_wins = 0
    for seed in (201, 202, 203):
        inflation = {}
        for frac in (0.1, 0.9):
            spec = StreamSpec(dim=1000, value_range=(0, 1), density=0.05,
                              mutation_fraction=frac, seed=seed)
            test = gen_uniform_dataset(1000, 1000, (0, 1), 0.05, seed ^ 0x5EED)
            train_eval = Dataset(StreamSource(spec).prefix(200), 1000, "prefix")
            prob = Problem(0.01, train_eval, test)
            cfg1 = RunConfig("hogwild", workers=1, gamma=0.3, lam=0.01, seed=3,
                             max_server_iters=30_000, eval_every=25)
            tr1 = run_hogwild(StreamSource(spec), cfg1, prob)
            eps = 1.05 * min(r.test_logloss for r in tr1.rows)
            it1 = tr1.first_iter_reaching(eps)
            cfg8 = RunConfig("hogwild", workers=8, gamma=0.3, lam=0.01, seed=3,
                             max_server_iters=30_000, eval_every=25, epsilon_target=eps)
            it8 = run_hogwild(StreamSource(spec), cfg8, prob).first_iter_reaching(eps)
            inflation[frac] = math.inf if it8 is None else it8 / it1
        hw_wins += inflation[0.9] < inflation[0.1]

    elapsed = time.monotonic() - started
    report(
        "ls-trend",
        mb_wins >= 2 and hw_wins >= 2,
        f"minibatch gap wins {mb_wins}/3, hogwild inflation wins {hw_wins}/3 ({elapsed:.0f}s)",
    )


# ------------------------------------------------------ 9. diversity trend

def test_diversity_trend():
    started = time.monotonic()
    mb_wins = 0
    dadm_wins = 0
    for ds_seed, order_seed, split_seed in ((12, 6, 2), (13, 7, 3), (14, 8, 4)):
        base = gen_blocked_dataset(20958, 72309, (0, 1), 86 / 20958, 4, seed=ds_seed,
                                   class_bias=0.9, noise_pool=6000, noise_count=60)
        train, test = split(base, SplitSpec(0.7, 0.2, seed=split_seed))
        variants = [
            train,
            diversity_replicate(train, 4, [0, 0, 1, 1]),
            diversity_replicate(train, 4, [0, 0, 0, 0]),
        ]

        def gaps_and_margins(algorithm, gamma, fixed_it, ev):
            gaps, deltas = [], []
            for tr_ds in variants:
                src = FiniteSource(tr_ds, order="shuffled", seed=order_seed)
                prob = Problem(0.01, tr_ds, test)
                ls, move = {}, {}
                for m in (1, 8):
                    cfg = RunConfig(algorithm, workers=m, gamma=gamma, lam=0.01,
                                    seed=3, local_batch_size=1,
                                    max_server_iters=fixed_it, eval_every=ev,
                                    draw_stride=8)
                    t = run(src, cfg, prob)
                    ls[m] = t.loss_at_iter(fixed_it)
                    move[m] = abs(t.loss_at_iter(fixed_it) - t.loss_at_iter(fixed_it - ev))
                gaps.append(ls[1] - ls[8])
                deltas.append(max(move.values()))
            ok = (gaps[0] - gaps[1] >= max(deltas[0], deltas[1])) and (
                gaps[1] - gaps[2] >= max(deltas[1], deltas[2])
            )
            return ok, gaps

        ok_mb, _ = gaps_and_margins("minibatch", 0.3, 5000, 50)
        ok_dadm, _ = gaps_and_margins("dadm", 0.1, 3000, 100)
        mb_wins += ok_mb
        dadm_wins += ok_dadm

    elapsed = time.monotonic() - started
    report(
        "diversity-trend",
        mb_wins >= 2 and dadm_wins >= 2,
        f"minibatch ordered {mb_wins}/3, dadm ordered {dadm_wins}/3 ({elapsed:.0f}s)",
    )


# ---------------------------------------------- 10. upper-bound detector

def test_upper_bound_detector_fixture():
    _, rep_hog = table_and_report([2, 4, 8, 16], [376, 321, 356, 412], "async_cost")
    _, rep_mb = table_and_report([2, 4, 8, 16], [91, 87, 71, 69], "sync_gain", theta=3.0)
    hog_ok = (rep_hog.bound_low, rep_hog.bound_high, rep_hog.situation) == (
        4, 8, "negative_growth")
    mb_ok = (rep_mb.bound_low, rep_mb.bound_high, rep_mb.situation) == (
        8, 16, "growth_below_theta")
    report("upper-bound-detector", hog_ok and mb_ok,
           f"hogwild={rep_hog.to_dict()} minibatch={rep_mb.to_dict()}")


# --------------------------------------------------------- 11. determinism

def test_determinism(tiny_problem, tmp_path):
    src, prob = tiny_problem
    kw = dict(gamma=0.1, lam=0.01, seed=3, max_server_iters=120, eval_every=20)
    configs = [
        RunConfig("seq_sgd", **kw),
        RunConfig("minibatch", workers=3, **kw),
        RunConfig("hogwild", workers=3, **kw),
        RunConfig("hogwild", workers=3, delay_model="uniform", tau_max=4, **kw),
        RunConfig("ecd_psgd", workers=3, topology="ring", **kw),
        RunConfig("ecd_psgd", workers=3, topology="complete",
                  compression="stochastic_quantize", quantize_bits=6, **kw),
        RunConfig("dadm", workers=3, local_batch_size=2, **kw),
    ]
    runs_ok = all(
        run(src, cfg, prob).to_csv_text() == run(src, cfg, prob).to_csv_text()
        for cfg in configs
    )

    spec = StreamSpec(dim=16, value_range=(0, 1), density=0.5, mutation_fraction=0.4, seed=7)
    stream_prob = Problem(
        0.01,
        Dataset(StreamSource(spec).prefix(50), 16, "p"),
        gen_uniform_dataset(16, 100, (0, 1), 0.5, 99),
    )
    scfg = RunConfig("seq_sgd", **kw)
    stream_ok = (
        run_seq_sgd(StreamSource(spec), scfg, stream_prob).to_csv_text()
        == run_seq_sgd(StreamSource(spec), scfg, stream_prob).to_csv_text()
    )

    base = RunConfig("minibatch", **kw)
    sw = SweepConfig(base, [1, 2], "sync_gain", fixed_iter=120)
    a = run_sweep(sw, lambda: src, prob)
    b = run_sweep(sw, lambda: src, prob)
    sweep_ok = (
        a.table.to_csv_text() == b.table.to_csv_text()
        and a.report.to_json() == b.report.to_json()
        and all(a.traces[m].to_csv_text() == b.traces[m].to_csv_text() for m in (1, 2))
    )
    report("determinism", runs_ok and stream_ok and sweep_ok,
           f"runs={runs_ok} stream={stream_ok} sweep={sweep_ok}")
