"""Command-line front end: generate datasets, compute character reports,
run single trainings, and run worker-count sweeps from JSON experiment
configs."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import jsonschema

from . import generators
from .algorithms import ConfigError, DivergedError, Problem, RunConfig, run
from .data import DataError, FiniteSource, SplitSpec, load_dense_csv, load_svmlight, split
from .metrics import character_report
from .sweep import (
    SweepConfig,
    SweepError,
    TargetNotReachedError,
    run_sweep,
    table_and_report,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_TARGET = 5

_VALUE_RANGE = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 2,
    "maxItems": 2,
}

_GENERATOR_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["uniform", "blocked", "stream", "replicate"]},
        "dim": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "value_range": _VALUE_RANGE,
        "density": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "mutation_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "seed": {"type": "integer"},
        "blocks": {"type": "integer", "minimum": 1},
        "origin_path": {"type": "string"},
        "test_size": {"type": "integer", "minimum": 1},
        "draws": {"type": "integer", "minimum": 1},
        "base": {"type": "object"},
        "parts": {"type": "integer", "minimum": 1},
        "pattern": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "name": {"type": "string"},
    },
    "required": ["kind"],
}

_DATASET_SCHEMA = {
    "type": "object",
    "properties": {
        "path": {"type": "string"},
        "format": {"enum": ["svmlight", "csv"]},
        "label_column": {"type": "integer", "minimum": 0},
        "generator": _GENERATOR_SCHEMA,
        "order": {"enum": ["as_stored", "shuffled"]},
        "order_seed": {"type": "integer"},
        "name": {"type": "string"},
    },
    "oneOf": [{"required": ["path"]}, {"required": ["generator"]}],
}

_RUN_SCHEMA = {
    "type": "object",
    "properties": {
        "algorithm": {"enum": ["seq_sgd", "hogwild", "minibatch", "dadm", "ecd_psgd"]},
        "workers": {"type": "integer", "minimum": 1},
        "gamma": {"type": "number", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "local_batch_size": {"type": "integer", "minimum": 1},
        "worker_minibatch": {"type": "integer", "minimum": 1},
        "delay_model": {"enum": ["round_robin", "uniform"]},
        "tau_max": {"type": "integer", "minimum": 1},
        "topology": {"enum": ["ring", "complete"]},
        "compression": {"enum": ["identity", "stochastic_quantize"]},
        "quantize_bits": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "max_server_iters": {"type": "integer", "minimum": 1},
        "eval_every": {"type": "integer", "minimum": 1},
        "epsilon_target": {"type": "number"},
        "target_train": {"type": "boolean"},
        "dadm_passes": {"type": "integer", "minimum": 0},
    },
    "required": ["algorithm"],
}

_SWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        "worker_counts": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
        },
        "mode": {"enum": ["async_cost", "sync_gain"]},
        "fixed_iter": {"type": "integer", "minimum": 1},
        "epsilon": {"type": "number"},
        "theta": {"type": "number", "minimum": 0},
        "fixture": {
            "type": "object",
            "properties": {
                "metrics": {"type": "array", "items": {"type": "number"}, "minItems": 1}
            },
            "required": ["metrics"],
        },
    },
    "required": ["worker_counts", "mode"],
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "dataset": _DATASET_SCHEMA,
        "split": {
            "type": "object",
            "properties": {
                "train_fraction": {"type": "number"},
                "test_fraction": {"type": "number"},
                "seed": {"type": "integer"},
            },
            "required": ["train_fraction", "test_fraction"],
        },
        "objective": {
            "type": "object",
            "properties": {"lambda": {"type": "number", "minimum": 0}},
        },
        "run": _RUN_SCHEMA,
        "sweep": _SWEEP_SCHEMA,
        "output_dir": {"type": "string"},
    },
}


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"config schema violation at {list(e.absolute_path)}: {e.message}") from None


def _data_path(p):
    root = os.environ.get("SCALESGD_DATA_DIR")
    path = Path(p)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _load_dataset_file(section):
    path = _data_path(section["path"])
    fmt = section.get("format")
    if fmt is None:
        fmt = "csv" if str(path).endswith(".csv") else "svmlight"
    if fmt == "csv":
        return load_dense_csv(path, section.get("label_column", 0), name=section.get("name"))
    return load_svmlight(path, name=section.get("name"))


def _build_generated(gen, seed_override=None):
    kind = gen["kind"]
    seed = seed_override if seed_override is not None else gen.get("seed", 0)
    if kind == "uniform":
        return generators.gen_uniform_dataset(
            gen["dim"], gen["n"], tuple(gen["value_range"]), gen["density"], seed,
            name=gen.get("name"),
        )
    if kind == "blocked":
        return generators.gen_blocked_dataset(
            gen["dim"], gen["n"], tuple(gen["value_range"]), gen["density"],
            gen["blocks"], seed, name=gen.get("name"),
        )
    if kind == "replicate":
        base_section = gen["base"]
        if "path" in base_section:
            base = _load_dataset_file(base_section)
        else:
            base = _build_generated(base_section["generator"], seed_override)
        return generators.diversity_replicate(base, gen["parts"], gen["pattern"])
    raise ConfigError(f"generator kind {kind!r} cannot be materialized here")


def _stream_spec(gen, seed_override=None):
    seed = seed_override if seed_override is not None else gen.get("seed", 0)
    return generators.StreamSpec(
        dim=gen["dim"],
        value_range=tuple(gen["value_range"]),
        density=gen["density"],
        mutation_fraction=gen["mutation_fraction"],
        seed=seed,
    )


def _split_spec(cfg):
    s = cfg.get("split", {"train_fraction": 0.7, "test_fraction": 0.2, "seed": 0})
    return SplitSpec(s["train_fraction"], s["test_fraction"], s.get("seed", 0))


def _run_config(cfg, seed_override=None):
    r = dict(cfg["run"])
    lam = cfg.get("objective", {}).get("lambda", 0.01)
    if seed_override is not None:
        r["seed"] = seed_override
    return RunConfig(
        algorithm=r["algorithm"],
        workers=r.get("workers", 1),
        gamma=r.get("gamma", 0.1),
        lam=lam,
        batch_size=r.get("batch_size"),
        local_batch_size=r.get("local_batch_size", 1),
        worker_minibatch=r.get("worker_minibatch", 1),
        delay_model=r.get("delay_model", "round_robin"),
        tau_max=r.get("tau_max"),
        topology=r.get("topology", "ring"),
        compression=r.get("compression", "identity"),
        quantize_bits=r.get("quantize_bits", 8),
        seed=r.get("seed", 0),
        max_server_iters=r.get("max_server_iters", 1000),
        eval_every=r.get("eval_every", 10),
        epsilon_target=r.get("epsilon_target"),
        target_train=r.get("target_train", False),
        dadm_passes=r.get("dadm_passes", 5),
    ).validated()


_STREAM_TEST_SEED_SALT = 0x5EED
_STREAM_EVAL_PREFIX = 2000


def prepare_experiment(cfg, seed_override=None):
    """Resolve the dataset section into (source factory, Problem).

    Finite datasets are split and shared; stream sources get an i.i.d. test
    set drawn from the same spec and use a materialized stream prefix as the
    train-side evaluation set.
    """
    if "run" not in cfg:
        raise ConfigError("config needs a run section")
    run_cfg = _run_config(cfg, seed_override)
    section = cfg["dataset"]
    gen = section.get("generator")

    if gen is not None and gen["kind"] == "stream":
        spec = _stream_spec(gen, seed_override)
        origin = None
        if "origin_path" in gen:
            origin = _load_dataset_file({"path": gen["origin_path"]})
        probe = generators.StreamSource(spec, origin=origin)
        test_size = gen.get("test_size") or max(200, round(0.2 * run_cfg.max_server_iters))
        test = generators.gen_uniform_dataset(
            spec.dim, test_size, spec.value_range, spec.density,
            spec.seed ^ _STREAM_TEST_SEED_SALT, name="stream_test",
        )
        prefix = probe.prefix(min(_STREAM_EVAL_PREFIX, run_cfg.max_server_iters))
        from .data import Dataset

        train_eval = Dataset(prefix, spec.dim, name="stream_prefix")
        problem = Problem(run_cfg.lam, train_eval, test)

        def make_source():
            return generators.StreamSource(spec, origin=origin)

        return make_source, problem, run_cfg

    if gen is not None:
        ds = _build_generated(gen, seed_override)
    else:
        ds = _load_dataset_file(section)
    train, test = split(ds, _split_spec(cfg))
    if len(test) == 0:
        raise ConfigError("experiment requires a non-empty test split")
    order = section.get("order", "as_stored")
    order_seed = section.get("order_seed", run_cfg.seed)
    source = FiniteSource(train, order=order, seed=order_seed)
    problem = Problem(run_cfg.lam, train, test)
    return (lambda: source), problem, run_cfg


def cmd_gen(cfg, out_dir, seed_override=None):
    section = cfg.get("dataset")
    if not section or "generator" not in section:
        raise ConfigError("gen needs dataset.generator")
    gen = section["generator"]
    if gen["kind"] == "stream":
        if "draws" not in gen:
            raise ConfigError("materializing a stream needs a draws count")
        spec = _stream_spec(gen, seed_override)
        origin = _load_dataset_file({"path": gen["origin_path"]}) if "origin_path" in gen else None
        src = generators.StreamSource(spec, origin=origin)
        from .data import Dataset

        ds = Dataset(src.prefix(gen["draws"]), spec.dim, name=gen.get("name", "stream"))
    else:
        ds = _build_generated(gen, seed_override)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = gen.get("name", ds.name).replace("/", "_")
    data_path = out_dir / f"{stem}.svm"
    ds.to_svmlight(data_path)
    sidecar = {
        "generator": gen,
        "seed": seed_override if seed_override is not None else gen.get("seed", 0),
        "n": len(ds),
        "dim": ds.dim,
    }
    with open(out_dir / f"{stem}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    print(f"wrote {data_path} ({len(ds)} samples, dim {ds.dim})")
    return EXIT_OK


def cmd_metrics(args):
    ds = _load_dataset_file(
        {"path": args.dataset, "format": args.format, "label_column": args.label_column}
    )
    report = character_report(ds, tau_max=args.tau_max, batch_size=args.batch_size)
    text = report.to_json(full=args.full) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_train(cfg, out_dir, seed_override=None):
    make_source, problem, run_cfg = prepare_experiment(cfg, seed_override)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    try:
        trace = run(make_source(), run_cfg, problem)
    except DivergedError as e:
        e.trace.write_csv(out_dir / "trace.csv")
        print(f"diverged at server iteration {e.server_iter}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"training wall time {time.monotonic() - started:.2f}s", file=sys.stderr)
    trace.write_csv(out_dir / "trace.csv")
    final = trace.final()
    summary = {
        "algorithm": run_cfg.algorithm,
        "workers": run_cfg.workers,
        "server_iters": final.server_iter,
        "pca_time": final.pca_time,
        "final_train_logloss": final.train_logloss,
        "final_test_logloss": final.test_logloss,
        "epsilon_target": run_cfg.epsilon_target,
        "target_reached": (
            None
            if run_cfg.epsilon_target is None
            else trace.first_iter_reaching(
                run_cfg.epsilon_target,
                "train_logloss" if run_cfg.target_train else "test_logloss",
            )
            is not None
        ),
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(f"wrote {out_dir / 'trace.csv'}")
    return EXIT_OK


def cmd_sweep(cfg, out_dir, seed_override=None, jobs=1):
    if "sweep" not in cfg:
        raise ConfigError("sweep needs a sweep section")
    s = cfg["sweep"]
    out_dir.mkdir(parents=True, exist_ok=True)

    if "fixture" in s:
        metrics = s["fixture"]["metrics"]
        counts = s["worker_counts"]
        if len(metrics) != len(counts):
            raise ConfigError("fixture metrics must align with worker_counts")
        metrics = [int(v) if float(v).is_integer() else float(v) for v in metrics]
        table, report = table_and_report(counts, metrics, s["mode"], s.get("theta", 1e-3))
    else:
        make_source, problem, base_cfg = prepare_experiment(cfg, seed_override)
        sweep_cfg = SweepConfig(
            base=base_cfg,
            worker_counts=s["worker_counts"],
            mode=s["mode"],
            fixed_iter=s.get("fixed_iter"),
            epsilon=s.get("epsilon"),
            theta=s.get("theta", 1e-3),
        )
        result = run_sweep(sweep_cfg, make_source, problem, jobs=jobs)
        for m, trace in result.traces.items():
            trace.write_csv(out_dir / f"m{m}.csv")
        table, report = result.table, result.report

    table.write_csv(out_dir / "gain_growth.csv")
    with open(out_dir / "upper_bound.json", "w") as fh:
        fh.write(report.to_json())
    print(f"wrote {out_dir / 'gain_growth.csv'} and upper_bound.json")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scalesgd",
        description="dataset-character scalability lab for parallel stochastic optimizers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seeds")
        p.add_argument("--output-dir", default=None)

    p_gen = sub.add_parser("gen", help="materialize a generated dataset")
    add_common(p_gen)

    p_metrics = sub.add_parser("metrics", help="dataset character report")
    p_metrics.add_argument("--dataset", required=True)
    p_metrics.add_argument("--format", choices=["svmlight", "csv"], default=None)
    p_metrics.add_argument("--label-column", type=int, default=0)
    p_metrics.add_argument("--tau-max", type=int, default=None)
    p_metrics.add_argument("--batch-size", type=int, default=None)
    p_metrics.add_argument("--full", action="store_true", help="emit per-feature arrays")
    p_metrics.add_argument("--out", default=None)

    p_train = sub.add_parser("train", help="run one training")
    add_common(p_train)

    p_sweep = sub.add_parser("sweep", help="run a worker-count sweep")
    add_common(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=1)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "metrics":
            return cmd_metrics(args)
        cfg = load_config(args.config)
        out_dir = Path(args.output_dir or cfg.get("output_dir", "."))
        if args.command == "gen":
            return cmd_gen(cfg, out_dir, args.seed)
        if args.command == "train":
            return cmd_train(cfg, out_dir, args.seed)
        if args.command == "sweep":
            return cmd_sweep(cfg, out_dir, args.seed, jobs=args.jobs)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TargetNotReachedError as e:
        print(f"target not reached: {e}", file=sys.stderr)
        return EXIT_TARGET
    except SweepError as e:
        if isinstance(e.__cause__, DivergedError):
            print(f"divergence: {e}", file=sys.stderr)
            return EXIT_DIVERGED
        print(f"sweep failed: {e}", file=sys.stderr)
        return EXIT_TARGET


if __name__ == "__main__":
    sys.exit(main())
