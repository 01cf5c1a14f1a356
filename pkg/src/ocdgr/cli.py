"""Command-line front end: train, evaluate, generate, compare, toy-demo.

Exit codes: 0 success, 2 usage/config error, 3 data format error,
4 numerical infeasibility.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, derive_rng, load_dataset, stream_order_for
from .data import order_stream, toy_generate
from .errors import ConfigError, FormatError, InfeasibleSizeError, OcdgrError
from .evaluation import (
    EXACT_ENUM_LIMIT,
    AisSchedule,
    class_histogram,
    exact_log_z,
    ais_log_z,
    test_log_prob_report,
)
from .model import BinaryBatch, Hyperparameters, load_model, save_model
from .online import TRAINER_KINDS, generate_replay, stream_train

# Published final mean test log-probabilities on MNIST (500 hidden units,
# CD-1, random stream order), carried as annotations only; nothing asserts
# against them at desk scale.
REFERENCE_FINAL_LOG_PROB = {"ocdgr": -114.52, "er_im": -151.67, "er_ml": -167.11}
REFERENCE_SOURCE = "published reference: MNIST, n_h=500, n_CD=1, random order (not asserted)"


def _schedule_from_spec(spec) -> AisSchedule:
    if spec == "paper" or (isinstance(spec, dict) and spec.get("preset") == "paper"):
        return AisSchedule.paper_preset()
    if isinstance(spec, dict):
        return AisSchedule.uniform(int(spec.get("n_betas", 1000)), int(spec.get("n_chains", 100)))
    raise ConfigError(f"unintelligible AIS schedule spec {spec!r}")


def _estimate_log_z(params, estimator, ais_spec, rng):
    if estimator == "exact":
        if min(params.n_v, params.n_h) > EXACT_ENUM_LIMIT:
            raise InfeasibleSizeError(
                f"exact log Z is infeasible for a {params.n_v} x {params.n_h} model "
                f"(needs min dimension <= {EXACT_ENUM_LIMIT}); rerun with --estimator ais"
            )
        return exact_log_z(params), 0.0
    return ais_log_z(params, _schedule_from_spec(ais_spec), rng)


def run_experiment(config: ExperimentConfig, evaluate_checkpoints: bool = True) -> dict:
    """Train one model per config and evaluate its checkpoints.

    Returns a dict with the final parameters, per-checkpoint metric rows,
    the resolved config, and memory/time accounting.
    """
    if config.trainer not in TRAINER_KINDS:
        raise ConfigError(f"unknown trainer {config.trainer!r}, expected one of {TRAINER_KINDS}")
    t0 = time.perf_counter()
    train = load_dataset(config.train_dataset, config.master_seed, "train")
    test = load_dataset(config.test_dataset, config.master_seed, "test") if config.test_dataset else None
    stream = order_stream(train, stream_order_for(config))
    hyper = config.hyper(train.n_v)
    resolved = config.resolved(train.n_v)

    train_rng = derive_rng(config.master_seed, "train")
    params, snapshots = stream_train(
        config.trainer, stream, hyper, config.checkpoint_every, train_rng,
        bit_packed_memory=config.bit_packed_memory,
    )
    train_ms = (time.perf_counter() - t0) * 1000.0

    rows = []
    if evaluate_checkpoints and test is not None:
        for snap in snapshots:
            eval_rng = derive_rng(config.master_seed, f"eval-{snap.observed_count}")
            log_z, log_z_std = _estimate_log_z(snap.params, config.estimator, config.ais, eval_rng)
            report = test_log_prob_report(snap.params, test, log_z, log_z_std)
            rows.append({
                "observed_count": snap.observed_count,
                "trainer": config.trainer,
                "log_z_estimate": log_z,
                "log_z_std": log_z_std,
                "mean_log_prob": report.mean_log_prob,
                "cross_class_std": report.cross_class_std,
                "wall_ms": (time.perf_counter() - t0) * 1000.0,
            })

    final_report = None
    if test is not None:
        eval_rng = derive_rng(config.master_seed, "eval-final")
        log_z, log_z_std = _estimate_log_z(params, config.estimator, config.ais, eval_rng)
        final_report = test_log_prob_report(params, test, log_z, log_z_std)

    peak_memory = max((s.live_scalar_count for s in snapshots), default=0)
    return {
        "params": params,
        "hyper": hyper,
        "snapshots": snapshots,
        "checkpoint_rows": rows,
        "final_report": final_report,
        "resolved_config": resolved,
        "train_ms": train_ms,
        "total_ms": (time.perf_counter() - t0) * 1000.0,
        "peak_memory_scalars": peak_memory,
    }


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


METRIC_FIELDS = ["observed_count", "trainer", "log_z_estimate", "log_z_std",
                 "mean_log_prob", "cross_class_std", "master_seed", "config_json"]
TIMING_FIELDS = ["observed_count", "wall_ms", "master_seed", "config_json"]
COMPARE_FIELDS = ["trainer", "mean_log_prob", "log_z", "log_z_std", "cross_class_std",
                  "peak_memory_scalars", "wall_ms", "reference_value", "reference_source",
                  "master_seed", "config_json"]


def cmd_train(args) -> int:
    config = ExperimentConfig.from_file(args.config, {
        "trainer": args.trainer,
        "master_seed": args.seed,
        "output_dir": args.output_dir,
        "checkpoint_every": args.checkpoint_every,
    })
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_experiment(config)

    config_json = json.dumps(result["resolved_config"], sort_keys=True)
    model_path = out_dir / "model.rbm"
    save_model(model_path, result["params"], result["hyper"],
               extra={"experiment_config": result["resolved_config"]})

    metric_rows = [
        {**{k: row[k] for k in METRIC_FIELDS if k in row},
         "master_seed": config.master_seed, "config_json": config_json}
        for row in result["checkpoint_rows"]
    ]
    _write_csv(out_dir / "metrics.csv", METRIC_FIELDS, metric_rows)
    # wall-clock measurements vary run to run, so they live in their own file
    # and metrics.csv stays byte-identical across reruns of the same config
    timing_rows = [
        {"observed_count": row["observed_count"], "wall_ms": row["wall_ms"],
         "master_seed": config.master_seed, "config_json": config_json}
        for row in result["checkpoint_rows"]
    ]
    _write_csv(out_dir / "timings.csv", TIMING_FIELDS, timing_rows)

    print(f"trained {config.trainer}: model -> {model_path}, "
          f"{len(metric_rows)} checkpoint rows -> {out_dir / 'metrics.csv'}")
    if result["final_report"] is not None:
        print(f"final mean test log-prob: {result['final_report'].mean_log_prob:.4f} nats")
    return 0


def _test_batch_from_args(args, master_seed: int) -> BinaryBatch:
    spec = {"kind": args.test_kind}
    if args.test_kind == "toy":
        spec.update({"n_per_class": args.toy_n_per_class})
    elif args.test_kind == "idx":
        if not (args.test_images and args.test_labels):
            raise ConfigError("idx test data needs --test-images and --test-labels")
        spec.update({"images": args.test_images, "labels": args.test_labels,
                     "binarize": args.binarize})
    elif args.test_kind == "text":
        if not args.test_path:
            raise ConfigError("text test data needs --test-path")
        spec.update({"path": args.test_path})
    if args.limit:
        spec["limit"] = args.limit
    return load_dataset(spec, master_seed, "test")


def cmd_evaluate(args) -> int:
    params, meta = load_model(args.model)
    test = _test_batch_from_args(args, args.seed)
    rng = derive_rng(args.seed, "evaluate")
    ais_spec = "paper" if args.schedule == "paper" else {
        "n_betas": args.n_betas, "n_chains": args.n_chains}
    log_z, log_z_std = _estimate_log_z(params, args.estimator, ais_spec, rng)
    report = test_log_prob_report(params, test, log_z, log_z_std)
    report.extra.update({
        "model": str(args.model),
        "estimator": args.estimator,
        "master_seed": args.seed,
        "model_metadata": meta,
    })
    text = report.to_json(indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_generate(args) -> int:
    params, meta = load_model(args.model)
    rng = derive_rng(args.seed, "generate")
    batch = generate_replay(params, args.n, args.gibbs_steps, rng)
    header = json.dumps({
        "model": str(args.model), "n": args.n, "gibbs_steps": args.gibbs_steps,
        "master_seed": args.seed, "model_metadata": meta,
    }, sort_keys=True)
    with open(args.out, "w") as f:
        f.write(f"# {header}\n")
        for row in batch.rows:
            f.write(" ".join(map(str, row)) + "\n")
    print(f"wrote {args.n} samples -> {args.out}")
    return 0


def cmd_compare(args) -> int:
    config = ExperimentConfig.from_file(args.config, {"master_seed": args.seed})
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for trainer in args.trainers:
        if trainer not in TRAINER_KINDS:
            raise ConfigError(f"unknown trainer {trainer!r}")
        cfg = ExperimentConfig(**{**config.resolved(), "trainer": trainer,
                                  "hyperparameters": config.hyperparameters})
        result = run_experiment(cfg, evaluate_checkpoints=False)
        report = result["final_report"]
        if report is None:
            raise ConfigError("compare needs a test_dataset in the config")
        rows.append({
            "trainer": trainer,
            "mean_log_prob": report.mean_log_prob,
            "log_z": report.log_z,
            "log_z_std": report.log_z_std,
            "cross_class_std": report.cross_class_std,
            "peak_memory_scalars": result["peak_memory_scalars"],
            "wall_ms": result["total_ms"],
            "reference_value": REFERENCE_FINAL_LOG_PROB.get(trainer, ""),
            "reference_source": REFERENCE_SOURCE,
            "master_seed": cfg.master_seed,
            "config_json": json.dumps(result["resolved_config"], sort_keys=True),
        })
        print(f"{trainer}: mean_log_prob={report.mean_log_prob:.4f} "
              f"peak_memory_scalars={result['peak_memory_scalars']}")
    _write_csv(out_path, COMPARE_FIELDS, rows)
    print(f"comparison -> {out_path}")
    return 0


def cmd_toy_demo(args) -> int:
    """Class-incremental toy run: train class by class, report generated-sample
    class histograms after each stage."""
    rng = derive_rng(args.seed, "toy-demo")
    data = toy_generate(args.n_per_class, rng=rng)
    hyper = Hyperparameters(n_v=data.n_v, n_h=args.n_h)
    from .data import StreamOrder
    stream = order_stream(data, StreamOrder("sorted_by_class"))
    params, snapshots = stream_train(
        "ocdgr", stream, hyper, checkpoint_every=args.n_per_class,
        rng=derive_rng(args.seed, "train"),
    )
    proto_rng = derive_rng(args.seed, "prototypes")
    proto_idx = np.concatenate([
        proto_rng.choice(np.where(data.labels == c)[0], size=min(100, args.n_per_class), replace=False)
        for c in np.unique(data.labels)
    ])
    prototypes = data.take(proto_idx)
    for stage, snap in enumerate(snapshots, start=1):
        gen = generate_replay(snap.params, 1000, hyper.n_gibbs,
                              derive_rng(args.seed, f"gen-{stage}"))
        hist = class_histogram(gen, prototypes, k=1)
        counts = " ".join(f"{c}:{hist.get(c, 0)}" for c in range(1, 11))
        print(f"after class {stage}: {counts}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocdgr",
                                     description="Online RBM training with generative replay")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--trainer", choices=TRAINER_KINDS)
    p.add_argument("--seed", type=int, dest="seed")
    p.add_argument("--output-dir")
    p.add_argument("--checkpoint-every", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="log-probability report for a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--estimator", choices=("exact", "ais"), default="ais")
    p.add_argument("--schedule", choices=("uniform", "paper"), default="uniform")
    p.add_argument("--n-betas", type=int, default=1000)
    p.add_argument("--n-chains", type=int, default=100)
    p.add_argument("--test-kind", choices=("toy", "idx", "text"), required=True)
    p.add_argument("--test-images")
    p.add_argument("--test-labels")
    p.add_argument("--test-path")
    p.add_argument("--binarize", choices=("threshold", "stochastic"), default="threshold")
    p.add_argument("--toy-n-per-class", type=int, default=100)
    p.add_argument("--limit", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("generate", help="sample visible vectors from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--gibbs-steps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("compare", help="run several trainers on one dataset and compare")
    p.add_argument("--config", required=True)
    p.add_argument("--trainers", nargs="+", default=list(TRAINER_KINDS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("toy-demo", help="class-incremental toy scenario demo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-class", type=int, default=1000)
    p.add_argument("--n-h", type=int, default=50)
    p.set_defaults(func=cmd_toy_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except InfeasibleSizeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except OcdgrError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
