"""End-to-end acceptance checks.

Each test prints a one-line PASS/FAIL verdict before asserting, so the
overall outcome is readable from the test log. The image-data comparison
uses real IDX files when MNIST_DIR is set and a deterministic synthetic
stand-in otherwise (same dimensions, classes, and sparsity regime).
"""

import os
import time

import numpy as np
import pytest

from ocdgr import (
    AisSchedule,
    BinaryBatch,
    Hyperparameters,
    OnlineTrainerState,
    ReplayMemory,
    StreamOrder,
    ais_log_z,
    binarize,
    class_histogram,
    derive_rng,
    er_ml_capacity,
    er_update_procedure,
    exact_log_z,
    free_energy,
    generate_replay,
    hidden_probs,
    init_params,
    load_idx,
    ocdgr_update_procedure,
    order_stream,
    positive_statistics,
    stream_train,
    toy_generate,
    train_offline,
)

from ocdgr import test_log_prob_report as log_prob_report  # avoid pytest collection
from conftest import all_states, digit_like_dataset, mnist_dir, random_params, rng


def verdict(name, ok, detail=""):
    print(f"criterion {name}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def test_criterion_1_oracle_normalization():
    """Sum of exp(-F(v) - log Z) over all visible states is 1 to 1e-8."""
    states = all_states(8)
    worst = 0.0
    for i in range(20):
        std = 0.1 if i < 10 else 1.0
        p = random_params(8, 6, std=std, seed=100 + i)
        total = np.exp(-free_energy(p, states) - exact_log_z(p)).sum()
        worst = max(worst, abs(total - 1.0))
    ok = worst <= 1e-8
    assert verdict(1, ok, f"(max |Z-normalization error| = {worst:.2e})")


def test_criterion_2_ais_correctness():
    """AIS within max(0.05, 3 std) of exact log Z in at least 9 of 10 models."""
    hits, details = 0, []
    for i in range(10):
        p = random_params(10, 8, std=0.1, seed=200 + i)
        exact = exact_log_z(p)
        est, std = ais_log_z(p, AisSchedule.uniform(1000, 100), derive_rng(i, "ais-acceptance"))
        err = abs(est - exact)
        hits += err <= max(0.05, 3 * std)
        details.append(round(err, 4))
    ok = hits >= 9
    assert verdict(2, ok, f"({hits}/10 within tolerance; errors {details})")


def test_criterion_3_exact_gradient_and_offline_likelihood():
    """Data-side statistics are exact; 2,000 offline epochs raise the train LL."""
    p0 = random_params(6, 4, std=0.1, seed=300)
    data = BinaryBatch((rng(301).random((4, 6)) < 0.5).astype(np.uint8))

    stats, _ = positive_statistics(p0, data)
    v = data.rows.astype(float)
    expected = hidden_probs(p0, v).T @ v / len(data)
    stat_err = np.abs(stats.weight_stat / len(data) - expected).max()

    def train_ll(params):
        return (-free_energy(params, v) - exact_log_z(params)).sum()

    hyper = Hyperparameters(n_v=6, n_h=4, n_epochs=2000, batch_size=4)
    trained = train_offline(p0, data, hyper, derive_rng(302, "offline"))
    ll0, ll1 = train_ll(p0), train_ll(trained)

    ok = stat_err <= 1e-12 and ll1 > ll0
    assert verdict(3, ok, f"(stat err {stat_err:.1e}; LL {ll0:.3f} -> {ll1:.3f})")


def test_criterion_4_markov_determinism():
    """Generative replay is Markov in (params, delta, batch, rng state);
    the unbounded-memory baseline is not."""
    hyper = Hyperparameters(n_v=12, n_h=6, n_epochs=3, batch_size=10, replay_size=20)
    p0 = random_params(12, 6, seed=400)

    def batch(seed):
        return BinaryBatch((rng(seed).random((10, 12)) < 0.4).astype(np.uint8))

    def warmed_state(history_seed):
        st = OnlineTrainerState.fresh(p0)
        st.pending = list(batch(history_seed).rows)
        return ocdgr_update_procedure(st, hyper, rng(history_seed))

    a, b = warmed_state(401), warmed_state(402)
    shared = batch(403)
    for st in (a, b):
        st.pending = list(shared.rows)
    a.params, a.update_state = b.params, b.update_state.copy()
    ra = ocdgr_update_procedure(a, hyper, rng(404))
    rb = ocdgr_update_procedure(b, hyper, rng(404))
    markov = (
        (ra.params.weights == rb.params.weights).all()
        and (ra.params.visible_bias == rb.params.visible_bias).all()
        and (ra.params.hidden_bias == rb.params.hidden_bias).all()
    )

    er_outputs = []
    for mem_seed in (405, 406):  # identical inputs, different earlier batches
        mem = ReplayMemory(None)
        mem.insert_batch(batch(mem_seed))
        st = OnlineTrainerState.fresh(p0)
        st.t = 2
        st.pending = list(shared.rows)
        out, _ = er_update_procedure(st, mem, hyper, rng(407))
        er_outputs.append(out.params.weights)
    er_history_dependent = not (er_outputs[0] == er_outputs[1]).all()

    ok = markov and er_history_dependent
    assert verdict(4, ok, f"(markov={markov}, er history-dependent={er_history_dependent})")


def test_criterion_5_toy_class_retention():
    """Class-incremental toy stream: after each stage, generated samples must
    give every observed class >= 5% and every unobserved class <= 2% of mass,
    in >= 8 of 10 stages, for each of 3 seeds."""
    t0 = time.perf_counter()
    hyper = Hyperparameters(n_v=100, n_h=50)  # defaults throughout
    per_seed = []
    for seed in range(3):
        data = toy_generate(1000, rng=derive_rng(seed, "toy-data"))
        stream = order_stream(data, StreamOrder("sorted_by_class"))
        _, snapshots = stream_train("ocdgr", stream, hyper, 1000, derive_rng(seed, "toy-train"))
        proto_rng = derive_rng(seed, "toy-prototypes")
        proto_idx = np.concatenate([
            proto_rng.choice(np.where(data.labels == c)[0], size=100, replace=False)
            for c in range(1, 11)
        ])
        prototypes = data.take(proto_idx)
        passed = 0
        for stage, snap in enumerate(snapshots, start=1):
            gen = generate_replay(snap.params, 1000, hyper.n_gibbs,
                                  derive_rng(seed, f"toy-gen-{stage}"))
            hist = class_histogram(gen, prototypes, k=1)
            observed_ok = all(hist.get(c, 0) >= 50 for c in range(1, stage + 1))
            unobserved_ok = all(hist.get(c, 0) <= 20 for c in range(stage + 1, 11))
            passed += observed_ok and unobserved_ok
        per_seed.append(passed)
    elapsed = time.perf_counter() - t0
    ok = all(n >= 8 for n in per_seed) and elapsed < 300
    assert verdict(5, ok, f"(stages passed per seed: {per_seed}; {elapsed:.0f}s)")


# ---------------------------------------------------------------------------
# criteria 6 and 7 share one set of training runs


def _image_data(n_rows, seed, train=True):
    d = mnist_dir()
    if d is None:
        return digit_like_dataset(n_rows, seed=seed)
    prefix = "train" if train else "t10k"
    images, labels = load_idx(os.path.join(d, f"{prefix}-images-idx3-ubyte"),
                              os.path.join(d, f"{prefix}-labels-idx1-ubyte"))
    take = derive_rng(seed, "subsample").choice(len(images), size=n_rows, replace=False)
    return binarize(images[take], labels=labels[take])


@pytest.fixture(scope="module")
def comparison_runs():
    """5,000 sorted train points / 1,000 test points, n_h=25, default
    hyperparameters, all three trainers, five seeds."""
    hyper = Hyperparameters(n_v=784, n_h=25)
    schedule = AisSchedule.uniform(1000, 50)
    runs = {}
    for seed in range(5):
        train = order_stream(_image_data(5000, seed=1000 + seed),
                             StreamOrder("sorted_by_class"))
        test = _image_data(1000, seed=2000 + seed, train=False)
        for kind in ("ocdgr", "er_ml", "er_im"):
            params, snapshots = stream_train(
                kind, train, hyper, checkpoint_every=100,
                rng=derive_rng(seed, f"cmp-train-{kind}"))
            log_z, std = ais_log_z(params, schedule, derive_rng(seed, f"cmp-ais-{kind}"))
            report = log_prob_report(params, test, log_z, std)
            runs[(kind, seed)] = {"snapshots": snapshots,
                                  "mean_log_prob": report.mean_log_prob}
    return runs


def test_criterion_6_directional_comparison(comparison_runs):
    """Generative replay keeps early classes: its final mean test log-prob is
    within 1 nat of (or better than) the byte-parity replay baseline,
    median over 5 seeds."""
    diffs = [comparison_runs[("ocdgr", s)]["mean_log_prob"]
             - comparison_runs[("er_ml", s)]["mean_log_prob"] for s in range(5)]
    med = float(np.median(diffs))
    ok = med >= -1.0
    assert verdict(6, ok, f"(median ocdgr - er_ml = {med:.2f} nats; diffs "
                          f"{[round(d, 2) for d in diffs]})")


def test_criterion_7_memory_accounting(comparison_runs):
    """Exact live-state arithmetic: constant for generative replay, +batch_size
    rows per procedure for unbounded memory, capped for the bounded buffer."""
    n_v, n_h, n_b = 784, 25, 100
    param_scalars = n_v * n_h + n_v + n_h
    ok = True
    for seed in range(5):
        ocd = comparison_runs[("ocdgr", seed)]["snapshots"]
        ok &= all(s.live_scalar_count == 2 * param_scalars for s in ocd)
        ok &= all(s.memory_rows == 0 for s in ocd)
        im = comparison_runs[("er_im", seed)]["snapshots"]
        # one update procedure per checkpoint: memory grows by exactly n_B rows
        ok &= [s.memory_rows for s in im] == [n_b * (i + 1) for i in range(len(im))]
        ok &= all(s.live_scalar_count == 2 * param_scalars + s.memory_rows * n_v for s in im)
        ml = comparison_runs[("er_ml", seed)]["snapshots"]
        cap = er_ml_capacity(n_v, n_h)
        ok &= cap == 26
        ok &= all(s.memory_rows == cap for s in ml)  # filled by the first batch
        ok &= all(s.live_scalar_count == 2 * param_scalars + cap * n_v for s in ml)
    assert verdict(7, bool(ok))


def test_criterion_8_generation_cost_scaling():
    """Replay-generation wall time scales with the hidden-layer width:
    the 500-unit model costs 1.4x-3.0x the 250-unit model per call."""
    def mean_seconds(n_h, calls=20, n_samples=1000):
        params = init_params(784, n_h, 0.01, derive_rng(0, f"scale-{n_h}"))
        g = derive_rng(1, f"scale-{n_h}")
        generate_replay(params, n_samples, 1, g)  # warmup
        t0 = time.perf_counter()
        for _ in range(calls):
            generate_replay(params, n_samples, 1, g)
        return (time.perf_counter() - t0) / calls

    ratio = mean_seconds(500) / mean_seconds(250)
    ok = 1.4 <= ratio <= 3.0
    assert verdict(8, ok, f"(ratio = {ratio:.2f})")


def test_criterion_9_reference_metadata_schema(tmp_path):
    """The comparison CSV carries published reference values as annotations."""
    import csv
    import json

    from ocdgr.cli import main

    cfg = {
        "master_seed": 5,
        "trainer": "ocdgr",
        "train_dataset": {"kind": "toy", "n_per_class": 30},
        "test_dataset": {"kind": "toy", "n_per_class": 10},
        "stream_order": "sorted_by_class",
        "estimator": "exact",
        "hyperparameters": {"n_h": 8, "n_epochs": 2, "batch_size": 50, "replay_size": 50},
        "output_dir": str(tmp_path / "out"),
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "compare.csv"
    assert main(["compare", "--config", str(cfg_path), "--out", str(out)]) == 0
    with open(out) as f:
        rows = {r["trainer"]: r for r in csv.DictReader(f)}

    ok = (
        set(rows) == {"ocdgr", "er_ml", "er_im"}
        and float(rows["ocdgr"]["reference_value"]) == -114.52
        and float(rows["er_im"]["reference_value"]) == -151.67
        and float(rows["er_ml"]["reference_value"]) == -167.11
        and all("not asserted" in r["reference_source"] for r in rows.values())
        # annotations only: the computed result is present and independent
        and all(r["mean_log_prob"] != r["reference_value"] for r in rows.values())
    )
    assert verdict(9, ok)
