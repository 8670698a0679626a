"""Acceptance gate: one test per criterion, each printing a PASS line with the
measured numbers once its assertions hold.

The cohort-level criteria share one module-scoped fixture that trains every
needed (model, seed, horizon) cell exactly once.
"""

import dataclasses
import datetime
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from seizureformer import baselines, data, gradcheck, metrics, synth
from seizureformer import tensor as T
from seizureformer.cli import main
from seizureformer.data import WindowSample
from seizureformer.model import ModelConfig, SeizureFormer, se_recalibrate, weighted_bce
from seizureformer.tensor import Tensor
from seizureformer.train import TrainConfig, evaluate, train_loop

from oracles import naive_conv1d, naive_conv2d, naive_matmul, pairwise_roc_auc, plain_bce, sweep_pr_auc

SEEDS = (1, 2, 3, 4, 5)
GATED_HORIZONS = (1, 3, 7)
ABLATION_FLAGS = {
    "w/o CNN Patch Embedding": dict(use_cnn_embed=False),
    "w/o SE Block": dict(use_se=False),
    "w/o Cross-Variable Temporal convolution": dict(use_cvt=False),
    "w/o All Modules": dict(use_cnn_embed=False, use_cvt=False, use_se=False),
}


def build_splits(seed, horizon):
    series = synth.generate_patient(synth.SynthConfig(seed=seed))
    normalized = data.zscore_normalize(series)
    labels = data.label_days(series)
    samples = data.make_windows(normalized, labels, ModelConfig().lookback, horizon)
    return data.split_chronological(samples)


def train_and_eval(seed, horizon, splits, **flags):
    train_s, val_s, test_s = splits
    model = SeizureFormer(ModelConfig(**flags), np.random.default_rng(seed))
    train_loop(model, train_s, val_s, TrainConfig(seed=seed))
    return evaluate(model, test_s)


@pytest.fixture(scope="module")
def cohort():
    """Everything the learning/ablation criteria need, trained once."""
    splits = {(s, h): build_splits(s, h) for s in SEEDS for h in GATED_HORIZONS}

    t0 = time.perf_counter()
    full_h1 = {s: train_and_eval(s, 1, splits[(s, 1)]) for s in SEEDS}
    logistic = {}
    for s in SEEDS:
        train_s, _, test_s = splits[(s, 1)]
        fit = baselines.logistic_fit(baselines.window_features(train_s), [x.y for x in train_s])
        scores = baselines.logistic_predict(fit, baselines.window_features(test_s))
        logistic[s] = metrics.report(scores, [x.y for x in test_s])
    headline_elapsed = time.perf_counter() - t0

    full = {(s, 1): full_h1[s] for s in SEEDS}
    noall = {}
    for h in GATED_HORIZONS:
        for s in SEEDS:
            if h != 1:
                full[(s, h)] = train_and_eval(s, h, splits[(s, h)])
            noall[(s, h)] = train_and_eval(
                s, h, splits[(s, h)], **ABLATION_FLAGS["w/o All Modules"]
            )

    single_ablations = {
        variant: {s: train_and_eval(s, 1, splits[(s, 1)], **flags) for s in SEEDS}
        for variant, flags in ABLATION_FLAGS.items()
        if variant != "w/o All Modules"
    }

    return {
        "full": full,
        "noall": noall,
        "logistic": logistic,
        "single_ablations": single_ablations,
        "headline_elapsed": headline_elapsed,
    }


def test_criterion_1_gradient_soundness():
    """Every tensor op and the full forward+loss pass finite-difference checks."""
    cfg = gradcheck.small_model_config()
    assert (cfg.lookback, cfg.patch_length, cfg.stride) == (16, 4, 2)
    assert (cfg.embed_dim, cfg.heads, cfg.encoder_layers, cfg.channels) == (8, 2, 1, 2)

    start = time.perf_counter()
    results = gradcheck.run_all(epsilon=1e-5, threshold=1e-4)
    elapsed = time.perf_counter() - start

    failures = [r for r in results if not r.passed]
    worst = max(results, key=lambda r: r.max_rel_error)
    assert not failures, f"failed: {[r.name for r in failures]}"
    assert elapsed < 60.0, f"gradcheck took {elapsed:.1f}s"
    print(
        f"PASS criterion 1: {len(results)} gradient checks < 1e-4 "
        f"(worst {worst.name} at {worst.max_rel_error:.2e}) in {elapsed:.1f}s"
    )


def test_criterion_2_oracle_equivalence():
    """matmul/conv vs nested loops, AUCs vs brute-force, 100+ cases each."""
    rng = np.random.default_rng(2024)

    for _ in range(100):
        m, k, n = rng.integers(1, 9, size=3)
        a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
        assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, naive_matmul(a, b), atol=1e-12)

    for _ in range(100):
        k = int(rng.integers(1, 8))
        length = int(rng.integers(k, 24))
        feats = int(rng.integers(1, 5))
        x = rng.standard_normal(length)
        w = rng.standard_normal((feats, k))
        bias = rng.standard_normal(feats)
        padding = "same" if rng.random() < 0.5 else "valid"
        got = T.conv1d(Tensor(x), Tensor(w), Tensor(bias), padding=padding).data
        assert_allclose(got, naive_conv1d(x, w, bias, padding), atol=1e-12)

    for _ in range(100):
        h, w2, d = rng.integers(1, 7, size=3)
        kh, kw = rng.choice([1, 3, 5], size=2)
        x = rng.standard_normal((h, w2, d))
        kern = rng.standard_normal((kh, kw))
        assert_allclose(T.conv2d(Tensor(x), Tensor(kern)).data, naive_conv2d(x, kern), atol=1e-12)

    for _ in range(100):
        n = int(rng.integers(4, 301))
        scores = np.round(rng.standard_normal(n), 2)
        labels = rng.integers(0, 2, size=n)
        labels[:2] = [0, 1]
        assert abs(metrics.roc_auc(scores, labels) - pairwise_roc_auc(scores, labels)) < 1e-12
        assert abs(metrics.pr_auc(scores, labels) - sweep_pr_auc(scores, labels)) < 1e-12

    print("PASS criterion 2: 100-case oracle sweeps for matmul/conv1d/conv2d/ROC/PR all within 1e-12")


def test_criterion_3_architecture_invariants():
    from seizureformer.model import patchify

    # patch count formula over a grid
    for n in (6, 10, 16, 30, 45):
        for p in (2, 4, 8):
            for s in (1, 2, 3, 4):
                if p > n:
                    continue
                got = patchify(Tensor(np.zeros(n)), p, s).shape[0]
                assert got == (n - p) // s + 1

    # attention mass conservation across layers and heads
    cfg = ModelConfig(encoder_layers=2)
    model = SeizureFormer(cfg, np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((4, cfg.channels, cfg.lookback))
    sink = []
    model.forward(x, attn_sink=sink)
    assert len(sink) == cfg.encoder_layers * cfg.heads
    for attn in sink:
        assert np.max(np.abs(attn.data.sum(axis=-1) - 1.0)) < 1e-9

    # SE gates strictly open; zero weights halve the input exactly
    rng = np.random.default_rng(2)
    grid = Tensor(rng.standard_normal((3, 2, 5, 8)))
    _, gates = se_recalibrate(grid, Tensor(rng.standard_normal((2, 2))), Tensor(rng.standard_normal((2, 2))))
    assert np.all((gates.data > 0.0) & (gates.data < 1.0))
    halved, zero_gates = se_recalibrate(grid, Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 2))))
    assert np.array_equal(zero_gates.data, np.full((3, 2), 0.5))
    assert np.array_equal(halved.data, grid.data * 0.5)

    # eval-mode forward is bit-deterministic
    assert model.forward(x).data.tobytes() == model.forward(x).data.tobytes()

    print("PASS criterion 3: patch formula, attention mass, SE gates, zero-weight halving, eval determinism")


def test_criterion_4_labeling_protocol():
    series = synth.generate_patient(synth.SynthConfig(seed=42, days=1000))

    # causality: rewriting the future never changes past labels
    base = data.label_days(series).labels
    mutated_records = list(series.records)
    for i in range(700, 1000):
        r = mutated_records[i]
        mutated_records[i] = data.DailyRecord(r.date, r.ab_ch1, r.ab_ch2, r.le_count + 37)
    mutated = data.label_days(data.PatientSeries(series.patient_id, mutated_records)).labels
    assert np.array_equal(base[:700], mutated[:700])

    # strict inequality at the threshold: 7 > 0.7*10 is false
    day0 = datetime.date(2020, 1, 1)
    records = [data.DailyRecord(day0 + datetime.timedelta(days=i), 0, 0, 10) for i in range(60)]
    records.append(data.DailyRecord(day0 + datetime.timedelta(days=60), 0, 0, 7))
    records.append(data.DailyRecord(day0 + datetime.timedelta(days=61), 0, 0, 8))
    labels = data.label_days(data.PatientSeries("tie", records)).labels
    assert labels[60] == 0 and labels[61] == 1

    # bit-exact reproducibility from regeneration through labeling
    again = synth.generate_patient(synth.SynthConfig(seed=42, days=1000))
    assert np.array_equal(base, data.label_days(again).labels)
    assert base.tobytes() == data.label_days(series).labels.tobytes()

    print("PASS criterion 4: causality, strict tie rule, bit-exact labels on a 1000-day series")


def test_criterion_5_learning_capability(cohort):
    # (a) a linearly separable planted set must be driven to >= 0.99 train AUC
    rng = np.random.default_rng(0)
    lookback, channels = 16, 2
    direction = rng.standard_normal(lookback * channels)
    samples = []
    day0 = datetime.date(2022, 1, 1)
    while len(samples) < 200:
        x = rng.standard_normal((lookback, channels))
        score = float(direction @ x.reshape(-1))
        if abs(score) < 1.0:
            continue
        samples.append(
            WindowSample(x=x, y=int(score > 0), horizon=1,
                         anchor_date=day0 + datetime.timedelta(days=len(samples)))
        )
    cfg = ModelConfig(lookback=lookback, patch_length=4, stride=2, kernel_sizes=(3, 5),
                      embed_features=8, embed_dim=16, heads=2, encoder_layers=1, ffn_dim=32)
    model = SeizureFormer(cfg, np.random.default_rng(1))
    _, history = train_loop(
        model, samples, samples, TrainConfig(seed=1, max_epochs=200, patience=25, batch_size=64)
    )
    train_auc = evaluate(model, samples).roc_auc
    assert train_auc >= 0.99, f"separable-set train ROC AUC {train_auc:.4f}"
    assert len(history.train_loss) <= 200

    # (b) cohort: mean horizon-1 test ROC AUC >= 0.75 and above the logistic mean
    model_mean = float(np.mean([cohort["full"][(s, 1)].roc_auc for s in SEEDS]))
    logistic_mean = float(np.mean([cohort["logistic"][s].roc_auc for s in SEEDS]))
    assert model_mean >= 0.75, f"cohort mean ROC AUC {model_mean:.4f}"
    assert model_mean > logistic_mean, f"model {model_mean:.4f} vs logistic {logistic_mean:.4f}"

    # (c) the headline runs stay inside a laptop-scale budget
    assert cohort["headline_elapsed"] < 900.0, f"headline runs took {cohort['headline_elapsed']:.0f}s"

    print(
        f"PASS criterion 5: separable train AUC {train_auc:.3f} in {len(history.train_loss)} epochs; "
        f"cohort ROC AUC {model_mean:.4f} > logistic {logistic_mean:.4f}; "
        f"headline runs {cohort['headline_elapsed']:.0f}s < 900s"
    )


def test_criterion_6_ablation_direction(cohort):
    cells = [(s, h) for s in SEEDS for h in GATED_HORIZONS]
    full_pr = float(np.mean([cohort["full"][c].pr_auc for c in cells]))
    noall_pr = float(np.mean([cohort["noall"][c].pr_auc for c in cells]))
    assert full_pr >= noall_pr, f"full {full_pr:.4f} < w/o-all {noall_pr:.4f}"

    # informational: single-module ablations at horizon 1 (reported, not gated)
    full_h1 = float(np.mean([cohort["full"][(s, 1)].pr_auc for s in SEEDS]))
    report_lines = [f"  Full Model PR AUC (h=1): {full_h1:.4f}"]
    for variant, runs in cohort["single_ablations"].items():
        mean_pr = float(np.mean([runs[s].pr_auc for s in SEEDS]))
        report_lines.append(f"  {variant} PR AUC (h=1): {mean_pr:.4f}")

    print(
        f"PASS criterion 6: mean PR AUC over horizons {GATED_HORIZONS} "
        f"full {full_pr:.4f} >= w/o All Modules {noall_pr:.4f}"
    )
    for line in report_lines:
        print(line)


def test_criterion_7_early_stopping_and_weighting():
    # early stopping lands within `patience` epochs of the best epoch
    train_s, val_s, _ = build_splits(1, 1)
    model = SeizureFormer(ModelConfig(), np.random.default_rng(3))
    _, history = train_loop(model, train_s, val_s, TrainConfig(seed=3, patience=5, max_epochs=30))
    gap = (len(history.val_roc_auc) - 1) - history.best_epoch
    assert gap <= 5
    if history.stop_reason == "early_stopping":
        assert gap == 5

    # pos_weight is exactly (#neg / #pos) of the training split
    y_train = np.array([s.y for s in train_s])
    expected = float((y_train == 0).sum()) / float((y_train == 1).sum())
    assert history.pos_weight == expected

    # pos_weight = 1 reduces the loss to plain mean BCE
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = int(rng.integers(2, 64))
        probs = rng.uniform(0.01, 0.99, size=n)
        labels = rng.integers(0, 2, size=n)
        ours = weighted_bce(Tensor(probs.reshape(n, 1)), labels, 1.0).item()
        assert abs(ours - plain_bce(probs, labels)) < 1e-12

    print(
        f"PASS criterion 7: stop {gap} epochs after best ({history.stop_reason}); "
        f"pos_weight {history.pos_weight:.4f} exact; unit-weight loss matches plain BCE"
    )


def test_criterion_8_benchmark_reproducibility(tmp_path):
    fast = [
        "--set", "max_epochs=2", "--set", "embed_dim=8", "--set", "ffn_dim=16",
        "--set", "encoder_layers=1", "--set", "kernel_sizes=3", "--set", "embed_features=4",
    ]
    outputs = []
    for run in range(2):
        out = tmp_path / f"table{run}.csv"
        code = main(
            ["benchmark", "--cohort-seeds", "1,2", "--horizons", "1", "--days", "240", "--out", str(out)]
            + fast
        )
        assert code == 0
        outputs.append(out.read_bytes() + (tmp_path / f"table{run}.csv.manifest").read_bytes())
    assert outputs[0] == outputs[1]
    print("PASS criterion 8: benchmark table and manifest byte-identical across consecutive runs")
