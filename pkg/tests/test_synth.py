import numpy as np
import pytest

from seizureformer import baselines, data, metrics, synth
from seizureformer.synth import SynthConfig, generate_cohort, generate_patient


def autocorr(x, lag):
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    denom = np.dot(x, x)
    return float(np.dot(x[:-lag], x[lag:]) / denom)


class TestGeneration:
    def test_seed_determinism(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        data.write_csv(generate_patient(SynthConfig(seed=9)), a)
        data.write_csv(generate_patient(SynthConfig(seed=9)), b)
        assert a.read_bytes() == b.read_bytes()

    def test_degenerate_config_constant_risk(self):
        cfg = SynthConfig(seed=0, days=200, weekly_amplitude=0, multiweek_amplitude=0, noise_scale=0, le_gain=0)
        series = generate_patient(cfg)
        labels = data.label_days(series)
        labeled = labels.labels[labels.labels != data.UNLABELED]
        assert np.all(labeled == 0)  # zero LE everywhere -> never above threshold

    def test_counts_non_negative_int(self):
        series = generate_patient(SynthConfig(seed=3, days=150))
        for r in series.records:
            assert r.ab_ch1 >= 0 and r.ab_ch2 >= 0 and r.le_count >= 0

    def test_days_too_short(self):
        with pytest.raises(ValueError, match="120"):
            generate_patient(SynthConfig(days=100))

    def test_weekly_cycle_in_le_autocorrelation(self):
        """With only a weekly cycle planted, LE autocorrelation peaks at lag 7."""
        for seed in range(5):
            cfg = SynthConfig(seed=seed, days=1000, multiweek_amplitude=0.0)
            le = [r.le_count for r in generate_patient(cfg).records]
            assert autocorr(le, 7) > autocorr(le, 3), f"seed {seed}"


class TestCohort:
    def test_one_patient_per_seed(self):
        cohort = generate_cohort([4, 5, 6])
        assert [p.patient_id for p in cohort] == ["synth-4", "synth-5", "synth-6"]

    def test_duplicate_seed_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            generate_cohort([1, 2, 1])

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            generate_cohort([])

    def test_regeneration_identical_bytes(self, tmp_path):
        for run in range(2):
            for i, patient in enumerate(generate_cohort([7, 8])):
                data.write_csv(patient, tmp_path / f"{run}-{i}.csv")
        assert (tmp_path / "0-0.csv").read_bytes() == (tmp_path / "1-0.csv").read_bytes()
        assert (tmp_path / "0-1.csv").read_bytes() == (tmp_path / "1-1.csv").read_bytes()


class TestLearnability:
    def test_logistic_floor_on_default_config(self):
        """The planted signal must be recoverable by a linear model."""
        series = generate_patient(SynthConfig(seed=1))
        norm = data.zscore_normalize(series)
        labels = data.label_days(series)
        samples = data.make_windows(norm, labels, 30, 1)
        train, _, test = data.split_chronological(samples)
        fit = baselines.logistic_fit(baselines.window_features(train), [s.y for s in train])
        scores = baselines.logistic_predict(fit, baselines.window_features(test))
        assert metrics.roc_auc(scores, [s.y for s in test]) > 0.6
