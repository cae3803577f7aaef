import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import accuracy_bf, auprc_bf, auroc_bf, f1_bf
from spikeflag.errors import ConfigError, ShapeError, UndefinedMetricError
from spikeflag.metrics import MetricsReport, accuracy, aggregate, auprc, auroc, evaluate, f1


def random_instance(rng, n=None, both=True):
    n = n or int(rng.integers(2, 65))
    truth = rng.random(n) < rng.uniform(0.1, 0.9)
    if both:
        truth[0], truth[1] = True, False
    # coarse grid so ties are common
    scores = rng.integers(0, rng.integers(2, 12), size=n) / 10
    return scores, truth


class TestAccuracyF1:
    def test_examples(self):
        t = np.array([1, 0, 1, 1], bool)
        assert accuracy(t, t) == 1.0
        assert accuracy(~t, t) == 0.0
        assert accuracy([1, 0, 1, 0], t) == 0.75
        assert f1([1, 1, 0, 0], [1, 0, 1, 0]) == 0.5
        assert f1(t, t) == 1.0
        assert f1(np.zeros(5), np.zeros(5)) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            accuracy([1, 0], [1, 0, 1])
        with pytest.raises(ShapeError):
            f1([], [])

    def test_oracle(self, rng):
        for _ in range(200):
            p = rng.random(int(rng.integers(1, 65))) < 0.5
            t = rng.random(p.size) < 0.3
            assert accuracy(p, t) == pytest.approx(accuracy_bf(p, t), abs=1e-12)
            assert f1(p, t) == pytest.approx(f1_bf(p, t), abs=1e-12)


class TestAuroc:
    def test_examples(self):
        assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
        assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert auroc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            auroc([0.1, 0.2], [1, 1])
        with pytest.raises(UndefinedMetricError):
            auroc([0.1, 0.2], [0, 0])

    def test_oracle(self, rng):
        for _ in range(300):
            s, t = random_instance(rng)
            assert abs(auroc(s, t) - auroc_bf(s, t)) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(-50, 50), min_size=4, max_size=40, unique=True), st.integers(0, 2**31))
    def test_monotone_invariance_and_reversal(self, scores, seed):
        s = np.array(scores) / 10.0
        t = np.random.default_rng(seed).random(s.size) < 0.5
        t[0], t[1] = True, False
        a = auroc(s, t)
        assert auroc(np.exp(s) * 3 + 1, t) == pytest.approx(a, abs=1e-12)
        assert auroc(s**3, t) == pytest.approx(a, abs=1e-12)
        assert a + auroc(-s, t) == pytest.approx(1.0, abs=1e-12)


class TestAuprc:
    def test_examples(self):
        assert auprc([0.9, 0.8, 0.1], [1, 0, 1]) == pytest.approx(5 / 6, abs=1e-12)
        assert auprc([0.9, 0.8, 0.1, 0.0], [1, 1, 0, 0]) == 1.0

    def test_constant_scores_give_prevalence(self, rng):
        for _ in range(50):
            t = rng.random(int(rng.integers(2, 64))) < 0.4
            t[0] = True
            assert auprc(np.full(t.size, 0.3), t) == pytest.approx(t.mean(), abs=1e-12)

    def test_perfect_ranker_at_least_prevalence(self, rng):
        t = rng.random(40) < 0.3
        t[0] = True
        assert auprc(t.astype(float), t) == 1.0 >= t.mean()

    def test_no_positives(self):
        with pytest.raises(UndefinedMetricError):
            auprc([0.1, 0.2], [0, 0])

    def test_oracle(self, rng):
        for _ in range(300):
            s, t = random_instance(rng)
            assert abs(auprc(s, t) - auprc_bf(s, t)) <= 1e-12


class TestAggregate:
    def trial(self, v):
        return {"accuracy": v, "auroc": v, "auprc": v, "f1": v}

    def test_single(self):
        rep = aggregate([self.trial(0.7)])
        assert rep.mean["f1"] == 0.7 and rep.std["f1"] == 0.0 and rep.n_trials == 1

    def test_population_std(self):
        rep = aggregate([self.trial(0.9), self.trial(1.0)])
        assert rep.mean["auprc"] == pytest.approx(0.95)
        assert rep.std["auprc"] == pytest.approx(0.05)
        assert rep.std_convention == "population"

    def test_identical(self):
        assert aggregate([self.trial(0.8)] * 5).std["accuracy"] == 0.0

    def test_empty(self):
        with pytest.raises(ConfigError):
            aggregate([])

    def test_round_trip(self):
        rep = aggregate([self.trial(0.9), self.trial(0.8)])
        assert MetricsReport.from_dict(rep.to_dict()) == rep

    def test_evaluate(self):
        m = evaluate([1, 0, 1, 0], [0.9, 0.2, 0.8, 0.1], [1, 0, 1, 0])
        assert m == {"accuracy": 1.0, "auroc": 1.0, "auprc": 1.0, "f1": 1.0}
