import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from crwm.evaluation import (
    ExperimentConfig,
    PrequentialReport,
    SyntheticExpertSpec,
    SyntheticStream,
    beta_sweep,
    compare,
    expert_rate_table,
    expert_rates,
    generate_synthetic_stream,
    paired_t_test,
    random_synthetic_spec,
    run_experiment,
    run_prequential,
    specialist_spec,
)
from crwm.stream_io import load_arff

from conftest import DATA_DIR

PERFECT = SyntheticExpertSpec(((0.0, 0.0),), (0.5, 0.5), 200)


class TestSyntheticStream:
    def test_zero_error(self):
        s = generate_synthetic_stream(SyntheticExpertSpec(((0.0, 0.0), (0.0, 0.0)), (0.3, 0.7), 500))
        assert (s.predictions == s.y[:, None]).all()

    def test_class_conditional_rates(self):
        s = generate_synthetic_stream(SyntheticExpertSpec(((0.3, 0.1),), (0.5, 0.5), 100_000, seed=1))
        wrong = s.predictions[:, 0] != s.y
        assert abs(wrong[s.y == 0].mean() - 0.3) < 0.01
        assert abs(wrong[s.y == 1].mean() - 0.1) < 0.01

    def test_wrong_label_uniform_over_other_classes(self):
        s = generate_synthetic_stream(SyntheticExpertSpec(((1.0, 1.0, 1.0),), (1.0, 0.0, 0.0), 30_000))
        counts = np.bincount(s.predictions[:, 0], minlength=3)
        assert counts[0] == 0 and abs(counts[1] / counts[2] - 1) < 0.05

    def test_determinism(self):
        spec = specialist_spec(500, seed=4)
        a, b = generate_synthetic_stream(spec), generate_synthetic_stream(spec)
        c = generate_synthetic_stream(specialist_spec(500, seed=5))
        assert np.array_equal(a.predictions, b.predictions) and np.array_equal(a.y, b.y)
        assert not np.array_equal(a.y, c.y)

    @pytest.mark.parametrize("kw", [
        dict(error_rates=((1.2, 0.0),), prior=(0.5, 0.5), length=5),
        dict(error_rates=((0.1, 0.0),), prior=(0.6, 0.5), length=5),
        dict(error_rates=((0.1, 0.0),), prior=(1.0,), length=5),
        dict(error_rates=((0.1, 0.0),), prior=(0.5, 0.5), length=0),
    ])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            SyntheticExpertSpec(**kw)


class TestRunPrequential:
    def test_perfect_single_expert(self):
        for algo in ("rwm", "crwm"):
            r = run_prequential(algo, PERFECT, ExperimentConfig(algorithm=algo))
            assert r.accuracy == 1.0 and r.expected_mistakes == 0.0

    def test_counts_conserved(self):
        r = run_prequential("crwm", specialist_spec(2000), ExperimentConfig(), seed=2)
        assert r.routed_counts.sum() == r.n_instances == 2000
        assert r.mistakes + r.correct == 2000
        assert math.isclose(r.learner_expected_mistakes.sum(), r.expected_mistakes)
        assert (r.expert_confusion.sum(axis=(1, 2)) == 2000).all()
        off_diag = r.expert_confusion.sum(axis=(1, 2)) - np.trace(r.expert_confusion, axis1=1, axis2=2)
        np.testing.assert_array_equal(off_diag, r.expert_region_mistakes.sum(axis=1))

    def test_region_rates_consistent(self):
        r = run_prequential("crwm", specialist_spec(2000), ExperimentConfig(), seed=2)
        K = r.routed_counts
        X = r.expert_region_mistakes / np.maximum(K, 1)
        np.testing.assert_allclose(X * K, r.expert_region_mistakes)

    def test_bounds_on_random_configs(self):
        rng = np.random.default_rng(0)
        for i in range(100):
            n = int(rng.integers(1, 20))
            spec = random_synthetic_spec(rng, n, 2, int(rng.integers(50, 500)), i)
            beta = float(rng.choice([0.1, 0.5, 0.9]))
            r = run_prequential("rwm", spec, ExperimentConfig(algorithm="rwm", beta=beta), seed=i)
            assert not r.bound_violations()
            for k in range(n):
                assert r.expected_mistakes <= r.rwm_bound if k == r.best_expert else True

    def test_specialists_crwm_beats_rwm(self):
        spec = specialist_spec(10_000)
        c = run_prequential("crwm", spec, seed=0)
        w = run_prequential("rwm", spec, seed=0)
        assert c.mistakes < w.mistakes
        assert c.crwm_bound < c.rwm_bound and c.crossover

    def test_real_dataset_run(self):
        d = load_arff(DATA_DIR / "breast-w.arff")
        r = run_prequential("crwm", d, ExperimentConfig(n_experts=10), seed=0)
        assert r.accuracy > 0.9
        r.check_bounds()
        assert r.bound > r.mistakes

    @pytest.mark.parametrize("algo", ["online_bagging", "online_boosting"])
    def test_baselines(self, algo):
        d = load_arff(DATA_DIR / "breast-w.arff")
        r = run_prequential(algo, d, ExperimentConfig(algorithm=algo, n_experts=5), seed=0)
        assert r.accuracy > 0.85 and not r.has_experts

    def test_baselines_need_features(self):
        with pytest.raises(ValueError):
            run_prequential("online_bagging", PERFECT)

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError):
            run_prequential("halving", PERFECT)

    def test_multiclass(self):
        spec = SyntheticExpertSpec(((0.1, 0.5, 0.5), (0.5, 0.1, 0.5), (0.3, 0.3, 0.3)), (1 / 3, 1 / 3, 1 / 3), 600)
        r = run_prequential("crwm", spec, ExperimentConfig(class_order=(2, 0, 1)), seed=1)
        assert r.routed_counts.shape == (4,) and not r.bound_violations()


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig()
        assert (c.n_experts, c.beta, c.runs, c.subspace, c.keep_prob) == (100, 0.5, 50, True, 0.7)

    @pytest.mark.parametrize("kw", [dict(beta=1.0), dict(runs=0), dict(n_experts=0), dict(algorithm="wm"),
                                    dict(keep_prob=0.0), dict(seed=-1), dict(betas=(0.5, 1.2))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)


class TestRunExperiment:
    def test_paired_seeds(self):
        rep = run_experiment("rwm", specialist_spec(200), ExperimentConfig(runs=3, seed=10))
        assert [r.seed for r in rep.runs] == [10, 11, 12]

    def test_parallel_matches_serial(self):
        cfg = ExperimentConfig(runs=3)
        a = run_experiment("crwm", specialist_spec(300), cfg)
        b = run_experiment("crwm", specialist_spec(300), cfg, jobs=2)
        assert [r.mistakes for r in a.runs] == [r.mistakes for r in b.runs]

    def test_summary(self):
        rep = run_experiment("crwm", specialist_spec(300), ExperimentConfig(runs=4))
        s = rep.summary()
        assert s["runs"] == 4 and math.isclose(s["mean_accuracy"], rep.accuracies.mean())
        assert s["bound_violations"] == 0
        assert PrequentialReport("crwm", "x", ExperimentConfig()).summary() == {}


class TestPairedTTest:
    def test_identical(self):
        r = paired_t_test([1, 2, 3], [1, 2, 3])
        assert (r.t, r.p, r.verdict) == (0.0, 1.0, "draw")

    def test_constant_difference(self):
        r = paired_t_test([2, 3, 4, 5, 6], [1, 2, 3, 4, 5])
        assert r.p == 0.0 and r.verdict == "win"
        assert paired_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6]).verdict == "lose"

    def test_worked_example(self):
        # ten differences with mean 1 and sample sd 1
        d = np.array([1, 2, 0, 1, 2, 0, 1, 2, 0, 1], dtype=float)
        d = 1.0 + (d - d.mean()) / d.std(ddof=1)
        r = paired_t_test(d, np.zeros(10))
        assert abs(r.t - 3.1623) < 1e-3
        assert abs(r.p - 0.0115) < 1e-3
        assert r.df == 9 and r.verdict == "win"
        # reference t-distribution
        assert abs(r.p - 2 * stats.t.sf(math.sqrt(10), 9)) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=2, max_size=30))
    def test_matches_scipy(self, pairs):
        a, b = np.array(pairs).T
        d = a - b
        if np.ptp(d) < 1e-6 * max(1.0, np.abs(d).max()):
            return
        r = paired_t_test(a, b)
        ref = stats.ttest_rel(a, b)
        assert math.isclose(r.t, ref.statistic, rel_tol=1e-7, abs_tol=1e-9)
        assert math.isclose(r.p, ref.pvalue, rel_tol=1e-6, abs_tol=1e-12)
        for alt in ("greater", "less"):
            assert math.isclose(paired_t_test(a, b, alternative=alt).p,
                                stats.ttest_rel(a, b, alternative=alt).pvalue, rel_tol=1e-6, abs_tol=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            paired_t_test([1], [1])
        with pytest.raises(ValueError):
            paired_t_test([1, 2], [1, 2, 3])
        with pytest.raises(ValueError):
            paired_t_test([1, 2], [1, 3], alternative="both")


class TestCompareAndSweep:
    def test_compare_verdict(self):
        reports, tests = compare(["rwm", "crwm"], specialist_spec(3000), ExperimentConfig(runs=10))
        assert set(reports) == {"rwm", "crwm"} and tests["rwm"].verdict in ("win", "draw", "lose")

    def test_sweep_perfect_expert(self):
        table = beta_sweep("crwm", PERFECT, [0.1, 0.5, 0.9], runs=2, seed=0)
        assert [acc for _, acc in table] == [1.0, 1.0, 1.0]

    def test_sweep_reproducible(self):
        a = beta_sweep("rwm", specialist_spec(500), [0.2, 0.8], runs=2, seed=3)
        b = beta_sweep("rwm", specialist_spec(500), [0.2, 0.8], runs=2, seed=3)
        assert a == b and all(0 <= acc <= 1 for _, acc in a)

    def test_default_beta_near_best(self):
        table = dict(beta_sweep("crwm", specialist_spec(10_000), ExperimentConfig().betas, runs=5, seed=0))
        assert max(table.values()) - table[0.5] < 0.01


class TestExpertRates:
    def test_identical_experts(self):
        # every expert errs on exactly 20 of 100 instances of each class
        y = np.repeat([0, 1], 100)
        pred = y.copy()
        pred[:20] = 1
        pred[100:120] = 0
        same = SyntheticStream(y, np.repeat(pred[:, None], 3, axis=1), 2)
        rep = run_experiment("rwm", same, ExperimentConfig(runs=1))
        raw = expert_rate_table(rep)[0]
        assert raw.best_fp == raw.best_fn == raw.best_error == 0.2
        assert not raw.fp_flag and not raw.fn_flag

    def test_specialists_flagged(self):
        rep = run_experiment("crwm", specialist_spec(5000), ExperimentConfig(runs=2))
        raw, biased = expert_rate_table(rep)
        assert raw.fp_flag and raw.fn_flag
        assert raw.kind == "raw" and biased.kind == "biased"

    def test_rate_definitions(self):
        r = run_prequential("rwm", specialist_spec(4000), seed=0)
        rates = expert_rates(r)
        c = r.confusion_counts()
        k = 0
        assert math.isclose(rates["fp"][k], c["fp"][k] / (c["fp"][k] + c["tn"][k]))
        assert math.isclose(rates["biased_fp"][k], (c["fp"][k] + 1) / (c["fp"][k] + c["tp"][k] + 2))
        assert abs(rates["fn"][0] - 0.30) < 0.03 and abs(rates["fp"][0] - 0.10) < 0.03

    def test_ionosphere_structure(self):
        d = load_arff(DATA_DIR / "ionosphere.arff")
        rep = run_experiment("crwm", d, ExperimentConfig(runs=1, n_experts=20))
        rows = expert_rate_table(rep)
        assert [r.kind for r in rows] == ["raw", "biased"]
        assert all(0 <= v <= 1 for r in rows for v in (r.best_fp, r.best_fn, r.best_error))
