"""Tests for scorecards, paired t-tests and Holm-Bonferroni correction."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as scipy_stats

from crisisvit.errors import ConfigurationError, DataError, StatisticsError
from crisisvit.models.labels import TASK_COLUMNS
from crisisvit.models.results import Prediction, RunResult, SystemScorecard
from crisisvit.services.stats import (
    bonferroni,
    holm_adjusted,
    holm_bonferroni,
    paired_t_test,
    scorecard,
    significance,
)

p_values = st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=20)
hundredths = st.integers(min_value=0, max_value=10_000).map(lambda v: v / 100)


def brute_force_holm(values, alpha):
    """Reject the k smallest p-values for the largest k whose whole prefix passes."""
    m = len(values)
    ranked = sorted(range(m), key=lambda i: (values[i], i))
    k = 0
    while k < m and all(values[ranked[j]] <= alpha / (m - j) for j in range(k + 1)):
        k += 1
    rejected = set(ranked[:k])
    return [i in rejected for i in range(m)]


def _card(system, per_task, reference=False):
    """Scorecard whose every task has the given list of run accuracies."""
    return SystemScorecard(system, {task: list(per_task) for task in TASK_COLUMNS}, reference=reference)


def _result(task, seed, accuracy):
    return RunResult(task, seed, "digest", "test", (), accuracy)


class TestPairedTTest:
    """Two-sided paired t-test and its degenerate cases."""

    def test_consistent_gain_is_significant(self):
        a = [81.0, 82.1, 80.9, 81.0, 82.0]
        b = [80.0, 81.0, 80.0, 80.0, 81.0]
        assert paired_t_test(a, b) < 0.001

    def test_two_opposite_pairs(self):
        assert paired_t_test([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)

    def test_identical_samples(self):
        assert paired_t_test([80.0, 81.0, 82.0], [80.0, 81.0, 82.0]) == 1.0

    def test_constant_nonzero_difference(self):
        assert paired_t_test([2.0, 3.0, 4.0], [1.0, 2.0, 3.0]) == 0.0

    def test_unequal_lengths(self):
        with pytest.raises(StatisticsError):
            paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0])

    def test_single_pair(self):
        with pytest.raises(StatisticsError):
            paired_t_test([1.0], [2.0])

    def test_non_finite(self):
        with pytest.raises(StatisticsError):
            paired_t_test([1.0, math.nan], [1.0, 2.0])

    @given(st.lists(st.tuples(hundredths, hundredths), min_size=3, max_size=12))
    def test_matches_t_distribution(self, pairs):
        a = [x for x, _ in pairs]
        b = [y for _, y in pairs]
        diffs = [x - y for x, y in pairs]
        n = len(diffs)
        mean = sum(diffs) / n
        sd = math.sqrt(sum((d - mean) ** 2 for d in diffs) / (n - 1))
        if sd < 1e-6:
            return
        t = mean / (sd / math.sqrt(n))
        expected = 2 * scipy_stats.t.sf(abs(t), n - 1)
        assert paired_t_test(a, b) == pytest.approx(expected, abs=1e-6)

    @given(st.lists(st.tuples(hundredths, hundredths), min_size=2, max_size=10))
    def test_symmetric_in_argument_order(self, pairs):
        a = [x for x, _ in pairs]
        b = [y for _, y in pairs]
        assert paired_t_test(a, b) == pytest.approx(paired_t_test(b, a), abs=1e-12)


class TestHolmBonferroni:
    """Step-down decisions against a brute-force reference."""

    def test_all_rejected(self):
        assert holm_bonferroni([0.001, 0.02, 0.04], alpha=0.05) == [True, True, True]

    def test_stops_at_first_failure(self):
        assert holm_bonferroni([0.04, 0.001, 0.03], alpha=0.05) == [False, True, False]

    def test_single_hypothesis(self):
        assert holm_bonferroni([0.009]) == [True]
        assert holm_bonferroni([0.011]) == [False]

    def test_nothing_rejected(self):
        assert holm_bonferroni([1.0, 1.0, 1.0]) == [False, False, False]

    def test_empty(self):
        assert holm_bonferroni([]) == []

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1])
    def test_invalid_alpha(self, alpha):
        with pytest.raises(StatisticsError):
            holm_bonferroni([0.01], alpha=alpha)

    def test_invalid_p_value(self):
        with pytest.raises(StatisticsError):
            holm_bonferroni([0.01, 1.5])

    @given(p_values, st.sampled_from([0.01, 0.05, 0.1]))
    def test_matches_brute_force(self, values, alpha):
        assert holm_bonferroni(values, alpha) == brute_force_holm(values, alpha)

    @given(p_values, st.sampled_from([0.01, 0.05]))
    def test_rejects_at_least_what_bonferroni_rejects(self, values, alpha):
        holm = holm_bonferroni(values, alpha)
        for holm_decision, bonferroni_decision in zip(holm, bonferroni(values, alpha), strict=True):
            assert holm_decision or not bonferroni_decision

    @given(p_values)
    def test_smaller_p_rejected_first(self, values):
        decisions = holm_bonferroni(values, 0.05)
        for i, rejected in enumerate(decisions):
            if rejected:
                assert all(decisions[j] for j in range(len(values)) if values[j] < values[i])

    @given(p_values)
    def test_adjusted_values_agree_with_decisions(self, values):
        adjusted = holm_adjusted(values)
        assert all(0.0 <= p <= 1.0 for p in adjusted)
        ranked = sorted(range(len(values)), key=lambda i: (values[i], i))
        assert [adjusted[i] for i in ranked] == sorted(adjusted[i] for i in ranked)


class TestScorecard:
    """Per-task means and AVG from run results."""

    def test_avg_of_task_means(self):
        means = {
            "disaster_types": 0.8410,
            "informativeness": 0.8659,
            "humanitarian": 0.7943,
            "damage_severity": 0.7718,
        }
        results = {task: [_result(task, 0, m)] for task, m in means.items()}
        card = scorecard(results, "ViT-Base", family="vit")
        assert card.avg == pytest.approx(81.825)
        assert card.means["informativeness"] == pytest.approx(86.59)
        assert card.family == "vit"

    def test_zero_accuracy_everywhere(self):
        results = {task: [_result(task, s, 0.0) for s in range(3)] for task in TASK_COLUMNS}
        card = scorecard(results, "broken")
        assert card.avg == 0.0
        assert card.n_runs == 3

    def test_missing_task(self):
        results = {task: [_result(task, 0, 0.5)] for task in list(TASK_COLUMNS)[:3]}
        with pytest.raises(DataError, match="damage_severity"):
            scorecard(results, "partial")

    def test_run_averages(self):
        card = SystemScorecard(
            "x",
            {
                "disaster_types": [80.0, 84.0],
                "informativeness": [80.0, 84.0],
                "humanitarian": [80.0, 84.0],
                "damage_severity": [80.0, 80.0],
            },
        )
        assert card.run_averages() == pytest.approx([80.0, 83.0])

    def test_record_paths_made_relative(self, tmp_path):
        results = {task: [_result(task, 0, 0.5)] for task in TASK_COLUMNS}
        paths = {"humanitarian": [tmp_path / "runs" / "humanitarian" / "seed-0.yaml"]}
        card = scorecard(results, "x", record_root=tmp_path, record_paths=paths)
        assert card.run_records == {"humanitarian": ["runs/humanitarian/seed-0.yaml"]}


class TestSignificance:
    """Systems against a baseline, Holm-corrected."""

    def test_consistent_gain_flagged(self):
        baseline = _card("base", [80.0, 81.0, 80.5])
        better = _card("better", [82.0, 83.0, 82.5])
        noisy = _card("noisy", [85.0, 76.0, 81.0])
        report = significance([baseline, better, noisy], "base")
        assert report.is_significant("better")
        assert not report.is_significant("noisy")
        assert report.baseline == "base"
        assert report.alpha == 0.01
        assert [c.system for c in report.comparisons] == ["better", "noisy"]

    def test_reference_rows_not_tested(self):
        baseline = _card("base", [80.0, 81.0, 80.5])
        published = _card("published", [90.0], reference=True)
        report = significance([baseline, published], "base")
        assert report.comparisons == ()

    def test_reference_baseline(self):
        report = significance([_card("base", [80.0], True), _card("ours", [81.0, 82.0, 83.0])], "base")
        assert report.comparisons == ()

    def test_unknown_baseline(self):
        with pytest.raises(ConfigurationError):
            significance([_card("a", [80.0, 81.0])], "b")

    def test_unknown_pairing(self):
        with pytest.raises(ConfigurationError):
            significance([_card("a", [80.0, 81.0])], "a", pairing="task")

    def test_example_pairing(self, tmp_path):
        """Per-example correctness, averaged over runs, paired by example id."""

        def saved(system, correct_upto):
            records = {}
            for task in TASK_COLUMNS:
                predictions = [Prediction(f"{task}-{i}", 1, 1 if i < correct_upto else 0) for i in range(10)]
                result = RunResult.from_predictions(task, 0, "d", "test", predictions)
                path = result.save(tmp_path / system / task / "seed-0")
                records[task] = [str(path.relative_to(tmp_path))]
            card = SystemScorecard(system, {task: [correct_upto * 10.0] for task in TASK_COLUMNS}, run_records=records)
            card.save(tmp_path / f"{system}.yaml")
            return SystemScorecard.load(tmp_path / f"{system}.yaml")

        base = saved("base", 2)
        ours = saved("ours", 9)
        report = significance([base, ours], "base", pairing="example")
        [comparison] = report.comparisons
        assert comparison.system == "ours"
        assert comparison.p_value < 0.001
        assert report.pairing == "example"

    def test_example_pairing_needs_records(self):
        with pytest.raises(DataError):
            significance([_card("base", [80.0, 81.0]), _card("ours", [82.0, 83.0])], "base", pairing="example")
