"""Scorecards, paired t-tests and Holm-Bonferroni correction."""

from collections.abc import Sequence
from pathlib import Path
from statistics import fmean
from typing import Any

import numpy as np
from scipy import stats

from crisisvit.errors import ConfigurationError, DataError, StatisticsError
from crisisvit.models.labels import TASK_COLUMNS
from crisisvit.models.results import Comparison, RunResult, SignificanceReport, SystemScorecard

DEFAULT_ALPHA = 0.01
PAIRINGS = ("run", "example")


def scorecard(
    results: dict[str, list[RunResult]],
    system: str,
    *,
    record_root: Path | None = None,
    record_paths: dict[str, list[Path]] | None = None,
    **details: Any,
) -> SystemScorecard:
    """Collect per-run test accuracies (as percentages) for every benchmark task.

    Args:
        results: Run results keyed by task id
        system: Row name in reports
        record_root: Directory saved record paths are made relative to
        record_paths: Saved RunResult records per task, kept for example pairing
        **details: Remaining SystemScorecard fields (family, methodology, ...)

    Raises:
        DataError: if a task is missing or has no runs
    """
    missing = [task for task in TASK_COLUMNS if not results.get(task)]
    if missing:
        raise DataError(f"{system}: no runs for task(s) {', '.join(missing)}")
    runs = {task: [r.accuracy * 100.0 for r in results[task]] for task in TASK_COLUMNS}
    records = {}
    for task, paths in (record_paths or {}).items():
        records[task] = [str(p.relative_to(record_root) if record_root else p) for p in paths]
    return SystemScorecard(system=system, runs=runs, run_records=records, **details)


def paired_t_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Two-sided p-value of a paired t-test.

    All-zero differences give 1.0. Constant nonzero differences (zero
    variance) give 0.0.

    Raises:
        StatisticsError: on unequal lengths, fewer than two pairs, or
            non-finite values
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise StatisticsError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise StatisticsError(f"a paired t-test needs at least 2 pairs, got {a.size}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise StatisticsError("paired samples contain non-finite values")
    diff = a - b
    if not diff.any():
        return 1.0
    if np.ptp(diff) == 0.0:
        return 0.0
    p_value = float(stats.ttest_rel(a, b).pvalue)
    return min(max(p_value, 0.0), 1.0)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise StatisticsError(f"alpha must be in (0, 1), got {alpha}")


def _check_p_values(p_values: Sequence[float]) -> list[float]:
    values = [float(p) for p in p_values]
    bad = [p for p in values if not 0.0 <= p <= 1.0]
    if bad:
        raise StatisticsError(f"p-values outside [0, 1]: {bad}")
    return values


def holm_bonferroni(p_values: Sequence[float], alpha: float = DEFAULT_ALPHA) -> list[bool]:
    """Step-down Holm-Bonferroni decisions, in input order.

    Sorted ascending, the i-th smallest p (0-based) is rejected while
    p <= alpha / (m - i); the first failure stops all further rejections.

    Raises:
        StatisticsError: if a p-value is outside [0, 1] or alpha outside (0, 1)
    """
    _check_alpha(alpha)
    values = _check_p_values(p_values)
    m = len(values)
    order = sorted(range(m), key=lambda i: (values[i], i))
    decisions = [False] * m
    for rank, index in enumerate(order):
        if values[index] > alpha / (m - rank):
            break
        decisions[index] = True
    return decisions


def holm_adjusted(p_values: Sequence[float]) -> list[float]:
    """Holm-adjusted p-values (monotone, capped at 1), in input order."""
    values = _check_p_values(p_values)
    m = len(values)
    order = sorted(range(m), key=lambda i: (values[i], i))
    adjusted = [0.0] * m
    running = 0.0
    for rank, index in enumerate(order):
        running = max(running, min(1.0, (m - rank) * values[index]))
        adjusted[index] = running
    return adjusted


def bonferroni(p_values: Sequence[float], alpha: float = DEFAULT_ALPHA) -> list[bool]:
    _check_alpha(alpha)
    values = _check_p_values(p_values)
    return [p <= alpha / len(values) for p in values]


def example_correctness(card: SystemScorecard) -> dict[tuple[str, str], float]:
    """Per-example correctness averaged over runs, keyed by (task, example id).

    Raises:
        DataError: if the scorecard has no saved run records for a task
    """
    vector: dict[tuple[str, str], float] = {}
    for task in TASK_COLUMNS:
        paths = card.run_record_paths(task)
        if not paths:
            raise DataError(f"{card.system}: no saved predictions for task '{task}'")
        runs = [RunResult.load(path).correctness() for path in paths]
        shared = set.intersection(*(set(run) for run in runs))
        for example_id in sorted(shared):
            vector[(task, example_id)] = fmean(float(run[example_id]) for run in runs)
    return vector


def _paired_samples(
    card: SystemScorecard, baseline: SystemScorecard, pairing: str, cache: dict[str, dict[tuple[str, str], float]]
) -> tuple[list[float], list[float]]:
    if pairing == "run":
        n = min(card.n_runs, baseline.n_runs)
        return card.run_averages()[:n], baseline.run_averages()[:n]
    for c in (card, baseline):
        if c.system not in cache:
            cache[c.system] = example_correctness(c)
    ours, theirs = cache[card.system], cache[baseline.system]
    keys = sorted(ours.keys() & theirs.keys())
    return [ours[k] for k in keys], [theirs[k] for k in keys]


def significance(
    scorecards: Sequence[SystemScorecard],
    baseline: str,
    alpha: float = DEFAULT_ALPHA,
    pairing: str = "run",
) -> SignificanceReport:
    """Test every reproduced system against the baseline, Holm-corrected.

    Reference rows carry no runs to pair and are left out, as are systems
    with fewer than two pairs. When the baseline is itself a reference row
    there is nothing to test.

    Args:
        scorecards: All systems, baseline included
        baseline: Name of the baseline system
        alpha: Family-wise significance level
        pairing: ``run`` pairs per-run AVG by seed index; ``example`` pairs
            per-example correctness by example id

    Raises:
        ConfigurationError: for an unknown baseline or pairing
    """
    if pairing not in PAIRINGS:
        raise ConfigurationError(f"pairing must be one of {PAIRINGS}, got '{pairing}'", field="pairing")
    by_name = {card.system: card for card in scorecards}
    if baseline not in by_name:
        raise ConfigurationError(f"baseline '{baseline}' is not among the systems", field="baseline")
    base = by_name[baseline]
    if base.reference:
        return SignificanceReport(baseline, alpha, (), pairing=pairing)

    cache: dict[str, dict[tuple[str, str], float]] = {}
    tested: list[tuple[str, float]] = []
    for card in scorecards:
        if card.system == baseline or card.reference:
            continue
        a, b = _paired_samples(card, base, pairing, cache)
        if len(a) < 2:
            continue
        tested.append((card.system, paired_t_test(a, b)))
    if not tested:
        return SignificanceReport(baseline, alpha, (), pairing=pairing)
    decisions = holm_bonferroni([p for _, p in tested], alpha)
    comparisons = tuple(Comparison(name, p, d) for (name, p), d in zip(tested, decisions, strict=True))
    return SignificanceReport(baseline, alpha, comparisons, pairing=pairing)
