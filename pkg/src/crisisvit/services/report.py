"""Comparison tables over system scorecards.

Each report is a fixed-width text table plus a CSV companion that keeps
the unrounded values.
"""

from dataclasses import dataclass, field
from datetime import datetime
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path
from typing import Any

import pandas as pd
import yaml

from crisisvit.errors import ConfigurationError, DataError
from crisisvit.models.labels import TASK_COLUMNS
from crisisvit.models.results import SignificanceReport, SystemScorecard

FAMILY_ORDER = ("cnn", "vit", "crisisvit")
REFERENCE_TAG = "[paper-reported]"
SIGNIFICANT = "*"
SCORE_COLUMNS = (*TASK_COLUMNS.values(), "AVG")


def round_half_up(value: float, places: int = 2) -> Decimal:
    """Round the shortest decimal form of ``value``, halves away from zero."""
    return Decimal(repr(float(value))).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def load_reference_rows(path: Path | None = None) -> list[SystemScorecard]:
    """Load published rows as single-run reference scorecards.

    Args:
        path: YAML file with a ``rows`` list; the packaged file by default

    Raises:
        DataError: if a row lacks a task column
    """
    if path is None:
        text = resources.files("crisisvit.resources").joinpath("reference_rows.yaml").read_text()
    else:
        text = Path(path).read_text()
    cards = []
    for row in yaml.safe_load(text).get("rows", []):
        missing = [task for task in TASK_COLUMNS if task not in row]
        if missing:
            raise DataError(f"reference row '{row.get('system')}' lacks {', '.join(missing)}")
        cards.append(
            SystemScorecard(
                system=str(row["system"]),
                runs={task: [float(row[task])] for task in TASK_COLUMNS},
                family=row.get("family", ""),
                ssl_dataset=str(row.get("ssl_dataset", "")),
                supervised_dataset=str(row.get("supervised_dataset", "")),
                methodology=row.get("methodology", ""),
                epochs=row.get("epochs"),
                training_hours=row.get("training_hours"),
                reference=True,
            )
        )
    return cards


def _family_rank(card: SystemScorecard) -> tuple[int, str]:
    if card.family in FAMILY_ORDER:
        return FAMILY_ORDER.index(card.family), ""
    return len(FAMILY_ORDER), card.family


def sort_rows(scorecards: list[SystemScorecard]) -> list[SystemScorecard]:
    """Family order first, then supervised dataset, methodology and epochs."""
    return sorted(
        scorecards,
        key=lambda c: (_family_rank(c), c.supervised_dataset, c.methodology, c.epochs or 0, c.system),
    )


@dataclass
class ReportDocument:
    """A rendered comparison table and the numbers behind it."""

    text: str
    frame: pd.DataFrame  # unrounded, one row per system, in display order
    baseline: str
    best_system: str
    gains: dict[str, float] = field(default_factory=dict)  # best AVG minus each system's AVG
    significance: SignificanceReport | None = None

    def gain_over(self, system: str) -> float:
        return self.gains[system]

    def save(self, path: Path) -> tuple[Path, Path]:
        """Write ``<path>`` (text) and ``<path>.csv``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.text)
        csv_path = path.with_suffix(".csv")
        self.frame.to_csv(csv_path, index=False)
        return path, csv_path


def _display_row(
    card: SystemScorecard, column_max: dict[str, float], significance: SignificanceReport | None
) -> dict[str, Any]:
    scores = {TASK_COLUMNS[task]: mean for task, mean in card.means.items() if task in TASK_COLUMNS}
    scores["AVG"] = card.avg
    row: dict[str, Any] = {
        "System": f"{card.system} {REFERENCE_TAG}" if card.reference else card.system,
        "Self-Supervised": card.ssl_dataset or "-",
        "Supervised": card.supervised_dataset or "-",
        "Methodology": card.methodology or "-",
        "Epochs": card.epochs if card.epochs is not None else "-",
    }
    for column in SCORE_COLUMNS:
        cell = str(round_half_up(scores[column]))
        if round_half_up(scores[column]) == round_half_up(column_max[column]):
            cell = f"**{cell}**"
        if column == "AVG" and significance is not None and significance.is_significant(card.system):
            cell = f"{cell} {SIGNIFICANT}"
        row[column] = cell
    row["Time (h)"] = f"{card.training_hours:g}" if card.training_hours is not None else "N/A"
    return row


def _data_row(card: SystemScorecard, best: SystemScorecard, significance: SignificanceReport | None) -> dict[str, Any]:
    row: dict[str, Any] = {
        "system": card.system,
        "family": card.family,
        "reference": card.reference,
        "ssl_dataset": card.ssl_dataset,
        "supervised_dataset": card.supervised_dataset,
        "methodology": card.methodology,
        "epochs": card.epochs,
        "n_runs": card.n_runs,
    }
    for task, mean in card.means.items():
        row[task] = mean
    row["avg"] = card.avg
    row["gain_of_best"] = best.avg - card.avg
    comparison = next((c for c in significance.comparisons if c.system == card.system), None) if significance else None
    row["p_value"] = comparison.p_value if comparison else None
    row["significant"] = comparison.significant if comparison else False
    row["training_hours"] = card.training_hours
    return row


def emit_table(
    scorecards: list[SystemScorecard],
    significance: SignificanceReport | None,
    baseline: str,
    title: str = "Crisis Image Benchmark",
) -> ReportDocument:
    """Render scorecards as a comparison table against a baseline.

    Rows are grouped by family. Systems significantly different from the
    baseline get ``*`` after their AVG; the best value of every score
    column is wrapped in ``**``.

    Raises:
        ConfigurationError: if the baseline is not among the scorecards
        DataError: if there are no scorecards
    """
    if not scorecards:
        raise DataError("nothing to report: no scorecards")
    names = [c.system for c in scorecards]
    if baseline not in names:
        raise ConfigurationError(f"baseline '{baseline}' is not among: {', '.join(names)}", field="baseline")
    if len(set(names)) != len(names):
        raise ConfigurationError("system names must be unique within a report", field="system")

    rows = sort_rows(scorecards)
    if len(rows) < 2:
        significance = None
    column_max = {
        column: max((c.avg if column == "AVG" else c.means[task]) for c in rows)
        for task, column in [*TASK_COLUMNS.items(), ("avg", "AVG")]
    }
    best = max(rows, key=lambda c: c.avg)

    table = pd.DataFrame([_display_row(c, column_max, significance) for c in rows])
    frame = pd.DataFrame([_data_row(c, best, significance) for c in rows])
    gains = {c.system: best.avg - c.avg for c in rows}

    lines = [
        title,
        f"Generated: {datetime.now().strftime('%Y-%m-%d %H:%M')}",
        "",
        table.to_string(index=False),
        "",
        "Legend:",
        "  ** = best value in the column",
    ]
    if significance is not None:
        lines.append(
            f"  {SIGNIFICANT} = significant vs {baseline} "
            f"(paired t-test on {significance.pairing} pairs, Holm-Bonferroni, alpha={significance.alpha:g})"
        )
    if any(c.reference for c in rows):
        lines.append(f"  {REFERENCE_TAG} = published numbers, not reproduced here")
    lines.append("")
    lines.append(f"Best AVG: {best.system} ({round_half_up(best.avg)})")
    if best.system != baseline:
        lines.append(f"Gain over {baseline}: {gains[baseline]:+.2f}")
    for card in rows:
        if card.family == "cnn" and card.system != baseline:
            lines.append(f"Gain over {card.system}: {gains[card.system]:+.2f}")
    return ReportDocument(
        text="\n".join(lines) + "\n",
        frame=frame,
        baseline=baseline,
        best_system=best.system,
        gains=gains,
        significance=significance,
    )
