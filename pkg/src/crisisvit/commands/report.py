"""Report commands - comparison tables over completed experiments."""

from pathlib import Path

from rich.console import Console

from crisisvit.commands.base import Command
from crisisvit.services.experiment import build_report, load_scorecards, matrix
from crisisvit.services.report import ReportDocument
from crisisvit.settings import Settings


def _emit(out: Console, document: ReportDocument, output: Path | None) -> None:
    out.print()
    out.print(document.text, markup=False, highlight=False)
    if output is not None:
        text_path, csv_path = document.save(output)
        out.print(f"[green]✓ Wrote {text_path} and {csv_path}[/green]")


class MatrixCommand(Command):
    """One table across every completed experiment matching the patterns."""

    def __init__(
        self,
        patterns: list[str],
        baseline: str,
        alpha: float,
        pairing: str = "run",
        reference: bool | Path = False,
        output: Path | None = None,
        settings: Settings | None = None,
        out: Console | None = None,
    ):
        super().__init__(out)
        self.patterns = patterns
        self.baseline = baseline
        self.alpha = alpha
        self.pairing = pairing
        self.reference = reference
        self.output = Path(output) if output else None
        self.settings = settings or Settings.from_env()

    def execute(self) -> int:
        document = matrix(
            self.patterns,
            self.baseline,
            alpha=self.alpha,
            pairing=self.pairing,
            reference=self.reference,
            settings=self.settings,
            out=self.out,
        )
        _emit(self.out, document, self.output)
        return 0


class ReportCommand(Command):
    """Table over saved scorecards (files or run directories)."""

    def __init__(
        self,
        paths: list[Path],
        baseline: str,
        alpha: float,
        pairing: str = "run",
        reference: bool | Path = False,
        output: Path | None = None,
        out: Console | None = None,
    ):
        super().__init__(out)
        self.paths = [Path(p) for p in paths]
        self.baseline = baseline
        self.alpha = alpha
        self.pairing = pairing
        self.reference = reference
        self.output = Path(output) if output else None

    def execute(self) -> int:
        document = build_report(
            load_scorecards(self.paths),
            self.baseline,
            alpha=self.alpha,
            pairing=self.pairing,
            reference=self.reference,
            out=self.out,
        )
        _emit(self.out, document, self.output)
        return 0
