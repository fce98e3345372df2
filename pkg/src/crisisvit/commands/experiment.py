"""Experiment commands - validate and run experiment files."""

from pathlib import Path

from rich.console import Console
from rich.table import Table

from crisisvit.commands.base import Command
from crisisvit.models.labels import TASK_COLUMNS
from crisisvit.services.experiment import load_experiment, run_experiment, validate
from crisisvit.settings import Settings


class ValidateCommand(Command):
    """Check experiment files without running anything."""

    def __init__(self, paths: list[Path], out: Console | None = None):
        super().__init__(out)
        self.paths = [Path(p) for p in paths]

    def execute(self) -> int:
        failed = 0
        for path in self.paths:
            violations = validate(path)
            if not violations:
                self.out.print(f"[green]✓ {path}[/green]")
                continue
            failed += 1
            self.out.print(f"[red]✗ {path}: {len(violations)} violation(s)[/red]")
            for violation in violations:
                self.out.print(f"  [red]•[/red] {violation.path}: {violation.message}")
        return 2 if failed else 0


class RunCommand(Command):
    """Run an experiment file (every batch size of a sweep)."""

    def __init__(self, path: Path, settings: Settings | None = None, out: Console | None = None):
        super().__init__(out)
        self.path = Path(path)
        self.settings = settings or Settings.from_env()

    def execute(self) -> int:
        experiments = load_experiment(self.path).expand()
        if len(experiments) > 1:
            self.out.print(f"[cyan]Batch-size sweep: {len(experiments)} experiments[/cyan]")
        table = Table(title="Scorecards")
        table.add_column("System", style="cyan")
        for column in (*TASK_COLUMNS.values(), "AVG"):
            table.add_column(column, justify="right")
        table.add_column("Run directory", style="dim")
        for experiment in experiments:
            outcome = run_experiment(experiment, self.settings, self.out)
            card = outcome.scorecard
            means = card.means
            table.add_row(
                card.system,
                *(f"{means[task]:.2f}" for task in TASK_COLUMNS),
                f"{card.avg:.2f}",
                str(outcome.run_dir),
            )
        self.out.print()
        self.out.print(table)
        return 0
