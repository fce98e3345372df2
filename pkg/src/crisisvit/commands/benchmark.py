"""Benchmark command - check the Crisis Image Benchmark splits."""

from pathlib import Path

from rich.console import Console
from rich.table import Table

from crisisvit.commands.base import Command
from crisisvit.services.benchmark import SPLIT_FILES, load_benchmark

MAX_ROWS_SHOWN = 20


class BenchmarkCheckCommand(Command):
    """Load every task and print counts plus integrity findings."""

    def __init__(self, root: Path, out: Console | None = None):
        super().__init__(out)
        self.root = Path(root)

    def execute(self) -> int:
        tasks, report = load_benchmark(self.root)
        table = Table(title=f"Crisis Image Benchmark ({self.root})")
        table.add_column("Task", style="cyan")
        table.add_column("Classes", justify="right")
        for split in SPLIT_FILES:
            table.add_column(split.capitalize(), justify="right")
        table.add_column("Missing images", justify="right")
        table.add_column("Overlaps", justify="right")
        for task_id, task in tasks.items():
            counts = report.counts[task_id]
            table.add_row(
                task_id,
                str(task.num_classes),
                *(f"{counts[split]:,}" for split in SPLIT_FILES),
                f"{report.missing_images[task_id]:,}",
                f"{len(report.overlaps[task_id]):,}",
            )
        self.out.print(table)

        for task_id, overlaps in report.overlaps.items():
            for overlap in overlaps[:MAX_ROWS_SHOWN]:
                self.out.print(f"[red]✗ {task_id}: {overlap}[/red]")
        for row in report.rejected[:MAX_ROWS_SHOWN]:
            self.out.print(f"[yellow]⚠️  {row.task_id}/{row.split} row {row.row}: {row.reason}[/yellow]")
        if report.is_clean:
            self.out.print("[green]✓ Benchmark is clean[/green]")
            return 0
        return 3
