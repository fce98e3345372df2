"""Status command - show effective settings and the state of past runs."""

from pathlib import Path

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from crisisvit.commands.base import Command
from crisisvit.services.experiment import EXPERIMENT_KEY, LEDGER_FILE, SCORECARD_FILE
from crisisvit.services.ledger import RunLedger
from crisisvit.settings import Settings
from crisisvit.version import __version__


class StatusCommand(Command):
    """Show current settings and run directories."""

    def __init__(self, cwd: Path, settings: Settings | None = None, out: Console | None = None):
        super().__init__(out)
        self.cwd = Path(cwd)
        self.settings = settings or Settings.from_env()

    def execute(self) -> int:
        self.out.print()
        self.out.print(Panel.fit("[bold cyan]crisisvit[/bold cyan]", subtitle=f"v{__version__}"))
        self.out.print()

        if not (self.cwd / ".env").exists():
            self.out.print("[dim]No .env file in the working directory; using defaults and the environment[/dim]\n")

        table = Table(title="Current Configuration")
        table.add_column("Setting", style="cyan")
        table.add_column("Value", style="white")
        table.add_row("Deterministic", "on" if self.settings.deterministic else "off")
        table.add_row("Device", f"{self.settings.device} -> {self.settings.torch_device()}")
        table.add_row("Data-loader workers", str(self.settings.num_workers))
        table.add_row("Image store", str(self.settings.image_dir))
        table.add_row("Output directory", str(self.settings.output_dir))
        table.add_row("Working Directory", str(self.cwd))
        self.out.print(table)
        self.out.print()

        for label, path in (("Image store", self.settings.image_dir), ("Output directory", self.settings.output_dir)):
            if path.exists():
                self.out.print(f"[green]✓[/green] {label} exists: {path}")
            else:
                self.out.print(f"[yellow]⚠️[/yellow]  {label} not found: {path}")

        run_dirs = sorted(p.parent for p in self.settings.output_dir.glob(f"*/{LEDGER_FILE}"))
        if run_dirs:
            runs = Table(title="Runs")
            runs.add_column("Run", style="cyan")
            runs.add_column("State")
            runs.add_column("Stages done", justify="right")
            runs.add_column("Fine-tune runs", justify="right")
            runs.add_column("Missing artifacts", justify="right")
            for run_dir in run_dirs:
                ledger = RunLedger(run_dir / LEDGER_FILE)
                finished = ledger.finished(EXPERIMENT_KEY) is not None and (run_dir / SCORECARD_FILE).exists()
                failed = bool(ledger.records("stage_failed") or ledger.records("run_failed"))
                if finished:
                    state = "[green]complete[/green]"
                elif failed:
                    state = "[red]failed[/red]"
                else:
                    state = "[yellow]partial[/yellow]"
                stages = sum(1 for r in ledger.records("finish") if str(r.get("key", "")).startswith("stage-"))
                missing = ledger.missing_artifacts(run_dir)
                runs.add_row(run_dir.name, state, str(stages), str(len(ledger.records("run"))), str(len(missing)))
            self.out.print()
            self.out.print(runs)
        self.out.print()
        return 0
