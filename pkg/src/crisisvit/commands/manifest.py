"""Manifest commands - import, load, crawl, resolve and summarize Incidents1M manifests."""

from collections import Counter
from pathlib import Path

import pandas as pd
from rich.console import Console
from rich.table import Table

from crisisvit.commands.base import Command
from crisisvit.models.labels import get_vocabulary
from crisisvit.models.records import ManifestSummary, RejectedLine
from crisisvit.services.crawler import CrawlPolicy, crawl
from crisisvit.services.manifest import import_incidents_json, load_manifest, write_manifest
from crisisvit.services.resolver import RESOLVABLE, resolve_single_label

MAX_REJECTS_SHOWN = 20


def _print_rejects(out: Console, rejected: list[RejectedLine]) -> None:
    if not rejected:
        return
    out.print(f"[yellow]⚠️  {len(rejected):,} line(s) rejected[/yellow]")
    for reject in rejected[:MAX_REJECTS_SHOWN]:
        out.print(f"[dim]  line {reject.line_number}: {reject.reason}[/dim]")
    if len(rejected) > MAX_REJECTS_SHOWN:
        out.print(f"[dim]  ... and {len(rejected) - MAX_REJECTS_SHOWN:,} more[/dim]")


def summary_table(summary: ManifestSummary, title: str) -> Table:
    table = Table(title=title)
    table.add_column("Count", style="cyan")
    table.add_column("Value", justify="right")
    table.add_row("Entries", f"{summary.total:,}")
    table.add_row("With a positive label", f"{summary.positive:,}")
    table.add_row("Incident-positive", f"{summary.incident_positive:,}")
    table.add_row("Place-positive", f"{summary.place_positive:,}")
    table.add_row("Fetched", f"{summary.fetched:,} ({summary.retrieval_fraction:.1%})")
    table.add_row("Failed", f"{summary.failed:,}")
    table.add_row("Pending", f"{summary.pending:,}")
    table.add_row("Rejected lines", f"{len(summary.rejected):,}")
    return table


class ManifestImportCommand(Command):
    """Convert the published Incidents1M JSON into a line-delimited manifest."""

    def __init__(self, source: Path, output: Path, out: Console | None = None):
        super().__init__(out)
        self.source = Path(source)
        self.output = Path(output)

    def execute(self) -> int:
        self.out.print(f"[cyan]Importing {self.source}...[/cyan]")
        entries, rejected = import_incidents_json(self.source)
        write_manifest(entries, self.output)
        _print_rejects(self.out, rejected)
        self.out.print(f"[green]✓ Wrote {len(entries):,} entries to {self.output}[/green]")
        return 0


class ManifestLoadCommand(Command):
    """Parse a manifest and report what was accepted and rejected."""

    def __init__(self, manifest: Path, out: Console | None = None):
        super().__init__(out)
        self.manifest = Path(manifest)

    def execute(self) -> int:
        entries, summary = load_manifest(self.manifest)
        _print_rejects(self.out, summary.rejected)
        self.out.print(f"[green]✓ Loaded {len(entries):,} entries from {self.manifest}[/green]")
        return 0


class ManifestStatsCommand(Command):
    """Summary counts of a manifest."""

    def __init__(self, manifest: Path, out: Console | None = None):
        super().__init__(out)
        self.manifest = Path(manifest)

    def execute(self) -> int:
        _, summary = load_manifest(self.manifest)
        self.out.print()
        self.out.print(summary_table(summary, str(self.manifest)))
        self.out.print()
        return 0


class ManifestCrawlCommand(Command):
    """Fetch manifest images into the content-addressed store."""

    def __init__(
        self,
        manifest: Path,
        image_dir: Path,
        policy: CrawlPolicy,
        report: Path | None = None,
        out: Console | None = None,
    ):
        super().__init__(out)
        self.manifest = Path(manifest)
        self.image_dir = Path(image_dir)
        self.policy = policy
        self.report = Path(report) if report else self.manifest.with_suffix(".decay.yaml")
        self.journal = self.manifest.with_suffix(".crawl.jsonl")

    def execute(self) -> int:
        entries, summary = load_manifest(self.manifest)
        _print_rejects(self.out, summary.rejected)
        if self.journal.exists():
            self.out.print(f"[yellow]⚠️  Resuming an interrupted crawl from {self.journal}[/yellow]")
        updated, decay = crawl(entries, self.policy, self.image_dir, out=self.out, journal=self.journal)
        write_manifest(updated, self.manifest)
        self.journal.unlink(missing_ok=True)
        decay.save(self.report)
        reasons = decay.reason_counts()
        if reasons:
            table = Table(title="Failure reasons")
            table.add_column("Reason", style="yellow")
            table.add_column("Entries", justify="right")
            for reason, count in reasons.items():
                table.add_row(reason, f"{count:,}")
            self.out.print(table)
        self.out.print(f"[dim]Decay report: {self.report}[/dim]")
        return 0


class ManifestResolveCommand(Command):
    """Resolve multi-label entries to one class each and report class counts."""

    def __init__(self, manifest: Path, vocabulary: str, output: Path | None = None, out: Console | None = None):
        super().__init__(out)
        self.manifest = Path(manifest)
        self.vocabulary = vocabulary
        self.output = Path(output) if output else None

    def execute(self) -> int:
        if self.vocabulary not in RESOLVABLE:
            self.out.print(f"[red]✗ Error: vocabulary must be one of {', '.join(RESOLVABLE)}[/red]")
            return 2
        vocabulary = get_vocabulary(self.vocabulary)
        entries, _ = load_manifest(self.manifest)
        resolved = resolve_single_label(entries, vocabulary)
        counts = Counter(vocabulary.class_name(r.class_index) for r in resolved)

        table = Table(title=f"{vocabulary.name} ({len(vocabulary)} classes, {vocabulary.digest})")
        table.add_column("Class", style="cyan")
        table.add_column("Examples", justify="right")
        for name in vocabulary.classes:
            if counts[name]:
                table.add_row(name, f"{counts[name]:,}")
        self.out.print(table)
        self.out.print(
            f"[green]✓ {len(resolved):,} of {len(entries):,} entries resolved[/green] "
            f"[dim]({len(entries) - len(resolved):,} out of scope)[/dim]"
        )
        if self.output is not None:
            frame = pd.DataFrame(
                [(r.entry_id, r.class_index, vocabulary.class_name(r.class_index)) for r in resolved],
                columns=["entry_id", "class_index", "class_name"],
            )
            self.output.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(self.output, sep="\t", index=False)
            self.out.print(f"[dim]Wrote {self.output}[/dim]")
        return 0
