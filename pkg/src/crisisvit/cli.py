"""CLI framework for crisisvit."""

from pathlib import Path

import click
from dotenv import load_dotenv
from rich.console import Console

from crisisvit.version import __version__

console = Console()

PAIRING_CHOICE = click.Choice(["run", "example"], case_sensitive=False)


def _reference(reference: bool, reference_file: str | None) -> bool | Path:
    return Path(reference_file) if reference_file else reference


@click.group()
@click.version_option(version=__version__, prog_name="crisisvit")
@click.pass_context
def main(ctx: click.Context) -> None:
    """CrisisViT - pre-train, fine-tune and compare crisis image classifiers.

    Pre-trains vision transformers on Incidents1M (masked-image and
    supervised stages), fine-tunes them on the Crisis Image Benchmark and
    reports significance-tested comparison tables.
    """
    # Load .env from current directory if it exists
    env_path = Path.cwd() / ".env"
    if env_path.exists():
        load_dotenv(env_path)

    ctx.ensure_object(dict)
    ctx.obj["cwd"] = Path.cwd()
    ctx.obj["console"] = console


@main.command()
@click.pass_context
def status(ctx: click.Context) -> None:
    """Show current settings and the state of past runs."""
    from crisisvit.commands.status import StatusCommand

    ctx.exit(StatusCommand(ctx.obj["cwd"]).run())


@main.command()
@click.argument("files", nargs=-1, required=True, type=click.Path())
@click.pass_context
def validate(ctx: click.Context, files: tuple[str, ...]) -> None:
    """Check experiment files.

    \b
    Examples:
        crisisvit validate experiments/i1m-places-20.yaml
        crisisvit validate experiments/*.yaml
    """
    from crisisvit.commands.experiment import ValidateCommand

    ctx.exit(ValidateCommand([Path(f) for f in files]).run())


@main.command()
@click.argument("file", type=click.Path())
@click.pass_context
def run(ctx: click.Context, file: str) -> None:
    """Run an experiment file; finished work is resumed, not repeated.

    \b
    Examples:
        crisisvit run experiments/i1m-places-20.yaml
        CRISISVIT_DETERMINISTIC=1 crisisvit run experiments/toy.yaml
    """
    from crisisvit.commands.experiment import RunCommand

    ctx.exit(RunCommand(Path(file)).run())


@main.command()
@click.argument("patterns", nargs=-1, required=True)
@click.option("--baseline", required=True, help="System every other system is tested against")
@click.option("--alpha", type=float, default=0.01, show_default=True, help="Family-wise significance level")
@click.option("--pairing", type=PAIRING_CHOICE, default="run", show_default=True, help="Pair per run or per example")
@click.option("--reference", is_flag=True, help="Add the packaged published rows, marked [paper-reported]")
@click.option("--reference-file", type=click.Path(exists=True), help="Add published rows from this YAML file")
@click.option("--output", type=click.Path(), help="Write the table here (plus a .csv companion)")
@click.pass_context
def matrix(
    ctx: click.Context,
    patterns: tuple[str, ...],
    baseline: str,
    alpha: float,
    pairing: str,
    reference: bool,
    reference_file: str | None,
    output: str | None,
) -> None:
    """Compare every completed experiment matching the patterns.

    \b
    Examples:
        crisisvit matrix "experiments/*.yaml" --baseline ViT-Base --reference
        crisisvit matrix "experiments/*.yaml" --baseline vit-base-repro --output reports/matrix.txt
    """
    from crisisvit.commands.report import MatrixCommand

    cmd = MatrixCommand(
        list(patterns),
        baseline,
        alpha,
        pairing.lower(),
        _reference(reference, reference_file),
        Path(output) if output else None,
    )
    ctx.exit(cmd.run())


@main.command()
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--baseline", required=True, help="System every other system is tested against")
@click.option("--alpha", type=float, default=0.01, show_default=True, help="Family-wise significance level")
@click.option("--pairing", type=PAIRING_CHOICE, default="run", show_default=True, help="Pair per run or per example")
@click.option("--reference", is_flag=True, help="Add the packaged published rows, marked [paper-reported]")
@click.option("--reference-file", type=click.Path(exists=True), help="Add published rows from this YAML file")
@click.option("--output", type=click.Path(), help="Write the table here (plus a .csv companion)")
@click.pass_context
def report(
    ctx: click.Context,
    paths: tuple[str, ...],
    baseline: str,
    alpha: float,
    pairing: str,
    reference: bool,
    reference_file: str | None,
    output: str | None,
) -> None:
    """Compare saved scorecards (scorecard files or run directories).

    \b
    Examples:
        crisisvit report runs/*/ --baseline ViT-Base --reference --alpha 0.01
    """
    from crisisvit.commands.report import ReportCommand

    cmd = ReportCommand(
        [Path(p) for p in paths],
        baseline,
        alpha,
        pairing.lower(),
        _reference(reference, reference_file),
        Path(output) if output else None,
    )
    ctx.exit(cmd.run())


@main.group()
def manifest() -> None:
    """Import, crawl and inspect Incidents1M manifests."""
    pass


@manifest.command(name="import")
@click.argument("source", type=click.Path(exists=True))
@click.argument("output", type=click.Path())
@click.pass_context
def manifest_import(ctx: click.Context, source: str, output: str) -> None:
    """Convert the published Incidents1M JSON into a manifest.

    \b
    Examples:
        crisisvit manifest import multi_label_train.json data/manifest.jsonl
    """
    from crisisvit.commands.manifest import ManifestImportCommand

    ctx.exit(ManifestImportCommand(Path(source), Path(output)).run())


@manifest.command(name="load")
@click.argument("path", type=click.Path())
@click.pass_context
def manifest_load(ctx: click.Context, path: str) -> None:
    """Parse a manifest and list rejected lines."""
    from crisisvit.commands.manifest import ManifestLoadCommand

    ctx.exit(ManifestLoadCommand(Path(path)).run())


@manifest.command(name="stats")
@click.argument("path", type=click.Path())
@click.pass_context
def manifest_stats(ctx: click.Context, path: str) -> None:
    """Summary counts: entries, positives, retrieval."""
    from crisisvit.commands.manifest import ManifestStatsCommand

    ctx.exit(ManifestStatsCommand(Path(path)).run())


@manifest.command(name="crawl")
@click.argument("path", type=click.Path())
@click.option("--image-dir", type=click.Path(), help="Image store (default: CRISISVIT_IMAGE_DIR)")
@click.option("--concurrency", type=int, default=16, show_default=True)
@click.option("--retries", type=int, default=2, show_default=True, help="Extra attempts on transient failures")
@click.option("--timeout", type=float, default=10.0, show_default=True, help="Per-request timeout in seconds")
@click.option("--rate-limit", type=float, help="Requests per second per host")
@click.option("--force", is_flag=True, help="Re-fetch entries that are already stored")
@click.option("--report", "report_path", type=click.Path(), help="Decay report path (default: <manifest>.decay.yaml)")
@click.pass_context
def manifest_crawl(
    ctx: click.Context,
    path: str,
    image_dir: str | None,
    concurrency: int,
    retries: int,
    timeout: float,
    rate_limit: float | None,
    force: bool,
    report_path: str | None,
) -> None:
    """Fetch manifest images and write a decay report.

    \b
    Examples:
        crisisvit manifest crawl data/manifest.jsonl
        crisisvit manifest crawl data/manifest.jsonl --concurrency 32 --rate-limit 2
    """
    from crisisvit.commands.manifest import ManifestCrawlCommand
    from crisisvit.services.crawler import CrawlPolicy
    from crisisvit.settings import Settings

    policy = CrawlPolicy(concurrency, retries, timeout, rate_limit, force)
    store = Path(image_dir) if image_dir else Settings.from_env().image_dir
    cmd = ManifestCrawlCommand(Path(path), store, policy, Path(report_path) if report_path else None)
    ctx.exit(cmd.run())


@manifest.command(name="resolve")
@click.argument("path", type=click.Path())
@click.option(
    "--vocabulary",
    type=click.Choice(["incident", "place", "joint"]),
    default="incident",
    show_default=True,
)
@click.option("--output", type=click.Path(), help="Write resolved examples as TSV")
@click.pass_context
def manifest_resolve(ctx: click.Context, path: str, vocabulary: str, output: str | None) -> None:
    """Assign each entry its first listed label within a vocabulary."""
    from crisisvit.commands.manifest import ManifestResolveCommand

    ctx.exit(ManifestResolveCommand(Path(path), vocabulary, Path(output) if output else None).run())


@main.group()
def benchmark() -> None:
    """Crisis Image Benchmark utilities."""
    pass


@benchmark.command(name="check")
@click.argument("root", type=click.Path())
@click.pass_context
def benchmark_check(ctx: click.Context, root: str) -> None:
    """Check split files, class names and split disjointness."""
    from crisisvit.commands.benchmark import BenchmarkCheckCommand

    ctx.exit(BenchmarkCheckCommand(Path(root)).run())


if __name__ == "__main__":
    main()
