"""Concurrent image crawler with per-host rate limiting and a decay report.

Fetched bytes go to a content-addressed store; manifest entries are updated
only in the calling thread, so the manifest has a single writer. Each result
is also appended to a crawl journal as it arrives, and replayed on the next
start, so an interrupted crawl resumes instead of starting over.
"""

import hashlib
import json
import os
import threading
import time
from collections import Counter
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any
from urllib.parse import urlsplit

import yaml
from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn

from crisisvit.api.image_client import FetchResult, ImageClient
from crisisvit.errors import ConfigurationError
from crisisvit.models.records import DatasetManifestEntry, image_path_for

console = Console()

# Longest Retry-After we honour before the next attempt
MAX_RETRY_WAIT = 30.0


@dataclass(frozen=True)
class CrawlPolicy:
    """How hard to hit image hosts."""

    concurrency: int = 16
    retries: int = 2  # extra attempts after the first, transient failures only
    timeout: float = 10.0
    rate_limit: float | None = None  # requests per second per host
    force: bool = False  # re-fetch entries that are already stored

    def validate(self) -> None:
        if self.concurrency < 1:
            raise ConfigurationError("concurrency must be >= 1", field="concurrency")
        if self.retries < 0:
            raise ConfigurationError("retries must be >= 0", field="retries")
        if self.timeout <= 0:
            raise ConfigurationError("timeout must be positive", field="timeout")
        if self.rate_limit is not None and self.rate_limit <= 0:
            raise ConfigurationError("rate_limit must be positive", field="rate_limit")


@dataclass
class DecayReport:
    """How much of the manifest is still retrievable."""

    total: int = 0
    attempted: int = 0
    fetched: int = 0  # fetched during this crawl
    already_fetched: int = 0
    failed: int = 0
    requests_issued: int = 0
    failures: dict[str, str] = field(default_factory=dict)  # entry_id -> reason

    @property
    def retrieved(self) -> int:
        return self.fetched + self.already_fetched

    @property
    def retrieval_fraction(self) -> float:
        return self.retrieved / self.total if self.total else 0.0

    def reason_counts(self) -> dict[str, int]:
        return dict(Counter(self.failures.values()).most_common())

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "attempted": self.attempted,
            "fetched": self.fetched,
            "already_fetched": self.already_fetched,
            "failed": self.failed,
            "requests_issued": self.requests_issued,
            "retrieval_fraction": self.retrieval_fraction,
            "failure_reasons": self.reason_counts(),
            "failures": self.failures,
        }

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
        return path


class HostRateLimiter:
    """Spaces requests to the same host at least 1/rate seconds apart."""

    def __init__(self, rate: float | None):
        self.interval = 1.0 / rate if rate else 0.0
        self._lock = threading.Lock()
        self._next: dict[str, float] = {}

    def wait(self, url: str) -> None:
        if not self.interval:
            return
        host = urlsplit(url).netloc
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next.get(host, now))
            self._next[host] = slot + self.interval
        if slot > now:
            time.sleep(slot - now)


def store_image(image_dir: Path, content: bytes) -> str:
    """Write bytes under their SHA-256 and return the digest."""
    digest = hashlib.sha256(content).hexdigest()
    path = image_path_for(image_dir, digest)
    if not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f"{digest}.{threading.get_ident()}.tmp")
        tmp.write_bytes(content)
        os.replace(tmp, path)
    return digest


def replay_journal(entries: list[DatasetManifestEntry], journal: Path, image_dir: Path) -> list[DatasetManifestEntry]:
    """Apply results recorded by an earlier, interrupted crawl.

    A fetched record only counts when its bytes are still in the store.
    A torn last line is ignored.
    """
    journal = Path(journal)
    if not journal.exists():
        return list(entries)
    outcomes: dict[str, dict[str, Any]] = {}
    with open(journal) as f:
        for line in f:
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                continue
            if isinstance(record, dict) and "entry_id" in record:
                outcomes[record["entry_id"]] = record
    replayed = []
    for entry in entries:
        record = outcomes.get(entry.entry_id)
        if record is None:
            replayed.append(entry)
        elif record.get("digest") and image_path_for(image_dir, record["digest"]).exists():
            replayed.append(entry.mark_fetched(record["digest"]))
        elif record.get("reason"):
            replayed.append(entry.mark_failed(record["reason"]))
        else:
            replayed.append(entry)
    return replayed


def needs_fetch(entry: DatasetManifestEntry, image_dir: Path, force: bool = False) -> bool:
    """Fetched entries whose bytes are on disk are skipped unless forced."""
    if force or not entry.is_fetched or entry.digest is None:
        return True
    return not image_path_for(image_dir, entry.digest).exists()


@dataclass(frozen=True)
class _Attempt:
    index: int
    digest: str | None
    reason: str | None
    requests: int


def crawl(
    entries: list[DatasetManifestEntry],
    policy: CrawlPolicy,
    image_dir: Path,
    client_factory: Callable[[float], ImageClient] = ImageClient,
    out: Console | None = None,
    journal: Path | None = None,
) -> tuple[list[DatasetManifestEntry], DecayReport]:
    """Fetch every entry that is not already stored.

    Network errors are recorded per entry and never abort the crawl. With a
    ``journal``, results recorded there by an interrupted crawl are applied
    first and every new result is appended and flushed as it arrives.

    Returns:
        Entries in input order with updated status, and the decay report
    """
    policy.validate()
    out = out or console
    image_dir = Path(image_dir)
    limiter = HostRateLimiter(policy.rate_limit)
    local = threading.local()
    clients: list[ImageClient] = []
    clients_lock = threading.Lock()

    def client() -> ImageClient:
        if not hasattr(local, "client"):
            local.client = client_factory(policy.timeout)
            with clients_lock:
                clients.append(local.client)
        return local.client

    def attempt(index: int, url: str) -> _Attempt:
        result = FetchResult(url, reason="not attempted")
        issued = 0
        for _ in range(policy.retries + 1):
            limiter.wait(url)
            result = client().fetch(url)
            issued += 1
            if result.ok or not result.retryable:
                break
            if result.retry_after:
                time.sleep(min(result.retry_after, MAX_RETRY_WAIT))
        if result.ok and result.content is not None:
            return _Attempt(index, store_image(image_dir, result.content), None, issued)
        return _Attempt(index, None, result.reason, issued)

    updated = replay_journal(entries, journal, image_dir) if journal is not None else list(entries)
    report = DecayReport(total=len(entries))
    todo = [i for i, e in enumerate(updated) if needs_fetch(e, image_dir, policy.force)]
    report.already_fetched = len(entries) - len(todo)
    report.attempted = len(todo)

    if todo:
        log = None
        if journal is not None:
            Path(journal).parent.mkdir(parents=True, exist_ok=True)
            log = open(journal, "a")
        out.print(f"[cyan]Crawling {len(todo):,} images ({report.already_fetched:,} already stored)...[/cyan]")
        with (
            Progress(
                SpinnerColumn(),
                TextColumn("[progress.description]{task.description}"),
                BarColumn(),
                MofNCompleteColumn(),
                TimeElapsedColumn(),
                console=out,
                transient=True,
            ) as progress,
            ThreadPoolExecutor(max_workers=policy.concurrency) as executor,
        ):
            task = progress.add_task("[cyan]Fetching", total=len(todo))
            futures = [executor.submit(attempt, i, updated[i].url) for i in todo]
            try:
                for future in as_completed(futures):
                    result = future.result()
                    report.requests_issued += result.requests
                    entry = updated[result.index]
                    if result.digest is not None:
                        updated[result.index] = entry.mark_fetched(result.digest)
                        report.fetched += 1
                    else:
                        reason = result.reason or "unknown"
                        updated[result.index] = entry.mark_failed(reason)
                        report.failed += 1
                        report.failures[entry.entry_id] = reason
                    if log is not None:
                        record = {"entry_id": entry.entry_id, "digest": result.digest, "reason": result.reason}
                        log.write(json.dumps(record) + "\n")
                        log.flush()
                    progress.advance(task)
            except BaseException:
                executor.shutdown(wait=False, cancel_futures=True)
                raise
            finally:
                if log is not None:
                    log.close()
        for c in clients:
            c.close()

    out.print(
        f"[green]✓ Retrieved {report.retrieved:,}/{report.total:,} "
        f"({report.retrieval_fraction:.1%}); {report.failed:,} failed[/green]"
    )
    return updated, report
