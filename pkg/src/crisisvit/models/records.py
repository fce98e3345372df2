"""Incidents1M manifest records.

One ``DatasetManifestEntry`` per image URL. Label lists keep the order in
which the source manifest lists them, because single-label resolution picks
the first listed label.
"""

from dataclasses import dataclass, field, replace
from enum import StrEnum
from pathlib import Path
from typing import Any

from crisisvit.errors import IntegrityError


class RetrievalStatus(StrEnum):
    PENDING = "pending"
    FETCHED = "fetched"
    FAILED = "failed"


@dataclass(frozen=True)
class DatasetManifestEntry:
    """One Incidents1M record."""

    entry_id: str
    url: str
    incident_labels: tuple[str, ...] = ()
    place_labels: tuple[str, ...] = ()
    status: RetrievalStatus = RetrievalStatus.PENDING
    digest: str | None = None  # SHA-256 of the fetched bytes
    reason: str | None = None  # last failure reason

    def __post_init__(self) -> None:
        if len(set(self.incident_labels)) != len(self.incident_labels):
            raise IntegrityError(f"{self.entry_id}: duplicate incident labels")
        if len(set(self.place_labels)) != len(self.place_labels):
            raise IntegrityError(f"{self.entry_id}: duplicate place labels")
        if self.status == RetrievalStatus.FETCHED and not self.digest:
            raise IntegrityError(f"{self.entry_id}: fetched entry has no content digest")

    @property
    def labels(self) -> tuple[str, ...]:
        """Incident labels followed by place labels."""
        return self.incident_labels + self.place_labels

    @property
    def has_positive(self) -> bool:
        return bool(self.incident_labels or self.place_labels)

    @property
    def is_fetched(self) -> bool:
        return self.status == RetrievalStatus.FETCHED

    def image_path(self, image_dir: Path) -> Path:
        """Content-addressed location of the fetched image."""
        if not self.digest:
            raise IntegrityError(f"{self.entry_id}: no digest, image was never fetched")
        return image_path_for(image_dir, self.digest)

    def mark_fetched(self, digest: str) -> "DatasetManifestEntry":
        return replace(self, status=RetrievalStatus.FETCHED, digest=digest, reason=None)

    def mark_failed(self, reason: str) -> "DatasetManifestEntry":
        return replace(self, status=RetrievalStatus.FAILED, reason=reason)

    def to_record(self) -> dict[str, Any]:
        return {
            "entry_id": self.entry_id,
            "url": self.url,
            "incident_labels": list(self.incident_labels),
            "place_labels": list(self.place_labels),
            "status": self.status.value,
            "digest": self.digest,
            "reason": self.reason,
        }


def image_path_for(image_dir: Path, digest: str) -> Path:
    return Path(image_dir) / digest[:2] / digest


@dataclass(frozen=True)
class ResolvedExample:
    """An entry assigned to exactly one class of a named vocabulary."""

    entry_id: str
    class_index: int
    vocabulary: str
    vocabulary_digest: str


@dataclass(frozen=True)
class RejectedLine:
    """A manifest line that could not be turned into an entry."""

    line_number: int
    reason: str


@dataclass
class ManifestSummary:
    """Counts reported after loading a manifest."""

    total: int = 0
    positive: int = 0
    incident_positive: int = 0
    place_positive: int = 0
    fetched: int = 0
    failed: int = 0
    pending: int = 0
    rejected: list[RejectedLine] = field(default_factory=list)

    @classmethod
    def from_entries(
        cls, entries: list[DatasetManifestEntry], rejected: list[RejectedLine] | None = None
    ) -> "ManifestSummary":
        summary = cls(rejected=list(rejected or []))
        for entry in entries:
            summary.total += 1
            summary.positive += entry.has_positive
            summary.incident_positive += bool(entry.incident_labels)
            summary.place_positive += bool(entry.place_labels)
            summary.fetched += entry.status == RetrievalStatus.FETCHED
            summary.failed += entry.status == RetrievalStatus.FAILED
            summary.pending += entry.status == RetrievalStatus.PENDING
        return summary

    @property
    def retrieval_fraction(self) -> float:
        return self.fetched / self.total if self.total else 0.0
