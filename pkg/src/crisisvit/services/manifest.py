"""Incidents1M manifest files: loading, importing, writing and splitting.

The manifest is line-delimited JSON, one entry per line, so partial crawls
can be written out and resumed.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any

from crisisvit.errors import DataError, IntegrityError
from crisisvit.models.labels import LabelVocabulary, canonical_label, incident_vocabulary, place_vocabulary
from crisisvit.models.records import (
    DatasetManifestEntry,
    ManifestSummary,
    RejectedLine,
    RetrievalStatus,
)


def entry_id_for(url: str) -> str:
    """Stable identifier derived from the image URL."""
    return hashlib.sha256(url.encode("utf-8")).hexdigest()[:16]


def _labels(raw: Any, vocabulary: LabelVocabulary, kind: str) -> tuple[str, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ValueError(f"{kind}_labels must be a list")
    labels = tuple(canonical_label(str(label)) for label in raw)
    for label in labels:
        if label not in vocabulary:
            raise ValueError(f"unknown {kind} label '{label}'")
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate {kind} labels")
    return labels


def parse_entry(record: dict[str, Any]) -> DatasetManifestEntry:
    """Build an entry from one decoded manifest record.

    Raises:
        ValueError: with a human-readable reason when the record is invalid
    """
    url = record.get("url")
    if not isinstance(url, str) or not url:
        raise ValueError("missing url")
    try:
        status = RetrievalStatus(record.get("status") or "pending")
    except ValueError:
        raise ValueError(f"unknown status '{record.get('status')}'") from None
    digest = record.get("digest")
    if status == RetrievalStatus.FETCHED and not digest:
        raise ValueError("fetched entry has no digest")
    return DatasetManifestEntry(
        entry_id=str(record.get("entry_id") or entry_id_for(url)),
        url=url,
        incident_labels=_labels(record.get("incident_labels"), incident_vocabulary(), "incident"),
        place_labels=_labels(record.get("place_labels"), place_vocabulary(), "place"),
        status=status,
        digest=digest,
        reason=record.get("reason"),
    )


def load_manifest(path: Path) -> tuple[list[DatasetManifestEntry], ManifestSummary]:
    """Parse a manifest, rejecting bad lines with their line numbers.

    Returns:
        Accepted entries in file order, and summary counts including the
        rejected lines

    Raises:
        DataError: if the file does not exist
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    entries: list[DatasetManifestEntry] = []
    rejected: list[RejectedLine] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("line is not a JSON object")
                entry = parse_entry(record)
            except json.JSONDecodeError as e:
                rejected.append(RejectedLine(line_number, f"malformed JSON: {e.msg}"))
                continue
            except (ValueError, IntegrityError) as e:
                rejected.append(RejectedLine(line_number, str(e)))
                continue
            if entry.entry_id in seen:
                rejected.append(RejectedLine(line_number, f"duplicate entry_id '{entry.entry_id}'"))
                continue
            seen.add(entry.entry_id)
            entries.append(entry)
    return entries, ManifestSummary.from_entries(entries, rejected)


def _positives(value: dict[str, Any], field: str) -> list[str]:
    flags = value.get(field) or {}
    if not isinstance(flags, dict):
        raise ValueError(f"'{field}' must map labels to 0 or 1, got {type(flags).__name__}")
    return [label for label, flag in flags.items() if flag == 1]


def import_incidents_json(path: Path) -> tuple[list[DatasetManifestEntry], list[RejectedLine]]:
    """Convert the dataset's published JSON into manifest entries.

    The source maps an image key to ``{"incidents": {label: 0|1}, "places":
    {label: 0|1}, "url": ...}``; labels with value 1 are positives, kept in
    source order. The key doubles as the URL when no ``url`` field exists.
    Rejections are numbered by record position.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise DataError(f"{path}: expected a JSON object keyed by image")
    entries: list[DatasetManifestEntry] = []
    rejected: list[RejectedLine] = []
    for position, (key, value) in enumerate(data.items(), start=1):
        value = value or {}
        try:
            if not isinstance(value, dict):
                raise ValueError(f"record for '{key}' is not a JSON object")
            record = {
                "url": value.get("url") or key,
                "incident_labels": _positives(value, "incidents"),
                "place_labels": _positives(value, "places"),
            }
            entries.append(parse_entry(record))
        except (ValueError, IntegrityError) as e:
            rejected.append(RejectedLine(position, str(e)))
    return entries, rejected



def write_manifest(entries: list[DatasetManifestEntry], path: Path) -> Path:
    """Write entries atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for entry in entries:
            f.write(json.dumps(entry.to_record()) + "\n")
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
    return path


def holdout_bucket(entry_id: str, seed: int) -> float:
    """Deterministic position in [0, 1) for an entry under a seed."""
    digest = hashlib.sha256(f"{seed}:{entry_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def split_holdout(
    entries: list[DatasetManifestEntry], fraction: float = 0.05, seed: int = 0
) -> tuple[list[DatasetManifestEntry], list[DatasetManifestEntry]]:
    """Seeded train/held-out split by entry-id hash, order preserved."""
    train, held_out = [], []
    for entry in entries:
        (held_out if holdout_bucket(entry.entry_id, seed) < fraction else train).append(entry)
    return train, held_out
