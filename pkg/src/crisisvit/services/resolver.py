"""Turning multi-label manifest entries into single-label training sets."""

from dataclasses import dataclass, field

import numpy as np
from rich.console import Console

from crisisvit.errors import ConfigurationError, VocabularyError
from crisisvit.models.labels import LabelVocabulary, incident_vocabulary, joint_vocabulary, place_vocabulary
from crisisvit.models.records import DatasetManifestEntry, ResolvedExample

console = Console()

RESOLVABLE = ("incident", "place", "joint")


def _scope(entry: DatasetManifestEntry, vocabulary_name: str) -> tuple[str, ...]:
    if vocabulary_name == "incident":
        return entry.incident_labels
    if vocabulary_name == "place":
        return entry.place_labels
    return entry.incident_labels + entry.place_labels


def resolve_single_label(
    entries: list[DatasetManifestEntry], vocabulary: LabelVocabulary
) -> list[ResolvedExample]:
    """Assign each entry to the first listed label within the vocabulary's scope.

    Entries with no label in scope are left out. The joint scope reads the
    incident labels first, then the place labels.

    Raises:
        ConfigurationError: if the vocabulary is not incident, place or joint
    """
    if vocabulary.name not in RESOLVABLE:
        raise ConfigurationError(
            f"cannot resolve against vocabulary '{vocabulary.name}'; use one of {RESOLVABLE}", field="vocabulary"
        )
    resolved = []
    for entry in entries:
        labels = _scope(entry, vocabulary.name)
        if not labels:
            continue
        resolved.append(
            ResolvedExample(
                entry_id=entry.entry_id,
                class_index=vocabulary.index(labels[0]),
                vocabulary=vocabulary.name,
                vocabulary_digest=vocabulary.digest,
            )
        )
    return resolved


@dataclass(frozen=True)
class SplitTarget:
    """First incident and first place class of an entry; -1 when absent."""

    entry_id: str
    incident_index: int
    place_index: int


def resolve_split_targets(entries: list[DatasetManifestEntry]) -> list[SplitTarget]:
    """Per-block targets for a joint head trained with separate incident/place softmaxes."""
    incidents, places = incident_vocabulary(), place_vocabulary()
    targets = []
    for entry in entries:
        if not entry.has_positive:
            continue
        targets.append(
            SplitTarget(
                entry_id=entry.entry_id,
                incident_index=incidents.index(entry.incident_labels[0]) if entry.incident_labels else -1,
                place_index=places.index(entry.place_labels[0]) if entry.place_labels else -1,
            )
        )
    return targets


@dataclass
class BinaryTask:
    """One-vs-rest examples for a single class."""

    class_name: str
    positives: list[DatasetManifestEntry] = field(default_factory=list)
    negatives: list[DatasetManifestEntry] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.positives

    def __len__(self) -> int:
        return len(self.positives) + len(self.negatives)


def make_binary_task(
    entries: list[DatasetManifestEntry],
    class_name: str,
    negative_ratio: float = 1.0,
    seed: int = 0,
    vocabulary: LabelVocabulary | None = None,
    out: Console | None = None,
) -> BinaryTask:
    """Positives list ``class_name``; negatives are sampled from the rest.

    Args:
        entries: Manifest entries
        class_name: An incident or place class
        negative_ratio: Negatives drawn per positive (capped by availability)
        seed: Negative-sampling seed
        vocabulary: Vocabulary the class must belong to (joint by default)

    Returns:
        The task; empty (with a warning) when no entry lists the class

    Raises:
        VocabularyError: if the class is not in the vocabulary
    """
    vocabulary = vocabulary or joint_vocabulary()
    if class_name not in vocabulary:
        raise VocabularyError(f"'{class_name}' is not in vocabulary '{vocabulary.name}'")
    positives = [e for e in entries if class_name in e.labels]
    if not positives:
        (out or console).print(f"[yellow]⚠️  No positives for '{class_name}', task skipped[/yellow]")
        return BinaryTask(class_name)
    others = [e for e in entries if class_name not in e.labels]
    wanted = min(len(others), int(round(negative_ratio * len(positives))))
    rng = np.random.default_rng([seed, vocabulary.index(class_name)])
    picked = np.sort(rng.choice(len(others), size=wanted, replace=False)) if wanted else []
    return BinaryTask(class_name, positives, [others[i] for i in picked])


def make_binary_tasks(
    entries: list[DatasetManifestEntry],
    vocabulary: LabelVocabulary | None = None,
    negative_ratio: float = 1.0,
    seed: int = 0,
    out: Console | None = None,
) -> list[BinaryTask]:
    """One task per class, in vocabulary order (empty tasks included)."""
    vocabulary = vocabulary or joint_vocabulary()
    return [make_binary_task(entries, name, negative_ratio, seed, vocabulary, out) for name in vocabulary.classes]
