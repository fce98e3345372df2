"""Label vocabularies for Incidents1M pre-training and the Crisis Image Benchmark."""

import hashlib
from dataclasses import dataclass
from functools import cache
from pathlib import Path

import yaml

from crisisvit.errors import IntegrityError, VocabularyError

# Incidents1M incident categories (43), in dataset order
INCIDENT_CLASSES = [
    "airplane accident",
    "bicycle accident",
    "blocked",
    "burned",
    "bus accident",
    "car accident",
    "collapsed",
    "damaged",
    "derecho",
    "dirty contamined",
    "drought",
    "dust devil",
    "dust sand storm",
    "earthquake",
    "fire whirl",
    "flooded",
    "fog",
    "hailstorm",
    "heavy rainfall",
    "ice storm",
    "landslide",
    "motorcycle accident",
    "mudslide mudflow",
    "nuclear explosion",
    "oil spill",
    "on fire",
    "rockslide rockfall",
    "ship boat accident",
    "sinkhole",
    "snow covered",
    "snowslide avalanche",
    "storm surge",
    "thunderstorm",
    "tornado",
    "traffic jam",
    "train accident",
    "tropical cyclone",
    "truck accident",
    "under construction",
    "van accident",
    "volcanic eruption",
    "wildfire",
    "with smoke",
]

# Incidents1M place categories (49), in dataset order
PLACE_CLASSES = [
    "badlands",
    "beach",
    "bridge",
    "building facade",
    "building outdoor",
    "cabin outdoor",
    "coast",
    "construction site",
    "dam",
    "desert",
    "desert road",
    "downtown",
    "excavation",
    "farm",
    "field",
    "fire station",
    "forest",
    "forest road",
    "gas station",
    "glacier",
    "highway",
    "house",
    "industrial area",
    "junkyard",
    "lake natural",
    "landfill",
    "lighthouse",
    "mountain",
    "nuclear power plant",
    "ocean",
    "oil rig",
    "park",
    "parking lot",
    "pier",
    "port",
    "power line",
    "railroad track",
    "religious building",
    "residential neighborhood",
    "river",
    "sky",
    "skyscraper",
    "slum",
    "snowfield",
    "sports field",
    "street",
    "valley",
    "village",
    "volcano",
]

# Informal names seen in hand-written manifests -> vocabulary class names
LABEL_ALIASES = {
    "flood": "flooded",
    "fire": "on fire",
    "smoke": "with smoke",
    "avalanche": "snowslide avalanche",
    "mudslide": "mudslide mudflow",
    "rockslide": "rockslide rockfall",
    "cyclone": "tropical cyclone",
    "hurricane": "tropical cyclone",
    "dust storm": "dust sand storm",
    "boat accident": "ship boat accident",
    "lake": "lake natural",
    "cabin": "cabin outdoor",
}

# Crisis Image Benchmark tasks, class labels as they appear in the split files
BENCHMARK_TASKS = {
    "disaster_types": [
        "earthquake",
        "fire",
        "flood",
        "hurricane",
        "landslide",
        "other_disaster",
        "not_disaster",
    ],
    "informativeness": [
        "informative",
        "not_informative",
    ],
    "humanitarian": [
        "affected_injured_or_dead_people",
        "infrastructure_and_utility_damage",
        "rescue_volunteering_or_donation_effort",
        "not_humanitarian",
    ],
    "damage_severity": [
        "severe",
        "mild",
        "little_or_none",
    ],
}

# Report column headers, in table order
TASK_COLUMNS = {
    "disaster_types": "Disaster",
    "informativeness": "Info",
    "humanitarian": "Human",
    "damage_severity": "Damage",
}

EXPECTED_SIZES = {
    "incident": 43,
    "place": 49,
    "joint": 92,
    "disaster_types": 7,
    "informativeness": 2,
    "humanitarian": 4,
    "damage_severity": 3,
}


@dataclass(frozen=True)
class LabelVocabulary:
    """An ordered, versioned list of class names."""

    name: str
    classes: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.classes)) != len(self.classes):
            raise IntegrityError(f"vocabulary '{self.name}' has duplicate classes")
        expected = EXPECTED_SIZES.get(self.name)
        if expected is not None and len(self.classes) != expected:
            raise IntegrityError(
                f"vocabulary '{self.name}' has {len(self.classes)} classes, expected {expected}"
            )

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, class_name: object) -> bool:
        return class_name in self._positions

    @property
    def _positions(self) -> dict[str, int]:
        return _position_map(self.classes)

    @property
    def digest(self) -> str:
        """Version digest over name and ordered classes."""
        payload = self.name + "\n" + "\n".join(self.classes)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def index(self, class_name: str) -> int:
        """Position of a class.

        Raises:
            VocabularyError: if the class is unknown
        """
        try:
            return self._positions[class_name]
        except KeyError:
            raise VocabularyError(f"'{class_name}' is not in vocabulary '{self.name}'") from None

    def class_name(self, index: int) -> str:
        return self.classes[index]


@cache
def _position_map(classes: tuple[str, ...]) -> dict[str, int]:
    return {name: i for i, name in enumerate(classes)}


def canonical_label(label: str) -> str:
    """Normalize a label string and resolve informal aliases.

    Args:
        label: Label like "Flood", "on_fire" or "building outdoor"

    Returns:
        Vocabulary-style name like "flooded", "on fire", "building outdoor"
    """
    name = " ".join(label.strip().lower().replace("_", " ").split())
    return LABEL_ALIASES.get(name, name)


def incident_vocabulary() -> LabelVocabulary:
    return LabelVocabulary("incident", tuple(INCIDENT_CLASSES))


def place_vocabulary() -> LabelVocabulary:
    return LabelVocabulary("place", tuple(PLACE_CLASSES))


def joint_vocabulary() -> LabelVocabulary:
    """Incident classes at indices 0-42 followed by place classes at 43-91."""
    return LabelVocabulary("joint", tuple(INCIDENT_CLASSES + PLACE_CLASSES))


def benchmark_vocabulary(task_id: str) -> LabelVocabulary:
    if task_id not in BENCHMARK_TASKS:
        raise VocabularyError(f"unknown benchmark task '{task_id}'. Available: {', '.join(BENCHMARK_TASKS)}")
    return LabelVocabulary(task_id, tuple(BENCHMARK_TASKS[task_id]))


def get_vocabulary(name: str) -> LabelVocabulary:
    """Look up a built-in vocabulary by name."""
    builders = {"incident": incident_vocabulary, "place": place_vocabulary, "joint": joint_vocabulary}
    if name in builders:
        return builders[name]()
    return benchmark_vocabulary(name)


def load_vocabulary(path: Path) -> LabelVocabulary:
    """Load a vocabulary from a YAML file with ``name`` and ``classes`` keys.

    Known vocabulary names are held to their expected sizes, so a truncated
    or padded class list fails loading.
    """
    data = yaml.safe_load(Path(path).read_text())
    if not isinstance(data, dict) or "name" not in data or "classes" not in data:
        raise IntegrityError(f"{path}: vocabulary file needs 'name' and 'classes'")
    return LabelVocabulary(str(data["name"]), tuple(str(c) for c in data["classes"]))
