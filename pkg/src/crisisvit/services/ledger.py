"""Append-only run ledger.

Each record is one JSON object per line. Appends are flushed and fsync'd
before returning, so a record written before a crash survives it.
"""

import json
import os
import time
from pathlib import Path
from typing import Any


class RunLedger:
    """Line-delimited record of stage starts/finishes, metrics and checkpoints."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, event: str, **fields: Any) -> dict[str, Any]:
        record = {"event": event, "timestamp": time.time(), **fields}
        line = json.dumps(record, sort_keys=True, default=str)
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())
        return record

    def metric(self, stage: str, epoch: int, step: int, loss: float, wall_time: float, **extra: Any) -> None:
        """Log one training metric line."""
        self.append("metric", stage=stage, epoch=epoch, step=step, loss=loss, wall_time=wall_time, **extra)

    def records(self, event: str | None = None) -> list[dict[str, Any]]:
        """All records, optionally filtered by event type.

        A torn final line (crash mid-write) is ignored.
        """
        if not self.path.exists():
            return []
        records = []
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    continue
                if event is None or record.get("event") == event:
                    records.append(record)
        return records

    def finished(self, key: str) -> dict[str, Any] | None:
        """Latest finish record for a stage or run key, if any."""
        matches = [r for r in self.records("finish") if r.get("key") == key]
        return matches[-1] if matches else None

    def missing_artifacts(self, root: Path) -> list[str]:
        """Checkpoint paths referenced by finish records that are not on disk."""
        missing = []
        for record in self.records("finish"):
            artifact = record.get("artifact")
            if artifact and not (Path(root) / artifact).exists():
                missing.append(artifact)
        return missing
