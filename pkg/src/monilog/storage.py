"""Durable state for the service: event log, report log and snapshots.

The feedback event log is the classifier's source of truth; reports are
appended to their own log the moment they are assembled.  Snapshots capture
the learned state plus the id of the last applied event, so recovery is
a snapshot load followed by a replay of the log tails.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterator

SNAPSHOT_VERSION = 1

EVENT_POOL_CREATED = "pool_created"
EVENT_POOL_DELETED = "pool_deleted"


class AppendLog:
    """Append-only newline-delimited JSON log with fsync on every append."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: dict) -> None:
        line = json.dumps(record, separators=(",", ":")) + "\n"
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def read_all(self) -> Iterator[dict]:
        if not self.path.exists():
            return
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                yield json.loads(line)


def write_snapshot(path: str | Path, state: dict) -> None:
    """Atomic snapshot write (temp file plus rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(state)
    payload["version"] = SNAPSHOT_VERSION
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def read_snapshot(path: str | Path) -> dict:
    """Load and validate a snapshot; raises ValueError on corruption/mismatch."""
    path = Path(path)
    try:
        state = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt snapshot {path}: {exc}") from exc
    if not isinstance(state, dict) or state.get("version") != SNAPSHOT_VERSION:
        raise ValueError(
            f"incompatible snapshot version: {state.get('version')!r} "
            f"(expected {SNAPSHOT_VERSION})"
        )
    required = {"parser", "sequence_model", "variable_stats", "classifier", "last_event_id"}
    missing = required - state.keys()
    if missing:
        raise ValueError(f"snapshot missing fields: {sorted(missing)}")
    return state
