"""Raw log ingestion: file/batch reading, stream replay and noise injection."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

TWIST_VOCABULARY = ("retry", "warn", "dbg", "alt", "extra")


def iso_to_ms(value: str) -> int:
    """Parse an ISO-8601 timestamp into epoch milliseconds (UTC)."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000.0))


def ms_to_iso(ms: int) -> str:
    dt = datetime.fromtimestamp(ms / 1000.0, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ms % 1000:03d}Z"


@dataclass(frozen=True)
class RawLogRecord:
    """One ingested log line: header fields plus the free-text message."""

    seq_no: int
    timestamp: int  # epoch milliseconds, UTC
    source: str
    level: str
    message: str

    def __post_init__(self) -> None:
        if not self.source:
            raise ValueError("source must not be empty")

    def to_wire(self) -> dict:
        return {
            "ts": ms_to_iso(self.timestamp),
            "source": self.source,
            "level": self.level,
            "message": self.message,
        }


@dataclass(frozen=True)
class LineError:
    """A malformed input line; the stream continues past it."""

    line_no: int
    reason: str


@dataclass(frozen=True)
class NoiseSpec:
    """Controlled instability applied to a replayed stream.

    ``duplicate_prob`` re-emits a record right after the original,
    ``shuffle_window``/``shuffle_prob`` permute records within a bounded
    displacement, and ``twist_prob`` applies one random token
    insert/delete/replace to the message.
    """

    duplicate_prob: float = 0.0
    shuffle_window: int = 0
    shuffle_prob: float = 0.0
    twist_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("duplicate_prob", "shuffle_prob", "twist_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.shuffle_window < 0:
            raise ValueError("shuffle_window must be >= 0")

    @property
    def is_identity(self) -> bool:
        return (
            self.duplicate_prob == 0.0
            and self.twist_prob == 0.0
            and (self.shuffle_window == 0 or self.shuffle_prob == 0.0)
        )


def _validate_wire_record(obj: object) -> tuple[int, str, str, str]:
    """Check one structured record and return (timestamp_ms, source, level, message)."""
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    if "ts" not in obj:
        raise ValueError("missing field: ts")
    if "source" not in obj or not obj["source"]:
        raise ValueError("missing field: source")
    if "message" not in obj:
        raise ValueError("missing field: message")
    try:
        ts = iso_to_ms(str(obj["ts"]))
    except (ValueError, TypeError) as exc:
        raise ValueError(f"bad timestamp: {exc}") from exc
    return ts, str(obj["source"]), str(obj.get("level", "")), str(obj["message"])


def read_stream(
    source: str | Path | Iterable[str],
    fmt: str = "structured",
    default_source: str = "default",
) -> tuple[list[RawLogRecord], list[LineError]]:
    """Read raw records from a file path or an iterable of lines.

    ``fmt="structured"`` expects newline-delimited JSON objects with fields
    ts (ISO-8601), source, level, message.  ``fmt="plain"`` treats every line
    as a message and assigns ``default_source``.  Records are emitted in file
    order with seq_no 0, 1, 2, ...; malformed structured lines are reported
    with their line number and skipped.
    """
    if fmt not in ("structured", "plain"):
        raise ValueError(f"unknown input format: {fmt}")
    if isinstance(source, (str, Path)):
        lines: Iterable[str] = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = source

    records: list[RawLogRecord] = []
    errors: list[LineError] = []
    seq = 0
    for line_no, line in enumerate(lines):
        if fmt == "plain":
            records.append(RawLogRecord(seq, line_no, default_source, "", line.rstrip("\n")))
            seq += 1
            continue
        if not line.strip():
            continue
        try:
            ts, src, level, message = _validate_wire_record(json.loads(line))
        except (json.JSONDecodeError, ValueError) as exc:
            errors.append(LineError(line_no, str(exc)))
            continue
        records.append(RawLogRecord(seq, ts, src, level, message))
        seq += 1
    return records, errors


def write_stream(records: Iterable[RawLogRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_wire()) + "\n")


def _twist_message(message: str, rng: random.Random) -> str:
    """Apply exactly one token-level edit (insert, delete or replace)."""
    tokens = message.split()
    if not tokens:
        return message
    kinds = ["insert", "replace"] if len(tokens) < 2 else ["insert", "delete", "replace"]
    kind = rng.choice(kinds)
    if kind == "insert":
        pos = rng.randrange(len(tokens) + 1)
        tokens.insert(pos, rng.choice(TWIST_VOCABULARY))
    elif kind == "delete":
        tokens.pop(rng.randrange(len(tokens)))
    else:
        pos = rng.randrange(len(tokens))
        word = rng.choice(TWIST_VOCABULARY)
        if word == tokens[pos]:
            word = word + "2"
        tokens[pos] = word
    return " ".join(tokens)


def _bounded_shuffle(n: int, window: int, prob: float, rng: random.Random) -> list[int]:
    """Return a permutation of range(n) where nobody moves more than ``window``.

    Selected positions are swapped with a partner at most ``window`` ahead, and
    every element takes part in at most one swap, so the displacement bound
    holds exactly.
    """
    perm = list(range(n))
    used = [False] * n
    for i in range(n):
        if used[i] or rng.random() >= prob:
            continue
        hi = min(i + window, n - 1)
        if hi <= i:
            continue
        candidates = [j for j in range(i + 1, hi + 1) if not used[j]]
        if not candidates:
            continue
        j = rng.choice(candidates)
        perm[i], perm[j] = perm[j], perm[i]
        used[i] = used[j] = True
    return perm


def inject_noise(
    records: Sequence[RawLogRecord], spec: NoiseSpec
) -> list[RawLogRecord]:
    """Apply duplication, twisting and bounded shuffling; deterministic per seed."""
    out, _ = inject_noise_with_origins(records, spec)
    return out


def inject_noise_with_origins(
    records: Sequence[RawLogRecord], spec: NoiseSpec
) -> tuple[list[RawLogRecord], list[int]]:
    """Like :func:`inject_noise`, also returning each output record's origin index.

    The origin list maps output positions to positions in ``records``, which
    evaluation harnesses need to carry ground-truth labels across the noise.
    """
    if spec.is_identity:
        return list(records), list(range(len(records)))
    rng = random.Random(spec.seed)
    staged: list[tuple[RawLogRecord, int]] = []
    for idx, rec in enumerate(records):
        staged.append((rec, idx))
        if spec.duplicate_prob > 0 and rng.random() < spec.duplicate_prob:
            staged.append((rec, idx))
    if spec.twist_prob > 0:
        twisted: list[tuple[RawLogRecord, int]] = []
        for rec, idx in staged:
            if rec.message and rng.random() < spec.twist_prob:
                rec = replace(rec, message=_twist_message(rec.message, rng))
            twisted.append((rec, idx))
        staged = twisted
    if spec.shuffle_window > 0 and spec.shuffle_prob > 0:
        perm = _bounded_shuffle(len(staged), spec.shuffle_window, spec.shuffle_prob, rng)
        staged = [staged[p] for p in perm]
    out = [replace(rec, seq_no=i) for i, (rec, _) in enumerate(staged)]
    return out, [idx for _, idx in staged]
