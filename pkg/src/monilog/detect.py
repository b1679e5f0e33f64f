"""Sequential and quantitative anomaly detection over the parsed stream.

Sequential detection learns per-source (context -> next template) frequency
counters for context suffixes of every length up to the configured window
and for forward lags up to ``lag_tolerance``; a record is anomalous when its
template is outside the top-g candidates of every supported suffix.  The lag
dimension plus a short backward cache in the streaming wrapper make verdicts
tolerant of bounded stream reordering.  Quantitative detection keeps
single-pass moments per template slot and flags values beyond a z-score
threshold.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .ingest import ms_to_iso
from .parsing import ParsedLog

VERDICT_NORMAL = "normal"
VERDICT_ANOMALOUS = "anomalous"
VERDICT_NONE = "no-verdict"

TRIGGER_SEQUENTIAL = "sequential"
TRIGGER_QUANTITATIVE = "quantitative"

# Score reported when a constant-valued slot sees a different value; kept
# finite so reports stay valid JSON.
CONSTANT_SLOT_SCORE = 1e9

DEFAULT_CONTEXT_LEN = 3
DEFAULT_MIN_SUPPORT = 5
DEFAULT_TOP_G = 9
DEFAULT_LAG_TOLERANCE = 3
DEFAULT_RARE_TEMPLATE_FRACTION = 0.001
DEFAULT_Z_THRESHOLD = 3.0
DEFAULT_MIN_SAMPLES = 50
DEFAULT_REPORT_WINDOW = 10
DEFAULT_AFTER_TIMEOUT_MS = 5_000
DEFAULT_DEDUP_WINDOW = 8


class SequenceModel:
    """Per-source next-template frequency model over sliding contexts."""

    def __init__(
        self,
        context_len: int = DEFAULT_CONTEXT_LEN,
        min_support: int = DEFAULT_MIN_SUPPORT,
        top_g: int = DEFAULT_TOP_G,
        lag_tolerance: int = DEFAULT_LAG_TOLERANCE,
        rare_template_fraction: float = DEFAULT_RARE_TEMPLATE_FRACTION,
    ) -> None:
        if context_len < 1:
            raise ValueError("context_len must be >= 1")
        if top_g < 1:
            raise ValueError("top_g must be >= 1")
        if lag_tolerance < 1:
            raise ValueError("lag_tolerance must be >= 1")
        if rare_template_fraction < 0:
            raise ValueError("rare_template_fraction must be >= 0")
        self.context_len = context_len
        self.min_support = min_support
        self.top_g = top_g
        self.lag_tolerance = lag_tolerance
        self.rare_template_fraction = rare_template_fraction
        # (source, context suffix, lag) -> Counter of templates seen `lag`
        # steps after the suffix.
        self._counts: dict[tuple[str, tuple[int, ...], int], Counter] = {}
        self._occurrences: Counter = Counter()
        self._total_observations = 0
        self._recent: dict[str, deque[int]] = {}

    @property
    def is_empty(self) -> bool:
        return not self._counts

    def observe(self, source: str, template_id: int) -> None:
        """Feed one (source, template) observation into the counters."""
        recent = self._recent.setdefault(
            source, deque(maxlen=self.context_len + self.lag_tolerance)
        )
        n = len(recent)
        for lag in range(1, self.lag_tolerance + 1):
            if lag > n:
                break
            for length in range(1, self.context_len + 1):
                start = n - lag - length + 1
                if start < 0:
                    break
                suffix = tuple(list(recent)[start : n - lag + 1])
                key = (source, suffix, lag)
                counter = self._counts.get(key)
                if counter is None:
                    counter = self._counts[key] = Counter()
                counter[template_id] += 1
        recent.append(template_id)
        self._occurrences[template_id] += 1
        self._total_observations += 1

    def train(self, stream: Iterable[tuple[str, int]]) -> "SequenceModel":
        for source, template_id in stream:
            self.observe(source, template_id)
        return self

    def occurrences(self, template_id: int) -> int:
        return self._occurrences[template_id]

    def rarity_floor(self) -> int:
        """Templates seen fewer times than this are too new to judge.

        The floor is min_support or the rare-template fraction of all
        training observations, whichever is larger; with min_support 0 the
        gate is disabled entirely.
        """
        if self.min_support <= 0:
            return 0
        return max(
            self.min_support,
            int(self._total_observations * self.rare_template_fraction),
        )

    def _top_candidates(self, counter: Counter) -> list[int]:
        ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
        return [tid for tid, _ in ranked[: self.top_g]]

    def candidate_set(self, source: str, context: Sequence[int]) -> set[int] | None:
        """Top-g candidates over all lags for the deepest supported suffix.

        Returns None when no suffix of the context reaches min_support.
        """
        context = tuple(context)
        for length in range(min(self.context_len, len(context)), 0, -1):
            suffix = context[-length:]
            lag1 = self._counts.get((source, suffix, 1), Counter())
            if sum(lag1.values()) < self.min_support:
                continue
            candidates: set[int] = set()
            for lag in range(1, self.lag_tolerance + 1):
                counter = self._counts.get((source, suffix, lag))
                if counter:
                    candidates.update(self._top_candidates(counter))
            return candidates
        if self.min_support == 0:
            return set()
        return None

    def next_probability(self, source: str, context: Sequence[int], template_id: int) -> float:
        context = tuple(context)
        for length in range(min(self.context_len, len(context)), 0, -1):
            counter = self._counts.get((source, context[-length:], 1))
            if counter and sum(counter.values()) >= self.min_support:
                return counter[template_id] / sum(counter.values())
        return 0.0

    def to_state_dict(self) -> dict:
        return {
            "context_len": self.context_len,
            "min_support": self.min_support,
            "top_g": self.top_g,
            "lag_tolerance": self.lag_tolerance,
            "rare_template_fraction": self.rare_template_fraction,
            "total_observations": self._total_observations,
            "occurrences": sorted(self._occurrences.items()),
            "counts": [
                [source, list(suffix), lag, sorted(counter.items())]
                for (source, suffix, lag), counter in sorted(
                    self._counts.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])
                )
            ],
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "SequenceModel":
        model = cls(
            context_len=state["context_len"],
            min_support=state["min_support"],
            top_g=state["top_g"],
            lag_tolerance=state["lag_tolerance"],
            rare_template_fraction=state.get(
                "rare_template_fraction", DEFAULT_RARE_TEMPLATE_FRACTION
            ),
        )
        model._total_observations = int(state.get("total_observations", 0))
        model._occurrences = Counter({int(t): c for t, c in state["occurrences"]})
        for source, suffix, lag, items in state["counts"]:
            model._counts[(source, tuple(int(t) for t in suffix), lag)] = Counter(
                {int(t): c for t, c in items}
            )
        return model


def detect_sequential(
    model: SequenceModel, source: str, context: Sequence[int], next_template: int
) -> tuple[str, float]:
    """Verdict for one (context, next) query against a trained model.

    A context whose every suffix is below min_support yields no verdict, as
    does a next template below the model's rarity floor (a brand new or
    still-rare template is unknown, not a flow deviation).  Otherwise the
    template must appear among the top-g candidates of the deepest supported
    suffix.
    """
    if model.occurrences(next_template) < model.rarity_floor():
        return VERDICT_NONE, 0.0
    candidates = model.candidate_set(source, context)
    if candidates is None:
        return VERDICT_NONE, 0.0
    score = 1.0 - model.next_probability(source, context, next_template)
    if next_template in candidates:
        return VERDICT_NORMAL, max(0.0, min(1.0, score))
    return VERDICT_ANOMALOUS, max(0.0, min(1.0, score))


class StreamSequenceDetector:
    """Streaming wrapper: tracks per-source context and recent candidate sets.

    The cache of the last ``lag_tolerance - 1`` candidate sets absorbs
    records that arrive a couple of positions late, mirroring how the lag
    dimension absorbs records that arrive early.
    """

    def __init__(self, model: SequenceModel) -> None:
        self.model = model
        self._contexts: dict[str, deque[int]] = {}
        self._recent_candidates: dict[str, deque[frozenset[int]]] = {}

    def process(self, source: str, template_id: int) -> tuple[str, float]:
        context = self._contexts.setdefault(source, deque(maxlen=self.model.context_len))
        cache = self._recent_candidates.setdefault(
            source, deque(maxlen=max(self.model.lag_tolerance - 1, 0))
        )
        verdict, score = detect_sequential(self.model, source, tuple(context), template_id)
        if verdict == VERDICT_ANOMALOUS and any(template_id in seen for seen in cache):
            verdict, score = VERDICT_NORMAL, 0.0
        candidates = self.model.candidate_set(source, tuple(context))
        cache.append(frozenset(candidates or ()))
        context.append(template_id)
        return verdict, score

    def reset(self) -> None:
        self._contexts.clear()
        self._recent_candidates.clear()


@dataclass
class _SlotStats:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    seen: set = field(default_factory=set)
    seen_capped: bool = False


class VariableStats:
    """Per (template, slot) value statistics with single-pass moments."""

    def __init__(
        self,
        z_threshold: float = DEFAULT_Z_THRESHOLD,
        min_samples: int = DEFAULT_MIN_SAMPLES,
        seen_cap: int = 1000,
    ) -> None:
        if z_threshold <= 0:
            raise ValueError("z_threshold must be > 0")
        self.z_threshold = z_threshold
        self.min_samples = min_samples
        self.seen_cap = seen_cap
        self._slots: dict[tuple[int, int], _SlotStats] = {}

    @staticmethod
    def _as_number(text: str) -> float | None:
        try:
            return float(text)
        except ValueError:
            return None

    def slot(self, template_id: int, position: int) -> _SlotStats | None:
        return self._slots.get((template_id, position))

    def update(self, template_id: int, bindings: Sequence[tuple[int, str]]) -> None:
        """Welford update for numeric values; others land in the seen set."""
        for position, text in bindings:
            stats = self._slots.setdefault((template_id, position), _SlotStats())
            value = self._as_number(text)
            if value is None:
                if len(stats.seen) < self.seen_cap:
                    stats.seen.add(text)
                else:
                    stats.seen_capped = True
                continue
            stats.count += 1
            delta = value - stats.mean
            stats.mean += delta / stats.count
            stats.m2 += delta * (value - stats.mean)

    def detect(
        self, template_id: int, bindings: Sequence[tuple[int, str]]
    ) -> tuple[str, float, int | None]:
        """Verdict plus the max-z slot; slots below min_samples give no verdict."""
        best: tuple[float, int] | None = None
        any_judged = False
        for position, text in bindings:
            value = self._as_number(text)
            if value is None:
                continue
            stats = self._slots.get((template_id, position))
            if stats is None or stats.count < max(2, self.min_samples):
                continue
            any_judged = True
            stddev = math.sqrt(stats.m2 / (stats.count - 1)) if stats.m2 > 0 else 0.0
            if stddev == 0.0:
                z = 0.0 if value == stats.mean else CONSTANT_SLOT_SCORE
            else:
                z = abs(value - stats.mean) / stddev
            if best is None or z > best[0]:
                best = (z, position)
        if not any_judged or best is None:
            return VERDICT_NONE, 0.0, None
        z, position = best
        verdict = VERDICT_ANOMALOUS if z > self.z_threshold else VERDICT_NORMAL
        return verdict, z, position

    def to_state_dict(self) -> dict:
        return {
            "z_threshold": self.z_threshold,
            "min_samples": self.min_samples,
            "seen_cap": self.seen_cap,
            "slots": [
                {
                    "template_id": tid,
                    "position": pos,
                    "count": s.count,
                    "mean": s.mean,
                    "m2": s.m2,
                    "seen": sorted(s.seen),
                    "seen_capped": s.seen_capped,
                }
                for (tid, pos), s in sorted(self._slots.items())
            ],
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "VariableStats":
        stats = cls(
            z_threshold=state["z_threshold"],
            min_samples=state["min_samples"],
            seen_cap=state["seen_cap"],
        )
        for entry in state["slots"]:
            stats._slots[(entry["template_id"], entry["position"])] = _SlotStats(
                count=entry["count"],
                mean=entry["mean"],
                m2=entry["m2"],
                seen=set(entry["seen"]),
                seen_capped=entry["seen_capped"],
            )
        return stats


def update_variable_stats(
    stats: VariableStats, template_id: int, bindings: Sequence[tuple[int, str]]
) -> VariableStats:
    stats.update(template_id, bindings)
    return stats


def detect_quantitative(
    stats: VariableStats, template_id: int, bindings: Sequence[tuple[int, str]]
) -> tuple[str, float, int | None]:
    return stats.detect(template_id, bindings)


@dataclass(frozen=True)
class AnomalyReport:
    """A trigger plus the window of parsed logs around it."""

    report_id: int
    trigger: str  # sequential | quantitative
    source: str
    trigger_record: ParsedLog
    context_records: tuple[ParsedLog, ...]
    created_at: int  # trigger stream time, epoch ms
    score: float

    def to_wire(self) -> dict:
        return {
            "report_id": self.report_id,
            "trigger": self.trigger,
            "source": self.source,
            "score": self.score,
            "created_at": ms_to_iso(self.created_at),
            "trigger_record": self.trigger_record.to_wire(),
            "context_records": [rec.to_wire() for rec in self.context_records],
        }


@dataclass
class _PendingReport:
    report_id: int
    trigger: str
    score: float
    record: ParsedLog
    before: list[ParsedLog]
    after: list[ParsedLog] = field(default_factory=list)


class ReportAssembler:
    """Builds anomaly reports from per-source ring buffers of parsed logs.

    The context window spans up to ``window`` records before and after the
    trigger from the same source; the after side closes on count, on stream
    time running ``after_timeout_ms`` past the trigger, or on flush.
    """

    def __init__(
        self,
        window: int = DEFAULT_REPORT_WINDOW,
        after_timeout_ms: int = DEFAULT_AFTER_TIMEOUT_MS,
        next_report_id: int = 1,
    ) -> None:
        self.window = window
        self.after_timeout_ms = after_timeout_ms
        self._next_id = next_report_id
        self._buffers: dict[str, deque[ParsedLog]] = {}
        self._pending: dict[str, list[_PendingReport]] = {}

    @property
    def next_report_id(self) -> int:
        return self._next_id

    def set_next_report_id(self, value: int) -> None:
        self._next_id = value

    def _close(self, pending: _PendingReport) -> AnomalyReport:
        context = tuple(pending.before + [pending.record] + pending.after)
        return AnomalyReport(
            report_id=pending.report_id,
            trigger=pending.trigger,
            source=pending.record.source,
            trigger_record=pending.record,
            context_records=context,
            created_at=pending.record.timestamp,
            score=pending.score,
        )

    def on_record(self, record: ParsedLog) -> list[AnomalyReport]:
        """Advance the source's pending windows; returns reports that closed."""
        closed: list[AnomalyReport] = []
        pending = self._pending.get(record.source, [])
        still_open: list[_PendingReport] = []
        for item in pending:
            if record.timestamp - item.record.timestamp > self.after_timeout_ms:
                closed.append(self._close(item))
                continue
            item.after.append(record)
            if len(item.after) >= self.window:
                closed.append(self._close(item))
            else:
                still_open.append(item)
        if pending:
            self._pending[record.source] = still_open
        buffer = self._buffers.setdefault(record.source, deque(maxlen=self.window + 1))
        buffer.append(record)
        return closed

    def open_report(self, record: ParsedLog, trigger: str, score: float) -> int:
        """Register a trigger for the most recently seen record of its source."""
        buffer = self._buffers.get(record.source)
        if not buffer or buffer[-1] is not record:
            raise RuntimeError("trigger record is not the source's latest record")
        report_id = self._next_id
        self._next_id += 1
        self._pending.setdefault(record.source, []).append(
            _PendingReport(
                report_id=report_id,
                trigger=trigger,
                score=score,
                record=record,
                before=list(buffer)[:-1],
            )
        )
        return report_id

    def flush(self) -> list[AnomalyReport]:
        """Close every pending report with the context gathered so far."""
        closed: list[AnomalyReport] = []
        for source in sorted(self._pending):
            for item in self._pending[source]:
                closed.append(self._close(item))
        self._pending.clear()
        closed.sort(key=lambda r: r.report_id)
        return closed
