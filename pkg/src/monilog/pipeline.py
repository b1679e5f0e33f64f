"""End-to-end wiring: preprocess -> parse -> detect -> report assembly.

A pipeline runs in one of two modes.  The learn phase builds the sequence
model and slot statistics from a stream assumed anomaly-free; the detect
phase keeps mining templates online but holds the detection models fixed
(unless online updating is switched on) and emits anomaly reports.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable

from .detect import (
    DEFAULT_AFTER_TIMEOUT_MS,
    DEFAULT_CONTEXT_LEN,
    DEFAULT_DEDUP_WINDOW,
    DEFAULT_LAG_TOLERANCE,
    DEFAULT_MIN_SAMPLES,
    DEFAULT_MIN_SUPPORT,
    DEFAULT_RARE_TEMPLATE_FRACTION,
    DEFAULT_REPORT_WINDOW,
    DEFAULT_TOP_G,
    DEFAULT_Z_THRESHOLD,
    TRIGGER_QUANTITATIVE,
    TRIGGER_SEQUENTIAL,
    VERDICT_ANOMALOUS,
    AnomalyReport,
    ReportAssembler,
    SequenceModel,
    StreamSequenceDetector,
    VariableStats,
)
from .ingest import RawLogRecord
from .parsing import ParsedLog, ParserParams, TemplateMiner
from .preprocess import preprocess_message


@dataclass(frozen=True)
class PipelineConfig:
    parser_params: ParserParams = field(default_factory=ParserParams)
    context_len: int = DEFAULT_CONTEXT_LEN
    min_support: int = DEFAULT_MIN_SUPPORT
    top_g: int = DEFAULT_TOP_G
    lag_tolerance: int = DEFAULT_LAG_TOLERANCE
    rare_template_fraction: float = DEFAULT_RARE_TEMPLATE_FRACTION
    z_threshold: float = DEFAULT_Z_THRESHOLD
    min_samples: int = DEFAULT_MIN_SAMPLES
    report_window: int = DEFAULT_REPORT_WINDOW
    after_timeout_ms: int = DEFAULT_AFTER_TIMEOUT_MS
    dedup_window: int = DEFAULT_DEDUP_WINDOW
    online_update: bool = False
    masks: tuple[tuple[str, str], ...] | None = None

    def with_parser_params(self, params: ParserParams) -> "PipelineConfig":
        return replace(self, parser_params=params)


class Pipeline:
    """Single-writer pipeline shard; partition streams by source to scale out."""

    def __init__(self, config: PipelineConfig | None = None) -> None:
        self.config = config or PipelineConfig()
        self.miner = TemplateMiner(self.config.parser_params)
        self.sequence_model = SequenceModel(
            context_len=self.config.context_len,
            min_support=self.config.min_support,
            top_g=self.config.top_g,
            lag_tolerance=self.config.lag_tolerance,
            rare_template_fraction=self.config.rare_template_fraction,
        )
        self.variable_stats = VariableStats(
            z_threshold=self.config.z_threshold,
            min_samples=self.config.min_samples,
        )
        self.detector = StreamSequenceDetector(self.sequence_model)
        self.assembler = ReportAssembler(
            window=self.config.report_window,
            after_timeout_ms=self.config.after_timeout_ms,
        )
        self._recent_messages: dict[str, deque[tuple]] = {}

    # -- shared parse step -------------------------------------------------

    def parse_record(self, record: RawLogRecord) -> ParsedLog:
        pre = preprocess_message(record.message, self.config.masks)
        template_id, bindings = self.miner.parse_tokens(
            [t.text for t in pre.free_text_tokens]
        )
        return ParsedLog(
            seq_no=record.seq_no,
            timestamp=record.timestamp,
            source=record.source,
            template_id=template_id,
            bindings=tuple(bindings),
            payload=pre.payload,
        )

    # -- learn phase ---------------------------------------------------------

    def learn_record(self, record: RawLogRecord) -> ParsedLog:
        parsed = self.parse_record(record)
        self.observe_parsed(parsed)
        return parsed

    def learn_stream(self, records: Iterable[RawLogRecord]) -> int:
        count = 0
        for record in records:
            self.learn_record(record)
            count += 1
        return count

    def observe_parsed(self, parsed: ParsedLog) -> None:
        self.sequence_model.observe(parsed.source, parsed.template_id)
        self.variable_stats.update(parsed.template_id, parsed.bindings)

    # -- detect phase ----------------------------------------------------

    def _is_duplicate(self, parsed: ParsedLog) -> bool:
        """Adjacent re-emissions of an identical line are replay noise, not events."""
        if self.config.dedup_window <= 0:
            return False
        key = (parsed.template_id, parsed.bindings, parsed.payload)
        recent = self._recent_messages.setdefault(
            parsed.source, deque(maxlen=self.config.dedup_window)
        )
        duplicate = key in recent
        recent.append(key)
        return duplicate

    def detect_record(self, record: RawLogRecord) -> list[AnomalyReport]:
        """Run one record through detection; returns reports that closed."""
        parsed = self.parse_record(record)
        return self.detect_parsed(parsed)

    def detect_parsed(self, parsed: ParsedLog) -> list[AnomalyReport]:
        closed = self.assembler.on_record(parsed)
        if not self._is_duplicate(parsed):
            verdict, score = self.detector.process(parsed.source, parsed.template_id)
            if verdict == VERDICT_ANOMALOUS:
                self.assembler.open_report(parsed, TRIGGER_SEQUENTIAL, score)
            q_verdict, z, _slot = self.variable_stats.detect(
                parsed.template_id, parsed.bindings
            )
            if q_verdict == VERDICT_ANOMALOUS:
                self.assembler.open_report(parsed, TRIGGER_QUANTITATIVE, z)
            if self.config.online_update:
                self.observe_parsed(parsed)
        return closed

    def detect_stream(
        self, records: Iterable[RawLogRecord], flush: bool = True
    ) -> list[AnomalyReport]:
        reports: list[AnomalyReport] = []
        for record in records:
            reports.extend(self.detect_record(record))
        if flush:
            reports.extend(self.assembler.flush())
        reports.sort(key=lambda r: r.report_id)
        return reports

    def flush(self) -> list[AnomalyReport]:
        return self.assembler.flush()

    # -- persistence -------------------------------------------------------

    def to_state_dict(self) -> dict:
        return {
            "parser": self.miner.to_state_dict(),
            "sequence_model": self.sequence_model.to_state_dict(),
            "variable_stats": self.variable_stats.to_state_dict(),
            "next_report_id": self.assembler.next_report_id,
        }

    def load_state_dict(self, state: dict) -> None:
        self.miner = TemplateMiner.from_state_dict(state["parser"])
        self.sequence_model = SequenceModel.from_state_dict(state["sequence_model"])
        self.variable_stats = VariableStats.from_state_dict(state["variable_stats"])
        self.detector = StreamSequenceDetector(self.sequence_model)
        self.assembler = ReportAssembler(
            window=self.config.report_window,
            after_timeout_ms=self.config.after_timeout_ms,
            next_report_id=state["next_report_id"],
        )
        self._recent_messages.clear()
