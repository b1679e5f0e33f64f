"""HTTP service wiring the pipeline end to end.

State-changing operations append to the event log before they are applied
and acknowledged, reports are appended to their own log the moment they are
assembled, and snapshots capture learned state.  Recovery is therefore:
load the newest snapshot, reload the report log, replay the event log tail.
"""

from __future__ import annotations

import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from fastapi import Body, FastAPI, HTTPException, Query

from .classify import (
    CRITICALITY_LEVELS,
    EVENT_MOVED_POOL,
    EVENT_SET_CRITICALITY,
    FeedbackEvent,
    PoolClassifier,
    featurize,
)
from .detect import AnomalyReport
from .ingest import RawLogRecord, _validate_wire_record, iso_to_ms, ms_to_iso
from .parsing import parsed_log_from_wire
from .pipeline import Pipeline, PipelineConfig
from .storage import (
    EVENT_POOL_CREATED,
    EVENT_POOL_DELETED,
    AppendLog,
    read_snapshot,
    write_snapshot,
)

DATA_DIR_ENV = "MONILOG_DATA_DIR"
DEFAULT_BATCH_LIMIT = 10_000
_CURSOR_RE = re.compile(r"^r(\d+)$")


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    batch_limit: int = DEFAULT_BATCH_LIMIT


@dataclass
class StoredReport:
    report: AnomalyReport
    confidence: float


def report_from_wire(row: dict) -> AnomalyReport:
    return AnomalyReport(
        report_id=int(row["report_id"]),
        trigger=row["trigger"],
        source=row["source"],
        trigger_record=parsed_log_from_wire(row["trigger_record"]),
        context_records=tuple(parsed_log_from_wire(r) for r in row["context_records"]),
        created_at=iso_to_ms(row["created_at"]),
        score=float(row["score"]),
    )


class MonitorService:
    """Single-process service state; API calls are serialized by one lock."""

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        self.lock = threading.RLock()
        self.data_dir = Path(config.data_dir)
        self.events = AppendLog(self.data_dir / "events.ndjson")
        self.report_log = AppendLog(self.data_dir / "reports.ndjson")
        self.snapshot_path = self.data_dir / "snapshot.json"
        self.pipeline = Pipeline(config.pipeline)
        self.classifier = PoolClassifier()
        self.reports: dict[int, StoredReport] = {}
        self.last_event_id = 0
        self._next_seq = 0
        self._recover(None if not self.snapshot_path.exists() else self.snapshot_path)

    # -- recovery ----------------------------------------------------------

    def _recover(self, snapshot_path: Path | None) -> None:
        pipeline = Pipeline(self.config.pipeline)
        classifier = PoolClassifier()
        last_event_id = 0
        next_seq = 0
        if snapshot_path is not None:
            state = read_snapshot(snapshot_path)
            pipeline.load_state_dict(state)
            classifier = PoolClassifier.from_state_dict(state["classifier"])
            last_event_id = int(state["last_event_id"])
            next_seq = int(state.get("next_seq", 0))

        # Reports and feedback events interleave (a report may be predicted
        # into a pool that a prior event created), so replay them in the
        # order they happened: each report row records the event horizon it
        # was stored under.
        reports: dict[int, StoredReport] = {}
        max_report_id = pipeline.assembler.next_report_id - 1
        event_rows = sorted(self.events.read_all(), key=lambda r: int(r["event_id"]))
        event_index = 0

        def replay_events_up_to(horizon: int | None) -> None:
            nonlocal event_index, last_event_id
            while event_index < len(event_rows):
                row = event_rows[event_index]
                event_id = int(row["event_id"])
                if horizon is not None and event_id > horizon:
                    break
                event_index += 1
                if event_id <= last_event_id:
                    continue
                self._apply_event_row(classifier, reports, row)
                last_event_id = event_id

        for row in self.report_log.read_all():
            replay_events_up_to(int(row.get("as_of_event", 0)))
            report = report_from_wire(row["report"])
            reports[report.report_id] = StoredReport(report, float(row["confidence"]))
            max_report_id = max(max_report_id, report.report_id)
            if classifier.assignment(report.report_id) is None:
                classifier.register_report(
                    report.report_id, int(row["pool_id"]), row["criticality"]
                )
        replay_events_up_to(None)
        pipeline.assembler.set_next_report_id(max_report_id + 1)

        self.pipeline = pipeline
        self.classifier = classifier
        self.reports = reports
        self.last_event_id = last_event_id
        self._next_seq = max(next_seq, self._next_seq)

    def _apply_event_row(
        self, classifier: PoolClassifier, reports: dict[int, StoredReport], row: dict
    ) -> None:
        kind = row["kind"]
        if kind == EVENT_POOL_CREATED:
            classifier.create_pool(
                row["to"], created_at=int(row["at"]), pool_id=int(row["pool_id"])
            )
        elif kind == EVENT_POOL_DELETED:
            classifier.delete_pool(int(row["to"]))
        else:
            event = FeedbackEvent(
                event_id=int(row["event_id"]),
                report_id=int(row["report_id"]),
                kind=kind,
                from_value=str(row["from"]),
                to_value=str(row["to"]),
                actor=row.get("actor", ""),
                at=int(row["at"]),
            )
            stored = reports.get(event.report_id)
            features = featurize(stored.report) if stored else {}
            classifier.apply_feedback(event, features)

    # -- learn phase -------------------------------------------------------

    def learn_records(self, records: Sequence[RawLogRecord]) -> int:
        with self.lock:
            renumbered = [
                RawLogRecord(self._next_seq + i, r.timestamp, r.source, r.level, r.message)
                for i, r in enumerate(records)
            ]
            self._next_seq += len(records)
            return self.pipeline.learn_stream(renumbered)

    # -- ingestion ---------------------------------------------------------

    def ingest(self, raw_records: Sequence[dict]) -> dict:
        if len(raw_records) > self.config.batch_limit:
            raise _HttpError(413, f"batch exceeds limit of {self.config.batch_limit}")
        with self.lock:
            accepted = 0
            errors: list[dict] = []
            reports: list[AnomalyReport] = []
            for index, obj in enumerate(raw_records):
                try:
                    ts, source, level, message = _validate_wire_record(obj)
                except ValueError as exc:
                    errors.append({"index": index, "error": str(exc)})
                    continue
                record = RawLogRecord(self._next_seq, ts, source, level, message)
                self._next_seq += 1
                reports.extend(self.pipeline.detect_record(record))
                accepted += 1
            # Close pending windows so every report triggered by this batch is
            # durable before the batch is acknowledged.
            reports.extend(self.pipeline.flush())
            for report in sorted(reports, key=lambda r: r.report_id):
                self._store_report(report)
            return {"accepted": accepted, "errors": errors}

    def _store_report(self, report: AnomalyReport) -> None:
        features = featurize(report)
        pool_id, criticality, confidence = self.classifier.predict(features)
        self.classifier.register_report(report.report_id, pool_id, criticality)
        self.report_log.append(
            {
                "report": report.to_wire(),
                "pool_id": pool_id,
                "criticality": criticality,
                "confidence": confidence,
                "as_of_event": self.last_event_id,
            }
        )
        self.reports[report.report_id] = StoredReport(report, confidence)

    # -- reads -------------------------------------------------------------

    def _decode_cursor(self, cursor: str | None) -> int:
        if cursor in (None, ""):
            return 0
        match = _CURSOR_RE.match(cursor)
        if not match:
            raise _HttpError(400, f"unknown cursor: {cursor}")
        last_seen = int(match.group(1))
        if last_seen >= self.pipeline.assembler.next_report_id:
            raise _HttpError(400, f"unknown cursor: {cursor}")
        return last_seen

    def list_anomalies(self, cursor: str | None, limit: int) -> dict:
        with self.lock:
            after = self._decode_cursor(cursor)
            selected = [
                self.reports[rid]
                for rid in sorted(self.reports)
                if rid > after
            ][: max(limit, 0)]
            rows = []
            for stored in selected:
                pool_id = self.classifier.assignment(stored.report.report_id)
                row = stored.report.to_wire()
                row["pool_id"] = pool_id
                row["pool_name"] = self.classifier.pools[pool_id].name
                row["criticality"] = self.classifier.report_criticality(
                    stored.report.report_id
                )
                row["confidence"] = stored.confidence
                rows.append(row)
            next_cursor = f"r{rows[-1]['report_id']}" if rows else (cursor or "")
            return {"reports": rows, "next_cursor": next_cursor}

    def list_pools(self) -> list[dict]:
        with self.lock:
            counts: dict[int, int] = {}
            for rid in self.classifier.report_ids:
                pid = self.classifier.assignment(rid)
                counts[pid] = counts.get(pid, 0) + 1
            return [
                {
                    "pool_id": pool.pool_id,
                    "name": pool.name,
                    "created_at": ms_to_iso(pool.created_at),
                    "deletable": pool.deletable,
                    "labeled_examples": self.classifier.labeled_example_count(pool.pool_id),
                    "report_count": counts.get(pool.pool_id, 0),
                }
                for pool in sorted(self.classifier.pools.values(), key=lambda p: p.pool_id)
            ]

    def templates(self) -> list[dict]:
        with self.lock:
            return [
                {"id": t.id, "template": t.render(), "support": t.support}
                for t in self.pipeline.miner.export_templates()
            ]

    def health(self) -> dict:
        with self.lock:
            return {
                "status": "ok",
                "reports": len(self.reports),
                "templates": self.pipeline.miner.template_count,
                "pools": len(self.classifier.pools),
                "last_event_id": self.last_event_id,
            }

    # -- feedback ------------------------------------------------------------

    def _next_event_id(self) -> int:
        self.last_event_id += 1
        return self.last_event_id

    def move_anomaly(self, report_id: int, pool_id: int, actor: str) -> dict:
        with self.lock:
            stored = self.reports.get(report_id)
            if stored is None:
                raise _HttpError(404, f"unknown report: {report_id}")
            if pool_id not in self.classifier.pools:
                raise _HttpError(404, f"unknown pool: {pool_id}")
            current = self.classifier.assignment(report_id)
            if current == pool_id:
                return {"report_id": report_id, "pool_id": pool_id, "changed": False}
            event = FeedbackEvent(
                event_id=self._next_event_id(),
                report_id=report_id,
                kind=EVENT_MOVED_POOL,
                from_value=str(current),
                to_value=str(pool_id),
                actor=actor,
                at=int(time.time() * 1000),
            )
            self.events.append(event.to_wire())
            self.classifier.apply_feedback(event, featurize(stored.report))
            return {"report_id": report_id, "pool_id": pool_id, "changed": True}

    def set_criticality(self, report_id: int, level: str, actor: str) -> dict:
        with self.lock:
            stored = self.reports.get(report_id)
            if stored is None:
                raise _HttpError(404, f"unknown report: {report_id}")
            if level not in CRITICALITY_LEVELS:
                raise _HttpError(400, f"unknown criticality level: {level}")
            current = self.classifier.report_criticality(report_id)
            if current == level:
                return {"report_id": report_id, "criticality": level, "changed": False}
            event = FeedbackEvent(
                event_id=self._next_event_id(),
                report_id=report_id,
                kind=EVENT_SET_CRITICALITY,
                from_value=str(current),
                to_value=level,
                actor=actor,
                at=int(time.time() * 1000),
            )
            self.events.append(event.to_wire())
            self.classifier.apply_feedback(event, featurize(stored.report))
            return {"report_id": report_id, "criticality": level, "changed": True}

    # -- pool management -----------------------------------------------------

    def create_pool(self, name: str, actor: str) -> dict:
        with self.lock:
            if not name:
                raise _HttpError(400, "pool name must not be empty")
            if any(p.name == name for p in self.classifier.pools.values()):
                raise _HttpError(409, f"pool name already exists: {name}")
            pool_id = self.classifier.next_pool_id
            now = int(time.time() * 1000)
            self.events.append(
                {
                    "event_id": self._next_event_id(),
                    "report_id": None,
                    "kind": EVENT_POOL_CREATED,
                    "from": "",
                    "to": name,
                    "actor": actor,
                    "at": now,
                    "pool_id": pool_id,
                }
            )
            pool = self.classifier.create_pool(name, created_at=now, pool_id=pool_id)
            return {"pool_id": pool.pool_id, "name": pool.name}

    def delete_pool(self, pool_id: int, actor: str) -> dict:
        with self.lock:
            pool = self.classifier.pools.get(pool_id)
            if pool is None:
                raise _HttpError(404, f"unknown pool: {pool_id}")
            if not pool.deletable:
                raise _HttpError(400, "the default pool cannot be deleted")
            self.events.append(
                {
                    "event_id": self._next_event_id(),
                    "report_id": None,
                    "kind": EVENT_POOL_DELETED,
                    "from": pool.name,
                    "to": str(pool_id),
                    "actor": actor,
                    "at": int(time.time() * 1000),
                }
            )
            moved = self.classifier.delete_pool(pool_id)
            return {"deleted": pool_id, "reassigned_reports": moved}

    # -- snapshots -----------------------------------------------------------

    def snapshot(self, path: str | None = None) -> dict:
        with self.lock:
            target = Path(path) if path else self.snapshot_path
            state = self.pipeline.to_state_dict()
            state["classifier"] = self.classifier.to_state_dict()
            state["last_event_id"] = self.last_event_id
            state["next_seq"] = self._next_seq
            state["created_at"] = ms_to_iso(int(time.time() * 1000))
            write_snapshot(target, state)
            return {"path": str(target)}

    def restore(self, path: str) -> dict:
        with self.lock:
            # Validate fully before touching live state.
            read_snapshot(path)
            self._recover(Path(path))
            return {"restored": str(path), "last_event_id": self.last_event_id}


class _HttpError(HTTPException):
    def __init__(self, status_code: int, detail: str) -> None:
        super().__init__(status_code=status_code, detail=detail)


def create_app(service: MonitorService) -> FastAPI:
    app = FastAPI(title="monilog", version="0.1.0")
    app.state.service = service

    @app.get("/health")
    def health() -> dict:
        return service.health()

    @app.post("/ingest")
    def ingest(body: dict = Body(...)) -> dict:
        records = body.get("records")
        if not isinstance(records, list):
            raise _HttpError(400, "body must carry a 'records' array")
        return service.ingest(records)

    @app.get("/anomalies")
    def anomalies(
        cursor: str | None = Query(default=None),
        limit: int = Query(default=100, ge=0, le=1000),
    ) -> dict:
        return service.list_anomalies(cursor, limit)

    @app.post("/anomalies/{report_id}/pool")
    def move(report_id: int, body: dict = Body(...)) -> dict:
        if "pool_id" not in body:
            raise _HttpError(400, "body must carry pool_id")
        return service.move_anomaly(
            report_id, int(body["pool_id"]), str(body.get("actor", "admin"))
        )

    @app.post("/anomalies/{report_id}/criticality")
    def criticality(report_id: int, body: dict = Body(...)) -> dict:
        if "level" not in body:
            raise _HttpError(400, "body must carry level")
        return service.set_criticality(
            report_id, str(body["level"]), str(body.get("actor", "admin"))
        )

    @app.get("/pools")
    def pools() -> list[dict]:
        return service.list_pools()

    @app.post("/pools")
    def create_pool(body: dict = Body(...)) -> dict:
        if "name" not in body:
            raise _HttpError(400, "body must carry name")
        return service.create_pool(str(body["name"]), str(body.get("actor", "admin")))

    @app.delete("/pools/{pool_id}")
    def delete_pool(pool_id: int) -> dict:
        return service.delete_pool(pool_id, "admin")

    @app.get("/templates")
    def templates() -> list[dict]:
        return service.templates()

    @app.post("/admin/snapshot")
    def snapshot(body: dict | None = Body(default=None)) -> dict:
        path = (body or {}).get("path")
        return service.snapshot(path)

    @app.post("/admin/restore")
    def restore(body: dict = Body(...)) -> dict:
        if "path" not in body:
            raise _HttpError(400, "body must carry path")
        try:
            return service.restore(str(body["path"]))
        except (ValueError, OSError) as exc:
            raise _HttpError(400, str(exc)) from exc

    return app
