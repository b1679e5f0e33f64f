"""Workflow-driven synthetic corpora with per-line ground truth.

Each source owns a small transition graph over message templates; normal
lines walk that graph while injected anomalies either break an edge (a
statement appearing out of flow, usually borrowed from another source) or
push a slot value outside its declared generator range.  The emitted ground
truth carries per-line template ids, static/variable token labels and the
anomaly label, which is what the evaluation metrics consume.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .ingest import RawLogRecord
from .parsing import WILDCARD

ANOMALY_NONE = "none"
ANOMALY_SEQUENTIAL = "seq"
ANOMALY_QUANTITATIVE = "quant"

_BASE_TS = 1_735_689_600_000  # 2025-01-01T00:00:00Z
_TS_STEP_MS = 100
_WARMUP_LINES = 16
_SEQ_SPACING = 4


@dataclass(frozen=True)
class SlotGenerator:
    """Value generator for one template slot: an integer range or a value set."""

    kind: str  # "int" | "choice"
    lo: int = 0
    hi: int = 0
    values: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind == "int":
            if self.lo > self.hi:
                raise ValueError("int generator needs lo <= hi")
        elif self.kind == "choice":
            if not self.values:
                raise ValueError("choice generator needs at least one value")
            for value in self.values:
                if not value or any(ch.isspace() for ch in value):
                    raise ValueError(f"choice value must be one token: {value!r}")
        else:
            raise ValueError(f"unknown slot generator kind: {self.kind}")

    def draw(self, rng: random.Random) -> str:
        if self.kind == "int":
            return str(rng.randint(self.lo, self.hi))
        return rng.choice(self.values)

    def out_of_range(self, rng: random.Random) -> str:
        """A value guaranteed to fall outside this generator's declared range."""
        if self.kind == "int":
            span = max(self.hi - self.lo, 1)
            return str(self.hi + span * rng.randint(3, 12))
        return "__unseen_" + str(rng.randint(10_000, 99_999))


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    templates: tuple[str, ...]
    slot_generators: tuple[tuple[SlotGenerator, ...], ...]
    workflow: Mapping[str, tuple[tuple[int, int], ...]]  # source -> transition edges
    n_lines: int
    anomaly_injections: tuple[tuple[str, float], ...] = ()
    levels: tuple[str, ...] = ("INFO",)

    def __post_init__(self) -> None:
        if not self.templates:
            raise ValueError("template list must not be empty")
        if len(self.slot_generators) != len(self.templates):
            raise ValueError("one slot generator tuple per template required")
        for tid, (text, gens) in enumerate(zip(self.templates, self.slot_generators)):
            slots = text.split().count(WILDCARD)
            if slots != len(gens):
                raise ValueError(
                    f"template {tid} has {slots} slots but {len(gens)} generators"
                )
        if not self.workflow:
            raise ValueError("workflow must define at least one source")
        for source, edges in self.workflow.items():
            for a, b in edges:
                if not (0 <= a < len(self.templates) and 0 <= b < len(self.templates)):
                    raise ValueError(f"workflow edge ({a}, {b}) references unknown template")
        for kind, rate in self.anomaly_injections:
            if kind not in (ANOMALY_SEQUENTIAL, ANOMALY_QUANTITATIVE):
                raise ValueError(f"unknown anomaly kind: {kind}")
            if not 0.0 <= rate <= 1.0:
                raise ValueError("anomaly rate must be in [0, 1]")
        if self.n_lines < 0:
            raise ValueError("n_lines must be >= 0")

    def source_templates(self, source: str) -> tuple[int, ...]:
        seen: list[int] = []
        for a, b in self.workflow[source]:
            for tid in (a, b):
                if tid not in seen:
                    seen.append(tid)
        return tuple(seen)

    def successors(self, source: str, template_id: int) -> tuple[int, ...]:
        return tuple(b for a, b in self.workflow[source] if a == template_id)


@dataclass(frozen=True)
class GroundTruthLine:
    line_no: int
    template_id: int
    token_labels: tuple[str, ...]
    anomaly: str = ANOMALY_NONE

    def to_wire(self) -> dict:
        return {
            "line_no": self.line_no,
            "template_id": self.template_id,
            "token_labels": list(self.token_labels),
            "anomaly": self.anomaly,
        }


def write_ground_truth(truth: Iterable[GroundTruthLine], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in truth:
            fh.write(json.dumps(line.to_wire()) + "\n")


def read_ground_truth(path: str | Path) -> list[GroundTruthLine]:
    truth: list[GroundTruthLine] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        obj = json.loads(raw)
        truth.append(
            GroundTruthLine(
                line_no=obj["line_no"],
                template_id=obj["template_id"],
                token_labels=tuple(obj["token_labels"]),
                anomaly=obj["anomaly"],
            )
        )
    return truth


def _template_labels(template_text: str) -> tuple[str, ...]:
    return tuple("V" if tok == WILDCARD else "S" for tok in template_text.split())


def _render(template_text: str, values: Sequence[str]) -> str:
    out: list[str] = []
    it = iter(values)
    for tok in template_text.split():
        out.append(next(it) if tok == WILDCARD else tok)
    return " ".join(out)


def _pick_positions(
    rng: random.Random, n_lines: int, count: int, taken: set[int], spacing: int
) -> list[int]:
    candidates = list(range(_WARMUP_LINES, n_lines))
    rng.shuffle(candidates)
    chosen: list[int] = []
    for pos in candidates:
        if len(chosen) == count:
            break
        if any(abs(pos - other) < spacing for other in taken):
            continue
        chosen.append(pos)
        taken.update(range(pos - spacing + 1, pos + spacing))
    return sorted(chosen)


def generate_synthetic(
    spec: SyntheticCorpusSpec, seed: int = 0
) -> tuple[list[RawLogRecord], list[GroundTruthLine]]:
    """Generate a labeled record stream following the corpus spec's workflows.

    Deterministic for a fixed seed.  Sequential anomalies are inserted
    without advancing the per-source walk, so every other line still follows
    an edge from its walk predecessor; quantitative anomalies keep the normal
    flow but place one numeric slot value outside the generator range.
    """
    rng = random.Random(seed)
    sources = sorted(spec.workflow)
    walk_pos: dict[str, int | None] = {s: None for s in sources}

    seq_count = quant_count = 0
    for kind, rate in spec.anomaly_injections:
        if kind == ANOMALY_SEQUENTIAL:
            seq_count += round(rate * spec.n_lines)
        else:
            quant_count += round(rate * spec.n_lines)
    taken: set[int] = set()
    seq_positions = set(_pick_positions(rng, spec.n_lines, seq_count, taken, _SEQ_SPACING))
    quant_positions = set(_pick_positions(rng, spec.n_lines, quant_count, taken, 1))

    # Quantitative anomalies need a template with an integer slot, so only
    # sources owning one can host those positions.
    int_slot_templates = {
        tid
        for tid, gens in enumerate(spec.slot_generators)
        if any(g.kind == "int" for g in gens)
    }

    records: list[RawLogRecord] = []
    truth: list[GroundTruthLine] = []
    for line_no in range(spec.n_lines):
        source = rng.choice(sources)
        own = spec.source_templates(source)
        current = walk_pos[source]
        anomaly = ANOMALY_NONE

        if line_no in seq_positions and current is not None:
            foreign = [tid for tid in range(len(spec.templates)) if tid not in own]
            candidates = foreign or [
                tid for tid in own if tid not in spec.successors(source, current)
            ]
            if candidates:
                template_id = candidates[rng.randrange(len(candidates))]
                anomaly = ANOMALY_SEQUENTIAL
            else:
                template_id = _next_walk_step(spec, rng, source, current)
                walk_pos[source] = template_id
        else:
            template_id = _next_walk_step(spec, rng, source, current)
            walk_pos[source] = template_id
            if line_no in quant_positions and template_id in int_slot_templates:
                anomaly = ANOMALY_QUANTITATIVE

        gens = spec.slot_generators[template_id]
        values = [g.draw(rng) for g in gens]
        if anomaly == ANOMALY_QUANTITATIVE:
            int_slots = [i for i, g in enumerate(gens) if g.kind == "int"]
            slot = int_slots[rng.randrange(len(int_slots))]
            values[slot] = gens[slot].out_of_range(rng)

        message = _render(spec.templates[template_id], values)
        records.append(
            RawLogRecord(
                seq_no=line_no,
                timestamp=_BASE_TS + line_no * _TS_STEP_MS,
                source=source,
                level=spec.levels[template_id % len(spec.levels)],
                message=message,
            )
        )
        truth.append(
            GroundTruthLine(
                line_no=line_no,
                template_id=template_id,
                token_labels=_template_labels(spec.templates[template_id]),
                anomaly=anomaly,
            )
        )
    return records, truth


def _next_walk_step(
    spec: SyntheticCorpusSpec, rng: random.Random, source: str, current: int | None
) -> int:
    own = spec.source_templates(source)
    if current is None:
        return own[0]
    successors = spec.successors(source, current)
    if not successors:
        return own[0]
    return successors[rng.randrange(len(successors))]


_IP_POOL = ("10.250.11.53", "10.250.11.54", "172.16.4.9", "192.168.7.21")


def default_corpus_spec(
    n_lines: int,
    anomaly_injections: Sequence[tuple[str, float]] = (),
) -> SyntheticCorpusSpec:
    """A 20-template, three-source corpus used by the CLI when no spec is given."""
    ints = lambda lo, hi: SlotGenerator("int", lo=lo, hi=hi)
    choice = lambda *values: SlotGenerator("choice", values=tuple(values))
    templates: list[tuple[str, tuple[SlotGenerator, ...]]] = [
        ("Starting worker <*> with profile <*>", (ints(1, 40), choice("batch", "stream", "adhoc"))),
        ("Loaded configuration revision <*> in <*> ms", (ints(100, 400), ints(5, 80))),
        ("Scheduling job <*> on queue <*>", (ints(1000, 9000), choice("ingest", "export", "maintenance"))),
        ("Completed job <*> after <*> ms", (ints(1000, 9000), ints(10, 900))),
        ("Idle worker pool at <*> percent", (ints(10, 90),)),
        ("Flushing cache shard <*>", (ints(0, 15),)),
        ("Archived <*> events to tier <*>", (ints(1, 5000), choice("cold", "warm"))),
        ("Opening session <*> for user <*>", (ints(100, 999), choice("alice", "bob", "carol", "dave"))),
        ("Executing statement batch <*> rows <*>", (ints(1, 300), ints(1, 500))),
        ("Committed transaction <*> in <*> ms", (ints(10_000, 99_999), ints(1, 120))),
        ("Vacuum pass finished on relation <*>", (choice("accounts", "events", "sessions", "audit"),)),
        ("Closed session <*> cleanly", (ints(100, 999),)),
        ("Replicated wal segment <*> to standby <*>", (ints(1, 4000), ints(1, 3))),
        ("Checkpoint <*> written in <*> ms", (ints(1, 800), ints(20, 400))),
        ("Sending <*> bytes src: <*> dest: <*>", (ints(64, 2048), choice(*_IP_POOL), choice(*_IP_POOL))),
        ("Received <*> bytes on port <*>", (ints(64, 2048), ints(1024, 9999))),
        ("Negotiated cipher <*> with peer <*>", (choice("aes128", "aes256", "chacha20"), choice(*_IP_POOL))),
        ("Heartbeat acknowledged by <*> after <*> ms", (choice(*_IP_POOL), ints(1, 30))),
        ("Routing table refreshed with <*> entries", (ints(10, 200),)),
        ("Dropped connection from <*> idle <*> s", (choice(*_IP_POOL), ints(30, 600))),
    ]
    workflow = {
        "app": ((0, 1), (1, 2), (2, 3), (3, 4), (3, 2), (4, 5), (4, 0), (5, 6), (6, 0)),
        "db": ((7, 8), (8, 9), (9, 10), (9, 8), (10, 11), (11, 12), (11, 7), (12, 13), (13, 7)),
        "net": ((14, 15), (15, 16), (15, 18), (16, 17), (17, 18), (17, 14), (18, 19), (19, 14)),
    }
    return SyntheticCorpusSpec(
        templates=tuple(text for text, _ in templates),
        slot_generators=tuple(gens for _, gens in templates),
        workflow={src: tuple(edges) for src, edges in workflow.items()},
        n_lines=n_lines,
        anomaly_injections=tuple(anomaly_injections),
    )


def spec_from_wire(obj: dict, n_lines: int | None = None) -> SyntheticCorpusSpec:
    """Build a corpus spec from its JSON form (see README for the schema)."""
    generators = []
    for gens in obj["slot_generators"]:
        generators.append(
            tuple(
                SlotGenerator(
                    kind=g["kind"],
                    lo=g.get("lo", 0),
                    hi=g.get("hi", 0),
                    values=tuple(g.get("values", ())),
                )
                for g in gens
            )
        )
    return SyntheticCorpusSpec(
        templates=tuple(obj["templates"]),
        slot_generators=tuple(generators),
        workflow={
            src: tuple((int(a), int(b)) for a, b in edges)
            for src, edges in obj["workflow"].items()
        },
        n_lines=n_lines if n_lines is not None else int(obj.get("n_lines", 0)),
        anomaly_injections=tuple(
            (kind, float(rate)) for kind, rate in obj.get("anomaly_injections", ())
        ),
    )
