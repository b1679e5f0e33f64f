from __future__ import annotations

import pytest

from monilog.detect import TRIGGER_QUANTITATIVE, TRIGGER_SEQUENTIAL
from monilog.ingest import NoiseSpec, RawLogRecord, inject_noise
from monilog.pipeline import Pipeline, PipelineConfig
from monilog.synthetic import (
    ANOMALY_SEQUENTIAL,
    default_corpus_spec,
    generate_synthetic,
)

from conftest import make_records


@pytest.fixture(scope="module")
def trained_pipeline():
    train, _ = generate_synthetic(default_corpus_spec(3000), seed=1)
    pipeline = Pipeline(PipelineConfig())
    pipeline.learn_stream(train)
    return pipeline


def test_learn_phase_emits_no_reports(trained_pipeline):
    assert trained_pipeline.assembler.next_report_id == 1


def test_detection_flags_injected_sequential_anomalies():
    train, _ = generate_synthetic(default_corpus_spec(3000), seed=1)
    test, truth = generate_synthetic(
        default_corpus_spec(800, [(ANOMALY_SEQUENTIAL, 0.02)]), seed=2
    )
    pipeline = Pipeline(PipelineConfig())
    pipeline.learn_stream(train)
    reports = pipeline.detect_stream(test)
    flagged = {r.trigger_record.seq_no for r in reports if r.trigger == TRIGGER_SEQUENTIAL}
    anomalous = {t.line_no for t in truth if t.anomaly == ANOMALY_SEQUENTIAL}
    assert anomalous
    assert flagged == anomalous


def test_reports_only_from_anomalous_verdicts():
    train, _ = generate_synthetic(default_corpus_spec(2000), seed=3)
    clean, _ = generate_synthetic(default_corpus_spec(800), seed=4)
    pipeline = Pipeline(PipelineConfig())
    pipeline.learn_stream(train)
    assert pipeline.detect_stream(clean) == []


def test_adjacent_duplicates_are_not_flagged():
    train, _ = generate_synthetic(default_corpus_spec(3000), seed=5)
    clean, _ = generate_synthetic(default_corpus_spec(500), seed=6)
    noisy = inject_noise(clean, NoiseSpec(duplicate_prob=0.2, seed=7))
    pipeline = Pipeline(PipelineConfig())
    pipeline.learn_stream(train)
    assert pipeline.detect_stream(noisy) == []


def test_quantitative_trigger_through_pipeline():
    base = "Transfer of {} blocks finished"
    import random

    rng = random.Random(0)
    train = make_records([base.format(rng.randint(100, 200)) for _ in range(200)])
    probe = make_records([base.format(999_999)])
    probe = [RawLogRecord(500, 500_000, r.source, r.level, r.message) for r in probe]
    pipeline = Pipeline(PipelineConfig(min_support=1))
    pipeline.learn_stream(train)
    reports = pipeline.detect_stream(probe)
    assert [r.trigger for r in reports] == [TRIGGER_QUANTITATIVE]
    assert reports[0].score > 3


def test_state_round_trip_preserves_detection():
    train, _ = generate_synthetic(default_corpus_spec(2000), seed=8)
    test, _ = generate_synthetic(
        default_corpus_spec(400, [(ANOMALY_SEQUENTIAL, 0.02)]), seed=9
    )
    pipeline = Pipeline(PipelineConfig())
    pipeline.learn_stream(train)
    state = pipeline.to_state_dict()

    import json

    restored = Pipeline(PipelineConfig())
    restored.load_state_dict(json.loads(json.dumps(state)))
    original = [(r.trigger, r.trigger_record.seq_no) for r in pipeline.detect_stream(test)]
    revived = [(r.trigger, r.trigger_record.seq_no) for r in restored.detect_stream(test)]
    assert original == revived


def test_online_update_flag_controls_model_growth():
    train = make_records(["alpha step ok", "beta step ok"] * 40)
    novel = make_records(["gamma stage run", "delta stage run"] * 10)

    frozen = Pipeline(PipelineConfig(online_update=False))
    frozen.learn_stream(train)
    before = frozen.sequence_model.to_state_dict()
    frozen.detect_stream(novel)
    assert frozen.sequence_model.to_state_dict() == before

    online = Pipeline(PipelineConfig(online_update=True))
    online.learn_stream(train)
    online.detect_stream(novel)
    assert online.sequence_model.to_state_dict() != before
