from __future__ import annotations

import math
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from monilog.detect import (
    CONSTANT_SLOT_SCORE,
    TRIGGER_QUANTITATIVE,
    TRIGGER_SEQUENTIAL,
    VERDICT_ANOMALOUS,
    VERDICT_NONE,
    VERDICT_NORMAL,
    ReportAssembler,
    SequenceModel,
    StreamSequenceDetector,
    VariableStats,
    detect_quantitative,
    detect_sequential,
    update_variable_stats,
)
from monilog.parsing import ParsedLog


def parsed(seq_no, source="core", template_id=1, ts=None, bindings=()):
    return ParsedLog(
        seq_no=seq_no,
        timestamp=ts if ts is not None else seq_no * 100,
        source=source,
        template_id=template_id,
        bindings=tuple(bindings),
    )


class TestSequenceModel:
    def test_alternating_stream_counts_two_contexts(self):
        model = SequenceModel(context_len=1, min_support=1, top_g=1, lag_tolerance=1)
        stream = [("core", tid) for tid in [1, 2] * 10]
        model.train(stream)
        assert model.candidate_set("core", (1,)) == {2}
        assert model.candidate_set("core", (2,)) == {1}
        assert model.next_probability("core", (1,), 2) == 1.0

    def test_empty_stream_gives_empty_model(self):
        model = SequenceModel()
        assert model.is_empty
        assert model.occurrences(1) == 0

    def test_observed_pairs_follow_workflow_edges(self):
        from monilog.synthetic import default_corpus_spec, generate_synthetic

        spec = default_corpus_spec(2000)
        records, truth = generate_synthetic(spec, seed=8)
        model = SequenceModel(context_len=1, lag_tolerance=1)
        assignments = {r.seq_no: t.template_id for r, t in zip(records, truth)}
        model.train((r.source, assignments[r.seq_no]) for r in records)
        for (source, suffix, lag), counter in model._counts.items():
            if lag != 1 or len(suffix) != 1:
                continue
            for nxt in counter:
                assert nxt in spec.successors(source, suffix[0])

    def test_state_round_trip(self):
        model = SequenceModel(context_len=2, lag_tolerance=2)
        model.train([("a", t) for t in [1, 2, 3, 1, 2, 3, 1]])
        back = SequenceModel.from_state_dict(model.to_state_dict())
        assert back.to_state_dict() == model.to_state_dict()


class TestDetectSequential:
    def test_only_observed_successor_is_normal(self):
        model = SequenceModel(context_len=1, min_support=1, top_g=1, lag_tolerance=1)
        model.train([("core", t) for t in [1, 2] * 20])
        verdict, score = detect_sequential(model, "core", (1,), 2)
        assert verdict == VERDICT_NORMAL
        assert score == pytest.approx(0.0)

    def test_unseen_context_gives_no_verdict(self):
        model = SequenceModel(context_len=2, min_support=1, top_g=1, lag_tolerance=1)
        model.train([("core", t) for t in [1, 2] * 20])
        verdict, _ = detect_sequential(model, "core", (1, 4), 2)
        assert verdict == VERDICT_NONE

    def test_empty_counts_with_zero_support_flag_anomalous(self):
        # the out-of-flow triple: known events in an order never trained
        model = SequenceModel(context_len=2, min_support=0, top_g=1, lag_tolerance=1)
        verdict, score = detect_sequential(model, "core", (1, 4), 2)
        assert verdict == VERDICT_ANOMALOUS
        assert score == 1.0

    def test_top_g_covering_all_successors_never_flags_seen_pairs(self):
        model = SequenceModel(context_len=1, min_support=1, top_g=10, lag_tolerance=1)
        stream = [("core", t) for t in [1, 2, 1, 3, 1, 4, 1, 2, 1, 3, 1, 4] * 5]
        model.train(stream)
        for context, nxt in [((1,), 2), ((1,), 3), ((1,), 4), ((2,), 1)]:
            verdict, _ = detect_sequential(model, "core", context, nxt)
            assert verdict == VERDICT_NORMAL

    def test_rare_next_template_gets_no_verdict(self):
        model = SequenceModel(context_len=1, min_support=5, top_g=1, lag_tolerance=1)
        model.train([("core", t) for t in [1, 2] * 30] + [("core", 9)])
        verdict, _ = detect_sequential(model, "core", (1,), 9)
        assert verdict == VERDICT_NONE

    def test_cold_start_safety(self):
        model = SequenceModel(min_support=1)
        for context in [(), (1,), (1, 2, 3)]:
            verdict, _ = detect_sequential(model, "core", context, 5)
            assert verdict == VERDICT_NONE

    def test_per_source_isolation(self):
        model = SequenceModel(context_len=1, min_support=1, top_g=1, lag_tolerance=1)
        model.train([("a", t) for t in [1, 2] * 20] + [("b", t) for t in [3, 4] * 20])
        verdict, _ = detect_sequential(model, "a", (1,), 4)
        assert verdict == VERDICT_ANOMALOUS

    def test_relabeling_invariance(self):
        stream = [1, 2, 3, 1, 2, 4, 1, 2, 3, 1, 2, 3, 1, 2, 4, 1, 2, 3] * 4
        queries = [((1, 2), 3), ((1, 2), 4), ((2, 3), 1), ((1, 2), 1)]

        def verdicts(offset):
            model = SequenceModel(context_len=2, min_support=1, top_g=1, lag_tolerance=1)
            model.train([("core", t + offset) for t in stream])
            return [
                detect_sequential(model, "core", tuple(c + offset for c in ctx), nxt + offset)[0]
                for ctx, nxt in queries
            ]

        assert verdicts(0) == verdicts(100)

    def test_lag_tolerance_accepts_skipped_step(self):
        # cycle 1->2->3; a record arriving one step early is within tolerance
        model = SequenceModel(context_len=1, min_support=1, top_g=3, lag_tolerance=2)
        model.train([("core", t) for t in [1, 2, 3] * 20])
        verdict, _ = detect_sequential(model, "core", (1,), 3)
        assert verdict == VERDICT_NORMAL
        strict = SequenceModel(context_len=1, min_support=1, top_g=3, lag_tolerance=1)
        strict.train([("core", t) for t in [1, 2, 3] * 20])
        verdict, _ = detect_sequential(strict, "core", (1,), 3)
        assert verdict == VERDICT_ANOMALOUS


class TestStreamDetector:
    def test_backward_cache_absorbs_late_arrival(self):
        model = SequenceModel(context_len=1, min_support=1, top_g=1, lag_tolerance=2)
        model.train([("core", t) for t in [1, 2, 3] * 30])
        detector = StreamSequenceDetector(model)
        # swapped pair: 1 3 2 instead of 1 2 3; the late 2 was a recent candidate
        verdicts = [detector.process("core", t)[0] for t in [1, 2, 3, 1, 3, 2, 1, 2, 3]]
        assert VERDICT_ANOMALOUS not in verdicts

    def test_truly_foreign_template_still_flags(self):
        model = SequenceModel(context_len=1, min_support=1, top_g=1, lag_tolerance=2)
        model.train([("core", t) for t in [1, 2, 3] * 30] + [("aux", 9)] * 10)
        detector = StreamSequenceDetector(model)
        verdicts = [detector.process("core", t)[0] for t in [1, 2, 3, 1, 9]]
        assert verdicts[-1] == VERDICT_ANOMALOUS


class TestVariableStats:
    def test_two_point_moments(self):
        stats = VariableStats(min_samples=2)
        update_variable_stats(stats, 1, [(0, "2")])
        update_variable_stats(stats, 1, [(0, "4")])
        slot = stats.slot(1, 0)
        assert slot.mean == pytest.approx(3.0)
        assert slot.m2 / (slot.count - 1) == pytest.approx(2.0)

    def test_non_numeric_goes_to_seen_set(self):
        stats = VariableStats()
        update_variable_stats(stats, 1, [(0, "alice")])
        slot = stats.slot(1, 0)
        assert slot.seen == {"alice"}
        assert slot.count == 0

    @given(st.lists(st.integers(-10_000, 10_000), min_size=2, max_size=400))
    def test_moments_match_two_pass_oracle(self, values):
        stats = VariableStats(min_samples=2)
        for v in values:
            stats.update(1, [(0, str(v))])
        slot = stats.slot(1, 0)
        mean = statistics.fmean(values)
        m2 = sum((v - mean) ** 2 for v in values)
        assert slot.mean == pytest.approx(mean, rel=1e-9, abs=1e-9)
        assert slot.m2 == pytest.approx(m2, rel=1e-9, abs=1e-6)

    def test_value_at_mean_is_normal(self):
        stats = VariableStats(min_samples=2)
        for v in [10, 20]:
            stats.update(1, [(0, str(v))])
        verdict, z, _ = detect_quantitative(stats, 1, [(0, "15")])
        assert verdict == VERDICT_NORMAL
        assert z == pytest.approx(0.0)

    def test_uniform_training_with_midpoint_probe_is_normal(self):
        import random

        rng = random.Random(0)
        values = [rng.randint(100, 200) for _ in range(100)]
        stats = VariableStats()
        for v in values:
            stats.update(1, [(0, str(v))])
        mean = statistics.fmean(values)
        stddev = math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))
        assert abs(150 - mean) / stddev < 3
        verdict, _, _ = detect_quantitative(stats, 1, [(0, "150")])
        assert verdict == VERDICT_NORMAL

    def test_huge_value_flags_with_large_z(self):
        import random

        rng = random.Random(1)
        stats = VariableStats()
        for _ in range(100):
            stats.update(1, [(0, str(rng.randint(120, 160)))])
        verdict, z, slot = detect_quantitative(stats, 1, [(0, "745675869")])
        assert verdict == VERDICT_ANOMALOUS
        assert z > 3
        assert slot == 0

    def test_below_min_samples_gives_no_verdict(self):
        stats = VariableStats(min_samples=50)
        for v in range(10):
            stats.update(1, [(0, str(v))])
        verdict, _, _ = detect_quantitative(stats, 1, [(0, "999")])
        assert verdict == VERDICT_NONE

    def test_constant_slot_deviation(self):
        stats = VariableStats(min_samples=2)
        for _ in range(60):
            stats.update(1, [(0, "5")])
        verdict, z, _ = detect_quantitative(stats, 1, [(0, "6")])
        assert verdict == VERDICT_ANOMALOUS
        assert z == CONSTANT_SLOT_SCORE
        verdict, z, _ = detect_quantitative(stats, 1, [(0, "5")])
        assert verdict == VERDICT_NORMAL

    def test_max_z_slot_reported(self):
        stats = VariableStats(min_samples=2)
        import random

        rng = random.Random(2)
        for _ in range(60):
            stats.update(1, [(0, str(rng.randint(0, 10))), (3, str(rng.randint(0, 10)))])
        verdict, _, slot = detect_quantitative(stats, 1, [(0, "5"), (3, "5000")])
        assert verdict == VERDICT_ANOMALOUS
        assert slot == 3

    def test_state_round_trip(self):
        stats = VariableStats()
        for v in range(30):
            stats.update(2, [(1, str(v)), (4, "label")])
        back = VariableStats.from_state_dict(stats.to_state_dict())
        assert back.to_state_dict() == stats.to_state_dict()


class TestReportAssembler:
    def test_window_around_middle_trigger(self):
        assembler = ReportAssembler(window=2)
        records = [parsed(i) for i in range(5)]
        closed = []
        for i, rec in enumerate(records):
            closed.extend(assembler.on_record(rec))
            if i == 2:
                assembler.open_report(rec, TRIGGER_SEQUENTIAL, 1.0)
        closed.extend(assembler.flush())
        assert len(closed) == 1
        report = closed[0]
        assert [r.seq_no for r in report.context_records] == [0, 1, 2, 3, 4]
        assert report.trigger_record.seq_no == 2
        assert report.trigger_record in report.context_records

    def test_trigger_at_stream_start(self):
        assembler = ReportAssembler(window=3)
        rec = parsed(0)
        assembler.on_record(rec)
        assembler.open_report(rec, TRIGGER_SEQUENTIAL, 1.0)
        reports = assembler.flush()
        assert [r.seq_no for r in reports[0].context_records] == [0]

    def test_two_nearby_triggers_overlap(self):
        assembler = ReportAssembler(window=2)
        closed = []
        for i in range(8):
            rec = parsed(i)
            closed.extend(assembler.on_record(rec))
            if i in (3, 4):
                assembler.open_report(rec, TRIGGER_SEQUENTIAL, 1.0)
        closed.extend(assembler.flush())
        assert [r.report_id for r in closed] == [1, 2]
        first, second = closed
        assert [r.seq_no for r in first.context_records] == [1, 2, 3, 4, 5]
        assert [r.seq_no for r in second.context_records] == [2, 3, 4, 5, 6]

    def test_after_window_closes_on_count(self):
        assembler = ReportAssembler(window=2)
        rec = parsed(0)
        assembler.on_record(rec)
        assembler.open_report(rec, TRIGGER_QUANTITATIVE, 4.2)
        closed = []
        for i in range(1, 4):
            closed.extend(assembler.on_record(parsed(i)))
        assert len(closed) == 1
        assert [r.seq_no for r in closed[0].context_records] == [0, 1, 2]

    def test_after_window_closes_on_stream_timeout(self):
        assembler = ReportAssembler(window=5, after_timeout_ms=1000)
        rec = parsed(0, ts=0)
        assembler.on_record(rec)
        assembler.open_report(rec, TRIGGER_SEQUENTIAL, 1.0)
        assert assembler.on_record(parsed(1, ts=500)) == []
        late = assembler.on_record(parsed(2, ts=5_000))
        assert len(late) == 1
        # the record that crossed the deadline is not part of the window
        assert [r.seq_no for r in late[0].context_records] == [0, 1]

    def test_sources_do_not_mix(self):
        assembler = ReportAssembler(window=3)
        for i in range(4):
            assembler.on_record(parsed(i, source="a"))
        rec = parsed(10, source="b")
        assembler.on_record(rec)
        assembler.open_report(rec, TRIGGER_SEQUENTIAL, 1.0)
        reports = assembler.flush()
        assert [r.seq_no for r in reports[0].context_records] == [10]

    def test_report_ids_monotone(self):
        assembler = ReportAssembler()
        ids = []
        for i in range(3):
            rec = parsed(i)
            assembler.on_record(rec)
            ids.append(assembler.open_report(rec, TRIGGER_SEQUENTIAL, 1.0))
        assert ids == [1, 2, 3]

    def test_wire_round_trip(self):
        assembler = ReportAssembler(window=1)
        rec = parsed(0, bindings=[(1, "138")])
        assembler.on_record(rec)
        assembler.open_report(rec, TRIGGER_QUANTITATIVE, 7.5)
        report = assembler.flush()[0]
        from monilog.service import report_from_wire

        assert report_from_wire(report.to_wire()) == report
