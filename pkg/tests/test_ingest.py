from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from monilog.ingest import (
    NoiseSpec,
    RawLogRecord,
    inject_noise,
    inject_noise_with_origins,
    iso_to_ms,
    ms_to_iso,
    read_stream,
    write_stream,
)

from conftest import make_records


def test_iso_round_trip():
    ms = 1_735_689_600_123
    assert iso_to_ms(ms_to_iso(ms)) == ms
    assert iso_to_ms("2025-01-01T00:00:00Z") == 1_735_689_600_000
    assert iso_to_ms("2025-01-01T01:00:00+01:00") == 1_735_689_600_000


def test_source_must_not_be_empty():
    with pytest.raises(ValueError):
        RawLogRecord(0, 0, "", "INFO", "hello")


class TestReadStream:
    def test_structured_two_lines_preserve_order(self, tmp_path):
        path = tmp_path / "in.ndjson"
        path.write_text(
            json.dumps({"ts": "2025-01-01T00:00:00Z", "source": "a", "level": "INFO", "message": "one"})
            + "\n"
            + json.dumps({"ts": "2025-01-01T00:00:01Z", "source": "b", "level": "WARN", "message": "two"})
            + "\n"
        )
        records, errors = read_stream(path)
        assert errors == []
        assert [r.seq_no for r in records] == [0, 1]
        assert [r.message for r in records] == ["one", "two"]
        assert records[1].source == "b"

    def test_empty_file_is_empty_sequence(self, tmp_path):
        path = tmp_path / "empty.ndjson"
        path.write_text("")
        records, errors = read_stream(path)
        assert records == [] and errors == []

    def test_malformed_line_is_reported_and_skipped(self, tmp_path):
        path = tmp_path / "mixed.ndjson"
        path.write_text(
            "{not json}\n"
            + json.dumps({"ts": "2025-01-01T00:00:00Z", "source": "a", "message": "ok"})
            + "\n"
        )
        records, errors = read_stream(path)
        assert len(records) == 1 and records[0].message == "ok"
        assert len(errors) == 1 and errors[0].line_no == 0

    def test_missing_source_is_an_error(self, tmp_path):
        path = tmp_path / "nosource.ndjson"
        path.write_text(json.dumps({"ts": "2025-01-01T00:00:00Z", "message": "x"}) + "\n")
        records, errors = read_stream(path)
        assert records == []
        assert "source" in errors[0].reason

    def test_plain_format_uses_default_source(self, tmp_path):
        path = tmp_path / "plain.log"
        path.write_text("first line\nsecond line\n")
        records, errors = read_stream(path, fmt="plain", default_source="syslog")
        assert errors == []
        assert [r.message for r in records] == ["first line", "second line"]
        assert all(r.source == "syslog" for r in records)

    def test_unreadable_input_raises(self, tmp_path):
        with pytest.raises(OSError):
            read_stream(tmp_path / "missing.ndjson")

    def test_write_read_round_trip(self, tmp_path):
        records = make_records(["alpha", "beta"], base_ts=1_735_689_600_000)
        path = tmp_path / "out.ndjson"
        write_stream(records, path)
        back, errors = read_stream(path)
        assert errors == []
        assert back == records

    def test_accepts_iterable_of_lines(self):
        lines = [
            json.dumps({"ts": "2025-01-01T00:00:00Z", "source": "a", "message": "hi"})
        ]
        records, errors = read_stream(lines)
        assert errors == []
        assert records[0].message == "hi"


class TestInjectNoise:
    def test_all_zero_spec_is_identity(self):
        records = make_records(["a", "b", "c"])
        assert inject_noise(records, NoiseSpec()) == records

    def test_forced_duplication_pairs_adjacent(self):
        records = make_records(["a", "b", "c"])
        out = inject_noise(records, NoiseSpec(duplicate_prob=1.0, seed=5))
        assert len(out) == 6
        assert [r.message for r in out] == ["a", "a", "b", "b", "c", "c"]
        assert [r.seq_no for r in out] == list(range(6))
        # duplicates keep every header field except seq_no
        for orig, dup in zip(out[::2], out[1::2]):
            assert (orig.timestamp, orig.source, orig.level) == (
                dup.timestamp,
                dup.source,
                dup.level,
            )

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5, 6, 7])
    def test_twist_applies_exactly_one_token_edit(self, seed):
        records = make_records(["a b c"])
        out = inject_noise(records, NoiseSpec(twist_prob=1.0, seed=seed))
        original = ["a", "b", "c"]
        twisted = out[0].message.split()
        assert len(twisted) in (2, 3, 4)
        # enumerate the three edit kinds: the twisted list must be reachable
        # from the original by exactly one insert, delete or replace
        def one_edit(a: list[str], b: list[str]) -> bool:
            if len(a) == len(b):
                return sum(x != y for x, y in zip(a, b)) == 1
            if len(b) == len(a) + 1:
                return any(b[:i] + b[i + 1 :] == a for i in range(len(b)))
            if len(b) == len(a) - 1:
                return any(a[:i] + a[i + 1 :] == b for i in range(len(a)))
            return False

        assert one_edit(original, twisted)

    def test_identical_seed_is_byte_identical(self):
        records = make_records([f"evt {i} done" for i in range(200)])
        spec = NoiseSpec(0.2, 4, 0.3, 0.2, seed=99)
        first = inject_noise(records, spec)
        second = inject_noise(records, spec)
        assert first == second

    def test_headers_never_altered_besides_seq_no(self):
        records = make_records([f"evt {i}" for i in range(100)], source="db", level="WARN")
        spec = NoiseSpec(0.3, 5, 0.3, 0.3, seed=7)
        out, origins = inject_noise_with_origins(records, spec)
        for rec, origin in zip(out, origins):
            src = records[origin]
            assert (rec.timestamp, rec.source, rec.level) == (
                src.timestamp,
                src.source,
                src.level,
            )
        assert [r.seq_no for r in out] == list(range(len(out)))

    def test_shuffle_displacement_is_bounded(self):
        records = make_records([f"evt {i}" for i in range(300)])
        window = 5
        out, origins = inject_noise_with_origins(
            records, NoiseSpec(shuffle_window=window, shuffle_prob=1.0, seed=3)
        )
        assert sorted(origins) == list(range(300))
        for position, origin in enumerate(origins):
            assert abs(position - origin) <= window

    def test_shuffle_window_zero_disables_shuffling(self):
        records = make_records([f"evt {i}" for i in range(50)])
        out = inject_noise(records, NoiseSpec(shuffle_window=0, shuffle_prob=1.0, seed=1))
        assert [r.message for r in out] == [r.message for r in records]

    def test_invalid_probability_rejected(self):
        with pytest.raises(ValueError):
            NoiseSpec(duplicate_prob=1.5)
        with pytest.raises(ValueError):
            NoiseSpec(shuffle_window=-1)

    @given(
        dup=st.floats(0, 1),
        twist=st.floats(0, 1),
        sprob=st.floats(0, 1),
        window=st.integers(0, 6),
        seed=st.integers(0, 2**32),
    )
    def test_noise_properties(self, dup, twist, sprob, window, seed):
        records = make_records([f"evt {i} of run" for i in range(40)])
        spec = NoiseSpec(dup, window, sprob, twist, seed)
        out, origins = inject_noise_with_origins(records, spec)
        assert len(out) == len(origins)
        assert len(out) >= len(records)
        assert [r.seq_no for r in out] == list(range(len(out)))
        # every input record survives (possibly twisted, never dropped)
        assert sorted(set(origins)) == list(range(len(records)))
