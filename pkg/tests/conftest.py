from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# The four example messages used throughout the parser/eval tests: two byte
# transfers differing only in the byte count, a receive error and an
# integrity failure, all sharing the src/dest tail.
MSG_SEND_SMALL = "Sending 138 bytes src: 10.250.11.53 dest: /10.250.11.53"
MSG_RECV_ERROR = "Error while receiving data src: 10.250.11.53 dest: /10.250.11.53"
MSG_SEND_HUGE = "Sending 745675869 bytes src: 10.250.11.53 dest: /10.250.11.53"
MSG_INTEGRITY = "Failed to verify data integrity src: 10.250.11.53 dest: /10.250.11.53"

FOUR_MESSAGES = (MSG_SEND_SMALL, MSG_RECV_ERROR, MSG_SEND_HUGE, MSG_INTEGRITY)


@pytest.fixture
def four_messages() -> tuple[str, ...]:
    return FOUR_MESSAGES


def make_records(messages, source="net", base_ts=0, step_ms=100, level="INFO"):
    from monilog.ingest import RawLogRecord

    return [
        RawLogRecord(i, base_ts + i * step_ms, source, level, msg)
        for i, msg in enumerate(messages)
    ]
