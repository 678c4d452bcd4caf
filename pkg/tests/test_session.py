from __future__ import annotations

import pytest

from graphmem.session import SessionId, SessionStore, messages_key, metadata_key, queue_key
from graphmem.store import LogicalClock

SID = SessionId("cli", "u1a2", "20260101", 1)


def test_session_id_round_trip():
    assert str(SID) == "cli:u1a2:20260101:1"
    assert SessionId.parse(str(SID)) == SID
    for bad in ("cli:u:2026:1", "cli:u:20260101", "cli:u:20260101:0", "c li:u:20260101:1"):
        with pytest.raises(ValueError):
            SessionId.parse(bad)


def test_key_layout():
    assert messages_key("proj", SID) == "cogmem:proj:sessions:cli:u1a2:20260101:1:messages"
    assert metadata_key("proj", SID) == "cogmem:proj:sessions:cli:u1a2:20260101:1:metadata"
    assert queue_key("proj") == "cogmem:proj:consol_queue"


def test_capacity_evicts_oldest():
    s = SessionStore(LogicalClock(), capacity=50)
    for i in range(60):
        s.append("p", SID, "user", f"m{i}")
    msgs = s.get("p", SID)
    assert len(msgs) == 50
    assert msgs[0].text == "m10" and msgs[-1].text == "m59"
    assert s.metadata("p", SID)["message_count"] == 60


def test_ttl_refreshed_only_by_append():
    clock = LogicalClock(step=0.0)
    s = SessionStore(clock, ttl=3600)
    s.append("p", SID, "user", "hi")
    clock.advance(3000)
    s.get("p", SID)  # a read does not extend the lifetime
    clock.advance(599)
    assert [m.text for m in s.get("p", SID)] == ["hi"]
    clock.advance(1)
    assert s.get("p", SID) == []
    assert s.metadata("p", SID) is None


def test_append_extends_ttl():
    clock = LogicalClock(step=0.0)
    s = SessionStore(clock, ttl=100)
    s.append("p", SID, "user", "a")
    clock.advance(90)
    s.append("p", SID, "assistant", "b")
    clock.advance(90)
    assert len(s.get("p", SID)) == 2


def test_keys_and_clear():
    s = SessionStore(LogicalClock())
    s.append("p", SID, "user", "x")
    assert s.keys() == [messages_key("p", SID), metadata_key("p", SID)]
    s.clear("p", SID)
    assert s.keys() == []


def test_consolidation_queue_is_fifo_and_deduplicated():
    s = SessionStore(LogicalClock())
    other = SessionId("cli", "u1a2", "20260101", 2)
    s.enqueue_for_consolidation("p", SID)
    s.enqueue_for_consolidation("p", other)
    s.enqueue_for_consolidation("p", SID)
    assert s.queue("p") == [str(SID), str(other)]
    assert s.next_for_consolidation("p") == SID
    assert s.next_for_consolidation("p") == other
    assert s.next_for_consolidation("p") is None
