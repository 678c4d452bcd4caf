from __future__ import annotations

import threading
from typing import List, Sequence

import pytest

from graphmem import dream
from graphmem.dream import (
    Assessment,
    CursorCorrupt,
    DreamBusy,
    DreamOptions,
    MemoryView,
    RuleAssessor,
    decode_cursor,
    encode_cursor,
    load_cursor,
    state_kref,
)
from graphmem.kref import Kref, RevisionRef
from graphmem.store import EdgeType, Graph, LogicalClock
from oracles import PROJECT, Recording, conv, run_schedule

P = PROJECT


def memories(n: int) -> Graph:
    g = Graph(clock=LogicalClock())
    for i in range(n):
        conv(g, f"m{i:02d}", f"memory number {i} about topic {i % 3}", topics=f"t{i % 3}")
    return g


class FlagAll:
    """Adversarial: wants everything gone, with distinct relevance."""

    def assess(self, batch: Sequence[MemoryView]) -> List[Assessment]:
        return [
            Assessment(v.revision_ref, relevance_score=(hash(v.summary) % 100) / 100, should_deprecate=True,
                       deprecation_reason="adversarial")
            for v in batch
        ]


def _deprecated_count(g: Graph) -> int:
    return sum(1 for it in g.items(P) if it.deprecated and it.kref != state_kref(P))


def test_cursor_token_round_trip():
    for n in (0, 1, 42, 10**12):
        assert decode_cursor(encode_cursor(n)) == n
    for bad in ("", "!!!", encode_cursor(1)[:-2] + "xx", "eyJjIjoxfQ=="):
        with pytest.raises(CursorCorrupt):
            decode_cursor(bad)


def test_circuit_breaker_caps_at_ratio():
    g = memories(20)
    report = dream.run(g, P, FlagAll(), DreamOptions(max_deprecation_ratio=0.5))
    assert report.memories_assessed == 20
    assert len(report.deprecated) == 10
    assert len(report.capped) == 10
    assert report.circuit_breaker_tripped
    assert _deprecated_count(g) == 10
    # Lowest relevance goes first.
    kept = {r.target for r in report.capped}
    dropped = {r.target for r in report.deprecated}
    assert kept.isdisjoint(dropped)


def test_published_items_survive_without_override():
    g = memories(6)
    for it in g.items(P)[:3]:
        g.bind_tag(it.kref, "published", 1)
    report = dream.run(g, P, FlagAll(), DreamOptions(max_deprecation_ratio=0.9))
    assert not report.circuit_breaker_tripped
    for it in g.items(P):
        if it.kref == state_kref(P):
            continue
        assert it.deprecated == ("published" not in g.item_tags(it.kref))
    assert sum("published" in r.detail for r in report.skipped) == 3


def test_published_override():
    g = memories(4)
    target = g.items(P)[0].kref
    g.bind_tag(target, "published", 1)

    class FlagFirst:
        def assess(self, batch):
            return [Assessment(v.revision_ref, 0.5, should_deprecate=v.revision_ref.item == target,
                               deprecation_reason="retired") for v in batch]

    report = dream.run(g, P, FlagFirst(), DreamOptions(allow_published_deprecation=True))
    assert g.is_deprecated(target)
    assert len(report.overrides) == 1


def test_dry_run_is_read_only():
    g = memories(10)
    before = g.to_bytes()
    report = dream.run(g, P, FlagAll(), DreamOptions(dry_run=True))
    assert g.to_bytes() == before
    assert report.dry_run and report.circuit_breaker_tripped
    assert len(report.deprecated) == 5


def test_cursor_advances_and_second_run_is_empty():
    g = memories(5)
    rec = Recording()
    r1 = dream.run(g, P, rec)
    assert r1.previous_cursor is None
    assert load_cursor(g, P) == r1.new_cursor
    rec.seen.clear()
    r2 = dream.run(g, P, rec)
    assert rec.seen == []
    assert r2.memories_assessed == 0


def test_dream_writes_are_not_reassessed():
    g = memories(3)
    rec = Recording()
    dream.run(g, P, rec)  # RuleAssessor suggests topic tags, no metadata revisions
    g2 = memories(3)

    class Enrich:
        def assess(self, batch):
            return [Assessment(v.revision_ref, 0.5, metadata_updates={"keywords": "extra"},
                               related_memories=[(batch[0].revision_ref, EdgeType.REFERENCED)] if v is not batch[0] else [])
                    for v in batch]

    r = dream.run(g2, P, Enrich())
    assert len(r.metadata_updated) == 3
    rec2 = Recording()
    r2 = dream.run(g2, P, rec2)
    assert rec2.seen == []
    assert r2.events_processed > 0


def test_duplicate_rule():
    g = Graph(clock=LogicalClock())
    old = conv(g, "a", "User likes tea")
    new = conv(g, "b", "user LIKES tea!")
    conv(g, "c", "something else")
    report = dream.run(g, P, RuleAssessor())
    assert [r.target for r in report.deprecated] == [str(old)]
    assert g.is_deprecated(old.item) and not g.is_deprecated(new.item)


def test_assessor_failure_skips_batch():
    class Broken:
        def assess(self, batch):
            raise RuntimeError("down")

    g = memories(5)
    report = dream.run(g, P, Broken(), DreamOptions(batch_size=2))
    assert len(report.skipped) == 5
    assert report.memories_assessed == 0
    assert load_cursor(g, P) == report.new_cursor


def test_wrong_assessment_count_is_failure():
    class Short:
        def assess(self, batch):
            return [Assessment(batch[0].revision_ref, 0.1)]

    g = memories(3)
    report = dream.run(g, P, Short(), DreamOptions(batch_size=3))
    assert all(d == "skipped" for d in report.dispositions.values())


def test_failed_action_is_isolated():
    g = memories(3)
    views = []

    class BadEdge:
        def assess(self, batch):
            views.extend(batch)
            ghost = RevisionRef(Kref(P, ("chat",), "ghost", "conversation"), 1)
            return [Assessment(batch[0].revision_ref, 0.5, related_memories=[(ghost, EdgeType.REFERENCED)])] + [
                Assessment(v.revision_ref, 0.5, suggested_tags=["keep"]) for v in batch[1:]
            ]

    report = dream.run(g, P, BadEdge())
    assert len(report.failed) == 1
    assert len(report.tags_added) == 2
    assert report.dispositions[views[0].revision_ref] == "failed"


def test_corrupt_stored_cursor():
    g = memories(2)
    dream.run(g, P)
    g.create_revision(state_kref(P), summary="bad", metadata={"cursor": "999999"})
    with pytest.raises(CursorCorrupt):
        dream.run(g, P)


def test_single_flight():
    g = memories(3)
    started, release = threading.Event(), threading.Event()

    class Slow:
        def assess(self, batch):
            started.set()
            release.wait(5)
            return RuleAssessor().assess(batch)

    t = threading.Thread(target=dream.run, args=(g, P, Slow()))
    t.start()
    started.wait(5)
    with pytest.raises(DreamBusy):
        dream.run(g, P)
    release.set()
    t.join()


def test_report_markdown_and_artifact(tmp_path):
    g = memories(20)
    report = dream.run(g, P, FlagAll(), DreamOptions(report_dir=tmp_path))
    md = report.markdown()
    assert md.startswith("# Dream State Report")
    assert "## Cursor" in md and encode_cursor(report.new_cursor) in md
    state_rev = g.resolve(state_kref(P))
    (ptr,) = g.artifacts_of(state_rev.ref)
    assert ptr.name == "report"
    assert (tmp_path / ptr.location.split("/")[-1]).exists()


def test_other_projects_ignored():
    g = memories(3)
    other = Kref("elsewhere", ("chat",), "x", "conversation")
    g.create_item(other)
    g.create_revision(other, [], "foreign")
    rec = Recording()
    dream.run(g, P, rec)
    assert all(r.item.project == P for r in rec.seen)


@pytest.mark.parametrize("seed", range(10))
def test_interrupted_runs_apply_once(seed):
    stats = run_schedule(seed)
    assert {k: v for k, v in stats.items() if k != "interrupts"} == dict.fromkeys(stats.keys() - {"interrupts"}, 0)
