"""Offline consolidation ("dream") pipeline.

A run reads the event log from a persisted cursor, asks an assessor what to do
with each new episodic memory, and applies the answers under safety guards:

* dry runs never mutate the graph;
* items tagged ``published`` are never deprecated without an explicit override;
* a circuit breaker caps deprecations at ``floor(ratio * assessed)``;
* a failing action is recorded and the run carries on.

Actions, the new cursor and the report pointer are committed together, so an
interrupted run leaves nothing behind and the next run redoes the same work.
Every action is also idempotent, which keeps re-application harmless if a
caller drives the stages without the transaction.
"""

from __future__ import annotations

import base64
import binascii
import datetime as _dt
import json
import logging
import math
import os
import threading
import time
import urllib.request
import weakref
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Protocol, Sequence, Tuple

from .kref import Kref, RevisionRef, format_kref, is_token
from .store import (
    LATEST,
    PUBLISHED,
    BeliefAtom,
    Edge,
    EdgeType,
    Event,
    EventKind,
    Graph,
    Revision,
)
from .text import split_list, tokenize

logger = logging.getLogger(__name__)

STATE_SPACE = "_dream_state"
STATE_ITEM = "_dream_state"
STATE_KIND = "system"
DREAM_AUTHOR = "dream-state"
ORIGIN_KEY = "origin"
ORIGIN_DREAM = "dream"
RESERVED_TAGS = frozenset({LATEST, PUBLISHED})
STAGES = 9

ENV_URL = "DREAM_ASSESSOR_URL"
ENV_TOKEN = "DREAM_ASSESSOR_TOKEN"


class DreamError(Exception):
    pass


class AssessorFailure(DreamError):
    """The assessor could not produce a usable answer for a batch."""


class CursorCorrupt(DreamError):
    pass


class DreamBusy(DreamError):
    """Another run on the same graph is in progress."""


@dataclass
class Assessment:
    revision_ref: RevisionRef
    relevance_score: float
    should_deprecate: bool = False
    deprecation_reason: str = ""
    suggested_tags: List[str] = field(default_factory=list)
    metadata_updates: Dict[str, str] = field(default_factory=dict)
    related_memories: List[Tuple[RevisionRef, EdgeType]] = field(default_factory=list)

    def validate(self) -> None:
        if not 0.0 <= self.relevance_score <= 1.0:
            raise ValueError(f"relevance_score out of [0,1]: {self.relevance_score}")
        if self.should_deprecate and not self.deprecation_reason.strip():
            raise ValueError(f"deprecation of {self.revision_ref} needs a reason")

    def to_json(self) -> Dict[str, Any]:
        return {
            "revision_ref": str(self.revision_ref),
            "relevance_score": self.relevance_score,
            "should_deprecate": self.should_deprecate,
            "deprecation_reason": self.deprecation_reason,
            "suggested_tags": list(self.suggested_tags),
            "metadata_updates": dict(self.metadata_updates),
            "related_memories": [[str(r), t.value] for r, t in self.related_memories],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Assessment":
        return cls(
            revision_ref=RevisionRef.parse(data["revision_ref"]),
            relevance_score=float(data["relevance_score"]),
            should_deprecate=bool(data.get("should_deprecate", False)),
            deprecation_reason=str(data.get("deprecation_reason", "")),
            suggested_tags=[str(t) for t in data.get("suggested_tags", [])],
            metadata_updates={str(k): str(v) for k, v in dict(data.get("metadata_updates", {})).items()},
            related_memories=[(RevisionRef.parse(r), EdgeType(t)) for r, t in data.get("related_memories", [])],
        )


@dataclass(frozen=True)
class MemoryView:
    """What the assessor sees for one memory."""

    revision_ref: RevisionRef
    summary: str
    metadata: Mapping[str, str]
    bundle_context: Tuple[str, ...]
    created_at: float

    def to_json(self) -> Dict[str, Any]:
        return {
            "revision_ref": str(self.revision_ref),
            "summary": self.summary,
            "metadata": dict(self.metadata),
            "bundle_context": list(self.bundle_context),
        }


class Assessor(Protocol):
    def assess(self, batch: Sequence[MemoryView]) -> List[Assessment]: ...


@dataclass
class DreamOptions:
    dry_run: bool = False
    max_deprecation_ratio: float = 0.5
    allow_published_deprecation: bool = False
    batch_size: int = 20
    kind_filter: Optional[str] = "conversation"
    report_dir: Optional[Path] = None

    def validate(self) -> None:
        if not 0.1 <= self.max_deprecation_ratio <= 0.9:
            raise ValueError(f"max_deprecation_ratio must be within 0.1..0.9, got {self.max_deprecation_ratio}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class ActionRecord:
    target: str
    detail: str

    def to_json(self) -> Dict[str, str]:
        return {"target": self.target, "detail": self.detail}


@dataclass
class DreamReport:
    events_processed: int = 0
    memories_assessed: int = 0
    duration_ms: int = 0
    deprecated: List[ActionRecord] = field(default_factory=list)
    metadata_updated: List[ActionRecord] = field(default_factory=list)
    tags_added: List[ActionRecord] = field(default_factory=list)
    relationships_created: List[ActionRecord] = field(default_factory=list)
    skipped: List[ActionRecord] = field(default_factory=list)
    failed: List[ActionRecord] = field(default_factory=list)
    capped: List[ActionRecord] = field(default_factory=list)
    overrides: List[ActionRecord] = field(default_factory=list)
    circuit_breaker_tripped: bool = False
    previous_cursor: Optional[int] = None
    new_cursor: int = 0
    dry_run: bool = False
    started_at: str = ""
    dispositions: Dict[RevisionRef, str] = field(default_factory=dict)
    state_revision: Optional[Kref] = None
    report_location: Optional[str] = None

    def to_json(self) -> Dict[str, Any]:
        lists = ("deprecated", "metadata_updated", "tags_added", "relationships_created", "skipped", "failed", "capped", "overrides")
        out: Dict[str, Any] = {
            "events_processed": self.events_processed,
            "memories_assessed": self.memories_assessed,
            "duration_ms": self.duration_ms,
            "circuit_breaker_tripped": self.circuit_breaker_tripped,
            "previous_cursor": self.previous_cursor,
            "new_cursor": self.new_cursor,
            "dry_run": self.dry_run,
            "state_revision": format_kref(self.state_revision) if self.state_revision else None,
            "report_location": self.report_location,
            "dispositions": {str(k): v for k, v in sorted(self.dispositions.items())},
        }
        for name in lists:
            out[name] = [r.to_json() for r in getattr(self, name)]
        return out

    def markdown(self) -> str:
        title = "Dream State Report"
        if self.dry_run:
            title += " (dry run)"
        lines = [
            f"# {title} -- {self.started_at}",
            f"**Events:** {self.events_processed} | **Assessed:** {self.memories_assessed}",
            f"**Duration:** {self.duration_ms}ms",
            "",
            "## Actions Taken",
        ]
        for heading, records in (
            ("Deprecated", self.deprecated),
            ("Metadata Updated", self.metadata_updated),
            ("Tags Added", self.tags_added),
            ("Relationships Created", self.relationships_created),
        ):
            lines.append(f"### {heading} ({len(records)})")
            for rec in records:
                if heading == "Relationships Created":
                    lines.append(f"- {rec.target} -> {rec.detail}")
                else:
                    lines.append(f"- {rec.target}")
                    lines.append(f"  -- {rec.detail}")
        for heading, records in (
            ("Skipped", self.skipped),
            ("Capped", self.capped),
            ("Failed", self.failed),
            ("Overrides", self.overrides),
        ):
            if records:
                lines.append(f"### {heading} ({len(records)})")
                for rec in records:
                    lines.append(f"- {rec.target}")
                    lines.append(f"  -- {rec.detail}")
        if self.circuit_breaker_tripped:
            lines.append("")
            lines.append("**Circuit breaker tripped:** deprecations capped")
        lines += ["", "## Cursor", encode_cursor(self.new_cursor), ""]
        return "\n".join(lines)


def encode_cursor(cursor: int) -> str:
    payload = json.dumps({"cursor": str(cursor)}, separators=(",", ":"))
    return base64.b64encode(payload.encode("ascii")).decode("ascii")


def decode_cursor(token: str) -> int:
    try:
        data = json.loads(base64.b64decode(token, validate=True).decode("ascii"))
        value = int(data["cursor"])
    except (binascii.Error, ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise CursorCorrupt(f"undecodable cursor token {token!r}") from exc
    if value < 0:
        raise CursorCorrupt(f"negative cursor {value}")
    return value


def state_kref(project: str) -> Kref:
    return Kref(project, (STATE_SPACE,), STATE_ITEM, STATE_KIND)


# ---------------------------------------------------------------------------
# Assessors
# ---------------------------------------------------------------------------


def _normalized(summary: str) -> str:
    return " ".join(tokenize(summary))


class RuleAssessor:
    """Deterministic offline assessor.

    A memory is flagged only when another memory in the same batch has the
    same normalized summary and is newer.  Relevance grows with the number of
    distinct summary tokens; topics are suggested as tags.
    """

    def assess(self, batch: Sequence[MemoryView]) -> List[Assessment]:
        out = []
        for view in batch:
            norm = _normalized(view.summary)
            newer = [
                other
                for other in batch
                if other is not view
                and norm
                and _normalized(other.summary) == norm
                and (other.created_at, other.revision_ref.seq) > (view.created_at, view.revision_ref.seq)
            ]
            tags = []
            for topic in split_list(view.metadata.get("topics")):
                tag = "-".join(tokenize(topic))
                if tag and is_token(tag) and tag not in RESERVED_TAGS and tag not in tags:
                    tags.append(tag)
            out.append(
                Assessment(
                    revision_ref=view.revision_ref,
                    relevance_score=min(1.0, len(set(tokenize(view.summary))) / 32),
                    should_deprecate=bool(newer),
                    deprecation_reason=f"duplicate of {newer[0].revision_ref}" if newer else "",
                    suggested_tags=tags,
                )
            )
        return out


def default_assessor() -> RuleAssessor:
    return RuleAssessor()


class HttpAssessor:
    """Assessor backed by an HTTP endpoint.

    POSTs ``{"memories": [...]}`` and expects ``{"assessments": [...]}`` with
    one entry per memory, using the :class:`Assessment` field names.
    """

    def __init__(self, url: str, token: Optional[str] = None, timeout: float = 60.0) -> None:
        self.url = url
        self.token = token
        self.timeout = timeout

    @classmethod
    def from_env(cls) -> Optional["HttpAssessor"]:
        url = os.environ.get(ENV_URL)
        if not url:
            return None
        return cls(url, os.environ.get(ENV_TOKEN))

    def assess(self, batch: Sequence[MemoryView]) -> List[Assessment]:
        body = json.dumps({"memories": [v.to_json() for v in batch]}).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, method="POST")
        req.add_header("Content-Type", "application/json")
        if self.token:
            req.add_header("Authorization", f"Bearer {self.token}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                data = json.loads(resp.read().decode("utf-8"))
            return [Assessment.from_json(a) for a in data["assessments"]]
        except Exception as exc:
            raise AssessorFailure(f"assessor request failed: {exc}") from exc


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

_run_locks: "weakref.WeakKeyDictionary[Graph, threading.Lock]" = weakref.WeakKeyDictionary()
_run_locks_guard = threading.Lock()


def _run_lock(graph: Graph) -> threading.Lock:
    with _run_locks_guard:
        lock = _run_locks.get(graph)
        if lock is None:
            lock = _run_locks[graph] = threading.Lock()
        return lock


def load_cursor(graph: Graph, project: str) -> Optional[int]:
    """Cursor stored on the state item's latest revision; None before the first run."""
    k = state_kref(project)
    if not graph.has_item(k):
        return None
    seq = graph.item_tags(k).get(graph.latest_tag)
    if seq is None:
        return None
    meta = graph.get_revision(RevisionRef(k, seq)).metadata
    if "cursor" not in meta:
        return None
    raw = meta["cursor"]
    try:
        value = int(raw)
    except ValueError:
        raise CursorCorrupt(f"stored cursor {raw!r} is not an integer") from None
    if value < 0 or value > graph.last_event_seq:
        raise CursorCorrupt(f"stored cursor {value} outside event log 0..{graph.last_event_seq}")
    return value


class DreamPipeline:
    """One consolidation run over one project.

    ``on_stage`` is called after every stage with the stage number; tests use
    it to inject interruptions.
    """

    def __init__(
        self,
        graph: Graph,
        project: str,
        assessor: Optional[Assessor] = None,
        options: Optional[DreamOptions] = None,
        on_stage: Optional[Callable[[int], None]] = None,
    ) -> None:
        self.graph = graph
        self.project = project
        self.assessor = assessor or default_assessor()
        self.options = options or DreamOptions()
        self.options.validate()
        self.on_stage = on_stage or (lambda stage: None)
        self.state = state_kref(project)

    # -- helpers -------------------------------------------------------

    def _ignored(self, ev: Event) -> bool:
        ref = ev.revision
        if ref.item.project != self.project:
            return True  # other projects are consolidated by their own runs
        if ref.item.space_path[0] == STATE_SPACE:
            return True
        if ev.kind is EventKind.REVISION_CREATED:
            return self.graph.get_revision(ref).author == DREAM_AUTHOR
        if ev.kind is EventKind.EDGE_CREATED and isinstance(ev.subject, Edge):
            return ev.subject.metadata.get(ORIGIN_KEY) == ORIGIN_DREAM
        return False

    def _bundle_context(self, item: Kref) -> Tuple[str, ...]:
        names = set()
        for rev in self.graph.revisions_of(item):
            for e in self.graph.in_edges(rev.ref):
                if e.edge_type is EdgeType.CONTAINS:
                    names.add(format_kref(e.source.item))
        return tuple(sorted(names))

    def _has_published(self, item: Kref) -> bool:
        return PUBLISHED in self.graph.item_tags(item)

    # -- stages --------------------------------------------------------

    def run(self) -> DreamReport:
        lock = _run_lock(self.graph)
        if not lock.acquire(blocking=False):
            raise DreamBusy("a dream run is already active for this graph")
        try:
            return self._run()
        finally:
            lock.release()

    def _run(self) -> DreamReport:
        opts = self.options
        t0 = time.perf_counter()
        report = DreamReport(dry_run=opts.dry_run)
        report.started_at = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%MZ")

        # 1. ensure the internal state item
        if not opts.dry_run:
            self.graph.ensure_item(self.state)
        self.on_stage(1)

        # 2. load cursor
        cursor = load_cursor(self.graph, self.project)
        report.previous_cursor = cursor
        self.on_stage(2)

        # 3. collect events past the cursor; latest revision per item wins
        events: List[Event] = []
        pos = cursor
        while True:
            page = self.graph.read_events(pos, limit=1000)
            if not page:
                break
            events.extend(page)
            pos = page[-1].seq
        report.events_processed = len(events)
        new_cursor = events[-1].seq if events else (cursor or 0)
        latest_per_item: Dict[Kref, int] = {}
        for ev in events:
            if self._ignored(ev):
                continue
            ref = ev.revision
            if ref.seq > latest_per_item.get(ref.item, 0):
                latest_per_item[ref.item] = ref.seq
        self.on_stage(3)

        # 4. fetch revisions; episodic, non-deprecated only
        revisions: List[Revision] = []
        for item in sorted(latest_per_item, key=format_kref):
            if opts.kind_filter is not None and item.kind != opts.kind_filter:
                continue
            if self.graph.is_deprecated(item):
                continue
            revisions.append(self.graph.get_revision(RevisionRef(item, latest_per_item[item])))
        self.on_stage(4)

        # 5. bundle membership context
        views = [
            MemoryView(r.ref, r.summary, dict(r.metadata), self._bundle_context(r.item), r.created_at)
            for r in revisions
        ]
        self.on_stage(5)

        # 6. assess in batches
        assessments: List[Assessment] = []
        for start in range(0, len(views), opts.batch_size):
            batch = views[start:start + opts.batch_size]
            try:
                got = self.assessor.assess(batch)
                by_ref = {a.revision_ref: a for a in got}
                if len(got) != len(batch) or set(by_ref) != {v.revision_ref for v in batch}:
                    raise AssessorFailure(f"expected one assessment per memory, got {len(got)} for {len(batch)}")
                for a in got:
                    a.validate()
            except Exception as exc:
                logger.warning("assessor failed on batch at %d: %s", start, exc)
                for v in batch:
                    report.skipped.append(ActionRecord(str(v.revision_ref), f"assessor failure: {exc}"))
                    report.dispositions[v.revision_ref] = "skipped"
                continue
            assessments.extend(by_ref[v.revision_ref] for v in batch)
        report.memories_assessed = len(assessments)
        self.on_stage(6)

        if opts.dry_run:
            self._propose(assessments, report)
            self.on_stage(7)
            self.on_stage(8)
            report.new_cursor = new_cursor
            self.on_stage(9)
        else:
            with self.graph.transaction():
                self._apply(assessments, report)
                self.on_stage(7)
                # 8. persist cursor on a new state revision
                rev = self.graph.create_revision(
                    self.state,
                    summary=f"dream cursor {new_cursor}",
                    metadata={
                        "cursor": str(new_cursor),
                        "timestamp": report.started_at,
                        "events_processed": str(report.events_processed),
                    },
                    author=DREAM_AUTHOR,
                )
                report.new_cursor = new_cursor
                report.state_revision = rev.kref
                self.on_stage(8)
                # 9. report artifact
                report.duration_ms = int((time.perf_counter() - t0) * 1000)
                location = self._write_report(report, rev)
                self.graph.add_artifact(rev.ref, "report", location, "text/markdown")
                report.report_location = location
                self.on_stage(9)
        report.duration_ms = int((time.perf_counter() - t0) * 1000)
        if report.circuit_breaker_tripped:
            logger.warning(
                "circuit breaker tripped: %d deprecations capped", len(report.capped)
            )
        return report

    def _write_report(self, report: DreamReport, rev: Revision) -> str:
        name = f"dream-report-{rev.seq:06d}.md"
        if self.options.report_dir is None:
            return name
        path = Path(self.options.report_dir) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.markdown(), encoding="utf-8")
        return str(path)

    # -- stage 7 -------------------------------------------------------

    def _deprecation_plan(
        self, assessments: Sequence[Assessment], report: DreamReport
    ) -> Tuple[List[Assessment], List[Assessment]]:
        """Split deprecation requests into (allowed, capped) after the guards."""
        wanted = []
        for a in assessments:
            if not a.should_deprecate:
                continue
            if self._has_published(a.revision_ref.item):
                if not self.options.allow_published_deprecation:
                    report.skipped.append(ActionRecord(str(a.revision_ref), "published item protected"))
                    continue
                report.overrides.append(ActionRecord(str(a.revision_ref), "published deprecation allowed by override"))
            wanted.append(a)
        limit = math.floor(self.options.max_deprecation_ratio * len(assessments))
        if len(wanted) <= limit:
            return wanted, []
        report.circuit_breaker_tripped = True
        ordered = sorted(wanted, key=lambda a: (a.relevance_score, a.revision_ref.sort_key))
        return ordered[:limit], ordered[limit:]

    def _propose(self, assessments: Sequence[Assessment], report: DreamReport) -> None:
        allowed, capped = self._deprecation_plan(assessments, report)
        capped_ids = {id(a) for a in capped}
        for a in allowed:
            report.deprecated.append(ActionRecord(str(a.revision_ref), a.deprecation_reason))
        for a in capped:
            report.capped.append(ActionRecord(str(a.revision_ref), "circuit breaker"))
        for a in assessments:
            for tag in self._usable_tags(a):
                report.tags_added.append(ActionRecord(str(a.revision_ref), tag))
            if a.metadata_updates:
                report.metadata_updated.append(ActionRecord(str(a.revision_ref), ", ".join(sorted(a.metadata_updates))))
            for target, etype in a.related_memories:
                report.relationships_created.append(ActionRecord(str(a.revision_ref), f"{target} ({etype.value})"))
            report.dispositions[a.revision_ref] = "capped" if id(a) in capped_ids else "skipped"
        report.skipped.extend(
            ActionRecord(str(a.revision_ref), "dry run") for a in assessments if id(a) not in capped_ids
        )

    @staticmethod
    def _usable_tags(a: Assessment) -> List[str]:
        return [t for t in dict.fromkeys(a.suggested_tags) if is_token(t) and t not in RESERVED_TAGS]

    def _apply(self, assessments: Sequence[Assessment], report: DreamReport) -> None:
        allowed, capped = self._deprecation_plan(assessments, report)
        capped_ids = {id(a) for a in capped}
        applied: Dict[int, int] = {}
        failed: Dict[int, bool] = {}

        def attempt(a: Assessment, what: str, fn: Callable[[], Optional[ActionRecord]], into: List[ActionRecord]) -> None:
            try:
                with self.graph.transaction():
                    rec = fn()
            except Exception as exc:
                logger.warning("dream action %s on %s failed: %s", what, a.revision_ref, exc)
                report.failed.append(ActionRecord(str(a.revision_ref), f"{what}: {exc}"))
                failed[id(a)] = True
                return
            if rec is not None:
                into.append(rec)
                applied[id(a)] = applied.get(id(a), 0) + 1

        for a in allowed:
            attempt(a, "deprecate", lambda a=a: self._deprecate(a), report.deprecated)
        for a in capped:
            report.capped.append(ActionRecord(str(a.revision_ref), "circuit breaker"))
        for a in assessments:
            for tag in self._usable_tags(a):
                attempt(a, f"tag {tag}", lambda a=a, tag=tag: self._tag(a, tag), report.tags_added)
            if a.metadata_updates:
                attempt(a, "metadata", lambda a=a: self._update_metadata(a), report.metadata_updated)
            for target, etype in a.related_memories:
                attempt(
                    a, f"edge {etype.value}", lambda a=a, t=target, e=etype: self._relate(a, t, e),
                    report.relationships_created,
                )

        for a in assessments:
            if failed.get(id(a)):
                status = "failed"
            elif id(a) in capped_ids:
                status = "capped"
            elif applied.get(id(a)):
                status = "applied"
            else:
                status = "skipped"
                if not any(r.target == str(a.revision_ref) for r in report.skipped):
                    report.skipped.append(ActionRecord(str(a.revision_ref), "no action needed"))
            report.dispositions[a.revision_ref] = status

    def _deprecate(self, a: Assessment) -> Optional[ActionRecord]:
        item = a.revision_ref.item
        if self.graph.is_deprecated(item):
            return None
        self.graph.set_deprecated(item, True)
        return ActionRecord(str(a.revision_ref), a.deprecation_reason)

    def _tag(self, a: Assessment, tag: str) -> Optional[ActionRecord]:
        ref = a.revision_ref
        if self.graph.item_tags(ref.item).get(tag) == ref.seq:
            return None
        self.graph.bind_tag(ref.item, tag, ref.seq)
        return ActionRecord(str(ref), tag)

    def _update_metadata(self, a: Assessment) -> Optional[ActionRecord]:
        ref = a.revision_ref
        seq = self.graph.item_tags(ref.item).get(self.graph.latest_tag)
        base_rev = self.graph.get_revision(RevisionRef(ref.item, seq if seq is not None else ref.seq))
        merged = dict(base_rev.metadata)
        for key, value in a.metadata_updates.items():
            if key in ("topics", "keywords"):
                parts = split_list(merged.get(key))
                parts += [p for p in split_list(value) if p not in parts]
                merged[key] = ",".join(parts)
            else:
                merged[key] = value
        if merged == dict(base_rev.metadata):
            return None  # already applied
        atoms = set(base_rev.content)
        for p in split_list(merged.get("topics")):
            atoms.add(BeliefAtom(ref.item, "topic", p))
        for p in split_list(merged.get("keywords")):
            atoms.add(BeliefAtom(ref.item, "keyword", p))
        self.graph.create_revision(
            ref.item, atoms, base_rev.summary, merged, DREAM_AUTHOR,
            embedding_text=base_rev.embedding_text_override,
        )
        return ActionRecord(str(ref), ", ".join(f"{k} updated" for k in sorted(a.metadata_updates)))

    def _relate(self, a: Assessment, target: RevisionRef, etype: EdgeType) -> Optional[ActionRecord]:
        src = a.revision_ref
        if self.graph.has_edge(src, etype, target):
            return None
        self.graph.add_edge(src, etype, target, {ORIGIN_KEY: ORIGIN_DREAM})
        return ActionRecord(str(src), f"{target} ({etype.value})")


def run(
    graph: Graph,
    project: str,
    assessor: Optional[Assessor] = None,
    options: Optional[DreamOptions] = None,
    on_stage: Optional[Callable[[int], None]] = None,
) -> DreamReport:
    return DreamPipeline(graph, project, assessor, options, on_stage).run()


def resume(
    graph: Graph,
    project: str,
    assessor: Optional[Assessor] = None,
    options: Optional[DreamOptions] = None,
) -> DreamReport:
    """Continue from the persisted cursor (identical to :func:`run`; named for intent)."""
    return run(graph, project, assessor, options)
