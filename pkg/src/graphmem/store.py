"""In-engine property graph.

Items own append-only revision chains.  Revisions are immutable once written
(the embedding may be filled in exactly once, later).  Tags are the only
mutable pointers; every bind/unbind is kept in an append-only history so any
past tag mapping can be resolved.  Every structural change is journaled to a
global event log whose sequence numbers double as consumer cursors.
"""

from __future__ import annotations

import contextlib
import enum
import json
import logging
import struct
import threading
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import (
    Any,
    Callable,
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Protocol,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .kref import Kref, RevisionRef, format_kref, is_token, parse
from .text import compose_search_text

logger = logging.getLogger(__name__)

LATEST = "latest"
PUBLISHED = "published"

SNAPSHOT_MAGIC = b"KMHO1"
SNAPSHOT_VERSION = 1


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class GraphError(Exception):
    """Base class for store errors."""


class DuplicateItem(GraphError):
    pass


class UnknownItem(GraphError, LookupError):
    pass


class UnknownRevision(GraphError, LookupError):
    pass


class IllegalSupersedes(GraphError, ValueError):
    pass


class IllegalEdge(GraphError, ValueError):
    pass


class NoSuchBinding(GraphError, LookupError):
    pass


class NoRevision(GraphError, LookupError):
    pass


class DeprecatedExcluded(GraphError):
    pass


class CorruptSnapshot(GraphError):
    pass


class TemporalOrderError(GraphError, ValueError):
    """A timestamp earlier than already-recorded history for the same key."""


class EmbeddingAlreadySet(GraphError):
    pass


# ---------------------------------------------------------------------------
# Clocks
# ---------------------------------------------------------------------------


class Clock(Protocol):
    def now(self) -> float: ...


class SystemClock:
    def now(self) -> float:
        return time.time()


class LogicalClock:
    """Deterministic clock: every ``now()`` call returns the next tick."""

    def __init__(self, start: float = 0.0, step: float = 1.0) -> None:
        self.value = float(start)
        self.step = float(step)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            self.value += self.step
            return self.value

    def advance(self, amount: float) -> float:
        with self._lock:
            self.value += amount
            return self.value


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

PREDICATES = frozenset({"summary", "topic", "keyword", "type", "tag", "edge-type"})


@dataclass(frozen=True)
class BeliefAtom:
    """Ground triple <subject item, predicate, value>."""

    subject: Kref
    predicate: str
    value: str

    def __post_init__(self) -> None:
        if self.predicate not in PREDICATES:
            raise ValueError(f"unknown predicate {self.predicate!r}")
        if not isinstance(self.value, str):
            raise ValueError("atom value must be a string")
        object.__setattr__(self, "subject", self.subject.base)

    @property
    def sort_key(self) -> Tuple[str, str, str]:
        return (format_kref(self.subject), self.predicate, self.value)

    def conflicts_with(self, other: "BeliefAtom") -> bool:
        return (
            self.subject == other.subject
            and self.predicate == other.predicate
            and self.value != other.value
        )

    def to_json(self) -> List[str]:
        return [format_kref(self.subject), self.predicate, self.value]

    @classmethod
    def from_json(cls, data: Sequence[str]) -> "BeliefAtom":
        return cls(parse(data[0]), data[1], data[2])

    def __str__(self) -> str:
        return f"<{self.subject.item_name}.{self.subject.kind}, {self.predicate}, {self.value!r}>"


class EdgeType(str, enum.Enum):
    DEPENDS_ON = "DEPENDS_ON"
    DERIVED_FROM = "DERIVED_FROM"
    SUPERSEDES = "SUPERSEDES"
    REFERENCED = "REFERENCED"
    CONTAINS = "CONTAINS"
    CREATED_FROM = "CREATED_FROM"

    def __str__(self) -> str:
        return self.value


@dataclass
class Item:
    kref: Kref
    kind: str
    created_at: float
    metadata: Dict[str, str] = field(default_factory=dict)
    deprecated: bool = False


@dataclass(frozen=True, eq=False)
class Revision:
    item: Kref
    seq: int
    content: FrozenSet[BeliefAtom]
    summary: str
    metadata: Mapping[str, str]
    search_text: str
    created_at: float
    author: str = ""
    embedding_text_override: Optional[str] = None
    embedding: Optional[np.ndarray] = None

    @property
    def ref(self) -> RevisionRef:
        return RevisionRef(self.item, self.seq)

    @property
    def kref(self) -> Kref:
        return self.item.pinned(self.seq)


@dataclass(frozen=True)
class Edge:
    source: RevisionRef
    edge_type: EdgeType
    target: RevisionRef
    created_at: float
    metadata: Mapping[str, str] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return {
            "source": str(self.source),
            "type": self.edge_type.value,
            "target": str(self.target),
            "metadata": dict(self.metadata),
            "created_at": self.created_at,
        }


@dataclass
class TagHistoryEntry:
    item: Kref
    tag: str
    revision_seq: int
    assigned_at: float
    removed_at: Optional[float] = None

    def open_at(self, at: Optional[float]) -> bool:
        if at is None:
            return self.removed_at is None
        return self.assigned_at <= at and (self.removed_at is None or at < self.removed_at)

    @property
    def ref(self) -> RevisionRef:
        return RevisionRef(self.item, self.revision_seq)


@dataclass(frozen=True)
class ArtifactPointer:
    item: Kref
    revision_seq: int
    name: str
    location: str
    media_hint: Optional[str] = None

    @property
    def kref(self) -> Kref:
        return self.item.pinned(self.revision_seq).with_artifact(self.name)


class EventKind(str, enum.Enum):
    REVISION_CREATED = "revision.created"
    EDGE_CREATED = "edge.created"
    REVISION_DEPRECATED = "revision.deprecated"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Event:
    seq: int
    kind: EventKind
    subject: Union[RevisionRef, Edge]
    at: float

    @property
    def revision(self) -> RevisionRef:
        """The revision the event concerns (an edge's source for edge events)."""
        return self.subject.source if isinstance(self.subject, Edge) else self.subject

    def to_json(self) -> Dict[str, Any]:
        if isinstance(self.subject, Edge):
            subject: Any = {
                "source": str(self.subject.source),
                "type": self.subject.edge_type.value,
                "target": str(self.subject.target),
            }
        else:
            subject = str(self.subject)
        return {"seq": self.seq, "kind": self.kind.value, "subject": subject, "at": self.at}


class GraphObserver(Protocol):
    """Receives committed changes (index maintenance, embedding scheduling)."""

    def on_revision(self, revision: Revision) -> None: ...

    def on_artifact(self, pointer: ArtifactPointer) -> None: ...

    def on_embedding(self, revision: Revision) -> None: ...


def _frozen_vector(values: Sequence[float]) -> np.ndarray:
    vec = np.array(values, dtype=np.float32)
    if vec.ndim != 1:
        raise ValueError("embedding must be a flat vector")
    vec.flags.writeable = False
    return vec


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------


class Graph:
    """The memory graph: items, revisions, edges, tags, artifacts, events.

    Writers are serialized by one re-entrant lock.  ``transaction()`` groups
    several mutations into an all-or-nothing unit.
    """

    def __init__(self, clock: Optional[Clock] = None, latest_tag: str = LATEST) -> None:
        self.clock: Clock = clock or SystemClock()
        self.latest_tag = latest_tag
        self._lock = threading.RLock()

        self._items: Dict[Kref, Item] = {}
        self._revisions: Dict[Kref, List[Revision]] = {}
        self._edges: List[Edge] = []
        self._edge_keys: Dict[Tuple[RevisionRef, EdgeType, RevisionRef], Edge] = {}
        self._out: Dict[RevisionRef, List[Edge]] = {}
        self._in: Dict[RevisionRef, List[Edge]] = {}
        self._tag_history: List[TagHistoryEntry] = []
        self._tag_entries: Dict[Tuple[Kref, str], List[TagHistoryEntry]] = {}
        self._open: Dict[Tuple[Kref, str], TagHistoryEntry] = {}
        self._bound: Dict[RevisionRef, int] = {}
        self._artifacts: Dict[RevisionRef, Dict[str, ArtifactPointer]] = {}
        self._deprecation: Dict[Kref, List[Tuple[float, bool]]] = {}
        self._events: List[Event] = []

        self._observers: List[GraphObserver] = []
        self._txn_depth = 0
        self._undo: List[Callable[[], None]] = []
        self._pending: List[Tuple[str, Any]] = []

    # -- infrastructure ---------------------------------------------------

    def add_observer(self, observer: GraphObserver) -> None:
        with self._lock:
            self._observers.append(observer)

    def remove_observer(self, observer: GraphObserver) -> None:
        with self._lock:
            self._observers.remove(observer)

    @contextlib.contextmanager
    def transaction(self) -> Iterator["Graph"]:
        """All-or-nothing group of mutations; nests (inner blocks join the outer)."""
        with self._lock:
            self._txn_depth += 1
            mark = len(self._undo)
            try:
                yield self
            except BaseException:
                undo = self._undo[mark:]
                del self._undo[mark:]
                for fn in reversed(undo):
                    fn()
                if self._txn_depth == 1:
                    self._pending.clear()
                self._txn_depth -= 1
                raise
            self._txn_depth -= 1
            if self._txn_depth == 0:
                self._undo.clear()
                pending, self._pending = self._pending, []
                for what, obj in pending:
                    self._notify(what, obj)

    def _record(self, undo: Callable[[], None]) -> None:
        if self._txn_depth:
            self._undo.append(undo)

    def _emit(self, what: str, obj: Any) -> None:
        if self._txn_depth:
            self._pending.append((what, obj))
        else:
            self._notify(what, obj)

    def _notify(self, what: str, obj: Any) -> None:
        for obs in list(self._observers):
            try:
                getattr(obs, what)(obj)
            except Exception:  # observers must never break a committed write
                logger.exception("observer %r failed on %s", obs, what)

    def _now(self, at: Optional[float]) -> float:
        return float(at) if at is not None else float(self.clock.now())

    def _append_event(self, kind: EventKind, subject: Union[RevisionRef, Edge], at: float) -> Event:
        ev = Event(len(self._events) + 1, kind, subject, at)
        self._events.append(ev)
        self._record(self._events.pop)
        return ev

    # -- items -------------------------------------------------------------

    def create_item(
        self, kref: Kref, kind: Optional[str] = None, metadata: Optional[Mapping[str, str]] = None,
        at: Optional[float] = None,
    ) -> Item:
        base = kref.base
        kind = kind or base.kind
        if kind != base.kind:
            raise ValueError(f"kind {kind!r} does not match kref kind {base.kind!r}")
        with self._lock:
            if base in self._items:
                raise DuplicateItem(format_kref(base))
            item = Item(base, kind, self._now(at), dict(metadata or {}))
            self._items[base] = item
            self._revisions[base] = []
            self._deprecation[base] = []

            def undo() -> None:
                del self._items[base]
                del self._revisions[base]
                del self._deprecation[base]

            self._record(undo)
            return item

    def ensure_item(
        self, kref: Kref, kind: Optional[str] = None, metadata: Optional[Mapping[str, str]] = None
    ) -> Item:
        with self._lock:
            existing = self._items.get(kref.base)
            if existing is not None:
                return existing
            return self.create_item(kref, kind, metadata)

    def get_item(self, kref: Kref) -> Item:
        try:
            return self._items[kref.base]
        except KeyError:
            raise UnknownItem(format_kref(kref.base)) from None

    def has_item(self, kref: Kref) -> bool:
        return kref.base in self._items

    def items(self, project: Optional[str] = None) -> List[Item]:
        with self._lock:
            out = list(self._items.values())
        if project is not None:
            out = [i for i in out if i.kref.project == project]
        return out

    # -- revisions ---------------------------------------------------------

    def create_revision(
        self,
        item: Kref,
        content: Iterable[BeliefAtom] = (),
        summary: str = "",
        metadata: Optional[Mapping[str, str]] = None,
        author: str = "",
        *,
        embedding_text: Optional[str] = None,
        bind_latest: bool = True,
        at: Optional[float] = None,
    ) -> Revision:
        """Append the next revision of ``item`` and journal ``revision.created``.

        The new revision is fulltext-searchable as soon as this returns; the
        embedding (if any provider is attached) arrives later.
        """
        base = item.base
        meta = {str(k): str(v) for k, v in (metadata or {}).items()}
        atoms = frozenset(content)
        with self._lock:
            if base not in self._items:
                raise UnknownItem(format_kref(base))
            chain = self._revisions[base]
            now = self._now(at)
            rev = Revision(
                item=base,
                seq=len(chain) + 1,
                content=atoms,
                summary=summary,
                metadata=MappingProxyType(meta),
                search_text=compose_search_text(
                    base.item_name, base.kind, summary, meta, embedding_text
                ),
                created_at=now,
                author=author,
                embedding_text_override=embedding_text,
            )
            with self.transaction():
                chain.append(rev)
                self._record(chain.pop)
                self._append_event(EventKind.REVISION_CREATED, rev.ref, now)
                if bind_latest:
                    self.bind_tag(base, self.latest_tag, rev.seq, at=now)
                self._emit("on_revision", rev)
            return rev

    def get_revision(self, ref: Union[RevisionRef, Kref]) -> Revision:
        if isinstance(ref, Kref):
            if ref.revision_pin is None:
                raise UnknownRevision(f"no revision pin in {format_kref(ref)}")
            ref = RevisionRef(ref, ref.revision_pin)
        chain = self._revisions.get(ref.item)
        if chain is None or not 1 <= ref.seq <= len(chain):
            raise UnknownRevision(str(ref))
        return chain[ref.seq - 1]

    def has_revision(self, ref: RevisionRef) -> bool:
        chain = self._revisions.get(ref.item)
        return chain is not None and 1 <= ref.seq <= len(chain)

    def revisions_of(self, item: Kref) -> List[Revision]:
        try:
            return list(self._revisions[item.base])
        except KeyError:
            raise UnknownItem(format_kref(item.base)) from None

    def all_revisions(self) -> Iterator[Revision]:
        with self._lock:
            chains = [list(c) for c in self._revisions.values()]
        for chain in chains:
            yield from chain

    def revision_count(self) -> int:
        return sum(len(c) for c in self._revisions.values())

    def set_embedding(self, ref: RevisionRef, vector: Sequence[float]) -> Revision:
        """Attach the embedding to a revision; allowed exactly once."""
        with self._lock:
            rev = self.get_revision(ref)
            if rev.embedding is not None:
                raise EmbeddingAlreadySet(str(ref))
            vec = _frozen_vector(vector)
            object.__setattr__(rev, "embedding", vec)
            self._record(lambda: object.__setattr__(rev, "embedding", None))
            self._emit("on_embedding", rev)
            return rev

    # -- edges -------------------------------------------------------------

    def add_edge(
        self,
        source: RevisionRef,
        edge_type: Union[EdgeType, str],
        target: RevisionRef,
        metadata: Optional[Mapping[str, str]] = None,
        at: Optional[float] = None,
    ) -> Edge:
        etype = EdgeType(edge_type)
        with self._lock:
            for ref in (source, target):
                if not self.has_revision(ref):
                    raise UnknownRevision(str(ref))
            if source == target:
                raise IllegalEdge(f"self-loop on {source}")
            if etype is EdgeType.SUPERSEDES and (
                source.item != target.item or source.seq <= target.seq
            ):
                raise IllegalSupersedes(f"{source} cannot supersede {target}")
            now = self._now(at)
            edge = Edge(source, etype, target, now, MappingProxyType(dict(metadata or {})))
            key = (source, etype, target)
            self._edges.append(edge)
            self._edge_keys.setdefault(key, edge)
            self._out.setdefault(source, []).append(edge)
            self._in.setdefault(target, []).append(edge)

            def undo() -> None:
                self._edges.pop()
                if self._edge_keys.get(key) is edge:
                    del self._edge_keys[key]
                self._out[source].pop()
                self._in[target].pop()

            self._record(undo)
            self._append_event(EventKind.EDGE_CREATED, edge, now)
            return edge

    def has_edge(self, source: RevisionRef, edge_type: Union[EdgeType, str], target: RevisionRef) -> bool:
        return (source, EdgeType(edge_type), target) in self._edge_keys

    def edges(self) -> List[Edge]:
        with self._lock:
            return list(self._edges)

    def out_edges(self, ref: RevisionRef) -> List[Edge]:
        return list(self._out.get(ref, ()))

    def in_edges(self, ref: RevisionRef) -> List[Edge]:
        return list(self._in.get(ref, ()))

    def adjacency(self) -> Tuple[Mapping[RevisionRef, Sequence[Edge]], Mapping[RevisionRef, Sequence[Edge]]]:
        """Live (outgoing, incoming) edge maps for read-only bulk traversal.

        No copies are made; callers must not mutate them or hold them across writes.
        """
        return MappingProxyType(self._out), MappingProxyType(self._in)

    # -- tags --------------------------------------------------------------

    def bind_tag(self, item: Kref, tag: str, seq: int, at: Optional[float] = None) -> TagHistoryEntry:
        """Point ``tag`` on ``item`` at revision ``seq``, closing any prior binding."""
        if not is_token(tag):
            raise ValueError(f"invalid tag name {tag!r}")
        base = item.base
        with self._lock:
            ref = RevisionRef(base, seq)
            if not self.has_revision(ref):
                raise UnknownRevision(str(ref))
            key = (base, tag)
            current = self._open.get(key)
            if current is not None and current.revision_seq == seq:
                return current
            now = self._now(at)
            history = self._tag_entries.get(key, [])
            if history:
                last = history[-1]
                latest_time = last.removed_at if last.removed_at is not None else last.assigned_at
                if now < max(latest_time, last.assigned_at):
                    raise TemporalOrderError(
                        f"tag {tag!r} on {format_kref(base)}: {now} precedes recorded history"
                    )
            if current is not None:
                self._close(current, now)
            entry = TagHistoryEntry(base, tag, seq, now)
            self._tag_history.append(entry)
            self._tag_entries.setdefault(key, []).append(entry)
            self._open[key] = entry
            self._bound[ref] = self._bound.get(ref, 0) + 1

            def undo() -> None:
                self._tag_history.pop()
                self._tag_entries[key].pop()
                if not self._tag_entries[key]:
                    del self._tag_entries[key]
                del self._open[key]
                self._unbind_count(ref)

            self._record(undo)
            return entry

    def _unbind_count(self, ref: RevisionRef) -> None:
        n = self._bound[ref] - 1
        if n:
            self._bound[ref] = n
        else:
            del self._bound[ref]

    def _close(self, entry: TagHistoryEntry, at: float) -> None:
        key = (entry.item, entry.tag)
        entry.removed_at = at
        del self._open[key]
        self._unbind_count(entry.ref)

        def undo() -> None:
            entry.removed_at = None
            self._open[key] = entry
            self._bound[entry.ref] = self._bound.get(entry.ref, 0) + 1

        self._record(undo)

    def remove_tag(self, item: Kref, tag: str, at: Optional[float] = None) -> TagHistoryEntry:
        base = item.base
        with self._lock:
            entry = self._open.get((base, tag))
            if entry is None:
                raise NoSuchBinding(f"{tag!r} on {format_kref(base)}")
            now = self._now(at)
            if now < entry.assigned_at:
                raise TemporalOrderError(f"removal at {now} precedes assignment at {entry.assigned_at}")
            self._close(entry, now)
            return entry

    def resolve_tag(self, item: Kref, tag: str, at: Optional[float] = None) -> int:
        """Revision seq bound to ``tag`` on ``item`` now, or at time ``at``."""
        base = item.base
        if at is None:
            entry = self._open.get((base, tag))
            if entry is None:
                raise NoSuchBinding(f"{tag!r} on {format_kref(base)}")
            return entry.revision_seq
        for entry in reversed(self._tag_entries.get((base, tag), ())):
            if entry.open_at(at):
                return entry.revision_seq
        raise NoSuchBinding(f"{tag!r} on {format_kref(base)} at {at}")

    def tag_history(self, item: Optional[Kref] = None, tag: Optional[str] = None) -> List[TagHistoryEntry]:
        with self._lock:
            entries = list(self._tag_history)
        if item is not None:
            entries = [e for e in entries if e.item == item.base]
        if tag is not None:
            entries = [e for e in entries if e.tag == tag]
        return entries

    def open_bindings(self, at: Optional[float] = None) -> List[TagHistoryEntry]:
        """Bindings open now (or at ``at``), in stable (item, tag) order."""
        with self._lock:
            if at is None:
                entries = list(self._open.values())
            else:
                entries = [e for e in self._tag_history if e.open_at(at)]
        entries.sort(key=lambda e: (format_kref(e.item), e.tag))
        return entries

    def tags_of(self, ref: RevisionRef, at: Optional[float] = None) -> List[str]:
        return sorted(
            e.tag for e in self._tag_entries_for_item(ref.item) if e.revision_seq == ref.seq and e.open_at(at)
        )

    def item_tags(self, item: Kref, at: Optional[float] = None) -> Dict[str, int]:
        """Open tag -> seq for one item."""
        return {e.tag: e.revision_seq for e in self._tag_entries_for_item(item) if e.open_at(at)}

    def _tag_entries_for_item(self, item: Kref) -> List[TagHistoryEntry]:
        base = item.base
        with self._lock:
            return [e for (k, _), lst in self._tag_entries.items() if k == base for e in lst]

    def is_bound(self, ref: RevisionRef) -> bool:
        return ref in self._bound

    def bound_revisions(self, at: Optional[float] = None) -> List[RevisionRef]:
        if at is None:
            with self._lock:
                return sorted(self._bound)
        return sorted({e.ref for e in self.open_bindings(at)})

    # -- deprecation -------------------------------------------------------

    def set_deprecated(self, item: Kref, value: bool = True, at: Optional[float] = None) -> None:
        base = item.base
        with self._lock:
            it = self.get_item(base)
            if it.deprecated == value:
                return
            now = self._now(at)
            history = self._deprecation[base]
            if history and now < history[-1][0]:
                raise TemporalOrderError("deprecation change precedes recorded history")
            it.deprecated = value
            history.append((now, value))

            def undo() -> None:
                it.deprecated = not value
                history.pop()

            self._record(undo)
            if value:
                chain = self._revisions[base]
                if chain:
                    open_latest = self._open.get((base, self.latest_tag))
                    seq = open_latest.revision_seq if open_latest else len(chain)
                    self._append_event(EventKind.REVISION_DEPRECATED, RevisionRef(base, seq), now)

    def is_deprecated(self, item: Kref, at: Optional[float] = None) -> bool:
        base = item.base
        it = self.get_item(base)
        if at is None:
            return it.deprecated
        state = False
        for when, value in self._deprecation.get(base, ()):
            if when <= at:
                state = value
            else:
                break
        return state

    def deprecation_history(self, item: Kref) -> List[Tuple[float, bool]]:
        return list(self._deprecation.get(item.base, ()))

    # -- resolution --------------------------------------------------------

    def resolve(self, k: Kref, at: Optional[float] = None, include_deprecated: bool = False) -> Revision:
        """Pinned revision, else the one bound to the current tag (now or at ``at``)."""
        base = k.base
        if base not in self._items:
            raise UnknownItem(format_kref(base))
        if not include_deprecated and self.is_deprecated(base, at):
            raise DeprecatedExcluded(format_kref(base))
        if k.revision_pin is not None:
            return self.get_revision(RevisionRef(base, k.revision_pin))
        try:
            seq = self.resolve_tag(base, self.latest_tag, at)
        except NoSuchBinding:
            raise NoRevision(f"no {self.latest_tag!r} revision for {format_kref(base)}") from None
        return self.get_revision(RevisionRef(base, seq))

    # -- artifacts ---------------------------------------------------------

    def add_artifact(
        self, ref: RevisionRef, name: str, location: str, media_hint: Optional[str] = None
    ) -> ArtifactPointer:
        """Record where external content lives; the location is never opened."""
        if not is_token(name):
            raise ValueError(f"invalid artifact name {name!r}")
        with self._lock:
            if not self.has_revision(ref):
                raise UnknownRevision(str(ref))
            ptr = ArtifactPointer(ref.item, ref.seq, name, str(location), media_hint)
            bucket = self._artifacts.setdefault(ref, {})
            previous = bucket.get(name)
            bucket[name] = ptr

            def undo() -> None:
                if previous is None:
                    del bucket[name]
                else:
                    bucket[name] = previous

            self._record(undo)
            self._emit("on_artifact", ptr)
            return ptr

    def artifacts_of(self, ref: RevisionRef) -> List[ArtifactPointer]:
        return sorted(self._artifacts.get(ref, {}).values(), key=lambda p: p.name)

    def all_artifacts(self) -> List[ArtifactPointer]:
        with self._lock:
            return [p for bucket in self._artifacts.values() for p in bucket.values()]

    # -- events ------------------------------------------------------------

    def read_events(self, from_cursor: Optional[int] = None, limit: int = 1000) -> List[Event]:
        """Events with seq > ``from_cursor`` (all events when None), ascending."""
        if limit < 1:
            raise ValueError("limit must be >= 1")
        start = 0 if from_cursor is None else max(0, int(from_cursor))
        with self._lock:
            return self._events[start:start + limit]

    @property
    def last_event_seq(self) -> int:
        return len(self._events)

    def export_events_jsonl(self, path: Union[str, Path]) -> int:
        with self._lock:
            lines = [json.dumps(e.to_json(), separators=(",", ":")) for e in self._events]
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return len(lines)

    # -- persistence -------------------------------------------------------

    def state(self) -> Dict[str, Any]:
        """Plain-data view of the whole graph (also the snapshot payload)."""
        with self._lock:
            items = [
                {
                    "kref": format_kref(i.kref),
                    "kind": i.kind,
                    "created_at": i.created_at,
                    "metadata": dict(sorted(i.metadata.items())),
                    "deprecated": i.deprecated,
                    "deprecation_history": [list(x) for x in self._deprecation[i.kref]],
                }
                for i in self._items.values()
            ]
            revisions = [
                {
                    "item": format_kref(r.item),
                    "seq": r.seq,
                    "content": sorted((a.to_json() for a in r.content)),
                    "summary": r.summary,
                    "metadata": dict(sorted(r.metadata.items())),
                    "search_text": r.search_text,
                    "created_at": r.created_at,
                    "author": r.author,
                    "embedding_text": r.embedding_text_override,
                    "embedding": [float(x) for x in r.embedding] if r.embedding is not None else None,
                }
                for chain in self._revisions.values()
                for r in chain
            ]
            edges = [e.to_json() for e in self._edges]
            tags = [
                {
                    "item": format_kref(t.item),
                    "tag": t.tag,
                    "seq": t.revision_seq,
                    "assigned_at": t.assigned_at,
                    "removed_at": t.removed_at,
                }
                for t in self._tag_history
            ]
            artifacts = [
                {
                    "item": format_kref(p.item),
                    "seq": p.revision_seq,
                    "name": p.name,
                    "location": p.location,
                    "media_hint": p.media_hint,
                }
                for bucket in self._artifacts.values()
                for p in bucket.values()
            ]
            events = [e.to_json() for e in self._events]
            meta: Dict[str, Any] = {"latest_tag": self.latest_tag, "format": SNAPSHOT_VERSION}
            if isinstance(self.clock, LogicalClock):
                meta["logical_clock"] = [self.clock.value, self.clock.step]
        return {
            "meta": meta,
            "items": items,
            "revisions": revisions,
            "edges": edges,
            "tags": tags,
            "artifacts": artifacts,
            "events": events,
        }

    def to_bytes(self) -> bytes:
        return encode_snapshot(self.state())

    def snapshot(self, path: Union[str, Path]) -> None:
        data = self.to_bytes()
        target = Path(path)
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(target)

    @classmethod
    def from_bytes(cls, data: bytes, clock: Optional[Clock] = None) -> "Graph":
        return cls.from_state(decode_snapshot(data), clock=clock)

    @classmethod
    def load(cls, path: Union[str, Path], clock: Optional[Clock] = None) -> "Graph":
        return cls.from_bytes(Path(path).read_bytes(), clock=clock)

    @classmethod
    def from_state(cls, state: Mapping[str, Any], clock: Optional[Clock] = None) -> "Graph":
        meta = state["meta"]
        if clock is None and "logical_clock" in meta:
            value, step = meta["logical_clock"]
            clock = LogicalClock(value, step)
        g = cls(clock=clock, latest_tag=meta.get("latest_tag", LATEST))
        try:
            for d in state["items"]:
                k = parse(d["kref"])
                item = Item(k, d["kind"], d["created_at"], dict(d["metadata"]), d["deprecated"])
                g._items[k] = item
                g._revisions[k] = []
                g._deprecation[k] = [(float(t), bool(v)) for t, v in d["deprecation_history"]]
            for d in state["revisions"]:
                k = parse(d["item"])
                chain = g._revisions[k]
                if d["seq"] != len(chain) + 1:
                    raise CorruptSnapshot(f"revision gap at {d['item']} seq {d['seq']}")
                emb = d["embedding"]
                chain.append(
                    Revision(
                        item=k,
                        seq=d["seq"],
                        content=frozenset(BeliefAtom.from_json(a) for a in d["content"]),
                        summary=d["summary"],
                        metadata=MappingProxyType(dict(d["metadata"])),
                        search_text=d["search_text"],
                        created_at=d["created_at"],
                        author=d["author"],
                        embedding_text_override=d["embedding_text"],
                        embedding=_frozen_vector(emb) if emb is not None else None,
                    )
                )
            edge_by_key: Dict[Tuple[str, str, str, float], Edge] = {}
            for d in state["edges"]:
                edge = Edge(
                    RevisionRef.parse(d["source"]),
                    EdgeType(d["type"]),
                    RevisionRef.parse(d["target"]),
                    d["created_at"],
                    MappingProxyType(dict(d["metadata"])),
                )
                g._edges.append(edge)
                g._edge_keys.setdefault((edge.source, edge.edge_type, edge.target), edge)
                g._out.setdefault(edge.source, []).append(edge)
                g._in.setdefault(edge.target, []).append(edge)
                edge_by_key.setdefault((d["source"], d["type"], d["target"], d["created_at"]), edge)
            for d in state["tags"]:
                entry = TagHistoryEntry(parse(d["item"]), d["tag"], d["seq"], d["assigned_at"], d["removed_at"])
                key = (entry.item, entry.tag)
                g._tag_history.append(entry)
                g._tag_entries.setdefault(key, []).append(entry)
                if entry.removed_at is None:
                    g._open[key] = entry
                    g._bound[entry.ref] = g._bound.get(entry.ref, 0) + 1
            for d in state["artifacts"]:
                ref = RevisionRef(parse(d["item"]), d["seq"])
                g._artifacts.setdefault(ref, {})[d["name"]] = ArtifactPointer(
                    ref.item, ref.seq, d["name"], d["location"], d["media_hint"]
                )
            for d in state["events"]:
                kind = EventKind(d["kind"])
                subj = d["subject"]
                if isinstance(subj, dict):
                    subject: Union[RevisionRef, Edge] = edge_by_key.get(
                        (subj["source"], subj["type"], subj["target"], d["at"])
                    ) or Edge(
                        RevisionRef.parse(subj["source"]),
                        EdgeType(subj["type"]),
                        RevisionRef.parse(subj["target"]),
                        d["at"],
                    )
                else:
                    subject = RevisionRef.parse(subj)
                if d["seq"] != len(g._events) + 1:
                    raise CorruptSnapshot(f"event gap at seq {d['seq']}")
                g._events.append(Event(d["seq"], kind, subject, d["at"]))
        except CorruptSnapshot:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise CorruptSnapshot(f"malformed snapshot payload: {exc}") from exc
        return g


# ---------------------------------------------------------------------------
# Snapshot codec
# ---------------------------------------------------------------------------

# Section order is fixed; names are 4-byte tags.
_SECTIONS: Tuple[Tuple[bytes, str], ...] = (
    (b"META", "meta"),
    (b"ITEM", "items"),
    (b"REVS", "revisions"),
    (b"EDGE", "edges"),
    (b"TAGS", "tags"),
    (b"ARTF", "artifacts"),
    (b"EVNT", "events"),
)
_HEADER = struct.Struct(">5sHH")
_SECTION = struct.Struct(">4sII")


def encode_snapshot(state: Mapping[str, Any]) -> bytes:
    parts = [_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, len(_SECTIONS))]
    for tag, key in _SECTIONS:
        payload = json.dumps(state[key], sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
            "utf-8"
        )
        parts.append(_SECTION.pack(tag, len(payload), zlib.crc32(payload)))
        parts.append(payload)
    return b"".join(parts)


def decode_snapshot(data: bytes) -> Dict[str, Any]:
    if len(data) < _HEADER.size:
        raise CorruptSnapshot("truncated header")
    magic, version, count = _HEADER.unpack_from(data, 0)
    if magic != SNAPSHOT_MAGIC:
        raise CorruptSnapshot(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise CorruptSnapshot(f"unsupported snapshot version {version}")
    expected = dict(_SECTIONS)
    offset = _HEADER.size
    out: Dict[str, Any] = {}
    for _ in range(count):
        if offset + _SECTION.size > len(data):
            raise CorruptSnapshot("truncated section header")
        tag, length, crc = _SECTION.unpack_from(data, offset)
        offset += _SECTION.size
        payload = data[offset:offset + length]
        if len(payload) != length:
            raise CorruptSnapshot(f"truncated section {tag!r}")
        if zlib.crc32(payload) != crc:
            raise CorruptSnapshot(f"checksum mismatch in section {tag!r}")
        offset += length
        if tag not in expected:
            raise CorruptSnapshot(f"unknown section {tag!r}")
        try:
            out[expected[tag]] = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptSnapshot(f"undecodable section {tag!r}") from exc
    if offset != len(data):
        raise CorruptSnapshot("trailing bytes after last section")
    missing = [name for _, name in _SECTIONS if name not in out]
    if missing:
        raise CorruptSnapshot(f"missing sections: {missing}")
    return out
