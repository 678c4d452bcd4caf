"""Belief change over the revision graph.

The belief base is the union of the content of every tag-bound revision.
Operators never delete anything: revision appends a new snapshot and moves a
tag, contraction detaches tags and soft-deprecates the item, rollback moves a
tag back.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple

from .kref import Kref, RevisionRef, format_kref
from .store import (
    BeliefAtom,
    EdgeType,
    Graph,
    Revision,
    TagHistoryEntry,
    UnknownItem,
)

logger = logging.getLogger(__name__)


class EmptyContent(ValueError):
    pass


@dataclass(frozen=True)
class BeliefBase:
    atoms: FrozenSet[BeliefAtom]
    as_of: Optional[float] = None

    def __contains__(self, atom: object) -> bool:
        return atom in self.atoms

    def __iter__(self):
        return iter(sorted(self.atoms, key=lambda a: a.sort_key))

    def __len__(self) -> int:
        return len(self.atoms)

    def values(self, subject: Kref, predicate: str) -> Set[str]:
        base = subject.base
        return {a.value for a in self.atoms if a.subject == base and a.predicate == predicate}


@dataclass(frozen=True)
class TargetSet:
    pairs: FrozenSet[Tuple[str, RevisionRef]]

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(sorted(self.pairs, key=lambda p: (p[1].sort_key, p[0])))

    @property
    def items(self) -> List[Kref]:
        return sorted({ref.item for _, ref in self.pairs}, key=format_kref)


@dataclass
class ContractionOutcome:
    atom: BeliefAtom
    removed_tags: List[Tuple[str, RevisionRef]] = field(default_factory=list)
    deprecated_items: List[Kref] = field(default_factory=list)


def belief_base(graph: Graph, at: Optional[float] = None) -> BeliefBase:
    atoms: Set[BeliefAtom] = set()
    for ref in graph.bound_revisions(at):
        atoms |= graph.get_revision(ref).content
    return BeliefBase(frozenset(atoms), at)


def retrieval_surface(graph: Graph, at: Optional[float] = None) -> BeliefBase:
    atoms: Set[BeliefAtom] = set()
    for ref in graph.bound_revisions(at):
        if not graph.is_deprecated(ref.item, at):
            atoms |= graph.get_revision(ref).content
    return BeliefBase(frozenset(atoms), at)


def current_revision(graph: Graph, item: Kref, tag: Optional[str] = None) -> Optional[Revision]:
    """Revision the current tag points at, or None when the tag is unbound."""
    seq = graph.item_tags(item).get(tag or graph.latest_tag)
    if seq is None:
        return None
    return graph.get_revision(RevisionRef(item.base, seq))


def _supersede(graph: Graph, new: RevisionRef, old: RevisionRef, at: float) -> None:
    graph.add_edge(new, EdgeType.SUPERSEDES, old, at=at)


def expand(graph: Graph, item: Kref, atom: BeliefAtom, author: str = "") -> Revision:
    """Add ``atom`` without retracting anything.

    The new revision carries the current revision's content plus the atom.
    Other tags keep their bindings.  Expanding a soft-deprecated item restores
    it, since the caller is asserting a live belief about it.
    """
    base = item.base
    if not graph.has_item(base):
        raise UnknownItem(format_kref(base))
    with graph.transaction():
        prev = current_revision(graph, base)
        content = (prev.content if prev else frozenset()) | {atom}
        summary = prev.summary if prev else (atom.value if atom.predicate == "summary" else "")
        metadata = dict(prev.metadata) if prev else {}
        if graph.is_deprecated(base):
            graph.set_deprecated(base, False)
        return graph.create_revision(base, content, summary, metadata, author)


def revise(
    graph: Graph,
    item: Kref,
    content: Iterable[BeliefAtom],
    summary: Optional[str] = None,
    metadata: Optional[Mapping[str, str]] = None,
    author: str = "",
    *,
    embedding_text: Optional[str] = None,
) -> Revision:
    """Replace the item's current belief with ``content`` in one atomic step.

    Creates revision k+1, links it SUPERSEDES -> k (the revision ``latest``
    pointed at, else the newest), and moves ``latest``.  Other tags on the
    old revision stay where they are.
    """
    atoms = frozenset(content)
    if not atoms:
        raise EmptyContent("revision content must be non-empty")
    base = item.base
    if not graph.has_item(base):
        raise UnknownItem(format_kref(base))
    if summary is None:
        summary = next((a.value for a in sorted(atoms, key=lambda a: a.sort_key) if a.predicate == "summary"), "")
    with graph.transaction():
        prev = current_revision(graph, base)
        chain = graph.revisions_of(base)
        if prev is None and chain:
            prev = chain[-1]
        if graph.is_deprecated(base):
            graph.set_deprecated(base, False)
        rev = graph.create_revision(
            base, atoms, summary, metadata, author, embedding_text=embedding_text, bind_latest=False
        )
        if prev is not None:
            _supersede(graph, rev.ref, prev.ref, rev.created_at)
        graph.bind_tag(base, graph.latest_tag, rev.seq, at=rev.created_at)
        return rev


def targets(graph: Graph, atom: BeliefAtom, at: Optional[float] = None) -> TargetSet:
    """Every open (tag, revision) binding whose content contains ``atom``."""
    pairs = set()
    for entry in graph.open_bindings(at):
        if atom in graph.get_revision(entry.ref).content:
            pairs.add((entry.tag, entry.ref))
    return TargetSet(frozenset(pairs))


def contract(graph: Graph, atom: BeliefAtom, at: Optional[float] = None) -> ContractionOutcome:
    """Remove ``atom`` from the base: detach every targeted tag, deprecate the items."""
    outcome = ContractionOutcome(atom)
    found = targets(graph, atom)
    if not found:
        return outcome
    with graph.transaction():
        when = at if at is not None else graph.clock.now()
        for tag, ref in found:
            graph.remove_tag(ref.item, tag, at=when)
            outcome.removed_tags.append((tag, ref))
        for item in found.items:
            if not graph.is_deprecated(item):
                graph.set_deprecated(item, True, at=when)
            outcome.deprecated_items.append(item)
    logger.info("contracted %s: %d tags removed", atom, len(outcome.removed_tags))
    return outcome


def rollback(
    graph: Graph, item: Kref, tag: str, seq: int, at: Optional[float] = None, restore: bool = True
) -> TagHistoryEntry:
    """Deliberately point ``tag`` back at revision ``seq``.

    With ``restore`` the item is also un-deprecated, which is what an operator
    undoing a contraction wants.
    """
    with graph.transaction():
        entry = graph.bind_tag(item, tag, seq, at=at)
        if restore and graph.is_deprecated(item):
            graph.set_deprecated(item, False, at=at)
        return entry


def conflicts(atom: BeliefAtom, atoms: Iterable[BeliefAtom]) -> List[BeliefAtom]:
    return sorted((a for a in atoms if atom.conflicts_with(a)), key=lambda a: a.sort_key)


def conflict_scan(graph: Graph, content: Iterable[BeliefAtom], exclude: Optional[Kref] = None) -> Dict[RevisionRef, List[BeliefAtom]]:
    """Tagged revisions holding atoms that conflict with ``content``.

    Advisory only: choosing which item to revise is left to the caller.
    """
    atoms = list(content)
    out: Dict[RevisionRef, List[BeliefAtom]] = {}
    for ref in graph.bound_revisions():
        if exclude is not None and ref.item == exclude.base:
            continue
        rev = graph.get_revision(ref)
        hits = [b for b in rev.content if any(a.conflicts_with(b) for a in atoms)]
        if hits:
            out[ref] = sorted(hits, key=lambda a: a.sort_key)
    return out
