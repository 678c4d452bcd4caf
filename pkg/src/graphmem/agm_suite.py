"""Executable compliance checks for the belief-change operators.

Each scenario builds a fresh graph under a logical clock, performs revision or
contraction, and checks one rationality postulate against the resulting
belief base, retrieval surface, tag history and edges.

Catalog layout (49 scenarios):

=============== ====== ===== ===== ===== ===== === ====
category        K2     K3    K4    K5    K6    Rel Core
=============== ====== ===== ===== ===== ===== === ====
simple          1      1     1     1     1     1   1
multi-item      2      2     2     2     2     2   2
chain           1      1     1     1     --    1   1
temporal        1      1     1     1     1     1   --
adversarial     3      2     2     2     2     2   3
=============== ====== ===== ===== ===== ===== === ====
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from . import belief
from .kref import Kref, RevisionRef
from .store import BeliefAtom, EdgeType, Graph, LogicalClock
from .traversal import analyze_impact

POSTULATES = ("K2", "K3", "K4", "K5", "K6", "Relevance", "CoreRetainment")
CATEGORIES = ("simple", "multi-item", "chain", "temporal", "adversarial")
NOT_APPLICABLE = frozenset({("K6", "chain"), ("CoreRetainment", "temporal")})

_LABELS = {
    "K2": "K*2",
    "K3": "K*3",
    "K4": "K*4",
    "K5": "K*5",
    "K6": "K*6",
    "Relevance": "Rel.",
    "CoreRetainment": "Core",
}
_CAT_LABELS = {"simple": "Simple", "multi-item": "Multi", "chain": "Chain", "temporal": "Temp.", "adversarial": "Adv."}


class CheckFailed(AssertionError):
    pass


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise CheckFailed(message)


# ---------------------------------------------------------------------------
# Scenario world
# ---------------------------------------------------------------------------


class World:
    """A fresh graph plus shorthand for building belief fixtures."""

    def __init__(self, project: str = "agm") -> None:
        self.graph = Graph(clock=LogicalClock())
        self.project = project

    def item(self, name: str, kind: str = "fact", space: str = "beliefs") -> Kref:
        k = Kref(self.project, tuple(space.split("/")), name, kind)
        self.graph.ensure_item(k)
        return k

    def atom(self, item: Kref, value: str, predicate: str = "summary") -> BeliefAtom:
        return BeliefAtom(item, predicate, value)

    def seed(self, name: str, *values: str, kind: str = "fact", predicate: str = "summary") -> Tuple[Kref, List[BeliefAtom]]:
        k = self.item(name, kind)
        atoms = [self.atom(k, v, predicate) for v in values]
        self.graph.create_revision(k, atoms, summary=values[0] if values else "")
        return k, atoms

    def base(self, at: Optional[float] = None) -> FrozenSet[BeliefAtom]:
        return belief.belief_base(self.graph, at).atoms

    def surface(self, at: Optional[float] = None) -> FrozenSet[BeliefAtom]:
        return belief.retrieval_surface(self.graph, at).atoms

    def now(self) -> float:
        return self.graph.clock.value  # type: ignore[attr-defined]

    def tick(self) -> float:
        return self.graph.clock.now()


# ---------------------------------------------------------------------------
# Postulate checks
# ---------------------------------------------------------------------------


def check_success(w: World, item: Kref, content: Sequence[BeliefAtom]) -> None:
    belief.revise(w.graph, item, content)
    base = w.base()
    for a in content:
        _require(a in base, f"success: {a} missing from base after revision")


def check_inclusion(w: World, item: Kref, content: Sequence[BeliefAtom]) -> None:
    before = w.base()
    belief.revise(w.graph, item, content)
    after = w.base()
    extra = after - (before | set(content))
    _require(not extra, f"inclusion: unexpected atoms {sorted(map(str, extra))}")


def check_vacuity(w: World, item: Kref, atom: BeliefAtom) -> None:
    before = w.base()
    _require(not belief.conflicts(atom, before), "vacuity precondition: input conflicts with base")
    belief.expand(w.graph, item, atom)
    after = w.base()
    lost = (before | {atom}) - after
    _require(not lost, f"vacuity: expansion lost {sorted(map(str, lost))}")


def check_consistency(w: World, item: Kref, content: Sequence[BeliefAtom]) -> None:
    g = w.graph
    prev = belief.current_revision(g, item)
    rev = belief.revise(g, item, content)
    if prev is not None:
        _require(
            g.has_edge(rev.ref, EdgeType.SUPERSEDES, prev.ref),
            f"consistency: no SUPERSEDES edge {rev.ref} -> {prev.ref}",
        )
        _require(not g.is_bound(prev.ref) or g.tags_of(prev.ref) != [g.latest_tag], "consistency: latest still on old revision")
    _require(g.item_tags(item).get(g.latest_tag) == rev.seq, "consistency: latest not moved to new revision")
    # Atoms of the revised item reachable through the current tag must agree.
    current = g.get_revision(rev.ref).content
    for a in current:
        _require(not belief.conflicts(a, current), f"consistency: {a} conflicts within current revision")
    # A superseded atom may only survive through some other explicit tag.
    surface = w.surface()
    for ref in g.bound_revisions():
        if ref.item != item.base or ref == rev.ref:
            continue
        _require(
            any(t != g.latest_tag for t in g.tags_of(ref)),
            f"consistency: superseded {ref} is still bound without an explicit tag",
        )
    if prev is not None:
        for a in prev.content - current:
            if a in surface:
                _require(
                    any(a in g.get_revision(r).content for r in g.bound_revisions() if r != rev.ref),
                    f"consistency: superseded atom {a} leaked into the surface",
                )


def check_extensionality(build: Callable[[], Tuple[World, Kref]], values: Sequence[str], predicate: str = "summary") -> None:
    results = []
    for _ in range(2):
        w, item = build()
        content = [BeliefAtom(item, predicate, v) for v in values]
        belief.revise(w.graph, item, content)
        tags = {(e.item, e.tag, e.revision_seq) for e in w.graph.open_bindings()}
        results.append((w.base(), w.surface(), tags))
    _require(results[0] == results[1], "extensionality: equal inputs gave different belief states")


@dataclass
class _ContractionTrace:
    before: FrozenSet[BeliefAtom]
    after: FrozenSet[BeliefAtom]
    targeted: List[RevisionRef]
    bound_before: List[RevisionRef]


def _contract(w: World, atom: BeliefAtom) -> _ContractionTrace:
    g = w.graph
    before = w.base()
    bound_before = g.bound_revisions()
    targeted = sorted({ref for _, ref in belief.targets(g, atom)})
    belief.contract(g, atom)
    after = w.base()
    _require(atom not in after, f"contraction: {atom} still in base")
    _require(atom not in w.surface(), f"contraction: {atom} still retrievable")
    for ref in targeted:
        _require(g.has_revision(ref), f"contraction destroyed {ref}")
    return _ContractionTrace(before, after, targeted, bound_before)


def check_relevance(w: World, atom: BeliefAtom) -> None:
    g = w.graph
    t = _contract(w, atom)
    removed = t.before - t.after
    for b in removed:
        _require(
            any(b in g.get_revision(r).content and atom in g.get_revision(r).content for r in t.targeted),
            f"relevance: {b} removed without sharing a targeted revision with {atom}",
        )
    untouched: Set[BeliefAtom] = set()
    for ref in t.bound_before:
        if ref not in t.targeted:
            untouched |= g.get_revision(ref).content
    lost = untouched - t.after
    _require(not lost, f"relevance: untargeted beliefs lost {sorted(map(str, lost))}")


def check_core_retainment(w: World, atom: BeliefAtom) -> None:
    g = w.graph
    t = _contract(w, atom)
    removed = t.before - t.after
    for b in removed:
        # b was only held by revisions that also held the contracted atom, so
        # keeping b would have meant keeping the atom.
        holders = [r for r in t.bound_before if b in g.get_revision(r).content]
        _require(
            all(atom in g.get_revision(r).content for r in holders),
            f"core-retainment: {b} was removed though it had an independent holder",
        )


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    id: str
    category: str
    postulate: str
    description: str
    body: Callable[[], None] = field(repr=False)

    def run(self) -> "ScenarioResult":
        start = time.perf_counter()
        try:
            self.body()
        except CheckFailed as exc:
            return ScenarioResult(self, False, str(exc), time.perf_counter() - start)
        except Exception as exc:
            return ScenarioResult(self, False, f"error: {type(exc).__name__}: {exc}", time.perf_counter() - start)
        return ScenarioResult(self, True, "", time.perf_counter() - start)


@dataclass
class ScenarioResult:
    scenario: Scenario
    passed: bool
    message: str
    seconds: float


def _simple() -> List[Scenario]:
    def k2():
        w = World()
        k, _ = w.seed("color-pref", "warm tones", kind="decision")
        check_success(w, k, [w.atom(k, "cool tones")])

    def k3():
        w = World()
        k, _ = w.seed("color-pref", "warm tones", kind="decision")
        check_inclusion(w, k, [w.atom(k, "cool tones")])

    def k4():
        w = World()
        k, _ = w.seed("color-pref", "warm tones", kind="decision")
        check_vacuity(w, k, w.atom(k, "warm", "keyword"))

    def k5():
        w = World()
        k, _ = w.seed("color-pref", "warm tones", kind="decision")
        check_consistency(w, k, [w.atom(k, "cool tones")])

    def k6():
        def build():
            w = World()
            k, _ = w.seed("color-pref", "warm tones", kind="decision")
            return w, k

        check_extensionality(build, ["cool tones"])

    def rel():
        w = World()
        k, atoms = w.seed("color-pref", "warm tones", kind="decision")
        w.seed("palette", "earth-tone palette", kind="decision")
        check_relevance(w, atoms[0])

    def core():
        w = World()
        k = w.item("profile")
        a, b = w.atom(k, "likes tea"), w.atom(k, "tea", "keyword")
        w.graph.create_revision(k, [a, b])
        w.seed("other", "unrelated fact")
        check_core_retainment(w, a)

    return [
        Scenario("K2/simple", "simple", "K2", "revise one item, new atom enters base", k2),
        Scenario("K3/simple", "simple", "K3", "revision adds nothing beyond the input", k3),
        Scenario("K4/simple", "simple", "K4", "non-conflicting expansion keeps everything", k4),
        Scenario("K5/simple", "simple", "K5", "superseded value leaves the surface", k5),
        Scenario("K6/simple", "simple", "K6", "equal inputs give equal bases", k6),
        Scenario("Relevance/simple", "simple", "Relevance", "contraction touches only the target item", rel),
        Scenario("CoreRetainment/simple", "simple", "CoreRetainment", "co-located atoms go with the target", core),
    ]


def _multi_world() -> Tuple[World, Dict[str, Kref]]:
    w = World()
    items = {}
    for name, value in (("color-pref", "warm tones"), ("palette", "earth-tone palette"), ("font", "serif body text")):
        k, _ = w.seed(name, value, kind="decision")
        items[name] = k
    g = w.graph
    g.add_edge(RevisionRef(items["palette"], 1), EdgeType.DEPENDS_ON, RevisionRef(items["color-pref"], 1))
    return w, items


def _multi() -> List[Scenario]:
    out: List[Scenario] = []

    def k2a():
        w, it = _multi_world()
        check_success(w, it["color-pref"], [w.atom(it["color-pref"], "cool tones")])

    def k2b():
        w, it = _multi_world()
        k = it["font"]
        check_success(w, k, [w.atom(k, "sans body text"), w.atom(k, "typography", "topic")])

    def k3a():
        w, it = _multi_world()
        check_inclusion(w, it["palette"], [w.atom(it["palette"], "ocean palette")])

    def k3b():
        w, it = _multi_world()
        k = it["color-pref"]
        check_inclusion(w, k, [w.atom(k, "cool tones"), w.atom(k, "blue", "keyword")])

    def k4a():
        w, it = _multi_world()
        check_vacuity(w, it["font"], w.atom(it["font"], "typography", "topic"))

    def k4b():
        w, it = _multi_world()
        fresh = w.item("spacing", "decision")
        check_vacuity(w, fresh, w.atom(fresh, "generous margins"))

    def k5a():
        w, it = _multi_world()
        check_consistency(w, it["color-pref"], [w.atom(it["color-pref"], "cool tones")])

    def k5b():
        w, it = _multi_world()
        check_consistency(w, it["palette"], [w.atom(it["palette"], "ocean palette")])
        check_consistency(w, it["color-pref"], [w.atom(it["color-pref"], "cool tones")])

    def k6a():
        check_extensionality(lambda: (lambda r: (r[0], r[1]["color-pref"]))(_multi_world()), ["cool tones"])

    def k6b():
        check_extensionality(lambda: (lambda r: (r[0], r[1]["font"]))(_multi_world()), ["mono", "code"], "keyword")

    def rel_a():
        w, it = _multi_world()
        check_relevance(w, w.atom(it["color-pref"], "warm tones"))

    def rel_b():
        w, it = _multi_world()
        # The same atom stored under two tags of one item: both go, others stay.
        k = it["font"]
        w.graph.bind_tag(k, "approved", 1)
        check_relevance(w, w.atom(k, "serif body text"))

    def core_a():
        w, it = _multi_world()
        k = it["palette"]
        belief.expand(w.graph, k, w.atom(k, "earth", "keyword"))
        check_core_retainment(w, w.atom(k, "earth-tone palette"))

    def core_b():
        w, it = _multi_world()
        # The same atom lives in two items; both holders are detached.
        other = w.item("palette-copy", "decision")
        w.graph.create_revision(other, [w.atom(it["palette"], "earth-tone palette"), w.atom(other, "copy")])
        check_core_retainment(w, w.atom(it["palette"], "earth-tone palette"))

    for pid, fns in (
        ("K2", (k2a, k2b)),
        ("K3", (k3a, k3b)),
        ("K4", (k4a, k4b)),
        ("K5", (k5a, k5b)),
        ("K6", (k6a, k6b)),
        ("Relevance", (rel_a, rel_b)),
        ("CoreRetainment", (core_a, core_b)),
    ):
        for n, fn in enumerate(fns, 1):
            out.append(Scenario(f"{pid}/multi-item/{n}", "multi-item", pid, (fn.__doc__ or fn.__name__), fn))
    return out


def _chain_world(depth: int = 3) -> Tuple[World, Kref]:
    """One item revised ``depth`` times, each revision superseding the last."""
    w = World()
    k, _ = w.seed("api-design", "use REST v1", kind="decision")
    for n in range(2, depth + 1):
        belief.revise(w.graph, k, [w.atom(k, f"use REST v{n}")])
    return w, k


def _chain() -> List[Scenario]:
    def k2():
        w, k = _chain_world()
        check_success(w, k, [w.atom(k, "use gRPC")])
        chain = [e for e in w.graph.edges() if e.edge_type is EdgeType.SUPERSEDES]
        _require(len(chain) == 3, f"chain: expected 3 SUPERSEDES edges, got {len(chain)}")

    def k3():
        w, k = _chain_world()
        check_inclusion(w, k, [w.atom(k, "use gRPC")])

    def k4():
        w, k = _chain_world()
        check_vacuity(w, k, w.atom(k, "api", "topic"))

    def k5():
        w, k = _chain_world()
        check_consistency(w, k, [w.atom(k, "use gRPC")])
        stale = {w.atom(k, f"use REST v{n}") for n in (1, 2, 3)}
        _require(not (stale & w.surface()), "chain: an older version is still retrievable")

    def rel():
        w, k = _chain_world()
        dep, _ = w.seed("client-sdk", "generated from REST spec", kind="decision")
        w.graph.add_edge(RevisionRef(dep, 1), EdgeType.DEPENDS_ON, RevisionRef(k, 3))
        check_relevance(w, w.atom(k, "use REST v3"))

    def core():
        w, k = _chain_world()
        w.graph.bind_tag(k, "initial", 1)
        check_core_retainment(w, w.atom(k, "use REST v1"))

    return [
        Scenario("K2/chain", "chain", "K2", "success at the end of a revision chain", k2),
        Scenario("K3/chain", "chain", "K3", "inclusion over a chain", k3),
        Scenario("K4/chain", "chain", "K4", "vacuity on a chained item", k4),
        Scenario("K5/chain", "chain", "K5", "every older version leaves the surface", k5),
        Scenario("Relevance/chain", "chain", "Relevance", "contracting the head spares dependents", rel),
        Scenario("CoreRetainment/chain", "chain", "CoreRetainment", "contracting a tagged ancestor", core),
    ]


def _temporal() -> List[Scenario]:
    def k2():
        w = World()
        k, _ = w.seed("color-pref", "warm tones", kind="decision")
        a = w.atom(k, "cool tones")
        belief.revise(w.graph, k, [a])
        t1 = w.now()
        belief.revise(w.graph, k, [w.atom(k, "neutral tones")])
        _require(a in w.base(at=t1), "temporal success: atom absent from base as of its revision")
        _require(a not in w.base(), "temporal success: atom should be superseded now")

    def k3():
        w = World()
        k, _ = w.seed("color-pref", "warm tones", kind="decision")
        t0 = w.now()
        a = w.atom(k, "cool tones")
        belief.revise(w.graph, k, [a])
        t1 = w.now()
        extra = w.base(at=t1) - (w.base(at=t0) | {a})
        _require(not extra, f"temporal inclusion: {sorted(map(str, extra))}")

    def k4():
        w = World()
        k, (warm,) = w.seed("color-pref", "warm tones", kind="decision")
        t0 = w.now()
        a = w.atom(k, "warm", "keyword")
        belief.expand(w.graph, k, a)
        t1 = w.now()
        _require(w.base(at=t0) | {a} <= w.base(at=t1), "temporal vacuity: expansion lost history")
        _require(w.base(at=t0) == frozenset({warm}), "temporal vacuity: history rewritten")

    def k5():
        w = World()
        k, (warm,) = w.seed("color-pref", "warm tones", kind="decision")
        t0 = w.now()
        check_consistency(w, k, [w.atom(k, "cool tones")])
        _require(w.base(at=t0) == frozenset({warm}), "temporal consistency: past base changed")
        _require(w.graph.resolve(k, at=t0).seq == 1, "temporal consistency: past resolve moved")

    def k6():
        def build():
            w = World()
            k, _ = w.seed("color-pref", "warm tones", kind="decision")
            belief.revise(w.graph, k, [w.atom(k, "cool tones")])
            return w, k

        check_extensionality(build, ["neutral tones"])

    def rel():
        w = World()
        k, (warm,) = w.seed("color-pref", "warm tones", kind="decision")
        w.seed("palette", "earth-tone palette", kind="decision")
        t0 = w.now()
        check_relevance(w, warm)
        _require(warm in w.base(at=t0), "temporal relevance: past base lost the contracted atom")

    return [
        Scenario("K2/temporal", "temporal", "K2", "success holds as of the revision time", k2),
        Scenario("K3/temporal", "temporal", "K3", "inclusion between two instants", k3),
        Scenario("K4/temporal", "temporal", "K4", "past bases are not rewritten by expansion", k4),
        Scenario("K5/temporal", "temporal", "K5", "consistency now, history intact", k5),
        Scenario("K6/temporal", "temporal", "K6", "equal histories, equal revisions", k6),
        Scenario("Relevance/temporal", "temporal", "Relevance", "contraction does not rewrite the past", rel),
    ]


def _adversarial() -> List[Scenario]:
    def k2_rapid():
        """10 rapid sequential revisions of one item."""
        w = World()
        k, _ = w.seed("status", "v0")
        for n in range(1, 11):
            a = w.atom(k, f"v{n}")
            belief.revise(w.graph, k, [a])
            _require(a in w.base(), f"rapid: v{n} missing")
        _require(len(w.graph.revisions_of(k)) == 11, "rapid: revision count")
        _require(w.base() == frozenset({w.atom(k, "v10")}), "rapid: stale versions in base")

    def k2_case():
        """Case-variant values are distinct beliefs."""
        w = World()
        k, _ = w.seed("color-pref", "Blue")
        check_success(w, k, [w.atom(k, "blue")])
        _require(w.atom(k, "Blue") not in w.base(), "case variant: old value survived")

    def k2_long():
        """Very long string values."""
        w = World()
        k, _ = w.seed("notes", "x" * 10)
        check_success(w, k, [w.atom(k, "long " * 4000)])

    def k3_similar():
        """Similar item names (color vs colour) stay separate."""
        w = World()
        a, _ = w.seed("color", "blue")
        b, _ = w.seed("colour", "blue")
        check_inclusion(w, a, [w.atom(a, "black")])
        _require(w.atom(b, "blue") in w.base(), "similar names: colour changed by revising color")

    def k3_idem():
        """Idempotent revision: same content twice."""
        w = World()
        k, (a,) = w.seed("color-pref", "blue")
        check_inclusion(w, k, [a])
        check_inclusion(w, k, [a])

    def k4_mixed():
        """Mixed edge types around the expanded item."""
        w = World()
        a, _ = w.seed("design-doc", "v1 design doc")
        b, _ = w.seed("impl", "v1 impl")
        c, _ = w.seed("notes", "meeting notes")
        g = w.graph
        g.add_edge(RevisionRef(b, 1), EdgeType.DERIVED_FROM, RevisionRef(a, 1))
        g.add_edge(RevisionRef(c, 1), EdgeType.REFERENCED, RevisionRef(a, 1))
        g.add_edge(RevisionRef(b, 1), EdgeType.CREATED_FROM, RevisionRef(c, 1))
        check_vacuity(w, a, w.atom(a, "design-doc", "topic"))

    def k4_long():
        """Expansion with a long value."""
        w = World()
        k, _ = w.seed("notes", "short")
        check_vacuity(w, k, w.atom(k, "y" * 20000, "keyword"))

    def k5_rapid():
        """Consistency after each of 10 rapid revisions."""
        w = World()
        k, _ = w.seed("status", "v0")
        for n in range(1, 11):
            check_consistency(w, k, [w.atom(k, f"v{n}")])
        edges = [e for e in w.graph.edges() if e.edge_type is EdgeType.SUPERSEDES]
        _require(len(edges) == 10, f"rapid: expected 10 SUPERSEDES edges, got {len(edges)}")

    def k5_case():
        """Case-variant values across revisions."""
        w = World()
        k, _ = w.seed("color-pref", "BLUE")
        check_consistency(w, k, [w.atom(k, "Blue")])
        check_consistency(w, k, [w.atom(k, "blue")])

    def k6_idem():
        """Idempotent revision content is extensional."""
        def build():
            w = World()
            k, _ = w.seed("color-pref", "blue")
            return w, k

        check_extensionality(build, ["blue", "blue"])

    def k6_order():
        """Atom order in the input does not matter."""
        results = []
        for values in (["a", "b", "c"], ["c", "a", "b"]):
            w = World()
            k, _ = w.seed("tags", "z", predicate="keyword")
            belief.revise(w.graph, k, [w.atom(k, v, "keyword") for v in values])
            results.append(w.base())
        _require(results[0] == results[1], "extensionality: input order changed the base")

    def rel_mixed():
        """Contraction with mixed edge types leaves linked items alone."""
        w = World()
        a, (doc,) = w.seed("design-doc", "v1 design doc")
        b, _ = w.seed("impl", "v1 impl")
        g = w.graph
        g.add_edge(RevisionRef(b, 1), EdgeType.DERIVED_FROM, RevisionRef(a, 1))
        g.add_edge(RevisionRef(b, 1), EdgeType.REFERENCED, RevisionRef(a, 1))
        check_relevance(w, doc)

    def rel_similar():
        """Contracting 'color' leaves 'colour' untouched."""
        w = World()
        a, (blue,) = w.seed("color", "blue")
        w.seed("colour", "blue")
        check_relevance(w, blue)

    def core_deep():
        """Deep dependency chain A->B->C->D."""
        w = World()
        names = ["a", "b", "c", "d"]
        krefs = {n: w.seed(n, f"step {n}")[0] for n in names}
        g = w.graph
        for src, dst in zip(names, names[1:]):
            g.add_edge(RevisionRef(krefs[src], 1), EdgeType.DEPENDS_ON, RevisionRef(krefs[dst], 1))
        check_core_retainment(w, w.atom(krefs["d"], "step d"))
        impact = analyze_impact(g, RevisionRef(krefs["d"], 1), 10)
        _require(len(impact.reached()) == 3, f"deep chain: impact size {len(impact.reached())} != 3")

    def core_case():
        """Contracting 'blue' keeps the case variant 'Blue' held elsewhere."""
        w = World()
        k = w.item("prefs")
        w.graph.create_revision(k, [w.atom(k, "blue"), w.atom(k, "sky", "keyword")])
        other, _ = w.seed("prefs-archive", "Blue")
        check_core_retainment(w, w.atom(k, "blue"))
        _require(w.atom(other, "Blue") in w.base(), "case variant: independent belief lost")

    def core_idem():
        """Contracting twice is a no-op the second time."""
        w = World()
        k, (a,) = w.seed("color-pref", "blue")
        check_core_retainment(w, a)
        before = w.base()
        out = belief.contract(w.graph, a)
        _require(not out.removed_tags and w.base() == before, "repeat contraction changed state")

    specs = [
        ("K2", (k2_rapid, k2_case, k2_long)),
        ("K3", (k3_similar, k3_idem)),
        ("K4", (k4_mixed, k4_long)),
        ("K5", (k5_rapid, k5_case)),
        ("K6", (k6_idem, k6_order)),
        ("Relevance", (rel_mixed, rel_similar)),
        ("CoreRetainment", (core_deep, core_case, core_idem)),
    ]
    out = []
    for pid, fns in specs:
        for n, fn in enumerate(fns, 1):
            desc = (fn.__doc__ or fn.__name__).strip()
            out.append(Scenario(f"{pid}/adversarial/{n}", "adversarial", pid, desc, fn))
    return out


def scenario_catalog() -> List[Scenario]:
    return _simple() + _multi() + _chain() + _temporal() + _adversarial()


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class ComplianceReport:
    results: List[ScenarioResult]
    seconds: float

    @property
    def total(self) -> int:
        return len(self.results)

    @property
    def passed(self) -> int:
        return sum(r.passed for r in self.results)

    @property
    def failed(self) -> int:
        return self.total - self.passed

    @property
    def matrix(self) -> Dict[Tuple[str, str], str]:
        cells: Dict[Tuple[str, str], str] = {}
        for p in POSTULATES:
            for c in CATEGORIES:
                cells[(p, c)] = "n/a" if (p, c) in NOT_APPLICABLE else "none"
        for r in self.results:
            key = (r.scenario.postulate, r.scenario.category)
            if cells[key] == "fail":
                continue
            cells[key] = "pass" if r.passed else "fail"
        return cells

    def to_json(self) -> Dict[str, object]:
        return {
            "total": self.total,
            "passed": self.passed,
            "failed": self.failed,
            "seconds": round(self.seconds, 4),
            "matrix": {p: {c: self.matrix[(p, c)] for c in CATEGORIES} for p in POSTULATES},
            "scenarios": [
                {
                    "id": r.scenario.id,
                    "category": r.scenario.category,
                    "postulate": r.scenario.postulate,
                    "passed": r.passed,
                    "message": r.message,
                }
                for r in self.results
            ],
        }

    def table(self) -> str:
        symbols = {"pass": "ok", "fail": "FAIL", "n/a": "--", "none": ""}
        header = ["Post."] + [_CAT_LABELS[c] for c in CATEGORIES] + ["Pass"]
        rows = [header]
        m = self.matrix
        for p in POSTULATES:
            mine = [r for r in self.results if r.scenario.postulate == p]
            rate = f"{100 * sum(r.passed for r in mine) / len(mine):.0f}%" if mine else "--"
            rows.append([_LABELS[p]] + [symbols[m[(p, c)]] for c in CATEGORIES] + [rate])
        overall = ["Ovrl"]
        for c in CATEGORIES:
            mine = [r for r in self.results if r.scenario.category == c]
            overall.append(f"{100 * sum(r.passed for r in mine) / len(mine):.0f}%" if mine else "--")
        overall.append(f"{100 * self.passed / self.total:.0f}%" if self.total else "--")
        rows.append(overall)
        widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
        lines.append(f"{self.total} scenarios: {self.passed} passed, {self.failed} failed.")
        failures = [r for r in self.results if not r.passed]
        for r in failures:
            lines.append(f"FAIL {r.scenario.id}: {r.message}")
        return "\n".join(lines)


def select(catalog: Iterable[Scenario], only: Optional[str]) -> List[Scenario]:
    """Filter by ``POSTULATE``, ``POSTULATE/CATEGORY`` or a full scenario id."""
    items = list(catalog)
    if not only:
        return items
    exact = [s for s in items if s.id == only]
    if exact:
        return exact
    parts = only.split("/")
    if len(parts) == 1:
        return [s for s in items if s.postulate == parts[0] or s.category == parts[0]]
    return [s for s in items if s.postulate == parts[0] and s.category == parts[1]]


def run_all(only: Optional[str] = None, shuffle_seed: Optional[int] = None) -> ComplianceReport:
    scenarios = select(scenario_catalog(), only)
    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(scenarios)
    start = time.perf_counter()
    results = [s.run() for s in scenarios]
    return ComplianceReport(results, time.perf_counter() - start)


def report_json(report: ComplianceReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=False)
