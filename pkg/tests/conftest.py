from __future__ import annotations

from dataclasses import dataclass

import pytest

from graphmem import belief
from graphmem.kref import Kref, RevisionRef
from graphmem.retrieval import HashedEmbeddingProvider, Retriever
from graphmem.store import BeliefAtom, EdgeType, Graph, LogicalClock, Revision


@pytest.fixture
def graph() -> Graph:
    return Graph(clock=LogicalClock())


@dataclass
class ColorExample:
    """Two decisions, the palette depending on the color preference."""

    graph: Graph
    color: Kref
    palette: Kref
    warm: BeliefAtom
    earth: BeliefAtom
    r1: Revision
    r2: Revision
    t_before: float


def build_color_example() -> ColorExample:
    g = Graph(clock=LogicalClock())
    color = Kref("CognitiveMemory", ("user",), "color-pref", "decision")
    palette = Kref("CognitiveMemory", ("user",), "palette", "decision")
    g.create_item(color)
    g.create_item(palette)
    warm = BeliefAtom(color, "summary", "warm tones")
    earth = BeliefAtom(palette, "summary", "earth-tone palette")
    r1 = g.create_revision(color, [warm], "warm tones")
    r2 = g.create_revision(palette, [earth], "earth-tone palette")
    g.add_edge(r2.ref, EdgeType.DEPENDS_ON, r1.ref)
    return ColorExample(g, color, palette, warm, earth, r1, r2, g.clock.value)


@pytest.fixture
def color_example() -> ColorExample:
    return build_color_example()


@dataclass
class FavoriteColor:
    graph: Graph
    retriever: Retriever
    item: Kref
    r1: Revision
    r2: Revision


def build_favorite_color(provider: bool = True) -> FavoriteColor:
    """A stated preference (blue) later revised to black, first revision kept as 'initial'."""
    g = Graph(clock=LogicalClock())
    ret = Retriever(g, HashedEmbeddingProvider() if provider else None, embedding_mode="inline")
    k = Kref("CognitiveMemory", ("user",), "favorite-color", "conversation")
    g.create_item(k)
    s1 = "User's favorite color is blue"
    r1 = g.create_revision(
        k, [BeliefAtom(k, "summary", s1)], s1, {"topics": "preferences", "keywords": "color,blue"}
    )
    g.bind_tag(k, "initial", r1.seq)
    s2 = "User's favorite color is black (previously blue)"
    r2 = belief.revise(
        g, k, [BeliefAtom(k, "summary", s2)], s2, {"topics": "preferences", "keywords": "color,black"}
    )
    # Unrelated memories so corpus statistics are not degenerate.
    for name, text in (
        ("coffee-order", "Prefers an oat milk flat white in the morning"),
        ("team-standup", "Standup moved to 10am on Tuesdays"),
        ("ssh-error", "SSH key rejected on the staging host"),
    ):
        other = Kref("CognitiveMemory", ("user",), name, "conversation")
        g.create_item(other)
        g.create_revision(other, [BeliefAtom(other, "summary", text)], text)
    return FavoriteColor(g, ret, k, r1, r2)


@pytest.fixture
def favorite_color() -> FavoriteColor:
    return build_favorite_color()


def ref(k: Kref, seq: int) -> RevisionRef:
    return RevisionRef(k, seq)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
