"""Breadth-first navigation over typed revision edges."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple, Union

from .kref import RevisionRef
from .store import Edge, EdgeType, Graph, UnknownRevision

DEFAULT_DEPTH = 10
MAX_DEPTH = 20

OUTGOING, INCOMING, BOTH = "outgoing", "incoming", "both"
IMPACT_EDGES = frozenset({EdgeType.DEPENDS_ON, EdgeType.DERIVED_FROM})
PROVENANCE_EDGES = frozenset({EdgeType.DERIVED_FROM, EdgeType.CREATED_FROM})

# Colors for DOT export.
_KIND_COLORS = {
    "conversation": "lightblue",
    "decision": "gold",
    "fact": "palegreen",
    "bundle": "plum",
    "system": "lightgray",
}
_EDGE_COLORS = {
    EdgeType.DEPENDS_ON: "red",
    EdgeType.DERIVED_FROM: "blue",
    EdgeType.SUPERSEDES: "black",
    EdgeType.REFERENCED: "gray",
    EdgeType.CONTAINS: "purple",
    EdgeType.CREATED_FROM: "darkgreen",
}


class DepthOutOfRange(ValueError):
    pass


@dataclass
class TraversalResult:
    origin: RevisionRef
    direction: str
    visited: List[Tuple[RevisionRef, int, Optional[EdgeType]]] = field(default_factory=list)

    @property
    def refs(self) -> List[RevisionRef]:
        return [ref for ref, _, _ in self.visited]

    def reached(self) -> Set[RevisionRef]:
        """Visited revisions other than the origin."""
        return {ref for ref, depth, _ in self.visited if depth > 0}

    def depth_of(self, ref: RevisionRef) -> Optional[int]:
        for r, d, _ in self.visited:
            if r == ref:
                return d
        return None

    def to_json(self) -> Dict[str, object]:
        return {
            "origin": str(self.origin),
            "direction": self.direction,
            "visited": [
                {"kref": str(r), "depth": d, "via": e.value if e else None} for r, d, e in self.visited
            ],
        }


def _check_depth(depth: int) -> None:
    if isinstance(depth, bool) or not isinstance(depth, int) or not 1 <= depth <= MAX_DEPTH:
        raise DepthOutOfRange(f"depth must be in 1..{MAX_DEPTH}, got {depth!r}")


def _require(graph: Graph, ref: RevisionRef) -> None:
    if not graph.has_revision(ref):
        raise UnknownRevision(str(ref))


def _neighbours(
    graph: Graph, ref: RevisionRef, direction: str, types: Optional[FrozenSet[EdgeType]]
) -> List[Tuple[RevisionRef, EdgeType]]:
    # EdgeType is a str enum, so it orders by value without the property lookup.
    keyed = []
    if direction in (OUTGOING, BOTH):
        keyed += [(e.target, e.edge_type) for e in graph.out_edges(ref) if types is None or e.edge_type in types]
    if direction in (INCOMING, BOTH):
        keyed += [(e.source, e.edge_type) for e in graph.in_edges(ref) if types is None or e.edge_type in types]
    if len(keyed) > 1:
        keyed.sort(key=_order)
    return keyed


def _order(pair: Tuple[RevisionRef, EdgeType]) -> Tuple[Tuple[str, int], str]:
    return (pair[0].sort_key, pair[1])


def traverse(
    graph: Graph,
    origin: RevisionRef,
    direction: str = OUTGOING,
    edge_types: Optional[Iterable[Union[EdgeType, str]]] = None,
    depth: int = DEFAULT_DEPTH,
    max_nodes: Optional[int] = None,
) -> TraversalResult:
    """BFS from ``origin`` up to ``depth`` hops; the origin is listed at depth 0.

    Nodes are reported level by level, each level in kref order.
    """
    _check_depth(depth)
    if direction not in (OUTGOING, INCOMING, BOTH):
        raise ValueError(f"unknown direction {direction!r}")
    _require(graph, origin)
    types = frozenset(EdgeType(t) for t in edge_types) if edge_types is not None else None
    out_map, in_map = graph.adjacency()
    use_out = direction in (OUTGOING, BOTH)
    use_in = direction in (INCOMING, BOTH)
    result = TraversalResult(origin, direction, [(origin, 0, None)])
    # Bookkeeping is keyed on sort keys: plain tuples hash and compare in C,
    # and sorting them gives the reporting order directly.
    seen = {origin.sort_key}
    level = [origin]
    for d in range(1, depth + 1):
        found: Dict[Tuple[str, int], Tuple[RevisionRef, EdgeType]] = {}
        for ref in level:
            if use_out:
                for e in out_map.get(ref, ()):
                    k = e.target.sort_key
                    if k not in seen and k not in found and (types is None or e.edge_type in types):
                        found[k] = (e.target, e.edge_type)
            if use_in:
                for e in in_map.get(ref, ()):
                    k = e.source.sort_key
                    if k not in seen and k not in found and (types is None or e.edge_type in types):
                        found[k] = (e.source, e.edge_type)
        if not found:
            break
        keys = sorted(found)
        if max_nodes is not None and len(result.visited) + len(keys) > max_nodes:
            keys = keys[: max(0, max_nodes - len(result.visited))]
            result.visited.extend((found[k][0], d, found[k][1]) for k in keys)
            break
        seen.update(keys)
        level = [found[k][0] for k in keys]
        result.visited.extend((found[k][0], d, found[k][1]) for k in keys)
    return result


def shortest_path(graph: Graph, a: RevisionRef, b: RevisionRef) -> Optional[List[Tuple[RevisionRef, EdgeType]]]:
    """Minimum-hop path from ``a`` to ``b`` ignoring edge direction.

    Returns the hops after ``a`` as (node, edge type used to reach it), or
    None when the two are disconnected.  Among equal-length paths the one with
    the lexicographically smallest sequence of intermediate nodes wins.
    """
    _require(graph, a)
    _require(graph, b)
    if a == b:
        return []
    # Distances from b let us walk greedily from a, always taking the
    # smallest neighbour that is one step closer.
    dist = {b: 0}
    frontier = deque([b])
    while frontier and a not in dist:
        ref = frontier.popleft()
        for nxt, _ in _neighbours(graph, ref, BOTH, None):
            if nxt not in dist:
                dist[nxt] = dist[ref] + 1
                frontier.append(nxt)
    if a not in dist:
        return None
    path: List[Tuple[RevisionRef, EdgeType]] = []
    cur = a
    while cur != b:
        want = dist[cur] - 1
        nxt, etype = min(
            ((n, t) for n, t in _neighbours(graph, cur, BOTH, None) if dist.get(n) == want),
            key=_order,
        )
        path.append((nxt, etype))
        cur = nxt
    return path


def analyze_impact(graph: Graph, origin: RevisionRef, depth: int = DEFAULT_DEPTH) -> TraversalResult:
    """Revisions whose validity depends, transitively, on ``origin``.

    Dependents are found along incoming DEPENDS_ON and DERIVED_FROM edges.
    SUPERSEDES edges are followed towards the replaced revision so that
    anything still depending on an older version of the same belief is
    surfaced; those older versions are hops on the way, not dependents, and
    are left out of the result.  The origin itself is never reported.
    """
    _check_depth(depth)
    _require(graph, origin)
    out_map, in_map = graph.adjacency()
    result = TraversalResult(origin, INCOMING)
    seen = {origin.sort_key}
    level = [origin]
    for d in range(1, depth + 1):
        found: Dict[Tuple[str, int], Tuple[RevisionRef, EdgeType, bool]] = {}
        for ref in level:
            for e in in_map.get(ref, ()):
                k = e.source.sort_key
                if e.edge_type in IMPACT_EDGES and k not in seen and k not in found:
                    found[k] = (e.source, e.edge_type, True)
            for e in out_map.get(ref, ()):
                k = e.target.sort_key
                if e.edge_type is EdgeType.SUPERSEDES and k not in seen and k not in found:
                    found[k] = (e.target, e.edge_type, False)
        if not found:
            break
        keys = sorted(found)
        seen.update(keys)
        level = [found[k][0] for k in keys]
        result.visited.extend((found[k][0], d, found[k][1]) for k in keys if found[k][2])
    return result


def provenance_summary(graph: Graph, origin: RevisionRef, depth: int = DEFAULT_DEPTH) -> TraversalResult:
    """Sources ``origin`` was derived or created from, transitively."""
    return traverse(graph, origin, OUTGOING, PROVENANCE_EDGES, depth)


def supersedes_chain(graph: Graph, origin: RevisionRef) -> List[RevisionRef]:
    """Follow SUPERSEDES edges back from ``origin`` (newest first)."""
    chain = [origin]
    seen = {origin}
    cur = origin
    while True:
        prev = [e.target for e in graph.out_edges(cur) if e.edge_type is EdgeType.SUPERSEDES and e.target not in seen]
        if not prev:
            return chain
        cur = max(prev, key=lambda r: r.seq)
        seen.add(cur)
        chain.append(cur)


def _dot_id(ref: RevisionRef) -> str:
    return '"' + str(ref).replace('"', '\\"') + '"'


def to_dot(
    graph: Graph,
    nodes: Optional[Iterable[RevisionRef]] = None,
    name: str = "memory",
) -> str:
    """Graphviz DOT text, nodes colored by item kind and edges by type."""
    if nodes is None:
        selected = sorted(r.ref for r in graph.all_revisions())
    else:
        selected = sorted(set(nodes))
    chosen = set(selected)
    lines = [f"digraph {name} {{", "  node [style=filled];"]
    for ref in selected:
        color = _KIND_COLORS.get(ref.item.kind, "white")
        label = f"{ref.item.item_name}.{ref.item.kind} r{ref.seq}"
        lines.append(f'  {_dot_id(ref)} [label="{label}", fillcolor={color}];')
    edges: List[Edge] = [e for e in graph.edges() if e.source in chosen and e.target in chosen]
    for e in edges:
        lines.append(
            f'  {_dot_id(e.source)} -> {_dot_id(e.target)} [label="{e.edge_type.value}", color={_EDGE_COLORS[e.edge_type]}];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def result_to_dot(graph: Graph, result: TraversalResult) -> str:
    return to_dot(graph, [result.origin, *result.refs])
