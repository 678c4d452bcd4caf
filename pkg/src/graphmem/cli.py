"""Command-line front end.

Every command loads the graph snapshot, performs one module-level operation
sequence, and (for mutating commands) writes the snapshot back under an
advisory file lock.

Exit codes: 0 success, 2 validation error, 3 not found, 4 guard tripped.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import fcntl
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence

from . import agm_suite, belief, dream, traversal
from .kref import Kref, MalformedKref, RevisionRef, format_kref, is_token, item_kref, parse
from .retrieval import HashedEmbeddingProvider, Retriever
from .store import (
    BeliefAtom,
    DeprecatedExcluded,
    EdgeType,
    Graph,
    GraphError,
    LogicalClock,
    NoRevision,
    NoSuchBinding,
    SystemClock,
    UnknownItem,
    UnknownRevision,
)
from .text import join_list, split_list, tokenize

logger = logging.getLogger("graphmem")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_FOUND = 3
EXIT_GUARD = 4

DEFAULT_GRAPH = "graph.kmho"
ENV_GRAPH = "GRAPHMEM_PATH"
ENV_PROJECT = "GRAPHMEM_PROJECT"

_NOT_FOUND = (UnknownItem, UnknownRevision, NoRevision, NoSuchBinding, DeprecatedExcluded, FileNotFoundError)


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION) -> None:
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------


class Context:
    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.path = Path(args.graph)
        if not self.path.parent.exists():
            raise CliError(f"directory {self.path.parent} does not exist")
        self.project: str = args.project
        if not is_token(self.project):
            raise CliError(f"invalid project name {self.project!r}")
        self._graph: Optional[Graph] = None
        self._retriever: Optional[Retriever] = None

    @property
    def graph(self) -> Graph:
        if self._graph is None:
            clock = None
            if self.args.clock == "real":
                clock = SystemClock()
            if self.path.exists():
                self._graph = Graph.load(self.path, clock=clock)
            else:
                self._graph = Graph(clock=clock or (LogicalClock() if self.args.clock == "logical" else SystemClock()))
        return self._graph

    @property
    def retriever(self) -> Retriever:
        if self._retriever is None:
            provider = HashedEmbeddingProvider() if self.args.provider == "hashed" else None
            self._retriever = Retriever(self.graph, provider, embedding_mode="inline")
        return self._retriever

    def save(self) -> None:
        if self._retriever is not None:
            self._retriever.wait()
        self.graph.snapshot(self.path)

    @contextlib.contextmanager
    def locked(self) -> Iterator[None]:
        lock_path = self.path.with_name(self.path.name + ".lock")
        with open(lock_path, "a+") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    def emit(self, record: Dict[str, Any], text: Optional[str] = None) -> None:
        if self.args.output == "jsonl":
            print(json.dumps(record, separators=(",", ":")))
        else:
            print(text if text is not None else json.dumps(record))


def _parse_time(value: Optional[str]) -> Optional[float]:
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        pass
    try:
        stamp = _dt.datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        raise CliError(f"--at must be a number or ISO-8601 time, got {value!r}") from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=_dt.timezone.utc)
    return stamp.timestamp()


def _slug(title: str) -> str:
    slug = "-".join(tokenize(title))
    if not slug or not is_token(slug):
        raise CliError(f"cannot derive an item name from title {title!r}")
    return slug


def _revision_ref(graph: Graph, text: str) -> RevisionRef:
    k = parse(text)
    if k.revision_pin is not None:
        return RevisionRef(k.base, k.revision_pin)
    return graph.resolve(k, include_deprecated=True).ref


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(ctx: Context) -> int:
    a = ctx.args
    if not a.title.strip() or not a.summary.strip():
        raise CliError("title and summary must be non-empty")
    g = ctx.graph
    _ = ctx.retriever
    k = item_kref(ctx.project, a.space, a.name or _slug(a.title), a.kind)
    keywords = split_list(join_list(a.tags))
    topics = split_list(join_list(a.topics))
    metadata = {"title": a.title, "type": a.kind}
    if keywords:
        metadata["keywords"] = ",".join(keywords)
    if topics:
        metadata["topics"] = ",".join(topics)
    if a.session:
        metadata["session"] = a.session
    content = [BeliefAtom(k, "summary", a.summary)]
    content += [BeliefAtom(k, "topic", t) for t in topics]
    content += [BeliefAtom(k, "keyword", t) for t in keywords]
    sources = [(EdgeType.DERIVED_FROM, s) for s in a.derived_from or []]
    sources += [(EdgeType.DEPENDS_ON, s) for s in a.depends_on or []]
    sources += [(EdgeType.REFERENCED, s) for s in a.references or []]
    with ctx.locked(), g.transaction():
        if g.has_item(k):
            rev = belief.revise(g, k, content, a.summary, metadata, a.author, embedding_text=a.embedding_text)
        else:
            g.create_item(k)
            rev = g.create_revision(k, content, a.summary, metadata, a.author, embedding_text=a.embedding_text)
        for etype, src in sources:
            g.add_edge(rev.ref, etype, _revision_ref(g, src))
        for tag in a.bind_tag or []:
            g.bind_tag(k, tag, rev.seq)
        for entry in a.artifact or []:
            name, sep, location = entry.partition("=")
            if not sep:
                raise CliError(f"--artifact expects name=location, got {entry!r}")
            g.add_artifact(rev.ref, name, location)
    ctx.save()
    ctx.emit({"kref": format_kref(rev.kref), "seq": rev.seq}, format_kref(rev.kref))
    return EXIT_OK


def cmd_recall(ctx: Context) -> int:
    a = ctx.args
    if a.k < 1:
        raise CliError("-k must be >= 1")
    results = ctx.retriever.search(a.query, a.k, include_deprecated=a.include_deprecated, at=_parse_time(a.at))
    for r in results:
        print(json.dumps(r.to_json(), separators=(",", ":")))
    return EXIT_OK


def _atoms_for(k: Kref, summary: str, predicate: str = "summary") -> List[BeliefAtom]:
    return [BeliefAtom(k, predicate, summary)]


def cmd_revise(ctx: Context) -> int:
    a = ctx.args
    g = ctx.graph
    _ = ctx.retriever
    k = parse(a.kref).base
    metadata: Dict[str, str] = {}
    prev = belief.current_revision(g, k)
    if prev is not None:
        metadata.update(prev.metadata)
    if a.topics is not None:
        metadata["topics"] = join_list(a.topics)
    content = _atoms_for(k, a.summary)
    content += [BeliefAtom(k, "topic", t) for t in split_list(metadata.get("topics"))]
    content += [BeliefAtom(k, "keyword", t) for t in split_list(metadata.get("keywords"))]
    with ctx.locked():
        rev = belief.revise(g, k, content, a.summary, metadata, a.author)
    ctx.save()
    ctx.emit({"kref": format_kref(rev.kref), "seq": rev.seq}, format_kref(rev.kref))
    return EXIT_OK


def cmd_contract(ctx: Context) -> int:
    a = ctx.args
    g = ctx.graph
    k = parse(a.kref).base
    if not g.has_item(k):
        raise UnknownItem(format_kref(k))
    atom = BeliefAtom(k, a.predicate, a.value)
    with ctx.locked():
        out = belief.contract(g, atom)
    ctx.save()
    record = {
        "atom": atom.to_json(),
        "removed_tags": [[t, str(r)] for t, r in out.removed_tags],
        "deprecated_items": [format_kref(i) for i in out.deprecated_items],
    }
    ctx.emit(record)
    return EXIT_OK


def cmd_rollback(ctx: Context) -> int:
    a = ctx.args
    g = ctx.graph
    k = parse(a.kref).base
    with ctx.locked():
        entry = belief.rollback(g, k, a.tag, a.seq)
    ctx.save()
    ctx.emit({"kref": format_kref(k), "tag": entry.tag, "seq": entry.revision_seq})
    return EXIT_OK


def cmd_inspect(ctx: Context) -> int:
    a = ctx.args
    g = ctx.graph
    ref = _revision_ref(g, a.kref)
    if a.path:
        path = traversal.shortest_path(g, ref, _revision_ref(g, a.path))
        if path is None:
            ctx.emit({"path": None}, "no path")
            return EXIT_NOT_FOUND
        ctx.emit({"path": [[str(r), t.value] for r, t in path]})
        return EXIT_OK
    if a.impact:
        result = traversal.analyze_impact(g, ref, a.depth)
    elif a.provenance:
        result = traversal.provenance_summary(g, ref, a.depth)
    else:
        types = [EdgeType(t) for t in a.edge_type] if a.edge_type else None
        result = traversal.traverse(g, ref, a.direction, types, a.depth)
    if a.dot:
        print(traversal.result_to_dot(g, result), end="")
    else:
        ctx.emit(result.to_json())
    return EXIT_OK


def cmd_show(ctx: Context) -> int:
    g = ctx.graph
    k = parse(ctx.args.kref)
    rev = g.resolve(k, at=_parse_time(ctx.args.at), include_deprecated=ctx.args.include_deprecated)
    ctx.emit(
        {
            "kref": format_kref(rev.kref),
            "summary": rev.summary,
            "metadata": dict(rev.metadata),
            "content": sorted(a.to_json() for a in rev.content),
            "tags": g.tags_of(rev.ref),
            "deprecated": g.is_deprecated(rev.item),
            "artifacts": [{"name": p.name, "location": p.location} for p in g.artifacts_of(rev.ref)],
        }
    )
    return EXIT_OK


def cmd_dream(ctx: Context) -> int:
    a = ctx.args
    options = dream.DreamOptions(
        dry_run=a.dry_run,
        max_deprecation_ratio=a.ratio,
        allow_published_deprecation=a.allow_published,
        batch_size=a.batch,
        report_dir=Path(a.report_dir) if a.report_dir else ctx.path.parent / "dream-reports",
    )
    try:
        options.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from None
    assessor = dream.HttpAssessor.from_env() or dream.default_assessor()
    g = ctx.graph
    _ = ctx.retriever
    with ctx.locked():
        report = dream.run(g, ctx.project, assessor, options)
        if not options.dry_run:
            ctx.save()
    if options.dry_run:
        print(report.markdown())
    else:
        ctx.emit(
            {
                "state": format_kref(report.state_revision) if report.state_revision else None,
                "report": report.report_location,
                "events_processed": report.events_processed,
                "assessed": report.memories_assessed,
                "deprecated": len(report.deprecated),
                "circuit_breaker_tripped": report.circuit_breaker_tripped,
            },
            format_kref(report.state_revision) if report.state_revision else "",
        )
    return EXIT_GUARD if report.circuit_breaker_tripped else EXIT_OK


def cmd_agm_check(ctx: Optional[Context], args: argparse.Namespace) -> int:
    report = agm_suite.run_all(args.only, shuffle_seed=args.shuffle)
    if report.total == 0:
        raise CliError(f"no scenarios match {args.only!r}")
    if args.json:
        print(agm_suite.report_json(report))
    else:
        print(report.table())
    return EXIT_OK if report.failed == 0 else 1


def export_records(graph: Graph) -> Iterator[Dict[str, Any]]:
    """Full graph as flat records; :func:`import_records` is the inverse."""
    state = graph.state()
    yield {"record": "meta", "data": state["meta"]}
    for section in ("items", "revisions", "edges", "tags", "artifacts", "events"):
        for entry in state[section]:
            yield {"record": section, "data": entry}


def import_records(records: Sequence[Dict[str, Any]]) -> Graph:
    state: Dict[str, Any] = {s: [] for s in ("items", "revisions", "edges", "tags", "artifacts", "events")}
    for rec in records:
        if rec["record"] == "meta":
            state["meta"] = rec["data"]
        else:
            state[rec["record"]].append(rec["data"])
    if "meta" not in state:
        raise CliError("JSONL import has no meta record")
    return Graph.from_state(state)


def cmd_export(ctx: Context) -> int:
    a = ctx.args
    g = ctx.graph
    written = []
    if a.dot:
        Path(a.dot).write_text(traversal.to_dot(g), encoding="utf-8")
        written.append(a.dot)
    if a.jsonl:
        with open(a.jsonl, "w", encoding="utf-8") as fh:
            for rec in export_records(g):
                fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
        written.append(a.jsonl)
    if a.events:
        g.export_events_jsonl(a.events)
        written.append(a.events)
    if not written:
        raise CliError("choose at least one of --dot, --jsonl, --events")
    for path in written:
        print(path)
    return EXIT_OK


def cmd_import(ctx: Context) -> int:
    src = Path(ctx.args.jsonl)
    records = [json.loads(line) for line in src.read_text(encoding="utf-8").splitlines() if line.strip()]
    graph = import_records(records)
    with ctx.locked():
        graph.snapshot(ctx.path)
    print(str(ctx.path))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphmem", description="Versioned belief graph for agent memory.")
    p.add_argument("--graph", default=os.environ.get(ENV_GRAPH, DEFAULT_GRAPH), help="snapshot file")
    p.add_argument("--project", default=os.environ.get(ENV_PROJECT, "default"))
    p.add_argument("--clock", choices=("real", "logical"), default=None, help="timestamp source for a new graph")
    p.add_argument("--provider", choices=("hashed", "none"), default="hashed", help="embedding provider")
    p.add_argument("--output", choices=("text", "jsonl"), default="text")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="store a memory (creates or revises the item)")
    s.add_argument("--title", required=True)
    s.add_argument("--summary", required=True)
    s.add_argument("--kind", default="conversation")
    s.add_argument("--space", default="memory")
    s.add_argument("--name", help="item name (default: derived from the title)")
    s.add_argument("--tags", action="append", help="keywords, comma-separated")
    s.add_argument("--topics", action="append", help="topics, comma-separated")
    s.add_argument("--bind-tag", action="append", help="extra tag to bind to the new revision")
    s.add_argument("--session")
    s.add_argument("--author", default="")
    s.add_argument("--embedding-text")
    s.add_argument("--derived-from", action="append", metavar="KREF")
    s.add_argument("--depends-on", action="append", metavar="KREF")
    s.add_argument("--references", action="append", metavar="KREF")
    s.add_argument("--artifact", action="append", metavar="NAME=LOCATION")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("recall", help="hybrid search, JSON Lines output")
    s.add_argument("query")
    s.add_argument("-k", type=int, default=10)
    s.add_argument("--include-deprecated", action="store_true")
    s.add_argument("--at", help="timestamp (number or ISO-8601)")
    s.set_defaults(func=cmd_recall)

    s = sub.add_parser("show", help="resolve a kref")
    s.add_argument("kref")
    s.add_argument("--at")
    s.add_argument("--include-deprecated", action="store_true")
    s.set_defaults(func=cmd_show)

    s = sub.add_parser("revise", help="replace an item's current belief")
    s.add_argument("kref")
    s.add_argument("--summary", required=True)
    s.add_argument("--topics", action="append")
    s.add_argument("--author", default="")
    s.set_defaults(func=cmd_revise)

    s = sub.add_parser("contract", help="retract one belief atom")
    s.add_argument("kref")
    s.add_argument("--value", required=True)
    s.add_argument("--predicate", default="summary")
    s.set_defaults(func=cmd_contract)

    s = sub.add_parser("rollback", help="re-point a tag at an earlier revision")
    s.add_argument("kref")
    s.add_argument("tag")
    s.add_argument("seq", type=int)
    s.set_defaults(func=cmd_rollback)

    s = sub.add_parser("inspect", help="traverse edges from a revision")
    s.add_argument("kref")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--impact", action="store_true")
    g.add_argument("--provenance", action="store_true")
    g.add_argument("--path", metavar="KREF")
    s.add_argument("--direction", choices=(traversal.OUTGOING, traversal.INCOMING, traversal.BOTH), default=traversal.OUTGOING)
    s.add_argument("--edge-type", action="append", choices=[e.value for e in EdgeType])
    s.add_argument("--depth", type=int, default=traversal.DEFAULT_DEPTH)
    s.add_argument("--dot", action="store_true", help="print Graphviz DOT")
    s.set_defaults(func=cmd_inspect)

    for name in ("dream", "resume"):
        s = sub.add_parser(name, help="run the consolidation pipeline from the stored cursor")
        s.add_argument("--dry-run", action="store_true")
        s.add_argument("--ratio", type=float, default=0.5)
        s.add_argument("--batch", type=int, default=20)
        s.add_argument("--allow-published", action="store_true")
        s.add_argument("--report-dir")
        s.set_defaults(func=cmd_dream)

    s = sub.add_parser("agm-check", help="run the belief-change compliance suite")
    s.add_argument("--only", help="POSTULATE, POSTULATE/CATEGORY or scenario id")
    s.add_argument("--json", action="store_true")
    s.add_argument("--shuffle", type=int, default=None, metavar="SEED")
    s.set_defaults(func=None, standalone=cmd_agm_check)

    s = sub.add_parser("export", help="write DOT, full-graph JSONL, or event JSONL")
    s.add_argument("--dot")
    s.add_argument("--jsonl")
    s.add_argument("--events")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("import", help="rebuild the snapshot from a full-graph JSONL export")
    s.add_argument("--jsonl", required=True)
    s.set_defaults(func=cmd_import)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.func is None:
            return args.standalone(None, args)
        return args.func(Context(args))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except MalformedKref as exc:
        print(f"error: malformed kref: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _NOT_FOUND as exc:
        print(f"error: not found: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except (GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
