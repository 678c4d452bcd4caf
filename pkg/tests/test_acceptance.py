"""Acceptance criteria, one test each.

Every test prints a single PASS/FAIL line with the measured values; the same
lines are repeated in the pytest terminal summary.  Run directly with
``python tests/test_acceptance.py`` for just the summary.
"""

from __future__ import annotations

import random
import re
import time
from typing import Dict, List

import numpy as np

from conftest import build_color_example, build_favorite_color
from graphmem import agm_suite, belief, dream, traversal
from graphmem.dream import Assessment, DreamOptions
from graphmem.kref import Kref, MalformedKref, format_kref, parse
from graphmem.retrieval import MATCH_WEIGHTS, HashedEmbeddingProvider, Retriever
from graphmem.store import BeliefAtom, EdgeType, Graph, LogicalClock
from oracles import (
    MALFORMED,
    PROJECT,
    WORDS,
    add_docs,
    as_tuple,
    bm25_oracle,
    conv,
    oracle_parse,
    random_kref,
    run_schedule,
)

LINES: List[str] = []


def verdict(cid: str, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {cid} {title}: {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------


def test_c1_agm_compliance():
    start = time.perf_counter()
    report = agm_suite.run_all()
    elapsed = time.perf_counter() - start
    na = {cell for cell, state in report.matrix.items() if state == "n/a"}
    others_pass = all(state == "pass" for cell, state in report.matrix.items() if cell not in na)
    ok = (
        report.total == 49
        and report.passed == 49
        and na == {("K6", "chain"), ("CoreRetainment", "temporal")}
        and others_pass
        and elapsed < 10.0
    )
    verdict(
        "C1", "belief-change compliance",
        ok, f"{report.passed}/{report.total} passed, n/a cells {sorted(na)}, {elapsed:.3f} s",
    )


def test_c2_worked_example_replay():
    ex = build_color_example()
    g = ex.graph
    cool = BeliefAtom(ex.color, "summary", "cool tones")
    before = belief.belief_base(g).values(ex.color, "summary")
    r1_2 = belief.revise(g, ex.color, [cool], "cool tones")
    after = belief.belief_base(g).values(ex.color, "summary")
    impact = traversal.analyze_impact(g, r1_2.ref, 2).reached()
    historical = g.resolve(ex.color, at=ex.t_before).summary
    checks = {
        "transition": (before, after) == ({"warm tones"}, {"cool tones"}),
        "full base": set(belief.belief_base(g).atoms) == {cool, ex.earth},
        "supersedes": g.has_edge(r1_2.ref, EdgeType.SUPERSEDES, ex.r1.ref),
        "impact": impact == {ex.r2.ref},
        "historical": historical == "warm tones",
    }
    verdict(
        "C2", "worked example replay", all(checks.values()),
        ", ".join(f"{k}={'ok' if v else 'MISMATCH'}" for k, v in checks.items())
        + f"; impact={sorted(str(r) for r in impact)}; resolve(T_before)={historical!r}",
    )


def _words(text: str) -> List[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def _brute_force_rank(fc, query: str) -> List[str]:
    """Independent scorer: BM25 oracle, float64 cosine, match-type weight, then sort."""
    g = fc.graph
    provider = fc.retriever.provider
    revs = list(g.all_revisions())
    docs = []
    for r in revs:
        meta = r.metadata
        docs.append(
            _words(r.item.item_name) + _words(r.item.kind) + _words(r.summary)
            + _words(meta.get("keywords", "").replace(",", " ")) + _words(meta.get("topics", "").replace(",", " "))
        )
    ft = bm25_oracle(docs, " ".join(_words(query)))
    q = provider.embed(query).astype(np.float64)
    scored = []
    for r, d, f in zip(revs, docs, ft):
        if not (g.is_bound(r.ref) and not g.is_deprecated(r.item)):
            continue
        e = r.embedding.astype(np.float64)
        cos = float(q @ e / (np.linalg.norm(q) * np.linalg.norm(e))) if np.any(e) and np.any(q) else 0.0
        v = 0.85 * max(0.0, cos)
        name_terms = set(_words(r.item.item_name) + _words(r.item.kind))
        qterms = set(_words(query))
        item_hit = f > 0 and any(t in name_terms for t in qterms)
        w = MATCH_WEIGHTS["item"] if item_hit else MATCH_WEIGHTS["revision"]
        score = w * max(f, v)
        if score > 0:
            scored.append((-score, format_kref(r.kref), str(r.ref)))
    scored.sort()
    return [s[2] for s in scored]


def test_c3_blue_to_black_lifecycle():
    fc = build_favorite_color()
    g, ret = fc.graph, fc.retriever
    latest = [(e.revision_seq, e.removed_at is None) for e in g.tag_history(fc.item, "latest")]
    rebind = latest == [(1, False), (2, True)]
    edge = g.has_edge(fc.r2.ref, EdgeType.SUPERSEDES, fc.r1.ref)
    recall = {h.ref for h in ret.search("favorite color", k=10)}
    both = {fc.r1.ref, fc.r2.ref} <= recall
    blue = [h for h in ret.search("blue", k=10) if h.ref.item == fc.item]
    order = [str(h.ref) for h in blue]
    blue_first = order[:2] == [str(fc.r1.ref), str(fc.r2.ref)]
    oracle_order = [r for r in _brute_force_rank(fc, "blue") if r in order]
    matches_oracle = oracle_order == order
    bit_equal = True
    for q in ("blue", "favorite color", "black"):
        ftd, vecd = ret.fulltext_scores(q), ret.vector_scores(q)
        for h in ret.candidates(q):
            recomputed = MATCH_WEIGHTS[h.match_type] * max(ftd.get(h.ref, 0.0), vecd.get(h.ref, 0.0))
            bit_equal &= h.score == recomputed
    scores = ", ".join(f"{h.ref.seq}:{h.score:.4f}({h.match_type})" for h in blue)
    verdict(
        "C3", "blue-to-black lifecycle",
        rebind and edge and both and blue_first and matches_oracle and bit_equal,
        f"rebind={rebind} supersedes={edge} recall_both={both} blue_order={order} "
        f"oracle_agrees={matches_oracle} merged_bit_equal={bit_equal} scores[{scores}]",
    )


class _FlagAll:
    def assess(self, batch):
        return [
            Assessment(v.revision_ref, relevance_score=(i * 37 % 20) / 20, should_deprecate=True,
                       deprecation_reason="adversarial")
            for i, v in enumerate(batch)
        ]


class _FlagSixteen:
    """Recommends 16 of every 20 memories for deprecation."""

    def __init__(self):
        self.given: List[Assessment] = []

    def assess(self, batch):
        out = [
            Assessment(v.revision_ref, relevance_score=(i * 7 % 20) / 20, should_deprecate=i % 5 != 0,
                       deprecation_reason="adversarial")
            for i, v in enumerate(batch)
        ]
        self.given.extend(out)
        return out


class _RandomFlags:
    def __init__(self, seed):
        self.rng = random.Random(seed)

    def assess(self, batch):
        return [
            Assessment(v.revision_ref, self.rng.random(), should_deprecate=self.rng.random() < 0.7,
                       deprecation_reason="random")
            for v in batch
        ]


def _twenty() -> Graph:
    g = Graph(clock=LogicalClock())
    for i in range(20):
        conv(g, f"m{i:02d}", f"memory {i}")
    return g


def _deprecated(g: Graph) -> List[Kref]:
    return [it.kref for it in g.items(PROJECT) if it.deprecated]


def test_c4_guards():
    g = _twenty()
    sixteen = _FlagSixteen()
    rep = dream.run(g, PROJECT, sixteen, DreamOptions(max_deprecation_ratio=0.5))
    flagged = [a for a in sixteen.given if a.should_deprecate]
    lowest = sorted(flagged, key=lambda a: (a.relevance_score, a.revision_ref.sort_key))[:10]
    capped_ok = (
        len(flagged) == 16
        and set(_deprecated(g)) == {a.revision_ref.item for a in lowest}
        and len(rep.capped) == 6
        and rep.circuit_breaker_tripped
    )
    g_all = _twenty()
    rep_all = dream.run(g_all, PROJECT, _FlagAll(), DreamOptions(max_deprecation_ratio=0.5))
    capped_ok &= len(_deprecated(g_all)) == 10 and rep_all.circuit_breaker_tripped

    published_ok = True
    trials = 0
    for seed in range(20):
        for assessor in (_FlagAll(), _RandomFlags(seed)):
            for ratio in (0.1, 0.5, 0.9):
                g = _twenty()
                rng = random.Random(seed)
                protected = rng.sample([it.kref for it in g.items(PROJECT)], 5)
                for k in protected:
                    g.bind_tag(k, "published", 1)
                dream.run(g, PROJECT, assessor, DreamOptions(max_deprecation_ratio=ratio))
                trials += 1
                published_ok &= not any(g.is_deprecated(k) for k in protected)

    g = _twenty()
    before = g.to_bytes()
    dry = dream.run(g, PROJECT, _FlagAll(), DreamOptions(dry_run=True, max_deprecation_ratio=0.5))
    dry_ok = g.to_bytes() == before and len(dry.deprecated) == 10
    verdict(
        "C4", "consolidation guards", capped_ok and published_ok and dry_ok,
        f"{len(flagged)}/20 flagged at ratio 0.5 -> {len(rep.deprecated)} deprecated, {len(rep.capped)} capped (lowest relevance first), "
        f"breaker={rep.circuit_breaker_tripped} (20/20 flagged -> {len(rep_all.deprecated)}); published survived {trials} runs={published_ok}; "
        f"dry-run bytes identical={dry_ok}",
    )


def test_c5_cursor_exactly_once():
    totals: Dict[str, int] = {}
    for seed in range(100):
        for key, value in run_schedule(seed).items():
            totals[key] = totals.get(key, 0) + value
    interrupts = totals.pop("interrupts")
    ok = all(v == 0 for v in totals.values())
    verdict(
        "C5", "cursor exactly-once", ok,
        f"100 schedules, {interrupts} injected interrupts; " + ", ".join(f"{k}={v}" for k, v in totals.items()),
    )


def _random_query(rng: random.Random) -> str:
    words = [rng.choice(WORDS) for _ in range(rng.randint(1, 4))]
    if rng.random() < 0.3:
        w = words[0]
        i = rng.randrange(len(w))
        words[0] = w[:i] + w[i + 1:]  # one deletion exercises fuzzy matching
    return " ".join(words)


def test_c6_retrieval_properties():
    rng = random.Random(2024)
    g = Graph(clock=LogicalClock())
    ret = Retriever(g, HashedEmbeddingProvider(), embedding_mode="inline")
    refs, docs = add_docs(g, 50, rng)
    queries = [_random_query(rng) for _ in range(200)]

    superset = all(
        set(ret.fulltext_scores(q)) <= {h.ref for h in ret.candidates(q)}
        and set(ret.vector_scores(q)) <= {h.ref for h in ret.candidates(q)}
        for q in queries
    )

    worst = 0.0
    for q in queries:
        expected = bm25_oracle(docs, q)
        got = ret.fulltext_scores(q)
        worst = max(worst, max(abs(got.get(r, 0.0) - e) for r, e in zip(refs, expected)))
    oracle_ok = worst <= 1e-9

    before = {q: {h.ref for h in ret.candidates(q)} for q in queries}
    add_docs(g, 50, rng, start=50)
    monotone = all(before[q] <= {h.ref for h in ret.candidates(q)} for q in queries)

    hidden = set(rng.sample([r.item for r in refs], 15))
    for k in hidden:
        g.set_deprecated(k)
    leaks = 0
    for _ in range(1000):
        q = _random_query(rng)
        leaks += sum(h.ref.item in hidden for h in ret.search(q, k=10))
        leaks += sum(h.ref.item in hidden for h in ret.candidates(q))
    verdict(
        "C6", "retrieval properties", superset and oracle_ok and monotone and leaks == 0,
        f"hybrid superset={superset}; max |BM25 - oracle|={worst:.2e}; "
        f"targets kept after +50 docs={monotone}; deprecated leaks over 1000 queries={leaks}",
    )


def test_c7_kref_round_trip():
    rng = random.Random(10_000)
    violations = 0
    for _ in range(10_000):
        k = random_kref(rng)
        text = format_kref(k)
        if parse(text) != k or oracle_parse(text) != as_tuple(k):
            violations += 1
    accepted = []
    for bad in MALFORMED:
        try:
            parse(bad)
            accepted.append(bad)
        except MalformedKref:
            pass
    verdict(
        "C7", "kref round-trip", violations == 0 and not accepted,
        f"10000 generated, {violations} violations; {len(MALFORMED) - len(accepted)}/{len(MALFORMED)} malformed rejected",
    )


def test_c8_recovery_rejection():
    g = Graph(clock=LogicalClock())
    k = Kref("agm", ("beliefs",), "triple", "fact")
    g.create_item(k)
    a, b, c = (BeliefAtom(k, "summary", "A"), BeliefAtom(k, "keyword", "B"), BeliefAtom(k, "topic", "C"))
    r1 = g.create_revision(k, [a, b, c], "A")
    belief.contract(g, a)
    belief.expand(g, k, a)
    after = set(belief.belief_base(g).atoms)
    rejected = a in after and b not in after and c not in after
    belief.rollback(g, k, g.latest_tag, r1.seq)
    restored = {a, b, c} <= set(belief.belief_base(g).atoms) and not g.is_deprecated(k)
    verdict(
        "C8", "recovery rejection", rejected and restored,
        f"after contract+expand base={sorted(x.value for x in after)}; rollback restores A,B,C={restored}",
    )


def test_c9_scale_smoke():
    rng = random.Random(99)
    vocab = WORDS + [f"w{i}" for i in range(5000)]
    g = Graph(clock=LogicalClock())
    t0 = time.perf_counter()
    ret = Retriever(g, HashedEmbeddingProvider(), embedding_mode="inline")
    items = []
    for i in range(20_000):
        k = Kref("scale", (f"s{i % 50}",), f"i{i}", "note")
        g.create_item(k)
        items.append(k)
    heads: List = [None] * len(items)
    for j in range(100_000):
        idx = j % len(items)
        k = items[idx]
        r = g.create_revision(k, [], " ".join(rng.choice(vocab) for _ in range(8)))
        heads[idx] = r.ref
        for _ in range(2 if rng.random() < 0.5 else 1):
            other = rng.randrange(len(items))
            if heads[other] is not None and other != idx:
                g.add_edge(r.ref, rng.choice([EdgeType.DEPENDS_ON, EdgeType.DERIVED_FROM]), heads[other])
    ingest_s = time.perf_counter() - t0

    search_ms = []
    for _ in range(200):
        q = " ".join(rng.choice(vocab) for _ in range(3))
        s = time.perf_counter()
        ret.search(q, k=10)
        search_ms.append((time.perf_counter() - s) * 1000)
    all_refs = [r for r in heads if r is not None]
    modes = {
        "impact": lambda o: traversal.analyze_impact(g, o, depth=10),
        "outgoing": lambda o: traversal.traverse(g, o, traversal.OUTGOING, depth=10),
        "both": lambda o: traversal.traverse(g, o, traversal.BOTH, depth=10),
    }
    trav_ms: Dict[str, List[float]] = {m: [] for m in modes}
    reached = 0
    for _ in range(100):
        origin = rng.choice(all_refs)
        for mode, walk in modes.items():
            s = time.perf_counter()
            res = walk(origin)
            trav_ms[mode].append((time.perf_counter() - s) * 1000)
            reached = max(reached, len(res.visited))
    # Judged on the directed walks (impact, provenance-style outgoing); the
    # unfiltered undirected flood is reported but not judged.
    directed = trav_ms["impact"] + trav_ms["outgoing"]
    p95_search = float(np.percentile(search_ms, 95))
    p95_trav = float(np.percentile(directed, 95))
    per_mode = " ".join(f"{m}={np.percentile(ts, 95):.2f}" for m, ts in trav_ms.items())
    verdict(
        "C9", "scale smoke", g.revision_count() == 100_000 and p95_search < 250 and p95_trav < 100,
        f"{g.revision_count()} revisions, {len(g.edges())} edges ingested in {ingest_s:.1f} s; "
        f"search p50={np.percentile(search_ms, 50):.1f} ms p95={p95_search:.1f} ms; "
        f"depth-10 directed traversal p95={p95_trav:.2f} ms (per mode p95 ms: {per_mode}; "
        f"undirected max {max(trav_ms['both']):.1f} ms, up to {reached} nodes reached)",
    )


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
