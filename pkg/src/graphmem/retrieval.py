"""Hybrid search over revisions.

Two branches score every revision independently:

* fulltext: Okapi BM25 over the composed search text, where a query term
  longer than two characters also matches dictionary terms one edit away;
* vector: ``beta * cosine`` between the query embedding and the revision
  embedding, when an embedding provider is configured.

A candidate's final score is ``w(match_type) * max(fulltext, vector)``.
"""

from __future__ import annotations

import hashlib
import logging
import math
import threading
from array import array
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Protocol, Sequence, Set, Tuple

import numpy as np

from .kref import Kref, RevisionRef, format_kref
from .store import ArtifactPointer, Graph, Revision
from .text import tokenize

logger = logging.getLogger(__name__)

K1 = 1.2
B = 0.75
BETA = 0.85
FUZZY_MIN_LEN = 3
SIBLING_THRESHOLD = 0.30

MATCH_WEIGHTS = {"item": 1.0, "revision": 0.9, "artifact": 0.8}

# Field bits recorded per posting.
_ITEM, _REV, _ART = 4, 2, 1
_LEVEL_TO_TYPE = {3: "item", 2: "revision", 1: "artifact"}


class NoProvider(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashedEmbeddingProvider:
    """Offline bag-of-words embedding: term counts hashed into buckets, L2-normalized."""

    def __init__(self, dimension: int = 256) -> None:
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self._bucket = lru_cache(maxsize=1 << 16)(self._bucket_uncached)

    def _bucket_uncached(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for tok in tokenize(text):
            vec[self._bucket(tok)] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        return vec

    def __repr__(self) -> str:
        return f"HashedEmbeddingProvider(dimension={self.dimension})"


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(x))
    nb = float(np.linalg.norm(y))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(x, y) / (na * nb))


class EmbeddingWorker:
    """Computes embeddings for new revisions off the write path.

    ``mode`` is ``"background"`` (thread pool), ``"deferred"`` (queued until
    :meth:`wait`) or ``"inline"`` (computed during commit notification).
    """

    def __init__(self, graph: Graph, provider: EmbeddingProvider, mode: str = "background") -> None:
        if mode not in ("background", "deferred", "inline"):
            raise ValueError(f"unknown embedding mode {mode!r}")
        self.graph = graph
        self.provider = provider
        self.mode = mode
        self._queue: List[RevisionRef] = []
        self._futures: List[Future] = []
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=1, thread_name_prefix="embed") if mode == "background" else None

    def schedule(self, rev: Revision) -> None:
        if rev.embedding is not None:
            return
        if self.mode == "inline":
            self._embed(rev.ref, rev.search_text)
        elif self.mode == "deferred":
            with self._lock:
                self._queue.append(rev.ref)
        else:
            fut = self._pool.submit(self._embed, rev.ref, rev.search_text)
            with self._lock:
                self._futures.append(fut)

    def _embed(self, ref: RevisionRef, text: str) -> None:
        try:
            vec = self.provider.embed(text)
            if not self.graph.has_revision(ref):
                return  # rolled back before the embedding landed
            if self.graph.get_revision(ref).embedding is None:
                self.graph.set_embedding(ref, vec)
        except Exception:
            logger.warning("embedding failed for %s; revision stays fulltext-only", ref, exc_info=True)

    def wait(self) -> None:
        """Block until every scheduled embedding has been written."""
        with self._lock:
            queue, self._queue = self._queue, []
            futures, self._futures = self._futures, []
        for ref in queue:
            if self.graph.has_revision(ref):
                self._embed(ref, self.graph.get_revision(ref).search_text)
        for fut in futures:
            fut.result()

    @property
    def pending(self) -> int:
        with self._lock:
            return len(self._queue) + sum(1 for f in self._futures if not f.done())

    def close(self) -> None:
        self.wait()
        if self._pool is not None:
            self._pool.shutdown(wait=True)


# ---------------------------------------------------------------------------
# Fuzzy term matching
# ---------------------------------------------------------------------------


def within_one_edit(a: str, b: str) -> bool:
    """True when the Levenshtein distance between ``a`` and ``b`` is at most 1."""
    if a == b:
        return True
    la, lb = len(a), len(b)
    if abs(la - lb) > 1:
        return False
    if la > lb:
        a, b, la, lb = b, a, lb, la
    i = 0
    while i < la and a[i] == b[i]:
        i += 1
    if la == lb:
        return a[i + 1:] == b[i + 1:]
    return a[i:] == b[i + 1:]


def _deletions(term: str) -> Set[str]:
    return {term[:i] + term[i + 1:] for i in range(len(term))}


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchResult:
    target: Kref
    score: float
    match_type: str
    branch: str
    search_mode: str

    @property
    def ref(self) -> RevisionRef:
        return RevisionRef(self.target, self.target.revision_pin)

    def to_json(self) -> Dict[str, object]:
        return {
            "kref": format_kref(self.target),
            "score": self.score,
            "match_type": self.match_type,
            "branch": self.branch,
            "search_mode": self.search_mode,
        }


@dataclass(frozen=True)
class IndexDoc:
    target: RevisionRef
    search_text: str
    tokens: Tuple[str, ...]


class _Postings:
    __slots__ = ("ids", "tfs", "bits", "_cache")

    def __init__(self) -> None:
        self.ids = array("q")
        self.tfs = array("l")
        self.bits = array("b")
        self._cache: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None

    def add(self, doc: int, tf: int, bits: int) -> None:
        self.ids.append(doc)
        self.tfs.append(tf)
        self.bits.append(bits)
        self._cache = None

    def bump(self, doc: int, tf: int, bits: int) -> bool:
        # Rare path (artifact attached after indexing): merge into an existing posting.
        for pos in range(len(self.ids) - 1, -1, -1):
            if self.ids[pos] == doc:
                self.tfs[pos] += tf
                self.bits[pos] |= bits
                self._cache = None
                return True
        return False

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._cache is None:
            self._cache = (
                np.frombuffer(self.ids, dtype=np.int64).copy(),
                np.frombuffer(self.tfs, dtype=np.dtype("l")).astype(np.float64),
                np.frombuffer(self.bits, dtype=np.int8).copy(),
            )
        return self._cache


# ---------------------------------------------------------------------------
# Index and search
# ---------------------------------------------------------------------------


class Retriever:
    """Inverted index plus embedding matrix, kept in step with a graph.

    Attaching registers the retriever as a graph observer, indexes what is
    already there, and (with a provider) schedules missing embeddings.
    """

    def __init__(
        self,
        graph: Graph,
        provider: Optional[EmbeddingProvider] = None,
        *,
        beta: float = BETA,
        k1: float = K1,
        b: float = B,
        embedding_mode: str = "background",
    ) -> None:
        self.graph = graph
        self.provider = provider
        self.beta = beta
        self.k1 = k1
        self.b = b
        self._lock = threading.RLock()

        self._refs: List[RevisionRef] = []
        self._doc_of: Dict[RevisionRef, int] = {}
        self._texts: List[str] = []
        self._lengths = array("d")
        self._total_len = 0.0
        self._postings: Dict[str, _Postings] = {}
        self._deletion_index: Dict[str, Set[str]] = {}
        self._doc_tokens: List[Tuple[str, ...]] = []

        dim = provider.dimension if provider is not None else 0
        self._emb = np.zeros((0, dim), dtype=np.float32)
        self._emb_norm = np.zeros(0, dtype=np.float64)
        self._emb_docs = array("q")
        self._emb_count = 0

        self.worker = EmbeddingWorker(graph, provider, embedding_mode) if provider is not None else None
        for rev in graph.all_revisions():
            self.on_revision(rev)
        for ptr in graph.all_artifacts():
            self.on_artifact(ptr)
        graph.add_observer(self)

    @property
    def search_mode(self) -> str:
        return "hybrid" if self.provider is not None else "fulltext"

    def close(self) -> None:
        self.graph.remove_observer(self)
        if self.worker is not None:
            self.worker.close()

    def wait(self) -> None:
        if self.worker is not None:
            self.worker.wait()

    # -- graph observer ----------------------------------------------------

    def on_revision(self, rev: Revision) -> None:
        self.index_revision(rev)
        if rev.embedding is not None:
            self.on_embedding(rev)
        elif self.worker is not None:
            self.worker.schedule(rev)

    def on_artifact(self, ptr: ArtifactPointer) -> None:
        ref = RevisionRef(ptr.item, ptr.revision_seq)
        with self._lock:
            doc = self._doc_of.get(ref)
            if doc is None:
                return
            counts: Dict[str, int] = {}
            for tok in tokenize(ptr.name):
                counts[tok] = counts.get(tok, 0) + 1
            for term, tf in counts.items():
                post = self._postings.get(term)
                if post is None or not post.bump(doc, tf, _ART):
                    self._add_posting(term, doc, tf, _ART)
            added = sum(counts.values())
            self._lengths[doc] += added
            self._total_len += added
            self._doc_tokens[doc] = self._doc_tokens[doc] + tuple(tokenize(ptr.name))

    def on_embedding(self, rev: Revision) -> None:
        if self.provider is None or rev.embedding is None:
            return
        with self._lock:
            doc = self._doc_of.get(rev.ref)
            if doc is None:
                return
            vec = np.asarray(rev.embedding, dtype=np.float32)
            if vec.shape != (self.provider.dimension,):
                logger.warning("embedding for %s has shape %s; ignored", rev.ref, vec.shape)
                return
            if self._emb_count == len(self._emb):
                cap = max(64, 2 * len(self._emb))
                grown = np.zeros((cap, self.provider.dimension), dtype=np.float32)
                grown[: self._emb_count] = self._emb[: self._emb_count]
                norms = np.zeros(cap, dtype=np.float64)
                norms[: self._emb_count] = self._emb_norm[: self._emb_count]
                self._emb, self._emb_norm = grown, norms
            self._emb[self._emb_count] = vec
            self._emb_norm[self._emb_count] = float(np.linalg.norm(vec.astype(np.float64)))
            self._emb_docs.append(doc)
            self._emb_count += 1

    # -- indexing ----------------------------------------------------------

    def _add_posting(self, term: str, doc: int, tf: int, bits: int) -> None:
        post = self._postings.get(term)
        if post is None:
            post = self._postings[term] = _Postings()
            for key in _deletions(term) | {term}:
                self._deletion_index.setdefault(key, set()).add(term)
        post.add(doc, tf, bits)

    def index_revision(self, rev: Revision) -> IndexDoc:
        """Tokenize a committed revision and add it to the inverted index."""
        with self._lock:
            ref = rev.ref
            existing = self._doc_of.get(ref)
            if existing is not None:
                return IndexDoc(ref, self._texts[existing], self._doc_tokens[existing])
            doc = len(self._refs)
            item_terms = set(tokenize(rev.item.item_name)) | set(tokenize(rev.item.kind))
            rev_terms = set(tokenize(rev.summary))
            for key in sorted(rev.metadata):
                rev_terms.update(tokenize(rev.metadata[key]))
            if rev.embedding_text_override:
                rev_terms.update(tokenize(rev.embedding_text_override))
            tokens = tuple(tokenize(rev.search_text))
            counts: Dict[str, int] = {}
            for tok in tokens:
                counts[tok] = counts.get(tok, 0) + 1
            self._refs.append(ref)
            self._doc_of[ref] = doc
            self._texts.append(rev.search_text)
            self._doc_tokens.append(tokens)
            self._lengths.append(float(len(tokens)))
            self._total_len += len(tokens)
            for term, tf in counts.items():
                bits = (_ITEM if term in item_terms else 0) | (_REV if term in rev_terms else 0)
                self._add_posting(term, doc, tf, bits or _REV)
            return IndexDoc(ref, rev.search_text, tokens)

    def doc(self, ref: RevisionRef) -> IndexDoc:
        d = self._doc_of[ref]
        return IndexDoc(ref, self._texts[d], self._doc_tokens[d])

    @property
    def doc_count(self) -> int:
        return len(self._refs)

    @property
    def vocabulary(self) -> List[str]:
        with self._lock:
            return sorted(self._postings)

    def expand_term(self, term: str) -> List[str]:
        """Dictionary terms the query term matches: itself plus one-edit neighbours."""
        with self._lock:
            if len(term) < FUZZY_MIN_LEN:
                return [term] if term in self._postings else []
            cands: Set[str] = set()
            for key in _deletions(term) | {term}:
                cands |= self._deletion_index.get(key, set())
        return sorted(t for t in cands if within_one_edit(term, t))

    # -- scoring -----------------------------------------------------------

    def idf(self, term: str) -> float:
        n = len(self._refs)
        post = self._postings.get(term)
        df = len(post.ids) if post is not None else 0
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def _fulltext_arrays(self, query: str) -> Tuple[np.ndarray, np.ndarray]:
        """Per-doc BM25 scores and match levels (3 item, 2 revision, 1 artifact)."""
        n = len(self._refs)
        scores = np.zeros(n, dtype=np.float64)
        levels = np.zeros(n, dtype=np.int8)
        if n == 0:
            return scores, levels
        lengths = np.frombuffer(self._lengths, dtype=np.float64)[:n]
        avgdl = self._total_len / n if self._total_len > 0 else 1.0
        norm = self.k1 * (1.0 - self.b + self.b * lengths / avgdl)
        for qterm in dict.fromkeys(tokenize(query)):
            best = np.zeros(n, dtype=np.float64)
            for term in self.expand_term(qterm):
                ids, tfs, bits = self._postings[term].arrays()
                contrib = self.idf(term) * (tfs * (self.k1 + 1.0)) / (tfs + norm[ids])
                best[ids] = np.maximum(best[ids], contrib)
                lvl = np.where(bits & _ITEM, 3, np.where(bits & _REV, 2, 1)).astype(np.int8)
                levels[ids] = np.maximum(levels[ids], lvl)
            scores += best
        return scores, levels

    def _vector_array(self, query: str) -> np.ndarray:
        n = len(self._refs)
        out = np.zeros(n, dtype=np.float64)
        if self.provider is None or self._emb_count == 0:
            return out
        q = np.asarray(self.provider.embed(query), dtype=np.float64)
        qn = float(np.linalg.norm(q))
        if qn == 0.0:
            return out
        m = self._emb_count
        dots = (self._emb[:m] @ q.astype(np.float32)).astype(np.float64)
        norms = self._emb_norm[:m]
        with np.errstate(divide="ignore", invalid="ignore"):
            cos = np.where(norms > 0, dots / (norms * qn), 0.0)
        docs = np.frombuffer(self._emb_docs, dtype=np.int64)[:m]
        out[docs] = self.beta * np.clip(cos, 0.0, None)
        return out

    def fulltext_scores(self, query: str) -> Dict[RevisionRef, float]:
        """BM25 score of every indexed revision with a non-zero score."""
        with self._lock:
            scores, _ = self._fulltext_arrays(query)
            return {self._refs[i]: float(scores[i]) for i in np.flatnonzero(scores > 0)}

    def vector_scores(self, query: str) -> Dict[RevisionRef, float]:
        """``beta * cosine`` for every embedded revision with a positive score."""
        with self._lock:
            vec = self._vector_array(query)
            return {self._refs[i]: float(vec[i]) for i in np.flatnonzero(vec > 0)}

    def fulltext_score(self, query: str, ref: RevisionRef) -> float:
        return self.fulltext_scores(query).get(ref, 0.0)

    def vector_score(self, query: str, rev: Revision) -> float:
        if self.provider is None:
            raise NoProvider("no embedding provider configured")
        if rev.embedding is None:
            return 0.0
        return self.beta * max(0.0, cosine(self.provider.embed(query), rev.embedding))

    # -- search ------------------------------------------------------------

    def _eligible(self, include_deprecated: bool, at: Optional[float]):
        g = self.graph
        if include_deprecated:
            return lambda ref: at is None or g.get_revision(ref).created_at <= at
        if at is None:
            return lambda ref: g.is_bound(ref) and not g.is_deprecated(ref.item)
        bound = set(g.bound_revisions(at))
        return lambda ref: ref in bound and not g.is_deprecated(ref.item, at)

    def _scored(self, query: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        ft, levels = self._fulltext_arrays(query)
        vec = self._vector_array(query)
        best = np.maximum(ft, vec)
        # Vector-only hits are content matches.
        levels = np.where(levels == 0, 2, levels)
        weights = np.select([levels == 3, levels == 2], [MATCH_WEIGHTS["item"], MATCH_WEIGHTS["revision"]], MATCH_WEIGHTS["artifact"])
        return weights * best, ft, vec, levels

    def _result(self, i: int, score: float, ft: np.ndarray, vec: np.ndarray, levels: np.ndarray) -> SearchResult:
        ref = self._refs[i]
        return SearchResult(
            target=ref.kref,
            score=float(score),
            match_type=_LEVEL_TO_TYPE[int(levels[i])],
            branch="fulltext" if ft[i] >= vec[i] else "vector",
            search_mode=self.search_mode,
        )

    def candidates(
        self, query: str, include_deprecated: bool = False, at: Optional[float] = None
    ) -> List[SearchResult]:
        """Every eligible revision with a positive score, fully ranked (no cutoff)."""
        with self._lock:
            merged, ft, vec, levels = self._scored(query)
            ok = self._eligible(include_deprecated, at)
            hits = [i for i in np.flatnonzero(merged > 0) if ok(self._refs[i])]
            hits.sort(key=lambda i: (-merged[i], self._refs[i].sort_key))
            return [self._result(i, merged[i], ft, vec, levels) for i in hits]

    def search(
        self, query: str, k: int = 10, include_deprecated: bool = False, at: Optional[float] = None
    ) -> List[SearchResult]:
        """Top-``k`` results, descending score, ties by (kref text, seq)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        with self._lock:
            merged, ft, vec, levels = self._scored(query)
            idx = np.flatnonzero(merged > 0)
            if len(idx) == 0:
                return []
            ok = self._eligible(include_deprecated, at)
            # Walk score bands in descending order so eligibility is only
            # checked for the few candidates that can make the cut.
            order = idx[np.argsort(-merged[idx], kind="stable")]
            picked: List[int] = []
            pos = 0
            while pos < len(order) and len(picked) < k:
                band_score = merged[order[pos]]
                end = pos
                while end < len(order) and merged[order[end]] == band_score:
                    end += 1
                band = sorted(order[pos:end], key=lambda i: self._refs[i].sort_key)
                picked.extend(i for i in band if ok(self._refs[i]))
                pos = end
            return [self._result(i, merged[i], ft, vec, levels) for i in picked[:k]]

    # -- sibling pre-filter ------------------------------------------------

    def sibling_filter(
        self,
        query: str,
        siblings: Sequence[Revision],
        threshold: float = SIBLING_THRESHOLD,
        primary: Optional[RevisionRef] = None,
    ) -> List[Revision]:
        """Drop sibling revisions whose cosine to the query is below ``threshold``.

        The primary revision (``primary``, else whichever sibling its item's
        ``latest`` tag points at) is always kept.  Input order is preserved.
        """
        if self.provider is None:
            raise NoProvider("sibling filtering needs an embedding provider")
        q = self.provider.embed(query)
        kept = []
        for rev in siblings:
            is_primary = rev.ref == primary if primary is not None else self._is_latest(rev)
            emb = rev.embedding if rev.embedding is not None else self.provider.embed(rev.search_text)
            if is_primary or cosine(q, emb) >= threshold:
                kept.append(rev)
        return kept

    def _is_latest(self, rev: Revision) -> bool:
        return self.graph.item_tags(rev.item).get(self.graph.latest_tag) == rev.seq


def merged_score(match_type: str, fulltext: float, vector: float) -> float:
    return MATCH_WEIGHTS[match_type] * max(fulltext, vector)
