"""Memory reference URIs.

Canonical form::

    kref://project/space[/sub...]/item.kind[?r=N][&a=artifact]

Tokens are restricted to ``[A-Za-z0-9._-]``; nothing is percent-decoded, so
every valid reference has exactly one canonical spelling.  The kind is the
suffix after the last dot of the final path segment.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass
from typing import Optional, Tuple

SCHEME = "kref://"
MAX_SPACE_DEPTH = 8

_TOKEN = re.compile(r"[A-Za-z0-9._-]+")
_PIN = re.compile(r"[1-9][0-9]*")


class MalformedKref(ValueError):
    """Raised when text is not a valid memory reference."""


def is_token(text: str) -> bool:
    return bool(_TOKEN.fullmatch(text))


def _check_token(value: str, what: str) -> None:
    if not isinstance(value, str) or not _TOKEN.fullmatch(value):
        raise MalformedKref(f"invalid {what}: {value!r}")


@dataclass(frozen=True, order=False)
class Kref:
    project: str
    space_path: Tuple[str, ...]
    item_name: str
    kind: str
    revision_pin: Optional[int] = None
    artifact_name: Optional[str] = None

    def __post_init__(self) -> None:
        # Tuples only; a list would break hashing.
        object.__setattr__(self, "space_path", tuple(self.space_path))
        _check_token(self.project, "project")
        if not 1 <= len(self.space_path) <= MAX_SPACE_DEPTH:
            raise MalformedKref(
                f"space path must have 1..{MAX_SPACE_DEPTH} segments, got {len(self.space_path)}"
            )
        for seg in self.space_path:
            _check_token(seg, "space segment")
        _check_token(self.item_name, "item name")
        _check_token(self.kind, "kind")
        if "." in self.kind:
            raise MalformedKref(f"kind may not contain '.': {self.kind!r}")
        if self.revision_pin is not None:
            if isinstance(self.revision_pin, bool) or not isinstance(self.revision_pin, int):
                raise MalformedKref(f"revision pin must be an int: {self.revision_pin!r}")
            if self.revision_pin < 1:
                raise MalformedKref(f"revision pin must be >= 1: {self.revision_pin}")
        if self.artifact_name is not None:
            _check_token(self.artifact_name, "artifact name")

    @classmethod
    def _trusted(cls, project, space_path, item_name, kind, pin=None, artifact=None) -> "Kref":
        # Derived from an already-validated Kref: skip re-validation.
        k = object.__new__(cls)
        for name, value in (
            ("project", project),
            ("space_path", space_path),
            ("item_name", item_name),
            ("kind", kind),
            ("revision_pin", pin),
            ("artifact_name", artifact),
        ):
            object.__setattr__(k, name, value)
        return k

    @property
    def base(self) -> "Kref":
        """The item-level reference (no pin, no artifact)."""
        if self.revision_pin is None and self.artifact_name is None:
            return self
        return Kref._trusted(self.project, self.space_path, self.item_name, self.kind)

    @property
    def space(self) -> str:
        return "/".join(self.space_path)

    def pinned(self, seq: int) -> "Kref":
        if isinstance(seq, bool) or not isinstance(seq, int) or seq < 1:
            raise MalformedKref(f"revision pin must be a positive int: {seq!r}")
        return Kref._trusted(
            self.project, self.space_path, self.item_name, self.kind, seq, self.artifact_name
        )

    def with_artifact(self, name: str) -> "Kref":
        return Kref(self.project, self.space_path, self.item_name, self.kind, self.revision_pin, name)

    def __str__(self) -> str:
        return format_kref(self)


def parse(text: str) -> Kref:
    """Parse ``text`` into a :class:`Kref`.

    Query parameters ``r`` (revision pin) and ``a`` (artifact name) may come in
    either order; each at most once.
    """
    if not isinstance(text, str):
        raise MalformedKref(f"expected str, got {type(text).__name__}")
    if not text.startswith(SCHEME):
        raise MalformedKref(f"missing {SCHEME!r} prefix: {text!r}")
    rest = text[len(SCHEME):]
    path, sep, query = rest.partition("?")
    if sep and not query:
        raise MalformedKref(f"empty query string: {text!r}")

    segments = path.split("/")
    if len(segments) < 3:
        raise MalformedKref(f"need project/space/item.kind: {text!r}")
    if any(s == "" for s in segments):
        raise MalformedKref(f"empty path segment: {text!r}")
    project, *space, leaf = segments
    name, dot, kind = leaf.rpartition(".")
    if not dot or not name or not kind:
        raise MalformedKref(f"missing .kind suffix: {text!r}")

    pin: Optional[int] = None
    artifact: Optional[str] = None
    if sep:
        seen = set()
        for pair in query.split("&"):
            key, eq, value = pair.partition("=")
            if not eq or not value:
                raise MalformedKref(f"bad query parameter {pair!r} in {text!r}")
            if key in seen:
                raise MalformedKref(f"duplicate query key {key!r} in {text!r}")
            seen.add(key)
            if key == "r":
                if not _PIN.fullmatch(value):
                    raise MalformedKref(f"non-numeric revision pin {value!r} in {text!r}")
                pin = int(value)
            elif key == "a":
                artifact = value
            else:
                raise MalformedKref(f"unknown query key {key!r} in {text!r}")

    return Kref(project, tuple(space), name, kind, pin, artifact)


def format_kref(k: Kref) -> str:
    out = f"{SCHEME}{k.project}/{k.space}/{k.item_name}.{k.kind}"
    params = []
    if k.revision_pin is not None:
        params.append(f"r={k.revision_pin}")
    if k.artifact_name is not None:
        params.append(f"a={k.artifact_name}")
    if params:
        out += "?" + "&".join(params)
    return out


# Module-level alias so callers can write ``kref.format(k)``.
format = format_kref  # noqa: A001


def canonical(text: str) -> str:
    return format_kref(parse(text))


def item_kref(project: str, space: str, name: str, kind: str) -> Kref:
    """Build an item reference from loose parts; ``space`` may contain slashes."""
    return Kref(project, tuple(space.split("/")), name, kind)


@functools.total_ordering
class RevisionRef:
    """A specific revision of an item: (item reference, sequence number).

    Orders by (canonical item text, seq), the engine-wide tie-break order.
    """

    __slots__ = ("item", "seq", "sort_key")

    def __init__(self, item: Kref, seq: int) -> None:
        if isinstance(seq, bool) or not isinstance(seq, int) or seq < 1:
            raise MalformedKref(f"revision seq must be a positive int: {seq!r}")
        base = item.base
        object.__setattr__(self, "item", base)
        object.__setattr__(self, "seq", seq)
        object.__setattr__(self, "sort_key", (format_kref(base), seq))

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("RevisionRef is immutable")

    @property
    def kref(self) -> Kref:
        return self.item.pinned(self.seq)

    @classmethod
    def parse(cls, text: str) -> "RevisionRef":
        k = parse(text)
        if k.revision_pin is None:
            raise MalformedKref(f"revision reference needs ?r=N: {text!r}")
        return cls(k.base, k.revision_pin)

    def __hash__(self) -> int:
        return hash(self.sort_key)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RevisionRef):
            return NotImplemented
        return self.sort_key == other.sort_key

    def __lt__(self, other: "RevisionRef") -> bool:
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        return format_kref(self.kref)

    def __repr__(self) -> str:
        return f"RevisionRef({self})"
