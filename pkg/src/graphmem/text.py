"""Tokenization and composite search-text construction shared by store and index."""

from __future__ import annotations

import re
from typing import Iterable, List, Mapping, Optional, Sequence, Union

_WORD = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> List[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _WORD.findall(text.lower())


def split_list(value: Optional[str]) -> List[str]:
    """Split a comma-separated metadata value (``"a, b,c"``) into items."""
    if not value:
        return []
    return [part.strip() for part in value.split(",") if part.strip()]


def join_list(values: Union[str, Iterable[str], None]) -> str:
    if values is None:
        return ""
    if isinstance(values, str):
        return ",".join(split_list(values))
    return ",".join(v.strip() for v in values if v and v.strip())


def compose_search_text(
    item_name: str,
    kind: str,
    summary: str,
    metadata: Mapping[str, str],
    override: Optional[str] = None,
) -> str:
    """Item name, kind, summary, keywords, topics, then the optional override."""
    parts: Sequence[str] = [
        item_name,
        kind,
        summary,
        " ".join(split_list(metadata.get("keywords"))),
        " ".join(split_list(metadata.get("topics"))),
        override or "",
    ]
    return " ".join(p for p in parts if p)
