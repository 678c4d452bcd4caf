"""Versioned belief graph for agent memory."""

from __future__ import annotations

from .kref import Kref, MalformedKref, RevisionRef, format_kref, parse
from .store import (
    BeliefAtom,
    EdgeType,
    Graph,
    LogicalClock,
    SystemClock,
)

__all__ = [
    "BeliefAtom",
    "EdgeType",
    "Graph",
    "Kref",
    "LogicalClock",
    "MalformedKref",
    "RevisionRef",
    "SystemClock",
    "format_kref",
    "parse",
]

__version__ = "0.1.0"
