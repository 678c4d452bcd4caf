"""Working memory: bounded, expiring per-session message buffers."""

from __future__ import annotations

import re
import threading
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional

from .kref import is_token
from .store import Clock, SystemClock

DEFAULT_CAPACITY = 50
DEFAULT_TTL = 3600.0

_DATE = re.compile(r"\d{8}")


@dataclass(frozen=True)
class SessionId:
    context: str
    user_hash: str
    date: str
    seq: int

    def __post_init__(self) -> None:
        for name in ("context", "user_hash"):
            value = getattr(self, name)
            if not is_token(value) or ":" in value:
                raise ValueError(f"invalid session {name}: {value!r}")
        if not _DATE.fullmatch(self.date):
            raise ValueError(f"session date must be YYYYMMDD: {self.date!r}")
        if isinstance(self.seq, bool) or not isinstance(self.seq, int) or self.seq < 1:
            raise ValueError(f"session seq must be a positive int: {self.seq!r}")

    @classmethod
    def parse(cls, text: str) -> "SessionId":
        parts = text.split(":")
        if len(parts) != 4 or not parts[3].isdigit():
            raise ValueError(f"session id must be context:user_hash:YYYYMMDD:seq, got {text!r}")
        return cls(parts[0], parts[1], parts[2], int(parts[3]))

    def __str__(self) -> str:
        return f"{self.context}:{self.user_hash}:{self.date}:{self.seq}"


@dataclass(frozen=True)
class Message:
    role: str
    text: str
    at: float


@dataclass
class _Buffer:
    messages: Deque[Message]
    created_at: float
    last_touched: float
    total_appended: int = 0


def messages_key(project: str, sid: SessionId) -> str:
    return f"cogmem:{project}:sessions:{sid}:messages"


def metadata_key(project: str, sid: SessionId) -> str:
    return f"cogmem:{project}:sessions:{sid}:metadata"


def queue_key(project: str) -> str:
    return f"cogmem:{project}:consol_queue"


class SessionStore:
    """In-memory session buffers keyed exactly like the external cache layout.

    Appends refresh the expiry; reads do not.
    """

    def __init__(
        self, clock: Optional[Clock] = None, capacity: int = DEFAULT_CAPACITY, ttl: float = DEFAULT_TTL
    ) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if ttl <= 0:
            raise ValueError("ttl must be positive")
        self.clock: Clock = clock or SystemClock()
        self.capacity = capacity
        self.ttl = ttl
        self._buffers: Dict[str, _Buffer] = {}
        self._queues: Dict[str, Deque[str]] = {}
        self._lock = threading.Lock()

    def _live(self, key: str, now: float) -> Optional[_Buffer]:
        buf = self._buffers.get(key)
        if buf is not None and now >= buf.last_touched + self.ttl:
            del self._buffers[key]
            return None
        return buf

    def append(self, project: str, sid: SessionId, role: str, text: str) -> int:
        """Add a message; returns the buffer length after eviction."""
        key = messages_key(project, sid)
        with self._lock:
            now = self.clock.now()
            buf = self._live(key, now)
            if buf is None:
                buf = self._buffers[key] = _Buffer(deque(maxlen=self.capacity), now, now)
            buf.messages.append(Message(role, text, now))
            buf.last_touched = now
            buf.total_appended += 1
            return len(buf.messages)

    def get(self, project: str, sid: SessionId) -> List[Message]:
        with self._lock:
            buf = self._live(messages_key(project, sid), self.clock.now())
            return list(buf.messages) if buf else []

    def metadata(self, project: str, sid: SessionId) -> Optional[Dict[str, float]]:
        with self._lock:
            buf = self._live(messages_key(project, sid), self.clock.now())
            if buf is None:
                return None
            return {"created_at": buf.created_at, "message_count": buf.total_appended}

    def clear(self, project: str, sid: SessionId) -> None:
        with self._lock:
            self._buffers.pop(messages_key(project, sid), None)

    def keys(self) -> List[str]:
        """Live keys, both message and metadata, in sorted order."""
        with self._lock:
            now = self.clock.now()
            out = []
            for key in list(self._buffers):
                if self._live(key, now) is not None:
                    out.append(key)
                    out.append(key[: -len(":messages")] + ":metadata")
            return sorted(out)

    # -- consolidation queue --------------------------------------------

    def enqueue_for_consolidation(self, project: str, sid: SessionId) -> int:
        with self._lock:
            q = self._queues.setdefault(queue_key(project), deque())
            if str(sid) not in q:
                q.append(str(sid))
            return len(q)

    def next_for_consolidation(self, project: str) -> Optional[SessionId]:
        with self._lock:
            q = self._queues.get(queue_key(project))
            if not q:
                return None
            return SessionId.parse(q.popleft())

    def queue(self, project: str) -> List[str]:
        with self._lock:
            return list(self._queues.get(queue_key(project), ()))
