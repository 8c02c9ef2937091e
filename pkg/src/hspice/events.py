"""Events, JSON-lines event streams and sliding windows."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping


class StreamError(ValueError):
    """Raised when an event file cannot be parsed or violates stream order."""


@dataclass(frozen=True)
class Event:
    seq: int
    timestamp: int  # microseconds
    event_type: int
    attributes: Mapping[str, float] = field(default_factory=dict)

    def attr(self, name: str) -> float:
        return self.attributes[name]

    def to_json(self) -> dict:
        return {"seq": self.seq, "ts": self.timestamp, "type": self.event_type,
                "attrs": dict(self.attributes)}

    @classmethod
    def from_json(cls, obj: dict) -> "Event":
        return cls(int(obj["seq"]), int(obj["ts"]), int(obj["type"]),
                   {k: float(v) for k, v in obj.get("attrs", {}).items()})


@dataclass(frozen=True)
class StreamSchema:
    type_count: int
    type_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.type_count < 1:
            raise ValueError("type_count must be positive")
        if self.type_names and len(self.type_names) != self.type_count:
            raise ValueError("type_names must list one name per type")

    def to_json(self) -> dict:
        return {"type_count": self.type_count, "type_names": list(self.type_names)}

    @classmethod
    def load(cls, path: str | Path) -> "StreamSchema":
        obj = json.loads(Path(path).read_text())
        return cls(int(obj["type_count"]), tuple(obj.get("type_names", ())))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def read_stream(path: str | Path, schema: StreamSchema | None = None) -> Iterator[Event]:
    """Lazily yield events from a JSON-lines file, checking seq order.

    Raises StreamError with the 1-based line number on malformed lines and
    names the offending seq on a monotonicity violation.
    """
    last_seq = -1
    last_ts = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                event = Event.from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise StreamError(f"{path}:{lineno}: cannot parse event: {exc}") from exc
            if event.seq <= last_seq:
                raise StreamError(
                    f"{path}:{lineno}: seq {event.seq} does not increase (previous {last_seq})")
            if last_ts is not None and event.timestamp < last_ts:
                raise StreamError(
                    f"{path}:{lineno}: timestamp of seq {event.seq} goes backwards")
            if schema is not None and not 0 <= event.event_type < schema.type_count:
                raise StreamError(
                    f"{path}:{lineno}: event type {event.event_type} outside schema "
                    f"(type_count={schema.type_count})")
            last_seq, last_ts = event.seq, event.timestamp
            yield event


def write_stream(path: str | Path, events: Iterable[Event]) -> int:
    n = 0
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_json(), separators=(",", ":")) + "\n")
            n += 1
    return n


class WindowKind(str, Enum):
    COUNT = "count_based"
    TIME = "time_based"


@dataclass(frozen=True)
class WindowSpec:
    """Sliding window definition.

    ``size`` and ``slide`` count events for count-based windows and seconds
    for time-based ones.
    """

    kind: WindowKind
    size: int
    slide: int

    def __post_init__(self):
        object.__setattr__(self, "kind", WindowKind(self.kind))
        if self.slide < 1 or self.size < self.slide:
            raise ValueError(f"need 1 <= slide <= size, got size={self.size} slide={self.slide}")

    @classmethod
    def count(cls, size: int, slide: int | None = None) -> "WindowSpec":
        return cls(WindowKind.COUNT, size, size if slide is None else slide)

    @classmethod
    def time(cls, size: int, slide: int | None = None) -> "WindowSpec":
        return cls(WindowKind.TIME, size, size if slide is None else slide)

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "size": self.size, "slide": self.slide}

    @classmethod
    def from_json(cls, obj: dict) -> "WindowSpec":
        return cls(WindowKind(obj.get("kind", "count_based")), int(obj["size"]),
                   int(obj.get("slide", obj["size"])))


@dataclass
class WindowInstance:
    window_id: int
    start: int  # stream index (count-based) or microseconds (time-based)
    count: int = 0
    closed: bool = False
    events: list[tuple[Event, int]] | None = None


class WindowAssigner:
    """Assigns stream events to sliding windows and reports window closures.

    Window ``k`` starts at stream index ``k * slide`` (count-based) or at
    ``origin + k * slide`` seconds, where ``origin`` is the timestamp of the
    first event (time-based). Time-based windows with no events are never
    materialized.
    """

    def __init__(self, spec: WindowSpec, keep_events: bool = False):
        self.spec = spec
        self.keep_events = keep_events
        self.open: dict[int, WindowInstance] = {}
        self._closed: list[WindowInstance] = []
        self._index = 0
        self._last_seq = -1
        self._origin: int | None = None
        if spec.kind is WindowKind.TIME:
            self._size = spec.size * 1_000_000
            self._slide = spec.slide * 1_000_000

    def assign(self, event: Event) -> list[tuple[int, int]]:
        """Return ``(window_id, position)`` for every window containing ``event``.

        Windows the event completes (count-based) or that expired before it
        (time-based) are queued and returned by :meth:`pop_closed`.
        """
        if event.seq <= self._last_seq:
            raise StreamError(f"seq {event.seq} assigned after seq {self._last_seq}")
        self._last_seq = event.seq
        if self.spec.kind is WindowKind.COUNT:
            return self._assign_count(event)
        return self._assign_time(event)

    def _assign_count(self, event: Event) -> list[tuple[int, int]]:
        i = self._index
        self._index += 1
        ws, d = self.spec.size, self.spec.slide
        if i % d == 0:
            wid = i // d
            self.open[wid] = WindowInstance(wid, i, events=[] if self.keep_events else None)
        out = []
        for wid in sorted(self.open):
            win = self.open[wid]
            pos = win.count
            win.count += 1
            if win.events is not None:
                win.events.append((event, pos))
            out.append((wid, pos))
            if win.count == ws:
                self._close(win)
        return out

    def _assign_time(self, event: Event) -> list[tuple[int, int]]:
        t = event.timestamp
        if self._origin is None:
            self._origin = t
        rel = t - self._origin
        for wid in sorted(self.open):
            win = self.open[wid]
            if t >= win.start + self._size:
                self._close(win)
        out = []
        last = rel // self._slide
        first = max(0, -(-(rel - self._size + 1) // self._slide))
        for wid in range(first, last + 1):
            win = self.open.get(wid)
            if win is None:
                win = WindowInstance(wid, self._origin + wid * self._slide,
                                     events=[] if self.keep_events else None)
                self.open[wid] = win
            pos = win.count
            win.count += 1
            if win.events is not None:
                win.events.append((event, pos))
            out.append((wid, pos))
        return out

    def _close(self, win: WindowInstance) -> None:
        win.closed = True
        del self.open[win.window_id]
        self._closed.append(win)

    def pop_closed(self) -> list[WindowInstance]:
        closed, self._closed = self._closed, []
        return closed

    def flush(self) -> list[WindowInstance]:
        """Close every open window (end of stream)."""
        for wid in sorted(self.open):
            self._close(self.open[wid])
        return self.pop_closed()


def assign_windows(events: Iterable[Event], spec: WindowSpec) -> list[list[tuple[int, int]]]:
    """Window assignments for a whole stream, one list per event."""
    assigner = WindowAssigner(spec)
    return [assigner.assign(ev) for ev in events]
