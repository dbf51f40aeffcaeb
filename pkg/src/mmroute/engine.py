"""Event queue, integer-nanosecond clock and seeded RNG streams."""

from __future__ import annotations

import heapq
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np

NS = 1
US = 1_000
MS = 1_000_000
SECOND = 1_000_000_000


def seconds(x: float) -> int:
    """Convert seconds to integer nanoseconds."""
    return round(x * SECOND)


def to_seconds(t: int) -> float:
    return t / SECOND


class EventKind(str, Enum):
    FRAME = "frame-delivery"
    TIMER = "timer"
    BLOCKAGE = "blockage-toggle"
    MOBILITY = "mobility-update"
    TRAFFIC = "traffic-tick"


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current time."""


@dataclass(eq=False)
class Event:
    fire_at: int
    target: int | None
    kind: EventKind
    action: Callable[["Event"], Any] | None = None
    payload: Any = None
    seq: int = -1
    cancelled: bool = field(default=False, repr=False)

    def cancel(self) -> None:
        self.cancelled = True


class Engine:
    """Single-threaded discrete-event loop.

    Events fire in (fire_at, insertion sequence) order, so runs are
    reproducible down to the tie-break.  ``schedule`` returns the event
    itself as the cancellation handle.
    """

    def __init__(self, record_trace: bool = False):
        self.now = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self.dispatched = 0
        self.trace: list[tuple[int, str, int | None]] | None = [] if record_trace else None
        self.handlers: dict[tuple[int | None, EventKind], Callable[[Event], Any]] = {}

    def register(self, target: int | None, kind: EventKind, handler: Callable[[Event], Any]) -> None:
        """Default handler for events of ``kind`` aimed at ``target``."""
        self.handlers[(target, kind)] = handler

    def schedule(self, event: Event) -> Event:
        if event.fire_at < self.now:
            raise SchedulingError(
                f"event {event.kind.value} at {event.fire_at} ns scheduled from {self.now} ns"
            )
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (event.fire_at, event.seq, event))
        return event

    def at(self, t: int, kind: EventKind, target: int | None, action=None, payload=None) -> Event:
        return self.schedule(Event(t, target, kind, action, payload))

    def after(self, delay: int, kind: EventKind, target: int | None, action=None, payload=None) -> Event:
        return self.schedule(Event(self.now + delay, target, kind, action, payload))

    def cancel(self, handle: Event | None) -> None:
        if handle is not None:
            handle.cancelled = True

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)

    def run_until(self, end: int) -> int:
        """Dispatch every event with ``fire_at <= end``; return how many fired."""
        count = 0
        heap = self._heap
        while heap and heap[0][0] <= end:
            t, _, ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now = t
            if self.trace is not None:
                self.trace.append((t, ev.kind.value, ev.target))
            handler = ev.action or self.handlers.get((ev.target, ev.kind))
            if handler is None:
                raise LookupError(f"no handler for {ev.kind.value} at node {ev.target}")
            handler(ev)
            count += 1
        self.now = max(self.now, end)
        self.dispatched += count
        return count


def _stream_key(stream: int | str) -> int:
    if isinstance(stream, str):
        return zlib.crc32(stream.encode())
    return int(stream)


def rng_stream(seed: int, stream: int | str) -> np.random.Generator:
    """Independent generator for one node or subsystem.

    Streams are keyed by (seed, stream), so adding a stream never shifts the
    draws of another one.
    """
    seq = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, _stream_key(stream)])
    return np.random.Generator(np.random.PCG64(seq))
