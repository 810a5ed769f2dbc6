"""Deterministic datagram network emulation.

A VirtualClock orders every event in the simulation (node ticks, datagram
deliveries) by (timestamp, insertion sequence), so identical seeds and
traffic replay to bit-identical traces. Links inject base latency, uniform
jitter, independent drops and adjacent-pair reordering from their own seeded
RNG stream.

Reordering swaps the due times of a datagram and the previous one still in
flight. Heap entries are never mutated; every due-time change pushes a fresh
entry and stale entries are skipped on pop.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable

from .wire import MAX_DATAGRAM


class OversizedDatagram(Exception):
    """Datagram exceeds the 512-byte cap; never silently truncated."""


class _Event:
    __slots__ = ("due_us", "fn", "tag", "fired")

    def __init__(self, due_us: int, fn: Callable[[], None] | None, tag: Any):
        self.due_us = due_us
        self.fn = fn
        self.tag = tag
        self.fired = False


class VirtualClock:
    """Discrete-event clock. Time only moves forward; same-timestamp events
    fire in insertion order."""

    def __init__(self, start_us: int = 0):
        self.now_us = start_us
        self._heap: list[tuple[int, int, _Event]] = []
        self._tie = 0

    def push(self, due_us: int, fn: Callable[[], None] | None = None, tag: Any = None) -> _Event:
        due_us = max(due_us, self.now_us)
        ev = _Event(due_us, fn, tag)
        self._push_entry(ev)
        return ev

    def _push_entry(self, ev: _Event) -> None:
        self._tie += 1
        heapq.heappush(self._heap, (ev.due_us, self._tie, ev))

    def run_until(self, t_end_us: int) -> list[tuple[int, Any]]:
        """Fire everything due at or before t_end_us; advance now to t_end_us."""
        if t_end_us < self.now_us:
            raise ValueError(f"cannot run clock backwards ({t_end_us} < {self.now_us})")
        fired: list[tuple[int, Any]] = []
        while self._heap and self._heap[0][0] <= t_end_us:
            entry_time, _, ev = heapq.heappop(self._heap)
            if ev.fired or ev.due_us != entry_time:
                continue  # cancelled or rescheduled; a fresh entry exists at ev.due_us
            ev.fired = True
            self.now_us = entry_time
            fired.append((entry_time, ev.tag))
            if ev.fn is not None:
                ev.fn()
        self.now_us = t_end_us
        return fired

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.fired)


@dataclass(frozen=True)
class LinkProfile:
    base_latency_ms: float = 0.0
    jitter_ms: float = 0.0
    drop_prob: float = 0.0
    reorder_prob: float = 0.0
    seed: int = 0
    # "uniform": base + U(-jitter, +jitter), bounded (the default contract).
    # "lognormal": base + heavy-tailed extra delay with median jitter_ms,
    # for realism studies; the latency-bounds invariant does not apply.
    jitter_mode: str = "uniform"

    def __post_init__(self) -> None:
        if self.base_latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be non-negative")
        for p, name in ((self.drop_prob, "drop_prob"), (self.reorder_prob, "reorder_prob")):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.jitter_mode not in ("uniform", "lognormal"):
            raise ValueError(f"unknown jitter_mode {self.jitter_mode!r}")


@dataclass
class LinkStats:
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    swapped: int = 0


class Link:
    """One direction of a lossy pipe between two nodes."""

    def __init__(self, name: str, profile: LinkProfile, clock: VirtualClock,
                 deliver: Callable[[bytes, int], None],
                 log: Callable[[dict], None] | None = None):
        self.name = name
        self.profile = profile
        self.clock = clock
        self.deliver = deliver
        self.log = log
        self.rng = random.Random(profile.seed)
        self.stats = LinkStats()
        self.severed = False
        self._prev: _Event | None = None
        self._prev_swapped = False

    def send(self, datagram: bytes, now_us: int | None = None) -> None:
        """Schedule (or drop) one datagram. Draw order is fixed so traces
        replay exactly: drop first, then latency, then reorder."""
        if len(datagram) > MAX_DATAGRAM:
            raise OversizedDatagram(f"{len(datagram)}B > {MAX_DATAGRAM}B on link {self.name}")
        t_send = self.clock.now_us if now_us is None else now_us
        seq = self.stats.sent
        self.stats.sent += 1
        if self.severed or self.rng.random() < self.profile.drop_prob:
            self.stats.dropped += 1
            if self.log:
                self.log({"t_send": t_send, "dropped": True, "seq": seq, "bytes": len(datagram)})
            return
        jitter_us = self.profile.jitter_ms * 1000.0
        if self.profile.jitter_mode == "lognormal" and jitter_us > 0:
            extra = self.rng.lognormvariate(math.log(jitter_us), 0.75)
        else:
            extra = self.rng.uniform(-jitter_us, jitter_us)
        delay_us = self.profile.base_latency_ms * 1000.0 + extra
        due = t_send + max(0, round(delay_us))

        def fire(data: bytes = datagram, s: int = seq, ts: int = t_send) -> None:
            self.stats.delivered += 1
            if self.log:
                self.log({"t_send": ts, "t_deliver": self.clock.now_us, "seq": s, "bytes": len(data)})
            self.deliver(data, self.clock.now_us)

        ev = self.clock.push(due, fire, tag=(self.name, seq))
        prev = self._prev
        swapped = False
        # a datagram takes part in at most one swap, keeping every delivery
        # within one neighbor's schedule of its own
        if (prev is not None and not prev.fired and not self._prev_swapped
                and self.rng.random() < self.profile.reorder_prob):
            ev.due_us, prev.due_us = prev.due_us, ev.due_us
            self.clock._push_entry(ev)
            self.clock._push_entry(prev)
            self.stats.swapped += 1
            swapped = True
        self._prev = ev
        self._prev_swapped = swapped
