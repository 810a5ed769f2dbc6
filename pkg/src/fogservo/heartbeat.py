"""Sliding-window command reconstruction for lossy datagram streams.

A held command arrives as a stream of packets. Each channel latches on when
the first packet lands and stays on until no packet has been seen for one
window (default 250 ms). The on/off switch is shaped by linear ramps so the
balance loop downstream sees a continuous control value instead of packet
edges. Worst-case stop delay is therefore window + fall time, which
`stop_latency_bound` reports.

Channels are single-writer (network receive) / single-reader (control tick);
each ingest updates all fields before the next sample can observe them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
import math


class ChannelType(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    HEIGHT_UP = "height_up"
    HEIGHT_DOWN = "height_down"
    GRASP = "grasp"
    AUTO_MODE = "auto_mode"


# Grasp and mode are single-shot: a latched window would re-fire them.
EDGE_TRIGGERED = frozenset({ChannelType.GRASP, ChannelType.AUTO_MODE})

_DUP_MEMORY = 128


@dataclass(frozen=True)
class RampShape:
    """Linear on/off shaping. The stop ramp is deliberately sharper than the
    start ramp so releases bite faster."""

    rise_ms: float = 200.0
    fall_ms: float = 100.0

    def __post_init__(self) -> None:
        if self.rise_ms <= 0 or self.fall_ms <= 0:
            raise ValueError("ramp times must be positive")
        if self.fall_ms >= self.rise_ms:
            raise ValueError("fall ramp must be sharper (shorter) than rise ramp")


@dataclass
class ChannelStats:
    accepted: int = 0
    duplicates: int = 0
    rejected: int = 0


@dataclass
class HeartbeatChannel:
    command_type: ChannelType
    window_us: int = 250_000
    last_seen: int | None = None
    latched_value: float = 0.0
    active: bool = False
    ramp_pos: float = 0.0
    ramp_time: int = 0
    last_value_seq: int | None = None
    stats: ChannelStats = field(default_factory=ChannelStats)
    _recent_seqs: deque[int] = field(default_factory=lambda: deque(maxlen=_DUP_MEMORY))

    def off_time(self) -> int | None:
        """Instant the window expires (exclusive end of the active interval)."""
        if self.last_seen is None:
            return None
        return self.last_seen + self.window_us

    def is_active(self, now_us: int) -> bool:
        return self.last_seen is not None and now_us - self.last_seen < self.window_us


def _advance_ramp(ch: HeartbeatChannel, shape: RampShape, now_us: int) -> None:
    """Integrate ramp_pos piecewise over [ramp_time, now], splitting at the
    window expiry if it falls inside the interval."""
    t = ch.ramp_time
    if now_us <= t:
        return
    rise_us = shape.rise_ms * 1000.0
    fall_us = shape.fall_ms * 1000.0
    off = ch.off_time()
    if off is not None and t < off:
        t1 = min(now_us, off)
        ch.ramp_pos = min(1.0, ch.ramp_pos + (t1 - t) / rise_us)
        t = t1
    if t < now_us:
        ch.ramp_pos = max(0.0, ch.ramp_pos - (now_us - t) / fall_us)
    # snap accumulated float dust so the rails are exact
    if ch.ramp_pos < 1e-12:
        ch.ramp_pos = 0.0
    elif ch.ramp_pos > 1.0 - 1e-12:
        ch.ramp_pos = 1.0
    ch.ramp_time = now_us


def ingest(ch: HeartbeatChannel, seq: int, value: float, now_us: int,
           shape: RampShape | None = None) -> HeartbeatChannel:
    """Fold one received command packet into the channel.

    Stale reordered packets never shrink the window (last_seen only moves
    forward) and never overwrite a newer magnitude (seq guard). Duplicate
    sequence numbers leave the state untouched.
    """
    if not math.isfinite(value) or value < 0.0:
        ch.stats.rejected += 1
        return ch
    if seq in ch._recent_seqs:
        ch.stats.duplicates += 1
        return ch
    # Settle the ramp up to `now` under the old window before extending it,
    # so a gap that already expired cannot retroactively read as active.
    _advance_ramp(ch, shape or RampShape(), now_us)
    ch.last_seen = now_us if ch.last_seen is None else max(ch.last_seen, now_us)
    if ch.last_value_seq is None or seq > ch.last_value_seq:
        ch.latched_value = value
        ch.last_value_seq = seq
    ch._recent_seqs.append(seq)
    ch.active = ch.is_active(now_us)
    ch.stats.accepted += 1
    return ch


def sample(ch: HeartbeatChannel, shape: RampShape, now_us: int) -> float:
    """Reconstructed control value at `now_us`: latched magnitude scaled by
    the ramp position. Continuous in time for a fixed magnitude."""
    _advance_ramp(ch, shape, now_us)
    ch.active = ch.is_active(now_us)
    return ch.latched_value * ch.ramp_pos


def stop_latency_bound(window_ms: float, shape: RampShape) -> float:
    """Worst-case ms between operator release (last packet arrival) and zero
    output: the full window must drain, then the fall ramp."""
    if window_ms == 0 and shape.fall_ms == 0:
        return 0.0
    return window_ms + shape.fall_ms


class AdaptiveWindow:
    """Optional window sizing from observed packet spacing: mean + 3 sigma of
    inter-arrival times, clamped. Off by default; the fixed 250 ms window is
    the protocol's contract."""

    def __init__(self, min_ms: float = 100.0, max_ms: float = 1000.0, k: float = 3.0):
        self.min_us = min_ms * 1000.0
        self.max_us = max_ms * 1000.0
        self.k = k
        self._last: int | None = None
        self._n = 0
        self._mean = 0.0
        self._m2 = 0.0

    def observe(self, arrival_us: int) -> None:
        if self._last is not None:
            gap = float(arrival_us - self._last)
            if gap >= 0:
                self._n += 1
                d = gap - self._mean
                self._mean += d / self._n
                self._m2 += d * (gap - self._mean)
        self._last = arrival_us

    def window_us(self) -> int:
        if self._n < 2:
            return int(self.max_us)
        std = math.sqrt(self._m2 / (self._n - 1))
        return int(min(self.max_us, max(self.min_us, self._mean + self.k * std)))


class EdgeEvent:
    """Single-shot channel event (grasp trigger, mode switch)."""

    __slots__ = ("channel", "seq", "value", "t_us")

    def __init__(self, channel: ChannelType, seq: int, value: float, t_us: int):
        self.channel = channel
        self.seq = seq
        self.value = value
        self.t_us = t_us


class ChannelBank:
    """All eight channels of one edge controller plus single-shot events."""

    def __init__(self, window_ms: float = 250.0, shape: RampShape | None = None,
                 adaptive: bool = False):
        self.shape = shape or RampShape()
        self.adaptive = adaptive
        self.channels: dict[ChannelType, HeartbeatChannel] = {
            ct: HeartbeatChannel(command_type=ct, window_us=int(window_ms * 1000))
            for ct in ChannelType if ct not in EDGE_TRIGGERED
        }
        self._estimators = {ct: AdaptiveWindow() for ct in self.channels} if adaptive else {}
        self._events: list[EdgeEvent] = []
        self._event_seqs: dict[ChannelType, deque[int]] = {
            ct: deque(maxlen=_DUP_MEMORY) for ct in EDGE_TRIGGERED
        }
        self.rejected = 0

    def ingest(self, ct: ChannelType, seq: int, value: float, now_us: int) -> None:
        if ct in EDGE_TRIGGERED:
            seen = self._event_seqs[ct]
            if seq in seen:
                return
            seen.append(seq)
            self._events.append(EdgeEvent(ct, seq, value, now_us))
            return
        ch = self.channels[ct]
        ingest(ch, seq, value, now_us, self.shape)
        if self.adaptive:
            est = self._estimators[ct]
            est.observe(now_us)
            ch.window_us = est.window_us()

    def sample(self, ct: ChannelType, now_us: int) -> float:
        return sample(self.channels[ct], self.shape, now_us)

    def take_events(self) -> list[EdgeEvent]:
        out, self._events = self._events, []
        return out

    def snapshot(self, now_us: int) -> dict[str, dict]:
        """Channel states for telemetry / the UI frame."""
        out = {}
        for ct, ch in self.channels.items():
            out[ct.value] = {
                "active": ch.is_active(now_us),
                "ramp": round(ch.ramp_pos, 4),
                "value": ch.latched_value,
            }
        return out
