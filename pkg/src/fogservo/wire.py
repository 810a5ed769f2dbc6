"""Datagram framing for cloud/RCU/edge command traffic.

Every message shares an 18-byte big-endian header:

    magic   2B  0x46 0x52
    version 1B  0x01
    type    1B  message type
    seq     4B  per-sender sequence number
    send_ts 8B  microseconds
    len     2B  payload length

followed by a type-specific payload. Total datagram length is capped at
512 bytes so packets survive any sane UDP path without fragmentation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MAGIC = b"\x46\x52"
VERSION = 1
MAX_DATAGRAM = 512

HEADER = struct.Struct(">2sBBIQH")

MSG_VELOCITY = 0x01
MSG_HEIGHT = 0x02
MSG_GRASP = 0x03
MSG_TAG_OBS = 0x04
MSG_MODE = 0x05
MSG_TELEMETRY = 0x06

MODE_TELEOP = 0
MODE_AUTO = 1


class WireError(Exception):
    """Malformed datagram: bad magic, truncation, unknown type, etc."""


@dataclass(frozen=True)
class Velocity:
    forward: float
    yaw: float


@dataclass(frozen=True)
class HeightRate:
    rate: float


@dataclass(frozen=True)
class GraspTrigger:
    pass


@dataclass(frozen=True)
class Mode:
    auto: bool


@dataclass(frozen=True)
class TagObsMsg:
    visible: bool
    c_x: float
    c_y: float
    side_px: float
    capture_ts: int


@dataclass(frozen=True)
class TelemetryMsg:
    t: int
    x: float
    y: float
    heading: float
    psi: float
    psi_dot: float
    v: float
    height: float
    fallen: bool
    grasping: bool


Message = Velocity | HeightRate | GraspTrigger | Mode | TagObsMsg | TelemetryMsg

_VEL = struct.Struct(">ff")
_HEIGHT = struct.Struct(">f")
_MODE = struct.Struct(">B")
_OBS = struct.Struct(">BfffQ")
_TELEM = struct.Struct(">QfffffffB")


@dataclass(frozen=True)
class Packet:
    msg_type: int
    seq: int
    send_ts: int
    body: Message

    @property
    def message(self) -> Message:
        return self.body


def _pack_body(msg: Message) -> tuple[int, bytes]:
    if isinstance(msg, Velocity):
        return MSG_VELOCITY, _VEL.pack(msg.forward, msg.yaw)
    if isinstance(msg, HeightRate):
        return MSG_HEIGHT, _HEIGHT.pack(msg.rate)
    if isinstance(msg, GraspTrigger):
        return MSG_GRASP, b""
    if isinstance(msg, Mode):
        return MSG_MODE, _MODE.pack(MODE_AUTO if msg.auto else MODE_TELEOP)
    if isinstance(msg, TagObsMsg):
        return MSG_TAG_OBS, _OBS.pack(
            1 if msg.visible else 0, msg.c_x, msg.c_y, msg.side_px, msg.capture_ts
        )
    if isinstance(msg, TelemetryMsg):
        flags = (1 if msg.fallen else 0) | (2 if msg.grasping else 0)
        return MSG_TELEMETRY, _TELEM.pack(
            msg.t, msg.x, msg.y, msg.heading, msg.psi, msg.psi_dot,
            msg.v, msg.height, flags,
        )
    raise WireError(f"unsupported message {type(msg).__name__}")


def encode(msg: Message, seq: int, send_ts: int) -> bytes:
    """Frame a message into a datagram. Raises WireError if oversized."""
    msg_type, body = _pack_body(msg)
    data = HEADER.pack(MAGIC, VERSION, msg_type, seq, send_ts, len(body)) + body
    if len(data) > MAX_DATAGRAM:
        raise WireError(f"datagram {len(data)}B exceeds {MAX_DATAGRAM}B cap")
    return data


def decode(data: bytes) -> Packet:
    """Parse a datagram. Raises WireError on any structural problem."""
    if len(data) < HEADER.size:
        raise WireError(f"short datagram: {len(data)}B < {HEADER.size}B header")
    magic, version, msg_type, seq, send_ts, plen = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise WireError(f"bad magic {magic!r}")
    if version != VERSION:
        raise WireError(f"unknown version {version}")
    payload = data[HEADER.size:]
    if len(payload) != plen:
        raise WireError(f"payload length mismatch: header says {plen}, got {len(payload)}")
    try:
        body = _unpack_body(msg_type, payload)
    except struct.error as exc:
        raise WireError(f"payload unpack failed for type 0x{msg_type:02x}: {exc}") from exc
    return Packet(msg_type=msg_type, seq=seq, send_ts=send_ts, body=body)


def _unpack_body(msg_type: int, payload: bytes) -> Message:
    if msg_type == MSG_VELOCITY:
        fwd, yaw = _VEL.unpack(payload)
        return Velocity(fwd, yaw)
    if msg_type == MSG_HEIGHT:
        (rate,) = _HEIGHT.unpack(payload)
        return HeightRate(rate)
    if msg_type == MSG_GRASP:
        if payload:
            raise WireError("grasp trigger carries no payload")
        return GraspTrigger()
    if msg_type == MSG_MODE:
        (mode,) = _MODE.unpack(payload)
        if mode not in (MODE_TELEOP, MODE_AUTO):
            raise WireError(f"unknown mode {mode}")
        return Mode(auto=mode == MODE_AUTO)
    if msg_type == MSG_TAG_OBS:
        vis, cx, cy, side, ts = _OBS.unpack(payload)
        return TagObsMsg(visible=bool(vis), c_x=cx, c_y=cy, side_px=side, capture_ts=ts)
    if msg_type == MSG_TELEMETRY:
        t, x, y, heading, psi, psi_dot, v, height, flags = _TELEM.unpack(payload)
        return TelemetryMsg(
            t=t, x=x, y=y, heading=heading, psi=psi, psi_dot=psi_dot, v=v,
            height=height, fallen=bool(flags & 1), grasping=bool(flags & 2),
        )
    raise WireError(f"unknown message type 0x{msg_type:02x}")
