"""JSON-Lines run artifacts: writers and the bundled schema validator.

Records are serialized with fixed separators and insertion key order so a
seeded headless run reproduces its logs byte for byte.
"""

from __future__ import annotations

import json
import math
from pathlib import Path


class JsonlLog:
    """Append-only record sink; optionally mirrored to a file."""

    def __init__(self, path: str | Path | None = None):
        self.records: list[dict] = []
        self._fh = open(path, "w") if path else None

    def write(self, record: dict) -> None:
        self.records.append(record)
        if self._fh:
            self._fh.write(dumps(record) + "\n")

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None

    def as_bytes(self) -> bytes:
        return ("".join(dumps(r) + "\n" for r in self.records)).encode()


def dumps(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


TELEMETRY_FIELDS = {
    "t": int, "x": float, "y": float, "heading": float, "psi": float,
    "psi_dot": float, "v": float, "height": float, "fallen": bool, "grasping": bool,
}
PHASE_VALUES = {"navigate", "height", "grasp", "done", "aborted"}


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def validate_record(kind: str, rec: dict) -> str | None:
    """Return an error string for a malformed record, None if valid."""
    if kind == "telemetry":
        for name, typ in TELEMETRY_FIELDS.items():
            if name not in rec:
                return f"telemetry record missing {name}"
            v = rec[name]
            if typ is bool:
                if not isinstance(v, bool):
                    return f"telemetry.{name}: expected bool"
            elif typ is int:
                if not isinstance(v, int) or isinstance(v, bool):
                    return f"telemetry.{name}: expected int"
            elif not _is_num(v):
                return f"telemetry.{name}: expected finite number"
        return None
    if kind == "delivery":
        if not isinstance(rec.get("t_send"), int):
            return "delivery.t_send: expected int"
        dropped = rec.get("dropped", False)
        if dropped is True:
            if "t_deliver" in rec:
                return "delivery: dropped record must not carry t_deliver"
        elif not isinstance(rec.get("t_deliver"), int):
            return "delivery.t_deliver: expected int (or dropped: true)"
        if not isinstance(rec.get("seq"), int):
            return "delivery.seq: expected int"
        if not isinstance(rec.get("bytes"), int):
            return "delivery.bytes: expected int"
        return None
    if kind == "phase":
        if not isinstance(rec.get("t"), int):
            return "phase.t: expected int"
        if rec.get("phase") not in PHASE_VALUES:
            return f"phase.phase: expected one of {sorted(PHASE_VALUES)}"
        if not _is_num(rec.get("Z")):
            return "phase.Z: expected finite number"
        if not _is_num(rec.get("e_norm")):
            return "phase.e_norm: expected finite number (-1 marks no measurement)"
        return None
    return f"unknown record kind {kind!r}"


def validate_file(path: str | Path, kind: str) -> list[str]:
    """Validate a JSON-Lines artifact; returns a list of error strings."""
    errors: list[str] = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(f"{path}:{lineno}: not JSON ({exc})")
                continue
            err = validate_record(kind, rec)
            if err:
                errors.append(f"{path}:{lineno}: {err}")
    return errors
