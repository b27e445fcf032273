"""Wire protocol: newline-delimited JSON messages, one object per line.

The closed type set is {ppg, gsr, action, questionnaire, start, assessment,
intervention, scenario, vitals, countdown, end}; unknown types are rejected.
All timestamps are session-relative milliseconds. Inbound messages each get
exactly one acknowledgment or error: sample and questionnaire acks ride on
`scenario` messages with ``event: "ack"``, an action's acknowledgment is its
``action-outcome`` scenario event, and protocol-fatal errors close the
session with an ``end`` message of ``status: "error"``.
"""

from __future__ import annotations

import json
from typing import Dict, Optional

from .errors import ValidationError

MESSAGE_TYPES = (
    "ppg", "gsr", "action", "questionnaire", "start",
    "assessment", "intervention", "scenario", "vitals", "countdown", "end",
)

CLIENT_TYPES = ("start", "questionnaire", "ppg", "gsr", "action", "end")

START_MODES = ("live-signals", "agent-signals")


def parse_line(line: str) -> dict:
    """One wire message from one line; raises ValidationError with a reason."""
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"not valid JSON: {exc}") from exc
    if not isinstance(msg, dict):
        raise ValidationError("message must be a JSON object")
    mtype = msg.get("type")
    if mtype not in MESSAGE_TYPES:
        raise ValidationError(f"unknown message type {mtype!r}")
    return msg


def _require(msg: dict, field: str, kind=None):
    if field not in msg:
        raise ValidationError(f"{msg.get('type')} message missing field {field!r}")
    if kind is not None and not isinstance(msg[field], kind):
        raise ValidationError(
            f"{msg.get('type')} field {field!r} must be {kind}, got {type(msg[field])}"
        )
    return msg[field]


def validate_start(msg: dict) -> dict:
    mode = _require(msg, "mode", str)
    if mode not in START_MODES:
        raise ValidationError(f"start mode must be one of {START_MODES}")
    arm = msg.get("arm", "intervention")
    if arm not in ("intervention", "control"):
        raise ValidationError("start arm must be 'intervention' or 'control'")
    seed = msg.get("seed", 0)
    if not isinstance(seed, int):
        raise ValidationError("start seed must be an integer")
    config = msg.get("config", "study")
    if not isinstance(config, (str, dict)):
        raise ValidationError("start config must be a preset name or an object")
    return {"mode": mode, "arm": arm, "seed": seed, "config": config}


def validate_questionnaire(msg: dict) -> list:
    items = _require(msg, "items", list)
    return items


def validate_sample(msg: dict) -> dict:
    t_ms = _require(msg, "t_ms", (int, float))
    if msg["type"] == "ppg":
        value = _require(msg, "value", (int, float))
        return {"t_ms": float(t_ms), "value": float(value)}
    conductance = _require(msg, "conductance", (int, float))
    if conductance < 0:
        raise ValidationError("gsr conductance must be >= 0")
    return {"t_ms": float(t_ms), "conductance": float(conductance)}


def validate_action(msg: dict) -> dict:
    t_ms = _require(msg, "t_ms", (int, float))
    action = _require(msg, "action", str)
    return {
        "t_ms": float(t_ms),
        "action": action,
        "layer": msg.get("layer"),
        "tool": msg.get("tool"),
    }


def dumps(msg: dict) -> str:
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


def ack(of: str, n: Optional[int] = None, **extra) -> dict:
    msg: Dict = {"type": "scenario", "event": "ack", "of": of}
    if n is not None:
        msg["n"] = n
    msg.update(extra)
    return msg


def warning(reason: str, **extra) -> dict:
    return {"type": "scenario", "event": "warning", "reason": reason, **extra}


def error_end(reason: str) -> dict:
    return {"type": "end", "status": "error", "reason": reason}


def record_to_messages(record: dict) -> list:
    """Map one session-log record to its outbound wire message(s)."""
    kind = record["kind"]
    body = {k: v for k, v in record.items() if k != "kind"}
    if kind == "assessment":
        return [{"type": "assessment", **body}]
    if kind == "intervention":
        return [{"type": "intervention", **body}]
    if kind == "action":
        return [{"type": "scenario", "event": "action-outcome", **body}]
    if kind == "trigger":
        out = [{"type": "scenario", "event": "trigger", **body}]
        if "vitals" in record:
            hr, spo2 = record["vitals"]
            out.append({"type": "vitals", "t_ms": record["t_ms"],
                        "hr_bpm": hr, "spo2_percent": spo2})
        return out
    if kind == "phase-change":
        out = [{"type": "scenario", "event": "phase-change", **body}]
        if "patient_hr" in record:
            out.append({"type": "vitals", "t_ms": record["t_ms"],
                        "hr_bpm": record["patient_hr"],
                        "spo2_percent": record["patient_spo2"]})
        return out
    if kind == "countdown":
        return [{"type": "countdown", **body}]
    if kind == "sample-summary":
        return []
    raise ValidationError(f"unknown record kind {kind!r}")
