"""Strict tool-call protocol: extraction, classification, and validation.

A model turn is classified into exactly one of four outcomes: a call
(one sentinel-delimited JSON object with ``api_name`` and ``parameters``),
a direct text answer, a refusal, or a malformed turn with a machine-readable
reason. Extraction never raises; classification depends only on the turn
text itself, never on the prompt that produced it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

from .errors import KindMismatch, MissingParameter, UnknownApi, UnknownParameter
from .knowledge import ApiSpec
from .prompts import END_SENTINEL, START_SENTINEL

DEFAULT_REFUSAL_PHRASES = ("i cannot", "i'm unable", "as an ai", "cannot assist")


class MalformedReason(str, Enum):
    # NoSentinel: a closing marker appears without any opening marker.
    NO_SENTINEL = "NoSentinel"
    UNBALANCED_SENTINELS = "UnbalancedSentinels"
    BAD_JSON = "BadJson"
    MISSING_FIELD = "MissingField"
    MULTIPLE_CALLS = "MultipleCalls"


@dataclass(frozen=True)
class ToolCallRequest:
    api_name: str
    parameters: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Call:
    request: ToolCallRequest
    surrounding_text: str  # prose outside the sentinel block, preserved as the thought


@dataclass(frozen=True)
class Direct:
    text: str


@dataclass(frozen=True)
class Refusal:
    text: str


@dataclass(frozen=True)
class Malformed:
    reason: MalformedReason
    detail: str = ""


ParseOutcome = Call | Direct | Refusal | Malformed


def is_refusal(text: str, phrases: Sequence[str] = DEFAULT_REFUSAL_PHRASES) -> bool:
    """Case-insensitive refusal phrase match; deterministic."""
    lowered = text.lower()
    return any(p.lower() in lowered for p in phrases)


def _scan_blocks(text: str) -> tuple[list[tuple[int, int]], bool]:
    """Complete sentinel blocks scanned left to right.

    Returns (list of (inner_start, inner_end) spans, dangling_start) where
    dangling_start is True when a start marker is left without a closing
    marker after the last complete block.
    """
    blocks: list[tuple[int, int]] = []
    pos = 0
    while True:
        start = text.find(START_SENTINEL, pos)
        if start < 0:
            return blocks, False
        inner_start = start + len(START_SENTINEL)
        end = text.find(END_SENTINEL, inner_start)
        if end < 0:
            return blocks, True
        blocks.append((inner_start, end))
        pos = end + len(END_SENTINEL)


def extract_tool_call(
    turn_text: str,
    refusal_phrases: Sequence[str] = DEFAULT_REFUSAL_PHRASES,
) -> ParseOutcome:
    """Classify a model turn. Total: never raises, any input maps to one outcome."""
    if not isinstance(turn_text, str):
        return Malformed(MalformedReason.BAD_JSON, "turn is not text")
    blocks, dangling = _scan_blocks(turn_text)
    if not blocks:
        if dangling:
            return Malformed(
                MalformedReason.UNBALANCED_SENTINELS,
                "start marker without a closing marker",
            )
        if END_SENTINEL in turn_text:
            return Malformed(
                MalformedReason.NO_SENTINEL,
                "closing marker without an opening marker",
            )
        if is_refusal(turn_text, refusal_phrases):
            return Refusal(turn_text)
        return Direct(turn_text)
    if len(blocks) > 1:
        return Malformed(
            MalformedReason.MULTIPLE_CALLS,
            f"{len(blocks)} sentinel blocks in one turn; at most one API call is allowed",
        )
    if dangling:
        return Malformed(
            MalformedReason.UNBALANCED_SENTINELS,
            "extra start marker after a complete block",
        )
    inner_start, inner_end = blocks[0]
    outside = turn_text[: inner_start - len(START_SENTINEL)] + turn_text[
        inner_end + len(END_SENTINEL) :
    ]
    if END_SENTINEL in outside or START_SENTINEL in outside:
        return Malformed(
            MalformedReason.UNBALANCED_SENTINELS,
            "stray sentinel marker outside the call block",
        )
    raw = turn_text[inner_start:inner_end]
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        return Malformed(MalformedReason.BAD_JSON, str(exc))
    if not isinstance(payload, dict):
        return Malformed(MalformedReason.BAD_JSON, "call payload is not a JSON object")
    if "api_name" not in payload:
        return Malformed(MalformedReason.MISSING_FIELD, "api_name field is missing")
    if "parameters" not in payload:
        return Malformed(MalformedReason.MISSING_FIELD, "parameters field is missing")
    api_name = payload["api_name"]
    parameters = payload["parameters"]
    if not isinstance(api_name, str) or not api_name:
        return Malformed(MalformedReason.MISSING_FIELD, "api_name must be a non-empty string")
    if not isinstance(parameters, dict):
        return Malformed(MalformedReason.MISSING_FIELD, "parameters must be a JSON object")
    request = ToolCallRequest(api_name=api_name, parameters=parameters)
    return Call(request=request, surrounding_text=outside.strip())


@dataclass(frozen=True)
class ValidatedCall:
    spec: ApiSpec
    arguments: dict[str, Any]

    def to_request(self) -> ToolCallRequest:
        """Canonical request form: coerced values, JSON-compatible types."""
        params = {
            k: list(v) if isinstance(v, tuple) else v for k, v in self.arguments.items()
        }
        return ToolCallRequest(api_name=self.spec.name, parameters=params)


def _kind_of(value: Any) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "real"
    if isinstance(value, str):
        return "text"
    if isinstance(value, (list, tuple)):
        return f"array[{len(value)}]"
    if value is None:
        return "null"
    return type(value).__name__


def _coerce(api: str, name: str, kind: str, value: Any, values: tuple[str, ...] | None) -> Any:
    got = _kind_of(value)
    if kind == "real":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise KindMismatch(api, name, "real", got)
        return float(value)
    if kind == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            raise KindMismatch(api, name, "integer", got)
        return value
    if kind == "text":
        if not isinstance(value, str):
            raise KindMismatch(api, name, "text", got)
        return value
    if kind == "boolean":
        if not isinstance(value, bool):
            raise KindMismatch(api, name, "boolean", got)
        return value
    if kind == "real-pair":
        ok = (
            isinstance(value, (list, tuple))
            and len(value) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        )
        if not ok:
            raise KindMismatch(api, name, "real-pair", got)
        return (float(value[0]), float(value[1]))
    if kind == "enum":
        if not isinstance(value, str) or value not in (values or ()):
            raise KindMismatch(api, name, "enum(" + "|".join(values or ()) + ")", got)
        return value
    raise KindMismatch(api, name, kind, got)


def validate_call(request: ToolCallRequest, registry: Sequence[ApiSpec]) -> ValidatedCall:
    """Resolve the request against the registry and coerce its parameters.

    Raises UnknownApi, MissingParameter, UnknownParameter, or KindMismatch.
    """
    spec = next((s for s in registry if s.name == request.api_name), None)
    if spec is None:
        raise UnknownApi(request.api_name)
    declared = {p.name for p in spec.parameters}
    for name in request.parameters:
        if name not in declared:
            raise UnknownParameter(spec.name, name)
    arguments: dict[str, Any] = {}
    for p in spec.parameters:
        if p.name not in request.parameters:
            if p.required:
                raise MissingParameter(spec.name, p.name)
            continue
        arguments[p.name] = _coerce(spec.name, p.name, p.kind, request.parameters[p.name], p.values)
    return ValidatedCall(spec=spec, arguments=arguments)


def to_wire(call: ValidatedCall | ToolCallRequest) -> str:
    """Serialize a call back to the sentinel-delimited wire format."""
    request = call.to_request() if isinstance(call, ValidatedCall) else call
    body = json.dumps(
        {"api_name": request.api_name, "parameters": request.parameters},
        ensure_ascii=False,
    )
    return f"{START_SENTINEL}{body}{END_SENTINEL}"


def outcome_to_dict(outcome: ParseOutcome) -> dict:
    """JSON-friendly form used by transcripts and the conformance corpus."""
    if isinstance(outcome, Call):
        return {
            "variant": "call",
            "api_name": outcome.request.api_name,
            "parameters": outcome.request.parameters,
        }
    if isinstance(outcome, Direct):
        return {"variant": "direct", "text": outcome.text}
    if isinstance(outcome, Refusal):
        return {"variant": "refusal", "text": outcome.text}
    return {"variant": "malformed", "reason": outcome.reason.value, "detail": outcome.detail}
