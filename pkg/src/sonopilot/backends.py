"""Pluggable turn generators.

Three backends share one interface: a scripted replayer and a
deterministic rule policy for tests and desk-scale evaluation, plus a
remote chat-completion client for real models. The rule policy reads
nothing but the prompt and the observations fed back into the
conversation; it has no side channel to the simulator.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from typing import Any, Literal, Protocol, Sequence

import httpx

from .errors import BackendUnavailable, InvalidInput, NoApisListed, RemoteError, ScriptExhausted
from .prompts import guidance_text, listed_api_names
from .toolcalls import ToolCallRequest, to_wire

Role = Literal["system", "user", "assistant", "observation"]


@dataclass(frozen=True)
class Message:
    role: Role
    content: str


@dataclass
class Conversation:
    """Ordered message log; starts with the system prompt."""

    messages: list[Message] = field(default_factory=list)

    def append(self, role: Role, content: str) -> None:
        if not self.messages and role != "system":
            raise InvalidInput("the first message must have the system role")
        if self.messages and role == "system":
            raise InvalidInput("only the first message may have the system role")
        if role == "assistant" and self.messages and self.messages[-1].role == "assistant":
            raise InvalidInput("two consecutive assistant messages are not allowed")
        self.messages.append(Message(role, content))

    @property
    def system_text(self) -> str:
        return self.messages[0].content if self.messages else ""

    def first_user_text(self) -> str:
        return next((m.content for m in self.messages if m.role == "user"), "")

    def observations(self) -> list[str]:
        return [m.content for m in self.messages if m.role == "observation"]

    def assistant_turns(self) -> int:
        return sum(1 for m in self.messages if m.role == "assistant")


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 0.7
    top_p: float = 0.95
    max_turn_length: int = 1024

    def __post_init__(self):
        if self.temperature < 0:
            raise InvalidInput("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise InvalidInput("top_p must be in (0, 1]")


class Backend(Protocol):
    name: str

    def generate(self, conversation: Conversation, config: GenerationConfig) -> str: ...


def generate(backend: Backend, conversation: Conversation, config: GenerationConfig) -> str:
    if not conversation.messages:
        raise InvalidInput("conversation must be non-empty")
    return backend.generate(conversation, config)


class ScriptedBackend:
    """Replays a fixed list of turns; raises once the script runs out."""

    name = "scripted"

    def __init__(self, turns: Sequence[str]):
        self._turns = list(turns)
        self._cursor = 0

    @classmethod
    def from_file(cls, path: str) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            turns = json.load(fh)
        if not isinstance(turns, list) or not all(isinstance(t, str) for t in turns):
            raise InvalidInput(f"script file {path} must hold a JSON array of strings")
        return cls(turns)

    def generate(self, conversation: Conversation, config: GenerationConfig) -> str:
        if self._cursor >= len(self._turns):
            raise ScriptExhausted(f"script exhausted after {len(self._turns)} turns")
        turn = self._turns[self._cursor]
        self._cursor += 1
        return turn


# Ordered trigger phrases mapping handbook step descriptions to API names.
# The scan walks the guidance text and keeps the APIs in text order.
GUIDANCE_PHRASES: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("Init_Depth_Camera", ("depth camera",)),
    ("Display_Artery_Model", ("anatomical model", "artery model", "vessel model")),
    ("Activate_Robot", ("activat",)),
    ("Start_Scan", ("scanning the", "acquire the scan", "sweep the probe")),
    ("Image_Seg", ("segment",)),
    ("Generate_Report", ("generating the report", "generate the report")),
    ("Print_Report", ("printing the report", "print the report")),
)

_PREREQ_RE = re.compile(r"missing prerequisite: ([A-Za-z_][A-Za-z0-9_]*)")
_TARGET_RE = re.compile(r"\b(carotid|spine|spinal|rib|ribs)\b", re.IGNORECASE)

DEFAULT_SEG_POSITION = (0.5, 0.5)
DEFAULT_SEG_THRESHOLD = 0.2


def guidance_steps(text: str) -> list[str]:
    """APIs named by the guidance text, ordered by first mention."""
    lowered = text.lower()
    found: list[tuple[int, str]] = []
    for api, phrases in GUIDANCE_PHRASES:
        positions = [lowered.find(p) for p in phrases]
        positions = [p for p in positions if p >= 0]
        if positions:
            found.append((min(positions), api))
    found.sort()
    return [api for _, api in found]


def instruction_target(instruction: str) -> str:
    m = _TARGET_RE.search(instruction)
    if not m:
        return "carotid"
    word = m.group(1).lower()
    if word.startswith("spin"):
        return "spine"
    if word.startswith("rib"):
        return "rib"
    return "carotid"


def call_arguments_for(api: str, target: str) -> dict[str, Any]:
    if api == "Start_Scan":
        return {"target": target}
    if api == "Image_Seg":
        return {"position": list(DEFAULT_SEG_POSITION), "threshold": DEFAULT_SEG_THRESHOLD}
    return {}


def _call_turn(api: str, target: str, note: str) -> str:
    wire = to_wire(ToolCallRequest(api_name=api, parameters=call_arguments_for(api, target)))
    return f"{note} {wire}"


def rule_policy_next(conversation: Conversation) -> str:
    """Deterministic next turn derived from the prompt and observations.

    With procedure guidance present, emits the first guided step that has
    no success observation yet, except that a failure observation naming a
    missing prerequisite is answered by calling that prerequisite. Without
    guidance, walks the listed APIs in list order, one per turn, with no
    recovery: the ordering is simply unknown to the policy.
    """
    system = conversation.system_text
    if not system:
        raise InvalidInput("conversation has no system message")
    target = instruction_target(conversation.first_user_text())
    observations = conversation.observations()
    succeeded = {
        obs.split(":", 1)[0][len("OK ") :].strip()
        for obs in observations
        if obs.startswith("OK ")
    }
    guidance = guidance_text(system)
    if guidance is not None:
        steps = guidance_steps(guidance)
        if observations and observations[-1].startswith("ERROR "):
            m = _PREREQ_RE.search(observations[-1])
            if m and m.group(1) != "none":
                prereq = m.group(1)
                return _call_turn(
                    prereq, target, f"The last step failed; running {prereq} first."
                )
        for api in steps:
            if api not in succeeded:
                return _call_turn(api, target, f"Next step per the procedure guidance: {api}.")
        return "All procedure steps have completed successfully."
    listed = listed_api_names(system)
    if not listed:
        raise NoApisListed("the prompt lists no APIs to call")
    api = listed[conversation.assistant_turns() % len(listed)]
    return _call_turn(api, target, f"Trying the listed API {api}.")


class RulePolicyBackend:
    """Stateless deterministic policy; see ``rule_policy_next``."""

    name = "rule"

    def generate(self, conversation: Conversation, config: GenerationConfig) -> str:
        return rule_policy_next(conversation)


# Chat-completion services have no observation role; observations travel
# as user turns with a fixed prefix.
_REMOTE_ROLE = {"system": "system", "user": "user", "assistant": "assistant"}


class RemoteBackend:
    """Client for an HTTP chat-completion service.

    Wire format: POST ``{"model", "messages", "temperature", "top_p"}``;
    the reply's first choice message content is returned verbatim.
    Endpoint, model, and credentials come from arguments or the
    LLM_ENDPOINT / LLM_MODEL / LLM_API_KEY environment variables.
    """

    name = "remote"

    def __init__(
        self,
        endpoint: str | None = None,
        model: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint or os.environ.get("LLM_ENDPOINT", "")
        self.model = model or os.environ.get("LLM_MODEL", "")
        self.api_key = api_key or os.environ.get("LLM_API_KEY", "")
        self.timeout = timeout
        self._client = client or httpx.Client()
        if not self.endpoint:
            raise InvalidInput("remote backend needs an endpoint (LLM_ENDPOINT)")

    def _payload(self, conversation: Conversation, config: GenerationConfig) -> dict:
        messages = []
        for msg in conversation.messages:
            if msg.role == "observation":
                messages.append({"role": "user", "content": f"Observation: {msg.content}"})
            else:
                messages.append({"role": _REMOTE_ROLE[msg.role], "content": msg.content})
        return {
            "model": self.model,
            "messages": messages,
            "temperature": config.temperature,
            "top_p": config.top_p,
        }

    def generate(self, conversation: Conversation, config: GenerationConfig) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(
                self.endpoint,
                json=self._payload(conversation, config),
                headers=headers,
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"chat service unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteError(resp.status_code, resp.text)
        body = resp.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise RemoteError(resp.status_code, f"unexpected response shape: {body}") from exc
