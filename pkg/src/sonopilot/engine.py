"""Dynamic execution loop: observe, think, act, update, repeat.

A session seeds the conversation with the assembled prompt, then cycles:
the backend produces a turn, the turn is parsed, a call is validated and
invoked on the robot, and the observation is fed back. The loop ends when
the goal predicate holds on the robot state, on refusal, or when the
consecutive-error or step budget runs out. Completion is judged by the
robot state alone, never by the model declaring success.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .backends import Backend, Conversation, GenerationConfig
from .errors import (
    BackendUnavailable,
    CallValidationError,
    InvalidInput,
    NoApisListed,
    RemoteError,
    ScriptExhausted,
    SessionClosed,
)
from .knowledge import ApiSpec, ApiUsageRecord, HandbookEntry, KnowledgeIndex, retrieve_top_k
from .prompts import AssembledPrompt, PromptTemplate, assemble_prompt
from .robot import FaultSpec, Observation, Phase, RobotState, UltrasoundRobot
from .toolcalls import (
    Call,
    Direct,
    Malformed,
    ParseOutcome,
    Refusal,
    extract_tool_call,
    outcome_to_dict,
    validate_call,
)

TERMINAL_COMPLETED = "Completed"
TERMINAL_ERROR_THRESHOLD = "ErrorThresholdExceeded"
TERMINAL_REFUSED = "Refused"
TERMINAL_MAX_STEPS = "MaxStepsExceeded"
TERMINAL_ABORTED = "Aborted"  # service-level addition, set via Session.abort()

DIRECT_FEEDBACK = "No API was invoked. The procedure is not complete yet."


@dataclass(frozen=True)
class GoalPredicate:
    description: str
    check: Callable[[RobotState], bool]


GOAL_REPORT_PRINTED = GoalPredicate(
    description="phase==ReportPrinted",
    check=lambda state: state.phase == Phase.REPORT_PRINTED,
)


@dataclass(frozen=True)
class EngineConfig:
    max_steps: int = 20
    error_threshold: int = 3  # consecutive failed steps
    goal: GoalPredicate = GOAL_REPORT_PRINTED

    def __post_init__(self):
        if self.max_steps < 1:
            raise InvalidInput("max_steps must be >= 1")
        if self.error_threshold < 1:
            raise InvalidInput("error_threshold must be >= 1")


@dataclass(frozen=True)
class RetrievalPlan:
    """Which knowledge classes feed the prompt; the ablation axis."""

    include_apis: bool = True
    include_handbook: bool = True
    api_k: int = 3
    handbook_k: int = 1

    @classmethod
    def from_ablation(cls, ablation: str) -> "RetrievalPlan":
        ablation = ablation.lower()
        if ablation == "none":
            return cls(include_apis=False, include_handbook=False)
        if ablation == "uar":
            return cls(include_apis=True, include_handbook=False)
        if ablation in ("uar+rhr", "full"):
            return cls(include_apis=True, include_handbook=True)
        raise InvalidInput(f"unknown ablation {ablation!r}")


@dataclass
class CycleStep:
    index: int  # 1-based, strictly increasing
    turn_text: str
    thought: str
    outcome: ParseOutcome | None  # None when the backend itself failed
    observation_in: Observation | None = None
    action_result: Observation | None = None
    backend_error: str | None = None

    def failed(self) -> bool:
        if self.backend_error is not None:
            return True
        if isinstance(self.outcome, Malformed):
            return True
        if isinstance(self.outcome, Call):
            return self.action_result is None or not self.action_result.ok
        return False

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "turn_text": self.turn_text,
            "thought": self.thought,
            "outcome": outcome_to_dict(self.outcome) if self.outcome is not None else None,
            "observation_in": self.observation_in.to_dict() if self.observation_in else None,
            "action_result": self.action_result.to_dict() if self.action_result else None,
            "backend_error": self.backend_error,
        }


@dataclass
class SessionTranscript:
    instruction: str
    retrieved_api_names: tuple[str, ...]
    retrieved_procedure_ids: tuple[str, ...]
    prompt: AssembledPrompt
    goal_description: str
    seed: int
    retrieved_api_scores: tuple[float, ...] = ()
    retrieved_procedure_scores: tuple[float, ...] = ()
    steps: list[CycleStep] = field(default_factory=list)
    terminal: str | None = None
    # (steps completed at injection time, fault); replay re-queues these
    injected_faults: list[tuple[int, FaultSpec]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "instruction": self.instruction,
            "retrieval": {
                "api_names": list(self.retrieved_api_names),
                "api_scores": list(self.retrieved_api_scores),
                "procedure_ids": list(self.retrieved_procedure_ids),
                "procedure_scores": list(self.retrieved_procedure_scores),
            },
            "prompt": {
                "system_text": self.prompt.system_text,
                "user_text": self.prompt.user_text,
                "included_api_names": list(self.prompt.included_api_names),
                "included_procedure_ids": list(self.prompt.included_procedure_ids),
            },
            "steps": [s.to_dict() for s in self.steps],
            "terminal": self.terminal,
            "goal": self.goal_description,
            "seed": self.seed,
            "injected_faults": [
                {"after_step": n, "fault": f.to_dict()} for n, f in self.injected_faults
            ],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, ensure_ascii=False)


class Session:
    """One live execution session; advance with ``step`` or ``run_to_completion``."""

    def __init__(
        self,
        transcript: SessionTranscript,
        conversation: Conversation,
        robot: UltrasoundRobot,
        backend: Backend,
        registry: Sequence[ApiSpec],
        config: EngineConfig,
        generation: GenerationConfig | None = None,
    ):
        self.transcript = transcript
        self.conversation = conversation
        self.robot = robot
        self.backend = backend
        self.registry = tuple(registry)
        self.config = config
        self.generation = generation or GenerationConfig()
        self.consecutive_failures = 0
        self._last_observation: Observation | None = None

    @property
    def closed(self) -> bool:
        return self.transcript.terminal is not None

    def abort(self) -> None:
        if self.closed:
            raise SessionClosed("session already ended")
        self.transcript.terminal = TERMINAL_ABORTED

    def inject_fault(self, fault: FaultSpec) -> None:
        """Queue a robot fault, recording it for transcript replay."""
        if self.closed:
            raise SessionClosed("session already ended")
        self.transcript.injected_faults.append((len(self.transcript.steps), fault))
        self.robot.inject_fault(fault)

    def step(self) -> CycleStep:
        """Run one observe-think-act cycle; errors are fed back, not raised."""
        if self.closed:
            raise SessionClosed("session already ended")
        index = len(self.transcript.steps) + 1
        step = CycleStep(
            index=index,
            turn_text="",
            thought="",
            outcome=None,
            observation_in=self._last_observation,
        )
        try:
            turn = self.backend.generate(self.conversation, self.generation)
        except (ScriptExhausted, NoApisListed, BackendUnavailable, RemoteError) as exc:
            step.backend_error = f"{type(exc).__name__}: {exc}"
            self._register_failure()
            self.transcript.steps.append(step)
            self._check_terminal(step)
            return step
        step.turn_text = turn
        outcome = extract_tool_call(turn)
        step.outcome = outcome
        self.conversation.append("assistant", turn)
        if isinstance(outcome, Call):
            step.thought = outcome.surrounding_text
            step.action_result = self._act(outcome)
            self.conversation.append("observation", step.action_result.render())
            self._last_observation = step.action_result
            if step.action_result.ok:
                self.consecutive_failures = 0
            else:
                self.consecutive_failures += 1
        elif isinstance(outcome, Direct):
            step.thought = outcome.text
            self.conversation.append("observation", DIRECT_FEEDBACK)
        elif isinstance(outcome, Refusal):
            step.thought = outcome.text
        else:  # Malformed
            step.thought = turn
            feedback = f"ERROR parser: {outcome.reason.value}: {outcome.detail}"
            self.conversation.append("observation", feedback)
            self._register_failure()
        self.transcript.steps.append(step)
        self._check_terminal(step)
        return step

    def run_to_completion(self) -> SessionTranscript:
        while not self.closed:
            self.step()
        return self.transcript

    def _act(self, call_outcome: Call) -> Observation:
        try:
            validated = validate_call(call_outcome.request, self.registry)
        except CallValidationError as exc:
            return Observation(
                ok=False,
                api_name=call_outcome.request.api_name,
                message=str(exc),
                state_after=self.robot.state.phase,
            )
        return self.robot.invoke(validated)

    def _register_failure(self) -> None:
        self.consecutive_failures += 1

    def _check_terminal(self, step: CycleStep) -> None:
        if isinstance(step.outcome, Refusal):
            self.transcript.terminal = TERMINAL_REFUSED
        elif self.config.goal.check(self.robot.state):
            self.transcript.terminal = TERMINAL_COMPLETED
        elif self.consecutive_failures >= self.config.error_threshold:
            self.transcript.terminal = TERMINAL_ERROR_THRESHOLD
        elif len(self.transcript.steps) >= self.config.max_steps:
            self.transcript.terminal = TERMINAL_MAX_STEPS


def start_session(
    instruction: str,
    index: KnowledgeIndex | None,
    registry: Sequence[ApiSpec],
    backend: Backend,
    robot: UltrasoundRobot,
    config: EngineConfig | None = None,
    retrieval: RetrievalPlan | None = None,
    template: PromptTemplate | None = None,
    generation: GenerationConfig | None = None,
) -> Session:
    """Retrieve knowledge, assemble the prompt, and open a session."""
    if not instruction or not instruction.strip():
        raise InvalidInput("instruction must be non-empty")
    config = config or EngineConfig()
    retrieval = retrieval or RetrievalPlan()
    registry = tuple(registry)
    by_name = {s.name: s for s in registry}
    api_specs: list[ApiSpec] = []
    api_scores: list[float] = []
    procedure_ids: tuple[str, ...] = ()
    procedure_scores: tuple[float, ...] = ()
    handbook: HandbookEntry | None = None
    if retrieval.include_apis:
        if index is None:
            raise InvalidInput("API retrieval requested but no index provided")
        hits = retrieve_top_k(index, instruction, retrieval.api_k, kind_filter="api-usage")
        seen: set[str] = set()
        for hit in hits.ranked:
            payload = hit.payload
            assert isinstance(payload, ApiUsageRecord)
            name = payload.api_name
            if name in by_name and name not in seen:
                seen.add(name)
                api_specs.append(by_name[name])
                api_scores.append(hit.score)
    if retrieval.include_handbook:
        if index is None:
            raise InvalidInput("handbook retrieval requested but no index provided")
        hits = retrieve_top_k(index, instruction, retrieval.handbook_k, kind_filter="handbook")
        first = hits.ranked[0].payload
        assert isinstance(first, HandbookEntry)
        handbook = first
        procedure_ids = (handbook.procedure_id,)
        procedure_scores = (hits.ranked[0].score,)
    prompt = assemble_prompt(instruction, api_specs, handbook, template)
    conversation = Conversation()
    conversation.append("system", prompt.system_text)
    conversation.append("user", prompt.user_text)
    transcript = SessionTranscript(
        instruction=instruction,
        retrieved_api_names=tuple(s.name for s in api_specs),
        retrieved_procedure_ids=procedure_ids,
        prompt=prompt,
        goal_description=config.goal.description,
        seed=robot.state.rng_seed,
        retrieved_api_scores=tuple(api_scores),
        retrieved_procedure_scores=procedure_scores,
        steps=[],
        terminal=None,
    )
    return Session(
        transcript=transcript,
        conversation=conversation,
        robot=robot,
        backend=backend,
        registry=registry,
        config=config,
        generation=generation,
    )


def replay_action_results(
    transcript: SessionTranscript | dict, registry: Sequence[ApiSpec]
) -> list[dict | None]:
    """Re-run a closed transcript's turns against a fresh robot.

    Returns the replayed action results as dicts, positionally matching the
    transcript's steps; with the same seed they are byte-identical to the
    recorded ones.
    """
    data = transcript.to_dict() if isinstance(transcript, SessionTranscript) else transcript
    robot = UltrasoundRobot(seed=data["seed"])
    faults_by_position: dict[int, list[FaultSpec]] = {}
    for item in data.get("injected_faults", []):
        faults_by_position.setdefault(item["after_step"], []).append(
            FaultSpec.from_dict(item["fault"])
        )
    results: list[dict | None] = []
    for position, step in enumerate(data["steps"]):
        for fault in faults_by_position.get(position, []):
            robot.inject_fault(fault)
        turn = step["turn_text"]
        if step.get("backend_error"):
            results.append(None)
            continue
        outcome = extract_tool_call(turn)
        if not isinstance(outcome, Call):
            results.append(None)
            continue
        try:
            validated = validate_call(outcome.request, registry)
        except CallValidationError as exc:
            results.append(
                Observation(
                    ok=False,
                    api_name=outcome.request.api_name,
                    message=str(exc),
                    state_after=robot.state.phase,
                ).to_dict()
            )
            continue
        results.append(robot.invoke(validated).to_dict())
    return results
