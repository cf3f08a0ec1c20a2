"""Retrieval and execution-success metrics.

Rates are exact ratios over the replication count; the reported percentage
is the rate times 100 rounded half-up to an integer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .backends import Backend
from .corpus import default_registry
from .engine import (
    EngineConfig,
    RetrievalPlan,
    SessionTranscript,
    TERMINAL_COMPLETED,
    start_session,
)
from .errors import InvalidInput
from .knowledge import ApiSpec, KnowledgeIndex, read_jsonl, recall_at_k
from .prompts import PromptTemplate
from .robot import FaultSpec, UltrasoundRobot
from .toolcalls import Call

DEFAULT_INSTRUCTION = "Perform a carotid artery ultrasound scan"


def percent(successes: int, total: int) -> int:
    """successes/total as a percentage, rounded half-up."""
    if total <= 0:
        raise InvalidInput("total must be positive")
    return (200 * successes + total) // (2 * total)


@dataclass(frozen=True)
class RetrievalRow:
    module: str  # "api-usage" or "handbook"
    k: int
    recall: float
    pairs: int


def load_eval_pairs(path: str | Path) -> list[tuple[str, str, str]]:
    return [(d["query"], d["gold_key"], d.get("kind", "api-usage")) for d in read_jsonl(path)]


def eval_retrieval(
    index: KnowledgeIndex,
    eval_pairs: Sequence[tuple[str, str, str]],
    ks: Sequence[int] = (1, 3, 10),
) -> list[RetrievalRow]:
    """One row per (module, k), computed with the exact recall operation."""
    if not eval_pairs:
        raise InvalidInput("eval_pairs must be non-empty")
    rows: list[RetrievalRow] = []
    for kind in ("api-usage", "handbook"):
        subset = [(q, g) for q, g, knd in eval_pairs if knd == kind]
        if not subset:
            continue
        for k in ks:
            rows.append(
                RetrievalRow(
                    module=kind,
                    k=k,
                    recall=recall_at_k(index, subset, k, kind_filter=kind),  # type: ignore[arg-type]
                    pairs=len(subset),
                )
            )
    return rows


@dataclass(frozen=True)
class ReplicationRecord:
    seed: int
    first_step_ok: bool
    terminal: str
    steps: int


@dataclass
class ExecMetrics:
    replications: int
    records: list[ReplicationRecord] = field(default_factory=list)

    @property
    def first_step_successes(self) -> int:
        return sum(1 for r in self.records if r.first_step_ok)

    @property
    def overall_successes(self) -> int:
        return sum(1 for r in self.records if r.terminal == TERMINAL_COMPLETED)

    @property
    def first_step_rate(self) -> float:
        return self.first_step_successes / self.replications

    @property
    def overall_rate(self) -> float:
        return self.overall_successes / self.replications

    @property
    def first_step_percent(self) -> int:
        return percent(self.first_step_successes, self.replications)

    @property
    def overall_percent(self) -> int:
        return percent(self.overall_successes, self.replications)


def first_step_success(transcript: SessionTranscript) -> bool:
    """True when the first parsed call validated and executed ok."""
    for step in transcript.steps:
        if isinstance(step.outcome, Call):
            return step.action_result is not None and step.action_result.ok
    return False


def eval_execution(
    backend_factory: Callable[[int], Backend],
    index: KnowledgeIndex | None,
    ablation: str = "uar+rhr",
    replications: int = 20,
    base_seed: int = 0,
    instruction: str = DEFAULT_INSTRUCTION,
    registry: Sequence[ApiSpec] | None = None,
    fault: FaultSpec | None = None,
    config: EngineConfig | None = None,
    template: PromptTemplate | None = None,
) -> ExecMetrics:
    """Run ``replications`` sessions with distinct seeds and aggregate.

    ``backend_factory`` receives the replication number so stateful
    backends (scripted) get a fresh cursor per run.
    """
    if replications < 1:
        raise InvalidInput("replications must be >= 1")
    registry = list(registry) if registry is not None else default_registry()
    plan = RetrievalPlan.from_ablation(ablation)
    metrics = ExecMetrics(replications=replications)
    for i in range(replications):
        seed = base_seed + i
        robot = UltrasoundRobot(seed=seed)
        session = start_session(
            instruction,
            index,
            registry,
            backend_factory(i),
            robot,
            config=config,
            retrieval=plan,
            template=template,
        )
        if fault is not None:
            session.inject_fault(fault)
        transcript = session.run_to_completion()
        metrics.records.append(
            ReplicationRecord(
                seed=seed,
                first_step_ok=first_step_success(transcript),
                terminal=transcript.terminal or "",
                steps=len(transcript.steps),
            )
        )
    return metrics
