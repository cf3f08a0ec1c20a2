"""sonopilot: a tool-calling agent engine for a simulated ultrasound robot.

Pipeline: domain-knowledge retrieval feeds a system prompt; a backend
produces turns under a strict sentinel call protocol; validated calls run
against a precondition-enforcing robot simulator inside an
observe-think-act loop; the harness measures retrieval recall and
execution success.
"""

from .backends import (
    Conversation,
    GenerationConfig,
    RemoteBackend,
    RulePolicyBackend,
    ScriptedBackend,
    rule_policy_next,
)
from .corpus import build_default_index, default_registry
from .embedding import HashEmbedder, RemoteEmbedder, cosine_similarity, embed_text
from .engine import (
    EngineConfig,
    GoalPredicate,
    RetrievalPlan,
    Session,
    SessionTranscript,
    replay_action_results,
    start_session,
)
from .evaluation import ExecMetrics, eval_execution, eval_retrieval
from .knowledge import (
    ApiSpec,
    ApiUsageRecord,
    HandbookEntry,
    KnowledgeIndex,
    ParamSpec,
    RetrievalResult,
    build_index,
    recall_at_k,
    retrieve_top_k,
)
from .prompts import AssembledPrompt, PromptTemplate, assemble_prompt, render_api_list
from .robot import (
    FaultSpec,
    Observation,
    Phase,
    RobotState,
    ScanImage,
    SegmentationResult,
    UltrasoundRobot,
    make_scan_image,
    segment,
)
from .synth import SynthDatasetSpec, synth_dataset, write_dataset
from .toolcalls import (
    Call,
    Direct,
    Malformed,
    MalformedReason,
    ParseOutcome,
    Refusal,
    ToolCallRequest,
    ValidatedCall,
    extract_tool_call,
    to_wire,
    validate_call,
)

__version__ = "0.1.0"
