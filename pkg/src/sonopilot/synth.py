"""Synthetic dataset generation for the evaluation harness.

Usage narratives and paired instructions are composed from template banks
(opener x closer x target x API), shuffled deterministically by seed.
Evaluation queries come from disjoint opener banks, so a query paraphrase
is never identical to any index text.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import HANDBOOK_STEP_SENTENCE, default_registry
from .errors import InsufficientTemplates, InvalidInput
from .knowledge import (
    ApiSpec,
    ApiUsageRecord,
    HandbookEntry,
    handbook_key,
    save_handbook_entries,
    save_usage_records,
    usage_key,
    write_jsonl,
)

TARGET_NOUNS = {"carotid": "carotid artery", "spine": "spine", "rib": "rib cage"}

USAGE_OPENERS = (
    "Use this call when",
    "Invoke this API when",
    "This operation applies when",
    "Reach for this function when",
    "This endpoint is the right choice when",
    "Pick this API whenever",
    "This routine is meant for situations where",
    "Select this call once",
)

USAGE_QUERY_OPENERS = (
    "Which API fits when",
    "What should be called when",
    "I need the right call when",
    "Find the API for the case where",
    "Tell me what to invoke when",
    "Looking for the operation to use when",
)

USAGE_CLOSERS = (
    "",
    " during a routine screening",
    " as part of the scripted workflow",
    " before the procedure can move on",
    " at the operator's request",
    " in a standard examination",
)

# Mid-sentence action descriptions, one per API; {noun} is the target noun.
USAGE_ACTIONS = {
    "Init_Depth_Camera": "the depth camera must come online before a {noun} examination",
    "Display_Artery_Model": "the operator wants the anatomical model shown for a {noun} study",
    "Activate_Robot": "the robotic arm has to be powered for a {noun} session",
    "Start_Scan": "the probe should sweep the {noun} and acquire an image",
    "Image_Seg": "the acquired {noun} image needs its vessel region isolated",
    "Generate_Report": "the {noun} findings must be compiled into a report",
    "Print_Report": "the finished {noun} report has to reach the printer",
}

INSTRUCTION_OPENERS = (
    "Perform",
    "Please perform",
    "Carry out",
    "Run",
    "Begin",
    "Start",
    "Conduct",
    "Execute",
    "Proceed with",
    "Initiate",
    "Complete",
    "Undertake",
    "Handle",
    "Set up and run",
    "Go ahead with",
)

INSTRUCTION_QUERY_OPENERS = (
    "I need you to do",
    "Could you take care of",
    "The doctor asks for",
    "We are ready for",
    "Kindly arrange",
    "Time to get going with",
)

INSTRUCTION_FORMS = (
    "a {noun} ultrasound scan",
    "an ultrasound scan of the {noun}",
    "the {noun} scanning procedure",
    "a {noun} examination with the probe",
    "the standard {noun} ultrasound workup",
    "a full {noun} sweep",
    "the {noun} imaging routine",
    "an automated {noun} scan",
    "a {noun} ultrasound study",
    "the robotic {noun} scan",
    "a {noun} probe pass",
    "the scheduled {noun} ultrasound",
)


@dataclass(frozen=True)
class SynthDatasetSpec:
    seed: int = 0
    n_handbook: int = 522
    n_api: int = 622


@dataclass(frozen=True)
class SynthDataset:
    usage_records: tuple[ApiUsageRecord, ...]
    handbook_entries: tuple[HandbookEntry, ...]
    # (query, gold_key, kind) triples; kind is "api-usage" or "handbook"
    eval_pairs: tuple[tuple[str, str, str], ...]


def _usage_combos(registry: Sequence[ApiSpec]) -> list[tuple[str, str, int, int]]:
    return [
        (api.name, target, i_open, i_close)
        for api in registry
        for target in TARGET_NOUNS
        for i_open in range(len(USAGE_OPENERS))
        for i_close in range(len(USAGE_CLOSERS))
    ]


def _handbook_combos() -> list[tuple[str, int, int]]:
    return [
        (target, i_open, i_form)
        for target in TARGET_NOUNS
        for i_open in range(len(INSTRUCTION_OPENERS))
        for i_form in range(len(INSTRUCTION_FORMS))
    ]


def synth_dataset(spec: SynthDatasetSpec, registry: Sequence[ApiSpec] | None = None) -> SynthDataset:
    """Generate records, handbook entries, and held-out eval pairs."""
    registry = list(registry) if registry is not None else default_registry()
    if spec.n_api < 1 or spec.n_handbook < 1:
        raise InvalidInput("dataset sizes must be >= 1")
    usage_combos = _usage_combos(registry)
    if spec.n_api > len(usage_combos):
        raise InsufficientTemplates(
            f"usage template bank supports {len(usage_combos)} records, requested {spec.n_api}"
        )
    handbook_combos = _handbook_combos()
    if spec.n_handbook > len(handbook_combos):
        raise InsufficientTemplates(
            f"handbook template bank supports {len(handbook_combos)} entries, "
            f"requested {spec.n_handbook}"
        )
    rng = np.random.default_rng(spec.seed)
    usage_pick = [usage_combos[i] for i in rng.permutation(len(usage_combos))[: spec.n_api]]
    handbook_pick = [
        handbook_combos[i] for i in rng.permutation(len(handbook_combos))[: spec.n_handbook]
    ]

    usage_records: list[ApiUsageRecord] = []
    eval_pairs: list[tuple[str, str, str]] = []
    per_api: dict[str, int] = {}
    for api_name, target, i_open, i_close in usage_pick:
        noun = TARGET_NOUNS[target]
        action = USAGE_ACTIONS[api_name].format(noun=noun)
        narrative = f"{USAGE_OPENERS[i_open]} {action}{USAGE_CLOSERS[i_close]}."
        ordinal = per_api.get(api_name, 0)
        per_api[api_name] = ordinal + 1
        usage_records.append(ApiUsageRecord(api_name=api_name, usage_narrative=narrative))
        query_opener = USAGE_QUERY_OPENERS[(i_open + i_close) % len(USAGE_QUERY_OPENERS)]
        query = f"{query_opener} {action}{USAGE_CLOSERS[i_close]}?"
        eval_pairs.append((query, usage_key(api_name, ordinal), "api-usage"))

    handbook_entries: list[HandbookEntry] = []
    for serial, (target, i_open, i_form) in enumerate(handbook_pick):
        noun = TARGET_NOUNS[target]
        form = INSTRUCTION_FORMS[i_form].format(noun=noun)
        instruction = f"{INSTRUCTION_OPENERS[i_open]} {form}"
        procedure_id = f"{target}-{serial:04d}"
        handbook_entries.append(
            HandbookEntry(
                procedure_id=procedure_id,
                paired_instruction=instruction,
                handbook_text=f"{noun.capitalize()} ultrasound workflow. {HANDBOOK_STEP_SENTENCE}",
            )
        )
        query_opener = INSTRUCTION_QUERY_OPENERS[(i_open + i_form) % len(INSTRUCTION_QUERY_OPENERS)]
        eval_pairs.append((f"{query_opener} {form}", handbook_key(procedure_id), "handbook"))

    return SynthDataset(
        usage_records=tuple(usage_records),
        handbook_entries=tuple(handbook_entries),
        eval_pairs=tuple(eval_pairs),
    )


def write_dataset(dataset: SynthDataset, out_dir: str | Path) -> dict[str, Path]:
    """Write api_usage.jsonl, handbook.jsonl, and eval_pairs.jsonl."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "api_usage": out / "api_usage.jsonl",
        "handbook": out / "handbook.jsonl",
        "eval_pairs": out / "eval_pairs.jsonl",
    }
    save_usage_records(paths["api_usage"], dataset.usage_records)
    save_handbook_entries(paths["handbook"], dataset.handbook_entries)
    write_jsonl(
        paths["eval_pairs"],
        ({"query": q, "gold_key": g, "kind": k} for q, g, k in dataset.eval_pairs),
    )
    return paths
