"""Built-in domain corpus: the API registry plus a compact knowledge base.

The shipped corpus carries one usage narrative per API and one handbook
entry per scan target. It is what the session service and single-run CLI
use out of the box; the evaluation harness synthesizes larger datasets.
"""

from __future__ import annotations

import json
from importlib import resources

from .embedding import Embedder, HashEmbedder
from .knowledge import (
    ApiSpec,
    ApiUsageRecord,
    HandbookEntry,
    KnowledgeIndex,
    api_spec_from_dict,
    build_index,
)

HANDBOOK_STEP_SENTENCE = (
    "The procedure involves initializing the depth camera, displaying the "
    "anatomical model, activating the robotic arm, scanning the target "
    "region, segmenting the scan image, generating the report, and "
    "printing the report."
)

_TARGET_NOUNS = {"carotid": "carotid artery", "spine": "spine", "rib": "rib cage"}


def default_registry() -> list[ApiSpec]:
    text = resources.files("sonopilot.data").joinpath("api_specs.jsonl").read_text("utf-8")
    return [api_spec_from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def default_usage_records() -> list[ApiUsageRecord]:
    return [
        ApiUsageRecord(
            "Init_Depth_Camera",
            "Use this call first in every session: it brings the depth camera "
            "online so the workstation can locate the patient before any "
            "ultrasound scan begins.",
        ),
        ApiUsageRecord(
            "Display_Artery_Model",
            "Use this call to put the anatomical vessel model on the operator "
            "display once the camera is up, giving the doctor a reference view.",
        ),
        ApiUsageRecord(
            "Activate_Robot",
            "Use this call to power the robotic arm and enable motion control "
            "after the model is displayed and before any probe movement.",
        ),
        ApiUsageRecord(
            "Start_Scan",
            "Use this call to sweep the probe over the requested body region, "
            "such as the carotid artery, the spine, or a rib, and acquire the "
            "scan image.",
        ),
        ApiUsageRecord(
            "Image_Seg",
            "Use this call to segment the acquired scan image around a chosen "
            "point, isolating the vessel region for measurement.",
        ),
        ApiUsageRecord(
            "Generate_Report",
            "Use this call to compile the scan and segmentation results into "
            "an examination report once segmentation is done.",
        ),
        ApiUsageRecord(
            "Print_Report",
            "Use this call last to send the finished examination report to the "
            "printer and close out the procedure.",
        ),
    ]


def handbook_text_for(target: str) -> str:
    noun = _TARGET_NOUNS[target]
    return f"{noun.capitalize()} ultrasound workflow. {HANDBOOK_STEP_SENTENCE}"


def default_handbook_entries() -> list[HandbookEntry]:
    return [
        HandbookEntry(
            procedure_id=f"{target}-standard",
            paired_instruction=f"Perform a {_TARGET_NOUNS[target]} ultrasound scan",
            handbook_text=handbook_text_for(target),
        )
        for target in _TARGET_NOUNS
    ]


def build_default_index(embedder: Embedder | None = None) -> KnowledgeIndex:
    embedder = embedder or HashEmbedder()
    return build_index(
        embedder,
        usage_records=default_usage_records(),
        handbook_entries=default_handbook_entries(),
    )
