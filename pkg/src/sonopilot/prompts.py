"""Assembles the assistant system prompt from retrieved knowledge.

Templates are data: a UTF-8 text file with ``{{api_list}}`` and
``{{handbook}}`` placeholders, each appearing exactly once. The template
must spell out the call protocol (sentinel markers, the two JSON fields,
and the one-call-per-turn rule) so that every assembled prompt carries it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .errors import DuplicateApi, InvalidInput, MalformedTemplate
from .knowledge import ApiSpec, HandbookEntry

API_LIST_SLOT = "{{api_list}}"
HANDBOOK_SLOT = "{{handbook}}"

START_SENTINEL = "<|sot|>"
END_SENTINEL = "<|eot|>"
ONE_CALL_RULE = "Invoke at most one API per turn."

NO_HANDBOOK_LINE = "No procedure guidance was retrieved for this request."
NO_APIS_LINE = "No APIs were retrieved for this request."

_REQUIRED_FRAGMENTS = (START_SENTINEL, END_SENTINEL, '"api_name"', '"parameters"', ONE_CALL_RULE)


@dataclass(frozen=True)
class PromptTemplate:
    """Validated prompt template text with both placeholders."""

    text: str
    api_list_slot: str = API_LIST_SLOT
    handbook_slot: str = HANDBOOK_SLOT

    def __post_init__(self):
        for slot in (self.api_list_slot, self.handbook_slot):
            n = self.text.count(slot)
            if n != 1:
                raise MalformedTemplate(f"placeholder {slot} appears {n} times, expected 1")
        for fragment in _REQUIRED_FRAGMENTS:
            if fragment not in self.text:
                raise MalformedTemplate(f"template is missing the protocol fragment {fragment!r}")

    def section(self, header: str) -> str | None:
        """Return the body of a ``## header`` section, or None when absent."""
        return extract_section(self.text, header)


@dataclass(frozen=True)
class AssembledPrompt:
    system_text: str
    user_text: str
    included_api_names: tuple[str, ...] = ()
    included_procedure_ids: tuple[str, ...] = ()


def load_template(path: str | Path) -> PromptTemplate:
    return PromptTemplate(text=Path(path).read_text(encoding="utf-8"))


def default_template() -> PromptTemplate:
    text = resources.files("sonopilot.data").joinpath("default_template.txt").read_text("utf-8")
    return PromptTemplate(text=text)


def render_api_list(specs: Sequence[ApiSpec]) -> str:
    """One block per spec, in input order, byte-stable across runs."""
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise DuplicateApi(f"duplicate API names: {sorted(names)}")
    blocks = []
    for spec in specs:
        lines = [f"Name: {spec.name}", f"Description: {spec.description}"]
        if spec.parameters:
            lines.append("Parameters:")
            for p in spec.parameters:
                suffix = "" if p.required else " (optional)"
                lines.append(f"  - {p.name} ({p.kind_label()}): {p.description}{suffix}")
        else:
            lines.append("Parameters: (none)")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def assemble_prompt(
    instruction: str,
    apis: Sequence[ApiSpec],
    handbook: HandbookEntry | None = None,
    template: PromptTemplate | None = None,
) -> AssembledPrompt:
    """Fill the template with the retrieved APIs and handbook text.

    The doctor's instruction is never altered; it is returned verbatim as
    the user turn. An empty API sequence renders a fixed placeholder line.
    """
    if not instruction or not instruction.strip():
        raise InvalidInput("instruction must be non-empty")
    template = template or default_template()
    api_block = render_api_list(apis) if apis else NO_APIS_LINE
    handbook_block = handbook.handbook_text if handbook is not None else NO_HANDBOOK_LINE
    system_text = template.text.replace(template.api_list_slot, api_block).replace(
        template.handbook_slot, handbook_block
    )
    return AssembledPrompt(
        system_text=system_text,
        user_text=instruction,
        included_api_names=tuple(s.name for s in apis),
        included_procedure_ids=(handbook.procedure_id,) if handbook is not None else (),
    )


def extract_section(text: str, header: str) -> str | None:
    """Body of a markdown-ish ``## header`` section; None when the header is absent."""
    marker = f"## {header}"
    lines = text.splitlines()
    try:
        start = next(i for i, ln in enumerate(lines) if ln.strip() == marker)
    except StopIteration:
        return None
    body: list[str] = []
    for ln in lines[start + 1 :]:
        if ln.startswith("## "):
            break
        body.append(ln)
    return "\n".join(body).strip()


def listed_api_names(system_text: str) -> list[str]:
    """Names from the rendered APIs List section, in listed order."""
    section = extract_section(system_text, "APIs List")
    if section is None:
        return []
    return [ln[len("Name: ") :].strip() for ln in section.splitlines() if ln.startswith("Name: ")]


def guidance_text(system_text: str) -> str | None:
    """Procedure guidance body, or None when absent or the placeholder line."""
    section = extract_section(system_text, "Procedure Guidance")
    if section is None or section == NO_HANDBOOK_LINE or not section:
        return None
    return section
