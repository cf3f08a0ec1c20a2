"""Domain-knowledge index: API usage narratives and handbook entries.

The index embeds one text per entry (the usage narrative for API entries,
the paired instruction for handbook entries) and serves exact cosine
top-k retrieval over a flat matrix. Indexes are immutable after build.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .embedding import Embedder, cosine_similarity, embed_text
from .errors import DuplicateApi, EmptyIndex, InvalidInput, UnknownGoldKey, ZeroVector

PARAM_KINDS = ("real", "real-pair", "integer", "text", "boolean", "enum")

EntryKind = Literal["api-usage", "handbook"]


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    description: str = ""
    required: bool = True
    values: tuple[str, ...] | None = None  # enum kinds only

    def __post_init__(self):
        if self.kind not in PARAM_KINDS:
            raise InvalidInput(f"unknown parameter kind {self.kind!r}")
        if self.kind == "enum" and not self.values:
            raise InvalidInput(f"enum parameter {self.name!r} needs values")

    def kind_label(self) -> str:
        if self.kind == "enum":
            return "enum: " + "|".join(self.values or ())
        return self.kind


@dataclass(frozen=True)
class ApiSpec:
    name: str
    description: str
    parameters: tuple[ParamSpec, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise InvalidInput("API name must be non-empty")
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise InvalidInput(f"duplicate parameter names in {self.name}")

    def param(self, name: str) -> ParamSpec | None:
        for p in self.parameters:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class ApiUsageRecord:
    api_name: str
    usage_narrative: str


@dataclass(frozen=True)
class HandbookEntry:
    procedure_id: str
    paired_instruction: str  # the query side, embedded into the index
    handbook_text: str  # the ordered procedure description, returned on hit

    def __post_init__(self):
        if not self.paired_instruction or not self.handbook_text:
            raise InvalidInput("handbook entries need instruction and text")


@dataclass(frozen=True)
class IndexEntry:
    key: str
    kind: EntryKind
    payload: ApiUsageRecord | HandbookEntry

    def index_text(self) -> str:
        if isinstance(self.payload, ApiUsageRecord):
            return self.payload.usage_narrative
        return self.payload.paired_instruction


@dataclass(frozen=True)
class RankedHit:
    key: str
    kind: EntryKind
    score: float
    payload: ApiUsageRecord | HandbookEntry


@dataclass(frozen=True)
class RetrievalResult:
    ranked: tuple[RankedHit, ...]

    def keys(self) -> list[str]:
        return [h.key for h in self.ranked]


@dataclass(frozen=True)
class KnowledgeIndex:
    """Immutable flat index; ``vectors[i]`` embeds ``entries[i].index_text()``."""

    embedder: Embedder
    entries: tuple[IndexEntry, ...]
    vectors: np.ndarray = field(repr=False)  # shape (n, dimension)

    @property
    def dimension(self) -> int:
        return self.embedder.dimension

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: str) -> bool:
        return any(e.key == key for e in self.entries)


def build_index(
    embedder: Embedder,
    usage_records: Sequence[ApiUsageRecord] = (),
    handbook_entries: Sequence[HandbookEntry] = (),
) -> KnowledgeIndex:
    """Embed all records into a new index.

    Keys are assigned deterministically: ``usage:<api_name>:<ordinal>`` in
    input order (ordinal counted per API name), and ``hb:<procedure_id>``.
    """
    entries: list[IndexEntry] = []
    per_api: dict[str, int] = {}
    for rec in usage_records:
        ordinal = per_api.get(rec.api_name, 0)
        per_api[rec.api_name] = ordinal + 1
        entries.append(IndexEntry(usage_key(rec.api_name, ordinal), "api-usage", rec))
    for hb in handbook_entries:
        entries.append(IndexEntry(handbook_key(hb.procedure_id), "handbook", hb))
    keys = [e.key for e in entries]
    if len(set(keys)) != len(keys):
        raise InvalidInput("index keys are not unique")
    if entries:
        vectors = np.stack([embed_text(e.index_text(), embedder) for e in entries])
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms == 0.0):
            raise ZeroVector("an index entry embedded to a zero vector")
    else:
        vectors = np.zeros((0, embedder.dimension), dtype=np.float64)
    return KnowledgeIndex(embedder=embedder, entries=tuple(entries), vectors=vectors)


def usage_key(api_name: str, ordinal: int) -> str:
    return f"usage:{api_name}:{ordinal:04d}"


def handbook_key(procedure_id: str) -> str:
    return f"hb:{procedure_id}"


def retrieve_top_k_vector(
    index: KnowledgeIndex,
    query_vector: np.ndarray,
    k: int,
    kind_filter: EntryKind | None = None,
) -> RetrievalResult:
    """Exact top-k by cosine similarity; ties broken by ascending key."""
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    mask = [kind_filter is None or e.kind == kind_filter for e in index.entries]
    if not any(mask):
        raise EmptyIndex("no index entries match the requested kind")
    q = np.ascontiguousarray(query_vector, dtype=np.float64)
    qnorm = float(np.linalg.norm(q))
    if qnorm == 0.0:
        raise ZeroVector("query embedded to a zero vector")
    # score each row with the same dot/norm arithmetic as cosine_similarity,
    # so ranking ties are bit-reproducible against pairwise scoring
    scored = []
    for i in range(len(index.entries)):
        if not mask[i]:
            continue
        row = index.vectors[i]
        score = float(np.dot(row, q)) / (float(np.linalg.norm(row)) * qnorm)
        scored.append((score, index.entries[i]))
    scored.sort(key=lambda t: (-t[0], t[1].key))
    hits = tuple(
        RankedHit(key=e.key, kind=e.kind, score=s, payload=e.payload)
        for s, e in scored[:k]
    )
    return RetrievalResult(ranked=hits)


def retrieve_top_k(
    index: KnowledgeIndex,
    query_text: str,
    k: int,
    kind_filter: EntryKind | None = None,
) -> RetrievalResult:
    return retrieve_top_k_vector(index, embed_text(query_text, index.embedder), k, kind_filter)


def recall_at_k(
    index: KnowledgeIndex,
    eval_pairs: Sequence[tuple[str, str]],
    k: int,
    kind_filter: EntryKind | None = None,
) -> float:
    """Fraction of (query, gold_key) pairs whose gold lands in the top k."""
    if not eval_pairs:
        raise InvalidInput("eval_pairs must be non-empty")
    known = {e.key for e in index.entries}
    for _, gold in eval_pairs:
        if gold not in known:
            raise UnknownGoldKey(f"gold key {gold!r} not present in index")
    hits = 0
    for query, gold in eval_pairs:
        result = retrieve_top_k(index, query, k, kind_filter)
        if gold in result.keys():
            hits += 1
    return hits / len(eval_pairs)


# --- dataset files (UTF-8 JSON lines) ---------------------------------------


def read_jsonl(path: str | Path) -> Iterable[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def param_spec_to_dict(p: ParamSpec) -> dict:
    d = {"name": p.name, "kind": p.kind, "description": p.description, "required": p.required}
    if p.values is not None:
        d["values"] = list(p.values)
    return d


def api_spec_to_dict(spec: ApiSpec) -> dict:
    return {
        "name": spec.name,
        "description": spec.description,
        "parameters": [param_spec_to_dict(p) for p in spec.parameters],
    }


def api_spec_from_dict(d: dict) -> ApiSpec:
    params = tuple(
        ParamSpec(
            name=p["name"],
            kind=p["kind"],
            description=p.get("description", ""),
            required=p.get("required", True),
            values=tuple(p["values"]) if "values" in p else None,
        )
        for p in d.get("parameters", [])
    )
    return ApiSpec(name=d["name"], description=d.get("description", ""), parameters=params)


def load_api_specs(path: str | Path) -> list[ApiSpec]:
    specs = [api_spec_from_dict(d) for d in read_jsonl(path)]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise DuplicateApi(f"duplicate API names in {path}")
    return specs


def save_api_specs(path: str | Path, specs: Sequence[ApiSpec]) -> None:
    write_jsonl(path, (api_spec_to_dict(s) for s in specs))


def load_usage_records(path: str | Path) -> list[ApiUsageRecord]:
    return [
        ApiUsageRecord(api_name=d["api_name"], usage_narrative=d["usage_narrative"])
        for d in read_jsonl(path)
    ]


def save_usage_records(path: str | Path, records: Sequence[ApiUsageRecord]) -> None:
    write_jsonl(
        path,
        ({"api_name": r.api_name, "usage_narrative": r.usage_narrative} for r in records),
    )


def load_handbook_entries(path: str | Path) -> list[HandbookEntry]:
    return [
        HandbookEntry(
            procedure_id=d["procedure_id"],
            paired_instruction=d["paired_instruction"],
            handbook_text=d["handbook_text"],
        )
        for d in read_jsonl(path)
    ]


def save_handbook_entries(path: str | Path, entries: Sequence[HandbookEntry]) -> None:
    write_jsonl(
        path,
        (
            {
                "procedure_id": e.procedure_id,
                "paired_instruction": e.paired_instruction,
                "handbook_text": e.handbook_text,
            }
            for e in entries
        ),
    )


__all__ = [
    "ApiSpec",
    "ParamSpec",
    "ApiUsageRecord",
    "HandbookEntry",
    "IndexEntry",
    "KnowledgeIndex",
    "RankedHit",
    "RetrievalResult",
    "build_index",
    "usage_key",
    "handbook_key",
    "retrieve_top_k",
    "retrieve_top_k_vector",
    "recall_at_k",
    "cosine_similarity",
    "embed_text",
    "read_jsonl",
    "write_jsonl",
    "load_api_specs",
    "save_api_specs",
    "load_usage_records",
    "save_usage_records",
    "load_handbook_entries",
    "save_handbook_entries",
    "api_spec_to_dict",
    "api_spec_from_dict",
]
