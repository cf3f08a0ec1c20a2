"""Deterministic text embedders and cosine similarity.

Two embedders ship with the package: a feature-hash embedder used by tests
and the evaluation harness (no model weights, fully deterministic), and a
client for a remote embedding service for real deployments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import BackendUnavailable, DimensionMismatch, InvalidInput, RemoteError, ZeroVector

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash: h = offset; for each byte: h ^= b; h *= prime (mod 2^64)."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


class Embedder(Protocol):
    """Deterministic text-to-vector map with a fixed output dimension."""

    dimension: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]: ...


@dataclass(frozen=True)
class HashEmbedder:
    """Feature-hash embedder.

    Tokenization lowercases the text and takes ASCII alphanumeric runs as
    tokens. Each token is hashed with 64-bit FNV-1a to a bucket in
    ``[0, dimension)``, bucket counts are accumulated, and the count vector
    is L2-normalized. Texts without any alphanumeric token hash the raw
    UTF-8 bytes of the whole text as a single token so that every non-empty
    text maps to a vector with at least one nonzero component.
    """

    dimension: int = 256

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise InvalidInput("cannot embed empty text")
        tokens = _TOKEN_RE.findall(text.lower())
        vec = np.zeros(self.dimension, dtype=np.float64)
        if tokens:
            for tok in tokens:
                vec[fnv1a64(tok.encode("utf-8")) % self.dimension] += 1.0
        else:
            vec[fnv1a64(text.encode("utf-8")) % self.dimension] += 1.0
        return vec / np.linalg.norm(vec)

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


@dataclass
class RemoteEmbedder:
    """Client for an HTTP embedding service.

    Wire format: POST ``{"input": [texts], "model": name}`` to ``endpoint``,
    response ``{"embeddings": [[floats]]}``.
    """

    endpoint: str
    model: str
    dimension: int
    timeout: float = 30.0
    _client: httpx.Client = field(default_factory=httpx.Client, repr=False)

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        for t in texts:
            if not t:
                raise InvalidInput("cannot embed empty text")
        try:
            resp = self._client.post(
                self.endpoint,
                json={"input": list(texts), "model": self.model},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"embedding service unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise RemoteError(resp.status_code, resp.text)
        rows = resp.json()["embeddings"]
        out = []
        for row in rows:
            vec = np.asarray(row, dtype=np.float64)
            if vec.shape != (self.dimension,):
                raise DimensionMismatch(
                    f"service returned dimension {vec.shape}, expected ({self.dimension},)"
                )
            out.append(vec)
        return out


def embed_text(text: str, embedder: Embedder) -> np.ndarray:
    """Embed ``text`` with ``embedder``; identical text yields identical vectors."""
    if not text:
        raise InvalidInput("cannot embed empty text")
    vec = np.asarray(embedder.embed(text), dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != embedder.dimension:
        raise DimensionMismatch(
            f"embedder produced shape {vec.shape}, configured dimension {embedder.dimension}"
        )
    if not np.all(np.isfinite(vec)):
        raise InvalidInput("embedder produced non-finite components")
    return vec


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity (a.b)/(|a||b|); symmetric and scale invariant."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} do not match")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for zero-norm vectors")
    return float(np.dot(a, b)) / (na * nb)
