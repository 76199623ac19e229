"""Frozen base embeddings: external endpoint client, persistent cache,
and cosine primitives.

The retriever never trains the backbone; it only consumes these vectors.
Texts are whitespace-normalized (no case folding) before hashing so cache
keys ignore transport noise but respect content.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx
import numpy as np

from .errors import DomainError, GatewayError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 64


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int
    source: str = "base"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != self.dim:
            raise ValidationError(
                f"vector length {len(self.values)} != declared dim {self.dim}")
        if self.source not in ("base", "projected"):
            raise ValidationError(f"unknown embedding source {self.source!r}")
        if not all(math.isfinite(v) for v in self.values):
            raise ValidationError("embedding contains non-finite entries")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    @classmethod
    def from_array(cls, arr, source: str = "base") -> "EmbeddingVector":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(values=tuple(arr.tolist()), dim=arr.shape[0], source=source)


def normalize_text(text: str) -> str:
    """Collapse internal whitespace and trim; casing is preserved."""
    return " ".join(text.split())


def cache_key(model: str, text: str) -> str:
    payload = f"{model}\0{normalize_text(text)}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise ValidationError(f"dim mismatch: {a.dim} vs {b.dim}")
    va, vb = a.array, b.array
    na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise DomainError("cosine undefined for zero-norm vector")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


class EmbeddingCache:
    """Append-only JSONL store of (key, dim, values) with an in-memory index.

    Reads are lock-free against the index; writes are serialized. Reopening
    the file replays all records, so partial runs resume without refetching.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._index: dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                self._index[rec["key"]] = EmbeddingVector(
                    values=tuple(rec["values"]), dim=rec["dim"], source="base")

    def __len__(self) -> int:
        return len(self._index)

    def get(self, key: str) -> EmbeddingVector | None:
        return self._index.get(key)

    def put(self, key: str, vector: EmbeddingVector) -> None:
        with self._lock:
            if key in self._index:
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            rec = {"key": key, "dim": vector.dim, "values": list(vector.values)}
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec) + "\n")
            self._index[key] = vector


class HttpEmbeddingClient:
    """Embeddings endpoint speaking {model, input: [...]} -> {data: [...]}."""

    def __init__(self, base_url: str, model: str, dim: int,
                 api_key_env: str = "EMBEDDING_API_KEY",
                 chunk_size: int = DEFAULT_CHUNK_SIZE, timeout_s: float = 60.0,
                 max_attempts: int = 3, backoff_base_s: float = 1.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.chunk_size = chunk_size
        self.max_attempts = max_attempts
        self.backoff_base_s = backoff_base_s
        self.api_key = os.environ.get(api_key_env, "")
        self._client = httpx.Client(timeout=timeout_s)

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        out: list[EmbeddingVector] = []
        for start in range(0, len(texts), self.chunk_size):
            out.extend(self._embed_chunk(texts[start:start + self.chunk_size]))
        return out

    def _embed_chunk(self, chunk: list[str]) -> list[EmbeddingVector]:
        headers = {"content-type": "application/json"}
        if self.api_key:
            headers["authorization"] = f"Bearer {self.api_key}"
        body = {"model": self.model, "input": chunk}
        last_err = None
        for attempt in range(self.max_attempts):
            try:
                resp = self._client.post(f"{self.base_url}/embeddings",
                                         json=body, headers=headers)
            except httpx.HTTPError as exc:
                last_err = str(exc)
            else:
                if resp.status_code < 500 and resp.status_code != 429:
                    break
                last_err = f"status {resp.status_code}"
            if attempt + 1 < self.max_attempts:
                delay = self.backoff_base_s * (2 ** attempt)
                time.sleep(delay * (0.5 + random.random()))
        else:
            raise GatewayError(f"embedding request failed after retries: {last_err}")
        if resp.status_code >= 400:
            raise GatewayError(f"embedding endpoint status {resp.status_code}")
        try:
            rows = [item["embedding"] for item in resp.json()["data"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise GatewayError(f"malformed embedding payload: {exc}") from exc
        if len(rows) != len(chunk):
            raise GatewayError(f"endpoint returned {len(rows)} vectors for "
                               f"{len(chunk)} inputs")
        vectors = []
        for row in rows:
            if len(row) != self.dim:
                raise ValidationError(
                    f"embedding dim {len(row)} != configured {self.dim}")
            vectors.append(EmbeddingVector(values=tuple(row), dim=self.dim))
        return vectors


class HashEmbeddingClient:
    """Deterministic offline stand-in: text hash seeds a Gaussian vector.

    Identical (model, normalized text) always maps to the same vector, so
    duplicate probes land exactly on their source idea.
    """

    def __init__(self, model: str = "hash-embed", dim: int = 64):
        self.model = model
        self.dim = dim
        self.calls = 0

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        self.calls += 1
        out = []
        for text in texts:
            digest = hashlib.sha256(
                f"{self.model}\0{normalize_text(text)}".encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "big")
            rng = np.random.default_rng(seed)
            out.append(EmbeddingVector.from_array(rng.standard_normal(self.dim)))
        return out


def embed_text(text: str, client, cache: EmbeddingCache) -> EmbeddingVector:
    """Single-text convenience wrapper over embed_texts."""
    return embed_texts([text], client, cache)[0]


def embed_texts(texts: list[str], client, cache: EmbeddingCache) -> list[EmbeddingVector]:
    """Embed texts through the cache; only misses reach the client."""
    for text in texts:
        if not normalize_text(text):
            raise ValidationError("cannot embed empty text")
    keys = [cache_key(client.model, t) for t in texts]
    missing: dict[str, str] = {}
    for key, text in zip(keys, texts):
        if cache.get(key) is None and key not in missing:
            missing[key] = normalize_text(text)
    if missing:
        fetched = client.embed_batch(list(missing.values()))
        for key, vector in zip(missing, fetched):
            if vector.dim != client.dim:
                raise ValidationError(
                    f"embedding dim {vector.dim} != configured {client.dim}")
            cache.put(key, vector)
    return [cache.get(key) for key in keys]
