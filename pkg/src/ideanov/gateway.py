"""Chat-completion gateway: one client surface for every LLM interaction.

Live requests go through an OpenAI-compatible HTTP backend; offline runs
use deterministic mocks (echo, scripted queue, transcript replay, a
rule-based judge, and a full pipeline mock that answers extraction,
synthesis, and scoring prompts). Every request/response pair is appended
to a JSONL transcript so a run can be replayed bit-for-bit.
"""

from __future__ import annotations

import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import GatewayError, TemplateError

PLACEHOLDER_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[dict, ...]
    model: str = "default"
    temperature: float = 0.0
    max_tokens: int = 2048

    def __post_init__(self):
        msgs = tuple(dict(m) for m in self.messages)
        for m in msgs:
            if m.get("role") not in ("system", "user"):
                raise TemplateError(f"unsupported message role {m.get('role')!r}")
            if not m.get("content"):
                raise TemplateError("empty message content")
        object.__setattr__(self, "messages", msgs)

    def to_json(self) -> dict:
        return {"messages": list(self.messages), "model": self.model,
                "temperature": self.temperature, "max_tokens": self.max_tokens}

    def content_key(self) -> str:
        import hashlib
        payload = json.dumps(
            {"messages": list(self.messages), "model": self.model,
             "temperature": self.temperature},
            sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_s: float = 0.0


class TransientBackendError(GatewayError):
    """Retryable transport-level failure."""


def render_template(template: str, bindings: dict[str, str]) -> str:
    """Substitute `{name}` placeholders; every placeholder must be bound.

    Bound values may not themselves contain placeholder syntax, which keeps
    rendering injective on bindings.
    """
    needed = set(PLACEHOLDER_RE.findall(template))
    missing = needed - set(bindings)
    if missing:
        raise TemplateError(f"unbound placeholder(s): {sorted(missing)}")
    for name in needed:
        value = str(bindings[name])
        if PLACEHOLDER_RE.search(value):
            raise TemplateError(f"binding {name!r} contains placeholder syntax")
    return PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), template)


class ChatGateway:
    """Retries, bounded parallelism, and transcript logging around a backend."""

    def __init__(self, backend, transcript_path: str | Path | None = None,
                 run_id: str = "run", max_attempts: int = 3,
                 backoff_base_s: float = 1.0, max_parallel: int = 4):
        self.backend = backend
        self.transcript_path = Path(transcript_path) if transcript_path else None
        self.run_id = run_id
        self.max_attempts = max_attempts
        self.backoff_base_s = backoff_base_s
        self._seq = 0
        self._lock = threading.Lock()
        self._slots = threading.Semaphore(max_parallel)
        self.retry_count = 0

    def chat(self, req: ChatRequest) -> ChatResponse:
        start = time.monotonic()
        last_exc: Exception | None = None
        with self._slots:
            for attempt in range(self.max_attempts):
                try:
                    content = self.backend.complete(req)
                    break
                except TransientBackendError as exc:
                    last_exc = exc
                    with self._lock:
                        self.retry_count += 1
                    if attempt + 1 < self.max_attempts:
                        delay = self.backoff_base_s * (2 ** attempt)
                        time.sleep(delay * (0.5 + random.random()))
            else:
                raise GatewayError(
                    f"backend failed after {self.max_attempts} attempts: {last_exc}")
        resp = ChatResponse(content=content, latency_s=time.monotonic() - start)
        self._log(req, resp)
        return resp

    def _log(self, req: ChatRequest, resp: ChatResponse) -> None:
        if self.transcript_path is None:
            return
        with self._lock:
            self._seq += 1
            entry = {
                "run_id": self.run_id,
                "seq": self._seq,
                "request": req.to_json(),
                "request_key": req.content_key(),
                "response": {"content": resp.content},
                "timing": {"latency_s": round(resp.latency_s, 6)},
            }
            with self.transcript_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


class HttpChatBackend:
    """Chat-completions wire protocol against any compatible provider."""

    def __init__(self, base_url: str, api_key_env: str = "LLM_API_KEY",
                 timeout_s: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = os.environ.get(api_key_env, "")
        self._client = httpx.Client(timeout=timeout_s)

    def complete(self, req: ChatRequest) -> str:
        headers = {"content-type": "application/json"}
        if self.api_key:
            headers["authorization"] = f"Bearer {self.api_key}"
        body = {"model": req.model, "messages": list(req.messages),
                "temperature": req.temperature, "max_tokens": req.max_tokens}
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions",
                                     json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise TransientBackendError(str(exc)) from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransientBackendError(f"status {resp.status_code}")
        if resp.status_code >= 400:
            raise GatewayError(f"non-retryable status {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise GatewayError(f"malformed completion payload: {exc}") from exc


class EchoBackend:
    """Returns the last user message verbatim."""

    def complete(self, req: ChatRequest) -> str:
        users = [m["content"] for m in req.messages if m["role"] == "user"]
        return users[-1] if users else ""


class ScriptedBackend:
    """Serves queued responses in order; used to script exact conversations."""

    def __init__(self, responses: list[str]):
        self._queue = list(responses)
        self.requests: list[ChatRequest] = []

    def complete(self, req: ChatRequest) -> str:
        self.requests.append(req)
        if not self._queue:
            raise GatewayError("scripted backend exhausted")
        return self._queue.pop(0)


class FlakyBackend:
    """Fails transiently N times, then delegates; exercises the retry path."""

    def __init__(self, failures: int, inner):
        self.failures = failures
        self.inner = inner
        self.calls = 0

    def complete(self, req: ChatRequest) -> str:
        self.calls += 1
        if self.calls <= self.failures:
            raise TransientBackendError(f"simulated failure {self.calls}")
        return self.inner.complete(req)


class TranscriptReplayBackend:
    """Replays a recorded transcript, keyed by request content hash.

    Repeated identical requests are served in original file order, so a
    rerun against the transcript reproduces downstream artifacts exactly.
    """

    def __init__(self, path: str | Path):
        self._by_key: dict[str, list[str]] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            self._by_key.setdefault(entry["request_key"], []).append(
                entry["response"]["content"])

    def complete(self, req: ChatRequest) -> str:
        queue = self._by_key.get(req.content_key())
        if not queue:
            raise GatewayError("request not present in transcript")
        return queue.pop(0)


_NUMBERED_LINE_RE = re.compile(r"^\s*\d+[.)]\s+(.*\S)\s*$", re.MULTILINE)


def _squash(text: str) -> str:
    return " ".join(text.split())


def _last_user_content(req: ChatRequest) -> str:
    users = [m["content"] for m in req.messages if m["role"] == "user"]
    if not users:
        raise GatewayError("request has no user message")
    return users[-1]


class RuleBasedJudgeBackend:
    """Rubric judge that scores by exact text comparison.

    A candidate whose text equals the query (modulo whitespace) gets
    `match_score`; every other candidate gets `default_score`. The reply
    is a bracketed score list in the wire format the scorer expects.
    """

    def __init__(self, match_score: float = 0.0, default_score: float = 1.0):
        self.match_score = match_score
        self.default_score = default_score

    def complete(self, req: ChatRequest) -> str:
        user = _last_user_content(req)
        head, sep, tail = user.partition("Existing Ideas:")
        if not sep or "Given Idea:" not in head:
            raise GatewayError("judge backend got a non-scoring prompt")
        query = _squash(head.rsplit("Given Idea:", 1)[1])
        candidates = [m.group(1) for m in _NUMBERED_LINE_RE.finditer(tail)]
        if not candidates:
            raise GatewayError("scoring prompt lists no candidates")
        scores = [self.match_score if _squash(c) == query else self.default_score
                  for c in candidates]
        return "[" + ", ".join(f"{s:.1f}" for s in scores) + "]"


class OfflinePipelineBackend:
    """Deterministic stand-in for the LLM across every pipeline stage.

    Recognizes each prompt family by a phrase unique to its template:
    extraction replies with the abstract's first sentence, synthesis
    replies with numbered deterministic variants of the input idea(s),
    and scoring delegates to the exact-match judge.
    """

    def __init__(self, judge: RuleBasedJudgeBackend | None = None):
        self.judge = judge or RuleBasedJudgeBackend()

    def complete(self, req: ChatRequest) -> str:
        user = _last_user_content(req)
        if "Below is the target article:" in user:
            return self._extract(user)
        if "paraphrased sentences for the following input:" in user:
            return self._variants(user, r"generate up to (\d+) paraphrased",
                                  "Recast in other terms", "paraphrase")
        if "elaborated subset sentences for the following input:" in user:
            return self._variants(user, r"generate up to (\d+) elaborated",
                                  "A narrower reading", "subset")
        if "fused sentences for the following inputs:" in user:
            return self._fused(user)
        if "Given Idea:" in user and "Existing Ideas:" in user:
            return self.judge.complete(req)
        raise GatewayError("offline backend cannot answer this prompt")

    @staticmethod
    def _extract(user: str) -> str:
        m = re.search(r"Title: (.*?)\nAbstract: (.*?)\nAfter reviewing the abstract",
                      user, re.DOTALL)
        if not m:
            raise GatewayError("extraction prompt missing title/abstract block")
        abstract = _squash(m.group(2))
        if "NO HYPOTHESIS" in abstract:
            return "Hypothesis: None"
        stop = re.search(r"[.!?]", abstract)
        sentence = abstract[:stop.end()] if stop else abstract
        return f"Hypothesis: [{sentence}]#"

    @staticmethod
    def _variants(user: str, k_pattern: str, lead: str, tag: str) -> str:
        k_match = re.search(k_pattern, user)
        if not k_match or "**Input:** " not in user:
            raise GatewayError("synthesis prompt missing count or input")
        k = int(k_match.group(1))
        idea = _squash(user.rsplit("**Input:** ", 1)[1])
        lines = [f"{i}. {lead}: {idea} ({tag} {i})" for i in range(1, k + 1)]
        return "\n".join(lines)

    @staticmethod
    def _fused(user: str) -> str:
        k_match = re.search(r"generate up to (\d+) fused", user)
        pair = re.search(r"Sentence A: (.*?)\nSentence B: (.*)\Z", user, re.DOTALL)
        if not k_match or not pair:
            raise GatewayError("fusion prompt missing count or sentences")
        k = int(k_match.group(1))
        a, b = _squash(pair.group(1)), _squash(pair.group(2))
        lines = [f"{i}. Bridging two threads: {a} alongside {b} (fusion {i})"
                 for i in range(1, k + 1)]
        return "\n".join(lines)
