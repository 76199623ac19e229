"""RAG novelty detection: rubric scoring of a query against retrieved
candidates, verdicts from the learned decision tree, and classification
metrics.

One batched LLM call scores all candidates; the reply must be a bracketed
list of rubric values (0.0, 0.3, 0.5, 0.7, 1.0), with small formatting
drift snapped to the nearest level. The tree, not the LLM, decides.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import dtree
from .embedding import normalize_text
from .errors import ScoringError, ValidationError
from .gateway import ChatRequest
from .prompts import build_messages
from .retriever import RankedList, top_k

logger = logging.getLogger(__name__)

RUBRIC_LEVELS = (0.0, 0.3, 0.5, 0.7, 1.0)
SNAP_TOLERANCE = 0.05
PAD_CANDIDATE_ID = "__pad__"
PAD_SCORE = 1.0
MAX_CANDIDATES = 50

_BRACKET_RE = re.compile(r"\[([^\][]*)\]")
_REPROMPT_SUFFIX = (
    "\n\nReminder: reply with only a Python-style list of exactly {n} scores "
    "drawn from 0.0, 0.3, 0.5, 0.7, 1.0 - for example [0.0, 0.3, 1.0].")


@dataclass(frozen=True)
class ScoreVector:
    query_id: str
    candidate_ids: tuple[str, ...]
    scores: tuple[float, ...]
    padded: bool = False

    def __post_init__(self):
        object.__setattr__(self, "candidate_ids", tuple(self.candidate_ids))
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        if len(self.candidate_ids) != len(self.scores):
            raise ValidationError("candidate ids and scores differ in length")
        if not self.scores:
            raise ValidationError("score vector must be nonempty")
        for s in self.scores:
            if s not in RUBRIC_LEVELS:
                raise ValidationError(f"score {s} is not a rubric level")

    @property
    def k(self) -> int:
        return len(self.scores)

    def to_json(self) -> dict:
        return {"query_id": self.query_id, "candidate_ids": list(self.candidate_ids),
                "scores": list(self.scores), "padded": self.padded}

    @classmethod
    def from_json(cls, obj: dict) -> "ScoreVector":
        return cls(query_id=obj["query_id"],
                   candidate_ids=tuple(obj["candidate_ids"]),
                   scores=tuple(obj["scores"]), padded=obj.get("padded", False))


def snap_score(value: float) -> float:
    """Nearest rubric level when within the snap tolerance, else error."""
    level = min(RUBRIC_LEVELS, key=lambda lv: (abs(value - lv), lv))
    if abs(value - level) > SNAP_TOLERANCE + 1e-12:
        raise ScoringError(f"score {value} is off-rubric beyond tolerance")
    return level


def format_score_list(scores: Sequence[float]) -> str:
    return "[" + ", ".join(f"{s:.1f}" for s in scores) + "]"


def parse_score_list(text: str, k: int) -> list[float]:
    """First bracketed numeric list in the text, snapped to rubric levels.

    Errors when no bracketed list parses, when the length is not k, or
    when any value is off-rubric beyond the snap tolerance.
    """
    if k < 1:
        raise ValidationError("k must be positive")
    values = None
    for m in _BRACKET_RE.finditer(text):
        parts = [p.strip() for p in m.group(1).split(",")]
        try:
            values = [float(p) for p in parts if p]
        except ValueError:
            continue
        if values:
            break
        values = None
    if values is None:
        raise ScoringError("no bracketed score list in response", raw=text)
    if len(values) != k:
        raise ScoringError(
            f"expected {k} scores, got {len(values)}", raw=text)
    return [snap_score(v) for v in values]


def score_novelty(query, candidates: Sequence, llm,
                  max_candidates: int = MAX_CANDIDATES) -> ScoreVector:
    """One rubric-prompt call scoring the query against every candidate.

    One reprompt with a format reminder is attempted when the reply does
    not parse; a second failure raises.
    """
    if not 1 <= len(candidates) <= max_candidates:
        raise ValidationError(
            f"candidate count {len(candidates)} outside [1, {max_candidates}]")
    numbered = "\n".join(f"{i}. {normalize_text(c.text)}"
                         for i, c in enumerate(candidates, start=1))
    bindings = {"query": normalize_text(query.text), "candidates": numbered}
    messages = build_messages("novelty_scoring", bindings)
    resp = llm.chat(ChatRequest(messages=messages, temperature=0.0))
    try:
        scores = parse_score_list(resp.content, len(candidates))
    except ScoringError as first_err:
        logger.warning("score parse failed for %s, reprompting: %s",
                       query.paper_id, first_err)
        reminder = _REPROMPT_SUFFIX.format(n=len(candidates))
        retry_messages = (messages[0],
                          {"role": "user",
                           "content": messages[1]["content"] + reminder})
        retry = llm.chat(ChatRequest(messages=retry_messages, temperature=0.0))
        scores = parse_score_list(retry.content, len(candidates))
    return ScoreVector(query_id=query.paper_id,
                       candidate_ids=tuple(c.paper_id for c in candidates),
                       scores=tuple(scores))


def pad_score_vector(vector: ScoreVector, k: int) -> ScoreVector:
    """Pad to k entries with maximal-novelty placeholders and flag it."""
    if vector.k >= k:
        return vector
    missing = k - vector.k
    logger.warning("query %s had only %d candidate(s) for K=%d; padding",
                   vector.query_id, vector.k, k)
    return ScoreVector(
        query_id=vector.query_id,
        candidate_ids=vector.candidate_ids + (PAD_CANDIDATE_ID,) * missing,
        scores=vector.scores + (PAD_SCORE,) * missing,
        padded=True)


def retrieve_candidates(query_id: str, query_vector, index, k: int,
                        pool: set[str] | None = None) -> RankedList:
    """Top-k projected-cosine retrieval; short pools return fewer with a log."""
    ranked = top_k(index, query_vector, k, pool=pool, query_id=query_id)
    if len(ranked.ranked_ids) < k:
        logger.warning("pool for %s holds %d < K=%d candidates",
                       query_id, len(ranked.ranked_ids), k)
    return ranked


def check_novelty(query, index, head, k: int, llm, embed_fn, idea_lookup,
                  tree: dtree.DecisionTree, pool: set[str] | None = None) -> dict:
    """Full verdict for one query idea: retrieve, score, classify.

    Returns {query_id, candidate_ids, scores, label, tree_path}.
    """
    from .retriever import project

    base = embed_fn(query.text)
    ranked = retrieve_candidates(query.paper_id, project(head, base), index, k,
                                 pool=pool)
    candidates = [idea_lookup[cid] for cid in ranked.ranked_ids]
    vector = pad_score_vector(score_novelty(query, candidates, llm), k)
    label, path = dtree.predict_with_path(tree, vector.scores)
    return {"query_id": query.paper_id,
            "candidate_ids": list(vector.candidate_ids),
            "scores": list(vector.scores),
            "label": label,
            "tree_path": path}


def classification_metrics(preds: Sequence[str], truth: Sequence[str]) -> dict:
    """Accuracy plus support-weighted and macro precision/recall/F1.

    Per-class rows are included; classes absent from the truth get zero
    support and do not influence the weighted averages.
    """
    if len(preds) != len(truth) or not truth:
        raise ValidationError("predictions and truth must align and be nonempty")
    for label in list(preds) + list(truth):
        if label not in dtree.LABELS:
            raise ValidationError(f"unknown label {label!r}")
    n = len(truth)
    accuracy = sum(1 for p, t in zip(preds, truth) if p == t) / n
    per_class = {}
    for cls in dtree.LABELS:
        tp = sum(1 for p, t in zip(preds, truth) if p == cls and t == cls)
        fp = sum(1 for p, t in zip(preds, truth) if p == cls and t != cls)
        fn = sum(1 for p, t in zip(preds, truth) if p != cls and t == cls)
        support = tp + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / support if support else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        per_class[cls] = {"precision": precision, "recall": recall,
                          "f1": f1, "support": support}
    def weighted(metric):
        return sum(per_class[c][metric] * per_class[c]["support"]
                   for c in dtree.LABELS) / n
    def macro(metric):
        return sum(per_class[c][metric] for c in dtree.LABELS) / len(dtree.LABELS)
    return {"accuracy": accuracy,
            "precision": weighted("precision"),
            "recall": weighted("recall"),
            "f1": weighted("f1"),
            "macro": {m: macro(m) for m in ("precision", "recall", "f1")},
            "per_class": per_class}


def save_score_dataset(rows: Sequence[tuple[ScoreVector, str]],
                       path: str | Path) -> None:
    """Labeled score vectors as JSONL, reusable for tree training."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for vector, label in rows:
            obj = vector.to_json()
            obj["label"] = label
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def load_score_dataset(path: str | Path) -> list[tuple[ScoreVector, str]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        label = obj.pop("label")
        rows.append((ScoreVector.from_json(obj), label))
    return rows
