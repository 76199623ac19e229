"""Idea extraction and non-novel idea synthesis via the chat gateway.

Each paper is reduced to one compact idea (its hypothesis or main
contribution). Ideas then seed synthesized variants of three kinds:
rephrased (information-equivalent), partial (information-reduced), and
incremental (information-added, fusing two anchors). Anchor/variant
pairs supervise the distilled retriever.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .corpus import Corpus, PaperRecord
from .errors import GenerationError, ParseError, ValidationError
from .gateway import ChatRequest
from .prompts import build_messages

logger = logging.getLogger(__name__)

SYNTHESIS_KINDS = ("rephrased", "partial", "incremental")
MAX_VARIANTS_PER_ANCHOR = 10

EXTRACT_TEMPERATURE = 0.0
SYNTH_TEMPERATURE = 0.7

_HYPOTHESIS_RE = re.compile(r"^\s*hypothesis\s*:\s*(.*)$", re.IGNORECASE)
_NUMBERED_ITEM_RE = re.compile(r"^\s*\d+[.)]\s*(.*)$")


@dataclass(frozen=True)
class Idea:
    """One extracted idea per paper; status 'none' marks a failed extraction."""

    paper_id: str
    text: str
    status: str = "extracted"

    def __post_init__(self):
        if not self.paper_id:
            raise ValidationError("idea requires a paper_id")
        if self.status not in ("extracted", "none"):
            raise ValidationError(f"unknown idea status {self.status!r}")
        if self.status == "extracted" and not self.text:
            raise ValidationError("extracted idea must carry text")
        if self.status == "none" and self.text:
            raise ValidationError("status 'none' implies empty text")

    def to_json(self) -> dict:
        return {"paper_id": self.paper_id, "text": self.text, "status": self.status}

    @classmethod
    def from_json(cls, obj: dict) -> "Idea":
        return cls(paper_id=obj["paper_id"], text=obj["text"], status=obj["status"])


@dataclass(frozen=True)
class SynthesizedIdea:
    id: str
    kind: str
    anchor_ids: tuple[str, ...]
    text: str

    def __post_init__(self):
        object.__setattr__(self, "anchor_ids", tuple(self.anchor_ids))
        if self.kind not in SYNTHESIS_KINDS:
            raise ValidationError(f"unknown synthesis kind {self.kind!r}")
        expected = 2 if self.kind == "incremental" else 1
        if len(self.anchor_ids) != expected:
            raise ValidationError(
                f"{self.kind} idea needs {expected} anchor(s), got {len(self.anchor_ids)}")
        if not self.id or not self.text:
            raise ValidationError("synthesized idea requires id and text")

    def to_json(self) -> dict:
        return {"id": self.id, "kind": self.kind,
                "anchor_ids": list(self.anchor_ids), "text": self.text}

    @classmethod
    def from_json(cls, obj: dict) -> "SynthesizedIdea":
        return cls(id=obj["id"], kind=obj["kind"],
                   anchor_ids=tuple(obj["anchor_ids"]), text=obj["text"])


@dataclass(frozen=True)
class TrainingPair:
    """Anchor/positive supervision for the retriever; ids resolve to texts."""

    anchor_id: str
    positive_id: str
    source: str = "kd"

    def __post_init__(self):
        if self.anchor_id == self.positive_id:
            raise ValidationError("anchor and positive must differ")
        if self.source not in ("kd", "ra"):
            raise ValidationError(f"unknown pair source {self.source!r}")

    def to_json(self) -> dict:
        return {"anchor_id": self.anchor_id, "positive_id": self.positive_id,
                "source": self.source}

    @classmethod
    def from_json(cls, obj: dict) -> "TrainingPair":
        return cls(anchor_id=obj["anchor_id"], positive_id=obj["positive_id"],
                   source=obj["source"])


def parse_hypothesis(raw: str) -> str | None:
    """Pull the hypothesis payload out of an extraction response.

    Accepts the first line starting with "Hypothesis:" case-insensitively,
    then strips a trailing "#" and one pair of surrounding brackets.
    Returns None for the 'None' sentinel; raises on unrecognizable input.
    """
    for line in raw.splitlines():
        m = _HYPOTHESIS_RE.match(line)
        if not m:
            continue
        payload = m.group(1).strip()
        if payload.endswith("#"):
            payload = payload[:-1].rstrip()
        if payload.startswith("[") and payload.endswith("]") and len(payload) >= 2:
            payload = payload[1:-1].strip()
        if payload.lower() == "none":
            return None
        if not payload:
            raise ParseError("empty hypothesis payload", raw=raw)
        return payload
    raise ParseError("no 'Hypothesis:' line in response", raw=raw)


def extract_idea(paper: PaperRecord, profile: str, llm) -> Idea:
    """One LLM call per paper; returns a status='none' Idea on the sentinel."""
    if profile not in ("marketing", "nlp"):
        raise ValidationError(f"unknown extraction profile {profile!r}")
    if not paper.title or not paper.abstract:
        raise ValidationError(f"paper {paper.id} lacks title or abstract")
    messages = build_messages(f"extract_{profile}",
                              {"title": paper.title, "abstract": paper.abstract})
    resp = llm.chat(ChatRequest(messages=messages, temperature=EXTRACT_TEMPERATURE))
    payload = parse_hypothesis(resp.content)
    if payload is None:
        return Idea(paper_id=paper.id, text="", status="none")
    return Idea(paper_id=paper.id, text=payload, status="extracted")


def parse_numbered_list(text: str, k: int) -> list[str]:
    """Items from "1. ..." lines, in order, empties dropped, at most k."""
    if k < 1:
        raise ValidationError("k must be positive")
    items = []
    for line in text.splitlines():
        m = _NUMBERED_ITEM_RE.match(line)
        if not m:
            continue
        item = m.group(1).strip()
        if item:
            items.append(item)
    if not items:
        raise ParseError("no numbered items in response", raw=text)
    return items[:k]


def synthesize(anchors: list[Idea], kind: str, k: int, llm) -> list[SynthesizedIdea]:
    """Generate up to k variants of the anchor idea(s) in one LLM call.

    Variants that string-equal an anchor text are rejected and logged;
    an all-rejected or empty yield is a generation error.
    """
    if kind not in SYNTHESIS_KINDS:
        raise ValidationError(f"unknown synthesis kind {kind!r}")
    expected = 2 if kind == "incremental" else 1
    if len(anchors) != expected:
        raise ValidationError(f"{kind} synthesis needs {expected} anchor idea(s)")
    if not 1 <= k <= MAX_VARIANTS_PER_ANCHOR:
        raise ValidationError(f"k must be in [1, {MAX_VARIANTS_PER_ANCHOR}]")
    for a in anchors:
        if a.status != "extracted":
            raise ValidationError(f"anchor {a.paper_id} has no extracted idea")

    if kind == "incremental":
        bindings = {"k": str(k), "idea_a": anchors[0].text, "idea_b": anchors[1].text}
        base_id = f"incremental-{anchors[0].paper_id}+{anchors[1].paper_id}"
    else:
        bindings = {"k": str(k), "idea": anchors[0].text}
        base_id = f"{kind}-{anchors[0].paper_id}"

    messages = build_messages(f"synthesize_{kind}", bindings)
    resp = llm.chat(ChatRequest(messages=messages, temperature=SYNTH_TEMPERATURE))
    texts = parse_numbered_list(resp.content, k)

    anchor_texts = {a.text for a in anchors}
    anchor_ids = tuple(a.paper_id for a in anchors)
    out = []
    for text in texts:
        if text in anchor_texts:
            logger.warning("rejected synthesized text equal to anchor (%s)", base_id)
            continue
        out.append(SynthesizedIdea(id=f"{base_id}-{len(out) + 1:02d}",
                                   kind=kind, anchor_ids=anchor_ids, text=text))
    if not out:
        raise GenerationError("no usable synthesized variants", raw=resp.content)
    return out


def build_pair_set(ideas: list[Idea], synthesized: list[SynthesizedIdea],
                   source: str = "kd", corpus: Corpus | None = None) -> list[TrainingPair]:
    """Training pairs: kd pairs anchors with their synthesized variants
    (incremental ideas yield one pair per anchor); ra pairs each seed idea
    with its referenced papers' ideas.
    """
    by_paper = {i.paper_id: i for i in ideas if i.status == "extracted"}
    if source == "kd":
        pairs = []
        for syn in synthesized:
            for anchor_id in syn.anchor_ids:
                if anchor_id not in by_paper:
                    raise ValidationError(
                        f"synthesized idea {syn.id} has dangling anchor {anchor_id}")
                pairs.append(TrainingPair(anchor_id=anchor_id,
                                          positive_id=syn.id, source="kd"))
        return pairs
    if source == "ra":
        if corpus is None:
            raise ValidationError("ra pair source requires a corpus")
        pairs = []
        for seed_id in sorted(corpus.seeds):
            if seed_id not in by_paper:
                continue
            for ref_id in corpus.seeds[seed_id].reference_ids:
                if ref_id in by_paper and ref_id != seed_id:
                    pairs.append(TrainingPair(anchor_id=seed_id,
                                              positive_id=ref_id, source="ra"))
        return pairs
    raise ValidationError(f"unknown pair source {source!r}")


def save_ideas(ideas: list[Idea], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for idea in ideas:
            fh.write(json.dumps(idea.to_json(), sort_keys=True) + "\n")


def load_ideas(path: str | Path) -> list[Idea]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(Idea.from_json(json.loads(line)))
    return out


def save_synthesized(items: list[SynthesizedIdea], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_json(), sort_keys=True) + "\n")


def load_synthesized(path: str | Path) -> list[SynthesizedIdea]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(SynthesizedIdea.from_json(json.loads(line)))
    return out


def save_pairs(pairs: list[TrainingPair], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_json(), sort_keys=True) + "\n")


def load_pairs(path: str | Path) -> list[TrainingPair]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(TrainingPair.from_json(json.loads(line)))
    return out
