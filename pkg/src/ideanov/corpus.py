"""Closure-complete paper corpus: seed papers plus their one-hop references.

A corpus is built from seed papers by resolving every referenced id
through a fetcher. The result is closed: any reference the fetcher could
resolve is present in the corpus body, so a non-novel idea can never be
missed for lack of coverage. Per-seed candidate pools are leakage-filtered
by publication date.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, replace
from datetime import date, datetime, timezone
from pathlib import Path

from .errors import NotFoundError, ValidationError

logger = logging.getLogger(__name__)

DOMAINS = ("marketing", "nlp", "other")


@dataclass(frozen=True)
class PaperRecord:
    """One paper: bibliographic fields plus outgoing reference ids."""

    id: str
    title: str
    abstract: str
    venue: str = ""
    publication_date: date | None = None
    reference_ids: tuple[str, ...] = ()
    is_seed: bool = False
    domain: str = "other"

    def __post_init__(self):
        if not self.id:
            raise ValidationError("paper id must be nonempty")
        if self.domain not in DOMAINS:
            raise ValidationError(f"unknown domain {self.domain!r} for paper {self.id}")
        refs = tuple(self.reference_ids)
        if len(set(refs)) != len(refs):
            raise ValidationError(f"duplicate reference ids on paper {self.id}")
        if self.id in refs:
            raise ValidationError(f"paper {self.id} references itself")
        object.__setattr__(self, "reference_ids", refs)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["reference_ids"] = list(self.reference_ids)
        doc["publication_date"] = (
            self.publication_date.isoformat() if self.publication_date else None
        )
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "PaperRecord":
        raw_date = doc.get("publication_date")
        pub = date.fromisoformat(raw_date) if raw_date else None
        return cls(
            id=doc["id"],
            title=doc.get("title", ""),
            abstract=doc.get("abstract", ""),
            venue=doc.get("venue", ""),
            publication_date=pub,
            reference_ids=tuple(doc.get("reference_ids", ())),
            is_seed=bool(doc.get("is_seed", False)),
            domain=doc.get("domain", "other"),
        )


@dataclass(frozen=True)
class FetchProvenance:
    """What happened during corpus assembly, for audit."""

    source: str
    fetched_at: str
    unresolved_ids: tuple[str, ...] = ()
    overlap_removed: int = 0
    raw_reference_count: int = 0
    deduplicated_reference_count: int = 0


@dataclass(frozen=True)
class Corpus:
    """Immutable seed + reference sets; ids are disjoint between the two."""

    seeds: dict[str, PaperRecord]
    references: dict[str, PaperRecord]
    provenance: FetchProvenance

    def __post_init__(self):
        overlap = set(self.seeds) & set(self.references)
        if overlap:
            raise ValidationError(f"seed/reference id overlap: {sorted(overlap)[:5]}")

    def all_ids(self) -> set[str]:
        return set(self.seeds) | set(self.references)

    def get(self, paper_id: str) -> PaperRecord:
        rec = self.seeds.get(paper_id) or self.references.get(paper_id)
        if rec is None:
            raise NotFoundError(f"paper {paper_id!r} not in corpus")
        return rec


def build_closure_corpus(seeds: list[PaperRecord], fetcher) -> Corpus:
    """Resolve every seed reference through `fetcher` and assemble a closed corpus.

    The fetcher contract is `fetch_many(ids) -> dict[id, PaperRecord | None]`
    (None marks not-found). Unresolvable ids stay listed on the seed records
    and are recorded in provenance rather than silently dropped. A referenced
    paper that is itself a seed is kept only in the seed set.
    """
    seen: set[str] = set()
    for s in seeds:
        if s.id in seen:
            raise ValidationError(f"duplicate seed id {s.id!r}")
        seen.add(s.id)
        if not s.is_seed:
            raise ValidationError(f"seed {s.id} lacks is_seed=true")
        if s.publication_date is None:
            raise ValidationError(f"seed {s.id} lacks a publication date")

    seed_ids = {s.id for s in seeds}
    all_refs = {ref for s in seeds for ref in s.reference_ids}
    wanted = sorted(all_refs - seed_ids)
    # Distinct papers appearing in both sets; the seed copy wins.
    overlap_removed = len(all_refs & seed_ids)
    raw_count = len(all_refs)

    resolved = fetcher.fetch_many(wanted)
    references: dict[str, PaperRecord] = {}
    unresolved: list[str] = []
    for ref_id in wanted:
        rec = resolved.get(ref_id)
        if rec is None:
            unresolved.append(ref_id)
        else:
            if rec.is_seed:
                rec = replace(rec, is_seed=False)
            references[ref_id] = rec

    provenance = FetchProvenance(
        source=getattr(fetcher, "source_name", type(fetcher).__name__),
        fetched_at=datetime.now(timezone.utc).isoformat(),
        unresolved_ids=tuple(unresolved),
        overlap_removed=overlap_removed,
        raw_reference_count=raw_count,
        deduplicated_reference_count=len(wanted),
    )
    return Corpus(seeds={s.id: s for s in seeds}, references=references,
                  provenance=provenance)


def verify_closure(corpus: Corpus, strict: bool = False) -> list[tuple[str, str]]:
    """Audit the closure invariant; returns offending (seed_id, ref_id) pairs.

    By default a reference id violates only if it was resolvable (not in
    provenance.unresolved_ids) yet is absent from the corpus body; strict
    mode flags unresolved references too.
    """
    known = corpus.all_ids()
    unresolved = set(corpus.provenance.unresolved_ids)
    missing = []
    for seed in corpus.seeds.values():
        for ref_id in seed.reference_ids:
            if ref_id in known:
                continue
            if strict or ref_id not in unresolved:
                missing.append((seed.id, ref_id))
    return missing


def filter_candidates_by_date(corpus: Corpus, seed_id: str) -> set[PaperRecord]:
    """Leakage pool for one seed: references dated on or before the seed.

    References lacking a date are excluded and tallied in a warning.
    """
    if seed_id not in corpus.seeds:
        raise NotFoundError(f"seed {seed_id!r} not in corpus")
    cutoff = corpus.seeds[seed_id].publication_date
    pool: set[PaperRecord] = set()
    undated = 0
    for rec in corpus.references.values():
        if rec.publication_date is None:
            undated += 1
        elif rec.publication_date <= cutoff:
            pool.add(rec)
    if undated:
        logger.warning("seed %s: %d undated references excluded from pool",
                       seed_id, undated)
    return pool


def corpus_stats(corpus: Corpus) -> dict:
    """Summary counts plus a per-year date histogram."""
    histogram = Counter()
    undated = 0
    for rec in list(corpus.seeds.values()) + list(corpus.references.values()):
        if rec.publication_date is None:
            undated += 1
        else:
            histogram[rec.publication_date.year] += 1
    return {
        "seeds": len(corpus.seeds),
        "references": len(corpus.references),
        "overlap_removed": corpus.provenance.overlap_removed,
        "unresolved_references": len(corpus.provenance.unresolved_ids),
        "raw_reference_count": corpus.provenance.raw_reference_count,
        "deduplicated_reference_count": corpus.provenance.deduplicated_reference_count,
        "undated_records": undated,
        "date_histogram": {str(year): histogram[year] for year in sorted(histogram)},
    }


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """One PaperRecord per JSONL line, seeds first, plus a sidecar meta file."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in sorted(corpus.seeds.values(), key=lambda r: r.id):
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
        for rec in sorted(corpus.references.values(), key=lambda r: r.id):
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
    meta = asdict(corpus.provenance)
    meta["unresolved_ids"] = list(corpus.provenance.unresolved_ids)
    path.with_suffix(".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_corpus(path: str | Path) -> Corpus:
    path = Path(path)
    seeds: dict[str, PaperRecord] = {}
    references: dict[str, PaperRecord] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = PaperRecord.from_json(json.loads(line))
        (seeds if rec.is_seed else references)[rec.id] = rec
    meta_path = path.with_suffix(".meta.json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        meta["unresolved_ids"] = tuple(meta.get("unresolved_ids", ()))
        provenance = FetchProvenance(**meta)
    else:
        provenance = FetchProvenance(source="unknown", fetched_at="")
    return Corpus(seeds=seeds, references=references, provenance=provenance)


def load_records(path: str | Path) -> list[PaperRecord]:
    """Read a plain JSONL of paper records (seed lists, fixture files)."""
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(PaperRecord.from_json(json.loads(line)))
    return records


def save_records(records: list[PaperRecord], path: str | Path) -> None:
    """Write a plain JSONL of paper records."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
