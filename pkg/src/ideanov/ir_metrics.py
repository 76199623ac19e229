"""Retrieval metrics: Acc@k, average precision, MAP, and per-kind grouping.

A "run" is one ranked list plus the ids that count as relevant for its
query. Incremental queries carry two relevant anchors; MAP treats both
as relevant by default, with a single-anchor mode for sensitivity checks.
"""

from __future__ import annotations

import logging
from typing import Sequence

from .errors import DomainError, ValidationError
from .ideagen import SYNTHESIS_KINDS
from .retriever import RankedList

logger = logging.getLogger(__name__)

Run = tuple[RankedList, Sequence[str]]


def acc_at_k(runs: Sequence[Run], k: int) -> float:
    """Fraction of runs with >= 1 relevant id in the top k.

    Runs with an empty relevant set count as misses and are flagged in the
    log rather than aborting the batch.
    """
    if not runs:
        raise DomainError("acc_at_k over zero runs")
    if k < 1:
        raise ValidationError("k must be positive")
    hits = 0
    empty = 0
    for ranked, relevant in runs:
        rel = set(relevant)
        if not rel:
            empty += 1
            continue
        if any(rid in rel for rid in ranked.ranked_ids[:k]):
            hits += 1
    if empty:
        logger.warning("acc_at_k: %d run(s) with empty relevant set scored 0", empty)
    return hits / len(runs)


def average_precision(ranked_ids: Sequence[str], relevant: Sequence[str]) -> float:
    """AP over the full ranked list, normalized by the relevant-set size."""
    rel = set(relevant)
    if not rel:
        raise DomainError("average precision needs >= 1 relevant id")
    found = 0
    total = 0.0
    for rank, rid in enumerate(ranked_ids, start=1):
        if rid in rel:
            found += 1
            total += found / rank
    return total / len(rel)


def mean_average_precision(runs: Sequence[Run], multi_relevant: bool = True) -> float:
    """Mean AP across runs; single-anchor mode keeps only the first relevant id."""
    if not runs:
        raise DomainError("MAP over zero runs")
    values = []
    for ranked, relevant in runs:
        relevant = list(relevant)
        if not relevant:
            raise DomainError(f"query {ranked.query_id} has no relevant ids")
        if not multi_relevant:
            relevant = relevant[:1]
        values.append(average_precision(ranked.ranked_ids, relevant))
    return sum(values) / len(values)


def eval_runs(runs: Sequence[Run], k_list: Sequence[int]) -> dict:
    """Acc@k for each k plus MAP, as one flat report row."""
    out = {f"acc@{k}": acc_at_k(runs, k) for k in k_list}
    out["map"] = mean_average_precision(runs)
    out["n"] = len(runs)
    return out


def group_eval(tagged_runs: Sequence[tuple[RankedList, Sequence[str], str]],
               k_list: Sequence[int]) -> dict:
    """Metrics per synthesis kind, mirroring the grouped report layout."""
    groups: dict[str, list[Run]] = {}
    for ranked, relevant, kind in tagged_runs:
        if kind not in SYNTHESIS_KINDS:
            raise ValidationError(f"unknown synthesis kind tag {kind!r}")
        groups.setdefault(kind, []).append((ranked, relevant))
    return {kind: eval_runs(runs, k_list) for kind, runs in sorted(groups.items())}
