"""Seed-grouped train/valid/test splitting.

The split unit is the seed paper: a seed and every idea synthesized from
it land in one partition, so no anchor leaks across partitions. An
incremental idea whose two anchors land in different partitions goes to
the earlier partition (train < valid < test) and is flagged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ValidationError
from .ideagen import SynthesizedIdea

PARTITIONS = ("train", "valid", "test")


@dataclass(frozen=True)
class SplitResult:
    partitions: dict[str, tuple[str, ...]]          # partition -> seed ids
    synthesized: dict[str, str]                     # synthesized id -> partition
    cross_partition: tuple[str, ...]                # flagged incremental ids

    def partition_of_seed(self, seed_id: str) -> str:
        for name in PARTITIONS:
            if seed_id in self.partitions[name]:
                return name
        raise ValidationError(f"seed {seed_id} not in any partition")

    def seeds_in(self, name: str) -> tuple[str, ...]:
        return self.partitions[name]

    def to_json(self) -> dict:
        return {"partitions": {k: list(v) for k, v in self.partitions.items()},
                "synthesized": dict(self.synthesized),
                "cross_partition": list(self.cross_partition)}

    @classmethod
    def from_json(cls, obj: dict) -> "SplitResult":
        return cls(partitions={k: tuple(v) for k, v in obj["partitions"].items()},
                   synthesized=dict(obj["synthesized"]),
                   cross_partition=tuple(obj["cross_partition"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SplitResult":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def allocate_counts(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of n items to the given ratios.

    Remainder ties go to the earlier partition, so 10 at (0.6, 0.1, 0.3)
    yields exactly (6, 1, 3).
    """
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("split ratios must be positive and sum to 1")
    floors = [math.floor(n * r) for r in ratios]
    remainders = [n * r - f for r, f in zip(ratios, floors)]
    short = n - sum(floors)
    order = sorted(range(len(ratios)), key=lambda i: (-remainders[i], i))
    for i in order[:short]:
        floors[i] += 1
    return floors


def split_dataset(seed_ids: Sequence[str], synthesized: Sequence[SynthesizedIdea],
                  ratios: Sequence[float] = (0.6, 0.1, 0.3),
                  rng_seed: int = 0) -> SplitResult:
    """Deterministic seed-grouped split at the given ratios."""
    ids = sorted(set(seed_ids))
    if len(ids) != len(list(seed_ids)):
        raise ValidationError("seed ids must be unique")
    if len(ratios) != len(PARTITIONS):
        raise ConfigError("exactly three split ratios expected")
    counts = allocate_counts(len(ids), ratios)
    rng = np.random.default_rng(rng_seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    partitions = {}
    start = 0
    for name, count in zip(PARTITIONS, counts):
        partitions[name] = tuple(sorted(order[start:start + count]))
        start += count
    seed_to_part = {sid: name for name in PARTITIONS for sid in partitions[name]}
    rank = {name: i for i, name in enumerate(PARTITIONS)}

    assignment = {}
    flagged = []
    for syn in synthesized:
        parts = []
        for anchor in syn.anchor_ids:
            if anchor not in seed_to_part:
                raise ValidationError(
                    f"synthesized idea {syn.id} anchors unknown seed {anchor}")
            parts.append(seed_to_part[anchor])
        chosen = min(parts, key=lambda p: rank[p])
        if len(set(parts)) > 1:
            flagged.append(syn.id)
        assignment[syn.id] = chosen
    return SplitResult(partitions=partitions, synthesized=assignment,
                       cross_partition=tuple(flagged))
