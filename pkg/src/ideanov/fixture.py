"""Deterministic demo corpus generator.

Produces a closure-complete seed/reference fixture whose abstracts open
with a unique hypothesis sentence, so the offline LLM backend extracts a
distinct idea per paper. Some references postdate their seeds (leakage
decoys) and a few carry no date (warning-tally cases).
"""

from __future__ import annotations

import datetime as dt
from pathlib import Path

import numpy as np

from .corpus import PaperRecord

_METHODS = (
    "contrastive pretraining", "survey-based conjoint analysis",
    "graph diffusion modeling", "field experimentation",
    "panel regression", "agent-based simulation",
    "retrieval-augmented prompting", "difference-in-differences estimation",
    "hierarchical Bayesian pooling", "curriculum distillation",
)
_TOPICS = (
    "loyalty program churn", "cross-channel ad sequencing",
    "low-resource translation", "influencer credibility",
    "price anchoring", "referral cascade growth",
    "review helpfulness ranking", "cold-start recommendation",
    "brand crisis recovery", "subscription pause offers",
    "multilingual entity linking", "checkout friction",
)
_OUTCOMES = (
    "conversion lift", "retention", "trust formation",
    "recall accuracy", "basket size", "engagement depth",
    "label efficiency", "margin stability",
)
_SETTINGS = (
    "emerging markets", "B2B procurement", "mobile-first cohorts",
    "regulated industries", "marketplace sellers", "longitudinal panels",
    "live-stream commerce", "austere data regimes",
)


def _paper_body(serial: int) -> tuple[str, str]:
    method = _METHODS[serial % len(_METHODS)]
    topic = _TOPICS[(serial // len(_METHODS)) % len(_TOPICS)]
    outcome = _OUTCOMES[(serial // (len(_METHODS) * len(_TOPICS))) % len(_OUTCOMES)]
    setting = _SETTINGS[serial % len(_SETTINGS)]
    title = f"{method.capitalize()} for {topic} (study {serial})"
    hypothesis = (f"Applying {method} to {topic} raises {outcome} "
                  f"in {setting} (cohort {serial}).")
    abstract = (f"{hypothesis} We assemble a longitudinal dataset and compare "
                f"against strong baselines. Results hold across robustness "
                f"checks and ablations.")
    return title, abstract


def make_demo_fixture(n_seeds: int = 20, rng_seed: int = 7,
                      domain: str = "marketing"
                      ) -> tuple[list[PaperRecord], list[PaperRecord]]:
    """Seed and reference records forming a closed citation set."""
    rng = np.random.default_rng(rng_seed)
    n_refs = max(2 * n_seeds, 8)
    references = []
    for j in range(n_refs):
        title, abstract = _paper_body(10_000 + j)
        if j % 15 == 14:
            date = None
        else:
            year = 2012 + int(rng.integers(0, 9))
            date = dt.date(year, 1 + int(rng.integers(0, 12)),
                           1 + int(rng.integers(0, 28)))
        references.append(PaperRecord(
            id=f"ref-{j:04d}", title=title, abstract=abstract,
            venue="Workbench Proceedings", publication_date=date,
            reference_ids=(), is_seed=False, domain=domain))

    seeds = []
    for i in range(n_seeds):
        title, abstract = _paper_body(i)
        date = dt.date(2019 + i % 3, 1 + int(rng.integers(0, 12)),
                       1 + int(rng.integers(0, 28)))
        n_cited = int(rng.integers(3, 7))
        cited = sorted(
            f"ref-{j:04d}" for j in rng.choice(n_refs, size=n_cited, replace=False))
        if i == 0 and n_seeds > 1:
            # one seed-to-seed citation exercises overlap removal
            cited.append("seed-0001")
        seeds.append(PaperRecord(
            id=f"seed-{i:04d}", title=title, abstract=abstract,
            venue="Journal of Synthetic Studies", publication_date=date,
            reference_ids=tuple(cited), is_seed=True, domain=domain))
    return seeds, references


def write_fixture(dir_path: str | Path, seeds: list[PaperRecord],
                  references: list[PaperRecord]) -> None:
    from .corpus import save_records

    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    save_records(seeds, out / "seeds.jsonl")
    save_records(references, out / "references.jsonl")


def make_contrastive_fixture(n_pairs: int = 200, rng_seed: int = 11,
                             held_out_per_anchor: int = 5):
    """Two-topic synthetic embedding set where ranking is learnably confounded.

    Twelve anchors split over two topic clusters. Each anchor owns a private
    signal dimension; each cluster shares a topic dimension. Query vectors
    copy their anchor but carry a random-strength load on the OTHER topic,
    so under the identity head a strong confound outranks the true anchor.
    Shrinking the topic dimensions removes the confound while preserving
    the private-dimension signal, which is what training should discover.

    Returns (train_pairs, held_out_pairs, embeddings) with base vectors for
    every anchor and query id.
    """
    from .embedding import EmbeddingVector
    from .ideagen import TrainingPair

    dim = 16
    n_anchors = 12
    per_cluster = n_anchors // 2
    anchor_gain = 0.6
    # just past the rank-flip threshold, so small head updates change ranks
    confound_low, confound_high = 1.25, 1.45
    noise_scale = 0.05
    rng = np.random.default_rng(rng_seed)

    embeddings: dict[str, EmbeddingVector] = {}
    anchor_ids = []
    for t in range(n_anchors):
        vec = np.zeros(dim)
        vec[t // per_cluster] = 1.0          # topic dimension (0 or 1)
        vec[2 + t] = anchor_gain             # private anchor dimension
        aid = f"anchor-{t:02d}"
        anchor_ids.append(aid)
        embeddings[aid] = EmbeddingVector.from_array(vec)

    def make_queries(count: int, tag: str) -> list[TrainingPair]:
        pairs = []
        for i in range(count):
            t = i % n_anchors
            vec = embeddings[anchor_ids[t]].array.copy()
            other_topic = 1 - t // per_cluster
            vec[other_topic] += rng.uniform(confound_low, confound_high)
            vec[14:] += noise_scale * rng.standard_normal(2)
            qid = f"query-{tag}-{i:03d}"
            embeddings[qid] = EmbeddingVector.from_array(vec)
            pairs.append(TrainingPair(anchor_id=anchor_ids[t],
                                      positive_id=qid, source="kd"))
        return pairs

    train_pairs = make_queries(n_pairs, "tr")
    held_out = make_queries(held_out_per_anchor * n_anchors, "te")
    return train_pairs, held_out, embeddings


def write_run_toml(dir_path: str | Path, **overrides) -> Path:
    """Demo run configuration; keyword overrides replace top-level keys."""
    values = {
        "domain": "marketing",
        "rng_seed": 42,
        "mock": True,
        "pair_source": "kd",
        "seeds": "seeds.jsonl",
        "references": "references.jsonl",
        "workdir": "out",
        "train_ratio": 0.6,
        "valid_ratio": 0.1,
        "test_ratio": 0.3,
        "k_list": [1, 5, 10, 20, 50],
        "K": 10,
        "pool": "per-seed",
        "learning_rate": 2e-5,
        "batch_size": 16,
        "temperature": 0.05,
        "epochs": 10,
        "negative_mode": "full_corpus",
        "synth_rephrased": 4,
        "synth_partial": 3,
        "synth_incremental": 3,
        "nd_probe_mode": "duplicate",
        "nd_train_n": 20,
        "nd_test_n": 20,
        "max_depth": 4,
        "min_leaf": 2,
        "llm_base_url": "",
        "llm_model": "default",
        "embed_base_url": "",
        "embed_model": "hash-embed",
        "embed_dim": 64,
    }
    values.update(overrides)
    lines = []
    for key, value in values.items():
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, (int, float)):
            rendered = repr(value)
        elif isinstance(value, list):
            rendered = "[" + ", ".join(repr(v) for v in value) + "]"
        else:
            rendered = f'"{value}"'
        lines.append(f"{key} = {rendered}")
    path = Path(dir_path) / "run.toml"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
