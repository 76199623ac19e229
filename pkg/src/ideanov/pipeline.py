"""Experiment orchestration: staged pipeline with persisted artifacts.

Each stage reads validated input artifacts from the working directory,
writes its outputs, and records hashes in a manifest. Reruns with
unchanged inputs and config are cache hits. With mock backends and a
fixed seed the whole run is deterministic down to report bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import dtree, ir_metrics, novelty
from .corpus import (Corpus, build_closure_corpus, corpus_stats, load_corpus,
                     load_records, save_corpus, verify_closure)
from .embedding import (EmbeddingCache, HashEmbeddingClient, HttpEmbeddingClient,
                        cache_key, embed_texts)
from .errors import ConfigError, StageInputError, ValidationError
from .fetchers import HttpFetcher, JsonlFetcher
from .gateway import ChatGateway, HttpChatBackend, OfflinePipelineBackend
from .ideagen import (Idea, build_pair_set, extract_idea, load_ideas,
                      load_synthesized, save_ideas, save_pairs, save_synthesized,
                      synthesize)
from .retriever import (Index, ProjectionHead, TrainConfig, build_index, project,
                        top_k, train)
from .split import SplitResult, split_dataset

logger = logging.getLogger(__name__)

STAGES = ("corpus", "extract", "synth", "embed", "train", "index",
          "eval-retrieval", "score", "tree", "eval-nd", "report")

ARTIFACTS = {
    "corpus": "corpus.jsonl",
    "ideas": "ideas.jsonl",
    "synth": "synthesized.jsonl",
    "embeddings": "embeddings.jsonl",
    "split": "split.json",
    "pairs": "pairs.jsonl",
    "head": "head.json",
    "curve": "loss_curve.json",
    "index": "index.json",
    "retrieval_metrics": "retrieval_metrics.json",
    "scores_train": "scores_train.jsonl",
    "scores_test": "scores_test.jsonl",
    "tree": "tree.json",
    "nd_metrics": "nd_metrics.json",
    "nd_verdicts": "nd_verdicts.jsonl",
    "report_md": "report.md",
    "report_csv": "report.csv",
}

STAGE_IO = {
    "corpus": ([], ["corpus"]),
    "extract": (["corpus"], ["ideas"]),
    "synth": (["corpus", "ideas"], ["synth"]),
    "embed": (["ideas", "synth"], ["embeddings"]),
    "train": (["corpus", "ideas", "synth", "embeddings"],
              ["split", "pairs", "head", "curve"]),
    "index": (["ideas", "head", "embeddings"], ["index"]),
    "eval-retrieval": (["corpus", "ideas", "synth", "split", "head", "index",
                        "embeddings"], ["retrieval_metrics"]),
    "score": (["corpus", "ideas", "synth", "split", "head", "index",
               "embeddings"], ["scores_train", "scores_test"]),
    "tree": (["scores_train"], ["tree"]),
    "eval-nd": (["tree", "scores_test"], ["nd_metrics", "nd_verdicts"]),
    "report": (["retrieval_metrics", "nd_metrics"], ["report_md", "report_csv"]),
}

PRODUCER = {artifact: stage
            for stage, (_, outputs) in STAGE_IO.items()
            for artifact in outputs}


@dataclass(frozen=True)
class RunConfig:
    domain: str = "marketing"
    rng_seed: int = 42
    mock: bool = True
    pair_source: str = "kd"
    seeds: str = "seeds.jsonl"
    references: str = "references.jsonl"
    workdir: str = "out"
    train_ratio: float = 0.6
    valid_ratio: float = 0.1
    test_ratio: float = 0.3
    k_list: tuple[int, ...] = (1, 5, 10, 20, 50)
    K: int = 10
    pool: str = "per-seed"
    learning_rate: float = 2e-5
    batch_size: int = 16
    temperature: float = 0.05
    epochs: int = 10
    negative_mode: str = "full_corpus"
    synth_rephrased: int = 4
    synth_partial: int = 3
    synth_incremental: int = 3
    nd_probe_mode: str = "duplicate"
    nd_train_n: int = 20
    nd_test_n: int = 20
    max_depth: int = 4
    min_leaf: int = 2
    metadata_base_url: str = ""
    llm_base_url: str = ""
    llm_model: str = "default"
    embed_base_url: str = ""
    embed_model: str = "hash-embed"
    embed_dim: int = 64
    config_dir: str = "."

    def __post_init__(self):
        object.__setattr__(self, "k_list", tuple(int(k) for k in self.k_list))
        if self.domain not in ("marketing", "nlp"):
            raise ConfigError(f"domain must be marketing or nlp, got {self.domain!r}")
        ratios = (self.train_ratio, self.valid_ratio, self.test_ratio)
        if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError("split ratios must be positive and sum to 1")
        if list(self.k_list) != sorted(self.k_list) or len(self.k_list) == 0:
            raise ConfigError("k_list must be nonempty and sorted ascending")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.pool not in ("per-seed", "global"):
            raise ConfigError(f"pool must be per-seed or global, got {self.pool!r}")
        if self.pair_source not in ("kd", "ra"):
            raise ConfigError(f"pair_source must be kd or ra, got {self.pair_source!r}")
        if self.nd_probe_mode not in ("duplicate", "paper"):
            raise ConfigError("nd_probe_mode must be duplicate or paper")
        for name in ("synth_rephrased", "synth_partial", "synth_incremental"):
            value = getattr(self, name)
            if not 0 <= value <= 10:
                raise ConfigError(f"{name} must be in [0, 10]")
        if self.synth_rephrased + self.synth_partial + self.synth_incremental < 1:
            raise ConfigError("at least one synthesis kind must be enabled")
        if min(self.nd_train_n, self.nd_test_n) < 2:
            raise ConfigError("nd_train_n and nd_test_n must be >= 2")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be positive")

    # -- paths ---------------------------------------------------------------

    def _resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else Path(self.config_dir) / p

    @property
    def seeds_path(self) -> Path:
        return self._resolve(self.seeds)

    @property
    def references_path(self) -> Path:
        return self._resolve(self.references)

    @property
    def workdir_path(self) -> Path:
        return self._resolve(self.workdir)

    def artifact_path(self, name: str) -> Path:
        return self.workdir_path / ARTIFACTS[name]

    def fingerprint(self) -> str:
        values = asdict(self)
        values.pop("config_dir")
        payload = json.dumps(values, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_toml(cls, path: str | Path, seed: int | None = None,
                  k: int | None = None, mock: bool | None = None) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        known = {f.name for f in fields(cls)} - {"config_dir"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        raw["config_dir"] = str(path.parent)
        if seed is not None:
            raw["rng_seed"] = seed
        if k is not None:
            raw["K"] = k
        if mock:
            raw["mock"] = True
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"bad config value: {exc}") from exc


# -- shared loaders ----------------------------------------------------------


def make_gateway(cfg: RunConfig, run_id: str) -> ChatGateway:
    if cfg.mock:
        backend = OfflinePipelineBackend()
    else:
        if not cfg.llm_base_url:
            raise ConfigError("llm_base_url required when mock=false")
        backend = HttpChatBackend(cfg.llm_base_url)
    return ChatGateway(backend,
                       transcript_path=cfg.workdir_path / "transcript.jsonl",
                       run_id=run_id)


def make_embedding_client(cfg: RunConfig):
    if cfg.mock:
        return HashEmbeddingClient(model=cfg.embed_model, dim=cfg.embed_dim)
    if not cfg.embed_base_url:
        raise ConfigError("embed_base_url required when mock=false")
    return HttpEmbeddingClient(cfg.embed_base_url, model=cfg.embed_model,
                               dim=cfg.embed_dim)


def embedding_lookup(cfg: RunConfig, cache: EmbeddingCache,
                     items: list[tuple[str, str]]) -> dict:
    """Map item ids to cached base vectors; (id, text) pairs in, dict out."""
    lookup = {}
    for item_id, text in items:
        vec = cache.get(cache_key(cfg.embed_model, text))
        if vec is None:
            raise StageInputError(
                f"no cached embedding for {item_id}; run the embed stage",
                producer_stage="embed")
        lookup[item_id] = vec
    return lookup


def _extracted(ideas: list[Idea]) -> list[Idea]:
    return [i for i in ideas if i.status == "extracted"]


def _leakage_pool(corpus: Corpus, index_ids, cutoff) -> set[str]:
    """Ids of corpus papers published on or before the cutoff date."""
    pool = set()
    for pid in index_ids:
        rec = corpus.get(pid)
        if rec.publication_date is not None and rec.publication_date <= cutoff:
            pool.add(pid)
    return pool


# -- stages ------------------------------------------------------------------


def stage_corpus(cfg: RunConfig) -> None:
    if not cfg.seeds_path.exists():
        raise StageInputError(f"seed file not found: {cfg.seeds_path}")
    seeds = [r for r in load_records(cfg.seeds_path) if r.is_seed]
    if not seeds:
        raise ValidationError("seed file holds no seed records")
    if cfg.mock:
        if not cfg.references_path.exists():
            raise StageInputError(
                f"reference fixture not found: {cfg.references_path}")
        fetcher = JsonlFetcher(cfg.references_path)
    else:
        if not cfg.metadata_base_url:
            raise ConfigError("metadata_base_url required when mock=false")
        fetcher = HttpFetcher(cfg.metadata_base_url)
    corpus = build_closure_corpus(seeds, fetcher)
    missing = verify_closure(corpus)
    if missing:
        raise ValidationError(f"closure violated for {missing[:5]}")
    save_corpus(corpus, cfg.artifact_path("corpus"))


def stage_extract(cfg: RunConfig) -> None:
    corpus = load_corpus(cfg.artifact_path("corpus"))
    gw = make_gateway(cfg, run_id="extract")
    ideas = []
    papers = sorted(list(corpus.seeds.values()) + list(corpus.references.values()),
                    key=lambda r: r.id)
    for paper in papers:
        if not paper.title or not paper.abstract:
            logger.warning("skipping %s: no title/abstract", paper.id)
            continue
        ideas.append(extract_idea(paper, cfg.domain, gw))
    save_ideas(ideas, cfg.artifact_path("ideas"))


def stage_synth(cfg: RunConfig) -> None:
    corpus = load_corpus(cfg.artifact_path("corpus"))
    ideas = load_ideas(cfg.artifact_path("ideas"))
    by_id = {i.paper_id: i for i in _extracted(ideas)}
    seed_ids = sorted(sid for sid in corpus.seeds if sid in by_id)
    gw = make_gateway(cfg, run_id="synth")
    rng = np.random.default_rng(cfg.rng_seed)
    out = []
    for sid in seed_ids:
        anchor = by_id[sid]
        if cfg.synth_rephrased:
            out.extend(synthesize([anchor], "rephrased", cfg.synth_rephrased, gw))
        if cfg.synth_partial:
            out.extend(synthesize([anchor], "partial", cfg.synth_partial, gw))
        if cfg.synth_incremental and len(seed_ids) > 1:
            others = [s for s in seed_ids if s != sid]
            partner = by_id[others[int(rng.integers(0, len(others)))]]
            out.extend(synthesize([anchor, partner], "incremental",
                                  cfg.synth_incremental, gw))
    save_synthesized(out, cfg.artifact_path("synth"))


def stage_embed(cfg: RunConfig) -> None:
    ideas = _extracted(load_ideas(cfg.artifact_path("ideas")))
    synth = load_synthesized(cfg.artifact_path("synth"))
    texts = [i.text for i in ideas] + [s.text for s in synth]
    client = make_embedding_client(cfg)
    cache = EmbeddingCache(cfg.artifact_path("embeddings"))
    embed_texts(texts, client, cache)


def _load_core(cfg: RunConfig):
    corpus = load_corpus(cfg.artifact_path("corpus"))
    ideas = _extracted(load_ideas(cfg.artifact_path("ideas")))
    synth = load_synthesized(cfg.artifact_path("synth"))
    cache = EmbeddingCache(cfg.artifact_path("embeddings"))
    items = [(i.paper_id, i.text) for i in ideas] + [(s.id, s.text) for s in synth]
    lookup = embedding_lookup(cfg, cache, items)
    return corpus, ideas, synth, lookup


def stage_train(cfg: RunConfig) -> None:
    corpus, ideas, synth, lookup = _load_core(cfg)
    result = split_dataset(sorted(corpus.seeds), synth,
                           ratios=(cfg.train_ratio, cfg.valid_ratio,
                                   cfg.test_ratio),
                           rng_seed=cfg.rng_seed)
    result.save(cfg.artifact_path("split"))
    if cfg.pair_source == "kd":
        train_synth = [s for s in synth if result.synthesized[s.id] == "train"]
        pairs = build_pair_set(ideas, train_synth, source="kd")
    else:
        train_seeds = set(result.seeds_in("train"))
        pairs = [p for p in build_pair_set(ideas, [], source="ra", corpus=corpus)
                 if p.anchor_id in train_seeds]
    if not pairs:
        raise ValidationError("no training pairs in the train partition")
    save_pairs(pairs, cfg.artifact_path("pairs"))
    head = ProjectionHead.identity(cfg.embed_dim)
    tcfg = TrainConfig(learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
                       temperature=cfg.temperature, epochs=cfg.epochs,
                       negative_mode=cfg.negative_mode, rng_seed=cfg.rng_seed)
    trained, curve = train(head, pairs, tcfg, lookup)
    trained.save(cfg.artifact_path("head"), fingerprint=cfg.fingerprint())
    cfg.artifact_path("curve").write_text(json.dumps(curve), encoding="utf-8")


def stage_index(cfg: RunConfig) -> None:
    ideas = _extracted(load_ideas(cfg.artifact_path("ideas")))
    cache = EmbeddingCache(cfg.artifact_path("embeddings"))
    lookup = embedding_lookup(cfg, cache, [(i.paper_id, i.text) for i in ideas])
    head = ProjectionHead.load(cfg.artifact_path("head"))
    index = build_index(ideas, head, lookup)
    index.save(cfg.artifact_path("index"))


def _retrieval_runs(cfg: RunConfig, corpus, synth, lookup, index, head):
    """Ranked lists for every test-partition synthesized query."""
    runs = []
    for syn in synth:
        query_vec = project(head, lookup[syn.id])
        if cfg.pool == "per-seed":
            cutoff = max(corpus.seeds[a].publication_date for a in syn.anchor_ids)
            pool = _leakage_pool(corpus, index.ids, cutoff)
        else:
            pool = None
        ranked = top_k(index, query_vec, max(cfg.k_list), pool=pool,
                       query_id=syn.id)
        runs.append((ranked, tuple(syn.anchor_ids), syn.kind))
    return runs


def stage_eval_retrieval(cfg: RunConfig) -> None:
    corpus, ideas, synth, lookup = _load_core(cfg)
    result = SplitResult.load(cfg.artifact_path("split"))
    test_synth = [s for s in synth if result.synthesized[s.id] == "test"]
    if not test_synth:
        raise ValidationError("no synthesized queries in the test partition")
    trained_head = ProjectionHead.load(cfg.artifact_path("head"))
    trained_index = Index.load(cfg.artifact_path("index"))
    vanilla_head = ProjectionHead.identity(cfg.embed_dim)
    vanilla_index = build_index(ideas, vanilla_head, lookup)
    report = {"k_list": list(cfg.k_list), "pool": cfg.pool,
              "n_queries": len(test_synth)}
    for variant, head, index in (("vanilla", vanilla_head, vanilla_index),
                                 ("distilled", trained_head, trained_index)):
        tagged = _retrieval_runs(cfg, corpus, test_synth, lookup, index, head)
        untagged = [(ranked, rel) for ranked, rel, _ in tagged]
        report[variant] = ir_metrics.eval_runs(untagged, cfg.k_list)
        report[variant]["groups"] = ir_metrics.group_eval(tagged, cfg.k_list)
    cfg.artifact_path("retrieval_metrics").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fresh_probe_text(partition: str, i: int) -> str:
    return (f"Study of uncharted direction {partition}-{i}: a previously "
            f"unexplored question with no antecedent in the corpus, probing "
            f"frontier topic {i}.")


def _build_probes(cfg: RunConfig, corpus, ideas, synth, result, rng):
    """Labeled ND probe ideas per partition, balanced 1:1."""
    by_id = {i.paper_id: i for i in ideas}
    probes = {"train": [], "test": []}
    for partition, total in (("train", cfg.nd_train_n), ("test", cfg.nd_test_n)):
        per_class = total // 2
        part_seeds = [s for s in result.seeds_in(partition) if s in by_id]
        if not part_seeds:
            raise ValidationError(f"no usable seeds in partition {partition}")
        if cfg.nd_probe_mode == "duplicate":
            picks = [str(s) for s in rng.choice(
                part_seeds, size=per_class, replace=len(part_seeds) < per_class)]
            for i, sid in enumerate(picks):
                probes[partition].append((Idea(
                    paper_id=f"probe-dup-{partition}-{i:03d}",
                    text=by_id[sid].text), dtree.NON_NOVEL, None))
            for i in range(per_class):
                probes[partition].append((Idea(
                    paper_id=f"probe-new-{partition}-{i:03d}",
                    text=_fresh_probe_text(partition, i)), dtree.NOVEL, None))
        else:
            picks = [str(s) for s in rng.choice(
                part_seeds, size=per_class, replace=len(part_seeds) < per_class)]
            for sid in picks:
                probes[partition].append((by_id[sid], dtree.NOVEL, sid))
            part_synth = [s for s in synth
                          if result.synthesized[s.id] == partition]
            if not part_synth:
                raise ValidationError(
                    f"no synthesized ideas in partition {partition}")
            idx = rng.choice(len(part_synth), size=per_class,
                             replace=len(part_synth) < per_class)
            for j in idx:
                syn = part_synth[int(j)]
                probes[partition].append(
                    (Idea(paper_id=syn.id, text=syn.text), dtree.NON_NOVEL,
                     syn.anchor_ids[0]))
    return probes


def stage_score(cfg: RunConfig) -> None:
    corpus, ideas, synth, lookup = _load_core(cfg)
    result = SplitResult.load(cfg.artifact_path("split"))
    head = ProjectionHead.load(cfg.artifact_path("head"))
    index = Index.load(cfg.artifact_path("index"))
    by_id = {i.paper_id: i for i in ideas}
    gw = make_gateway(cfg, run_id="score")
    client = make_embedding_client(cfg)
    probe_cache = EmbeddingCache(cfg.workdir_path / "probe_embeddings.jsonl")
    rng = np.random.default_rng(cfg.rng_seed)
    probes = _build_probes(cfg, corpus, ideas, synth, result, rng)
    for partition, artifact in (("train", "scores_train"), ("test", "scores_test")):
        rows = []
        for probe, label, pool_seed in probes[partition]:
            base = embed_texts([probe.text], client, probe_cache)[0]
            pool = None
            if cfg.nd_probe_mode == "paper" and cfg.pool == "per-seed":
                cutoff = corpus.seeds[pool_seed].publication_date
                pool = _leakage_pool(corpus, index.ids, cutoff)
            if probe.paper_id in index.ids:
                pool = (pool if pool is not None else set(index.ids))
                pool = pool - {probe.paper_id}
            ranked = novelty.retrieve_candidates(
                probe.paper_id, project(head, base), index, cfg.K, pool=pool)
            candidates = [by_id[cid] for cid in ranked.ranked_ids]
            vector = novelty.pad_score_vector(
                novelty.score_novelty(probe, candidates, gw), cfg.K)
            rows.append((vector, label))
        novelty.save_score_dataset(rows, cfg.artifact_path(artifact))


def stage_tree(cfg: RunConfig) -> None:
    rows = novelty.load_score_dataset(cfg.artifact_path("scores_train"))
    dataset = [(vector.scores, label) for vector, label in rows]
    cfg_tree = dtree.TreeConfig(max_depth=cfg.max_depth, min_leaf=cfg.min_leaf,
                                rng_seed=cfg.rng_seed)
    tree = dtree.train_decision_tree(dataset, cfg_tree)
    tree.save(cfg.artifact_path("tree"))


def stage_eval_nd(cfg: RunConfig) -> None:
    tree = dtree.DecisionTree.load(cfg.artifact_path("tree"))
    rows = novelty.load_score_dataset(cfg.artifact_path("scores_test"))
    preds = []
    with cfg.artifact_path("nd_verdicts").open("w", encoding="utf-8") as fh:
        for vector, truth in rows:
            label, path = dtree.predict_with_path(tree, vector.scores)
            preds.append(label)
            verdict = {"query_id": vector.query_id,
                       "candidate_ids": list(vector.candidate_ids),
                       "scores": list(vector.scores),
                       "label": label, "tree_path": path, "truth": truth}
            fh.write(json.dumps(verdict, sort_keys=True) + "\n")
    metrics = novelty.classification_metrics(preds, [t for _, t in rows])
    metrics["n"] = len(rows)
    cfg.artifact_path("nd_metrics").write_text(
        json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- report ------------------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def _improvement(vanilla: float, distilled: float) -> str:
    if vanilla == 0:
        return "n/a"
    return f"{(distilled - vanilla) / vanilla * 100:+.2f}%"


def _metric_keys(k_list) -> list[str]:
    return [f"acc@{k}" for k in k_list] + ["map"]


def _retrieval_table(block: dict, k_list) -> list[str]:
    keys = _metric_keys(k_list)
    header = "| Variant | " + " | ".join(k.replace("acc@", "Acc@").upper()
                                         if k == "map" else
                                         k.replace("acc@", "Acc@")
                                         for k in keys) + " |"
    sep = "|---" * (len(keys) + 1) + "|"
    lines = [header, sep]
    for variant in ("vanilla", "distilled"):
        row = block.get(variant)
        if row is None:
            continue
        cells = " | ".join(_fmt(row[k]) for k in keys)
        lines.append(f"| {variant.capitalize()} | {cells} |")
    if "vanilla" in block and "distilled" in block:
        cells = " | ".join(
            _improvement(block["vanilla"][k], block["distilled"][k]) for k in keys)
        lines.append(f"| Improvement | {cells} |")
    return lines


def emit_report(retrieval: dict | None = None,
                nd: dict | None = None) -> tuple[str, str]:
    """Render metrics artifacts as a Markdown report and a flat CSV table.

    Either artifact may be absent (its section is skipped), but at least
    one must be given. With a single retrieval variant the tables carry
    no improvement row.
    """
    if retrieval is None and nd is None:
        raise ValidationError("report needs at least one metrics artifact")
    lines = ["# Run report", ""]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["section", "group", "variant", "metric", "value"])

    if retrieval is not None:
        k_list = retrieval["k_list"]
        keys = _metric_keys(k_list)
        variants = [v for v in ("vanilla", "distilled") if v in retrieval]
        lines.append("## Idea retrieval (test split)")
        lines.append("")
        lines.extend(_retrieval_table(retrieval, k_list))
        lines.append("")
        lines.append("## Retrieval by synthesis kind")
        kinds = sorted({kind for v in variants
                        for kind in retrieval[v]["groups"]})
        for kind in kinds:
            lines.append("")
            lines.append(f"### {kind.capitalize()} ideas")
            lines.append("")
            block = {v: retrieval[v]["groups"][kind] for v in variants
                     if kind in retrieval[v]["groups"]}
            lines.extend(_retrieval_table(block, k_list))
        lines.append("")
        for variant in variants:
            for key in keys:
                writer.writerow(["retrieval", "all", variant, key,
                                 _fmt(retrieval[variant][key])])
            for kind in sorted(retrieval[variant]["groups"]):
                for key in keys:
                    writer.writerow(["retrieval", kind, variant, key,
                                     _fmt(retrieval[variant]["groups"][kind][key])])
        if len(variants) == 2:
            for key in keys:
                writer.writerow(["retrieval", "all", "improvement", key,
                                 _improvement(retrieval["vanilla"][key],
                                              retrieval["distilled"][key])])

    if nd is not None:
        lines.append("## Novelty detection (test probes)")
        lines.append("")
        lines.append("| Method | Accuracy | Precision | Recall | F1 |")
        lines.append("|---|---|---|---|---|")
        lines.append("| Retrieval + decision tree | "
                     + " | ".join(_fmt(nd[m]) for m in
                                  ("accuracy", "precision", "recall", "f1")) + " |")
        lines.append("")
        for metric in ("accuracy", "precision", "recall", "f1"):
            writer.writerow(["novelty", "all", "tree", metric, _fmt(nd[metric])])

    return "\n".join(lines), buf.getvalue()


def stage_report(cfg: RunConfig) -> None:
    ret = json.loads(cfg.artifact_path("retrieval_metrics").read_text("utf-8"))
    nd = json.loads(cfg.artifact_path("nd_metrics").read_text("utf-8"))
    markdown, table = emit_report(ret, nd)
    cfg.artifact_path("report_md").write_text(markdown, encoding="utf-8")
    cfg.artifact_path("report_csv").write_text(table, encoding="utf-8")


STAGE_FUNCS = {
    "corpus": stage_corpus,
    "extract": stage_extract,
    "synth": stage_synth,
    "embed": stage_embed,
    "train": stage_train,
    "index": stage_index,
    "eval-retrieval": stage_eval_retrieval,
    "score": stage_score,
    "tree": stage_tree,
    "eval-nd": stage_eval_nd,
    "report": stage_report,
}


# -- manifest and stage runner ----------------------------------------------


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _load_manifest(cfg: RunConfig) -> dict:
    path = cfg.workdir_path / "manifest.json"
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {"stages": {}}


def _save_manifest(cfg: RunConfig, manifest: dict) -> None:
    (cfg.workdir_path / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_stage(name: str, cfg: RunConfig) -> dict:
    """Run one stage (idempotently) and return its manifest entry."""
    if name not in STAGE_FUNCS:
        raise ConfigError(f"unknown stage {name!r}; stages: {', '.join(STAGES)}")
    cfg.workdir_path.mkdir(parents=True, exist_ok=True)
    inputs, outputs = STAGE_IO[name]
    input_hashes = {}
    for artifact in inputs:
        path = cfg.artifact_path(artifact)
        if not path.exists():
            raise StageInputError(
                f"stage '{name}' needs {path.name}, produced by the "
                f"'{PRODUCER[artifact]}' stage; run that first",
                producer_stage=PRODUCER[artifact])
        input_hashes[ARTIFACTS[artifact]] = _hash_file(path)

    manifest = _load_manifest(cfg)
    entry = manifest["stages"].get(name)
    fingerprint = cfg.fingerprint()
    if entry and entry["config_fingerprint"] == fingerprint \
            and entry["inputs"] == input_hashes:
        current = {}
        for artifact in outputs:
            path = cfg.artifact_path(artifact)
            if not path.exists():
                break
            current[ARTIFACTS[artifact]] = _hash_file(path)
        else:
            if current == entry["outputs"]:
                entry = dict(entry)
                entry["cache_hit"] = True
                manifest["stages"][name] = entry
                _save_manifest(cfg, manifest)
                logger.info("stage %s: cache hit", name)
                return entry

    start = time.monotonic()
    STAGE_FUNCS[name](cfg)
    duration = time.monotonic() - start
    output_hashes = {}
    for artifact in outputs:
        path = cfg.artifact_path(artifact)
        if not path.exists():
            raise ValidationError(f"stage '{name}' did not write {path.name}")
        output_hashes[ARTIFACTS[artifact]] = _hash_file(path)
    entry = {"stage": name, "inputs": input_hashes, "outputs": output_hashes,
             "config_fingerprint": fingerprint,
             "duration_s": round(duration, 3), "cache_hit": False,
             "completed_at": datetime.now(timezone.utc).isoformat()}
    manifest["stages"][name] = entry
    _save_manifest(cfg, manifest)
    return entry


def run_all(cfg: RunConfig) -> list[dict]:
    return [run_stage(name, cfg) for name in STAGES]


# -- artifact access for the service ----------------------------------------


@dataclass
class LoadedArtifacts:
    """Everything the query-serving side needs, loaded once."""

    cfg: RunConfig
    corpus: Corpus
    ideas: dict[str, Idea]
    head: ProjectionHead
    index: Index
    tree: dtree.DecisionTree
    gateway: ChatGateway
    embed_client: object
    probe_cache: EmbeddingCache

    def embed(self, text: str):
        return embed_texts([text], self.embed_client, self.probe_cache)[0]

    def stats(self) -> dict:
        return corpus_stats(self.corpus)


def load_artifacts(cfg: RunConfig) -> LoadedArtifacts:
    for artifact, stage in (("corpus", "corpus"), ("ideas", "extract"),
                            ("head", "train"), ("index", "index"),
                            ("tree", "tree")):
        if not cfg.artifact_path(artifact).exists():
            raise StageInputError(
                f"artifact {ARTIFACTS[artifact]} missing; run the "
                f"'{stage}' stage first", producer_stage=stage)
    ideas = _extracted(load_ideas(cfg.artifact_path("ideas")))
    return LoadedArtifacts(
        cfg=cfg,
        corpus=load_corpus(cfg.artifact_path("corpus")),
        ideas={i.paper_id: i for i in ideas},
        head=ProjectionHead.load(cfg.artifact_path("head")),
        index=Index.load(cfg.artifact_path("index")),
        tree=dtree.DecisionTree.load(cfg.artifact_path("tree")),
        gateway=make_gateway(cfg, run_id="serve"),
        embed_client=make_embedding_client(cfg),
        probe_cache=EmbeddingCache(cfg.workdir_path / "probe_embeddings.jsonl"))
