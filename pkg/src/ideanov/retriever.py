"""Distilled idea retriever: a linear projection head over frozen base
embeddings, trained with a temperature-scaled contrastive objective.

The head starts as the identity, so the untrained retriever ranks exactly
like raw base-embedding cosine; training moves it away from that baseline
using anchor/variant pairs. Retrieval is an exact cosine scan.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embedding import EmbeddingVector
from .errors import ConfigError, DomainError, ValidationError
from .ideagen import TrainingPair

logger = logging.getLogger(__name__)

NEGATIVE_MODES = ("full_corpus", "in_batch")


@dataclass(frozen=True)
class ProjectionHead:
    weight: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        if w.ndim != 2:
            raise ValidationError("projection weight must be a matrix")
        if not np.all(np.isfinite(w)):
            raise ValidationError("projection weight has non-finite entries")
        if w.shape[0] > w.shape[1]:
            raise ValidationError("out_dim must not exceed in_dim")
        object.__setattr__(self, "weight", w)

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def identity(cls, dim: int) -> "ProjectionHead":
        return cls(weight=np.eye(dim))

    def save(self, path: str | Path, fingerprint: str = "") -> None:
        obj = {"in_dim": self.in_dim, "out_dim": self.out_dim,
               "fingerprint": fingerprint, "weight": self.weight.tolist()}
        Path(path).write_text(json.dumps(obj), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ProjectionHead":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        head = cls(weight=np.asarray(obj["weight"], dtype=np.float64))
        if head.in_dim != obj["in_dim"] or head.out_dim != obj["out_dim"]:
            raise ValidationError("projection head dims do not match header")
        return head


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    batch_size: int = 16
    temperature: float = 0.05
    epochs: int = 30
    negative_mode: str = "full_corpus"
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.negative_mode not in NEGATIVE_MODES:
            raise ConfigError(f"unknown negative_mode {self.negative_mode!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.negative_mode == "in_batch" and self.batch_size < 2:
            raise ConfigError("in_batch mode needs batch_size >= 2")


@dataclass(frozen=True)
class RankedList:
    query_id: str
    ranked_ids: tuple[str, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "ranked_ids", tuple(self.ranked_ids))
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        if len(self.ranked_ids) != len(self.scores):
            raise ValidationError("ranked ids and scores differ in length")
        if len(set(self.ranked_ids)) != len(self.ranked_ids):
            raise ValidationError("ranked ids contain duplicates")
        for prev, cur in zip(self.scores, self.scores[1:]):
            if cur > prev + 1e-12:
                raise ValidationError("scores must be non-increasing")


def project(head: ProjectionHead, base: EmbeddingVector) -> EmbeddingVector:
    if base.dim != head.in_dim:
        raise ValidationError(f"base dim {base.dim} != head in_dim {head.in_dim}")
    z = head.weight @ base.array
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        raise DomainError("projection produced a zero vector")
    return EmbeddingVector.from_array(z / norm, source="projected")


def _as_array(vec) -> np.ndarray:
    if isinstance(vec, EmbeddingVector):
        return vec.array
    return np.asarray(vec, dtype=np.float64)


def _contrastive_setup(head: ProjectionHead, pairs: Sequence[TrainingPair],
                       pool_ids: Sequence[str],
                       embeddings: Mapping[str, EmbeddingVector]):
    """Shared geometry for loss and gradient over one batch."""
    if len(pool_ids) < 2:
        raise ConfigError("anchor pool must hold at least 2 anchors")
    pool_index = {pid: i for i, pid in enumerate(pool_ids)}
    if len(pool_index) != len(pool_ids):
        raise ValidationError("anchor pool contains duplicate ids")
    for pair in pairs:
        if pair.anchor_id not in pool_index:
            raise ValidationError(f"pair anchor {pair.anchor_id} not in anchor pool")
        for pid in (pair.anchor_id, pair.positive_id):
            if pid not in embeddings:
                raise ValidationError(f"no base embedding for id {pid}")
    W = head.weight
    E = np.stack([_as_array(embeddings[pid]) for pid in pool_ids])
    Z = E @ W.T
    r = np.linalg.norm(Z, axis=1)
    if np.any(r == 0.0):
        raise DomainError("an anchor projects to the zero vector")
    U = Z / r[:, None]
    G = np.stack([_as_array(embeddings[p.positive_id]) for p in pairs])
    Zg = G @ W.T
    rg = np.linalg.norm(Zg, axis=1)
    if np.any(rg == 0.0):
        raise DomainError("a positive projects to the zero vector")
    V = Zg / rg[:, None]
    anchor_rows = np.array([pool_index[p.anchor_id] for p in pairs])
    return E, U, r, G, V, rg, anchor_rows


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def infonce_loss(head: ProjectionHead, pairs: Sequence[TrainingPair],
                 pool_ids: Sequence[str],
                 embeddings: Mapping[str, EmbeddingVector],
                 tau: float) -> float:
    """Mean over the batch of -log softmax(sim/tau) at each pair's anchor,
    normalized over the anchor pool.
    """
    if tau <= 0:
        raise ConfigError("temperature must be positive")
    if not pairs:
        raise ConfigError("empty pair batch")
    _, U, _, _, V, _, anchor_rows = _contrastive_setup(
        head, pairs, pool_ids, embeddings)
    losses = []
    for i in range(len(pairs)):
        logits = (U @ V[i]) / tau
        shifted = logits - logits.max()
        log_prob = shifted[anchor_rows[i]] - np.log(np.exp(shifted).sum())
        losses.append(-log_prob)
    return float(np.mean(losses))


def infonce_gradient(head: ProjectionHead, pairs: Sequence[TrainingPair],
                     pool_ids: Sequence[str],
                     embeddings: Mapping[str, EmbeddingVector],
                     tau: float) -> np.ndarray:
    """Analytic d(loss)/dW for infonce_loss; same shape as head.weight."""
    if tau <= 0:
        raise ConfigError("temperature must be positive")
    if not pairs:
        raise ConfigError("empty pair batch")
    E, U, r, G, V, rg, anchor_rows = _contrastive_setup(
        head, pairs, pool_ids, embeddings)
    grad = np.zeros_like(head.weight)
    for i in range(len(pairs)):
        v = V[i]
        sims = U @ v
        p = _softmax(sims / tau)
        c = p.copy()
        c[anchor_rows[i]] -= 1.0
        c /= tau
        # anchor-side term: sum_j c_j * d(sim_j)/dW through u_j
        q = c / r
        grad_i = np.outer(v, E.T @ q) - (U * (q * sims)[:, None]).T @ E
        # positive-side term: all sims share the same v
        w_vec = U.T @ c - float(c @ sims) * v
        grad_i += np.outer(w_vec / rg[i], G[i])
        grad += grad_i
    return grad / len(pairs)


def train(head: ProjectionHead, pairs: Sequence[TrainingPair], cfg: TrainConfig,
          embeddings: Mapping[str, EmbeddingVector]
          ) -> tuple[ProjectionHead, list[float]]:
    """Plain SGD over shuffled pair batches; returns per-epoch mean loss.

    Deterministic given cfg.rng_seed: shuffling is the only randomness.
    In full_corpus mode the softmax pool is every distinct training anchor;
    in_batch restricts it to the batch's anchors.
    """
    if not pairs:
        raise ConfigError("cannot train on an empty pair list")
    full_pool = sorted({p.anchor_id for p in pairs})
    rng = np.random.default_rng(cfg.rng_seed)
    W = head.weight.copy()
    curve: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        loss_sum = 0.0
        loss_n = 0
        for start in range(0, len(pairs), cfg.batch_size):
            batch = [pairs[i] for i in order[start:start + cfg.batch_size]]
            if cfg.negative_mode == "in_batch":
                pool = sorted({p.anchor_id for p in batch})
                if len(pool) < 2:
                    logger.warning("skipping batch with a single distinct anchor")
                    continue
            else:
                pool = full_pool
            current = ProjectionHead(weight=W)
            # size-weighted so a short final batch cannot skew the epoch mean
            loss_sum += len(batch) * infonce_loss(
                current, batch, pool, embeddings, cfg.temperature)
            loss_n += len(batch)
            grad = infonce_gradient(current, batch, pool, embeddings,
                                    cfg.temperature)
            W = W - cfg.learning_rate * grad
        if not loss_n:
            raise ConfigError("no trainable batch (all degenerate)")
        curve.append(loss_sum / loss_n)
    return ProjectionHead(weight=W), curve


@dataclass(frozen=True)
class Index:
    """Immutable projected-vector store for exact top-k scans."""

    ids: tuple[str, ...]
    matrix: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != len(self.ids):
            raise ValidationError("index matrix shape does not match ids")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("index ids contain duplicates")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dim", m.shape[1] if m.size else self.dim)

    def __len__(self) -> int:
        return len(self.ids)

    def save(self, path: str | Path) -> None:
        obj = {"ids": list(self.ids), "dim": self.dim,
               "vectors": self.matrix.tolist()}
        Path(path).write_text(json.dumps(obj), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Index":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        matrix = np.asarray(obj["vectors"], dtype=np.float64)
        if matrix.size == 0:
            matrix = matrix.reshape(0, obj["dim"])
        return cls(ids=tuple(obj["ids"]), matrix=matrix, dim=obj["dim"])


def build_index(ideas, head: ProjectionHead,
                embeddings: Mapping[str, EmbeddingVector]) -> Index:
    """Project every idea's base embedding; fails on any missing embedding."""
    ids = []
    rows = []
    for idea in ideas:
        if idea.paper_id not in embeddings:
            raise ValidationError(f"no base embedding for idea {idea.paper_id}")
        ids.append(idea.paper_id)
        rows.append(project(head, embeddings[idea.paper_id]).array)
    matrix = np.stack(rows) if rows else np.zeros((0, head.out_dim))
    return Index(ids=tuple(ids), matrix=matrix, dim=head.out_dim)


def top_k(index: Index, query, k: int, pool: set[str] | None = None,
          query_id: str = "query") -> RankedList:
    """Exact cosine scan, descending score, ties broken by ascending id."""
    if k < 1:
        raise ValidationError("k must be positive")
    q = _as_array(query)
    if index.dim and q.shape[0] != index.dim:
        raise ValidationError(f"query dim {q.shape[0]} != index dim {index.dim}")
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise DomainError("zero-norm query")
    q = q / norm
    if pool is None:
        keep = list(range(len(index.ids)))
    else:
        keep = [i for i, pid in enumerate(index.ids) if pid in pool]
    if not keep:
        raise DomainError("empty retrieval pool")
    scores = index.matrix[keep] @ q
    order = sorted(range(len(keep)), key=lambda i: (-scores[i], index.ids[keep[i]]))
    order = order[:min(k, len(keep))]
    return RankedList(query_id=query_id,
                      ranked_ids=tuple(index.ids[keep[i]] for i in order),
                      scores=tuple(float(scores[i]) for i in order))
