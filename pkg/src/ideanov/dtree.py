"""Binary CART classifier over novelty score vectors.

Features are the rubric scores sorted ascending, which makes prediction
invariant to candidate order and puts the most-similar candidate's score
in feature 0. Splitting is greedy Gini with deterministic tie-breaking
(lowest feature index, then lowest threshold), thresholds at midpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import ValidationError

NOVEL = "Novel"
NON_NOVEL = "NonNovel"
LABELS = (NON_NOVEL, NOVEL)


@dataclass(frozen=True)
class TreeNode:
    """Internal node when feature_index is set; leaf otherwise."""

    feature_index: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    label: str | None = None
    class_counts: tuple[int, int] | None = None  # (NonNovel, Novel)

    @property
    def is_leaf(self) -> bool:
        return self.feature_index is None

    def to_json(self) -> dict:
        if self.is_leaf:
            return {"label": self.label, "class_counts": list(self.class_counts)}
        return {"feature_index": self.feature_index, "threshold": self.threshold,
                "left": self.left.to_json(), "right": self.right.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "TreeNode":
        if "label" in obj:
            return cls(label=obj["label"],
                       class_counts=tuple(obj["class_counts"]))
        return cls(feature_index=obj["feature_index"], threshold=obj["threshold"],
                   left=cls.from_json(obj["left"]), right=cls.from_json(obj["right"]))


@dataclass(frozen=True)
class DecisionTree:
    root: TreeNode
    n_features: int
    max_depth: int | None = None

    def to_json(self) -> dict:
        return {"n_features": self.n_features, "max_depth": self.max_depth,
                "root": self.root.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "DecisionTree":
        return cls(root=TreeNode.from_json(obj["root"]),
                   n_features=obj["n_features"], max_depth=obj["max_depth"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DecisionTree":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = 4
    min_leaf: int = 2
    rng_seed: int = 0  # reserved for config identity; training is deterministic

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("max_depth must be nonnegative")
        if self.min_leaf < 1:
            raise ValidationError("min_leaf must be >= 1")


def features_from_scores(scores: Sequence[float]) -> tuple[float, ...]:
    """Sorted ascending scores; the permutation-invariant feature vector."""
    return tuple(sorted(float(s) for s in scores))


def _gini(counts: Sequence[int]) -> float:
    total = sum(counts)
    if total == 0:
        return 0.0
    return 1.0 - sum((c / total) ** 2 for c in counts)


def _counts(labels: Sequence[str]) -> tuple[int, int]:
    return (sum(1 for y in labels if y == NON_NOVEL),
            sum(1 for y in labels if y == NOVEL))


def _majority(labels: Sequence[str]) -> str:
    non_novel, novel = _counts(labels)
    # ties resolve to NonNovel: the conservative verdict for a novelty claim
    return NOVEL if novel > non_novel else NON_NOVEL


def _leaf(labels: Sequence[str]) -> TreeNode:
    return TreeNode(label=_majority(labels), class_counts=_counts(labels))


def _best_split(X: list[tuple[float, ...]], y: list[str], min_leaf: int):
    parent = _gini(_counts(y))
    n = len(y)
    best = None  # (impurity_drop, feature, threshold)
    for f in range(len(X[0])):
        values = sorted({x[f] for x in X})
        for lo, hi in zip(values, values[1:]):
            threshold = (lo + hi) / 2.0
            left = [y[i] for i in range(n) if X[i][f] <= threshold]
            right = [y[i] for i in range(n) if X[i][f] > threshold]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            weighted = (len(left) * _gini(_counts(left)) +
                        len(right) * _gini(_counts(right))) / n
            drop = parent - weighted
            if drop <= 1e-12:
                continue
            key = (-drop, f, threshold)
            if best is None or key < best[0]:
                best = (key, f, threshold)
    if best is None:
        return None
    return best[1], best[2]


def _any_split(X: list[tuple[float, ...]], y: list[str], min_leaf: int):
    """First valid split regardless of impurity gain.

    An impure node can lack any gain-positive split (XOR-style symmetry)
    while still holding separable vectors; splitting anyway lets the
    recursion reach pure leaves on conflict-free data.
    """
    for f in range(len(X[0])):
        values = sorted({x[f] for x in X})
        for lo, hi in zip(values, values[1:]):
            threshold = (lo + hi) / 2.0
            n_left = sum(1 for x in X if x[f] <= threshold)
            if n_left >= min_leaf and len(X) - n_left >= min_leaf:
                return f, threshold
    return None


def _grow(X: list[tuple[float, ...]], y: list[str], depth: int,
          cfg: TreeConfig) -> TreeNode:
    if len(set(y)) == 1:
        return _leaf(y)
    if cfg.max_depth is not None and depth >= cfg.max_depth:
        return _leaf(y)
    if len(y) < 2 * cfg.min_leaf:
        return _leaf(y)
    split = _best_split(X, y, cfg.min_leaf)
    if split is None:
        split = _any_split(X, y, cfg.min_leaf)
    if split is None:
        return _leaf(y)
    f, threshold = split
    left_idx = [i for i in range(len(y)) if X[i][f] <= threshold]
    right_idx = [i for i in range(len(y)) if X[i][f] > threshold]
    return TreeNode(
        feature_index=f, threshold=threshold,
        left=_grow([X[i] for i in left_idx], [y[i] for i in left_idx],
                   depth + 1, cfg),
        right=_grow([X[i] for i in right_idx], [y[i] for i in right_idx],
                    depth + 1, cfg))


def train_decision_tree(dataset: Sequence[tuple[Sequence[float], str]],
                        cfg: TreeConfig | None = None) -> DecisionTree:
    """Greedy CART fit on (scores, label) rows; deterministic throughout.

    A single-class dataset yields a one-leaf tree. Score vectors are
    sorted into features here, so callers pass raw candidate order.
    """
    cfg = cfg or TreeConfig()
    if not dataset:
        raise ValidationError("empty training dataset")
    for _, label in dataset:
        if label not in LABELS:
            raise ValidationError(f"unknown label {label!r}")
    X = [features_from_scores(scores) for scores, _ in dataset]
    k = len(X[0])
    if k == 0 or any(len(x) != k for x in X):
        raise ValidationError("score vectors must share one positive length K")
    y = [label for _, label in dataset]
    root = _grow(X, y, 0, cfg)
    return DecisionTree(root=root, n_features=k, max_depth=cfg.max_depth)


def predict_with_path(tree: DecisionTree, scores: Sequence[float]
                      ) -> tuple[str, list[str]]:
    """Label plus the traversed decision path, for verdict audit trails."""
    x = features_from_scores(scores)
    if len(x) != tree.n_features:
        raise ValidationError(
            f"score vector length {len(x)} != trained K {tree.n_features}")
    node = tree.root
    path = []
    while not node.is_leaf:
        value = x[node.feature_index]
        if value <= node.threshold:
            path.append(f"f{node.feature_index}<={node.threshold:.4f}")
            node = node.left
        else:
            path.append(f"f{node.feature_index}>{node.threshold:.4f}")
            node = node.right
    path.append(f"leaf:{node.label}")
    return node.label, path


def predict(tree: DecisionTree, scores: Sequence[float]) -> str:
    return predict_with_path(tree, scores)[0]
