"""Disagreement prediction: dataset assembly, random forest, evaluation.

The classifier learns, from raw genotype vectors, whether the backends of an
ensemble campaign will disagree on the pass/fail verdict of a road.  Trees
are plain CART-style binary trees with Gini impurity, per-split feature
subsampling, and bootstrap bagging; the forest's predicted probability is
the fraction of trees voting for disagreement.  A one-tree forest doubles as
the plain decision-tree baseline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataset, FoldTooSmall, SingleBackendCampaign
from .road import RoadGenotype
from .search import CampaignResult

LABEL_AGREEMENT = 0
LABEL_DISAGREEMENT = 1

MODEL_SCHEMA = "forest/v1"


@dataclass
class DisagreementDataset:
    features: np.ndarray          # (n, 2 * segments) genotype vectors
    labels: np.ndarray            # (n,) 0 = agreement, 1 = disagreement
    provenance: tuple[str, ...]   # campaign identifiers
    duplicates_removed: int = 0

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def class_counts(self) -> tuple[int, int]:
        return (int((self.labels == LABEL_AGREEMENT).sum()),
                int((self.labels == LABEL_DISAGREEMENT).sum()))


def campaign_id(result: CampaignResult) -> str:
    return f"{result.mode}-{'-'.join(result.backend_ids)}-seed{result.seed}"


def build_dataset(campaigns: list[CampaignResult]) -> DisagreementDataset:
    """One row per evaluated test; the label marks backend verdict mismatch.

    Tests duplicated across campaigns (identical genotype) are dropped after
    their first occurrence.  Raises SingleBackendCampaign when any input ran
    on fewer than two backends.
    """
    rows: list[list[float]] = []
    labels: list[int] = []
    seen: set[tuple[float, ...]] = set()
    removed = 0
    for result in campaigns:
        if len(result.backend_ids) < 2:
            raise SingleBackendCampaign(
                f"campaign {campaign_id(result)} ran on a single backend")
        for test in result.all_tests:
            key = tuple(test.genotype.to_vector())
            if key in seen:
                removed += 1
                continue
            seen.add(key)
            rows.append(list(key))
            verdicts = set(test.failed_per_backend)
            labels.append(LABEL_DISAGREEMENT if len(verdicts) > 1
                          else LABEL_AGREEMENT)
    return DisagreementDataset(
        features=np.array(rows, dtype=float),
        labels=np.array(labels, dtype=int),
        provenance=tuple(campaign_id(c) for c in campaigns),
        duplicates_removed=removed,
    )


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForestHyperparams:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_leaf: int = 2
    feature_subsample: int | None = None    # None = round(sqrt(d))


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    vote: int = 0                 # leaf class

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"vote": self.vote}
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "_Node":
        if "vote" in d:
            return cls(vote=int(d["vote"]))
        return cls(feature=int(d["feature"]), threshold=float(d["threshold"]),
                   left=cls.from_dict(d["left"]), right=cls.from_dict(d["right"]))


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float((p * p).sum())


def _majority(y: np.ndarray) -> int:
    ones = int(y.sum())
    return LABEL_DISAGREEMENT if ones * 2 > len(y) else LABEL_AGREEMENT


def _best_split(x: np.ndarray, y: np.ndarray, feature_ids: np.ndarray,
                min_leaf: int) -> tuple[int, float, float]:
    """Impurity-minimizing axis-aligned split over the candidate features.

    Returns (feature, threshold, gain); feature -1 when nothing splits.
    """
    n = len(y)
    parent = _gini(np.bincount(y, minlength=2).astype(float))
    best = (-1, 0.0, 0.0)
    for f in feature_ids:
        col = x[:, f]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        sy = y[order]
        ones = np.cumsum(sy)
        total_ones = ones[-1]
        idx = np.nonzero(sv[:-1] != sv[1:])[0]
        for i in idx:
            n_left = i + 1
            n_right = n - n_left
            if n_left < min_leaf or n_right < min_leaf:
                continue
            left_ones = ones[i]
            gl = _gini(np.array([n_left - left_ones, left_ones], dtype=float))
            gr = _gini(np.array([n_right - (total_ones - left_ones),
                                 total_ones - left_ones], dtype=float))
            child = (n_left * gl + n_right * gr) / n
            gain = parent - child
            if gain > best[2]:
                best = (int(f), float((sv[i] + sv[i + 1]) / 2.0), float(gain))
    return best


def _grow(x: np.ndarray, y: np.ndarray, depth: int, rng: np.random.Generator,
          hp: ForestHyperparams, n_sub: int) -> _Node:
    if depth >= hp.max_depth or len(y) < 2 * hp.min_samples_leaf \
            or len(np.unique(y)) == 1:
        return _Node(vote=_majority(y))
    d = x.shape[1]
    feature_ids = rng.choice(d, size=min(n_sub, d), replace=False)
    feature, threshold, gain = _best_split(x, y, feature_ids,
                                           hp.min_samples_leaf)
    if feature < 0 or gain <= 0.0:
        return _Node(vote=_majority(y))
    mask = x[:, feature] <= threshold
    left = _grow(x[mask], y[mask], depth + 1, rng, hp, n_sub)
    right = _grow(x[~mask], y[~mask], depth + 1, rng, hp, n_sub)
    return _Node(feature=feature, threshold=threshold, left=left, right=right)


def _tree_vote(node: _Node, row: np.ndarray) -> int:
    while not node.is_leaf:
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.vote


@dataclass
class ForestModel:
    trees: list[_Node]
    hyperparams: ForestHyperparams
    n_features: int
    training_seed: int

    def predict_proba(self, row: np.ndarray | list[float]) -> float:
        """Fraction of trees voting for disagreement."""
        row = np.asarray(row, dtype=float)
        votes = sum(_tree_vote(t, row) for t in self.trees)
        return votes / len(self.trees)

    def predict(self, genotype: RoadGenotype | np.ndarray | list[float]) -> float:
        if isinstance(genotype, RoadGenotype):
            return self.predict_proba(genotype.to_vector())
        return self.predict_proba(genotype)

    def to_json(self) -> str:
        doc = {
            "schema": MODEL_SCHEMA,
            "hyperparams": {
                "n_trees": self.hyperparams.n_trees,
                "max_depth": self.hyperparams.max_depth,
                "min_samples_leaf": self.hyperparams.min_samples_leaf,
                "feature_subsample": self.hyperparams.feature_subsample,
            },
            "n_features": self.n_features,
            "training_seed": self.training_seed,
            "classes": ["agreement", "disagreement"],
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ForestModel":
        doc = json.loads(text)
        if doc.get("schema") != MODEL_SCHEMA:
            raise ValueError(f"unsupported model schema: {doc.get('schema')!r}")
        hp = ForestHyperparams(
            n_trees=doc["hyperparams"]["n_trees"],
            max_depth=doc["hyperparams"]["max_depth"],
            min_samples_leaf=doc["hyperparams"]["min_samples_leaf"],
            feature_subsample=doc["hyperparams"]["feature_subsample"],
        )
        return cls(trees=[_Node.from_dict(t) for t in doc["trees"]],
                   hyperparams=hp, n_features=int(doc["n_features"]),
                   training_seed=int(doc["training_seed"]))


def train_forest(dataset: DisagreementDataset,
                 hyperparams: ForestHyperparams = ForestHyperparams(),
                 seed: int = 0) -> ForestModel:
    """Bag one tree per bootstrap sample; deterministic under the seed.

    Raises DegenerateDataset when either class is absent or has one row.
    """
    counts = dataset.class_counts
    if min(counts) < 2:
        raise DegenerateDataset(
            f"need >= 2 rows per class, have agreement={counts[0]} "
            f"disagreement={counts[1]}")
    x, y = dataset.features, dataset.labels
    n, d = x.shape
    n_sub = hyperparams.feature_subsample or max(1, round(math.sqrt(d)))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(hyperparams.n_trees):
        boot = rng.integers(0, n, n)
        trees.append(_grow(x[boot], y[boot], 0, rng, hyperparams, n_sub))
    return ForestModel(trees=trees, hyperparams=hyperparams, n_features=d,
                       training_seed=seed)


def predict_disagreement(model: ForestModel, genotype: RoadGenotype) -> float:
    return model.predict(genotype)


class ConstantModel:
    """Fixed-probability predictor (useful as a no-op filter)."""

    def __init__(self, probability: float = 0.0):
        self.probability = probability

    def predict(self, _genotype) -> float:
        return self.probability


# ---------------------------------------------------------------------------
# Evaluation metrics and cross-validation
# ---------------------------------------------------------------------------

def f1_score(labels: np.ndarray, predicted: np.ndarray,
             positive: int = LABEL_DISAGREEMENT) -> float:
    tp = int(((predicted == positive) & (labels == positive)).sum())
    fp = int(((predicted == positive) & (labels != positive)).sum())
    fn = int(((predicted != positive) & (labels == positive)).sum())
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def auc_roc(labels: np.ndarray, scores: np.ndarray,
            positive: int = LABEL_DISAGREEMENT) -> float:
    """Rank-statistic AUC with mid-rank tie handling."""
    pos = scores[labels == positive]
    neg = scores[labels != positive]
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateDataset("AUC needs both classes present")
    combined = np.concatenate([pos, neg])
    order = np.argsort(combined, kind="stable")
    ranks = np.empty(len(combined))
    sv = combined[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    r_pos = float(ranks[:len(pos)].sum())
    n_pos, n_neg = len(pos), len(neg)
    return (r_pos - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


@dataclass
class FoldScore:
    fold: int
    f1: float
    auc: float


@dataclass
class CrossValidationReport:
    folds: list[FoldScore] = field(default_factory=list)

    @property
    def mean_f1(self) -> float:
        return float(np.mean([f.f1 for f in self.folds]))

    @property
    def mean_auc(self) -> float:
        return float(np.mean([f.auc for f in self.folds]))


def stratified_folds(labels: np.ndarray, k: int,
                     seed: int = 0) -> list[np.ndarray]:
    """Disjoint fold index sets preserving the class ratio within one row."""
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (LABEL_AGREEMENT, LABEL_DISAGREEMENT):
        idx = np.nonzero(labels == cls)[0]
        rng.shuffle(idx)
        for pos, i in enumerate(idx):
            folds[pos % k].append(int(i))
    return [np.array(sorted(f), dtype=int) for f in folds]


def cross_validate(dataset: DisagreementDataset,
                   hyperparams: ForestHyperparams = ForestHyperparams(),
                   k: int = 5,
                   seed: int = 0) -> CrossValidationReport:
    """Stratified k-fold scores of the forest family on the dataset.

    Raises FoldTooSmall when a fold would miss a class entirely.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    counts = dataset.class_counts
    if min(counts) < k:
        raise FoldTooSmall(
            f"{k} folds need >= {k} rows per class, have {counts}")
    folds = stratified_folds(dataset.labels, k, seed)
    report = CrossValidationReport()
    for fold_id, test_idx in enumerate(folds):
        train_mask = np.ones(len(dataset), dtype=bool)
        train_mask[test_idx] = False
        train = DisagreementDataset(features=dataset.features[train_mask],
                                    labels=dataset.labels[train_mask],
                                    provenance=dataset.provenance)
        model = train_forest(train, hyperparams, seed=seed + fold_id)
        scores = np.array([model.predict_proba(row)
                           for row in dataset.features[test_idx]])
        predicted = (scores > 0.5).astype(int)
        truth = dataset.labels[test_idx]
        report.folds.append(FoldScore(
            fold=fold_id,
            f1=f1_score(truth, predicted),
            auc=auc_roc(truth, scores),
        ))
    return report
