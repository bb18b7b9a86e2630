"""Seeded tree ensembles and the entropy decomposition of their uncertainty.

Each member is a depth-limited CART tree grown on a bootstrap sample with
per-node feature subsampling and a log-loss (entropy) split criterion. A
member's prediction is the Laplace-smoothed fraction of negative outcomes
in its leaf, so members never emit a hard 0 or 1.

Uncertainty is measured in bits: for a binary outcome the total entropy of
the mean prediction lies in [0, 1] and splits exactly into the mean member
entropy (aleatoric) plus the disagreement term (epistemic).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from prpm.errors import SchemaMismatch

EPISTEMIC_CLAMP = 1e-12


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 6
    min_leaf_count: int = 20
    feature_subsample_fraction: float = 0.7
    row_subsample_fraction: float = 0.82


@dataclass(frozen=True)
class UncertaintyReport:
    avg_pred: float
    total: float
    aleatoric: float
    epistemic: float


def _node_loss(n_neg, n):
    """Summed log-loss (bits) of a node predicting its own negative rate."""
    n = np.asarray(n, dtype=float)
    p = np.divide(n_neg, n, out=np.zeros_like(n), where=n > 0)
    return n * entropy_array(p)


class DecisionTree:
    """Binary classification tree stored as flat node arrays.

    ``feature[i] == -1`` marks a leaf; ``value[i]`` holds the leaf's
    probability of a negative outcome.
    """

    def __init__(self, feature, threshold, left, right, value, n_features: int):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.n_features = n_features

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray, params: TreeParams, rng: np.random.Generator) -> "DecisionTree":
        n, d = X.shape
        n_feat = max(1, int(round(params.feature_subsample_fraction * d)))
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node():
            for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0)):
                arr.append(v)
            return len(feature) - 1

        root = new_node()
        stack = [(root, np.arange(n), 0)]
        while stack:
            node, rows, depth = stack.pop()
            ys = y[rows]
            n_neg = int(ys.sum())
            value[node] = (n_neg + 1.0) / (len(rows) + 2.0)
            if depth >= params.max_depth or len(rows) < 2 * params.min_leaf_count or n_neg in (0, len(rows)):
                continue
            split = _best_split(X[rows], ys, rng.choice(d, size=n_feat, replace=False), params.min_leaf_count)
            if split is None:
                continue
            f, thr = split
            mask = X[rows, f] <= thr
            feature[node], threshold[node] = int(f), float(thr)
            lo, hi = new_node(), new_node()
            left[node], right[node] = lo, hi
            # right pushed first so the left subtree is numbered first
            stack.append((hi, rows[~mask], depth + 1))
            stack.append((lo, rows[mask], depth + 1))
        return cls(feature, threshold, left, right, value, d)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = np.nonzero(f >= 0)[0]
            if inner.size == 0:
                return self.value[node]
            cur = node[inner]
            go_left = X[inner, f[inner]] <= self.threshold[cur]
            node[inner] = np.where(go_left, self.left[cur], self.right[cur])

    @property
    def depth(self) -> int:
        depths = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"], d["n_features"])


def _best_split(X: np.ndarray, y: np.ndarray, features, min_leaf: int):
    n = len(y)
    total_neg = y.sum()
    best_loss = float(_node_loss(total_neg, n)) - 1e-9 * n
    best = None
    n_left = np.arange(1, n + 1)
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        neg_left = np.cumsum(y[order])
        ok = (xs[:-1] < xs[1:]) & (n_left[:-1] >= min_leaf) & (n - n_left[:-1] >= min_leaf)
        if not ok.any():
            continue
        cand = np.nonzero(ok)[0]
        nl = n_left[cand]
        loss = _node_loss(neg_left[cand], nl) + _node_loss(total_neg - neg_left[cand], n - nl)
        i = int(np.argmin(loss))
        if loss[i] < best_loss:
            best_loss = float(loss[i])
            c = cand[i]
            best = (int(f), 0.5 * (xs[c] + xs[c + 1]))
    return best


@dataclass
class MemberModel:
    seed: int
    tree_params: TreeParams
    tree: DecisionTree

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.tree.predict_proba(X)


class Ensemble:
    log_base = 2

    def __init__(self, members: Sequence[MemberModel], n_features: int):
        if len(members) < 2:
            raise ValueError(f"an ensemble needs at least 2 members, got {len(members)}")
        self.members = tuple(members)
        self.n_features = n_features

    @property
    def m(self) -> int:
        return len(self.members)

    def member_probs(self, X: np.ndarray) -> np.ndarray:
        """Per-member negative-outcome probabilities, shape (n, m)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise SchemaMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.column_stack([mm.predict(X) for mm in self.members])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.member_probs(X).mean(axis=1)

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "members": [
                {"seed": mm.seed, "tree_params": asdict(mm.tree_params), "tree": mm.tree.to_dict()}
                for mm in self.members
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        members = [
            MemberModel(mm["seed"], TreeParams(**mm["tree_params"]), DecisionTree.from_dict(mm["tree"]))
            for mm in d["members"]
        ]
        return cls(members, d["n_features"])


def member_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, np.uint64)[0])


def train(X: np.ndarray, y: np.ndarray, m: int = 10, params: TreeParams = TreeParams(), master_seed: int = 0) -> Ensemble:
    """Fit ``m`` trees, each on its own bootstrap sample and derived seed."""
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("no training instances")
    if np.unique(y).size < 2:
        raise ValueError("training data contains a single outcome class")
    n = len(y)
    size = max(1, int(round(params.row_subsample_fraction * n)))
    members = []
    for i in range(m):
        seed = member_seed(master_seed, i)
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, n, size=size)
        members.append(MemberModel(seed, params, DecisionTree.fit(X[rows], y[rows], params, rng)))
    return Ensemble(members, X.shape[1])


def avg_pred(member_probs: Sequence[float]) -> float:
    p = np.asarray(member_probs, dtype=float)
    if p.size == 0:
        raise ValueError("avg_pred of no members")
    return float(p.mean())


def entropy_array(p) -> np.ndarray:
    """Binary entropy in bits with 0*log2(0) = 0."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(q > 0, q * np.log2(q), 0.0))
    return h


def entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    return float(entropy_array(p))


def decompose_array(P: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise decomposition of an (n, m) matrix of member probabilities.

    Returns (avg_pred, total, aleatoric, epistemic) arrays of length n.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    avg = P.mean(axis=1)
    total = entropy_array(avg)
    aleatoric = entropy_array(P).mean(axis=1)
    epistemic = total - aleatoric
    epistemic = np.where(np.abs(epistemic) < EPISTEMIC_CLAMP, 0.0, epistemic)
    return avg, total, aleatoric, epistemic


def decompose(member_probs: Sequence[float]) -> UncertaintyReport:
    p = np.asarray(member_probs, dtype=float)
    if p.size == 0:
        raise ValueError("decompose of no members")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("member probabilities must lie in [0, 1]")
    avg, total, alea, epi = decompose_array(p[None, :])
    return UncertaintyReport(float(avg[0]), float(total[0]), float(alea[0]), float(epi[0]))


def score_prefix(ensemble: Ensemble, features) -> tuple[np.ndarray, UncertaintyReport]:
    x = np.asarray(features, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise SchemaMismatch("feature vector must be a non-empty 1-d array")
    probs = ensemble.member_probs(x[None, :])[0]
    return probs, decompose(probs)
