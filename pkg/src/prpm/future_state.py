"""Projected next-prefix scores from similar historical prefixes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from prpm.ensemble import decompose_array


@dataclass(frozen=True)
class ScoreTriple:
    avg_pred: float
    total_uncer: float
    cate: float

    def as_array(self) -> np.ndarray:
        return np.array([self.avg_pred, self.total_uncer, self.cate])


@dataclass
class Bucket:
    vectors: np.ndarray  # raw features, (n, d)
    scores: np.ndarray  # (n, 3): avg_pred, total_uncer, cate
    freq: np.ndarray  # (n,)


class HistoryIndex:
    """Scored historical prefixes bucketed by prefix length.

    Distances are Euclidean on features min-max scaled with the ranges seen
    when the index was built; constant features are left unscaled.
    """

    def __init__(self, buckets: dict[int, Bucket], lo: np.ndarray, span: np.ndarray):
        self.buckets = buckets
        self.lo = np.asarray(lo, dtype=float)
        self.span = np.asarray(span, dtype=float)
        self._scaled = {k: self.scale(b.vectors) for k, b in buckets.items()}

    def scale(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lo) / self.span

    @classmethod
    def from_scored(cls, prefix_lens, X, scores, lo=None, span=None) -> "HistoryIndex":
        """Build from per-prefix rows; exact duplicate vectors are merged."""
        prefix_lens = np.asarray(prefix_lens)
        X = np.asarray(X, dtype=float)
        scores = np.asarray(scores, dtype=float)
        if lo is None:
            if len(X):
                lo, hi = X.min(axis=0), X.max(axis=0)
            else:
                lo = hi = np.zeros(X.shape[1] if X.ndim == 2 else 0)
            span = np.where(hi > lo, hi - lo, 1.0)
        buckets = {}
        for k in sorted(set(prefix_lens.tolist())):
            rows = np.nonzero(prefix_lens == k)[0]
            uniq, first, counts = np.unique(X[rows], axis=0, return_index=True, return_counts=True)
            # keep first-seen order so the index layout is independent of np.unique's sort
            order = np.argsort(first, kind="stable")
            buckets[int(k)] = Bucket(uniq[order], scores[rows[first[order]]], counts[order].astype(float))
        return cls(buckets, lo, span)

    def to_dict(self) -> dict:
        return {
            "lo": self.lo.tolist(),
            "span": self.span.tolist(),
            "buckets": {
                str(k): {"vectors": b.vectors.tolist(), "scores": b.scores.tolist(), "freq": b.freq.tolist()}
                for k, b in self.buckets.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HistoryIndex":
        width = len(d["lo"])
        buckets = {
            int(k): Bucket(np.array(b["vectors"], dtype=float).reshape(len(b["freq"]), width),
                           np.array(b["scores"], dtype=float).reshape(-1, 3),
                           np.array(b["freq"], dtype=float))
            for k, b in d["buckets"].items()
        }
        return cls(buckets, d["lo"], d["span"])


def score_matrix(X: np.ndarray, ensemble, uplift) -> np.ndarray:
    """(n, 3) matrix of avg_pred, total_uncer and cate for each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        return np.zeros((0, 3))
    avg, total, _, _ = decompose_array(ensemble.member_probs(X))
    return np.column_stack([avg, total, uplift.predict(X)])


def build_index(prefixes, ensemble, uplift) -> HistoryIndex:
    """Score every training prefix once and index it by prefix length."""
    prefixes = list(prefixes)
    if not prefixes:
        return HistoryIndex({}, np.zeros(ensemble.n_features), np.ones(ensemble.n_features))
    X = np.vstack([p.features for p in prefixes])
    return HistoryIndex.from_scored([p.prefix_len for p in prefixes], X, score_matrix(X, ensemble, uplift))


def future_scores(index: HistoryIndex, current_features, k: int, knn_k: int = 10,
                  current: ScoreTriple | None = None) -> ScoreTriple:
    """Weighted mean of the ``knn_k`` nearest prefix-(k+1) entries.

    Weights are ``frequency / (1 + distance)``. With no history at k+1 the
    ``current`` triple is returned unchanged.
    """
    if knn_k < 1:
        raise ValueError(f"knn_k must be >= 1, got {knn_k}")
    bucket = index.buckets.get(k + 1)
    if bucket is None or len(bucket.freq) == 0:
        if current is None:
            raise ValueError(f"no history at prefix length {k + 1} and no current scores to fall back on")
        return current
    q = index.scale(np.asarray(current_features, dtype=float))
    d = np.sqrt(((index._scaled[k + 1] - q) ** 2).sum(axis=1))
    near = np.argsort(d, kind="stable")[:knn_k]
    w = bucket.freq[near] / (1.0 + d[near])
    avg = (w / w.sum()) @ bucket.scores[near]
    return ScoreTriple(float(avg[0]), float(avg[1]), float(avg[2]))


def future_scores_batch(index: HistoryIndex, X: np.ndarray, ks, current: np.ndarray, knn_k: int = 10) -> np.ndarray:
    out = np.array(current, dtype=float, copy=True)
    for i, (x, k) in enumerate(zip(X, ks)):
        out[i] = future_scores(index, x, int(k), knn_k, ScoreTriple(*current[i])).as_array()
    return out
