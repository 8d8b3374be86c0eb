"""Exact cosine retrieval over reference tiles and the evaluation metrics.

Rankings are lists of reference ids, best first. Metrics take rankings plus
ground truth so they can be checked against hand-built fixtures without an
index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, EmptyIndexError, MissingTruthError, ShapeError
from .tilemap import TileId

DEFAULT_RECALL_KS = (1, 5)
DEFAULT_SDM_K = 3
DEFAULT_SDM_SCALE = 100.0
UNIT_NORM_TOL = 1e-6


@dataclass
class RetrievalIndex:
    ids: list[TileId]
    embeddings: np.ndarray
    centers: np.ndarray  # (n, 2) east/north meters

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 2)
        n = len(self.ids)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] != n or self.centers.shape[0] != n:
            raise ShapeError("ids, embeddings and centers must have equal length")
        if n and np.any(np.abs(np.linalg.norm(self.embeddings, axis=1) - 1.0) > UNIT_NORM_TOL):
            raise ShapeError("reference embeddings must be unit-norm")
        # Rank of each id under the (level, y, x) tie-break order.
        order = sorted(range(n), key=lambda i: self.ids[i].sort_key)
        self._tiebreak = np.empty(n, dtype=np.int64)
        self._tiebreak[order] = np.arange(n)
        self._pos = {t: i for i, t in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def rank_all(self, query_embedding) -> np.ndarray:
        """Index positions sorted by descending similarity, ties by tile key."""
        if len(self) == 0:
            raise EmptyIndexError("retrieval index is empty")
        sims = self.embeddings @ np.asarray(query_embedding, dtype=np.float64)
        return np.lexsort((self._tiebreak, -sims))

    def center_of(self, t: TileId) -> np.ndarray:
        return self.centers[self._pos[t]]


def top_k(index: RetrievalIndex, query_embedding, k: int) -> list[tuple[TileId, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query_embedding, dtype=np.float64)
    order = index.rank_all(q)[:k]
    sims = index.embeddings[order] @ q
    return [(index.ids[i], float(s)) for i, s in zip(order, sims)]


def _check_truth(rankings, positives):
    if len(rankings) != len(positives):
        raise ShapeError("rankings and positives must have one entry per query")
    for i, pos in enumerate(positives):
        if not pos:
            raise MissingTruthError(f"query #{i} has no positive reference")


def recall_at_k(rankings: Sequence[Sequence], positives: Sequence[set], k: int) -> float:
    """Fraction of queries with at least one positive in the top ``k``."""
    _check_truth(rankings, positives)
    if not rankings:
        return 0.0
    hits = sum(1 for ranked, pos in zip(rankings, positives) if any(r in pos for r in ranked[:k]))
    return hits / len(rankings)


def average_precision(rankings: Sequence[Sequence], positives: Sequence[set]) -> float:
    """Mean over queries of the mean precision at each positive's rank.

    Positives missing from a (truncated) ranking contribute zero precision.
    """
    _check_truth(rankings, positives)
    if not rankings:
        return 0.0
    total = 0.0
    for ranked, pos in zip(rankings, positives):
        found = 0
        precisions = 0.0
        for rank, r in enumerate(ranked, start=1):
            if r in pos:
                found += 1
                precisions += found / rank
                if found == len(pos):
                    break
        total += precisions / len(pos)
    return total / len(rankings)


def _distances(rankings, query_locations, centers: Mapping, k: int) -> list[np.ndarray]:
    out = []
    for ranked, loc in zip(rankings, query_locations):
        pts = np.array([centers[r] for r in ranked[:k]], dtype=np.float64).reshape(-1, 2)
        out.append(np.hypot(pts[:, 0] - loc[0], pts[:, 1] - loc[1]))
    return out


def sdm_at_k(
    rankings: Sequence[Sequence],
    query_locations: Sequence,
    centers: Mapping,
    k: int = DEFAULT_SDM_K,
    scale: float = DEFAULT_SDM_SCALE,
) -> float:
    """Rank-weighted, distance-decayed localization score in (0, 1].

    Rank ``i`` (1-based) carries weight ``k - i + 1`` and contributes
    ``exp(-d_i / scale)`` where ``d_i`` is its center's distance to the query.
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    if not scale > 0:
        raise DomainError(f"SDM scale must be positive, got {scale}")
    if not rankings:
        return 0.0
    scores = []
    for d in _distances(rankings, query_locations, centers, k):
        w = k - np.arange(len(d), dtype=np.float64)
        scores.append(float(np.sum(w * np.exp(-d / scale)) / np.sum(w)))
    return float(np.mean(scores))


def dis_at_1(rankings: Sequence[Sequence], query_locations: Sequence, centers: Mapping) -> float:
    """Mean ground distance (m) from each query to its top-1 reference center."""
    if not rankings:
        return 0.0
    if any(len(r) == 0 for r in rankings):
        raise EmptyIndexError("a ranking is empty")
    return float(np.mean([d[0] for d in _distances(rankings, query_locations, centers, 1)]))


@dataclass
class MetricsReport:
    recall_at: dict[int, float]
    ap: float
    sdm_at: dict[int, float]
    dis_at_1: float
    n_queries: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
            "ap": self.ap,
            "sdm_at": {str(k): v for k, v in sorted(self.sdm_at.items())},
            "dis_at_1": self.dis_at_1,
            "n_queries": self.n_queries,
        }
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def rank_queries(index: RetrievalIndex, query_embeddings) -> list[list[TileId]]:
    return [[index.ids[i] for i in index.rank_all(q)] for q in np.asarray(query_embeddings)]


def evaluate(
    index: RetrievalIndex,
    query_embeddings,
    query_locations: Sequence,
    positives: Sequence[set],
    ks: Sequence[int] = DEFAULT_RECALL_KS,
    sdm_k: int = DEFAULT_SDM_K,
    sdm_scale: float = DEFAULT_SDM_SCALE,
) -> MetricsReport:
    """Full-ranking evaluation of every query against the index."""
    if len(index) == 0:
        raise EmptyIndexError("retrieval index is empty")
    rankings = rank_queries(index, query_embeddings)
    centers = {t: tuple(c) for t, c in zip(index.ids, index.centers)}
    locs = [tuple(map(float, loc)) for loc in query_locations]
    return MetricsReport(
        recall_at={k: recall_at_k(rankings, positives, k) for k in ks},
        ap=average_precision(rankings, positives),
        sdm_at={sdm_k: sdm_at_k(rankings, locs, centers, sdm_k, sdm_scale)},
        dis_at_1=dis_at_1(rankings, locs, centers),
        n_queries=len(rankings),
    )
