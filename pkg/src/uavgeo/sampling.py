"""Mutually exclusive batch sampling on the query/reference pair graph.

Queries and references are the two node sides of a bipartite graph whose
edges are the paired records. A batch is a set of edges that share no node,
so every other reference in the batch is a valid negative for each query.

Within one epoch an edge that was put into a batch is consumed. Edges that
were only blocked because they touched a node of the batch under
construction become available again as soon as that batch is complete.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable

import numpy as np

from .errors import InsufficientEdgesError

Edge = tuple[str, Hashable, float]


@dataclass
class PairGraph:
    edges: list[Edge]
    by_query: dict[str, list[int]] = field(init=False, repr=False)
    by_ref: dict[Hashable, list[int]] = field(init=False, repr=False)

    def __post_init__(self):
        seen = set()
        self.by_query = defaultdict(list)
        self.by_ref = defaultdict(list)
        for i, (q, r, _) in enumerate(self.edges):
            if (q, r) in seen:
                raise ValueError(f"duplicate edge ({q}, {r})")
            seen.add((q, r))
            self.by_query[q].append(i)
            self.by_ref[r].append(i)
        self.by_query = dict(self.by_query)
        self.by_ref = dict(self.by_ref)

    @classmethod
    def from_pairs(cls, pairs: Iterable) -> PairGraph:
        """Build from PairRecord-like objects (query_id, tile, iou_value)."""
        return cls([(p.query_id, p.tile, p.iou_value) for p in pairs])

    def __len__(self) -> int:
        return len(self.edges)

    def has_edge(self, q: str, r: Hashable) -> bool:
        return any(self.edges[i][1] == r for i in self.by_query.get(q, ()))

    def ref_neighbors(self, q: str) -> set:
        return {self.edges[i][1] for i in self.by_query.get(q, ())}

    def query_neighbors(self, r: Hashable) -> set:
        return {self.edges[i][0] for i in self.by_ref.get(r, ())}


@dataclass(frozen=True)
class Batch:
    pairs: tuple[Edge, ...]

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def query_ids(self) -> list[str]:
        return [p[0] for p in self.pairs]

    @property
    def refs(self) -> list:
        return [p[1] for p in self.pairs]


def sample_epoch(
    g: PairGraph, b: int, seed: int, strict: bool = False
) -> list[Batch]:
    """Split one epoch of the graph's edges into node-disjoint batches.

    Each pass walks a seeded shuffle of the not-yet-consumed edges and adds
    every edge whose endpoints are still free. Passes repeat until a pass
    adds nothing; a trailing incomplete batch is dropped.

    With ``strict`` the neighbours of every selected node are blocked too,
    so no graph edge links a query and a reference from different pairs of
    the same batch.

    Raises:
        InsufficientEdgesError: no complete batch could be formed.
    """
    if b < 2:
        raise ValueError(f"batch size must be >= 2, got {b}")
    if len(g) == 0:
        raise InsufficientEdgesError("pair graph is empty")
    rng = np.random.default_rng(seed)
    consumed = np.zeros(len(g), dtype=bool)
    batches: list[Batch] = []

    current: list[int] = []
    blocked_q: set = set()
    blocked_r: set = set()

    progress = True
    while progress:
        progress = False
        remaining = np.flatnonzero(~consumed)
        for i in rng.permutation(remaining).tolist():
            if consumed[i]:
                continue
            q, r, _ = g.edges[i]
            if q in blocked_q or r in blocked_r:
                continue
            current.append(i)
            consumed[i] = True
            progress = True
            blocked_q.add(q)
            blocked_r.add(r)
            if strict:
                blocked_r.update(g.ref_neighbors(q))
                blocked_q.update(g.query_neighbors(r))
            if len(current) == b:
                batches.append(Batch(tuple(g.edges[j] for j in current)))
                current = []
                blocked_q = set()
                blocked_r = set()
    if not batches:
        raise InsufficientEdgesError(
            f"{len(g)} edges cannot fill one batch of {b} mutually exclusive pairs"
        )
    return batches


def strict_sample_epoch(g: PairGraph, b: int, seed: int) -> list[Batch]:
    return sample_epoch(g, b, seed, strict=True)


def epoch_seed(seed: int, epoch: int) -> int:
    """Independent per-epoch sampler seed derived from a run seed."""
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1, dtype=np.uint64)[0])


def check_batch(g: PairGraph, batch: Batch, strict: bool = False) -> bool:
    """Exhaustive O(b^2) validity check of one batch."""
    qs, rs = batch.query_ids, batch.refs
    if len(set(qs)) != len(qs) or len(set(rs)) != len(rs):
        return False
    if strict:
        for i, q in enumerate(qs):
            for j, r in enumerate(rs):
                if i != j and g.has_edge(q, r):
                    return False
    return True

