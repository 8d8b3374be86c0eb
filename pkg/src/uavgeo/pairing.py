"""Query-to-tile pairing by footprint IOU, and train/test area splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySplitError, HorizonError, DegenerateError
from .geometry import CameraIntrinsics, CameraPose, ConvexPolygon, polygon_area, project_footprint
from .tilemap import TileId, TilePyramid, tile_overlaps

POSITIVE = "positive"
SEMI_POSITIVE = "semi-positive"

TIE_RULE = "iou == t_pos is semi-positive; iou == t_semi is excluded"


@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    pose: CameraPose
    intr: CameraIntrinsics

    @property
    def location(self):
        return self.pose.ground_point


@dataclass(frozen=True)
class PairRecord:
    query_id: str
    tile: TileId
    iou_value: float
    label: str

    @property
    def is_positive(self) -> bool:
        return self.label == POSITIVE


@dataclass(frozen=True)
class PairingConfig:
    t_pos: float = 0.39
    t_semi: float = 0.14
    levels: tuple[int, ...] = (4, 5, 6, 7)

    def __post_init__(self):
        if not 0.0 <= self.t_semi < self.t_pos <= 1.0:
            raise ValueError(f"need 0 <= t_semi < t_pos <= 1, got {self.t_semi}, {self.t_pos}")
        object.__setattr__(self, "levels", tuple(sorted(set(int(v) for v in self.levels))))

    def label_for(self, value: float) -> str | None:
        """Label for an IOU value; None when it does not reach semi-positive."""
        if value > self.t_pos:
            return POSITIVE
        if value > self.t_semi:
            return SEMI_POSITIVE
        return None

    def to_dict(self) -> dict:
        return {"t_pos": self.t_pos, "t_semi": self.t_semi, "levels": list(self.levels)}

    @classmethod
    def from_dict(cls, d: dict) -> PairingConfig:
        return cls(
            t_pos=float(d.get("t_pos", 0.39)),
            t_semi=float(d.get("t_semi", 0.14)),
            levels=tuple(d.get("levels", (4, 5, 6, 7))),
        )


@dataclass
class PairingResult:
    pairs: list[PairRecord]
    skipped: list[tuple[str, str]] = field(default_factory=list)


def pairs_for_footprint(
    query_id: str, footprint: ConvexPolygon, pyr: TilePyramid, cfg: PairingConfig
) -> list[PairRecord]:
    out = []
    fp_area = polygon_area(footprint)
    for t, inter in tile_overlaps(pyr, footprint, cfg.levels):
        w, h = pyr.tile_size(t.level)
        value = min(1.0, max(0.0, inter / (fp_area + w * h - inter)))
        label = cfg.label_for(value)
        if label is not None:
            out.append(PairRecord(query_id, t, value, label))
    return out


def build_pairs(
    queries: Iterable[QueryRecord], pyr: TilePyramid, cfg: PairingConfig
) -> PairingResult:
    """Pair every query with each tile of the reference levels above ``t_semi``.

    Queries whose footprint cannot be formed are reported in ``skipped``
    instead of aborting the batch.
    """
    result = PairingResult(pairs=[])
    for q in sorted(queries, key=lambda q: q.query_id):
        try:
            footprint = project_footprint(q.pose, q.intr)
        except (HorizonError, DegenerateError) as exc:
            result.skipped.append((q.query_id, f"{type(exc).__name__}: {exc}"))
            continue
        pairs = pairs_for_footprint(q.query_id, footprint, pyr, cfg)
        pairs.sort(key=lambda p: p.tile.sort_key)
        result.pairs.extend(pairs)
    return result


@dataclass(frozen=True)
class AreaSplit:
    mode: str = "cross-area"
    boundary: ConvexPolygon | None = None
    ratio: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("cross-area", "same-area"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "cross-area" and self.boundary is None:
            raise ValueError("cross-area split needs a boundary polygon")
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("ratio must lie in (0, 1)")


@dataclass
class SplitResult:
    train_queries: list[QueryRecord]
    test_queries: list[QueryRecord]
    train_pairs: list[PairRecord]
    test_pairs: list[PairRecord]


def split_area(
    queries: Sequence[QueryRecord], pairs: Sequence[PairRecord], split: AreaSplit
) -> SplitResult:
    """Assign queries (and all their pairs) to train or test.

    Cross-area puts a query in train iff its ground point lies inside the
    boundary. Same-area draws exactly ``round(ratio * n)`` training queries
    with a seeded permutation.
    """
    ordered = sorted(queries, key=lambda q: q.query_id)
    if split.mode == "cross-area":
        train_ids = {q.query_id for q in ordered if split.boundary.contains(q.location)}
    else:
        n_train = int(round(split.ratio * len(ordered)))
        perm = np.random.default_rng(split.seed).permutation(len(ordered))
        train_ids = {ordered[i].query_id for i in perm[:n_train]}
    train_q = [q for q in ordered if q.query_id in train_ids]
    test_q = [q for q in ordered if q.query_id not in train_ids]
    test_ids = {q.query_id for q in test_q}
    if not train_q or not test_q:
        raise EmptySplitError(
            f"split leaves {len(train_q)} train and {len(test_q)} test queries"
        )
    return SplitResult(
        train_queries=train_q,
        test_queries=test_q,
        train_pairs=[p for p in pairs if p.query_id in train_ids],
        test_pairs=[p for p in pairs if p.query_id in test_ids],
    )
