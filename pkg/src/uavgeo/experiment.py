"""End-to-end desk-scale experiment: synthetic world, pairing, cross-area
split, toy training, and retrieval evaluation against the test-side tiles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ConvexPolygon
from .pairing import AreaSplit, PairingConfig, PairRecord, QueryRecord, SplitResult, split_area
from .retrieval import (
    DEFAULT_RECALL_KS,
    DEFAULT_SDM_K,
    DEFAULT_SDM_SCALE,
    MetricsReport,
    RetrievalIndex,
    evaluate,
)
from .synthgen import SyntheticWorld, generate_dataset, generate_world, tile_features
from .tilemap import TileId, TilePyramid, tile_bounds, tile_center
from .trainer import EmbedModel, TrainConfig, TrainResult, train


def west_half(pyr: TilePyramid) -> ConvexPolygon:
    ox, oy = pyr.origin
    return ConvexPolygon.rectangle(ox, oy, ox + pyr.map_width / 2, oy + pyr.map_height)


@dataclass
class EvalSet:
    """Test queries with at least one positive, and the reference tiles they
    are retrieved from."""

    query_ids: list[str]
    locations: np.ndarray
    positives: list[set]
    ref_tiles: list[TileId]


def reference_set(
    pyr: TilePyramid, levels, test_region: ConvexPolygon | None, test_pairs: list[PairRecord]
) -> list[TileId]:
    """Reference tiles overlapping the test region, plus any tile a test query
    is paired with."""
    tiles = set()
    if test_region is None:
        tiles.update(pyr.tiles(levels))
    else:
        x0, y0, x1, y1 = test_region.bounds()
        for t in pyr.tiles(levels):
            bx0, by0, bx1, by1 = tile_bounds(pyr, t).bounds()
            if bx0 < x1 and x0 < bx1 and by0 < y1 and y0 < by1:
                tiles.add(t)
    tiles.update(p.tile for p in test_pairs)
    return sorted(tiles, key=lambda t: t.sort_key)


def make_eval_set(
    pyr: TilePyramid,
    levels,
    split: SplitResult,
    test_region: ConvexPolygon | None,
) -> EvalSet:
    pos: dict[str, set] = {}
    for p in split.test_pairs:
        if p.is_positive:
            pos.setdefault(p.query_id, set()).add(p.tile)
    queries = [q for q in split.test_queries if q.query_id in pos]
    return EvalSet(
        query_ids=[q.query_id for q in queries],
        locations=np.array([q.location for q in queries], dtype=np.float64).reshape(-1, 2),
        positives=[pos[q.query_id] for q in queries],
        ref_tiles=reference_set(pyr, levels, test_region, split.test_pairs),
    )


def evaluate_model(
    model: EmbedModel,
    pyr: TilePyramid,
    eval_set: EvalSet,
    query_features: dict,
    tile_feats: dict,
    ks=DEFAULT_RECALL_KS,
    sdm_k: int = DEFAULT_SDM_K,
    sdm_scale: float = DEFAULT_SDM_SCALE,
) -> MetricsReport:
    refs = model.embed_refs(np.stack([tile_feats[t] for t in eval_set.ref_tiles]))
    centers = np.array([tile_center(pyr, t) for t in eval_set.ref_tiles])
    index = RetrievalIndex(list(eval_set.ref_tiles), refs, centers)
    q = model.embed_queries(np.stack([query_features[i] for i in eval_set.query_ids]))
    return evaluate(index, q, eval_set.locations, eval_set.positives, ks, sdm_k, sdm_scale)


@dataclass
class Setup:
    world: SyntheticWorld
    pyramid: TilePyramid
    pairing: PairingConfig
    queries: list[QueryRecord]
    pairs: list[PairRecord]
    split: SplitResult
    query_features: dict
    tile_features: dict
    eval_set: EvalSet
    info: dict = field(default_factory=dict)


def build_setup(
    world_seed: int = 0,
    n_queries: int = 3000,
    map_size: float = 9016.0,
    cell_size: float = 64.0,
    d_in: int = 128,
    view_dims: int = 64,
    pairing: PairingConfig = PairingConfig(),
    query_seed: int | None = None,
) -> Setup:
    """Fixed synthetic world, queries, pairs and a west/east cross-area split."""
    world = generate_world(world_seed, (map_size, map_size), cell_size, d_in, view_dims)
    pyr = TilePyramid(map_width=map_size, map_height=map_size, min_level=0, max_level=7)
    ds = generate_dataset(world, n_queries, pyr, pairing, world_seed if query_seed is None else query_seed)
    boundary = west_half(pyr)
    split = split_area(ds.queries, ds.pairs, AreaSplit("cross-area", boundary))
    ox, oy = pyr.origin
    test_region = ConvexPolygon.rectangle(
        ox + map_size / 2, oy, ox + map_size, oy + map_size
    )
    eval_set = make_eval_set(pyr, pairing.levels, split, test_region)
    tiles = sorted(
        set(eval_set.ref_tiles) | {p.tile for p in split.train_pairs}, key=lambda t: t.sort_key
    )
    tfeat = dict(zip(tiles, tile_features(world, pyr, tiles)))
    qfeat = {q.query_id: f for q, f in zip(ds.queries, ds.query_features)}
    return Setup(world, pyr, pairing, ds.queries, ds.pairs, split, qfeat, tfeat, eval_set)


def run(setup: Setup, cfg: TrainConfig, **eval_kwargs) -> tuple[TrainResult, MetricsReport]:
    result = train(cfg, setup.split.train_pairs, setup.query_features, setup.tile_features)
    report = evaluate_model(
        result.model, setup.pyramid, setup.eval_set, setup.query_features, setup.tile_features, **eval_kwargs
    )
    return result, report
