"""Command-line pipeline.

    uavgeo synth-world    --config run.json --out DIR
    uavgeo build-pairs    --config run.json --out DIR
    uavgeo split          --config run.json --out DIR
    uavgeo sample-batches --config run.json --out DIR [--strict-sampling]
    uavgeo train-toy      --config run.json --out DIR [--k 5 --mode positive-semi ...]
    uavgeo evaluate       --config run.json --out DIR

Each step reads its inputs from, and writes its outputs to, the output
directory under fixed file names, so the steps chain without extra flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import formats
from .errors import FormatError, UavGeoError
from .experiment import evaluate_model, make_eval_set
from .geometry import CameraIntrinsics, ConvexPolygon
from .pairing import AreaSplit, PairingConfig, SplitResult, build_pairs, split_area
from .sampling import PairGraph, epoch_seed, sample_epoch
from .synthgen import (
    ALTITUDE_RANGE,
    DEFAULT_HFOV,
    DEFAULT_VFOV,
    PITCH_RANGE,
    ROLL_RANGE,
    YAW_RANGE,
    generate_queries,
    generate_world,
    query_features,
    tile_features,
)
from .tilemap import TilePyramid
from .trainer import TrainConfig, select_pairs, train

QUERIES_FILE = "queries.jsonl"
PYRAMID_FILE = "pyramid.json"
WORLD_FILE = "world.json"
TILES_FILE = "tiles.skle"
PAIRS_FILE = "pairs.jsonl"
SKIPPED_FILE = "skipped.txt"
TRAIN_PAIRS_FILE = "train_pairs.jsonl"
TEST_PAIRS_FILE = "test_pairs.jsonl"
SPLIT_FILE = "split.json"
SCHEDULE_FILE = "batches.txt"
CHECKPOINT_FILE = "model.skl"
TRACE_FILE = "trace.tsv"
METRICS_FILE = "metrics.json"
REF_EMBEDDINGS_FILE = "ref_embeddings.skle"

WORLD_DEFAULTS = {
    "width": 9016.0,
    "height": 9016.0,
    "cell_size": 64.0,
    "d_in": 128,
    "view_dims": 64,
    "n_queries": 3000,
    "hfov": DEFAULT_HFOV,
    "vfov": DEFAULT_VFOV,
    "altitude_range": list(ALTITUDE_RANGE),
    "roll_range": list(ROLL_RANGE),
    "pitch_range": list(PITCH_RANGE),
    "yaw_range": list(YAW_RANGE),
}


@dataclass
class RunConfig:
    base_dir: Path
    out: Path
    seed: int = 0
    world: dict = field(default_factory=dict)
    pyramid: TilePyramid | None = None
    pairing: PairingConfig = PairingConfig()
    split: dict = field(default_factory=dict)
    train: TrainConfig = TrainConfig()
    eval: dict = field(default_factory=dict)
    queries_path: Path | None = None

    def section_seed(self, section: dict) -> int:
        return int(section.get("seed", self.seed))

    def out_file(self, name: str) -> Path:
        return self.out / name

    def load_pyramid(self) -> TilePyramid:
        if self.pyramid is not None:
            return self.pyramid
        path = self.out_file(PYRAMID_FILE)
        if not path.exists():
            raise FormatError(f"no pyramid in config and no {path}")
        return TilePyramid.load(path)


def load_run_config(path: str | None, out: str | None, seed: int | None) -> RunConfig:
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        try:
            raw = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read config {path}: {exc}") from exc
        base = p.resolve().parent
    if seed is None:
        seed = int(raw.get("seed", 0))
    out_dir = Path(out) if out is not None else base / raw.get("out", "run")

    pyramid = raw.get("pyramid")
    if isinstance(pyramid, str):
        pyr_path = base / pyramid
        if not pyr_path.exists():
            raise FormatError(f"pyramid config {pyr_path} does not exist")
        pyramid = TilePyramid.load(pyr_path)
    elif isinstance(pyramid, dict):
        pyramid = TilePyramid.from_dict(pyramid)

    queries_path = raw.get("queries")
    if queries_path is not None:
        queries_path = base / queries_path
        if not queries_path.exists():
            raise FormatError(f"query file {queries_path} does not exist")

    train_raw = dict(raw.get("train", {}))
    train_raw.setdefault("seed", seed)
    try:
        train_cfg = TrainConfig.from_dict(train_raw)
        pairing = PairingConfig.from_dict(raw.get("pairing", {}))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid config: {exc}") from exc
    return RunConfig(
        base_dir=base,
        out=out_dir,
        seed=seed,
        world={**WORLD_DEFAULTS, **raw.get("world", {})},
        pyramid=pyramid,
        pairing=pairing,
        split=raw.get("split", {"mode": "cross-area"}),
        train=train_cfg,
        eval=raw.get("eval", {}),
        queries_path=queries_path,
    )


# -- subcommands -------------------------------------------------------------


def cmd_synth_world(cfg: RunConfig, args) -> None:
    w = cfg.world
    world_seed = cfg.section_seed(w)
    world = generate_world(
        world_seed,
        (w["width"], w["height"]),
        w["cell_size"],
        int(w["d_in"]),
        int(w["view_dims"]),
        altitude_range=tuple(w["altitude_range"]),
        roll_range=tuple(w["roll_range"]),
        pitch_range=tuple(w["pitch_range"]),
        yaw_range=tuple(w["yaw_range"]),
        intr=CameraIntrinsics(w["hfov"], w["vfov"]),
    )
    pyr = cfg.pyramid or TilePyramid(map_width=w["width"], map_height=w["height"])
    queries = generate_queries(world, int(w["n_queries"]), world_seed)
    feats = query_features(world, queries)
    tiles = list(pyr.tiles(cfg.pairing.levels))
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / WORLD_FILE).write_text(json.dumps({**w, "seed": world_seed}, indent=2, sort_keys=True) + "\n")
    pyr.save(cfg.out / PYRAMID_FILE)
    formats.write_queries(cfg.out / QUERIES_FILE, queries, feats)
    formats.write_embeddings(cfg.out / TILES_FILE, tiles, tile_features(world, pyr, tiles))
    _report(f"{len(queries)} queries, {len(tiles)} tiles -> {cfg.out}")


def _load_queries(cfg: RunConfig):
    path = cfg.queries_path or cfg.out_file(QUERIES_FILE)
    if not path.exists():
        raise FormatError(f"query file {path} does not exist")
    return formats.read_queries(path)


def cmd_build_pairs(cfg: RunConfig, args) -> None:
    queries, _ = _load_queries(cfg)
    result = build_pairs(queries, cfg.load_pyramid(), cfg.pairing)
    cfg.out.mkdir(parents=True, exist_ok=True)
    formats.write_manifest(cfg.out / PAIRS_FILE, result.pairs, cfg.pairing)
    (cfg.out / SKIPPED_FILE).write_text("".join(f"{q}\t{why}\n" for q, why in result.skipped))
    _report(f"{len(result.pairs)} pairs, {len(result.skipped)} skipped queries")


def _area_split(cfg: RunConfig, pyr: TilePyramid) -> AreaSplit:
    s = cfg.split
    mode = s.get("mode", "cross-area")
    if mode == "cross-area":
        if "boundary" in s:
            boundary = ConvexPolygon(tuple(map(tuple, s["boundary"])))
        else:
            ox, oy = pyr.origin
            boundary = ConvexPolygon.rectangle(ox, oy, ox + pyr.map_width / 2, oy + pyr.map_height)
        return AreaSplit("cross-area", boundary)
    return AreaSplit(mode, None, float(s.get("ratio", 0.8)), cfg.section_seed(s))


def cmd_split(cfg: RunConfig, args) -> None:
    queries, _ = _load_queries(cfg)
    _, pairs = formats.read_manifest(cfg.out_file(PAIRS_FILE))
    split = _area_split(cfg, cfg.load_pyramid())
    result = split_area(queries, pairs, split)
    formats.write_manifest(cfg.out / TRAIN_PAIRS_FILE, result.train_pairs, cfg.pairing)
    formats.write_manifest(cfg.out / TEST_PAIRS_FILE, result.test_pairs, cfg.pairing)
    doc = {
        "mode": split.mode,
        "boundary": None if split.boundary is None else [list(v) for v in split.boundary.vertices],
        "train": [q.query_id for q in result.train_queries],
        "test": [q.query_id for q in result.test_queries],
    }
    (cfg.out / SPLIT_FILE).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    _report(f"{len(result.train_queries)} train / {len(result.test_queries)} test queries")


def _training_pairs(cfg: RunConfig):
    path = cfg.out_file(TRAIN_PAIRS_FILE)
    if not path.exists():
        path = cfg.out_file(PAIRS_FILE)
    return formats.read_manifest(path)[1]


def cmd_sample_batches(cfg: RunConfig, args) -> None:
    tc = cfg.train
    pairs = select_pairs(_training_pairs(cfg), tc.data_mode)
    seed = epoch_seed(tc.seed, args.epoch)
    batches = sample_epoch(PairGraph.from_pairs(pairs), tc.batch_size, seed, tc.strict_sampling)
    (cfg.out / SCHEDULE_FILE).write_text(
        formats.format_schedule(batches, tc.batch_size, seed, tc.strict_sampling)
    )
    _report(f"{len(batches)} batches of {tc.batch_size}")


def _features(cfg: RunConfig):
    queries, qfeat = _load_queries(cfg)
    if qfeat is None:
        raise FormatError("query file carries no feature vectors")
    tiles, tfeat = formats.read_embeddings(cfg.out_file(TILES_FILE))
    return (
        queries,
        {q.query_id: f for q, f in zip(queries, qfeat)},
        dict(zip(tiles, tfeat)),
    )


def cmd_train_toy(cfg: RunConfig, args) -> None:
    _, qfeat, tfeat = _features(cfg)
    result = train(cfg.train, _training_pairs(cfg), qfeat, tfeat)
    formats.write_checkpoint(cfg.out / CHECKPOINT_FILE, result.model)
    (cfg.out / TRACE_FILE).write_text(
        formats.format_trace(result.epoch_loss, result.batches_per_epoch, result.tau_trace)
    )
    _report(f"trained {sum(result.batches_per_epoch)} steps, final loss {result.epoch_loss[-1]:.6f}")


def cmd_evaluate(cfg: RunConfig, args) -> None:
    queries, qfeat, tfeat = _features(cfg)
    pyr = cfg.load_pyramid()
    model = formats.read_checkpoint(args.checkpoint or cfg.out_file(CHECKPOINT_FILE))
    split_path = cfg.out_file(SPLIT_FILE)
    if split_path.exists():
        doc = json.loads(split_path.read_text())
        test_ids = set(doc["test"])
        _, test_pairs = formats.read_manifest(cfg.out_file(TEST_PAIRS_FILE))
        region = None
        if doc["mode"] == "cross-area":
            region = _complement_half(pyr, doc["boundary"])
    else:
        test_ids = {q.query_id for q in queries}
        _, test_pairs = formats.read_manifest(cfg.out_file(PAIRS_FILE))
        region = None
    split = SplitResult([], [q for q in queries if q.query_id in test_ids], [], test_pairs)
    eval_set = make_eval_set(pyr, cfg.pairing.levels, split, region)
    missing = [t for t in eval_set.ref_tiles if t not in tfeat]
    if missing:
        raise FormatError(f"{len(missing)} reference tiles have no features, e.g. {missing[0]}")
    e = cfg.eval
    report = evaluate_model(
        model,
        pyr,
        eval_set,
        qfeat,
        tfeat,
        ks=tuple(e.get("ks", (1, 5))),
        sdm_k=int(e.get("sdm_k", 3)),
        sdm_scale=float(e.get("sdm_scale", 100.0)),
    )
    formats.write_embeddings(
        cfg.out / REF_EMBEDDINGS_FILE,
        eval_set.ref_tiles,
        model.embed_refs(np.stack([tfeat[t] for t in eval_set.ref_tiles])),
    )
    (cfg.out / METRICS_FILE).write_text(report.to_json())
    _report(report.to_json().strip())


def _complement_half(pyr: TilePyramid, boundary) -> ConvexPolygon | None:
    """Test region of a cross-area split: the map minus the boundary's bbox
    when that box spans the map on one axis; otherwise the whole map."""
    xs = [v[0] for v in boundary]
    ys = [v[1] for v in boundary]
    ox, oy = pyr.origin
    x1, y1 = ox + pyr.map_width, oy + pyr.map_height
    bx0, bx1, by0, by1 = min(xs), max(xs), min(ys), max(ys)
    if by0 <= oy and by1 >= y1:
        if bx0 <= ox and bx1 < x1:
            return ConvexPolygon.rectangle(bx1, oy, x1, y1)
        if bx1 >= x1 and bx0 > ox:
            return ConvexPolygon.rectangle(ox, oy, bx0, y1)
    if bx0 <= ox and bx1 >= x1:
        if by0 <= oy and by1 < y1:
            return ConvexPolygon.rectangle(ox, by1, x1, y1)
        if by1 >= y1 and by0 > oy:
            return ConvexPolygon.rectangle(ox, oy, x1, by0)
    return None


COMMANDS = {
    "synth-world": cmd_synth_world,
    "build-pairs": cmd_build_pairs,
    "split": cmd_split,
    "sample-batches": cmd_sample_batches,
    "train-toy": cmd_train_toy,
    "evaluate": cmd_evaluate,
}


def _report(msg: str) -> None:
    print(msg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavgeo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="run config (JSON)")
        p.add_argument("--seed", type=int, help="override the config's top-level seed")
        p.add_argument("--out", help="output directory (default: config 'out')")
        p.add_argument("--strict-sampling", action="store_true", default=None)
        p.add_argument("--alpha-convention", choices=["as-printed", "increasing"])
        p.add_argument("--k", type=float, help="alpha sigmoid sharpness")
        p.add_argument("--mode", choices=["positive-only", "positive-semi"], help="training pairs")
        p.add_argument("--lr", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--loss", choices=["weighted-infonce", "infonce", "triplet"])
        if name == "sample-batches":
            p.add_argument("--epoch", type=int, default=0, help="epoch whose schedule to write")
        if name == "evaluate":
            p.add_argument("--checkpoint", help="checkpoint file (default: OUT/model.skl)")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    tc = cfg.train
    loss = tc.loss
    if args.alpha_convention is not None:
        loss = replace(loss, alpha_convention=args.alpha_convention)
    if args.k is not None:
        loss = replace(loss, k=args.k)
    updates = {"loss": loss}
    if args.strict_sampling:
        updates["strict_sampling"] = True
    if args.mode is not None:
        updates["data_mode"] = args.mode
    if args.lr is not None:
        updates["lr"] = args.lr
    if args.epochs is not None:
        updates["epochs"] = args.epochs
    if args.loss is not None:
        updates["loss_kind"] = args.loss
    cfg.train = replace(tc, **updates)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_run_config(args.config, args.out, args.seed), args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args)
    except (UavGeoError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
