"""On-disk formats: pair manifests, query files, batch schedules, embedding
files and model checkpoints.

Every format carries a version number and no timestamps, so re-running a
step on identical inputs reproduces its outputs byte for byte.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .errors import FormatError
from .geometry import CameraIntrinsics, CameraPose, GeoPoint
from .pairing import TIE_RULE, PairingConfig, PairRecord, QueryRecord
from .sampling import Batch
from .tilemap import TileId
from .trainer import EmbedModel

MANIFEST_VERSION = 1
QUERIES_VERSION = 1
SCHEDULE_VERSION = 1
CHECKPOINT_VERSION = 1

EMBEDDING_MAGIC = b"SKLE"
CHECKPOINT_MAGIC = b"SKL1"

TOOLKIT = f"uavgeo {__version__}"


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(", ", ": "))


# -- pair manifest ---------------------------------------------------------


def format_manifest(pairs: Sequence[PairRecord], cfg: PairingConfig) -> str:
    header = {
        "format": "pair-manifest",
        "version": MANIFEST_VERSION,
        "toolkit": TOOLKIT,
        "config": cfg.to_dict(),
        "tie_rule": TIE_RULE,
        "count": len(pairs),
    }
    lines = [_dumps(header)]
    for p in pairs:
        lines.append(
            f'{{"query_id": {json.dumps(p.query_id)}, "level": {p.tile.level}, '
            f'"x": {p.tile.x}, "y": {p.tile.y}, "iou": {p.iou_value:.6f}, '
            f'"label": {json.dumps(p.label)}}}'
        )
    return "\n".join(lines) + "\n"


def write_manifest(path: str | Path, pairs: Sequence[PairRecord], cfg: PairingConfig) -> None:
    Path(path).write_text(format_manifest(pairs, cfg))


def parse_manifest(text: str) -> tuple[PairingConfig, list[PairRecord]]:
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty pair manifest")
    try:
        header = json.loads(lines[0])
        if header.get("format") != "pair-manifest":
            raise FormatError("not a pair manifest")
        if header.get("version") != MANIFEST_VERSION:
            raise FormatError(f"unsupported manifest version {header.get('version')}")
        cfg = PairingConfig.from_dict(header["config"])
        pairs = []
        for line in lines[1:]:
            if not line.strip():
                continue
            d = json.loads(line)
            pairs.append(
                PairRecord(d["query_id"], TileId(d["level"], d["x"], d["y"]), float(d["iou"]), d["label"])
            )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed pair manifest: {exc}") from exc
    return cfg, pairs


def read_manifest(path: str | Path) -> tuple[PairingConfig, list[PairRecord]]:
    return parse_manifest(Path(path).read_text())


# -- queries ---------------------------------------------------------------


def format_queries(queries: Sequence[QueryRecord], features: Sequence | None = None) -> str:
    header = {"format": "queries", "version": QUERIES_VERSION, "count": len(queries)}
    lines = [_dumps(header)]
    for i, q in enumerate(queries):
        d = {
            "query_id": q.query_id,
            "x": q.pose.ground_point.x_east,
            "y": q.pose.ground_point.y_north,
            "altitude": q.pose.altitude,
            "roll": q.pose.roll,
            "pitch": q.pose.pitch,
            "yaw": q.pose.yaw,
            "hfov": q.intr.hfov,
            "vfov": q.intr.vfov,
        }
        if features is not None:
            d["feature"] = [float(v) for v in np.asarray(features[i], dtype=np.float32)]
        lines.append(_dumps(d))
    return "\n".join(lines) + "\n"


def write_queries(path: str | Path, queries, features=None) -> None:
    Path(path).write_text(format_queries(queries, features))


def read_queries(path: str | Path) -> tuple[list[QueryRecord], np.ndarray | None]:
    lines = Path(path).read_text().splitlines()
    try:
        header = json.loads(lines[0])
        if header.get("format") != "queries" or header.get("version") != QUERIES_VERSION:
            raise FormatError(f"unsupported query file header {header}")
        queries, feats = [], []
        for line in lines[1:]:
            if not line.strip():
                continue
            d = json.loads(line)
            pose = CameraPose(GeoPoint(d["x"], d["y"]), d["altitude"], d["roll"], d["pitch"], d["yaw"])
            queries.append(QueryRecord(d["query_id"], pose, CameraIntrinsics(d["hfov"], d["vfov"])))
            if "feature" in d:
                feats.append(d["feature"])
    except (IndexError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed query file {path}: {exc}") from exc
    if feats and len(feats) != len(queries):
        raise FormatError("either every query or none carries a feature vector")
    return queries, (np.array(feats, dtype=np.float32) if feats else None)


# -- batch schedule --------------------------------------------------------


def format_schedule(batches: Sequence[Batch], b: int, seed: int, strict: bool) -> str:
    """Header line, then one batch per line of space-separated query:tile tokens."""
    lines = [
        f"# batch-schedule version={SCHEDULE_VERSION} b={b} seed={seed} "
        f"strict={int(strict)} batches={len(batches)}"
    ]
    for batch in batches:
        lines.append(" ".join(f"{q}:{r}" for q, r, _ in batch.pairs))
    return "\n".join(lines) + "\n"


def parse_schedule(text: str) -> tuple[dict, list[list[tuple[str, TileId]]]]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# batch-schedule"):
        raise FormatError("not a batch schedule")
    meta = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    if int(meta.get("version", -1)) != SCHEDULE_VERSION:
        raise FormatError(f"unsupported schedule version {meta.get('version')}")
    batches = []
    for line in lines[1:]:
        if not line.strip():
            continue
        batch = []
        for tok in line.split():
            q, _, t = tok.rpartition(":")
            batch.append((q, TileId.parse(t)))
        batches.append(batch)
    return {k: int(v) for k, v in meta.items()}, batches


# -- binary embeddings and checkpoints --------------------------------------


def _f32(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def pack_embeddings(ids: Sequence[TileId], emb) -> bytes:
    """``SKLE``, u32 count, u32 dim, count*dim f32, then (u8 level, u32 x, u32 y) per id."""
    emb = np.asarray(emb)
    if emb.ndim != 2 or emb.shape[0] != len(ids):
        raise FormatError("embedding rows must match ids")
    buf = io.BytesIO()
    buf.write(EMBEDDING_MAGIC)
    buf.write(struct.pack("<II", emb.shape[0], emb.shape[1]))
    buf.write(_f32(emb))
    for t in ids:
        buf.write(struct.pack("<BII", t.level, t.x, t.y))
    return buf.getvalue()


def unpack_embeddings(data: bytes) -> tuple[list[TileId], np.ndarray]:
    if data[:4] != EMBEDDING_MAGIC:
        raise FormatError("bad embedding file magic")
    count, dim = struct.unpack_from("<II", data, 4)
    off = 12
    size = count * dim * 4
    expected = off + size + count * 9
    if len(data) != expected:
        raise FormatError(f"embedding file has {len(data)} bytes, expected {expected}")
    emb = np.frombuffer(data, dtype="<f4", count=count * dim, offset=off).reshape(count, dim)
    off += size
    ids = [TileId(*struct.unpack_from("<BII", data, off + 9 * i)) for i in range(count)]
    return ids, emb.astype(np.float32)


def write_embeddings(path: str | Path, ids, emb) -> None:
    Path(path).write_bytes(pack_embeddings(ids, emb))


def read_embeddings(path: str | Path) -> tuple[list[TileId], np.ndarray]:
    return unpack_embeddings(Path(path).read_bytes())


def pack_checkpoint(model: EmbedModel) -> bytes:
    """``SKL1``, u32 version, u32 d_in, u32 d_emb, u32 shared, then f32 arrays.

    Arrays follow in the order w_q, b_q, [w_r, b_r when not shared], tau.
    """
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<IIII", CHECKPOINT_VERSION, model.d_in, model.d_emb, int(model.shared)))
    for p in model.params():
        buf.write(_f32(p))
    buf.write(_f32([model.tau]))
    return buf.getvalue()


def unpack_checkpoint(data: bytes) -> EmbedModel:
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic")
    version, d_in, d_emb, shared = struct.unpack_from("<IIII", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    n_arrays = 2 if shared else 4
    expected = 20 + 4 * (n_arrays // 2 * (d_in * d_emb + d_emb) + 1)
    if len(data) != expected:
        raise FormatError(f"checkpoint has {len(data)} bytes, expected {expected}")
    vals = np.frombuffer(data, dtype="<f4", offset=20).astype(np.float64)
    out = []
    off = 0
    for _ in range(n_arrays // 2):
        out.append(vals[off : off + d_in * d_emb].reshape(d_in, d_emb).copy())
        off += d_in * d_emb
        out.append(vals[off : off + d_emb].copy())
        off += d_emb
    tau = float(vals[off])
    if shared:
        return EmbedModel(out[0], out[1], out[0], out[1], tau, True)
    return EmbedModel(out[0], out[1], out[2], out[3], tau, False)


def write_checkpoint(path: str | Path, model: EmbedModel) -> None:
    Path(path).write_bytes(pack_checkpoint(model))


def read_checkpoint(path: str | Path) -> EmbedModel:
    return unpack_checkpoint(Path(path).read_bytes())


# -- loss trace --------------------------------------------------------------


def format_trace(epoch_loss: Iterable[float], batches: Iterable[int], taus: Iterable[float]) -> str:
    lines = ["epoch\tmean_loss\tbatches\ttau"]
    for i, (loss, nb, tau) in enumerate(zip(epoch_loss, batches, taus)):
        lines.append(f"{i}\t{loss!r}\t{nb}\t{tau!r}")
    return "\n".join(lines) + "\n"
