"""Synthetic worlds: a random feature field on a ground grid, drone poses in
flight ranges, and pooled view features whose similarity tracks overlap.

A view's feature is the area-weighted mean of the cell vectors it covers,
unit-normalized. Cells carry independent Gaussian vectors, so two views'
cosine similarity grows with their shared area.

The last ``view_dims`` components of each cell vector are view-specific
appearance: the satellite view reads them from the main field, the drone
view from a second, independent field. The remaining components are content
seen identically from both views.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np

from .errors import DegenerateError, HorizonError
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    ConvexPolygon,
    GeoPoint,
    _signed_area,
    clip_halfplane,
    project_footprint,
)
from .pairing import PairingConfig, PairRecord, QueryRecord, build_pairs
from .tilemap import TileId, TilePyramid

ALTITUDE_RANGE = (80.0, 650.0)
ROLL_RANGE = (-10.0, 10.0)
PITCH_RANGE = (-100.0, -80.0)
YAW_RANGE = (-180.0, 180.0)

SATELLITE = "satellite"
DRONE = "drone"

DEFAULT_HFOV = 60.0
# 4:3 frame with a 60 degree horizontal field of view.
DEFAULT_VFOV = math.degrees(2 * math.atan(0.75 * math.tan(math.radians(30.0))))


@dataclass
class SyntheticWorld:
    seed: int
    width: float
    height: float
    cell_size: float
    d_in: int
    field: np.ndarray = dc_field(repr=False)  # (ny, nx, d_in), satellite view
    drone_appearance: np.ndarray | None = dc_field(default=None, repr=False)  # (ny, nx, view_dims)
    altitude_range: tuple[float, float] = ALTITUDE_RANGE
    roll_range: tuple[float, float] = ROLL_RANGE
    pitch_range: tuple[float, float] = PITCH_RANGE
    yaw_range: tuple[float, float] = YAW_RANGE
    intr: CameraIntrinsics = CameraIntrinsics(DEFAULT_HFOV, DEFAULT_VFOV)

    @property
    def shape(self) -> tuple[int, int]:
        return self.field.shape[0], self.field.shape[1]

    @property
    def view_dims(self) -> int:
        return 0 if self.drone_appearance is None else self.drone_appearance.shape[2]

    def view_field(self, view: str) -> np.ndarray:
        if view == SATELLITE or self.drone_appearance is None:
            if view not in (SATELLITE, DRONE):
                raise ValueError(f"unknown view {view!r}")
            return self.field
        if view != DRONE:
            raise ValueError(f"unknown view {view!r}")
        if self._drone_field is None:
            f = self.field.copy()
            f[..., self.d_in - self.view_dims :] = self.drone_appearance
            self._drone_field = f
        return self._drone_field

    def __post_init__(self):
        self._drone_field = None

    def x_edges(self) -> np.ndarray:
        return np.minimum(np.arange(self.shape[1] + 1) * self.cell_size, self.width)

    def y_edges(self) -> np.ndarray:
        return np.minimum(np.arange(self.shape[0] + 1) * self.cell_size, self.height)


def generate_world(
    seed: int,
    dims: tuple[float, float] = (9016.0, 9016.0),
    cell_size: float = 64.0,
    d_in: int = 32,
    view_dims: int = 0,
    **ranges,
) -> SyntheticWorld:
    """A ``ceil(w/cell) x ceil(h/cell)`` grid of i.i.d. standard normal vectors.

    The map's south-west corner is the frame origin; border cells are cut at
    the map edge.
    """
    width, height = map(float, dims)
    if not (width > 0 and height > 0 and cell_size > 0 and d_in >= 1):
        raise ValueError("world dimensions, cell size and d_in must be positive")
    if not 0 <= view_dims < d_in:
        raise ValueError(f"view_dims must lie in [0, d_in), got {view_dims}")
    nx = math.ceil(width / cell_size)
    ny = math.ceil(height / cell_size)
    rng = np.random.default_rng(seed)
    grid = rng.standard_normal((ny, nx, d_in))
    drone = rng.standard_normal((ny, nx, view_dims)) if view_dims else None
    return SyntheticWorld(
        seed, width, height, float(cell_size), int(d_in), grid, drone, **ranges
    )


def _poly_area(pts) -> float:
    return abs(_signed_area(pts)) if len(pts) >= 3 else 0.0


def cell_weights(world: SyntheticWorld, region: ConvexPolygon):
    """Area of ``region`` inside each cell it touches.

    Returns (row0, col0, areas) where ``areas[i, j]`` belongs to cell
    ``(row0 + i, col0 + j)``.
    """
    pts = list(region.vertices)
    for a, b in (
        ((0.0, 0.0), (1.0, 0.0)),
        ((world.width, 0.0), (world.width, 1.0)),
        ((0.0, world.height), (-1.0, world.height)),
        ((0.0, world.height), (0.0, 0.0)),
    ):
        pts = clip_halfplane(pts, a, b)
    if len(pts) < 3:
        return 0, 0, np.zeros((0, 0))
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    cs = world.cell_size
    nrows, ncols = world.shape
    c0 = min(ncols - 1, max(0, int(min(xs) // cs)))
    c1 = min(ncols - 1, max(0, int(max(xs) // cs)))
    r0 = min(nrows - 1, max(0, int(min(ys) // cs)))
    r1 = min(nrows - 1, max(0, int(max(ys) // cs)))
    areas = np.zeros((r1 - r0 + 1, c1 - c0 + 1))
    for j, col in enumerate(range(c0, c1 + 1)):
        xa, xb = col * cs, (col + 1) * cs
        strip = clip_halfplane(pts, (xa, 1.0), (xa, 0.0))
        strip = clip_halfplane(strip, (xb, 0.0), (xb, 1.0))
        if len(strip) < 3:
            continue
        total = _poly_area(strip)
        below_prev = 0.0
        for i, row in enumerate(range(r0, r1 + 1)):
            yb = (row + 1) * cs
            if row == r1:
                below = total
            else:
                below = _poly_area(clip_halfplane(strip, (1.0, yb), (0.0, yb)))
            areas[i, j] = below - below_prev
            below_prev = below
    return r0, c0, np.maximum(areas, 0.0)


def view_features(
    world: SyntheticWorld, region: ConvexPolygon, view: str = SATELLITE
) -> np.ndarray:
    """Unit-norm, area-weighted mean of the cell vectors under ``region``.

    Raises:
        DegenerateError: the region does not overlap the map.
    """
    r0, c0, areas = cell_weights(world, region)
    if areas.sum() <= 0:
        raise DegenerateError("region does not overlap the map")
    block = world.view_field(view)[r0 : r0 + areas.shape[0], c0 : c0 + areas.shape[1]]
    return _normalize(np.tensordot(areas, block, axes=([0, 1], [0, 1])))


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0:
        raise DegenerateError("pooled feature vector is zero")
    return v / n


def _overlap_1d(edges: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, None)


def rect_features(world: SyntheticWorld, x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    """view_features for an axis-aligned rectangle, via separable overlaps."""
    wx = _overlap_1d(world.x_edges(), x0, x1)
    wy = _overlap_1d(world.y_edges(), y0, y1)
    cols = np.flatnonzero(wx)
    rows = np.flatnonzero(wy)
    if len(cols) == 0 or len(rows) == 0:
        raise DegenerateError("rectangle does not overlap the map")
    block = world.field[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    w = np.outer(wy[rows[0] : rows[-1] + 1], wx[cols[0] : cols[-1] + 1])
    return _normalize(np.tensordot(w, block, axes=([0, 1], [0, 1])))


def tile_features(world: SyntheticWorld, pyr: TilePyramid, tiles) -> np.ndarray:
    """Pooled features of tiles, shape (len(tiles), d_in), float32."""
    out = np.empty((len(tiles), world.d_in), dtype=np.float32)
    for i, t in enumerate(tiles):
        w, h = pyr.tile_size(t.level)
        x0 = pyr.origin.x_east + t.x * w
        y0 = pyr.origin.y_north + t.y * h
        out[i] = rect_features(world, x0, y0, x0 + w, y0 + h)
    return out


def query_rng(seed: int, index: int) -> np.random.Generator:
    """Generator keyed by (seed, query index); independent of generation order."""
    return np.random.default_rng([seed, index])


def sample_pose(world: SyntheticWorld, rng: np.random.Generator) -> CameraPose:
    """Uniform pose over the map and the world's attitude/altitude ranges.

    Poses whose footprint reaches the horizon are redrawn, never clamped.
    """
    while True:
        pose = CameraPose(
            GeoPoint(rng.uniform(0.0, world.width), rng.uniform(0.0, world.height)),
            altitude=rng.uniform(*world.altitude_range),
            roll=rng.uniform(*world.roll_range),
            pitch=rng.uniform(*world.pitch_range),
            yaw=rng.uniform(*world.yaw_range),
        )
        try:
            project_footprint(pose, world.intr)
        except HorizonError:
            continue
        return pose


@dataclass
class SyntheticDataset:
    queries: list[QueryRecord]
    query_features: np.ndarray  # (n, d_in) float32, row order of queries
    pairs: list[PairRecord]
    skipped: list[tuple[str, str]]

    def feature_of(self) -> dict[str, np.ndarray]:
        return {q.query_id: f for q, f in zip(self.queries, self.query_features)}


def query_id(index: int) -> str:
    return f"q{index:06d}"


def generate_queries(world: SyntheticWorld, n_queries: int, seed: int) -> list[QueryRecord]:
    if n_queries < 1:
        raise ValueError("n_queries must be >= 1")
    return [
        QueryRecord(query_id(i), sample_pose(world, query_rng(seed, i)), world.intr)
        for i in range(n_queries)
    ]


def query_features(world: SyntheticWorld, queries) -> np.ndarray:
    out = np.empty((len(queries), world.d_in), dtype=np.float32)
    for i, q in enumerate(queries):
        out[i] = view_features(world, project_footprint(q.pose, q.intr), DRONE)
    return out


def generate_dataset(
    world: SyntheticWorld,
    n_queries: int,
    pyramid: TilePyramid,
    cfg: PairingConfig = PairingConfig(),
    seed: int = 0,
) -> SyntheticDataset:
    queries = generate_queries(world, n_queries, seed)
    result = build_pairs(queries, pyramid, cfg)
    return SyntheticDataset(queries, query_features(world, queries), result.pairs, result.skipped)


def reference_tiles(pyr: TilePyramid, levels) -> list[TileId]:
    return list(pyr.tiles(levels))
