import math

import numpy as np
import pytest

from uavgeo.geometry import ConvexPolygon, clean_polygon


def random_convex_quad(rng, center=(0.0, 0.0), radius=100.0) -> ConvexPolygon:
    """Four sorted angles on a jittered circle give a convex quad (retry if not)."""
    while True:
        ang = np.sort(rng.uniform(0, 2 * math.pi, 4))
        r = radius * rng.uniform(0.5, 1.5, 4)
        pts = np.c_[center[0] + r * np.cos(ang), center[1] + r * np.sin(ang)]
        poly = clean_polygon(pts.tolist())
        if poly is not None and len(poly) == 4:
            return poly


def mc_inside(poly: ConvexPolygon, xy: np.ndarray) -> np.ndarray:
    """Vectorized half-plane membership test for a CCW convex polygon."""
    v = poly.as_array()
    inside = np.ones(len(xy), dtype=bool)
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        inside &= (b[0] - a[0]) * (xy[:, 1] - a[1]) - (b[1] - a[1]) * (xy[:, 0] - a[0]) >= 0
    return inside


def mc_areas(a: ConvexPolygon, b: ConvexPolygon, n: int, rng) -> tuple[float, float, float]:
    """Monte-Carlo estimates of area(a), area(b) and area(a & b) in a shared box."""
    boxes = np.array([a.bounds(), b.bounds()])
    x0, y0 = boxes[:, 0].min(), boxes[:, 1].min()
    x1, y1 = boxes[:, 2].max(), boxes[:, 3].max()
    # Stratified (jittered grid) sampling keeps the error well under 1e-3.
    side = int(math.isqrt(n))
    gx, gy = np.meshgrid(np.arange(side), np.arange(side))
    u = (gx.ravel() + rng.random(side * side)) / side
    v = (gy.ravel() + rng.random(side * side)) / side
    xy = np.c_[x0 + u * (x1 - x0), y0 + v * (y1 - y0)]
    box = (x1 - x0) * (y1 - y0)
    ia, ib = mc_inside(a, xy), mc_inside(b, xy)
    return box * ia.mean(), box * ib.mean(), box * (ia & ib).mean()


def finite_diff(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central differences of a scalar function over every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_world():
    """A 2 km synthetic world with 400 queries paired at levels 4-7."""
    from uavgeo.pairing import PairingConfig
    from uavgeo.synthgen import generate_dataset, generate_world, tile_features
    from uavgeo.tilemap import TilePyramid

    world = generate_world(11, (2000.0, 2000.0), cell_size=50.0, d_in=16, view_dims=4)
    pyr = TilePyramid(map_width=2000.0, map_height=2000.0)
    ds = generate_dataset(world, 400, pyr, PairingConfig(), seed=11)
    tiles = sorted({p.tile for p in ds.pairs}, key=lambda t: t.sort_key)
    tfeat = dict(zip(tiles, tile_features(world, pyr, tiles)))
    return world, pyr, ds, ds.feature_of(), tfeat
