"""Quadtree satellite tile pyramid over a rectangular planar map.

Level ``L`` splits the map into ``2**L x 2**L`` tiles. Column ``x`` grows
eastward and row ``y`` grows northward, both counted from the south-west
origin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

from .errors import FormatError, OutOfRangeError
from .geometry import AREA_EPS, ConvexPolygon, GeoPoint, _signed_area, clip_halfplane

PYRAMID_FORMAT_VERSION = 1


class TileId(NamedTuple):
    level: int
    x: int
    y: int

    @property
    def sort_key(self) -> tuple[int, int, int]:
        return (self.level, self.y, self.x)

    def __str__(self) -> str:
        return f"{self.level}/{self.x}/{self.y}"

    @classmethod
    def parse(cls, text: str) -> TileId:
        try:
            level, x, y = (int(v) for v in text.split("/"))
        except ValueError as exc:
            raise FormatError(f"bad tile id {text!r}") from exc
        return cls(level, x, y)


@dataclass(frozen=True)
class TilePyramid:
    origin: GeoPoint = GeoPoint(0.0, 0.0)
    map_width: float = 1000.0
    map_height: float = 1000.0
    tile_pixels: int = 256
    min_level: int = 0
    max_level: int = 7
    # Optional land mask; None keeps every tile.
    keep: frozenset[TileId] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "origin", GeoPoint(*map(float, self.origin)))
        object.__setattr__(self, "map_width", float(self.map_width))
        object.__setattr__(self, "map_height", float(self.map_height))
        if not (self.map_width > 0 and self.map_height > 0):
            raise ValueError("map dimensions must be positive")
        if self.tile_pixels < 1:
            raise ValueError("tile_pixels must be >= 1")
        if not 0 <= self.min_level <= self.max_level <= 30:
            raise ValueError(
                f"need 0 <= min_level <= max_level <= 30, got {self.min_level}..{self.max_level}"
            )
        if self.keep is not None:
            object.__setattr__(self, "keep", frozenset(TileId(*t) for t in self.keep))

    @property
    def bounds(self) -> ConvexPolygon:
        ox, oy = self.origin
        return ConvexPolygon.rectangle(ox, oy, ox + self.map_width, oy + self.map_height)

    def tile_size(self, level: int) -> tuple[float, float]:
        """Ground side lengths (east-west, north-south) of a tile at ``level``."""
        self._check_level(level)
        n = 1 << level
        return self.map_width / n, self.map_height / n

    def _check_level(self, level: int) -> None:
        if not self.min_level <= level <= self.max_level:
            raise OutOfRangeError(
                f"level {level} outside pyramid range {self.min_level}..{self.max_level}"
            )

    def check(self, t: TileId) -> None:
        self._check_level(t.level)
        n = 1 << t.level
        if not (0 <= t.x < n and 0 <= t.y < n):
            raise OutOfRangeError(f"tile {t} outside the {n}x{n} grid")

    def is_kept(self, t: TileId) -> bool:
        return self.keep is None or t in self.keep

    def tiles(self, levels: Iterable[int] | None = None) -> Iterator[TileId]:
        """Every kept tile of the given levels, in (level, y, x) order."""
        if levels is None:
            levels = range(self.min_level, self.max_level + 1)
        for level in sorted(levels):
            self._check_level(level)
            n = 1 << level
            for y in range(n):
                for x in range(n):
                    t = TileId(level, x, y)
                    if self.is_kept(t):
                        yield t

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "version": PYRAMID_FORMAT_VERSION,
            "origin": [self.origin.x_east, self.origin.y_north],
            "map_width": self.map_width,
            "map_height": self.map_height,
            "tile_pixels": self.tile_pixels,
            "min_level": self.min_level,
            "max_level": self.max_level,
        }
        if self.keep is not None:
            d["keep"] = [list(t) for t in sorted(self.keep, key=lambda t: t.sort_key)]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TilePyramid:
        version = d.get("version", PYRAMID_FORMAT_VERSION)
        if version != PYRAMID_FORMAT_VERSION:
            raise FormatError(f"unsupported pyramid config version {version}")
        keep = d.get("keep")
        return cls(
            origin=GeoPoint(*d.get("origin", (0.0, 0.0))),
            map_width=float(d["map_width"]),
            map_height=float(d["map_height"]),
            tile_pixels=int(d.get("tile_pixels", 256)),
            min_level=int(d.get("min_level", 0)),
            max_level=int(d.get("max_level", 7)),
            keep=None if keep is None else frozenset(TileId(*t) for t in keep),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> TilePyramid:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (KeyError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot parse pyramid config {path}: {exc}") from exc


def tile_bounds(pyr: TilePyramid, t: TileId) -> ConvexPolygon:
    pyr.check(t)
    w, h = pyr.tile_size(t.level)
    x0 = pyr.origin.x_east + t.x * w
    y0 = pyr.origin.y_north + t.y * h
    return ConvexPolygon.rectangle(x0, y0, x0 + w, y0 + h)


def tile_center(pyr: TilePyramid, t: TileId) -> GeoPoint:
    pyr.check(t)
    w, h = pyr.tile_size(t.level)
    return GeoPoint(pyr.origin.x_east + (t.x + 0.5) * w, pyr.origin.y_north + (t.y + 0.5) * h)


def ground_resolution(pyr: TilePyramid, level: int) -> float:
    """Meters per pixel along the east-west axis at ``level``."""
    return pyr.map_width / ((1 << level) * pyr.tile_pixels)


def tile_overlaps(
    pyr: TilePyramid, region: ConvexPolygon, levels: Iterable[int]
) -> list[tuple[TileId, float]]:
    """(tile, intersection area) for kept tiles under ``region``'s bounding box.

    Tiles are axis-aligned, so the region is clipped against four
    axis-parallel half-planes per candidate.
    """
    rx0, ry0, rx1, ry1 = region.bounds()
    pts0 = list(region.vertices)
    out = []
    for level in sorted(set(levels)):
        w, h = pyr.tile_size(level)
        n = 1 << level
        cx0 = max(0, math.floor((rx0 - pyr.origin.x_east) / w))
        cx1 = min(n - 1, math.floor((rx1 - pyr.origin.x_east) / w))
        cy0 = max(0, math.floor((ry0 - pyr.origin.y_north) / h))
        cy1 = min(n - 1, math.floor((ry1 - pyr.origin.y_north) / h))
        for x in range(cx0, cx1 + 1):
            xa = pyr.origin.x_east + x * w
            xb = xa + w
            strip = clip_halfplane(pts0, (xa, 1.0), (xa, 0.0))
            strip = clip_halfplane(strip, (xb, 0.0), (xb, 1.0))
            if len(strip) < 3:
                continue
            for y in range(cy0, cy1 + 1):
                t = TileId(level, x, y)
                if not pyr.is_kept(t):
                    continue
                ya = pyr.origin.y_north + y * h
                yb = ya + h
                cell = clip_halfplane(strip, (0.0, ya), (1.0, ya))
                cell = clip_halfplane(cell, (1.0, yb), (0.0, yb))
                if len(cell) >= 3:
                    area = abs(_signed_area(cell))
                    if area > AREA_EPS:
                        out.append((t, area))
    out.sort(key=lambda ta: ta[0].sort_key)
    return out


def tiles_overlapping(
    pyr: TilePyramid, region: ConvexPolygon, levels: Iterable[int]
) -> list[TileId]:
    """Kept tiles sharing positive area with ``region``, sorted by (level, y, x)."""
    return [t for t, _ in tile_overlaps(pyr, region, levels)]
