"""Ground-plane geometry: camera footprints, convex polygons, areas and IOU.

All coordinates live in a planar local frame measured in meters, with
``x_east`` pointing east and ``y_north`` pointing north. The ground is the
plane ``z = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateError, HorizonError

TOL = 1e-9
AREA_EPS = 1e-12


class GeoPoint(NamedTuple):
    x_east: float
    y_north: float


def _wrap_degrees(angle: float) -> float:
    wrapped = math.fmod(angle + 180.0, 360.0)
    if wrapped < 0:
        wrapped += 360.0
    return wrapped - 180.0


@dataclass(frozen=True)
class CameraPose:
    """Drone position and attitude.

    Angles are in degrees. ``pitch = -90`` looks straight down; at zero
    attitude the optical axis points east (+x), level with the ground.
    """

    ground_point: GeoPoint
    altitude: float
    roll: float = 0.0
    pitch: float = -90.0
    yaw: float = 0.0

    def __post_init__(self):
        gp = GeoPoint(float(self.ground_point[0]), float(self.ground_point[1]))
        if not (math.isfinite(gp.x_east) and math.isfinite(gp.y_north)):
            raise DegenerateError(f"non-finite ground point {gp}")
        if not (self.altitude > 0 and math.isfinite(self.altitude)):
            raise DegenerateError(f"altitude must be positive, got {self.altitude}")
        object.__setattr__(self, "ground_point", gp)
        object.__setattr__(self, "altitude", float(self.altitude))
        for name in ("roll", "pitch", "yaw"):
            object.__setattr__(self, name, _wrap_degrees(float(getattr(self, name))))


@dataclass(frozen=True)
class CameraIntrinsics:
    hfov: float
    vfov: float

    def __post_init__(self):
        for name in ("hfov", "vfov"):
            v = getattr(self, name)
            if not 0.0 < v < 180.0:
                raise ValueError(f"{name} must lie in (0, 180) degrees, got {v}")


def _cross(o: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _signed_area(pts: Sequence[Sequence[float]]) -> float:
    s = 0.0
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


@dataclass(frozen=True)
class ConvexPolygon:
    """A strictly convex polygon with counter-clockwise vertices."""

    vertices: tuple[GeoPoint, ...]

    def __post_init__(self):
        verts = tuple(GeoPoint(float(x), float(y)) for x, y in self.vertices)
        n = len(verts)
        if n < 3:
            raise DegenerateError(f"polygon needs at least 3 vertices, got {n}")
        for x, y in verts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise DegenerateError("polygon vertex is not finite")
        for i in range(n):
            a, b, c = verts[i - 1], verts[i], verts[(i + 1) % n]
            if math.dist(a, b) <= TOL:
                raise DegenerateError(f"repeated vertex {b}")
            base = math.dist(a, c)
            if base <= TOL or _cross(a, b, c) / base <= TOL:
                raise DegenerateError(
                    f"polygon is not strictly convex and counter-clockwise at vertex {i}"
                )
        object.__setattr__(self, "vertices", verts)

    def __len__(self) -> int:
        return len(self.vertices)

    def as_array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=np.float64)

    def bounds(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y)."""
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def translated(self, dx: float, dy: float) -> ConvexPolygon:
        return ConvexPolygon(tuple(GeoPoint(x + dx, y + dy) for x, y in self.vertices))

    def contains(self, pt: Sequence[float], tol: float = TOL) -> bool:
        """True if ``pt`` lies inside or on the boundary."""
        n = len(self.vertices)
        for i in range(n):
            a, b = self.vertices[i], self.vertices[(i + 1) % n]
            if _cross(a, b, pt) / math.dist(a, b) < -tol:
                return False
        return True

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> ConvexPolygon:
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


# A footprint is a ConvexPolygon with exactly four vertices; no separate class
# is needed beyond the check in project_footprint.
FootprintQuad = ConvexPolygon


def clean_polygon(points: Iterable[Sequence[float]]) -> ConvexPolygon | None:
    """Build a ConvexPolygon from a convex point cycle of either orientation.

    Near-duplicate and collinear vertices are dropped. Returns None when what
    is left has no area.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) >= 3 and _signed_area(pts) < 0:
        pts.reverse()
    changed = True
    while changed and len(pts) >= 3:
        changed = False
        n = len(pts)
        for i in range(n):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
            base = math.dist(a, c)
            if math.dist(a, b) <= TOL or base <= TOL or _cross(a, b, c) / base <= TOL:
                del pts[i]
                changed = True
                break
    if len(pts) < 3 or _signed_area(pts) <= 0:
        return None
    return ConvexPolygon(tuple(pts))


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def camera_rotation(pose: CameraPose) -> np.ndarray:
    """Camera-to-world rotation, yaw about z, then pitch about y, then roll.

    Camera axes: +x forward (optical axis), +y left, +z up. Pitch is positive
    nose-up, so the rotation about the world y axis uses ``-pitch``.
    """
    return (
        _rot_z(math.radians(pose.yaw))
        @ _rot_y(-math.radians(pose.pitch))
        @ _rot_x(math.radians(pose.roll))
    )


def corner_rays(pose: CameraPose, intr: CameraIntrinsics) -> np.ndarray:
    """World-frame directions of the four image corners, shape (4, 3)."""
    th = math.tan(math.radians(intr.hfov) / 2.0)
    tv = math.tan(math.radians(intr.vfov) / 2.0)
    cam = np.array(
        [[1.0, th, tv], [1.0, -th, tv], [1.0, -th, -tv], [1.0, th, -tv]]
    )
    return cam @ camera_rotation(pose).T


def project_footprint(pose: CameraPose, intr: CameraIntrinsics) -> ConvexPolygon:
    """Intersect the four corner rays with the ground plane.

    Raises:
        HorizonError: a corner ray is horizontal or points upward.
    """
    rays = corner_rays(pose, intr)
    if np.any(rays[:, 2] >= -AREA_EPS):
        raise HorizonError(
            f"corner ray does not reach the ground (pitch={pose.pitch}, roll={pose.roll})"
        )
    t = -pose.altitude / rays[:, 2]
    xs = pose.ground_point.x_east + t * rays[:, 0]
    ys = pose.ground_point.y_north + t * rays[:, 1]
    quad = clean_polygon(zip(xs.tolist(), ys.tolist()))
    if quad is None or len(quad) != 4:
        raise DegenerateError("footprint is not a proper quadrilateral")
    return quad


def polygon_area(p: ConvexPolygon) -> float:
    """Shoelace area in square meters."""
    return _signed_area(p.vertices)


def clip_halfplane(
    pts: list[tuple[float, float]],
    a: Sequence[float],
    b: Sequence[float],
) -> list[tuple[float, float]]:
    """Keep the part of a convex point cycle left of the directed line a->b."""
    if not pts:
        return pts
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    out = []
    prev = pts[-1]
    prev_d = dx * (prev[1] - ay) - dy * (prev[0] - ax)
    for cur in pts:
        cur_d = dx * (cur[1] - ay) - dy * (cur[0] - ax)
        if cur_d >= 0:
            if prev_d < 0:
                t = prev_d / (prev_d - cur_d)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            out.append(cur)
        elif prev_d >= 0:
            t = prev_d / (prev_d - cur_d)
            out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
        prev, prev_d = cur, cur_d
    return out


def convex_intersection(a: ConvexPolygon, b: ConvexPolygon) -> ConvexPolygon | None:
    """Exact intersection by clipping ``a`` against every edge of ``b``.

    Returns None for an empty (or zero-area) intersection.
    """
    ax0, ay0, ax1, ay1 = a.bounds()
    bx0, by0, bx1, by1 = b.bounds()
    if ax0 >= bx1 or bx0 >= ax1 or ay0 >= by1 or by0 >= ay1:
        return None
    pts = list(a.vertices)
    verts = b.vertices
    n = len(verts)
    for i in range(n):
        pts = clip_halfplane(pts, verts[i], verts[(i + 1) % n])
        if len(pts) < 3:
            return None
    return clean_polygon(pts)


def intersection_area(a: ConvexPolygon, b: ConvexPolygon) -> float:
    inter = convex_intersection(a, b)
    return 0.0 if inter is None else polygon_area(inter)


def iou(a: ConvexPolygon, b: ConvexPolygon) -> float:
    """Intersection over union, clamped to [0, 1]."""
    inter = intersection_area(a, b)
    union = polygon_area(a) + polygon_area(b) - inter
    if union < AREA_EPS:
        raise DegenerateError(f"union area {union} too small for IOU")
    return min(1.0, max(0.0, inter / union))
