import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation
from shapely.geometry import Polygon

from conftest import mc_areas, random_convex_quad
from uavgeo.errors import DegenerateError, HorizonError
from uavgeo.geometry import (
    CameraIntrinsics,
    CameraPose,
    ConvexPolygon,
    GeoPoint,
    camera_rotation,
    clean_polygon,
    clip_halfplane,
    convex_intersection,
    intersection_area,
    iou,
    polygon_area,
    project_footprint,
)


def shp(p: ConvexPolygon) -> Polygon:
    return Polygon(p.vertices)


class TestCameraPose:
    @pytest.mark.parametrize("angle,wrapped", [(180.0, -180.0), (190.0, -170.0), (-190.0, 170.0), (720.0, 0.0)])
    def test_angles_wrap(self, angle, wrapped):
        pose = CameraPose(GeoPoint(0, 0), 10.0, yaw=angle)
        assert pose.yaw == pytest.approx(wrapped)

    @pytest.mark.parametrize("alt", [0.0, -5.0, math.inf, math.nan])
    def test_bad_altitude(self, alt):
        with pytest.raises(DegenerateError):
            CameraPose(GeoPoint(0, 0), alt)

    @pytest.mark.parametrize("fov", [0.0, 180.0, -1.0])
    def test_bad_fov(self, fov):
        with pytest.raises(ValueError):
            CameraIntrinsics(fov, 40.0)


class TestRotation:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scipy_euler(self, seed):
        r = np.random.default_rng(seed)
        roll, pitch, yaw = r.uniform(-170, 170, 3)
        pose = CameraPose(GeoPoint(0, 0), 1.0, roll, pitch, yaw)
        ref = Rotation.from_euler("ZYX", [yaw, -pitch, roll], degrees=True).as_matrix()
        np.testing.assert_allclose(camera_rotation(pose), ref, atol=1e-12)


class TestFootprint:
    @pytest.mark.parametrize("h", [50.0, 120.0, 650.0])
    def test_nadir_extent(self, h):
        intr = CameraIntrinsics(60.0, 40.0)
        fp = project_footprint(CameraPose(GeoPoint(10, -20), h), intr)
        x0, y0, x1, y1 = fp.bounds()
        # Yaw 0: image width runs north-south, image height east-west.
        assert (y1 - y0) == pytest.approx(2 * h * math.tan(math.radians(30)), rel=1e-9)
        assert (x1 - x0) == pytest.approx(2 * h * math.tan(math.radians(20)), rel=1e-9)
        assert ((x0 + x1) / 2, (y0 + y1) / 2) == pytest.approx((10, -20), abs=1e-9)

    def test_yaw_90_swaps_extents(self):
        intr = CameraIntrinsics(60.0, 40.0)
        a = project_footprint(CameraPose(GeoPoint(0, 0), 100, yaw=0), intr).bounds()
        b = project_footprint(CameraPose(GeoPoint(0, 0), 100, yaw=90), intr).bounds()
        assert b[2] - b[0] == pytest.approx(a[3] - a[1])
        assert b[3] - b[1] == pytest.approx(a[2] - a[0])

    def test_oblique_trapezoid(self):
        h, tilt, vfov = 100.0, 30.0, 40.0
        fp = project_footprint(CameraPose(GeoPoint(0, 0), h, pitch=-90 + tilt), CameraIntrinsics(60, vfov))
        x0, _, x1, _ = fp.bounds()
        assert x0 == pytest.approx(h * math.tan(math.radians(tilt - vfov / 2)), rel=1e-9)
        assert x1 == pytest.approx(h * math.tan(math.radians(tilt + vfov / 2)), rel=1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_vertices_reproject_to_image_corners(self, seed):
        r = np.random.default_rng(seed)
        pose = CameraPose(
            GeoPoint(*r.uniform(-500, 500, 2)), r.uniform(50, 600), r.uniform(-10, 10), r.uniform(-100, -80), r.uniform(-180, 180)
        )
        intr = CameraIntrinsics(60.0, 46.0)
        fp = project_footprint(pose, intr)
        rot = Rotation.from_euler("ZYX", [pose.yaw, -pose.pitch, pose.roll], degrees=True).as_matrix()
        th, tv = math.tan(math.radians(30)), math.tan(math.radians(23))
        for v in fp.vertices:
            world = np.array([v.x_east - pose.ground_point.x_east, v.y_north - pose.ground_point.y_north, -pose.altitude])
            cam = rot.T @ world
            assert cam[0] > 0
            assert abs(cam[1] / cam[0]) == pytest.approx(th, rel=1e-9)
            assert abs(cam[2] / cam[0]) == pytest.approx(tv, rel=1e-9)

    @pytest.mark.parametrize("pitch,roll", [(0.0, 0.0), (-20.0, 0.0), (-10.0, 30.0), (45.0, 0.0)])
    def test_horizon(self, pitch, roll):
        with pytest.raises(HorizonError):
            project_footprint(CameraPose(GeoPoint(0, 0), 100, roll, pitch), CameraIntrinsics(60, 45))

    def test_footprint_is_ccw_quad(self):
        fp = project_footprint(CameraPose(GeoPoint(0, 0), 100, 5, -85, 33), CameraIntrinsics(60, 45))
        assert len(fp) == 4
        assert polygon_area(fp) > 0


class TestPolygon:
    def test_rectangle_area(self):
        assert polygon_area(ConvexPolygon.rectangle(0, 0, 3, 2)) == 6.0

    def test_rejects_clockwise(self):
        with pytest.raises(DegenerateError):
            ConvexPolygon(((0, 0), (0, 1), (1, 1), (1, 0)))

    def test_rejects_nonconvex(self):
        with pytest.raises(DegenerateError):
            ConvexPolygon(((0, 0), (2, 0), (1, 0.5), (2, 2), (0, 2)))

    def test_rejects_collinear(self):
        with pytest.raises(DegenerateError):
            ConvexPolygon(((0, 0), (1, 0), (2, 0), (2, 2)))

    def test_clean_polygon_fixes_orientation_and_duplicates(self):
        p = clean_polygon([(0, 0), (0, 1), (1, 1), (1, 1), (1, 0.5), (1, 0)])
        assert p is not None and len(p) == 4
        assert polygon_area(p) == pytest.approx(1.0)

    def test_clean_polygon_degenerate(self):
        assert clean_polygon([(0, 0), (1, 1), (2, 2)]) is None

    def test_contains_boundary(self):
        sq = ConvexPolygon.rectangle(0, 0, 1, 1)
        assert sq.contains((0.5, 0.5))
        assert sq.contains((1.0, 0.3))
        assert not sq.contains((1.01, 0.3))

    def test_clip_halfplane(self):
        sq = list(ConvexPolygon.rectangle(0, 0, 2, 2).vertices)
        half = clip_halfplane(sq, (1, 0), (1, 1))  # keep x <= 1
        assert polygon_area(clean_polygon(half)) == pytest.approx(2.0)


class TestIntersection:
    def test_identical(self):
        sq = ConvexPolygon.rectangle(0, 0, 1, 1)
        assert iou(sq, sq) == 1.0

    def test_disjoint(self):
        a = ConvexPolygon.rectangle(0, 0, 1, 1)
        assert convex_intersection(a, a.translated(5, 0)) is None
        assert iou(a, a.translated(5, 0)) == 0.0

    def test_edge_touch_is_empty(self):
        a = ConvexPolygon.rectangle(0, 0, 1, 1)
        assert intersection_area(a, a.translated(1, 0)) == 0.0

    def test_half_shift(self):
        a = ConvexPolygon.rectangle(0, 0, 2, 2)
        assert iou(a, a.translated(1, 0)) == pytest.approx(2 / 6)

    def test_contained(self):
        big = ConvexPolygon.rectangle(0, 0, 4, 4)
        small = ConvexPolygon.rectangle(1, 1, 2, 2)
        assert iou(big, small) == pytest.approx(1 / 16)

    def test_monte_carlo_oracle(self, rng):
        for _ in range(5):
            a = random_convex_quad(rng)
            b = random_convex_quad(rng, center=rng.uniform(-80, 80, 2))
            ea, eb, ei = mc_areas(a, b, 250_000, rng)
            assert polygon_area(a) == pytest.approx(ea, rel=5e-3)
            assert intersection_area(a, b) == pytest.approx(ei, rel=5e-3, abs=20.0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_shapely(self, seed):
        r = np.random.default_rng(seed)
        a = random_convex_quad(r)
        b = random_convex_quad(r, center=r.uniform(-150, 150, 2), radius=r.uniform(20, 200))
        sa, sb = shp(a), shp(b)
        inter = sa.intersection(sb).area
        assert polygon_area(a) == pytest.approx(sa.area, rel=1e-9)
        assert intersection_area(a, b) == pytest.approx(inter, rel=1e-9, abs=1e-6)
        assert iou(a, b) == pytest.approx(inter / sa.union(sb).area, rel=1e-9, abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_iou_properties(self, seed):
        r = np.random.default_rng(seed)
        a = random_convex_quad(r)
        b = random_convex_quad(r, center=r.uniform(-150, 150, 2))
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == pytest.approx(iou(b, a), abs=1e-12)
        assert intersection_area(a, b) <= min(polygon_area(a), polygon_area(b)) + 1e-9
        # Translation invariance.
        assert iou(a.translated(1e3, -2e3), b.translated(1e3, -2e3)) == pytest.approx(v, abs=1e-9)
