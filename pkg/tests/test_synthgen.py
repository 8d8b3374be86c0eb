import numpy as np
import pytest

from uavgeo.errors import DegenerateError
from uavgeo.geometry import ConvexPolygon, project_footprint
from uavgeo.synthgen import (
    DEFAULT_VFOV,
    DRONE,
    SATELLITE,
    cell_weights,
    generate_queries,
    generate_world,
    query_features,
    rect_features,
    tile_features,
    view_features,
)
from uavgeo.tilemap import TileId, TilePyramid


@pytest.fixture(scope="module")
def world():
    return generate_world(3, (1000.0, 700.0), cell_size=64.0, d_in=12, view_dims=4)


def test_default_vfov_is_four_by_three():
    assert np.tan(np.radians(DEFAULT_VFOV / 2)) == pytest.approx(0.75 * np.tan(np.radians(30)))


def test_world_is_seeded(world):
    again = generate_world(3, (1000.0, 700.0), cell_size=64.0, d_in=12, view_dims=4)
    np.testing.assert_array_equal(world.field, again.field)
    assert world.shape == (11, 16)
    assert not np.array_equal(generate_world(4, (1000.0, 700.0), 64.0, 12).field, world.field[..., :12])


def test_bad_view_dims():
    with pytest.raises(ValueError):
        generate_world(0, (100, 100), 10, d_in=4, view_dims=4)


class TestViews:
    def test_drone_view_replaces_tail_dims(self, world):
        sat, drone = world.view_field(SATELLITE), world.view_field(DRONE)
        np.testing.assert_array_equal(sat[..., :8], drone[..., :8])
        np.testing.assert_array_equal(drone[..., 8:], world.drone_appearance)
        assert not np.allclose(sat[..., 8:], drone[..., 8:])

    def test_no_view_dims_means_identical_views(self):
        w = generate_world(1, (300, 300), 50, d_in=5)
        assert w.view_field(DRONE) is w.view_field(SATELLITE)

    def test_unknown_view(self, world):
        with pytest.raises(ValueError):
            world.view_field("thermal")


class TestPooling:
    @pytest.mark.parametrize(
        "rect", [(10, 20, 300, 250), (0, 0, 1000, 700), (-50, -50, 100, 80), (900, 600, 1200, 900)]
    )
    def test_cell_weights_sum_to_clipped_area(self, world, rect):
        x0, y0, x1, y1 = rect
        _, _, areas = cell_weights(world, ConvexPolygon.rectangle(*rect))
        expected = (min(x1, 1000) - max(x0, 0)) * (min(y1, 700) - max(y0, 0))
        assert areas.sum() == pytest.approx(expected, rel=1e-12)

    def test_cell_weights_brute_force(self, world, rng):
        from uavgeo.geometry import intersection_area

        poly = ConvexPolygon(((100, 80), (400, 150), (330, 420), (90, 300)))
        r0, c0, areas = cell_weights(world, poly)
        for i in range(areas.shape[0]):
            for j in range(areas.shape[1]):
                cs = world.cell_size
                cell = ConvexPolygon.rectangle((c0 + j) * cs, (r0 + i) * cs, (c0 + j + 1) * cs, (r0 + i + 1) * cs)
                assert areas[i, j] == pytest.approx(intersection_area(poly, cell), abs=1e-7)

    def test_rect_path_matches_polygon_path(self, world):
        rect = (37.0, 410.0, 290.0, 700.0)
        a = rect_features(world, *rect)
        b = view_features(world, ConvexPolygon.rectangle(*rect), SATELLITE)
        np.testing.assert_allclose(a, b, atol=1e-12)
        assert np.linalg.norm(a) == pytest.approx(1.0)

    def test_outside_map(self, world):
        with pytest.raises(DegenerateError):
            view_features(world, ConvexPolygon.rectangle(2000, 2000, 2100, 2100))

    def test_tile_features_float32(self, world):
        pyr = TilePyramid(map_width=1000, map_height=700, max_level=3)
        f = tile_features(world, pyr, [TileId(2, 1, 1), TileId(3, 7, 7)])
        assert f.dtype == np.float32 and f.shape == (2, 12)


class TestQueries:
    def test_prefix_stable(self, world):
        a = generate_queries(world, 5, seed=9)
        b = generate_queries(world, 12, seed=9)
        assert a == b[:5]

    def test_poses_within_ranges(self, world):
        for q in generate_queries(world, 200, seed=2):
            p = q.pose
            assert 0 <= p.ground_point.x_east <= 1000 and 0 <= p.ground_point.y_north <= 700
            assert world.altitude_range[0] <= p.altitude <= world.altitude_range[1]
            assert world.pitch_range[0] <= p.pitch <= world.pitch_range[1]
            project_footprint(p, q.intr)

    def test_features_are_drone_view(self, world):
        qs = generate_queries(world, 3, seed=1)
        f = query_features(world, qs)
        expected = view_features(world, project_footprint(qs[0].pose, qs[0].intr), DRONE)
        np.testing.assert_allclose(f[0], expected.astype(np.float32))
