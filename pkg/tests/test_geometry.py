import dataclasses

import numpy as np
import pytest

from patk import (ConfigError, DetectorRing, Grid, TimeAxis,
                  detector_positions, make_ring, subsample_arc)


class TestGrid:
    def test_shape_extent_coords(self):
        g = Grid(16, 12, 0.5, 1500.0)
        assert g.shape == (16, 12)
        assert g.extent == (8.0, 6.0)
        x, y = g.coords()
        assert x.shape == (16,) and y.shape == (12,)
        # centered: symmetric around the origin, uniform spacing dx
        assert abs(x.sum()) == 0.0
        assert np.all(np.diff(x) == 0.5)
        assert x[0] == -x[-1]

    @pytest.mark.parametrize("kwargs", [
        dict(nx=15, ny=16, dx=1.0, c=1.0),
        dict(nx=16, ny=6, dx=1.0, c=1.0),
        dict(nx=16, ny=16, dx=0.0, c=1.0),
        dict(nx=16, ny=16, dx=1.0, c=-1.0),
        dict(nx=16, ny=16, dx=1.0, c=1.0, pad_factor=5),
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            Grid(**kwargs)


class TestTimeAxis:
    def test_duration_and_times(self):
        ta = TimeAxis(5, 0.25)
        assert ta.duration == 1.0
        assert np.array_equal(ta.times(), [0.0, 0.25, 0.5, 0.75, 1.0])

    @pytest.mark.parametrize("n_t,dt", [(1, 0.1), (4, 0.0), (4, -1.0)])
    def test_validation(self, n_t, dt):
        with pytest.raises(ConfigError):
            TimeAxis(n_t, dt)


class TestMakeRing:
    def test_positions_on_circle(self):
        ring = make_ring(0.04, 32, 270.0)
        pos = ring.positions()
        assert pos.shape == (32, 2)
        np.testing.assert_allclose(np.hypot(pos[:, 0], pos[:, 1]), 0.04, rtol=1e-14)

    def test_pitch_and_centering(self):
        ring = make_ring(1.0, 16, 270.0, arc_center_deg=90.0)
        ang = ring.element_angles
        np.testing.assert_allclose(np.diff(ang), np.deg2rad(270.0) / 16, rtol=1e-13)
        np.testing.assert_allclose(ang.mean(), np.deg2rad(90.0), rtol=1e-13)
        assert ring.pitch_deg == 270.0 / 16

    def test_default_center_points_down(self):
        # the device is centered at 270 degrees, leaving the gap at the top
        ring = make_ring(1.0, 8, 180.0)
        np.testing.assert_allclose(ring.element_angles.mean(), np.deg2rad(270.0))
        assert np.all(np.sin(ring.element_angles) < 0)

    def test_all_active_and_full_coverage(self):
        ring = make_ring(1.0, 12, 300.0)
        assert ring.n_active == 12
        assert ring.coverage_deg() == 300.0

    def test_full_circle_has_no_duplicate_element(self):
        ring = make_ring(1.0, 8, 360.0)
        pos = ring.positions()
        d = np.hypot(pos[:, None, 0] - pos[None, :, 0], pos[:, None, 1] - pos[None, :, 1])
        assert np.min(d[~np.eye(8, dtype=bool)]) > 1e-6

    @pytest.mark.parametrize("kwargs", [
        dict(radius=0.0, n_total=8, device_arc_deg=270.0),
        dict(radius=1.0, n_total=3, device_arc_deg=270.0),
        dict(radius=1.0, n_total=8, device_arc_deg=0.0),
        dict(radius=1.0, n_total=8, device_arc_deg=361.0),
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            make_ring(**kwargs)

    def test_active_must_be_contiguous(self):
        ring = make_ring(1.0, 8, 270.0)
        mask = np.array([1, 0, 1, 1, 0, 0, 0, 0], dtype=bool)
        with pytest.raises(ConfigError):
            dataclasses.replace(ring, active=mask)

    def test_arrays_are_read_only(self):
        ring = make_ring(1.0, 8, 270.0)
        with pytest.raises(ValueError):
            ring.element_angles[0] = 0.0
        with pytest.raises(ValueError):
            ring.active[0] = False


class TestSubsampleArc:
    def test_published_coverage_values_exact(self):
        # 256-element device spanning 270 degrees: 170 and 112 active
        # elements give the published partial coverages exactly
        ring = make_ring(0.04, 256, 270.0)
        assert subsample_arc(ring, 170).coverage_deg() == 179.296875
        assert subsample_arc(ring, 112).coverage_deg() == 118.125
        assert ring.coverage_deg(170) == 179.296875

    def test_centered_block(self):
        ring = make_ring(1.0, 8, 270.0)
        sub = subsample_arc(ring, 5)
        assert np.array_equal(np.flatnonzero(sub.active), [2, 3, 4, 5, 6])
        assert sub.n_active == 5

    def test_offset_shifts_block(self):
        ring = make_ring(1.0, 8, 270.0)
        sub = subsample_arc(ring, 5, offset=1)
        assert np.array_equal(np.flatnonzero(sub.active), [3, 4, 5, 6, 7])

    def test_idempotent_nesting(self):
        ring = make_ring(1.0, 64, 360.0)
        once = subsample_arc(ring, 20)
        twice = subsample_arc(subsample_arc(ring, 40), 20)
        assert np.array_equal(once.active, twice.active)

    def test_angles_and_radius_unchanged(self):
        ring = make_ring(1.0, 16, 270.0)
        sub = subsample_arc(ring, 7)
        assert np.array_equal(sub.element_angles, ring.element_angles)
        assert sub.radius == ring.radius
        assert sub.n_total == ring.n_total

    def test_bounds(self):
        ring = make_ring(1.0, 8, 270.0)
        with pytest.raises(ConfigError):
            subsample_arc(ring, 0)
        with pytest.raises(ConfigError):
            subsample_arc(ring, 9)
        with pytest.raises(ConfigError):
            subsample_arc(ring, 5, offset=3)


class TestDetectorPositions:
    def test_matches_ring_positions(self):
        grid = Grid(16, 16, 0.00625, 1500.0)
        ring = make_ring(0.04, 8, 270.0)
        np.testing.assert_array_equal(detector_positions(ring, grid), ring.positions())

    def test_strict_interior_required(self):
        grid = Grid(16, 16, 0.00625, 1500.0)  # outermost pixel centers at 0.046875
        with pytest.raises(ConfigError):
            detector_positions(make_ring(0.0485, 32, 270.0), grid)
        # an element exactly on the outermost center line is also rejected
        on_edge = DetectorRing(radius=0.046875, n_total=4,
                               element_angles=np.array([0.0, 0.5, 1.0, 1.5]) * np.pi,
                               active=np.ones(4, dtype=bool),
                               arc_center=0.0, device_arc_deg=360.0)
        with pytest.raises(ConfigError):
            detector_positions(on_edge, grid)
