"""Domains, discretization, separation, and ellipsoid normalization."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otlab.errors import DegenerateGeometryError, EmptyDiscretizationError
from otlab.geometry import (
    Ball,
    Ellipsoid,
    Polytope,
    box,
    clip_halfspace,
    discretize,
    interval,
    john_normalize,
    separation_distance,
    unit_directions,
)


def uniform(points):
    return np.ones(len(points))


def shoelace(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


class TestDiscretize:
    def test_unit_square_resolution_ten(self):
        cloud = discretize(box([0.5, 0.5], [1.0, 1.0]), uniform, 10)
        assert cloud.size == 100
        assert np.allclose(cloud.weights, 0.01)
        assert cloud.spacing == pytest.approx(0.1)
        assert cloud.total_mass == pytest.approx(1.0)

    def test_interval_with_flat_density(self):
        cloud = discretize(interval(-1.0, 0.0), lambda p: 2.0 * np.ones(len(p)), 8)
        assert cloud.size == 8
        assert np.allclose(cloud.weights, 0.25)
        assert cloud.total_mass == pytest.approx(2.0)
        assert cloud.points[:, 0].min() == pytest.approx(-1.0 + 1 / 16)

    def test_anisotropic_box_uses_longest_extent(self):
        cloud = discretize(box([0.0, 0.0], [2.0, 1.0]), uniform, 10)
        assert cloud.spacing == pytest.approx(0.2)
        assert cloud.size == 50

    def test_ball_keeps_inside_centres_only(self):
        domain = Ball(np.zeros(2), 1.0)
        cloud = discretize(domain, uniform, 16)
        assert np.all(domain.contains(cloud.points))
        # mass approaches pi for the unit disc
        assert cloud.total_mass == pytest.approx(np.pi, rel=0.05)

    def test_lattice_index_roundtrip(self):
        cloud = discretize(box([0.5, 0.5], [1.0, 1.0]), uniform, 7)
        rebuilt = cloud.origin + (cloud.index + 0.5) * cloud.spacing
        assert np.abs(rebuilt - cloud.points).max() < 1e-12

    def test_empty_sliver_raises(self):
        sliver = Polytope(
            np.array([[0.0, -1.0], [-1.0, 0.0], [1.0, 1e6]]),
            np.array([0.0, 0.0, 1.0]),
        )
        with pytest.raises(EmptyDiscretizationError):
            discretize(sliver, uniform, 4)

    def test_nonpositive_density_rejected(self):
        with pytest.raises(EmptyDiscretizationError):
            discretize(interval(0.0, 1.0), lambda p: np.zeros(len(p)), 4)


class TestDomains:
    def test_box_contains_and_normals(self):
        b = box([0.5, 0.5], [1.0, 1.0])
        assert b.contains(np.array([0.5, 0.5]))
        assert not b.contains(np.array([1.2, 0.5]))
        assert np.allclose(b.inner_normal(np.array([0.5, 0.95])), [0.0, -1.0])
        assert b.boundary_distance(np.array([0.5, 0.5])) == pytest.approx(0.5)

    def test_ball_support(self):
        d = Ball(np.array([1.0, 2.0]), 0.5)
        assert d.support(np.array([0.0, 1.0])) == pytest.approx(2.5)
        assert np.allclose(d.support_point(np.array([1.0, 0.0])), [1.5, 2.0])

    def test_ellipsoid_geometry(self):
        e = Ellipsoid.from_semiaxes(np.zeros(2), [2.0, 1.0])
        assert e.contains(np.array([1.9, 0.0]))
        assert not e.contains(np.array([0.0, 1.1]))
        assert e.support(np.array([1.0, 0.0])) == pytest.approx(2.0)
        lo, hi = e.bounding_box()
        assert np.allclose(lo, [-2.0, -1.0]) and np.allclose(hi, [2.0, 1.0])
        area = shoelace(e.outline(2048))
        assert area == pytest.approx(2.0 * np.pi, rel=1e-3)

    def test_clip_halfspace_polytope_stays_polytope(self):
        b = box([0.0, 0.0], [2.0, 2.0])
        c = clip_halfspace(b, np.array([-1.0, 0.0]), 0.0)  # keep x >= 0
        assert isinstance(c, Polytope)
        assert not c.contains(np.array([-0.5, 0.0]))
        lo, hi = c.bounding_box()
        assert lo[0] == pytest.approx(0.0)

    def test_clip_halfspace_ball(self):
        c = clip_halfspace(Ball(np.zeros(2), 1.0), np.array([0.0, 1.0]), 0.0)
        assert c.contains(np.array([0.0, -0.5]))
        assert not c.contains(np.array([0.0, 0.5]))
        assert shoelace(c.outline(4096)) == pytest.approx(np.pi / 2, rel=1e-3)
        lo, hi = c.bounding_box()
        assert hi[1] == pytest.approx(0.0)
        # inward normal at the cut points back into the half disc
        assert np.allclose(c.inner_normal(np.array([0.3, -0.01])), [0.0, -1.0])

    def test_translate(self):
        b = box([0.0, 0.0], [1.0, 1.0]).translate(np.array([3.0, 0.0]))
        assert b.contains(np.array([3.0, 0.0]))
        assert not b.contains(np.array([0.0, 0.0]))


class TestSeparation:
    def test_balls_two_apart(self):
        a = Ball(np.zeros(2), 1.0)
        b = Ball(np.array([4.0, 0.0]), 1.0)
        assert separation_distance(a, b) == pytest.approx(2.0, abs=1e-6)

    def test_squares_two_apart(self):
        a = box([0.0, 0.0], [1.0, 1.0])
        b = box([3.0, 0.0], [1.0, 1.0])
        assert separation_distance(a, b) == pytest.approx(2.0, abs=1e-6)

    def test_diagonal_squares(self):
        a = box([0.0, 0.0], [1.0, 1.0])
        b = box([2.0, 2.0], [1.0, 1.0])
        assert separation_distance(a, b) == pytest.approx(np.sqrt(2), abs=1e-6)

    def test_overlap_gives_zero(self):
        a = box([0.0, 0.0], [2.0, 2.0])
        b = box([1.0, 0.0], [2.0, 2.0])
        assert separation_distance(a, b) == 0.0

    def test_intervals(self):
        assert separation_distance(interval(-1.0, 0.0), interval(2.0, 3.0)) == pytest.approx(2.0)

    def test_ball_in_three_dimensions(self):
        a = Ball(np.zeros(3), 1.0)
        b = Ball(np.array([0.0, 0.0, 5.0]), 1.5)
        assert separation_distance(a, b) == pytest.approx(2.5, abs=1e-5)

    @settings(max_examples=25, deadline=None)
    @given(
        dx=st.floats(2.1, 9.0),
        dy=st.floats(-3.0, 3.0),
        shift=st.floats(-5.0, 5.0),
    )
    def test_symmetry_and_translation_invariance(self, dx, dy, shift):
        a = box([0.0, 0.0], [1.0, 1.0])
        b = Ball(np.array([dx, dy]), 0.5)
        d_ab = separation_distance(a, b)
        d_ba = separation_distance(b, a)
        assert d_ab == pytest.approx(d_ba, abs=1e-9)
        t = np.array([shift, -shift])
        d_shifted = separation_distance(a.translate(t), b.translate(t))
        assert d_shifted == pytest.approx(d_ab, abs=1e-7)


class TestJohnNormalize:
    def test_unit_ball_samples_give_identity(self):
        dirs = unit_directions(2, 256)
        cloud = discretize(Ball(np.zeros(2), 1.0), uniform, 20)
        pts = np.vstack([dirs, cloud.points])
        norm = john_normalize(pts)
        assert np.abs(norm.matrix - np.eye(2)).max() < 1e-3
        assert np.linalg.det(norm.matrix) == pytest.approx(1.0, abs=1e-9)
        assert norm.condition == pytest.approx(1.0, abs=1e-3)

    def test_ellipse_samples_are_rounded(self):
        e = Ellipsoid.from_semiaxes(np.array([1.0, -2.0]), [2.0, 0.5])
        pts = e.outline(512)
        norm = john_normalize(pts)
        assert norm.condition == pytest.approx(4.0, rel=1e-3)
        z = norm.apply(pts)
        radii = np.linalg.norm(z, axis=1)
        assert radii.max() / radii.min() == pytest.approx(1.0, abs=1e-3)
        assert np.linalg.det(norm.matrix) == pytest.approx(1.0, abs=1e-9)
        back = norm.invert(z)
        assert np.abs(back - pts).max() < 1e-9

    def test_rotated_ellipse(self):
        theta = 0.7
        rot = np.array(
            [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
        )
        base = Ellipsoid.from_semiaxes(np.zeros(2), [3.0, 1.0]).outline(512)
        pts = base @ rot.T
        norm = john_normalize(pts)
        z = norm.apply(pts)
        radii = np.linalg.norm(z, axis=1)
        assert radii.std() / radii.mean() < 1e-3

    def test_degenerate_rank_rejected(self):
        line = np.column_stack([np.linspace(0, 1, 30), np.linspace(0, 2, 30)])
        with pytest.raises(DegenerateGeometryError):
            john_normalize(line)
