import math

import numpy as np
import pytest

from crossplan.collision import find_collisions, rect_corners, rects_overlap
from oracles import rects_overlap_reference

L, W = 5.0, 2.0


def test_rect_corners_axis_aligned():
    c = rect_corners(10.0, -3.0, 0.0, L, W)
    assert c.shape == (4, 2)
    assert c[:, 0].min() == pytest.approx(7.5)
    assert c[:, 0].max() == pytest.approx(12.5)
    assert c[:, 1].min() == pytest.approx(-4.0)
    assert c[:, 1].max() == pytest.approx(-2.0)
    # ccw winding: shoelace area positive
    x, y = c[:, 0], c[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert area == pytest.approx(L * W)


def test_rect_corners_rotation():
    c = rect_corners(0.0, 0.0, math.pi / 2, L, W)
    assert c[:, 1].max() == pytest.approx(2.5)
    assert c[:, 0].max() == pytest.approx(1.0)


def test_overlap_obvious_cases():
    a = rect_corners(0, 0, 0, L, W)
    assert rects_overlap(a, rect_corners(1.0, 0.5, 0.3, L, W))
    assert not rects_overlap(a, rect_corners(20.0, 0.0, 0.0, L, W))
    # clear gap ahead along the same lane
    assert not rects_overlap(a, rect_corners(5.6, 0.0, 0.0, L, W))


def test_touching_counts_as_overlap():
    a = rect_corners(0, 0, 0, L, W)
    assert rects_overlap(a, rect_corners(5.0, 0.0, 0.0, L, W))
    assert rects_overlap(a, rect_corners(0.0, 2.0, 0.0, L, W))


def test_cross_configuration_no_corner_inside():
    # thin cross: overlapping interiors although neither holds a corner
    a = rect_corners(0, 0, 0, 6.0, 1.0)
    b = rect_corners(0, 0, math.pi / 2, 6.0, 1.0)
    assert rects_overlap(a, b)


def test_contained_rectangle():
    a = rect_corners(0, 0, 0.2, 8.0, 6.0)
    b = rect_corners(0.3, -0.2, 1.0, 1.5, 0.8)
    assert rects_overlap(a, b)
    assert rects_overlap(b, a)


def test_overlap_matches_reference_battery():
    rng = np.random.default_rng(42)
    n_hit = 0
    for _ in range(400):
        p1 = rng.uniform(-4, 4, 2)
        p2 = rng.uniform(-4, 4, 2)
        a1, a2 = rng.uniform(-math.pi, math.pi, 2)
        got = rects_overlap(rect_corners(*p1, a1, L, W),
                            rect_corners(*p2, a2, L, W))
        want = rects_overlap_reference(p1, a1, p2, a2, L, W)
        assert got == want
        n_hit += got
    assert 0 < n_hit < 400


def test_find_collisions_pairs_sorted_unique():
    poses = [
        (3, 0.0, 0.0, 0.0),
        (1, 2.0, 0.5, 0.1),
        (7, 100.0, 0.0, 0.0),
        (5, 101.0, 1.0, 0.0),
    ]
    hits = find_collisions(poses, L, W)
    assert hits == [(1, 3), (5, 7)]


def test_find_collisions_prefilter_skips_distant_pairs():
    poses = [(0, 0.0, 0.0, 0.0), (1, 500.0, 0.0, 0.0)]
    assert find_collisions(poses, L, W) == []


def test_find_collisions_empty_and_single():
    assert find_collisions([], L, W) == []
    assert find_collisions([(4, 1.0, 1.0, 0.5)], L, W) == []
