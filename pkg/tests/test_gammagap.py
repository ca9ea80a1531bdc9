import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birkhoff_lab import gammagap as gg
from birkhoff_lab.errors import ConfigError, NotFoundError, SelfIntersectionError


def _exact_orient(a, b, c):
    a, b, c = [tuple(map(Fraction, v)) for v in (a, b, c)]
    d = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return (d > 0) - (d < 0)


def test_orient2d_near_degenerate_grid():
    # classic failure case for naive floating point
    a, b = (12.0, 12.0), (24.0, 24.0)
    eps = 2.0 ** -53
    for i in range(32):
        for j in range(32):
            c = (0.5 + i * eps, 0.5 + j * eps)
            assert gg.orient2d(a, b, c) == _exact_orient(a, b, c)


coord = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@given(st.tuples(coord, coord), st.tuples(coord, coord), st.floats(-2, 3), st.floats(-1e-12, 1e-12))
@settings(max_examples=200, deadline=None)
def test_orient2d_matches_rational_arithmetic(a, b, t, wiggle):
    c = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]) + wiggle)
    assert gg.orient2d(a, b, c) == _exact_orient(a, b, c)


def test_crossings_of_square_and_diagonal():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], float)
    line = np.array([[-1, 0.5], [2, 0.5]])
    cs = gg.all_crossings(line, sq)
    assert sorted(c.point[0] for c in cs) == pytest.approx([0.0, 1.0])
    X = gg.first_intersection(line, sq)
    assert X.point == pytest.approx((0.0, 0.5))
    assert X.s_a == pytest.approx(1 / 3)
    with pytest.raises(NotFoundError):
        gg.first_intersection(np.array([[5.0, 5.0], [6.0, 6.0]]), sq)


def test_areas():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    assert gg.signed_area(sq) == pytest.approx(1.0)
    assert gg.signed_area(sq[::-1]) == pytest.approx(-1.0)
    assert gg.shoelace_area(sq[::-1]) == pytest.approx(1.0)
    bow = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], float)
    assert not gg.is_simple(bow)
    with pytest.raises(SelfIntersectionError):
        gg.shoelace_area(bow)
    assert gg.signed_area(bow) == pytest.approx(0.0)


def test_line_integral_and_truncate():
    P = np.column_stack([np.linspace(0, 2, 21), np.linspace(0, 2, 21) ** 2])
    # trapezoid on a parabola sampled at h = 0.1 overestimates by h^2 (b - a) / 6
    assert gg.line_integral(P, 0, 20) == pytest.approx(8 / 3 + 0.01 * 2 / 6)
    assert gg.line_integral(P, 0, 10.5) == pytest.approx(gg.line_integral(gg.truncate(P, 10.5), 0, 11))


def test_energy_area_formula():
    assert gg.enclosed_area_energy(0.1, 0.1, (0.0, 0.0)) == 0.0
    assert gg.enclosed_area_energy(0.1, 0.05, (0.0, 0.0)) == pytest.approx(2.0 * 10)
    with pytest.raises(ConfigError):
        gg.enclosed_area_energy(0.1, 0.05, (math.pi, 0.5))


def test_min_area_bound_symmetric_wave():
    eps = 0.3
    th = np.linspace(0, 2 * math.pi, 20001)
    L1 = np.column_stack([th, np.zeros_like(th)])
    L2 = np.column_stack([th, eps * np.sin(3 * th)])
    res = gg.min_area_bound(L1, L2)
    assert res.min == pytest.approx(2 * eps / 3, abs=1e-6)
    assert len(res.crossings) >= 3
    with pytest.raises(ConfigError):
        gg.min_area_bound(L1[:-5], L2)


def test_spiral_gap_reference_row():
    r = gg.spiral_gap(0.1, 0.01)
    # first crossing where sin(theta / 2) = 2 beta / alpha - 1, refined by shooting
    assert r.point[0] == pytest.approx(-1.783, abs=2e-3)
    assert r.area_shoelace == pytest.approx(7.5765, abs=1e-3)
    assert abs(r.area_energy - r.area_shoelace) <= 0.02 * r.area_shoelace
    assert r.area_shoelace >= r.bound_4
