import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birkhoff_lab import io
from birkhoff_lab.errors import ConfigError, DomainError, UnsupportedOperation
from birkhoff_lab.models import (appendix_pendulum, build_perturbed, constant_potential, from_spec,
                                 pendulum, tabulate)

finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_pendulum_values_and_field():
    m = pendulum(0.5)
    assert m.H(0.0, 0.0) == pytest.approx(-1.0)
    assert m.H(math.pi, 0.0) == pytest.approx(1.0)
    qd, pd = m.field(1.0, 2.0)
    assert qd == pytest.approx(2.0)
    assert pd == pytest.approx(-math.sin(1.0) - 1.0)
    assert m.equilibria() == pytest.approx((0.0, math.pi))


def test_appendix_pendulum_shift_moves_equilibria():
    assert appendix_pendulum(0.5).equilibria() == pytest.approx((0.0, 0.5))
    assert appendix_pendulum(0.5, shift=0.5).equilibria() == pytest.approx((0.5, 0.0))
    m = appendix_pendulum(0.0, shift=0.5)
    assert m.H(0.5, 0.0) == pytest.approx(-2.0)
    assert m.H(0.0, 0.0) == pytest.approx(0.0)


@given(finite, finite)
@settings(max_examples=50, deadline=None)
def test_gradients_match_finite_differences(q, p):
    for m in (pendulum(0.3), appendix_pendulum(0.3, 0.5), constant_potential(0.7)):
        e = 1e-6
        gq = (m.H(q + e, p) - m.H(q - e, p)) / (2 * e)
        gp = (m.H(q, p + e) - m.H(q, p - e)) / (2 * e)
        assert m.dH_dq(q, p) == pytest.approx(gq, abs=1e-6)
        assert m.dH_dp(q, p) == pytest.approx(gp, abs=1e-6)


def test_bump_is_compactly_supported_and_differentiable():
    base = appendix_pendulum(0.5, 0.5)
    H1 = build_perturbed(base, {"center": (0.5, 1.7), "radii": (0.06, 0.07), "height": 5.0})
    assert H1.H(0.5, 1.7) - base.H(0.5, 1.7) == pytest.approx(5.0)
    assert H1.H(0.5, 1.8) == pytest.approx(base.H(0.5, 1.8))
    assert H1.H(0.6, 1.7) == pytest.approx(base.H(0.6, 1.7))
    e = 1e-7
    for x, p in ((0.52, 1.72), (0.47, 1.66)):
        gp = (H1.H(x, p + e) - H1.H(x, p - e)) / (2 * e)
        gq = (H1.H(x + e, p) - H1.H(x - e, p)) / (2 * e)
        assert H1.dH_dp(x, p) == pytest.approx(gp, rel=1e-5)
        assert H1.dH_dq(x, p) == pytest.approx(gq, rel=1e-5)
    with pytest.raises(ConfigError):
        build_perturbed(base, {"center": (0, 0), "radii": (0.0, 1.0), "height": 1.0})


def test_tabulated_quadratic_is_reproduced():
    f = lambda x, p: 0.5 * p**2 + 0.3 * np.cos(2 * np.pi * x)
    m = tabulate(f, 256, 241, (-4, 4), alpha=0.2)
    x = np.array([0.1, 0.37, 0.9])
    p = np.array([-1.1, 0.2, 2.5])
    assert np.allclose(m.H(x, p), f(x, p), atol=1e-7)
    assert np.allclose(m.dH_dp(x, p), p, atol=1e-6)
    assert np.allclose(m.dH_dq(x, p), -0.6 * np.pi * np.sin(2 * np.pi * x), atol=1e-5)
    assert m.convex_flag
    with pytest.raises(DomainError):
        m.H(0.0, 5.0)
    L = m.lagrangian(0.37, 1.3)
    assert L == pytest.approx(0.5 * 1.3**2 - 0.3 * np.cos(2 * np.pi * 0.37), abs=1e-6)


def test_table_csv_round_trip(tmp_path):
    m = tabulate(lambda x, p: p**2 + x, 16, 9, (-1, 1))
    io.write_table_csv(tmp_path / "t.csv", m)
    m2 = from_spec({"kind": "tabulated", "path": str(tmp_path / "t.csv"), "alpha": 0.1})
    assert np.array_equal(m2.table.values, m.table.values)
    assert m2.alpha == 0.1


def test_from_spec_rejects_unknown_keys():
    assert from_spec({"kind": "pendulum", "alpha": 0.5}).alpha == 0.5
    with pytest.raises(ConfigError):
        from_spec({"kind": "pendulum", "colour": 3})
    with pytest.raises(ConfigError):
        from_spec({"kind": "nope"})
    with pytest.raises(ConfigError):
        pendulum(-1.0)


def test_pendulum_helpers_refuse_other_kinds():
    with pytest.raises(UnsupportedOperation):
        tabulate(lambda x, p: p**2, 16, 9, (-1, 1)).equilibria()


def test_io_round_trips(tmp_path):
    io.write_csv(tmp_path / "a.csv", ["x", "y"], [[0.1, 1 / 3], [2.0, -5e-300]])
    h, cols = io.read_csv(tmp_path / "a.csv")
    assert h == ["x", "y"]
    assert np.array_equal(np.asarray(cols)[:, 1], [2.0, -5e-300])
    assert np.asarray(cols)[1, 0] == 1 / 3
    bits = np.random.default_rng(0).random((13, 21)) > 0.5
    io.write_pbm(tmp_path / "b.pbm", bits)
    assert np.array_equal(io.read_pbm(tmp_path / "b.pbm"), bits)
