import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from birkhoff_lab.errors import ConfigError, ConvergenceError, MonotonicityError
from birkhoff_lab.models import appendix_pendulum, constant_potential, pendulum
from birkhoff_lab.weakkam import (FDScheme, GridFunction, LaxOleinikOperator, affine_sequence_errors,
                                  check_viscosity, detect_kinks, hj_operator, hj_residual,
                                  iterate_varying_contractions, lo_contraction_violations,
                                  one_sided_derivatives, solve_discounted_fd, solve_discounted_lo,
                                  vanishing_discount_driver)


def test_gridfunction_validation_and_nodes():
    u = GridFunction.sample(np.sin, 64, 2 * math.pi)
    assert u.h == pytest.approx(2 * math.pi / 64)
    assert u.index_of(math.pi) == 32
    with pytest.raises(ConfigError):
        u.index_of(0.01)
    with pytest.raises(ConfigError):
        GridFunction(np.zeros(8))
    with pytest.raises(ConfigError):
        GridFunction(np.r_[np.zeros(20), np.nan])


def test_one_sided_derivatives_of_a_corner():
    u = GridFunction.sample(lambda x: -np.abs(x - 0.5) * 2.0 + np.sin(2 * np.pi * x) * 0.1, 256)
    dm, dp = one_sided_derivatives(u, 0.5)
    slope = 0.2 * np.pi * math.cos(np.pi)
    assert dm == pytest.approx(2.0 + slope, abs=1e-3)
    assert dp == pytest.approx(-2.0 + slope, abs=1e-3)
    assert detect_kinks(u) == pytest.approx([0.0, 0.5])


def test_smooth_function_has_no_kinks():
    assert detect_kinks(GridFunction.sample(lambda x: np.sin(2 * np.pi * x), 512)) == []


@pytest.mark.parametrize("solver", ["lo", "fd"])
def test_constant_potential_solution_is_constant(solver):
    m = constant_potential(0.7)
    f = solve_discounted_lo if solver == "lo" else solve_discounted_fd
    u, rep = f(m, 0.5, 128)
    exact = 0.7 / 0.5
    if solver == "lo":
        # fixed point of u = e^{-a tau} u + tau e^{-a tau / 2} c (midpoint discount)
        x = 0.5 * 0.05
        exact *= (x / 2) / math.sinh(x / 2)
        assert abs(exact - 0.7 / 0.5) < 1e-4
    assert np.allclose(u.values, exact, atol=1e-6)
    assert rep.residual <= 1e-4


@given(st.sampled_from([0.1, 0.5, 1.0]), st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_lax_oleinik_contraction_and_monotone(alpha, seed):
    r = np.random.default_rng(seed)
    T = LaxOleinikOperator(appendix_pendulum(), alpha, 128)
    u1 = r.normal(size=128)
    u2 = u1 + np.abs(r.normal(size=128))
    a, b = T(u1), T(u2)
    assert np.max(np.abs(a - b)) <= math.exp(-alpha * 0.05) * np.max(np.abs(u1 - u2)) + 1e-12
    assert np.all(b >= a - 1e-12)


def test_lo_config_errors():
    with pytest.raises(ConfigError):
        LaxOleinikOperator(appendix_pendulum(), 0.5, 128, tau=0.5)


def test_fd_monotonicity_guard():
    with pytest.raises(MonotonicityError):
        FDScheme(appendix_pendulum(), 0.5, 128, sigma=0.1)


def test_lo_and_fd_agree_on_pendulum():
    m = appendix_pendulum()
    ul, rl = solve_discounted_lo(m, 0.5, 512)
    uf, rf = solve_discounted_fd(m, 0.5, 512, tol=1e-7)
    assert ul.sup_distance(uf) <= 10 / math.sqrt(512)
    assert rl.residual <= 5 / math.sqrt(512) and rf.residual <= 5 / math.sqrt(512)
    assert hj_residual(m, 0.5, ul) == pytest.approx(rl.residual)


def test_viscosity_check_flags_convex_corner_only():
    # |u'| = 1 on the circle: the concave corner of -dist(x, 0) is admissible, the convex one is not
    u = GridFunction.sample(lambda x: -np.minimum(x, 1 - x), 256)
    rep = check_viscosity(u, lambda x, p, v: 0.5 * p**2 - 0.5, tol=1e-3)
    assert not rep.passed
    assert rep.worst_super <= 1e-3
    assert rep.witnesses[0][0] == pytest.approx(0.5)
    assert rep.worst_sub == pytest.approx(0.5, abs=1e-3)


def test_lo_solution_is_viscosity_solution():
    m = appendix_pendulum(0.5, 0.5)
    u, _ = solve_discounted_lo(m, 0.5, 1024, tau=0.01)
    rep = check_viscosity(u, hj_operator(m, 0.5), tol=5 / math.sqrt(1024))
    assert rep.passed, rep.as_dict()
    assert rep.kinks == pytest.approx([0.5])


def test_vanishing_discount_guards():
    with pytest.raises(ConfigError):
        vanishing_discount_driver(appendix_pendulum(), [0.1, 0.2, 0.4], 64)
    with pytest.raises(ConfigError):
        vanishing_discount_driver(appendix_pendulum(), [0.4, 0.2], 64)
    with pytest.raises(ConfigError):
        vanishing_discount_driver(pendulum(), [0.4, 0.2, 0.1], 64)


def test_varying_contractions_converge():
    T = lambda k: (lambda x: 0.5 * x + np.array([1.0, -1.0]) * (1 + 1.0 / k**2))
    res = iterate_varying_contractions(T, np.zeros(2))
    assert np.allclose(res.limit, [2.0, -2.0], atol=1e-9)
    with pytest.raises(ConvergenceError):
        iterate_varying_contractions([lambda x: x + 1.0], 0.0, cap=50)
    with pytest.raises(ConfigError):
        iterate_varying_contractions([], 0.0)


def test_property_helpers(rng):
    bad, worst = lo_contraction_violations(appendix_pendulum(), [0.5], 10, 64, rng)
    assert bad == 0 and worst < 1
    assert affine_sequence_errors(rng, 20).max() <= 1e-9
