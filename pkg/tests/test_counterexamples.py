import math

import numpy as np
import pytest

from birkhoff_lab import attractor as at
from birkhoff_lab import counterexamples as cx
from birkhoff_lab.errors import ConfigError, ConstructionError
from birkhoff_lab.flow import time_map
from birkhoff_lab.models import appendix_pendulum, build_perturbed
from birkhoff_lab.weakkam import GridFunction, solve_discounted_lo


def test_smoothstep_is_flat_step():
    t = np.linspace(-0.5, 1.5, 201)
    s = cx.smoothstep(t)
    assert s.min() == 0.0 and s.max() == 1.0
    assert np.all(np.diff(s) >= 0)
    assert cx.smoothstep(0.5) == pytest.approx(0.5)
    assert cx.smoothstep(1e-3) < 1e-300


def test_q3_spec_validation():
    with pytest.raises(ConfigError):
        cx.Q3Spec(eps1=0.7, eps2=0.6)
    with pytest.raises(ConfigError):
        cx.Q3Spec(eps2p=0.8)


@pytest.fixture(scope="module")
def q3():
    return cx.Q3Hamiltonian(cx.Q3Spec())


def test_q3_branch_identities_exact(q3):
    s = q3.s
    x = np.linspace(0, s.eps2, 1001)
    assert np.max(np.abs(q3.H(x, s.f_plus(x)) - s.E_plus(x))) <= 1e-12
    assert np.max(np.abs(q3.H_p(x, s.f_plus(x)) - s.v_plus(x))) <= 1e-12
    xm = 1 - x
    assert np.max(np.abs(q3.H(xm, s.f_minus(xm)) - s.E_minus(xm))) <= 1e-12
    # the energy along the upper branch drops by alpha times the area under it
    assert s.E_plus(0.5) == pytest.approx(-s.alpha / math.pi)


def test_q3_fibres_are_convex_and_symmetric(q3):
    X, P = np.meshgrid(np.linspace(0, 1, 257), np.linspace(-5.9, 5.9, 1181), indexing="ij")
    V = q3.H(X, P)
    assert (V[:, 2:] - 2 * V[:, 1:-1] + V[:, :-2]).min() > 0
    assert np.allclose(q3.H(1 - X, -P), V, atol=1e-9)
    # superlinear growth
    assert np.all(q3.H(X[:, 0], 5.9) > 0.4 * 5.9**2 - 3)


def test_q3_margins_and_eps_search():
    x, m1, m2 = cx.q3_margins(cx.Q3Spec())
    assert m1.min() > 0 and m2.min() > 0
    assert cx.q3_search_eps(cx.Q3Spec()) == cx.Q3Spec()
    with pytest.raises(ConstructionError):
        cx.q3_build(cx.Q3Spec(alpha=10.0))
    s = cx.q3_search_eps(cx.Q3Spec(alpha=10.0))
    assert s.eps2 < 0.7 and cx.q3_margins(s)[1].min() > 0


@pytest.fixture(scope="module")
def shifted():
    m = appendix_pendulum(0.5, 0.5)
    u, _ = solve_discounted_lo(m, 0.5, 1024, tau=0.01)
    return m, u


def test_q1_bump_sits_between_branch_arms(shifted):
    m, _ = shifted
    cr = cx.branch_crossings(m)
    assert cr[0] == pytest.approx(1.8433, abs=1e-3)
    spec = cx.q1_bump_spec(m)
    cy, ry = spec["center"][1], spec["radii"][1]
    assert cr[1] < cy - ry and cy + ry < cr[0]


def test_q1_witness_and_control(shifted):
    m, u = shifted
    spec = cx.q1_bump_spec(m)
    w = cx.q1_violation_witness(u, build_perturbed(m, spec), 0.5)
    assert w.violated and w.value >= 4.0
    assert abs(w.y - spec["center"][1]) < 0.01
    ctrl = cx.q1_violation_witness(u, build_perturbed(m, {**spec, "height": 0.0}), 0.5)
    assert not ctrl.violated


def test_q1_preconditions(shifted):
    m, u = shifted
    far = build_perturbed(m, {"center": (0.5, 2.5), "radii": (0.05, 0.1), "height": 5.0})
    with pytest.raises(ConstructionError):
        cx.q1_violation_witness(u, far, 0.5)
    on_branch = build_perturbed(m, {"center": (0.5, 1.84), "radii": (0.05, 0.1), "height": 5.0})
    d = at.Domain(128, 128, -3, 3, 1.0)
    C1 = at.compute_C1(at.compute_C0(time_map(m, 1.0, 0.02), d, 40))
    with pytest.raises(ConstructionError):
        cx.q1_violation_witness(u, on_branch, 0.5, C1)
