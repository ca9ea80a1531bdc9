"""Acceptance criteria 1-14 at their stated tolerances.

Each test records a one-line verdict (see ``conftest.record``); the lines are
printed in the pytest terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from birkhoff_lab import attractor as at
from birkhoff_lab import counterexamples as cx
from birkhoff_lab import gammagap as gg
from birkhoff_lab import weakkam as wk
from birkhoff_lab.flow import FlowConfig, FunctionMap, energy_dissipation_audit, integrate, shoot_heteroclinic, time_map
from birkhoff_lab.models import appendix_pendulum, build_perturbed, pendulum

from conftest import record


def test_01_separatrix_area():
    t0 = time.perf_counter()
    val, _ = quad(lambda t: math.sqrt(2 * (1 + math.cos(t))), -math.pi, math.pi, epsabs=1e-12)
    c = shoot_heteroclinic(pendulum(0.0), "right", t_max=200,
                           stop=lambda t, q, p: q >= 3 * math.pi - 1e-3)
    q = np.r_[c.q - 2 * math.pi, -math.pi]
    p = np.r_[c.p, 0.0]
    area = -gg.signed_area(np.column_stack([q, p]))
    dt = time.perf_counter() - t0
    ok = abs(val - 8) <= 1e-6 and abs(area - 8) <= 1e-2 and dt < 5
    record(1, ok, f"quad={val:.10f} shoelace={area:.5f} ({dt:.1f}s)")
    assert ok


def test_02_energy_dissipation():
    t0 = time.perf_counter()
    tr = integrate(pendulum(0.5), (2.0, 0.0), FlowConfig(dt=1e-3, t_max=20.0))
    res = energy_dissipation_audit(tr)
    dt = time.perf_counter() - t0
    ok = res <= 1e-6 and dt < 2
    record(2, ok, f"residual={res:.2e} ({dt:.2f}s)")
    assert ok


def test_03_lax_oleinik_contraction():
    t0 = time.perf_counter()
    bad, worst = wk.lo_contraction_violations(appendix_pendulum(), [0.1, 0.5, 1.0], 100, 256,
                                              np.random.default_rng(2024), tau=0.05)
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 30
    record(3, ok, f"violations={bad} worst ratio={worst:.4f} ({dt:.1f}s)")
    assert ok


def test_04_solver_cross_validation():
    t0 = time.perf_counter()
    m, n = appendix_pendulum(), 2048
    ul, rl = wk.solve_discounted_lo(m, 0.5, n, v_max=3.0)
    uf, rf = wk.solve_discounted_fd(m, 0.5, n)
    dt = time.perf_counter() - t0
    d = ul.sup_distance(uf)
    ok = d <= 10 / math.sqrt(n) and max(rl.residual, rf.residual) <= 5 / math.sqrt(n) and dt < 120
    record(4, ok, f"|u_lo-u_fd|={d:.4f} (<= {10 / math.sqrt(n):.4f}) residuals lo={rl.residual:.4f} "
                  f"fd={rf.residual:.4f} (<= {5 / math.sqrt(n):.4f}) ({dt:.0f}s)")
    assert ok


@pytest.fixture(scope="module")
def shifted_solution():
    m = appendix_pendulum(0.5, shift=0.5)
    u, _ = wk.solve_discounted_lo(m, 0.5, 2048, tau=0.01)
    return m, u


def test_05_kink_structure(shifted_solution):
    m, u = shifted_solution
    kinks = wk.detect_kinks(u)
    dm, dp = wk.one_sided_derivatives(u, 0.5)
    fp, fm = cx.branch_crossings(m)[0], -cx.branch_crossings(m)[0]
    tol = 5 * u.h
    ok = (len(kinks) == 1 and abs(kinks[0] - 0.5) <= 2 * u.h and dm > dp
          and abs(dm - fp) <= tol and abs(dp - fm) <= tol)
    record(5, ok, f"kinks={kinks} u'-={dm:.5f} u'+={dp:.5f} f+={fp:.5f} tol={tol:.4f}")
    assert ok


def test_06_inclusion_check(shifted_solution):
    t0 = time.perf_counter()
    m, u = shifted_solution
    dom = at.Domain(2048, 2048, -3.0, 3.0, 1.0)
    C1 = at.compute_C1(at.compute_C0(time_map(m, 1.0, 0.02), dom, 60))
    chk = at.check_graph_in_attractor(u, C1, 3.0)
    dt = time.perf_counter() - t0
    ok = chk.verdict and chk.max_offset <= 3.0 and dt < 600
    record(6, ok, f"verdict={chk.verdict} max offset={chk.max_offset:.2f} cells ({dt:.0f}s)")
    assert ok


def test_07_attractor_oracles():
    d = at.Domain(65, 65, -1.0, 1.0, 1.0)
    f = FunctionMap(lambda q, p: (q + 0.3, 0.5 * p), lambda q, p: (q - 0.3, 2.0 * p), period=1.0)
    C0 = at.compute_C0(f, d, 40)
    C1 = at.compute_C1(C0)
    row = np.zeros(d.shape, bool)
    row[32] = True
    exact = np.array_equal(C0.bits, row) and np.array_equal(C1.bits, row)
    m = pendulum(0.5)
    dom = at.Domain(512, 512, -3.0, 3.0, m.period)
    P1 = at.compute_C1(at.compute_C0(time_map(m, 1.0, 0.02), dom, 60))
    h = at.hausdorff(P1, at.heteroclinic_reference(m, dom), units="cells")
    ok = exact and h <= 3.0
    record(7, ok, f"contraction row exact={exact}; pendulum Hausdorff={h:.2f} cells")
    assert ok


def test_08_spiral_gap_scaling():
    rows = gg.gap_table([(0.1, 0.01), (0.1, 0.002)])
    ok, parts = True, []
    for r in rows:
        a = r.area_shoelace
        good = (a >= r.bound_4 and abs(a - r.bound_8) <= 0.15 * r.bound_8
                and abs(r.area_energy - a) <= 0.02 * a)
        ok &= good
        parts.append(f"beta={r.beta:g}: area={a:.4f} energy={r.area_energy:.4f} 8(1-b/a)={r.bound_8:.3f}")
    record(8, ok, "; ".join(parts))
    assert ok


def test_09_gap_does_not_decay():
    rows = gg.gap_table([(0.4, 0.04), (0.2, 0.02), (0.1, 0.01)])
    areas = [r.area_shoelace for r in rows]
    ok = min(areas) > 3.6
    record(9, ok, "areas " + ", ".join(f"alpha={r.alpha:g}: {r.area_shoelace:.3f}" for r in rows))
    assert ok


def test_10_vanishing_discount_trend():
    res = wk.vanishing_discount_driver(appendix_pendulum(), [0.8, 0.4, 0.2, 0.1], 512)
    g = res.gaps
    ok = all(b < a for a, b in zip(g, g[1:]))
    record(10, ok, "gaps " + ", ".join(f"{x:.5f}" for x in g))
    assert ok


def test_11_q1_witness(shifted_solution):
    m, u = shifted_solution
    spec = cx.q1_bump_spec(m, 5.0)
    dom = at.Domain(256, 256, -3.0, 3.0, 1.0)
    C1 = at.compute_C1(at.compute_C0(time_map(m, 1.0, 0.02), dom, 60))
    w = cx.q1_violation_witness(u, build_perturbed(m, spec), 0.5, C1)
    ctrl = cx.q1_violation_witness(u, build_perturbed(m, {**spec, "height": 0.0}), 0.5, C1)
    ok = w.value >= 4.0 and not ctrl.violated
    record(11, ok, f"witness value={w.value:.3f} at y={w.y:.4f}; control max={ctrl.value:.2e}")
    assert ok


def test_12_q2_inclusion_breaks():
    m = appendix_pendulum(0.5, shift=0.5)
    H1 = build_perturbed(m, cx.q1_bump_spec(m, 5.0))
    r = cx.q2_inclusion_breaker(H1, 0.5, n=1024, n_theta=1024, n_p=1024)
    ok = (not r.verdict) and r.max_offset > 10 and r.attractor_band_ok
    record(12, ok, f"verdict={r.verdict} max offset={r.max_offset:.1f} cells at x in {r.offending_x}; "
                   f"attractors differ outside 1-cell band: {r.attractor_extra_cells} cells")
    assert ok


def test_13_q3_construction():
    model = cx.q3_build()
    r = cx.q3_verify(model)
    ok = r.passed
    record(13, ok, f"lyap={max(r.lyap, r.lyap_table):.1e} cond1={r.cond1_margin:.3f} cond2={r.cond2_margin:.3f} "
                   f"convex={r.convex} invariance={r.invariance:.1e} closure separates={r.closure_disconnects} "
                   f"C1 separates={r.c1_disconnects}")
    assert ok


def test_14_varying_contractions():
    errs = wk.affine_sequence_errors(np.random.default_rng(14), 1000, dim=4)
    ok = errs.max() <= 1e-6
    record(14, ok, f"1000 sequences, max distance to fixed point={errs.max():.2e}")
    assert ok
