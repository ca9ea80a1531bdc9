"""Counterexample constructions: bump-perturbed pendulum (Q1, Q2) and a Tonelli
Hamiltonian whose attractor is larger than the forward closure of the pseudograph (Q3)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from . import attractor as at
from .errors import ConfigError, ConstructionError
from .flow import FlowConfig, integrate, shoot_heteroclinic, time_map
from .models import HamiltonianModel, build_perturbed, tabulate
from .weakkam import GridFunction, one_sided_derivatives, solve_discounted_fd


# -- Q1 / Q2 ------------------------------------------------------------------------------

def branch_crossings(model, x0=None, stop_radius=1e-4):
    """Momenta where the two heteroclinic branches cross the vertical {x0}, sorted descending."""
    focus, _ = model.equilibria()
    x0 = focus if x0 is None else x0
    out = []
    for side in ("right", "left"):
        c = shoot_heteroclinic(model, side, resample=None, stop_radius=stop_radius)
        q = np.mod(c.q - x0 + 0.5 * model.period, model.period) - 0.5 * model.period
        k = np.nonzero((np.sign(q[:-1]) != np.sign(q[1:])) & (np.abs(q[1:] - q[:-1]) < 0.25 * model.period))[0]
        for i in k:
            t = q[i] / (q[i] - q[i + 1])
            out.append(float(c.p[i] + t * (c.p[i + 1] - c.p[i])))
    return sorted(out, reverse=True)


def q1_bump_spec(model, height=5.0, rx=0.06, rp_frac=0.29):
    """Bump centred on the focus vertical, midway between the two highest branch crossings."""
    cr = branch_crossings(model)
    if len(cr) < 2:
        raise ConstructionError("need two branch crossings above the focus")
    top, nxt = cr[0], cr[1]
    focus, _ = model.equilibria()
    return {"center": (focus, 0.5 * (top + nxt)), "radii": (rx, rp_frac * (top - nxt)), "height": float(height)}


def bump_support_bitmap(H1, domain):
    b = H1.bump
    th = domain.theta_centers()
    pc = domain.p_centers()
    X, P = np.meshgrid(th, pc)
    return at.AnnulusBitmap(b(X, P) != 0.0, domain)


def _support_mask(H1, domain):
    """Cells whose square meets the closed bump ellipse (conservative)."""
    b = H1.bump
    th = domain.theta_centers()
    pc = domain.p_centers()
    X, P = np.meshgrid(th, pc)
    dx = np.abs(np.mod(X - b.center[0] + 0.5 * b.period, b.period) - 0.5 * b.period)
    dy = np.abs(P - b.center[1])
    dx = np.maximum(dx - 0.5 * domain.dtheta, 0.0)
    dy = np.maximum(dy - 0.5 * domain.dp, 0.0)
    return (dx / b.radii[0]) ** 2 + (dy / b.radii[1]) ** 2 <= 1.0


@dataclass
class Q1Witness:
    y: float
    value: float
    x0: float
    interval: tuple
    violated: bool

    def as_dict(self):
        return asdict(self)


def q1_violation_witness(u: GridFunction, H1: HamiltonianModel, alpha, C1=None, n_y=4001, tol=None):
    """max over the super-differential segment at the bump abscissa of alpha u + H1."""
    if H1.bump is None:
        raise ConfigError("H1 must be a bump-perturbed model")
    x0 = H1.bump.center[0]
    dm, dp = one_sided_derivatives(u, x0)
    lo, hi = min(dm, dp), max(dm, dp)
    cy, ry = H1.bump.center[1], H1.bump.radii[1]
    if not (lo < cy + ry and cy - ry < hi):
        raise ConstructionError(f"bump support misses the segment {{{x0}}} x [{lo:.4g}, {hi:.4g}]")
    if C1 is not None and np.any(_support_mask(H1, C1.domain) & C1.bits):
        raise ConstructionError("bump support meets the Birkhoff attractor of the base model")
    i = u.index_of(x0)
    ys = np.linspace(lo, hi, n_y)
    g = alpha * u.values[i] + H1.H(np.full_like(ys, x0), ys)
    j = int(np.argmax(g))
    tol = 10 * math.sqrt(u.h) if tol is None else tol
    return Q1Witness(float(ys[j]), float(g[j]), float(x0), (float(lo), float(hi)), bool(g[j] > tol))


@dataclass
class Q2Report:
    verdict: bool
    max_offset: float
    offending_x: tuple
    attractor_band_ok: bool
    attractor_extra_cells: int
    sup_change: float
    details: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def q2_inclusion_breaker(H1, alpha, n=1024, n_theta=None, n_p=None, p_range=(-3.0, 3.0),
                         n_max=60, tol_cells=3.0, fd_tol=1e-6, base_u=None):
    """Solve the perturbed equation by finite differences and test graph(u') against C1(H1)."""
    base = H1.base
    n_theta = n_theta or n
    n_p = n_p or n
    dom = at.Domain(n_theta, n_p, p_range[0], p_range[1], H1.period)
    u1, rep = solve_discounted_fd(H1, alpha, n, tol=fd_tol)
    c1_h1 = at.compute_C1(at.compute_C0(time_map(H1.with_alpha(alpha), 1.0, 0.02), dom, n_max))
    c1_h = at.compute_C1(at.compute_C0(time_map(base.with_alpha(alpha), 1.0, 0.02), dom, n_max))
    extra = (c1_h1 - c1_h.dilate(1)) | (c1_h - c1_h1.dilate(1))
    chk = at.check_graph_in_attractor(u1, c1_h1, tol_cells)
    # offending abscissae
    x, p = at.graph_points(u1)
    cx = np.mod(x, dom.period) / dom.dtheta - 0.5
    cy = (p - dom.p_min) / dom.dp - 0.5
    from scipy.spatial import cKDTree
    rows, cols = np.nonzero(c1_h1.bits)
    off = 1e6
    d, _ = cKDTree(np.column_stack([cols, rows + off]).astype(float),
                   boxsize=[dom.n_theta, 4 * off]).query(np.column_stack([np.mod(cx, dom.n_theta), cy + off]))
    bad = x[d > tol_cells]
    offending = (float(bad.min()), float(bad.max())) if bad.size else ()
    sup = float("nan")
    if base_u is not None:
        sup = u1.sup_distance(base_u)
    return Q2Report(chk.verdict, chk.max_offset, offending, extra.is_empty(), extra.count(), sup,
                    {"fd_iterations": rep.iterations, "fd_residual": rep.residual,
                     "worst_point": chk.worst_point, "n": n, "grid": dom.as_dict()})


# -- Q3 ---------------------------------------------------------------------------------

def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, all derivatives flat at both ends."""
    t = np.clip(np.asarray(t, float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Q3Spec:
    alpha: float = 0.5
    eps1: float = 0.55
    eps2: float = 0.70
    eps2p: float = 0.73
    c: float = 0.004            # baseline fibre curvature 2c near the branches
    c_far: float = 0.5          # H ~ c_far p^2 for |p| large
    y_ramp: float = 2.5         # curvature ramps centred at +-y_ramp
    ramp_len: float = 0.5
    quad_zone: float = 0.05     # no curvature bumps within this distance of a branch
    bump_len: float = 0.1
    nx: int = 8192
    n_p: int = 1201
    p_range: tuple = (-6.0, 6.0)

    def __post_init__(self):
        if not 0.5 < self.eps1 < self.eps2 < self.eps2p < 0.75:
            raise ConfigError("need 1/2 < eps1 < eps2 < eps2' < 3/4")
        if self.c <= 0 or self.c_far <= self.c:
            raise ConfigError("need 0 < c < c_far")

    # branch data
    def f_plus(self, x):
        return np.sin(np.pi * np.asarray(x, float))

    def df_plus(self, x):
        return np.pi * np.cos(np.pi * np.asarray(x, float))

    def F_plus(self, x):
        return (1.0 - np.cos(np.pi * np.asarray(x, float))) / np.pi

    def f_minus(self, x):
        return -self.f_plus(1.0 - np.asarray(x, float))

    def v_plus(self, x):
        x = np.asarray(x, float)
        rise = smoothstep(4.0 * x)
        fall = 1.0 - smoothstep((x - self.eps1) / (self.eps2 - self.eps1))
        return np.where(x <= 0.25, rise, np.where(x <= self.eps1, 1.0, fall))

    def v_minus(self, x):
        return -self.v_plus(1.0 - np.asarray(x, float))

    def E_plus(self, x):
        """Energy along the upper branch: dE/dx = -alpha f+ with E(0) = 0."""
        return -self.alpha * self.F_plus(x)

    def E_minus(self, x):
        return -self.alpha * self.F_plus(1.0 - np.asarray(x, float))


# closed-form curvature elements: unit-mass polynomial bump on [-1, 1]
_B = Polynomial([1, 0, -3, 0, 3, 0, -1]) * (35.0 / 32.0)
_B1 = _B.integ(lbnd=-1)
_B2 = _B1.integ(lbnd=-1)
_B3 = _B2.integ(lbnd=-1)


def _bump_F(y, m, a):
    """(F1, F2): first and second antiderivatives (zero below support) of a unit-mass bump."""
    t = (y - m) / a
    inside = (t > -1) & (t < 1)
    tc = np.clip(t, -1, 1)
    F1 = np.where(t <= -1, 0.0, np.where(inside, _B1(tc), 1.0))
    F2 = np.where(t <= -1, 0.0, np.where(inside, a * _B2(tc), y - m))
    return F1, F2


def _ramp_F(y, m, a):
    """Antiderivatives of the up-ramp B1((y - m)/a) going from 0 to 1."""
    t = (y - m) / a
    inside = (t > -1) & (t < 1)
    tc = np.clip(t, -1, 1)
    F1 = np.where(t <= -1, 0.0, np.where(inside, a * _B2(tc), y - m))
    F2 = np.where(t <= -1, 0.0, np.where(inside, a * a * _B3(tc), a * a * _B3(1.0) + 0.5 * ((y - m) ** 2 - a * a)))
    return F1, F2


def _anchored(Ffun, y, ya, *args):
    F1y, F2y = Ffun(y, *args)
    F1a, F2a = Ffun(ya, *args)
    return F2y - F2a - F1a * (y - ya), F1y - F1a


class Q3Hamiltonian:
    """Analytic fibrewise-convex Hamiltonian with prescribed branch energies and velocities."""

    def __init__(self, spec: Q3Spec):
        self.s = spec

    # fibre pieces -----------------------------------------------------------------
    def _tails(self, y, ya, slope_top_anchor, ytop, slope_bot_anchor, ybot):
        """Outer curvature: bumps that normalise slopes to 2 c_far y, plus the far ramps."""
        s = self.s
        a = 0.5 * s.bump_len
        r = 0.5 * s.ramp_len
        kf = 2.0 * (s.c_far - s.c)
        K_top = 2 * s.c * ytop - slope_top_anchor + kf * s.y_ramp
        K_bot = slope_bot_anchor - 2 * s.c * ybot + kf * s.y_ramp
        m_top = 0.5 * (ytop + s.quad_zone + s.y_ramp - r)
        m_bot = 0.5 * (ybot - s.quad_zone - s.y_ramp + r)
        val = np.zeros_like(y)
        der = np.zeros_like(y)
        for K, m in ((K_top, m_top), (K_bot, m_bot)):
            D, D1 = _anchored(_bump_F, y, ya, m, a)
            val += K * D
            der += K * D1
        Du, Du1 = _anchored(_ramp_F, y, ya, s.y_ramp, r)
        Dd, Dd1 = _anchored(_ramp_F, y, ya, -s.y_ramp, r)
        # bottom ramp: kf * (1 - up-ramp)
        val += kf * (Du + 0.5 * (y - ya) ** 2 - Dd)
        der += kf * (Du1 + (y - ya) - Dd1)
        return val, der, K_top, K_bot

    def single(self, y, ya, E, v):
        s = self.s
        val = E + v * (y - ya) + s.c * (y - ya) ** 2
        der = v + 2 * s.c * (y - ya)
        tv, td, _, _ = self._tails(y, ya, v, ya, v, ya)
        return val + tv, der + td

    def middle_weights(self, fm, fp, Em, Ep, vm, vp):
        """Weights of the two curvature bumps between the branches (value and slope matching)."""
        s = self.s
        a = 0.5 * s.bump_len
        Dl = fp - fm
        m1 = fm + s.quad_zone + a
        m2 = fp - s.quad_zone - a
        S = vp - vm - 2 * s.c * Dl
        V = Ep - Em - vm * Dl - s.c * Dl ** 2
        d1, d2 = fp - m1, fp - m2
        K1 = (V - S * d2) / (d1 - d2)
        K2 = (S * d1 - V) / (d1 - d2)
        return K1, K2, m1, m2

    def double(self, y, fm, fp, Em, Ep, vm, vp):
        s = self.s
        a = 0.5 * s.bump_len
        K1, K2, m1, m2 = self.middle_weights(fm, fp, Em, Ep, vm, vp)
        val = Em + vm * (y - fm) + s.c * (y - fm) ** 2
        der = vm + 2 * s.c * (y - fm)
        for K, m in ((K1, m1), (K2, m2)):
            D, D1 = _anchored(_bump_F, y, fm, m, a)
            val += K * D
            der += K * D1
        tv, td, _, _ = self._tails(y, fm, vp, fp, vm, fm)
        # the top normalising bump was built for slope vp at fp; shift its anchor term
        return val + tv, der + td

    # full Hamiltonian --------------------------------------------------------------
    def _eval(self, x, y):
        s = self.s
        x = np.mod(np.asarray(x, float), 1.0)
        y = np.asarray(y, float)
        x, y = np.broadcast_arrays(x, y)
        x, y = x.ravel(), y.ravel()
        val = np.zeros_like(y)
        der = np.zeros_like(y)
        lo1, lo2 = 1 - s.eps2p, 1 - s.eps2
        # one smooth branch through x = 0: f+ for x < 1/2, f- (via x - 1) beyond
        xs = np.where(x > 0.5, x - 1.0, x)
        fpl = s.f_plus(xs)
        Epl = -s.alpha * s.F_plus(xs)
        vpl = np.where(xs >= 0, s.v_plus(np.abs(xs)), -s.v_plus(np.abs(xs)))
        wd = np.where(x < lo1, 0.0, np.where(x < lo2, smoothstep((x - lo1) / (lo2 - lo1)),
                      np.where(x <= s.eps2, 1.0, np.where(x < s.eps2p,
                                                         smoothstep((s.eps2p - x) / (s.eps2p - s.eps2)), 0.0))))
        need_s = wd < 1.0
        if need_s.any():
            sv, sd = self.single(y[need_s], fpl[need_s], Epl[need_s], vpl[need_s])
            val[need_s] += (1 - wd[need_s]) * sv
            der[need_s] += (1 - wd[need_s]) * sd
        need_d = wd > 0.0
        if need_d.any():
            xd = x[need_d]
            dv, dd = self.double(y[need_d], s.f_minus(xd), s.f_plus(xd), s.E_minus(xd), s.E_plus(xd),
                                 s.v_minus(xd), s.v_plus(xd))
            val[need_d] += wd[need_d] * dv
            der[need_d] += wd[need_d] * dd
        return val, der

    def H(self, x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return self._eval(x, y)[0].reshape(shape)

    def H_p(self, x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return self._eval(x, y)[1].reshape(shape)


def q3_margins(spec: Q3Spec, n=2001):
    """(cond1, cond2) margins on [1/2, eps2'] with the exact branch data."""
    s = spec
    x = np.linspace(0.5, s.eps2p, n)[1:]
    fp, fm = s.f_plus(x), s.f_minus(x)
    Ep, Em = s.E_plus(x), s.E_minus(x)
    vp, vm = s.v_plus(x), s.v_minus(x)
    m1 = Ep - (Em + vm * (fp - fm))
    m2 = Em - (Ep + vp * (fm - fp))
    return x, m1, m2


def q3_search_eps(spec: Q3Spec, shrink=0.5, max_steps=30):
    """Shrink eps2 (and eps2') towards 1/2 until both margins are positive."""
    s = spec
    for _ in range(max_steps):
        _, m1, m2 = q3_margins(s)
        if m1.min() > 0 and m2.min() > 0:
            return s
        e2 = 0.5 + shrink * (s.eps2 - 0.5)
        e1 = 0.5 + shrink * (s.eps1 - 0.5)
        s = Q3Spec(**{**asdict(s), "eps1": e1, "eps2": e2, "eps2p": e2 + shrink * (s.eps2p - s.eps2)})
    raise ConstructionError("no admissible eps1 < eps2 found")


def q3_build(spec: Q3Spec = Q3Spec(), alpha=None):
    s = spec if alpha is None else Q3Spec(**{**asdict(spec), "alpha": float(alpha)})
    x, m1, m2 = q3_margins(s)
    for name, m in (("cond1", m1), ("cond2", m2)):
        if m.min() <= 0:
            raise ConstructionError(f"{name} fails first at x={x[int(np.argmax(m <= 0))]:.6g}")
    Hq = Q3Hamiltonian(s)
    xd = np.linspace(1 - s.eps2p, s.eps2p, 801)
    K1, K2, _, _ = Hq.middle_weights(s.f_minus(xd), s.f_plus(xd), s.E_minus(xd), s.E_plus(xd),
                                     s.v_minus(xd), s.v_plus(xd))
    if min(K1.min(), K2.min()) < 0:
        bad = xd[int(np.argmin(np.minimum(K1, K2)))]
        raise ConstructionError(f"no convex fibre interpolant at x={bad:.6g}")
    model = tabulate(Hq.H, s.nx, s.n_p, s.p_range, period=1.0, alpha=s.alpha,
                     meta={"q3": asdict(s)})
    model.meta["analytic"] = Hq
    return model


@dataclass
class Q3Report:
    lyap: float
    lyap_table: float
    cond1_margin: float
    cond2_margin: float
    convexity_min: float
    convex: bool
    invariance: float
    velocity: float
    closure_in_branches: float
    closure_disconnects: bool
    c1_disconnects: bool

    @property
    def passed(self):
        return (max(self.lyap, self.lyap_table) <= 1e-9 and self.cond1_margin > 0 and self.cond2_margin > 0 and self.convex
                and self.invariance <= 1e-3 and not self.closure_disconnects and self.c1_disconnects)

    def as_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _branch_points(s, n):
    xp = np.linspace(0.0, s.eps2, n)
    xm = np.linspace(1 - s.eps2, 1.0, n)
    return xp, s.f_plus(xp), xm, s.f_minus(xm)


def q3_verify(model: HamiltonianModel, alpha=None, n_bitmap=256, p_range=(-3.0, 3.0), n_max=60,
              t_forward=40.0, n_seed=257):
    Hq = model.meta.get("analytic")
    s = Hq.s
    alpha = s.alpha if alpha is None else alpha
    m = model.with_alpha(alpha)
    # (lyap) on both branches
    xa = np.linspace(0.0, s.eps2, 2001)
    xb = np.linspace(1 - s.eps2, 1.0, 2001)
    lyap = max(np.max(np.abs(Hq.H(xa, s.f_plus(xa)) - s.E_plus(xa))),
               np.max(np.abs(Hq.H(xb, s.f_minus(xb)) - s.E_minus(xb))))
    lyap_t = max(np.max(np.abs(m.H(xa, s.f_plus(xa)) - s.E_plus(xa))),
                 np.max(np.abs(m.H(xb, s.f_minus(xb)) - s.E_minus(xb))))
    _, m1, m2 = q3_margins(s)
    conv = model.table.second_difference_min()
    # branch velocity and invariance
    xp, fp, xm, fm = _branch_points(s, 201)
    fq, fpp = m.field(xp, fp)
    vel = np.max(np.hypot(fq - s.v_plus(xp), fpp - s.v_plus(xp) * s.df_plus(xp)))
    fq, fpp = m.field(xm, fm)
    dfm = s.df_plus(1 - xm)          # d/dx of -f+(1-x)
    vel = max(vel, np.max(np.hypot(fq - s.v_minus(xm), fpp - s.v_minus(xm) * dfm)))
    inv = 0.0
    cfg = FlowConfig(dt=0.01, t_max=5.0)
    for x0 in np.linspace(0.05, s.eps2 - 0.02, 9):
        tr = integrate(m, (x0, float(s.f_plus(x0))), cfg)
        inv = max(inv, float(np.max(np.abs(tr.p - s.f_plus(np.mod(tr.q, 1.0))))))
        x1 = 1.0 - x0
        tr = integrate(m, (x1, float(s.f_minus(x1))), cfg)
        inv = max(inv, float(np.max(np.abs(tr.p - s.f_minus(np.mod(tr.q, 1.0))))))
    # forward closure of the pseudograph of the branch-integral solution
    dom = at.Domain(n_bitmap, n_bitmap, p_range[0], p_range[1], 1.0)
    fmap = time_map(m, 1.0, 0.02)
    xs = np.linspace(0.0, 1.0, n_seed)
    ps = np.where(xs <= 0.5, s.f_plus(xs), s.f_minus(xs))
    xs = np.concatenate([xs, [0.5]])
    ps = np.concatenate([ps, [float(s.f_minus(0.5))]])
    closure = np.zeros(dom.shape, bool)
    q, p = xs.copy(), ps.copy()
    steps = int(round(t_forward))
    paths_q, paths_p = [q.copy()], [p.copy()]
    sub = time_map(m, 0.05, 0.01)
    for _ in range(steps * 20):
        q, p = sub(q, p)
        paths_q.append(q.copy())
        paths_p.append(p.copy())
    PQ, PP = np.array(paths_q), np.array(paths_p)
    for k in range(PQ.shape[1]):
        closure |= at.rasterize_curve(dom, PQ[:, k], PP[:, k]).bits
    branch = at.rasterize_curve(dom, *_branch_points(s, 4001)[:2]) | at.rasterize_curve(dom, *_branch_points(s, 4001)[2:])
    clos_bm = at.AnnulusBitmap(closure, dom)
    within = at.directed_hausdorff(clos_bm, branch, units="cells")
    c1 = at.compute_C1(at.compute_C0(fmap, dom, n_max))
    rep = Q3Report(float(lyap), float(lyap_t), float(m1.min()), float(m2.min()), float(conv),
                   bool(conv >= -1e-9), float(inv), float(vel), float(within),
                   bool(at.separates(closure)), bool(at.separates(c1.bits)))
    object.__setattr__(rep, "bitmaps", {"closure": clos_bm, "C1": c1})
    return rep
