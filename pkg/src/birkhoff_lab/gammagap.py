"""Spiral intersections and enclosed areas for pairs of damped-pendulum heteroclinics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, NotFoundError, SelfIntersectionError
from .flow import PolylineCurve, shoot_heteroclinic
from .models import pendulum

_EPS = np.finfo(float).eps


# -- robust predicates ------------------------------------------------------------------

def _orient_exact(ax, ay, bx, by, cx, cy):
    F = Fraction
    d = (F(bx) - F(ax)) * (F(cy) - F(ay)) - (F(by) - F(ay)) * (F(cx) - F(ax))
    return (d > 0) - (d < 0)


def orient2d(a, b, c):
    """Sign of the signed area of triangle abc; exact for float inputs.

    Arrays broadcast.  Determinants too close to zero for the float filter
    are recomputed with rational arithmetic.
    """
    ax, ay = np.asarray(a[0], float), np.asarray(a[1], float)
    bx, by = np.asarray(b[0], float), np.asarray(b[1], float)
    cx, cy = np.asarray(c[0], float), np.asarray(c[1], float)
    l = (bx - ax) * (cy - ay)
    r = (by - ay) * (cx - ax)
    det = l - r
    bound = 4 * _EPS * (np.abs(l) + np.abs(r))
    sign = np.sign(det).astype(int)
    unsure = np.abs(det) <= bound
    if np.any(unsure):
        shape = np.broadcast(ax, ay, bx, by, cx, cy).shape
        if shape == ():
            return _orient_exact(*(float(v) for v in (ax, ay, bx, by, cx, cy)))
        arrs = [np.broadcast_to(v, shape) for v in (ax, ay, bx, by, cx, cy)]
        sign = np.array(np.broadcast_to(sign, shape))
        for idx in zip(*np.nonzero(np.broadcast_to(unsure, shape))):
            sign[idx] = _orient_exact(*(float(v[idx]) for v in arrs))
    return sign if sign.shape else int(sign)


@dataclass(frozen=True)
class Crossing:
    point: tuple
    s_a: float          # fractional vertex index along curve a
    s_b: float


def _points(c):
    if isinstance(c, PolylineCurve):
        return np.column_stack([c.q, c.p])
    c = np.asarray(c, float)
    if c.ndim != 2 or c.shape[1] != 2:
        raise ConfigError("curve must be a PolylineCurve or an (N, 2) array")
    return c


def all_crossings(curve_a, curve_b, chunk=512):
    """Transversal (proper) crossings of two polylines, sorted along curve a."""
    A, B = _points(curve_a), _points(curve_b)
    a0, a1 = A[:-1], A[1:]
    b0, b1 = B[:-1], B[1:]
    bxlo, bxhi = np.minimum(b0[:, 0], b1[:, 0]), np.maximum(b0[:, 0], b1[:, 0])
    bylo, byhi = np.minimum(b0[:, 1], b1[:, 1]), np.maximum(b0[:, 1], b1[:, 1])
    out = []
    for s in range(0, len(a0), chunk):
        p, q = a0[s:s + chunk], a1[s:s + chunk]
        xlo, xhi = np.minimum(p[:, 0], q[:, 0]), np.maximum(p[:, 0], q[:, 0])
        ylo, yhi = np.minimum(p[:, 1], q[:, 1]), np.maximum(p[:, 1], q[:, 1])
        box = ((xlo[:, None] <= bxhi[None]) & (xhi[:, None] >= bxlo[None])
               & (ylo[:, None] <= byhi[None]) & (yhi[:, None] >= bylo[None]))
        ia, ib = np.nonzero(box)
        if ia.size == 0:
            continue
        P, Q, R, S = p[ia].T, q[ia].T, b0[ib].T, b1[ib].T
        o1, o2 = orient2d(P, Q, R), orient2d(P, Q, S)
        o3, o4 = orient2d(R, S, P), orient2d(R, S, Q)
        ok = (o1 * o2 < 0) & (o3 * o4 < 0)
        for k in np.nonzero(ok)[0]:
            i, j = s + ia[k], ib[k]
            d1 = A[i + 1] - A[i]
            d2 = B[j + 1] - B[j]
            den = d1[0] * d2[1] - d1[1] * d2[0]
            w = B[j] - A[i]
            ta = (w[0] * d2[1] - w[1] * d2[0]) / den
            tb = (w[0] * d1[1] - w[1] * d1[0]) / den
            ta, tb = min(max(ta, 0.0), 1.0), min(max(tb, 0.0), 1.0)
            pt = A[i] + ta * d1
            out.append(Crossing((float(pt[0]), float(pt[1])), i + ta, j + tb))
    out.sort(key=lambda c: c.s_a)
    return out


def first_intersection(curve_a, curve_b, near=None, radius=math.inf):
    """Earliest crossing along ``curve_a``, optionally restricted to a disc around ``near``."""
    cs = all_crossings(curve_a, curve_b)
    if near is not None:
        cs = [c for c in cs if math.hypot(c.point[0] - near[0], c.point[1] - near[1]) <= radius]
    if not cs:
        A, B = _points(curve_a), _points(curve_b)
        d, j = cKDTree(B).query(A)
        i = int(np.argmin(d))
        raise NotFoundError(f"no transversal crossing; closest approach {d[i]:.3g} between "
                            f"a[{i}]={tuple(A[i])} and b[{int(j[i])}]={tuple(B[j[i]])}")
    return cs[0]


# -- areas ------------------------------------------------------------------------

def signed_area(loop):
    """Half the shoelace sum; positive for counter-clockwise loops.  No simplicity check."""
    P = _points(loop)
    x, y = P[:, 0], P[:, 1]
    x2, y2 = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * y2 - x2 * y))


def is_simple(loop):
    P = _points(loop)
    if np.allclose(P[0], P[-1]):
        P = P[:-1]
    n = len(P)
    closed = np.vstack([P, P[:1]])
    cs = all_crossings(closed, closed)
    for c in cs:
        i, j = int(c.s_a), int(c.s_b)
        if abs(i - j) > 1 and {i, j} != {0, n - 1}:
            return False
    return True


def shoelace_area(loop, check=True):
    """|sum (x_i y_{i+1} - x_{i+1} y_i)| / 2 for a closed simple polyline."""
    if check and not is_simple(loop):
        raise SelfIntersectionError("polyline is self-intersecting; use signed_area for winding-weighted area")
    return abs(signed_area(loop))


def line_integral(points, s0, s1):
    """Integral of p dtheta along the polyline between fractional vertex indices s0 <= s1."""
    P = _points(points)
    seg = 0.5 * (P[1:, 1] + P[:-1, 1]) * np.diff(P[:, 0])
    cum = np.concatenate([[0.0], np.cumsum(seg)])

    def F(s):
        i = min(int(math.floor(s)), len(P) - 2)
        t = s - i
        a, b = P[i], P[i + 1]
        m = a + t * (b - a)
        return cum[i] + 0.5 * (a[1] + m[1]) * (m[0] - a[0])

    return F(s1) - F(s0)


def truncate(curve, s):
    """Polyline from the start up to fractional index s."""
    P = _points(curve)
    i = int(math.floor(s))
    t = s - i
    end = P[i] + t * (P[min(i + 1, len(P) - 1)] - P[i])
    return np.vstack([P[:i + 1], end])


def enclosed_area_energy(alpha, beta, point, model=None):
    """C (1/beta - 1/alpha) with C = 1 - E(point)."""
    if alpha <= 0 or beta <= 0:
        raise ConfigError("frictions must be positive")
    if beta == alpha:
        return 0.0
    m = model or pendulum(alpha)
    C = 1.0 - float(m.H(point[0], point[1]))
    if C <= 0:
        raise ConfigError(f"energy gap C = {C:.3g} must be positive")
    return C * (1.0 / beta - 1.0 / alpha)


# -- the gap configuration ------------------------------------------------------------

@dataclass
class GapResult:
    alpha: float
    beta: float
    point: tuple
    C: float
    area_energy: float
    area_shoelace: float

    @property
    def bound_8(self):
        return 8.0 * (1.0 - self.beta / self.alpha)

    @property
    def bound_4(self):
        return 4.0 * (1.0 - self.beta / self.alpha)

    def row(self):
        return [self.alpha, self.beta, self.C, self.area_energy, self.area_shoelace,
                self.bound_8, self.bound_4]

    HEADER = ["alpha", "beta", "C", "area_energy", "area_shoelace", "bound_8", "bound_4"]


def spiral_pair(alpha, beta, dt=1e-3, n_resample=4096):
    """(gamma_{beta,L}, gamma_{alpha,R}) in the lift, the latter starting at (-pi, 0).

    The beta branch is cut once it comes back with p > 0 across theta = 0;
    the alpha branch once it first reaches theta = 0.
    """
    if not alpha > beta > 0:
        raise ConfigError("need alpha > beta > 0")
    two_pi = 2 * math.pi
    gb = shoot_heteroclinic(pendulum(beta), "left", dt=dt, resample=n_resample,
                            stop=lambda t, q, p: p > 0 and q >= 0.0)
    ga = shoot_heteroclinic(pendulum(alpha), "right", dt=dt, resample=n_resample,
                            stop=lambda t, q, p: q >= two_pi)
    return gb, ga.shifted(-two_pi)


def spiral_gap(alpha, beta, dt=1e-3, n_resample=4096):
    """Enclosed area between gamma_{beta,L} and gamma_{alpha,R} up to their first crossing."""
    gb, ga = spiral_pair(alpha, beta, dt, n_resample)
    X = first_intersection(gb, ga)
    area_e = enclosed_area_energy(alpha, beta, X.point)
    # loop: beta arc to X, alpha arc back to (-pi, 0), zero section to (pi, 0)
    arc_b = truncate(gb, X.s_a)
    arc_a = truncate(ga, X.s_b)[::-1]
    loop = np.vstack([arc_b, arc_a[1:], [[gb.q[0], 0.0]]])
    # clockwise traversal, and the loop winds around several pieces: signed area
    area_s = -signed_area(loop)
    C = 1.0 - float(pendulum().H(*X.point))
    return GapResult(alpha, beta, X.point, C, area_e, area_s)


def gap_table(pairs, **kw):
    return [spiral_gap(a, b, **kw) for a, b in pairs]


# -- min-area bound ------------------------------------------------------------------------

@dataclass
class MinAreaBound:
    A: float
    A_prime: float
    B: float
    B_prime: float
    crossings: list

    @property
    def min(self):
        return min(self.A, self.A_prime, self.B, self.B_prime)

    def as_tuple(self):
        return (self.A, self.A_prime, self.B, self.B_prime, self.min)


def _closed_integral(P, s0, s1):
    """Forward integral along a closed polyline (last vertex = first vertex + period shift)."""
    if s1 >= s0:
        return line_integral(P, s0, s1)
    return line_integral(P, s0, len(P) - 1) + line_integral(P, 0, s1)


def min_area_bound(L1, L2, t0=(math.pi, 0.0), period=2 * math.pi):
    """Areas A, A', B, B' between arcs of L1 and L2 joining t0 to its neighbouring crossings.

    Both curves are one lifted period, traversed left to right: the last
    vertex equals the first shifted by ``period``.  The crossing nearest to
    ``t0`` plays the role of t0; t- and t+ are its neighbours along L1.
    """
    P1, P2 = _points(L1), _points(L2)
    for P in (P1, P2):
        if not (abs(P[-1, 0] - P[0, 0] - period) < 1e-9 and abs(P[-1, 1] - P[0, 1]) < 1e-9):
            raise ConfigError("curves must close up after one period")
    # crossings with the neighbouring lifts of L1 too
    cs = []
    for k in (-1, 0, 1):
        sh = P1 + [k * period, 0.0]
        for c in all_crossings(P2, sh):
            s1 = c.s_b
            if 0 <= s1 < len(P1) - 1:
                cs.append((c.point, c.s_a, s1))
    uniq = []
    for c in sorted(cs, key=lambda c: c[2]):
        if not uniq or abs(c[2] - uniq[-1][2]) > 1e-9:
            uniq.append(c)
    if len(uniq) < 3:
        raise ConfigError(f"need at least three crossings, found {len(uniq)}")
    th = np.array([np.mod(c[0][0], period) for c in uniq])
    d0 = np.abs(np.mod(th - np.mod(t0[0], period) + 0.5 * period, period) - 0.5 * period)
    k0 = int(np.argmin(d0 + np.abs([c[0][1] - t0[1] for c in uniq])))
    n = len(uniq)
    kp, km = (k0 + 1) % n, (k0 - 1) % n
    c0, cp, cm = uniq[k0], uniq[kp], uniq[km]

    def S(a, b):
        # arcs from crossing a to crossing b in the curves' orientation
        return _closed_integral(P2, a[1], b[1]) - _closed_integral(P1, a[2], b[2])

    A = abs(S(c0, cm))
    Ap = abs(S(c0, cp))
    B = abs(S(cp, c0))
    Bp = abs(S(cm, c0))
    return MinAreaBound(A, Ap, B, Bp, [c[0] for c in uniq])
