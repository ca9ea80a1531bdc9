"""Hamiltonians on the annulus T^1 x R and their damped (conformal) vector fields.

Every model is an immutable object exposing vectorised evaluation of ``H``,
its partial derivatives and the conformal field ``X_{-H,alpha}``::

    q' =  dH/dp
    p' = -dH/dq - alpha * p

Kinds
-----
``pendulum``            H = p^2/2 - cos(q),            period 2*pi
``appendix_pendulum``   H = p^2/2 - cos(2*pi*(x - s)) - 1, period 1
``constant_potential``  H = p^2/2 - c,                 period configurable
``perturbed``           base model plus a compactly supported bump
``tabulated``           bicubic spline through values on an (x, p) grid
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import minimize_scalar

from .errors import ConfigError, DomainError, UnsupportedOperation

TWO_PI = 2.0 * math.pi

KINDS = ("pendulum", "appendix_pendulum", "constant_potential", "perturbed", "tabulated")


@dataclass(frozen=True)
class PhasePoint:
    """Point of the annulus; ``q`` is kept in ``[0, period)``."""

    q: float
    p: float
    period: float = TWO_PI

    def __post_init__(self):
        object.__setattr__(self, "q", float(self.q) % self.period)

    def lift(self, reference: float) -> float:
        """Lift of ``q`` closest to ``reference``."""
        k = round((reference - self.q) / self.period)
        return self.q + k * self.period


def periodic_offset(x, x0, period):
    """Signed displacement x - x0 reduced to [-period/2, period/2)."""
    d = np.asarray(x, dtype=float) - x0
    return d - period * np.floor(d / period + 0.5)


@dataclass(frozen=True)
class Bump:
    """height * (1 - r^2)^3 on the ellipse r < 1; exactly zero outside it."""

    center: tuple
    radii: tuple
    height: float
    period: float

    def __post_init__(self):
        if min(self.radii) <= 0:
            raise ConfigError(f"bump radii must be positive, got {self.radii}")

    def _r2(self, x, p):
        dx = periodic_offset(x, self.center[0], self.period) / self.radii[0]
        dp = (np.asarray(p, dtype=float) - self.center[1]) / self.radii[1]
        return dx, dp, dx * dx + dp * dp

    def __call__(self, x, p):
        _, _, r2 = self._r2(x, p)
        s = np.clip(1.0 - r2, 0.0, None)
        return self.height * s**3

    def gradient(self, x, p):
        dx, dp, r2 = self._r2(x, p)
        s = np.clip(1.0 - r2, 0.0, None)
        # d/dr2 of (1-r2)^3 is -3 (1-r2)^2
        g = -3.0 * self.height * s**2
        return g * 2.0 * dx / self.radii[0], g * 2.0 * dp / self.radii[1]

    def support_box(self):
        x0, p0 = self.center
        rx, rp = self.radii
        return (x0 - rx, x0 + rx, p0 - rp, p0 + rp)

    def max_abs_dp(self):
        # max over r of 6 h (1-r^2)^2 r / rp, attained at r^2 = 1/5
        return 6.0 * abs(self.height) * (0.8**2) * math.sqrt(0.2) / self.radii[1]


@dataclass(frozen=True, eq=False)
class Table:
    """Periodic-in-x grid of Hamiltonian values with a bicubic spline."""

    x0: float
    p0: float
    dx: float
    dp: float
    values: np.ndarray
    pad: int = 4
    spline: RectBivariateSpline = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        nx, npp = v.shape
        if nx < 8 or npp < 8:
            raise ConfigError("tabulated model needs at least 8 nodes per axis")
        object.__setattr__(self, "values", v)
        k = self.pad
        xs = self.x0 + self.dx * np.arange(-k, nx + k)
        vv = np.concatenate([v[-k:], v, v[:k]], axis=0)
        ps = self.p0 + self.dp * np.arange(npp)
        object.__setattr__(self, "spline", RectBivariateSpline(xs, ps, vv, kx=3, ky=3, s=0))

    @property
    def shape(self):
        return self.values.shape

    @property
    def period(self):
        return self.shape[0] * self.dx

    @property
    def p_max(self):
        return self.p0 + self.dp * (self.shape[1] - 1)

    def _prepare(self, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        x, p = np.broadcast_arrays(x, p)
        if np.any(p < self.p0 - 1e-12) or np.any(p > self.p_max + 1e-12):
            raise DomainError(
                f"momentum outside table range [{self.p0}, {self.p_max}]")
        xr = self.x0 + np.mod(x - self.x0, self.period)
        return xr, p

    def ev(self, x, p, dx=0, dy=0):
        xr, pr = self._prepare(x, p)
        out = self.spline.ev(xr.ravel(), pr.ravel(), dx=dx, dy=dy)
        return out.reshape(xr.shape) if xr.shape else float(out[0])

    def _hermite(self):
        """Node values of H, H_x, H_p, H_xp from the spline (cached)."""
        cache = self.__dict__.get("_herm")
        if cache is None:
            nx, npp = self.shape
            xs = self.x0 + self.dx * np.arange(nx)
            ps = self.p0 + self.dp * np.arange(npp)
            sp = self.spline
            cache = tuple(sp(xs, ps, dx=a, dy=b) for a, b in ((0, 0), (1, 0), (0, 1), (1, 1)))
            object.__setattr__(self, "_herm", cache)
        return cache

    def gradient(self, x, p):
        """(H_x, H_p) of the bicubic Hermite interpolant; fast alternative to spline.ev."""
        xr, pr = self._prepare(x, p)
        f, fx, fp, fxp = self._hermite()
        nx, npp = self.shape
        u = (xr - self.x0) / self.dx
        v = (pr - self.p0) / self.dp
        i = np.floor(u).astype(np.int64)
        j = np.clip(np.floor(v).astype(np.int64), 0, npp - 2)
        s = u - i
        t = v - j
        i %= nx
        i1 = (i + 1) % nx
        h0, h1 = 1 - 3 * s * s + 2 * s ** 3, 3 * s * s - 2 * s ** 3
        g0, g1 = s - 2 * s * s + s ** 3, s ** 3 - s * s
        dh0, dh1 = (6 * s * s - 6 * s), (6 * s - 6 * s * s)
        dg0, dg1 = 1 - 4 * s + 3 * s * s, 3 * s * s - 2 * s
        k0, k1 = 1 - 3 * t * t + 2 * t ** 3, 3 * t * t - 2 * t ** 3
        l0, l1 = t - 2 * t * t + t ** 3, t ** 3 - t * t
        dk0, dk1 = (6 * t * t - 6 * t), (6 * t - 6 * t * t)
        dl0, dl1 = 1 - 4 * t + 3 * t * t, 3 * t * t - 2 * t
        hx, hp = self.dx, self.dp
        gx = np.zeros_like(s)
        gp = np.zeros_like(s)
        for ii, (a, b, da, db) in ((i, (h0, g0, dh0, dg0)), (i1, (h1, g1, dh1, dg1))):
            for jj, (c, d, dc, dd) in ((j, (k0, l0, dk0, dl0)), (j + 1, (k1, l1, dk1, dl1))):
                F, FX, FP, FXP = f[ii, jj], fx[ii, jj] * hx, fp[ii, jj] * hp, fxp[ii, jj] * hx * hp
                gx += (da * (F * c + FP * d) + db * (FX * c + FXP * d)) / hx
                gp += (a * (F * dc + FP * dd) + b * (FX * dc + FXP * dd)) / hp
        return gx, gp

    def second_difference_min(self):
        v = self.values
        return float((v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]).min())


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    kind: str
    alpha: float = 0.0
    period: float = TWO_PI
    shift: float = 0.0
    c: float = 0.0
    base: Optional["HamiltonianModel"] = None
    bump: Optional[Bump] = None
    table: Optional[Table] = None
    convex_flag: Optional[bool] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.alpha < 0:
            raise ConfigError("friction alpha must be >= 0")

    # -- evaluation -----------------------------------------------------
    def H(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        k = self.kind
        if k == "pendulum":
            return 0.5 * p * p - np.cos(q)
        if k == "appendix_pendulum":
            return 0.5 * p * p - np.cos(TWO_PI * (q - self.shift)) - 1.0
        if k == "constant_potential":
            return 0.5 * p * p - self.c + 0.0 * q
        if k == "perturbed":
            return self.base.H(q, p) + self.bump(q, p)
        return self.table.ev(q, p)

    def dH_dq(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        k = self.kind
        if k == "pendulum":
            return np.sin(q) + 0.0 * p
        if k == "appendix_pendulum":
            return TWO_PI * np.sin(TWO_PI * (q - self.shift)) + 0.0 * p
        if k == "constant_potential":
            return 0.0 * (q + p)
        if k == "perturbed":
            return self.base.dH_dq(q, p) + self.bump.gradient(q, p)[0]
        return self.table.gradient(q, p)[0]

    def dH_dp(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        k = self.kind
        if k in ("pendulum", "appendix_pendulum", "constant_potential"):
            return p + 0.0 * q
        if k == "perturbed":
            return self.base.dH_dp(q, p) + self.bump.gradient(q, p)[1]
        return self.table.gradient(q, p)[1]

    def field(self, q, p):
        """Conformal vector field (q', p') of the damped flow."""
        if self.kind == "tabulated":
            gx, gp = self.table.gradient(q, p)
            return gp, -gx - self.alpha * np.asarray(p, dtype=float)
        return self.dH_dp(q, p), -self.dH_dq(q, p) - self.alpha * np.asarray(p, dtype=float)

    # -- pendulum-family helpers -----------------------------------------
    @property
    def is_pendulum_family(self):
        return self.kind in ("pendulum", "appendix_pendulum")

    def force(self, q):
        """f(q) with p' = -alpha p - f(q) (pendulum family)."""
        self._need_pendulum()
        return self.dH_dq(q, 0.0)

    def force_derivative(self, q):
        self._need_pendulum()
        if self.kind == "pendulum":
            return np.cos(q)
        return TWO_PI**2 * np.cos(TWO_PI * (np.asarray(q) - self.shift))

    def equilibria(self):
        """(focus, saddle) base positions of the pendulum family."""
        self._need_pendulum()
        half = 0.5 * self.period
        if self.kind == "pendulum":
            return 0.0, half
        return self.shift % 1.0, (self.shift + half) % 1.0

    def _need_pendulum(self):
        if not self.is_pendulum_family:
            raise UnsupportedOperation(f"operation defined for the pendulum family only, got {self.kind}")

    # -- Legendre transform ----------------------------------------------
    @property
    def fiber_convex(self):
        if self.kind == "perturbed":
            return False
        if self.kind == "tabulated":
            return bool(self.convex_flag)
        return True

    def lagrangian(self, q, v):
        """L(q, v) = sup_p (p v - H(q, p))."""
        if not self.fiber_convex:
            raise UnsupportedOperation(
                f"Legendre transform undefined for non-convex kind {self.kind!r}; "
                "use the finite-difference solver")
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        # quadratic-in-p kinds: H = p^2/2 + V(q)  =>  L = v^2/2 - V(q)
        if self.kind != "tabulated":
            return 0.5 * v * v - self.H(q, 0.0 * v)
        return _numeric_legendre(lambda qq, pp: self.H(qq, pp), q, v,
                                 (self.table.p0, self.table.p_max))

    def with_alpha(self, alpha):
        base = self.base.with_alpha(alpha) if self.base is not None else None
        return replace(self, alpha=float(alpha), base=base)


def _numeric_legendre(fun, q, v, bracket):
    q, v = np.broadcast_arrays(q, v)
    out = np.empty(q.shape)
    for idx in np.ndindex(q.shape):
        qi, vi = float(q[idx]), float(v[idx])
        res = minimize_scalar(lambda p: -(p * vi - float(fun(qi, p))),
                              bounds=bracket, method="bounded",
                              options={"xatol": 1e-10})
        out[idx] = -res.fun
    return out if out.shape else float(out)


def legendre_dual(fun, q, x, bracket):
    """sup_y (x y - fun(q, y)) by bounded golden-section search."""
    return _numeric_legendre(fun, q, x, bracket)


# -- constructors ---------------------------------------------------------

def pendulum(alpha=0.0):
    return HamiltonianModel("pendulum", alpha=float(alpha), period=TWO_PI)


def appendix_pendulum(alpha=0.0, shift=0.0):
    """p^2/2 - cos(2 pi (x - shift)) - 1; ``shift=0.5`` puts the saddle at x = 0."""
    return HamiltonianModel("appendix_pendulum", alpha=float(alpha), period=1.0, shift=float(shift))


def constant_potential(c, alpha=0.0, period=1.0):
    return HamiltonianModel("constant_potential", alpha=float(alpha), period=float(period), c=float(c))


def build_perturbed(model, bump_spec):
    """Add a compactly supported bump ``rho`` to ``model``.

    ``bump_spec`` holds ``center`` (x0, p0), ``radii`` (rx, rp) and ``height``.
    """
    bump = Bump(tuple(map(float, bump_spec["center"])), tuple(map(float, bump_spec["radii"])),
                float(bump_spec["height"]), model.period)
    return HamiltonianModel("perturbed", alpha=model.alpha, period=model.period, base=model, bump=bump)


def tabulated(values, x0, p0, dx, dp, alpha=0.0, meta=None):
    table = Table(float(x0), float(p0), float(dx), float(dp), np.asarray(values, dtype=float))
    convex = table.second_difference_min() >= -1e-9
    return HamiltonianModel("tabulated", alpha=float(alpha), period=table.period, table=table,
                            convex_flag=convex, meta=dict(meta or {}))


def tabulate(fun, nx, npp, p_range, period=1.0, alpha=0.0, meta=None):
    """Sample ``fun(x, p)`` on a periodic grid and wrap it as a tabulated model."""
    dx = period / nx
    dp = (p_range[1] - p_range[0]) / (npp - 1)
    xs = dx * np.arange(nx)
    ps = p_range[0] + dp * np.arange(npp)
    X, P = np.meshgrid(xs, ps, indexing="ij")
    return tabulated(fun(X, P), 0.0, p_range[0], dx, dp, alpha=alpha, meta=meta)


def from_spec(spec):
    """Build a model from a config mapping (see ``cli``)."""
    spec = dict(spec)
    kind = spec.pop("kind")
    alpha = float(spec.pop("alpha", 0.0))
    if kind == "pendulum":
        model = pendulum(alpha)
    elif kind == "appendix_pendulum":
        model = appendix_pendulum(alpha, shift=float(spec.pop("shift", 0.0)))
    elif kind == "constant_potential":
        model = constant_potential(float(spec.pop("c")), alpha, float(spec.pop("period", 1.0)))
    elif kind == "tabulated":
        from .io import read_table_csv
        model = read_table_csv(spec.pop("path"), alpha=alpha)
    else:
        raise ConfigError(f"model kind {kind!r} cannot be built from a spec")
    bump = spec.pop("bump", None)
    if spec:
        raise ConfigError(f"unknown model keys: {sorted(spec)}")
    if bump is not None:
        model = build_perturbed(model, bump)
    return model
