"""Integration of the damped Hamiltonian flow, time-t maps, heteroclinic shooting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp

from .errors import ConfigError, IntegrationError, PhaseBoxExit, ShootingError, UnsupportedOperation
from .models import HamiltonianModel


@dataclass(frozen=True)
class FlowConfig:
    dt: float = 1e-3
    method: str = "rk4"
    t_max: float = 10.0
    tol: float = 1e-10
    stop_ball: Optional[tuple] = None      # (q0, p0, radius), q measured periodically
    energy_below: Optional[float] = None
    stop: Optional[Callable] = None        # stop(t, q, p) -> bool
    phase_box: Optional[tuple] = None      # (p_min, p_max)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.method not in ("rk4", "rk45"):
            raise ConfigError(f"unknown method {self.method!r}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    q: np.ndarray          # unwrapped angle
    p: np.ndarray
    E: np.ndarray
    dt: float
    model: HamiltonianModel = field(repr=False)
    stopped_by: str = "t_max"

    def __len__(self):
        return len(self.t)

    @property
    def end(self):
        return float(self.q[-1]), float(self.p[-1])

    def to_csv(self, path):
        from .io import write_csv
        write_csv(path, ["t", "q", "p", "E"], [self.t, self.q, self.p, self.E])


@dataclass(frozen=True, eq=False)
class PolylineCurve:
    """Ordered points in the lift of T^1 x R."""

    q: np.ndarray
    p: np.ndarray
    period: float = 2 * math.pi
    t: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.q)

    @property
    def points(self):
        return np.column_stack([self.q, self.p])

    def arclength(self):
        seg = np.hypot(np.diff(self.q), np.diff(self.p))
        return np.concatenate([[0.0], np.cumsum(seg)])

    def resampled(self, n=4096):
        s = self.arclength()
        if s[-1] == 0:
            return PolylineCurve(np.full(n, self.q[0]), np.full(n, self.p[0]), self.period)
        u = np.linspace(0.0, s[-1], n)
        t = np.interp(u, s, self.t) if self.t is not None else None
        return PolylineCurve(np.interp(u, s, self.q), np.interp(u, s, self.p), self.period, t)

    def shifted(self, dq):
        return PolylineCurve(self.q + dq, self.p.copy(), self.period, self.t)

    def to_csv(self, path):
        from .io import write_csv
        write_csv(path, ["s", "q", "p"], [self.arclength(), self.q, self.p])


def scalar_field(model: HamiltonianModel):
    """Fast float -> float version of the conformal field."""
    a = model.alpha
    if model.kind == "pendulum":
        sin = math.sin

        def f(q, p):
            return p, -sin(q) - a * p
        return f
    if model.kind == "appendix_pendulum":
        sin, w, s = math.sin, 2 * math.pi, model.shift

        def f(q, p):
            return p, -w * sin(w * (q - s)) - a * p
        return f

    def f(q, p):
        dq, dp = model.field(q, p)
        return float(dq), float(dp)
    return f


def _rk4_scalar(f, q, p, h):
    k1q, k1p = f(q, p)
    k2q, k2p = f(q + 0.5 * h * k1q, p + 0.5 * h * k1p)
    k3q, k3p = f(q + 0.5 * h * k2q, p + 0.5 * h * k2p)
    k4q, k4p = f(q + h * k3q, p + h * k3p)
    return (q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q),
            p + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p))


def _stop_reason(model, config, t, q, p):
    if config.stop_ball is not None:
        q0, p0, r = config.stop_ball
        dq = (q - q0) - model.period * math.floor((q - q0) / model.period + 0.5)
        if math.hypot(dq, p - p0) <= r:
            return "ball"
    if config.energy_below is not None and float(model.H(q, p)) < config.energy_below:
        return "energy"
    if config.stop is not None and config.stop(t, q, p):
        return "predicate"
    return None


def integrate(model, start, config=FlowConfig(), direction="forward"):
    """Orbit of the damped flow from ``start`` (q, p); ``direction='backward'`` reverses time."""
    if direction not in ("forward", "backward"):
        raise ConfigError(f"direction must be forward or backward, got {direction!r}")
    q, p = float(start[0]), float(start[1])
    if not (math.isfinite(q) and math.isfinite(p)):
        raise ConfigError("start point must be finite")
    if config.method == "rk45":
        return _integrate_rk45(model, (q, p), config, direction)
    sign = 1.0 if direction == "forward" else -1.0
    f0 = scalar_field(model)

    def f(a, b):
        u, v = f0(a, b)
        return sign * u, sign * v

    dt = config.dt
    n_full = int(math.floor(config.t_max / dt + 1e-9))
    rest = config.t_max - n_full * dt
    ts, qs, ps = [0.0], [q], [p]
    t = 0.0
    reason = "t_max"
    steps = [dt] * n_full + ([rest] if rest > 1e-12 else [])
    for h in steps:
        q, p = _rk4_scalar(f, q, p, h)
        t += h
        if not (math.isfinite(q) and math.isfinite(p)):
            raise IntegrationError(f"non-finite state at t={t:.6g}", time=t)
        if config.phase_box is not None and not (config.phase_box[0] <= p <= config.phase_box[1]):
            raise PhaseBoxExit(f"left phase box {config.phase_box} at t={t:.6g}", time=t)
        ts.append(t)
        qs.append(q)
        ps.append(p)
        r = _stop_reason(model, config, t, q, p)
        if r is not None:
            reason = r
            break
    return _make_traj(model, ts, qs, ps, dt, reason)


def _make_traj(model, ts, qs, ps, dt, reason):
    t = np.asarray(ts)
    q = np.asarray(qs)
    p = np.asarray(ps)
    return Trajectory(t, q, p, np.asarray(model.H(q, p), dtype=float), dt, model, reason)


def _integrate_rk45(model, start, config, direction):
    sign = 1.0 if direction == "forward" else -1.0

    def rhs(t, y):
        dq, dp = model.field(y[0], y[1])
        return [sign * float(dq), sign * float(dp)]

    events = []
    if config.stop_ball is not None:
        q0, p0, r = config.stop_ball
        per = model.period

        def ball(t, y):
            dq = (y[0] - q0) - per * math.floor((y[0] - q0) / per + 0.5)
            return math.hypot(dq, y[1] - p0) - r
        ball.terminal = True
        events.append(ball)
    sol = solve_ivp(rhs, (0.0, config.t_max), list(start), method="RK45", rtol=config.tol,
                    atol=config.tol, dense_output=True, events=events or None)
    if sol.status < 0:
        raise IntegrationError(sol.message)
    t_end = sol.t[-1]
    n = int(math.floor(t_end / config.dt + 1e-9))
    ts = list(config.dt * np.arange(n + 1))
    if t_end - ts[-1] > 1e-12:
        ts.append(t_end)
    y = sol.sol(np.asarray(ts))
    reason = "ball" if sol.status == 1 else "t_max"
    return _make_traj(model, ts, list(y[0]), list(y[1]), config.dt, reason)


def energy_dissipation_audit(traj: Trajectory):
    """max_t |E(t) - E(0) + alpha * int_0^t p^2 ds| (Simpson quadrature)."""
    if not traj.model.is_pendulum_family and traj.model.kind != "constant_potential":
        raise UnsupportedOperation("dissipation identity requires H = p^2/2 + V(q)")
    if len(traj) < 2:
        return 0.0
    integral = cumulative_simpson(traj.p**2, x=traj.t, initial=0.0)
    res = traj.E - traj.E[0] + traj.model.alpha * integral
    return float(np.max(np.abs(res)))


# -- heteroclinic shooting ------------------------------------------------------

def saddle_unstable_direction(model):
    """Unstable eigenpair of the saddle linearisation [[0, 1], [-f'(q_s), -alpha]]."""
    _, q_s = model.equilibria()
    fp = float(model.force_derivative(q_s))
    a = model.alpha
    lam = 0.5 * (-a + math.sqrt(a * a - 4.0 * fp))
    v = np.array([1.0, lam])
    return lam, v / np.linalg.norm(v)


def shoot_heteroclinic(model, side="right", delta_launch=1e-7, stop_radius=1e-3,
                       t_max=5000.0, dt=1e-3, resample=4096, stop=None):
    """Unstable branch of the saddle, integrated until it enters the focus ball.

    ``side='right'`` launches with increasing angle.  With a custom ``stop``
    predicate the branch is truncated there instead (no shooting error).
    """
    if not model.is_pendulum_family:
        raise UnsupportedOperation("heteroclinic shooting needs a pendulum-family model")
    if side not in ("right", "left"):
        raise ConfigError("side must be 'right' or 'left'")
    focus, q_s = model.equilibria()
    _, v = saddle_unstable_direction(model)
    sgn = 1.0 if side == "right" else -1.0
    start = (q_s + sgn * delta_launch * v[0], sgn * delta_launch * v[1])
    cfg = FlowConfig(dt=dt, t_max=t_max, stop_ball=(focus, 0.0, stop_radius), stop=stop)
    traj = integrate(model, start, cfg)
    if traj.stopped_by == "t_max" and stop is None:
        dq = (traj.q[-1] - focus) - model.period * np.round((traj.q[-1] - focus) / model.period)
        raise ShootingError(
            f"{side} branch did not reach the focus ball (r={stop_radius}) by t={t_max}; "
            f"final distance {math.hypot(dq, traj.p[-1]):.3g}, final energy {traj.E[-1]:.6g}",
            time=t_max)
    q = np.concatenate([[q_s], traj.q])
    p = np.concatenate([[0.0], traj.p])
    t = np.concatenate([[-np.inf], traj.t])
    curve = PolylineCurve(q, p, model.period, t)
    if resample:
        curve = PolylineCurve(q[1:], p[1:], model.period, traj.t).resampled(resample)
        curve = PolylineCurve(np.concatenate([[q_s], curve.q]), np.concatenate([[0.0], curve.p]),
                              model.period, np.concatenate([[-np.inf], curve.t]))
    return curve


# -- time-t maps ------------------------------------------------------------------

class AnnulusMap:
    """Vectorised time-t map of the damped flow (RK4) and its inverse."""

    def __init__(self, model, t, dt=0.01):
        if not t > 0:
            raise ConfigError("time must be positive")
        self.model = model
        self.t = float(t)
        self.n_steps = max(1, int(math.ceil(self.t / dt - 1e-9)))
        self.h = self.t / self.n_steps
        self.period = model.period
        # a steep bump makes the field stiff near its support: sub-step there
        self.refine = None
        b = getattr(model, "bump", None)
        if b is not None and b.height != 0:
            omega = 6.0 * abs(b.height) / min(b.radii) ** 2
            k = max(1, int(math.ceil(self.h * omega)))
            if k > 1:
                self.refine = (b, 0.15, k)

    def _field(self, q, p):
        m = self.model
        if m.kind == "pendulum":
            return p, -np.sin(q) - m.alpha * p
        if m.kind == "appendix_pendulum":
            w = 2 * math.pi
            return p, -w * np.sin(w * (q - m.shift)) - m.alpha * p
        return m.field(q, p)

    def flow(self, q, p, sign=1.0, p_box=None):
        """Integrate; with ``p_box`` also return the exit side (+1 top, -1 bottom, 0 stayed)."""
        q = np.array(q, dtype=float, copy=True)
        p = np.array(p, dtype=float, copy=True)
        h = sign * self.h
        exit_side = np.zeros(q.shape, dtype=np.int8) if p_box is not None else None
        for _ in range(self.n_steps):
            if self.refine is None:
                q, p = self._rk4(q, p, h)
            else:
                near = self._near_bump(q, p)
                far = ~near
                q[far], p[far] = self._rk4(q[far], p[far], h)
                if near.any():
                    k = self.refine[2]
                    qn, pn = q[near], p[near]
                    for _ in range(k):
                        qn, pn = self._rk4(qn, pn, h / k)
                    q[near], p[near] = qn, pn
            if p_box is not None:
                up = (p > p_box[1]) & (exit_side == 0)
                down = (p < p_box[0]) & (exit_side == 0)
                exit_side[up] = 1
                exit_side[down] = -1
                # freeze escaped points inside a bounded band
                p = np.clip(p, p_box[0] - 1.0, p_box[1] + 1.0)
        if p_box is not None:
            return q, p, exit_side
        return q, p

    def _rk4(self, q, p, h):
        k1q, k1p = self._field(q, p)
        k2q, k2p = self._field(q + 0.5 * h * k1q, p + 0.5 * h * k1p)
        k3q, k3p = self._field(q + 0.5 * h * k2q, p + 0.5 * h * k2p)
        k4q, k4p = self._field(q + h * k3q, p + h * k3p)
        return q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q), p + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)

    def _near_bump(self, q, p):
        b, margin, _ = self.refine
        dx = np.abs(np.mod(q - b.center[0] + 0.5 * b.period, b.period) - 0.5 * b.period)
        return (dx <= b.radii[0] + margin) & (np.abs(p - b.center[1]) <= b.radii[1] + margin)

    def __call__(self, q, p):
        return self.flow(q, p, 1.0)

    def inverse(self, q, p):
        return self.flow(q, p, -1.0)

    def jacobian_det(self, q, p, eps=1e-6):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        qa, pa = self(q + eps, p)
        qb, pb = self(q - eps, p)
        qc, pc = self(q, p + eps)
        qd, pd = self(q, p - eps)
        a, b = (qa - qb) / (2 * eps), (qc - qd) / (2 * eps)
        c, d = (pa - pb) / (2 * eps), (pc - pd) / (2 * eps)
        return a * d - b * c


def time_map(model, t, dt=0.01):
    return AnnulusMap(model, t, dt)


class FunctionMap:
    """Annulus map given by explicit forward/inverse callables (tests, toy models)."""

    def __init__(self, forward, inverse, period=2 * math.pi):
        self._fwd = forward
        self._inv = inverse
        self.period = period

    def __call__(self, q, p):
        return self._fwd(np.asarray(q, float), np.asarray(p, float))

    def inverse(self, q, p):
        return self._inv(np.asarray(q, float), np.asarray(p, float))

    def flow(self, q, p, sign=1.0, p_box=None):
        f = self.__call__ if sign > 0 else self.inverse
        q2, p2 = f(q, p)
        if p_box is None:
            return q2, p2
        side = np.where(p2 > p_box[1], 1, np.where(p2 < p_box[0], -1, 0)).astype(np.int8)
        return q2, p2, side


def rotation_number(obj, n_iter=None, start=None):
    """Average angular speed of a trajectory, or per-iterate drift of a map orbit.

    ``obj`` is a :class:`Trajectory`, an array of lifted angles (one per
    iterate), or a map together with ``start`` and ``n_iter``.
    """
    if isinstance(obj, Trajectory):
        T = obj.t[-1] - obj.t[0]
        if T <= 0:
            raise ConfigError("trajectory length must be positive")
        return float((obj.q[-1] - obj.q[0]) / T)
    if callable(obj):
        q, p = float(start[0]), float(start[1])
        q0 = q
        for _ in range(n_iter):
            q, p = obj(np.asarray(q), np.asarray(p))
        return float((float(q) - q0) / n_iter)
    lifts = np.asarray(obj, dtype=float)
    return float((lifts[-1] - lifts[0]) / (len(lifts) - 1))
