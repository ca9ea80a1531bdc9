"""Discounted Hamilton-Jacobi solvers and viscosity diagnostics on the circle.

Two independent solvers for ``alpha u + H(x, u') = 0``: discounted
Lax-Oleinik value iteration (convex H) and a monotone Lax-Friedrichs
pseudo-time scheme (any H).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ConvergenceError, MonotonicityError, UnsupportedOperation
from .models import HamiltonianModel


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Periodic samples u_i at x_i = i * period / n."""

    values: np.ndarray
    period: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 16:
            raise ConfigError("grid function needs at least 16 cells")
        if not np.all(np.isfinite(v)):
            raise ConfigError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.size

    @property
    def h(self):
        return self.period / self.n

    @property
    def x(self):
        return self.h * np.arange(self.n)

    @classmethod
    def sample(cls, fun, n, period=1.0):
        return cls(np.asarray(fun(period / n * np.arange(n)), dtype=float), period)

    def index_of(self, x0):
        i = (x0 % self.period) / self.h
        k = int(round(i))
        if abs(i - k) > 1e-9 * self.n:
            raise ConfigError(f"x0={x0} is not a grid node")
        return k % self.n

    def central_difference(self):
        u = self.values
        return (np.roll(u, -1) - np.roll(u, 1)) / (2 * self.h)

    def sup_distance(self, other):
        return float(np.max(np.abs(self.values - other.values)))

    def to_csv(self, path):
        from .io import write_csv
        dm, dp = one_sided_derivatives_all(self)
        write_csv(path, ["x", "u", "du_minus", "du_plus"], [self.x, self.values, dm, dp])


@dataclass
class SolveReport:
    iterations: int
    sup_change: float
    residual: float
    kinks: list = field(default_factory=list)
    solver: str = ""

    def as_dict(self):
        return {"iterations": self.iterations, "sup_change": self.sup_change,
                "residual": self.residual, "kinks": list(self.kinks), "solver": self.solver}


# -- Lagrangian on tensor grids ----------------------------------------------------

def _lagrangian_grid(model: HamiltonianModel, xs, vs):
    """L(x, v) on the tensor grid xs x vs."""
    if not model.fiber_convex:
        raise UnsupportedOperation(
            f"Lax-Oleinik needs a fiberwise convex Hamiltonian, got {model.kind!r}")
    xs = np.asarray(xs, float)
    vs = np.asarray(vs, float)
    if model.kind != "tabulated":
        return model.lagrangian(xs[:, None], vs[None, :])
    # convex table: invert the monotone map p -> H_p(x, p) row by row
    t = model.table
    ps = t.p0 + t.dp * np.arange(t.shape[1])
    X = np.repeat(xs[:, None], ps.size, axis=1)
    Hp = model.dH_dp(X, np.broadcast_to(ps, X.shape))
    Hp = np.maximum.accumulate(Hp, axis=1)
    pstar = np.empty((xs.size, vs.size))
    for i in range(xs.size):
        pstar[i] = np.interp(vs, Hp[i], ps)
    Xv = np.repeat(xs[:, None], vs.size, axis=1)
    return pstar * vs[None, :] - model.H(Xv, pstar)


class LaxOleinikOperator:
    """One discounted Lax-Oleinik step on a fixed grid.

    Candidate base points sit on the half-grid; u is linearly interpolated
    there.  The cost table depends only on (model, alpha, n, tau, v_max) and
    is built once.
    """

    def __init__(self, model, alpha, n, tau=0.05, v_max=6.0):
        if not 0 < tau <= 0.2:
            raise ConfigError(f"tau must lie in (0, 0.2], got {tau}")
        if n < 16:
            raise ConfigError("grid needs at least 16 cells")
        period = model.period
        h = period / n
        radius = v_max * tau
        if radius >= 0.5 * period:
            raise ConfigError(f"search window v_max*tau={radius:.3g} exceeds half the period")
        self.model, self.alpha, self.n, self.tau, self.v_max = model, float(alpha), n, tau, v_max
        self.period, self.h = period, h
        K = int(math.floor(radius / (0.5 * h) + 1e-12))
        ks = np.arange(-K, K + 1)
        d = 0.5 * h * ks                       # displacement q_j - q'
        self.decay = math.exp(-self.alpha * tau)
        # midpoints live on the quarter grid: index m = 4j - k
        mids_idx = np.arange(4 * n)
        xs = 0.25 * h * mids_idx
        L = _lagrangian_grid(model, xs, d / tau)
        j = np.arange(n)
        mid = (4 * j[:, None] - ks[None, :]) % (4 * n)
        self.cost = tau * math.exp(-0.5 * self.alpha * tau) * L[mid, np.arange(ks.size)[None, :]]
        # base point on the doubled grid: 2j - k
        self.src = (2 * j[:, None] - ks[None, :]) % (2 * n)

    def __call__(self, u):
        u = np.asarray(u, float)
        w = np.empty(2 * self.n)
        w[0::2] = u
        w[1::2] = 0.5 * (u + np.roll(u, -1))
        return np.min(self.decay * w[self.src] + self.cost, axis=1)


def lax_oleinik_step(model, alpha, u: GridFunction, tau=0.05, v_max=6.0):
    op = LaxOleinikOperator(model, alpha, u.n, tau, v_max)
    return GridFunction(op(u.values), u.period)


def _finish(model, alpha, u, iterations, change, solver):
    kinks = detect_kinks(u)
    res = hj_residual(model, alpha, u, kinks)
    return u, SolveReport(iterations, float(change), res, [float(k) for k in kinks], solver)


def solve_discounted_lo(model, alpha, n, tau=0.05, tol=1e-8, v_max=6.0, max_iter=100_000, u0=None):
    """Fixed point of the discounted Lax-Oleinik step, iterated from u = 0."""
    if not tol > 0:
        raise ConfigError("tol must be positive")
    if not alpha > 0:
        raise ConfigError("discount alpha must be positive")
    op = LaxOleinikOperator(model, alpha, n, tau, v_max)
    u = np.zeros(n) if u0 is None else np.asarray(u0, float).copy()
    stop = tol * (1.0 - op.decay)
    change = math.inf
    for it in range(1, max_iter + 1):
        new = op(u)
        change = float(np.max(np.abs(new - u)))
        u = new
        if change <= stop:
            return _finish(model, alpha, GridFunction(u, model.period), it, change, "lax-oleinik")
    raise ConvergenceError(f"Lax-Oleinik did not converge in {max_iter} iterations (change {change:.3g})")


def lipschitz_bound(model, n, p_bound):
    """Per-node max_{|p| <= P} |H_p(x_i, p)| on a p-sample."""
    x = model.period / n * np.arange(n)
    ps = np.linspace(-p_bound, p_bound, 401)
    X, P = np.meshgrid(x, ps, indexing="ij")
    return np.max(np.abs(model.dH_dp(X, P)), axis=1)


class FDScheme:
    """Monotone Lax-Friedrichs numerical Hamiltonian with per-node viscosity."""

    def __init__(self, model, alpha, n, sigma="local", p_bound=4.0):
        self.model, self.alpha, self.n = model, float(alpha), n
        self.h = model.period / n
        self.x = self.h * np.arange(n)
        bound = lipschitz_bound(model, n, p_bound)
        if isinstance(sigma, str):
            if sigma != "local":
                raise ConfigError(f"unknown sigma mode {sigma!r}")
            self.sigma = 1.05 * bound + 1e-12
        else:
            s = float(sigma)
            worst = int(np.argmax(bound))
            if s < bound[worst]:
                raise MonotonicityError(
                    f"sigma={s:.4g} below the Lipschitz bound {bound[worst]:.4g} of H_p "
                    f"(|p| <= {p_bound}) at x={self.x[worst]:.4g}; scheme would not be monotone")
            self.sigma = np.full(n, s)
        self.step = self.h / (2 * self.sigma + self.alpha * self.h)

    def operator(self, u):
        """Residual F_i(u) of the scheme (zero at the discrete solution)."""
        up, um = np.roll(u, -1), np.roll(u, 1)
        dc = (up - um) / (2 * self.h)
        return self.alpha * u + self.model.H(self.x, dc) - self.sigma * (up - 2 * u + um) / (2 * self.h)

    def sweep(self, u):
        return u - self.step * self.operator(u)


def solve_discounted_fd(model, alpha, n, sigma="local", tol=1e-8, p_bound=4.0,
                        max_iter=5_000_000, u0=None):
    """Pseudo-time iteration of the monotone scheme from u = 0."""
    if not tol > 0:
        raise ConfigError("tol must be positive")
    if not alpha > 0:
        raise ConfigError("discount alpha must be positive")
    sch = FDScheme(model, alpha, n, sigma, p_bound)
    u = np.zeros(n) if u0 is None else np.asarray(u0, float).copy()
    # contraction factor of one sweep is 1 - alpha * step
    stop = tol * alpha * float(np.min(sch.step))
    change, growing = math.inf, 0
    for it in range(1, max_iter + 1):
        new = sch.sweep(u)
        c = float(np.max(np.abs(new - u)))
        if not math.isfinite(c):
            raise ConvergenceError(f"finite-difference iteration produced non-finite values at sweep {it}")
        growing = growing + 1 if c > change else 0
        if growing >= 10 and it > 100:
            raise ConvergenceError(f"finite-difference iteration diverging at sweep {it} (change {c:.3g})")
        change, u = c, new
        if change <= stop:
            return _finish(model, alpha, GridFunction(u, model.period), it, change, "finite-difference")
    raise ConvergenceError(f"finite-difference scheme did not converge in {max_iter} sweeps")


# -- one-sided derivatives, kinks, viscosity checks -----------------------------------

def _one_sided(u, h):
    """Richardson-extrapolated one-sided 3-point stencils at every node."""
    r = lambda k: np.roll(u, -k)
    left_h = (3 * u - 4 * r(-1) + r(-2)) / (2 * h)
    left_2h = (3 * u - 4 * r(-2) + r(-4)) / (4 * h)
    right_h = (-3 * u + 4 * r(1) - r(2)) / (2 * h)
    right_2h = (-3 * u + 4 * r(2) - r(4)) / (4 * h)
    dm = (4 * left_h - left_2h) / 3
    dp = (4 * right_h - right_2h) / 3
    disagreement = np.maximum(np.abs(left_h - left_2h), np.abs(right_h - right_2h))
    return dm, dp, disagreement


def one_sided_derivatives_all(u: GridFunction):
    dm, dp, _ = _one_sided(u.values, u.h)
    return dm, dp


def one_sided_derivatives(u: GridFunction, x0, return_flag=False):
    """(u'_-, u'_+) at the grid node x0.

    With ``return_flag`` a third value reports whether the h and 2h stencils
    disagree by more than 10 sqrt(h) (under-resolved kink nearby).
    """
    i = u.index_of(x0)
    dm, dp, dis = _one_sided(u.values, u.h)
    if return_flag:
        return float(dm[i]), float(dp[i]), bool(dis[i] > 10 * math.sqrt(u.h))
    return float(dm[i]), float(dp[i])


def kink_threshold(u: GridFunction, jumps=None):
    if jumps is None:
        dm, dp, _ = _one_sided(u.values, u.h)
        jumps = dp - dm
    return max(10 * math.sqrt(u.h), 20 * float(np.median(np.abs(jumps))))


def _kink_layers(u: GridFunction):
    """Clusters of nodes with a large one-sided jump or concentrated curvature.

    Returns (centre, members) pairs; the centre is the node with the largest
    one-sided jump (largest curvature when the kink is smeared over cells).
    """
    dm, dp, _ = _one_sided(u.values, u.h)
    jump = np.abs(dp - dm)
    v = u.values
    curv = np.abs(np.roll(v, -1) - 2 * v + np.roll(v, 1)) / u.h
    thr = kink_threshold(u, dp - dm)
    thr_c = max(10 * math.sqrt(u.h), 20 * float(np.median(curv)))
    flagged = (jump > thr) | (curv > thr_c)
    if not flagged.any():
        return []
    score = np.where(jump > thr, jump, 0.0) + 1e-9 * curv
    if flagged.all():
        return [(int(np.argmax(score)), list(range(u.n)))]
    start = int(np.argmin(flagged))
    order = (start + np.arange(u.n)) % u.n
    layers, run = [], []
    for i in list(order) + [order[0]]:
        if flagged[i]:
            run.append(int(i))
        elif run:
            layers.append((max(run, key=lambda k: score[k]), run))
            run = []
    layers.sort()
    return layers


def detect_kinks(u: GridFunction, return_index=False):
    """Kink nodes, one per cluster of flagged nodes."""
    idx = [c for c, _ in _kink_layers(u)]
    return idx if return_index else [float(u.x[i]) for i in idx]


def _excluded_mask(n, layers, width=2):
    mask = np.zeros(n, bool)
    for _, members in layers:
        for k in members:
            for d in range(-width, width + 1):
                mask[(k + d) % n] = True
    return mask


def hj_residual(model, alpha, u: GridFunction, kinks=None):
    """sup |alpha u + H(x, D_c u)| over nodes away from kinks."""
    layers = _kink_layers(u)
    if kinks is not None:
        layers = layers + [(u.index_of(k), [u.index_of(k)]) for k in kinks]
    r = np.abs(alpha * u.values + model.H(u.x, u.central_difference()))
    keep = ~_excluded_mask(u.n, layers)
    return float(np.max(r[keep])) if keep.any() else 0.0


@dataclass
class ViscosityReport:
    passed: bool
    tol: float
    kinks: list
    worst_smooth: float
    worst_super: float          # max G over super-differentials at downward kinks
    worst_sub: float            # -min G over sub-differentials at upward kinks
    witnesses: list = field(default_factory=list)   # (x, p, G) of violations

    def as_dict(self):
        return {"passed": self.passed, "tol": self.tol, "kinks": self.kinks,
                "worst_smooth": self.worst_smooth, "worst_super": self.worst_super,
                "worst_sub": self.worst_sub,
                "witnesses": [list(map(float, w)) for w in self.witnesses]}


def check_viscosity(u: GridFunction, G: Callable, tol, n_p=257, exclude=2):
    """Test the viscosity inequalities for G(x, p, u) = 0 on the grid.

    Smooth nodes need |G| <= tol; at a downward kink every p in
    [u'_+, u'_-] needs G <= tol; at an upward kink every p in [u'_-, u'_+]
    needs G >= -tol.  Nodes within ``exclude`` cells of a kink are skipped.
    """
    dm, dp, _ = _one_sided(u.values, u.h)
    layers = _kink_layers(u)
    kidx = [c for c, _ in layers]
    skip = _excluded_mask(u.n, layers, exclude)
    x, vals = u.x, u.values
    witnesses = []
    g = np.abs(np.asarray(G(x, u.central_difference(), vals), float))
    smooth = ~skip
    worst_smooth = float(g[smooth].max()) if smooth.any() else 0.0
    for i in np.nonzero(smooth & (g > tol))[0]:
        witnesses.append((x[i], u.central_difference()[i], g[i]))
    worst_super, worst_sub = -math.inf, -math.inf
    for i in kidx:
        lo, hi = sorted((dm[i], dp[i]))
        ps = np.linspace(lo, hi, n_p)
        gv = np.asarray(G(np.full(n_p, x[i]), ps, np.full(n_p, vals[i])), float)
        if dm[i] > dp[i]:
            j = int(np.argmax(gv))
            worst_super = max(worst_super, float(gv[j]))
            if gv[j] > tol:
                witnesses.append((x[i], ps[j], gv[j]))
        else:
            j = int(np.argmin(gv))
            worst_sub = max(worst_sub, float(-gv[j]))
            if gv[j] < -tol:
                witnesses.append((x[i], ps[j], gv[j]))
    worst_super = worst_super if math.isfinite(worst_super) else 0.0
    worst_sub = worst_sub if math.isfinite(worst_sub) else 0.0
    passed = worst_smooth <= tol and worst_super <= tol and worst_sub <= tol
    witnesses.sort(key=lambda w: -abs(w[2]))
    return ViscosityReport(passed, float(tol), [float(x[i]) for i in kidx], worst_smooth,
                           worst_super, worst_sub, witnesses)


def hj_operator(model, alpha):
    """G(x, p, u) = alpha u + H(x, p)."""
    return lambda x, p, u: alpha * np.asarray(u) + model.H(x, p)


# -- vanishing discount ---------------------------------------------------------------

def critical_value_estimate(model, n=512, p_bound=4.0):
    """max_x min_p H(x, p) on a grid (zero for the normalised appendix pendulum)."""
    x = model.period / n * np.arange(n)
    if model.kind in ("pendulum", "appendix_pendulum", "constant_potential"):
        return float(np.max(model.H(x, 0.0 * x)))
    ps = np.linspace(-p_bound, p_bound, 801)
    X, P = np.meshgrid(x, ps, indexing="ij")
    return float(np.max(np.min(model.H(X, P), axis=1)))


@dataclass
class VanishingDiscountResult:
    alphas: list
    solutions: list
    reports: list
    gaps: list                  # gaps[k] = ||u_{alpha_k} - u_{alpha_{k+1}}||

    def __iter__(self):
        for k, a in enumerate(self.alphas):
            yield a, self.solutions[k], (self.gaps[k] if k < len(self.gaps) else None)


def vanishing_discount_driver(model, alphas: Sequence[float], n, solver="lo", guard=0.05, **kw):
    alphas = [float(a) for a in alphas]
    if len(alphas) < 3:
        raise ConfigError("need at least three discount values")
    if any(b >= a for a, b in zip(alphas, alphas[1:])) or alphas[-1] <= 0:
        raise ConfigError("discount values must be positive and strictly descending")
    crit = critical_value_estimate(model)
    if abs(crit) > guard:
        raise ConfigError(f"critical value max_x min_p H = {crit:.4g} is not normalised to 0 "
                          f"(|.| > {guard}); the vanishing-discount limit is not meaningful")
    sols, reps = [], []
    for a in alphas:
        try:
            if solver == "lo":
                u, rep = solve_discounted_lo(model, a, n, **kw)
            elif solver == "fd":
                u, rep = solve_discounted_fd(model, a, n, **kw)
            else:
                raise ConfigError(f"unknown solver {solver!r}")
        except ConvergenceError as exc:
            raise ConvergenceError(f"solve failed at alpha={a}: {exc}") from exc
        sols.append(u)
        reps.append(rep)
    gaps = [sols[k].sup_distance(sols[k + 1]) for k in range(len(sols) - 1)]
    return VanishingDiscountResult(alphas, sols, reps, gaps)


# -- varying contractions ---------------------------------------------------------------

@dataclass
class ContractionResult:
    limit: np.ndarray
    iterations: int
    iterates: Optional[list]


def iterate_varying_contractions(T, x0, d=None, tol=1e-12, cap=100_000, record=False):
    """x_n = T_n(x_{n-1}), stopping when d(x_n, x_{n-1}) < tol.

    ``T`` is a sequence of maps or a callable k -> T_k (k = 1, 2, ...).
    A finite sequence is extended by its last map.
    """
    if d is None:
        d = lambda a, b: float(np.linalg.norm(np.asarray(a) - np.asarray(b)))
    if callable(T) and not isinstance(T, (list, tuple)):
        get = T
    else:
        seq = list(T)
        if not seq:
            raise ConfigError("empty map sequence")
        get = lambda k: seq[min(k, len(seq)) - 1]
    x = x0
    hist = [x0] if record else None
    for k in range(1, cap + 1):
        nx = get(k)(x)
        step = d(nx, x)
        x = nx
        if record:
            hist.append(x)
        if step < tol:
            return ContractionResult(np.asarray(x), k, hist)
    raise ConvergenceError(f"no convergence within {cap} compositions (last step {step:.3g})")


def lo_contraction_violations(model, alphas, pairs, n, rng, tau=0.05, slack=1e-12):
    """Random pairs (u1, u2): count cases with ||T u1 - T u2|| > e^{-alpha tau} ||u1 - u2|| + slack."""
    bad, worst = 0, 0.0
    for a in alphas:
        T = LaxOleinikOperator(model, a, n, tau=tau)
        k = math.exp(-a * tau)
        for _ in range(pairs):
            scale = rng.uniform(0.1, 10.0)
            u1 = rng.normal(0.0, scale, n)
            u2 = u1 + rng.normal(0.0, rng.uniform(1e-3, 1.0), n)
            lhs = float(np.max(np.abs(T(u1) - T(u2))))
            rhs = float(np.max(np.abs(u1 - u2)))
            worst = max(worst, lhs / rhs)
            bad += lhs > k * rhs + slack
    return bad, worst


def random_affine_sequence(rng, dim=4, lam=0.8, rho=0.7):
    """T_k(x) = A_k x + b_k with ||A_k||_2 <= lam and offsets converging like rho^k; returns (T, x*)."""
    A = rng.normal(size=(dim, dim))
    A *= 0.5 * lam / np.linalg.norm(A, 2)
    b = rng.normal(size=dim)
    E = rng.normal(size=(dim, dim))
    E *= 0.5 * lam / np.linalg.norm(E, 2)
    e = rng.normal(size=dim)

    def T(k):
        w = rho ** k
        Ak, bk = A + w * E, b + w * e
        return lambda x: Ak @ x + bk

    return T, np.linalg.solve(np.eye(dim) - A, b)


def affine_sequence_errors(rng, count=1000, dim=4, tol=1e-13):
    """Distance from the composed limit to the limit map's fixed point, per random sequence."""
    errs = np.empty(count)
    for i in range(count):
        T, xs = random_affine_sequence(rng, dim, lam=rng.uniform(0.3, 0.95), rho=rng.uniform(0.2, 0.9))
        res = iterate_varying_contractions(T, rng.normal(size=dim) * 10, tol=tol)
        errs[i] = np.linalg.norm(res.limit - xs)
    return errs
