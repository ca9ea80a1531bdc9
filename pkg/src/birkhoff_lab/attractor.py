"""Grid approximations of the maximal invariant set C0 and the Birkhoff attractor C1."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import ConfigError, DegenerateDomainError, DomainNotAbsorbingError

_FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class Domain:
    """Cell geometry of T^1 x [p_min, p_max]; row 0 is the bottom (p_min) row."""

    n_theta: int
    n_p: int
    p_min: float
    p_max: float
    period: float = 2 * math.pi

    def __post_init__(self):
        if self.n_theta < 64 or self.n_p < 64:
            raise ConfigError("bitmap dimensions must be at least 64")
        if not self.p_min < self.p_max:
            raise ConfigError("need p_min < p_max")

    @property
    def shape(self):
        return (self.n_p, self.n_theta)

    @property
    def dtheta(self):
        return self.period / self.n_theta

    @property
    def dp(self):
        return (self.p_max - self.p_min) / self.n_p

    def theta_centers(self):
        return (np.arange(self.n_theta) + 0.5) * self.dtheta

    def p_centers(self):
        return self.p_min + (np.arange(self.n_p) + 0.5) * self.dp

    def cell_of(self, theta, p):
        """(row, col) indices; rows outside the strip are returned unclipped."""
        col = np.floor(np.mod(theta, self.period) / self.dtheta).astype(int) % self.n_theta
        row = np.floor((np.asarray(p) - self.p_min) / self.dp).astype(int)
        return row, col

    def as_dict(self):
        return {"n_theta": self.n_theta, "n_p": self.n_p, "p_min": self.p_min,
                "p_max": self.p_max, "period": self.period}


@dataclass(frozen=True, eq=False)
class AnnulusBitmap:
    bits: np.ndarray
    domain: Domain
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.shape != self.domain.shape:
            raise ConfigError(f"bitmap shape {b.shape} does not match domain {self.domain.shape}")
        object.__setattr__(self, "bits", b)

    def _new(self, bits, **meta):
        return AnnulusBitmap(bits, self.domain, meta)

    def __and__(self, o):
        return self._new(self.bits & o.bits)

    def __or__(self, o):
        return self._new(self.bits | o.bits)

    def __sub__(self, o):
        return self._new(self.bits & ~o.bits)

    def __eq__(self, o):
        return isinstance(o, AnnulusBitmap) and self.domain == o.domain and np.array_equal(self.bits, o.bits)

    def __hash__(self):
        return hash((self.domain, self.bits.tobytes()))

    def count(self):
        return int(self.bits.sum())

    def is_empty(self):
        return not self.bits.any()

    def dilate(self, r=1):
        return self._new(_dilate(self.bits, r))

    def issubset(self, o):
        return not np.any(self.bits & ~o.bits)

    def points(self):
        rows, cols = np.nonzero(self.bits)
        d = self.domain
        return np.column_stack([(cols + 0.5) * d.dtheta, d.p_min + (rows + 0.5) * d.dp])

    # -- serialisation
    def to_pbm(self, path, sidecar=True):
        from .io import write_json, write_pbm
        write_pbm(path, self.bits[::-1])        # top row of the image is p_max
        if sidecar:
            write_json(str(path) + ".json", {"domain": self.domain.as_dict(), "count": self.count(),
                                             "meta": self.meta})

    @classmethod
    def from_pbm(cls, path):
        from .io import read_pbm
        info = json.loads(Path(str(path) + ".json").read_text())
        return cls(read_pbm(path)[::-1], Domain(**info["domain"]), info.get("meta", {}))

    def to_csv(self, path):
        from .io import write_csv
        pts = self.points()
        write_csv(path, ["theta", "p"], [pts[:, 0], pts[:, 1]])


# -- periodic morphology ---------------------------------------------------------

def _dilate(bits, r=1):
    if r <= 0:
        return bits.copy()
    w = bits.shape[1]
    pad = np.pad(bits, ((0, 0), (r, r)), mode="wrap") if r < w else np.tile(bits, (1, 3))
    out = ndimage.binary_dilation(pad, structure=np.ones((2 * r + 1, 2 * r + 1), bool))
    return out[:, r:r + w] if r < w else out[:, w:2 * w]


def periodic_label(mask):
    """4-connected component labels of ``mask`` with columns wrapping around."""
    lab, n = ndimage.label(mask, structure=_FOUR)
    if n == 0:
        return lab, 0
    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    seam = mask[:, 0] & mask[:, -1]
    for a, b in zip(lab[seam, 0], lab[seam, -1]):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(n + 1)])
    uniq, relab = np.unique(roots, return_inverse=True)
    return relab[lab], len(uniq) - 1


def complement_components(bits):
    """(U_plus, U_minus): complement cells 4-connected to the top / bottom row."""
    lab, _ = periodic_label(~bits)
    top = np.setdiff1d(np.unique(lab[-1]), [0])
    bot = np.setdiff1d(np.unique(lab[0]), [0])
    return np.isin(lab, top) & (lab > 0), np.isin(lab, bot) & (lab > 0)


def separates(bits):
    """True when no 4-path of complement cells joins the bottom row to the top row."""
    up, down = complement_components(np.asarray(bits, bool))
    return not np.any(up & down)


# -- C0 / C1 --------------------------------------------------------------------------

def check_absorbing(fmap, domain, n_samples=256):
    """Forward images of boundary cell centres must land strictly inside the strip."""
    th = np.linspace(0.0, domain.period, n_samples, endpoint=False)
    for p0, name in ((domain.p_max - 0.5 * domain.dp, "top"), (domain.p_min + 0.5 * domain.dp, "bottom")):
        _, p1 = fmap(th, np.full_like(th, p0))
        bad = ~((p1 > domain.p_min) & (p1 < domain.p_max))
        if bad.any():
            i = int(np.argmax(bad))
            raise DomainNotAbsorbingError(
                f"{name} boundary point ({th[i]:.4g}, {p0:.4g}) maps to p={p1[i]:.4g}, "
                f"outside ({domain.p_min}, {domain.p_max})")


def escape_labels(fmap, domain, n_max=60, chunk=1 << 20):
    """Backward escape side per cell centre: +1 top, -1 bottom, 0 survived ``n_max`` preimages."""
    th = domain.theta_centers()
    pc = domain.p_centers()
    Q = np.broadcast_to(th[None, :], domain.shape).ravel()
    P = np.broadcast_to(pc[:, None], domain.shape).ravel()
    labels = np.zeros(Q.size, np.int8)
    box = (domain.p_min, domain.p_max)
    for s in range(0, Q.size, chunk):
        idx = np.arange(s, min(s + chunk, Q.size))
        q, p = Q[idx].copy(), P[idx].copy()
        for _ in range(n_max):
            if idx.size == 0:
                break
            q, p, side = fmap.flow(q, p, -1.0, box)
            bad = ~(np.isfinite(q) & np.isfinite(p))
            side = np.where(bad & (side == 0), np.where(p < 0, -1, 1), side).astype(np.int8)
            out = side != 0
            labels[idx[out]] = side[out]
            keep = ~out
            idx, q, p = idx[keep], q[keep], p[keep]
    return labels.reshape(domain.shape)


def c0_from_labels(labels):
    """Survivors plus the top-escaping cells 4-adjacent to a bottom-escaping cell."""
    down = labels == -1
    near_down = down.copy()
    near_down[1:] |= down[:-1]
    near_down[:-1] |= down[1:]
    near_down |= np.roll(down, 1, axis=1) | np.roll(down, -1, axis=1)
    return (labels == 0) | ((labels == 1) & near_down)


def compute_C0(fmap, domain: Domain, n_max=60, check=True):
    if n_max < 1:
        raise ConfigError("n_max must be >= 1")
    if check:
        check_absorbing(fmap, domain)
    labels = escape_labels(fmap, domain, n_max)
    bm = AnnulusBitmap(c0_from_labels(labels), domain,
                       {"n_max": n_max, "survivors": int((labels == 0).sum()),
                        "resolution": [domain.dtheta, domain.dp]})
    object.__setattr__(bm, "labels", labels)
    return bm


def compute_C1(C0: AnnulusBitmap, r=1, use_labels=True):
    """Cells of C0 whose radius-r neighbourhood meets both complementary components.

    Without escape labels the components are 4-connected flood fills of the
    complement from the top and bottom rows.  When C0 carries backward escape
    labels, a cell belongs to U+ (U-) iff its backward orbit leaves through
    the top (bottom); flood fill would lose spiral tongues thinner than the
    raster near a focus.
    """
    labels = getattr(C0, "labels", None)
    if use_labels and labels is not None:
        up, down = labels == 1, labels == -1
    else:
        up, down = complement_components(C0.bits)
    if not up.any() or not down.any():
        raise DegenerateDomainError("complement of C0 does not reach both boundary rows")
    bits = C0.bits & _dilate(up, r) & _dilate(down, r)
    return AnnulusBitmap(bits, C0.domain, dict(C0.meta, r=r))


# -- distances ------------------------------------------------------------------------

def _edt_to(bits, sampling):
    """Distance from every cell to the nearest set cell, periodic in theta."""
    w = bits.shape[1]
    pad = w // 2 + 1
    big = np.pad(~bits, ((0, 0), (pad, pad)), mode="wrap")
    d = ndimage.distance_transform_edt(big, sampling=sampling)
    return d[:, pad:pad + w]


def _as_bits(x):
    return x.bits if isinstance(x, AnnulusBitmap) else np.asarray(x, bool)


def directed_hausdorff(A, B, units="phys"):
    """sup_{a in A} d(a, B) for bitmaps on the same domain."""
    a, b = _as_bits(A), _as_bits(B)
    if not a.any() or not b.any():
        raise ConfigError("hausdorff distance needs non-empty sets")
    dom = A.domain if isinstance(A, AnnulusBitmap) else B.domain if isinstance(B, AnnulusBitmap) else None
    sampling = (1.0, 1.0) if units == "cells" or dom is None else (dom.dp, dom.dtheta)
    return float(_edt_to(b, sampling)[a].max())


def hausdorff(A, B, units="phys", period=2 * math.pi):
    """Symmetric Hausdorff distance; bitmaps or (N, 2) point arrays (theta, p)."""
    if isinstance(A, AnnulusBitmap) or isinstance(B, AnnulusBitmap) or np.asarray(A).dtype == bool:
        return max(directed_hausdorff(A, B, units), directed_hausdorff(B, A, units))
    return max(directed_hausdorff_points(A, B, period), directed_hausdorff_points(B, A, period))


def directed_hausdorff_points(A, B, period=2 * math.pi):
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    if A.size == 0 or B.size == 0:
        raise ConfigError("hausdorff distance needs non-empty sets")
    span = np.ptp(np.concatenate([A[:, 1], B[:, 1]]))
    box = [period, 4 * span + 1.0]
    shift = min(A[:, 1].min(), B[:, 1].min())
    wrap = lambda X: np.column_stack([np.mod(X[:, 0], period), X[:, 1] - shift])
    d, _ = cKDTree(wrap(B), boxsize=box).query(wrap(A))
    return float(d.max())


def rasterize_curve(domain: Domain, theta, p, dense=True):
    """Cells visited by a polyline (segments subdivided below the cell size)."""
    theta = np.asarray(theta, float)
    p = np.asarray(p, float)
    if dense and theta.size > 1:
        seg = np.maximum(np.abs(np.diff(theta)) / domain.dtheta, np.abs(np.diff(p)) / domain.dp)
        k = np.maximum(1, np.ceil(4 * seg).astype(int))
        s = np.concatenate([[0.0], np.cumsum(k)])
        u = np.arange(int(s[-1]) + 1)
        theta = np.interp(u, s, theta)
        p = np.interp(u, s, p)
    row, col = domain.cell_of(theta, p)
    ok = (row >= 0) & (row < domain.n_p)
    bits = np.zeros(domain.shape, bool)
    bits[row[ok], col[ok]] = True
    return AnnulusBitmap(bits, domain)


@dataclass
class GraphCheck:
    verdict: bool
    max_offset: float          # cells
    worst_point: tuple
    n_points: int
    tol_cells: float

    def as_dict(self):
        return {"verdict": self.verdict, "max_offset_cells": self.max_offset,
                "worst_point": list(map(float, self.worst_point)), "n_points": self.n_points,
                "tol_cells": self.tol_cells}


def graph_points(u):
    """Points (x, u') of the pseudograph: central differences off kinks, both one-sided values on them."""
    from .weakkam import _kink_layers, one_sided_derivatives_all

    dm, dp = one_sided_derivatives_all(u)
    dc = u.central_difference()
    keep = np.ones(u.n, bool)
    xs, ps = [], []
    for c, members in _kink_layers(u):
        keep[members] = False
        xs += [u.x[c], u.x[c]]
        ps += [dm[c], dp[c]]
    return np.concatenate([u.x[keep], xs]), np.concatenate([dc[keep], ps])


def check_graph_in_attractor(u, C1: AnnulusBitmap, tol_cells=3.0):
    dom = C1.domain
    if abs(u.period - dom.period) > 1e-12:
        raise ConfigError("grid function and bitmap have different periods")
    if C1.is_empty():
        raise ConfigError("empty attractor bitmap")
    x, p = graph_points(u)
    # continuous cell coordinates; distance to the nearest C1 cell centre
    cx = np.mod(x, dom.period) / dom.dtheta - 0.5
    cy = (p - dom.p_min) / dom.dp - 0.5
    rows, cols = np.nonzero(C1.bits)
    off = 1e6   # the tree needs a box in p as well; shift far from its edges
    tree = cKDTree(np.column_stack([cols, rows + off]).astype(float), boxsize=[dom.n_theta, 4 * off])
    d, _ = tree.query(np.column_stack([np.mod(cx, dom.n_theta), cy + off]))
    j = int(np.argmax(d))
    worst = float(d[j])
    return GraphCheck(worst <= tol_cells, worst, (float(x[j]), float(p[j])), int(x.size), float(tol_cells))


def heteroclinic_reference(model, domain: Domain, stop_radius=1e-3):
    """Raster of both heteroclinic branches plus the two equilibria (pendulum family)."""
    from .flow import shoot_heteroclinic
    bits = np.zeros(domain.shape, bool)
    for side in ("left", "right"):
        c = shoot_heteroclinic(model, side, stop_radius=stop_radius)
        bits |= rasterize_curve(domain, c.q, c.p).bits
    for q0 in model.equilibria():
        bits |= rasterize_curve(domain, np.array([q0]), np.array([0.0])).bits
    return AnnulusBitmap(bits, domain)
