"""Serialisation: CSV with fixed 17-digit floats, JSON, PBM bitmaps, SVG plots."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def fmt(x):
    """Deterministic float formatting (17 significant digits)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_csv(path, header, columns):
    cols = [np.asarray(c).ravel() for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(fmt(c[i]) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, data.reshape(-1, len(header))


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_canon(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(fmt(x)) if math.isfinite(x) else fmt(x)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_canon(obj), indent=2, sort_keys=True) + "\n")


# -- PBM (P4) -----------------------------------------------------------------

def write_pbm(path, bits):
    """Write a boolean array (rows = p from top, cols = theta) as binary PBM."""
    bits = np.asarray(bits, dtype=bool)
    h, w = bits.shape
    packed = np.packbits(bits, axis=1)
    with open(path, "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode())
        fh.write(packed.tobytes())


def read_pbm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 2)
    if parts[0].strip() != b"P4":
        raise ValueError("not a P4 bitmap")
    w, h = map(int, parts[1].split())
    packed = np.frombuffer(parts[2], dtype=np.uint8).reshape(h, -1)
    return np.unpackbits(packed, axis=1)[:, :w].astype(bool)


# -- tabulated Hamiltonians ------------------------------------------------------

def write_table_csv(path, model):
    t = model.table
    nx, npp = t.shape
    lines = ["nx,np,x0,p0,dx,dp", ",".join([str(nx), str(npp), fmt(t.x0), fmt(t.p0), fmt(t.dx), fmt(t.dp)])]
    for row in t.values:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_table_csv(path, alpha=0.0):
    from .models import tabulated

    lines = Path(path).read_text().strip().splitlines()
    nx, npp = (int(v) for v in lines[1].split(",")[:2])
    x0, p0, dx, dp = (float(v) for v in lines[1].split(",")[2:])
    values = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:2 + nx]])
    if values.shape != (nx, npp):
        raise ValueError(f"table body has shape {values.shape}, header says {(nx, npp)}")
    return tabulated(values, x0, p0, dx, dp, alpha=alpha)


# -- minimal SVG plotter -----------------------------------------------------------

def write_svg(path, series, xlabel="", ylabel="", width=640, height=480, title=""):
    """Polyline plot. ``series`` is a list of (x, y, colour) triples."""
    xs = np.concatenate([np.asarray(s[0], float) for s in series])
    ys = np.concatenate([np.asarray(s[1], float) for s in series])
    ok = np.isfinite(xs) & np.isfinite(ys)
    x0, x1 = xs[ok].min(), xs[ok].max()
    y0, y1 = ys[ok].min(), ys[ok].max()
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    m = 50

    def tx(x):
        return m + (x - x0) / (x1 - x0) * (width - 2 * m)

    def ty(y):
        return height - m - (y - y0) / (y1 - y0) * (height - 2 * m)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">{xlabel} [{x0:.3g}, {x1:.3g}]</text>',
           f'<text x="12" y="{height / 2}" transform="rotate(-90 12 {height / 2})" '
           f'text-anchor="middle">{ylabel} [{y0:.3g}, {y1:.3g}]</text>']
    if title:
        out.append(f'<text x="{width / 2}" y="20" text-anchor="middle">{title}</text>')
    for x, y, colour in series:
        pts = " ".join(f"{tx(a):.2f},{ty(b):.2f}" for a, b in zip(x, y) if np.isfinite(a) and np.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1" points="{pts}"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
