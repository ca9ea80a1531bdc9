"""Config-driven experiment runner.

Usage: ``birkhoff-lab EXPERIMENT [VARIANT] [--config FILE] [--out DIR] [--workers N] [--seed S]``

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import attractor as at
from . import counterexamples as cx
from . import gammagap as gg
from . import io
from . import weakkam as wk
from .errors import BirkhoffLabError, ConfigError
from .flow import shoot_heteroclinic, time_map
from .models import from_spec

log = logging.getLogger("birkhoff_lab")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_APP = {"kind": "appendix_pendulum", "alpha": 0.5}
_PEND = {"kind": "pendulum", "alpha": 0.5}
_GRID = {"n_theta": 512, "n_p": 512, "p_min": -3.0, "p_max": 3.0, "n_max": 60, "dt": 0.02}

DEFAULTS = {
    "pendulum-attractor": {"model": _PEND, "grid": _GRID, "tol_cells": 3.0},
    "solve-hj": {"model": _APP, "n": 2048, "solver": {"tau": 0.05, "tol": 1e-8, "sigma": "local", "v_max": 6.0}},
    "inclusion-check": {"model": {**_APP, "shift": 0.5}, "n": 2048, "tau": 0.01,
                        "grid": {**_GRID, "n_theta": 2048, "n_p": 2048}, "tol_cells": 3.0},
    "spiral-gap": {"pairs": [[0.1, 0.01]], "dt": 1e-3, "n_resample": 4096},
    "limit-alpha": {"model": _APP, "alphas": [0.8, 0.4, 0.2, 0.1], "n": 512, "solver": "lo", "tau": 0.05},
    "counterexample-q1": {"model": {**_APP, "shift": 0.5}, "height": 5.0, "n": 2048, "tau": 0.01,
                          "grid": {**_GRID, "n_theta": 256, "n_p": 256}},
    "counterexample-q2": {"model": {**_APP, "shift": 0.5}, "height": 5.0, "n": 1024,
                          "grid": {**_GRID, "n_theta": 1024, "n_p": 1024}, "tol_cells": 3.0, "min_offset": 10.0},
    "counterexample-q3": {"q3": {}, "grid": {**_GRID, "n_theta": 256, "n_p": 256}},
    "property-suite": {"pairs": 100, "sequences": 1000, "alphas": [0.1, 0.5, 1.0], "n": 256},
}
COMMON = {"experiment", "seed", "workers", "out"}


# -- config --------------------------------------------------------------------------------

def _merge(base, over, path, errors):
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{path}{k}"
        if k not in base:
            errors.append(key)
        elif isinstance(base[k], dict) and base[k] and isinstance(v, dict) and path + k != "model":
            out[k] = _merge(base[k], v, key + ".", errors)
        else:
            out[k] = v
    return out


def resolve_config(name, user=None):
    """Defaults for ``name`` overlaid with ``user``; every unknown key is reported at once."""
    if name not in DEFAULTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(DEFAULTS)}")
    user = dict(user or {})
    user.pop("experiment", None)
    common = {k: user.pop(k) for k in list(user) if k in COMMON}
    errors = []
    cfg = _merge(DEFAULTS[name], user, "", errors)
    if errors:
        raise ConfigError("unknown config keys: " + ", ".join(errors))
    cfg.update({"seed": 0, "workers": 1, **common})
    return cfg


def load_config(path):
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def _domain(g, period):
    return at.Domain(int(g["n_theta"]), int(g["n_p"]), float(g["p_min"]), float(g["p_max"]), period)


# -- experiments ---------------------------------------------------------------------------
# each returns (checks: dict name -> bool, report: dict) and writes artifacts to ``out``

def _model(cfg):
    return from_spec(cfg["model"])


def exp_pendulum_attractor(cfg, out):
    m = _model(cfg)
    g = cfg["grid"]
    dom = _domain(g, m.period)
    t0 = time.perf_counter()
    C0 = at.compute_C0(time_map(m, 1.0, g["dt"]), dom, int(g["n_max"]))
    C1 = at.compute_C1(C0)
    C0.to_pbm(out / "C0.pbm")
    C1.to_pbm(out / "C1.pbm")
    C1.to_csv(out / "C1.csv")
    log.info("attractor computed in %.1f s", time.perf_counter() - t0)
    rep = {"C0_cells": C0.count(), "C1_cells": C1.count(), "separates": at.separates(C1.bits)}
    checks = {"separates": rep["separates"]}
    if m.is_pendulum_family:
        ref = at.heteroclinic_reference(m, dom)
        d = at.hausdorff(C1, ref, units="cells")
        rep["hausdorff_cells"] = d
        checks["hausdorff"] = d <= cfg["tol_cells"]
        series = []
        for side, colour in (("left", "#c33"), ("right", "#33c")):
            c = shoot_heteroclinic(m, side)
            c.to_csv(out / f"branch_{side}.csv")
            series.append((np.mod(c.q, m.period), c.p, colour))
        pts = C1.points()
        series.insert(0, (pts[:, 0], pts[:, 1], "#999"))
        io.write_svg(out / "attractor.svg", series, "theta", "p", title="C1 and heteroclinic branches")
    return checks, rep


def exp_solve_hj(cfg, out, variant):
    m = _model(cfg)
    s = cfg["solver"]
    n = int(cfg["n"])
    if variant == "lo":
        u, rep = wk.solve_discounted_lo(m, m.alpha, n, tau=s["tau"], tol=s["tol"], v_max=s["v_max"])
    elif variant == "fd":
        u, rep = wk.solve_discounted_fd(m, m.alpha, n, sigma=s["sigma"], tol=s["tol"])
    else:
        raise ConfigError("solve-hj needs a variant: lo or fd")
    u.to_csv(out / "u.csv")
    io.write_svg(out / "u.svg", [(u.x, u.values, "#33c")], "x", "u")
    r = rep.as_dict()
    r["threshold"] = 5.0 / math.sqrt(n)
    return {"residual": rep.residual <= r["threshold"]}, r


def exp_inclusion_check(cfg, out):
    m = _model(cfg)
    g = cfg["grid"]
    u, rep = wk.solve_discounted_lo(m, m.alpha, int(cfg["n"]), tau=cfg["tau"])
    dom = _domain(g, m.period)
    C1 = at.compute_C1(at.compute_C0(time_map(m, 1.0, g["dt"]), dom, int(g["n_max"])))
    chk = at.check_graph_in_attractor(u, C1, cfg["tol_cells"])
    u.to_csv(out / "u.csv")
    C1.to_pbm(out / "C1.pbm")
    x, p = at.graph_points(u)
    io.write_csv(out / "graph.csv", ["x", "p"], [x, p])
    pts = C1.points()
    io.write_svg(out / "inclusion.svg", [(pts[:, 0], pts[:, 1], "#999"), (x, p, "#c33")], "theta", "p")
    return {"verdict": chk.verdict}, {**chk.as_dict(), "solver": rep.as_dict()}


def exp_spiral_gap(cfg, out):
    rows = gg.gap_table([tuple(p) for p in cfg["pairs"]], dt=cfg["dt"], n_resample=cfg["n_resample"])
    io.write_csv(out / "gap.csv", gg.GapResult.HEADER, list(zip(*[r.row() for r in rows])))
    checks = {}
    for r in rows:
        tag = f"{r.alpha:g}/{r.beta:g}"
        checks[f"bound_4 {tag}"] = r.area_shoelace >= r.bound_4
        checks[f"within_15pct {tag}"] = abs(r.area_shoelace - r.bound_8) <= 0.15 * r.bound_8
        checks[f"energy_vs_shoelace {tag}"] = abs(r.area_energy - r.area_shoelace) <= 0.02 * abs(r.area_shoelace)
    return checks, {"rows": [dict(zip(gg.GapResult.HEADER, r.row())) for r in rows]}


def exp_limit_alpha(cfg, out):
    m = _model(cfg)
    kw = {"tau": cfg["tau"]} if cfg["solver"] == "lo" else {}
    res = wk.vanishing_discount_driver(m, cfg["alphas"], int(cfg["n"]), solver=cfg["solver"], **kw)
    io.write_csv(out / "gaps.csv", ["alpha", "gap_to_next"], [res.alphas[:-1], res.gaps])
    for a, u, _ in res:
        u.to_csv(out / f"u_alpha_{a:g}.csv")
    dec = all(b < a for a, b in zip(res.gaps, res.gaps[1:]))
    return {"gaps_decreasing": dec}, {"alphas": res.alphas, "gaps": res.gaps}


def exp_q1(cfg, out):
    m = _model(cfg)
    g = cfg["grid"]
    spec = cx.q1_bump_spec(m, cfg["height"])
    H1 = cx.build_perturbed(m, spec)
    u, _ = wk.solve_discounted_lo(m, m.alpha, int(cfg["n"]), tau=cfg["tau"])
    C1 = at.compute_C1(at.compute_C0(time_map(m, 1.0, g["dt"]), _domain(g, m.period), int(g["n_max"])))
    w = cx.q1_violation_witness(u, H1, m.alpha, C1)
    ctrl = cx.q1_violation_witness(u, cx.build_perturbed(m, {**spec, "height": 0.0}), m.alpha, C1)
    checks = {"witness": w.value >= cfg["height"] - 1.0, "control": not ctrl.violated}
    return checks, {"bump": spec, "witness": w.as_dict(), "control": ctrl.as_dict()}


def exp_q2(cfg, out):
    m = _model(cfg)
    g = cfg["grid"]
    H1 = cx.build_perturbed(m, cx.q1_bump_spec(m, cfg["height"]))
    u, _ = wk.solve_discounted_fd(m, m.alpha, int(cfg["n"]), tol=1e-6)
    r = cx.q2_inclusion_breaker(H1, m.alpha, n=int(cfg["n"]), n_theta=g["n_theta"], n_p=g["n_p"],
                                p_range=(g["p_min"], g["p_max"]), n_max=int(g["n_max"]),
                                tol_cells=cfg["tol_cells"], base_u=u)
    checks = {"verdict_false": not r.verdict, "large_offset": r.max_offset > cfg["min_offset"],
              "attractor_band": r.attractor_band_ok}
    return checks, r.as_dict()


def exp_q3(cfg, out):
    spec = cx.Q3Spec(**cfg["q3"])
    g = cfg["grid"]
    model = cx.q3_build(spec)
    r = cx.q3_verify(model, n_bitmap=int(g["n_theta"]), p_range=(g["p_min"], g["p_max"]), n_max=int(g["n_max"]))
    r.bitmaps["closure"].to_pbm(out / "closure.pbm")
    r.bitmaps["C1"].to_pbm(out / "C1.pbm")
    d = r.as_dict()
    checks = {k: bool(v) for k, v in (
        ("lyap", max(r.lyap, r.lyap_table) <= 1e-9), ("cond1", r.cond1_margin > 0),
        ("cond2", r.cond2_margin > 0), ("convex", r.convex), ("invariance", r.invariance <= 1e-3),
        ("closure_connected", not r.closure_disconnects), ("C1_separates", r.c1_disconnects))}
    return checks, d


def exp_property_suite(cfg, out):
    rng = np.random.default_rng(int(cfg["seed"]))
    m = from_spec(_APP)
    bad, worst = wk.lo_contraction_violations(m, cfg["alphas"], int(cfg["pairs"]), int(cfg["n"]), rng)
    errs = wk.affine_sequence_errors(rng, int(cfg["sequences"]))
    rep = {"lo_violations": bad, "lo_worst_ratio": worst, "affine_max_error": float(errs.max())}
    return {"lo_contraction": bad == 0, "affine_limit": rep["affine_max_error"] <= 1e-6}, rep


EXPERIMENTS = {
    "pendulum-attractor": exp_pendulum_attractor,
    "inclusion-check": exp_inclusion_check,
    "spiral-gap": exp_spiral_gap,
    "limit-alpha": exp_limit_alpha,
    "counterexample-q1": exp_q1,
    "counterexample-q2": exp_q2,
    "counterexample-q3": exp_q3,
    "property-suite": exp_property_suite,
}

_VARIANTS = {"solve-hj": ("lo", "fd"), "counterexample": ("q1", "q2", "q3")}


def run(name, variant=None, user_cfg=None, out=None, seed=None, workers=None):
    """Run one experiment; returns (exit code, report). Artifacts land in ``out``."""
    if name in _VARIANTS:
        if variant not in _VARIANTS[name]:
            raise ConfigError(f"{name} needs one of {list(_VARIANTS[name])}, got {variant!r}")
        key = name if name == "solve-hj" else f"{name}-{variant}"
    else:
        if variant is not None:
            raise ConfigError(f"{name} takes no variant")
        key = name
    cfg = resolve_config(key, user_cfg)
    if seed is not None:
        cfg["seed"] = int(seed)
    if workers is not None:
        cfg["workers"] = int(workers)
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be >= 1")
    outdir = Path(out or cfg.get("out") or f"runs/{key}")
    cfg["out"] = str(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    np.random.seed(int(cfg["seed"]) % 2**32)
    body = {k: v for k, v in cfg.items() if k not in COMMON}
    if key == "solve-hj":
        checks, report = exp_solve_hj(body, outdir, variant)
    else:
        if key == "property-suite":
            body["seed"] = cfg["seed"]
        checks, report = EXPERIMENTS[key](body, outdir)
    checks = {k: bool(v) for k, v in checks.items()}
    code = EXIT_OK if all(checks.values()) else EXIT_CHECK
    io.write_json(outdir / "report.json", {"checks": checks, **report})
    artifacts = sorted(p.name for p in outdir.iterdir() if p.name != "manifest.json")
    io.write_json(outdir / "manifest.json", {"experiment": key, "version": __version__, "config": cfg,
                                             "checks": checks, "exit_code": code, "artifacts": artifacts})
    return code, {"checks": checks, **report}


def build_parser():
    ap = argparse.ArgumentParser(prog="birkhoff-lab", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=sorted({k.split("-q")[0] for k in DEFAULTS} | {"solve-hj"}))
    ap.add_argument("variant", nargs="?")
    ap.add_argument("--config", help="YAML experiment config")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        user = load_config(args.config) if args.config else {}
        if "experiment" in user and user["experiment"] != args.experiment:
            raise ConfigError(f"config is for {user['experiment']!r}, not {args.experiment!r}")
        code, report = run(args.experiment, args.variant, user, args.out, args.seed, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BirkhoffLabError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for k, v in report["checks"].items():
        print(f"{'PASS' if v else 'FAIL'}  {k}")
    return code


if __name__ == "__main__":
    sys.exit(main())
