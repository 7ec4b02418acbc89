"""Command-line experiment runner.

Every subcommand turns a configuration (flags, optionally merged over a JSON
config file with the same keys) into a report:

    <out>/report.json   config echo and the list of checks (deterministic bytes)
    <out>/*.csv         tables; columns are listed in each subcommand's --help
    <out>/timing.json   wall-clock seconds (kept apart so report.json is reproducible)

The exit status is 0 when every check passes, 1 when a check fails and 2 for
an invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import sys
import time
from fractions import Fraction

import numpy as np

from . import acceptance as acc
from . import bubbles as bb
from . import geometry as geo
from . import green_mass as gm
from . import pohozaev as ph
from . import radial_solver as rs
from .acceptance import make_check

log = logging.getLogger("hslab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key."""


# -- configuration ------------------------------------------------------------------

DEFAULTS = {
    "n": 4,
    "s": 1.0,
    "manifold": None,
    "a": None,
    "a_grid": None,
    "mu_ladder": None,
    "delta": None,
    "h": None,
    "h_grid": None,
    "tol": None,
    "out": None,
    "seed": 0,
    "threads": 1,
    "criteria": None,
}

COMMANDS = (
    "constants", "bubble-verify", "sphere-moments", "curvature", "solve", "sweep",
    "pohozaev", "pohozaev-asymptotics", "mass", "mass-root", "acceptance",
)


def parse_grid(text, key):
    """``lo:hi:count`` (inclusive linspace) or a comma-separated list."""
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        text = str(text).strip()
        try:
            if text == "":
                vals = []
            elif ":" in text:
                lo, hi, cnt = text.split(":")
                vals = list(np.linspace(float(lo), float(hi), int(cnt)))
            else:
                vals = [float(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {text!r} ({exc})") from None
    if not vals:
        raise ConfigError(f"{key}: empty grid")
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{key}: non-finite entry")
    return [float(v) for v in vals]


def validate(cfg):
    """Normalise and check a merged configuration dict; returns a new dict."""
    cfg = dict(cfg)
    unknown = sorted(set(cfg) - set(DEFAULTS) - {"command"})
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    if cfg.get("command") not in COMMANDS:
        raise ConfigError(f"command: expected one of {', '.join(COMMANDS)}")
    try:
        cfg["n"] = int(cfg["n"])
        cfg["s"] = float(cfg["s"])
        bb.ProblemParams(cfg["n"], cfg["s"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"n/s: {exc}") from None
    for key in ("a_grid", "mu_ladder", "h_grid", "delta"):
        if cfg.get(key) is not None:
            cfg[key] = parse_grid(cfg[key], key)
    for key in ("a", "h", "tol"):
        if cfg.get(key) is not None:
            try:
                cfg[key] = float(cfg[key])
            except (TypeError, ValueError):
                raise ConfigError(f"{key}: not a number: {cfg[key]!r}") from None
    if cfg.get("mu_ladder") is not None and any(m <= 0 for m in cfg["mu_ladder"]):
        raise ConfigError("mu_ladder: scales must be positive")
    if cfg.get("a_grid") is not None and any(np.diff(cfg["a_grid"]) <= 0):
        raise ConfigError("a_grid: must be strictly increasing")
    cfg["seed"] = int(cfg["seed"])
    cfg["threads"] = int(cfg["threads"])
    if cfg["threads"] < 1:
        raise ConfigError("threads: must be >= 1")
    if cfg.get("criteria") is not None:
        crit = [int(v) for v in parse_grid(cfg["criteria"], "criteria")]
        bad = [k for k in crit if k not in acc.CRITERIA]
        if bad:
            raise ConfigError(f"criteria: unknown criterion {bad[0]}")
        cfg["criteria"] = crit
    cfg["model"] = None
    if cfg.get("manifold") is not None:
        try:
            d = geo.load_model(cfg["manifold"])
            cfg["model"] = geo.model_from_dict(d, cfg["n"])
        except (OSError, ValueError, ImportError, AttributeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"manifold: {exc}") from None
        if cfg["model"].n != cfg["n"]:
            raise ConfigError(f"manifold: dimension {cfg['model'].n} differs from n={cfg['n']}")
    return cfg


def _require(cfg, key, why):
    if cfg.get(key) is None:
        raise ConfigError(f"{key}: required {why}")
    return cfg[key]


def _model(cfg, default="sphere"):
    if cfg["model"] is not None:
        return cfg["model"]
    return geo.ManifoldModel.sphere(cfg["n"]) if default == "sphere" else geo.ManifoldModel.torus(cfg["n"])


def _params(cfg):
    return bb.ProblemParams(cfg["n"], cfg["s"])


# -- subcommands ----------------------------------------------------------------------
# each returns (checks, tables, extra) with tables = {name: (columns, rows)}

def cmd_constants(cfg):
    p = _params(cfg)
    b = bb.Bubble(p)
    frac = bb.cns_fraction(p.n, p.s)
    rows = [
        ("two_star_s", bb.critical_exponent(p)),
        ("cns", bb.cns(p)),
        ("mu_s", b.mu_s),
        ("K", b.K),
        ("omega_nm1", b.omega_nm1),
        ("d_n", b.d_n),
    ]
    checks = [
        make_check("cns float vs exact fraction", bb.cns(p), float(frac), 1e-15, note=f"cns = {frac}"),
        make_check("two_star_s", bb.critical_exponent(p), 2 * (p.n - p.s) / (p.n - 2), 1e-15),
        make_check("K from normalisation vs K from mu_s", bb.normalization_scale(p), b.K, 1e-8, mode="rel"),
    ]
    known = {(4, None): Fraction(1, 6), (3, 0.0): Fraction(1, 8), (5, 1.0): Fraction(5, 28)}
    for (n, s), val in known.items():
        if p.n == n and (s is None or p.s == s):
            checks.append(make_check(f"cns({p.n},{p.s:g}) closed value", frac, val, mode="exact"))
    extra = {"cns_fraction": str(frac)}
    return checks, {"constants": (["name", "value"], rows)}, extra


def cmd_bubble_verify(cfg):
    p = _params(cfg)
    checks = acc.bubble_suite((p.n,), (p.s,))
    b = bb.Bubble(p)
    checks.append(make_check("bubble value at centre", float(bb.bubble_eval(b, np.zeros(p.n))), 1.0, 1e-15))
    if p.n >= 5:
        lhs, rhs = bb.rayleigh_ratio_identity(p)
        checks.append(make_check("Rayleigh ratio identity", lhs, rhs, 1e-6, mode="rel"))
        checks.append(make_check("L2 norm squared positive", bb.l2_norm_squared(p), 0.0, mode="gt"))
    r = np.geomspace(1e-3, 1e3, 13)
    rows = [(float(x), float(b.radial(x)), float(b.radial_d1(x)), float(bb.pde_residual(b, x))) for x in r]
    return checks, {"bubble": (["r", "u", "du", "pde_residual"], rows)}, {"mu_s": b.mu_s, "K": b.K}


def cmd_sphere_moments(cfg):
    n = cfg["n"]
    seed = cfg["seed"]
    rows, checks = [], []
    patterns = list(itertools.combinations_with_replacement(range(1, n + 1), 2))
    patterns += list(itertools.combinations_with_replacement(range(1, n + 1), 4))
    worst_q = worst_g = worst_mc = 0.0
    for k, idx in enumerate(patterns):
        exact = geo.sphere_moment2(n, *idx) if len(idx) == 2 else geo.sphere_moment4(n, *idx)
        quad = geo.sphere_moment_quadrature(n, *idx)
        gam = geo.sphere_moment_exact(n, *idx)
        mc, se = geo.sphere_moment_monte_carlo(n, *idx, samples=20000, seed=seed + k)
        rows.append(("-".join(map(str, idx)), exact, quad, gam, mc, se))
        worst_q = max(worst_q, abs(quad - exact))
        worst_g = max(worst_g, abs(gam - exact))
        worst_mc = max(worst_mc, abs(mc - exact) / (se + 1e-300) if se > 0 else abs(mc - exact))
    checks.append(make_check("max |quadrature - closed form|", worst_q, 1e-10, mode="le"))
    checks.append(make_check("max |Gamma formula - closed form|", worst_g, 1e-12, mode="le"))
    checks.append(make_check("max Monte-Carlo deviation in standard errors", worst_mc, 6.0, mode="le"))
    if n == 4:
        checks.append(make_check("(1,1,2,2) on S^3", geo.sphere_moment_quadrature(4, 1, 1, 2, 2), math.pi**2 / 12, 1e-10))
        checks.append(make_check("(1,1,1,1) on S^3", geo.sphere_moment_quadrature(4, 1, 1, 1, 1), math.pi**2 / 4, 1e-10))
    for idx in [(1,), (1, 1, 1)] + ([(1, 2, 3)] if n >= 3 else []):
        checks.append(make_check(f"odd moment {idx}", geo.sphere_moment_quadrature(n, *idx), 0.0, 1e-10))
    cols = ["indices", "closed_form", "quadrature", "gamma_formula", "monte_carlo", "mc_stderr"]
    return checks, {"moments": (cols, rows)}, {}


def cmd_curvature(cfg):
    m = _model(cfg)
    tol = cfg["tol"] or 1e-3
    cs = geo.curvature_identities(m)
    checks = []
    names = ("sum d_ij g_ij", "sum d_bb g_ii", "sum d_k Gamma^k_ii")
    vals = (cs.sum_dij_gij, cs.sum_dbb_gii, cs.sum_dk_gamma)
    for nm, v, t in zip(names, vals, cs.targets):
        checks.append(make_check(nm, v, t, tol))
    checks.append(make_check("(g2)+(g3) consistency", cs.sum_dij_gij + cs.sum_dk_gamma, cs.scal, 2 * tol))
    gam0 = float(np.max(np.abs(geo.christoffel(m, np.zeros(m.n)))))
    checks.append(make_check("Christoffel symbols at the origin", gam0, 1e-8, mode="le"))
    X = np.full(m.n, 0.1 * m.delta / math.sqrt(m.n))
    G = geo.christoffel(m, X)
    checks.append(make_check("Christoffel lower-index symmetry", float(np.max(np.abs(G - np.swapaxes(G, 1, 2)))), 1e-12, mode="le"))
    rows = [(nm, v, t, e) for nm, v, t, e in zip(names, vals, cs.targets, cs.errors)]
    ladder = []
    if m.kind == "torus":
        checks.append(make_check("Cartan residual (flat)", float(geo.cartan_residual(m, X)), 0.0, 1e-14))
    else:
        ratio, r1, r2 = geo.cartan_order(m)
        checks.append(make_check("Cartan residual ratio", ratio, 8.0, 0.2, mode="rel",
                                 note=f"observed order {math.log2(ratio):.3f}" if ratio > 0 else ""))
        for t in np.geomspace(1e-3, 1e-1, 5) * m.delta:
            ladder.append((float(t), float(geo.cartan_residual(m, t * np.ones(m.n) / math.sqrt(m.n)))))
    tables = {"curvature": (["quantity", "value", "target", "error_estimate"], rows)}
    if ladder:
        tables["cartan"] = (["radius", "residual"], ladder)
    return checks, tables, {"model": m.to_dict(), "scal": cs.scal}


def _sphere_problem(cfg):
    m = _model(cfg)
    if m.kind != "sphere":
        raise ConfigError("manifold: the radial solver works on round spheres")
    return rs.RadialProblem(_params(cfg), m), m


def cmd_solve(cfg):
    prob, m = _sphere_problem(cfg)
    tol = cfg["tol"] or 1e-11
    checks, records = [], []
    if cfg["mu_ladder"] is not None:
        for mu in cfg["mu_ladder"]:
            res = rs.solve_for_mu(prob, mu, tol=tol)
            cu, cl = rs.pointwise_bound_check(res)
            rec = res.record()
            rec.update(C_upper=cu, C_lower=cl, gradient_max=rs.gradient_bound_check(res),
                       morse_index=res.extra["morse_index"])
            try:
                rec["green_discrepancy"] = rs.green_profile_check(res, gm.solve_green(m, res.a))
            except ValueError as exc:
                rec["green_discrepancy"] = None
                log.warning("no Green's function at a=%g: %s", res.a, exc)
            records.append(rec)
        cu = [r["C_upper"] for r in records]
        gr = [r["gradient_max"] for r in records]
        checks.append(make_check("C_upper spread (max/min)", max(cu) / min(cu), 2.0, mode="lt"))
        checks.append(make_check("gradient maxima spread (max/min)", max(gr) / min(gr), 2.0, mode="lt"))
        checks.append(make_check("min C_lower", min(r["C_lower"] for r in records), 0.0, mode="gt"))
    else:
        a = _require(cfg, "a", "(or give --mu-ladder)")
        res = rs.minimize(prob.with_a(a), tol=tol)
        cu, cl = rs.pointwise_bound_check(res)
        rec = res.record()
        rec.update(C_upper=cu, C_lower=cl, morse_index=rs.morse_index(prob.with_a(a), res))
        records.append(rec)
        checks.append(make_check("converged", res.converged, mode="true", note=f"residual {res.residual:.3e}"))
        checks.append(make_check("Morse index", rec["morse_index"], 1, mode="exact"))
        checks.append(make_check("C_lower", cl, 0.0, mode="gt"))
        checks.append(make_check("lambda below the Euclidean constant (+ discretisation margin)",
                                 res.lam, bb.best_constant_quadrature(prob.params) * (1 + 1e-4), mode="le"))
    cols = ["a", "lambda", "mu", "argmax_theta", "residual", "C_upper", "C_lower", "morse_index"]
    if cfg["mu_ladder"] is not None:
        cols += ["gradient_max", "green_discrepancy"]
    rows = [tuple(r.get(c) for c in cols) for r in records]
    return checks, {"solve": (cols, rows)}, {}


def cmd_sweep(cfg):
    prob, m = _sphere_problem(cfg)
    grid = _require(cfg, "a_grid", "for a sweep")
    sweep = rs.sweep_threshold(prob, grid, tol=cfg["tol"] or 1e-11, workers=cfg["threads"])
    target = bb.cns(prob.params) * m.scal_x0
    checks = acc.threshold_checks(f"S^{m.n} R={m.radius:g}", sweep, 0.75 * target, target)
    records = sweep.records()
    for rec, res in zip(records, sweep.results):
        rec["C_upper"], rec["C_lower"] = rs.pointwise_bound_check(res)
    cols = ["a", "lambda", "mu", "argmax_theta", "residual", "C_upper", "C_lower"]
    rows = [tuple(r.get(c) for c in cols) for r in records]
    extra = {"a_star": sweep.a_star, "a_star_target": target, "eps_gap": sweep.eps_gap,
             "sensitivity": sweep.sensitivity, "mu_s": sweep.mu_s}
    return checks, {"sweep": (cols, rows)}, extra


def cmd_pohozaev(cfg):
    p = _params(cfg)
    m = _model(cfg, default="torus")
    b = bb.Bubble(p)
    a = cfg["a"] or 0.0
    deltas = cfg["delta"] or [d for d in (0.5, 1.0, 2.0) if m.kind == "torus" or d <= m.delta]
    checks, rows = [], []
    for d in deltas:
        rep = ph.pohozaev_terms(ph.PohozaevInput(p, m, ph.RadialProfile.from_bubble(b), a, b.mu_s, d))
        rows.append((d, rep.B, rep.C, rep.D, rep.D1, rep.D2, rep.D3, rep.D4, rep.volume_flat, rep.identity_residual))
        checks.append(make_check(f"calculus identity B = volume (delta={d:g})", rep.flat_residual, 1e-6, mode="le"))
        assembled = rep.D1 - rep.D2 + 0.5 * (p.n - 2) * (rep.D3 - rep.D4)
        checks.append(make_check(f"D assembly (delta={d:g})", rep.D, assembled, 0.0))
        if m.kind == "torus" and a == 0.0:
            checks.append(make_check(f"|B| flat bubble (delta={d:g})", abs(rep.B), 1e-6, mode="le"))
            checks.append(make_check(f"C flat bubble (delta={d:g})", rep.C, 0.0, 1e-12))
            checks.append(make_check(f"D flat bubble (delta={d:g})", rep.D, 0.0, 1e-12))
    rng = np.random.default_rng(cfg["seed"])
    worst = 0.0
    for _ in range(10):
        prof = acc._random_radial(rng)
        inp = ph.PohozaevInput(p, geo.ManifoldModel.torus(p.n), prof, 0.0, float(rng.uniform(0, 5)), float(rng.uniform(0.3, 2.0)))
        r = ph.pohozaev_terms(inp).flat_residual
        worst = r if not r <= worst else worst
    checks.append(make_check("calculus identity, 10 random profiles", worst, 1e-6, mode="le"))
    cols = ["delta", "B", "C", "D", "D1", "D2", "D3", "D4", "volume_flat", "identity_residual"]
    return checks, {"pohozaev": (cols, rows)}, {"model": m.to_dict()}


def cmd_pohozaev_asymptotics(cfg):
    p = _params(cfg)
    n = p.n
    a = 1.0 if cfg["a"] is None else cfg["a"]
    checks, rows = [], []
    tables = {}
    if n == 3:
        ladder = cfg["mu_ladder"] or [1e-2, 1e-3]
        delta = (cfg["delta"] or [0.5])[0]
        mx, ratios = ph.n3_bound_check(p, a, ladder, delta=delta)
        _, half = ph.n3_bound_check(p, a, ladder, delta=delta / 2)
        checks.append(make_check("|C+D|/(delta mu) bounded along the ladder", max(ratios) / min(ratios), 2.0, mode="lt",
                                 note=f"ratios {ratios}"))
        tables["n3"] = (["mu", "ratio_delta", "ratio_half_delta"], list(zip(ladder, ratios, half)))
        return checks, tables, {"max_ratio": mx}
    default = np.geomspace(1e-2, 1e-4, 5) if n >= 5 else np.geomspace(1e-2, 1e-6, 5)
    ladder = cfg["mu_ladder"] or list(default)
    slope, err, mus, vals = ph.calpha_asymptotic(p, a, ladder, return_samples=True)
    tgt = ph.calpha_target(p, a)
    if tgt == 0:
        checks.append(make_check("C limit (a = 0)", slope, 0.0, 1e-12))
    else:
        checks.append(make_check("C limit", slope, tgt, 0.02 if n >= 5 else 0.10, mode="rel", note=f"fit spread {err:.2e}"))
    rows += [("C", float(mm), float(v)) for mm, v in zip(mus, vals)]
    if n == 4:
        for idx in ((1, 1, 1, 1), (1, 2, 1, 2), (1, 2, 3, 4)):
            v, e, mus_l, vals_l = ph.log_moment_lemma(p, idx, ladder, return_samples=True)
            t = ph.log_moment_target(p, idx)
            if abs(t) < 1e-12:
                checks.append(make_check(f"log moment {idx}", v, 0.0, 1e-8))
            else:
                checks.append(make_check(f"log moment {idx}", v, t, 0.10, mode="rel"))
            rows += [("log" + "".join(map(str, idx)), float(mm), float(x)) for mm, x in zip(mus_l, vals_l)]
    m = cfg["model"]
    if m is not None:
        sphere = geo.ManifoldModel.sphere(n) if m.kind == "torus" else m
        if sphere.kind != "sphere":
            raise ConfigError("manifold: D ladders need a round sphere (or torus as the flat control)")
        solve_ladder = cfg["mu_ladder"] or list(acc.DALPHA_LADDER)
        prob = rs.RadialProblem(p, sphere)
        solves = [rs.solve_for_mu(prob, mu) for mu in solve_ladder]
        target_model = m if m.kind == "torus" else sphere
        if m.kind == "torus":
            target_model = geo.ManifoldModel.torus(n, delta=sphere.delta)
        dslope, derr, dmu, dvals = ph.dalpha_asymptotic(target_model, solves, return_samples=True)
        if m.kind == "torus":
            checks.append(make_check("D limit (flat)", dslope, 0.0, 1e-10))
        else:
            checks.append(make_check("D limit", dslope, ph.dalpha_target(p, sphere.scal_x0), 0.15, mode="rel",
                                     note=f"fit spread {derr:.2e}"))
        rows += [("D", float(mm), float(v)) for mm, v in zip(dmu, dvals)]
    tables["ladder"] = (["term", "mu", "value"], rows)
    return checks, tables, {"a": a}


def _mass_model(cfg):
    m = cfg["model"] or geo.ManifoldModel.sphere(3)
    if m.n != 3 or m.kind != "sphere":
        raise ConfigError("manifold: the mass is computed on round 3-spheres (n=3)")
    return m


def cmd_mass(cfg):
    m = _mass_model(cfg)
    hs = cfg["h_grid"] or ([cfg["h"]] if cfg["h"] is not None else list(acc.MASS_H_GRID))
    reports = [gm.mass(m, h) for h in hs]
    checks = []
    rows = []
    for r in reports:
        cf = gm.closed_form_mass_s3(r.h, m.radius)
        rows.append((r.h, r.mass, r.error, cf, r.window_consistent))
        checks.append(make_check(f"window independence h={r.h:g}", r.window_consistent, mode="true"))
        checks.append(make_check(f"conformal closed form h={r.h:g}", r.mass, cf, max(10 * r.error, 1e-8)))
    if len(reports) > 1:
        ms = [r.mass for r in reports]
        order = np.argsort(hs)
        checks.append(make_check("mass strictly decreasing in h", bool(np.all(np.diff(np.asarray(ms)[order]) < 0)), mode="true"))
    extra = {"reports": [r.as_dict() for r in reports]}
    return checks, {"mass": (["h", "mass", "error", "closed_form", "window_consistent"], rows)}, extra


def cmd_mass_root(cfg):
    m = _mass_model(cfg)
    h_star = gm.mass_zero_root(m)
    target = 0.75 / m.radius**2
    checks = [make_check("mass-zero root", h_star, target, 0.05, mode="rel")]
    return checks, {"mass_root": (["h_star", "target"], [(h_star, target)])}, {"h_star": h_star}


def cmd_acceptance(cfg):
    results = acc.run_all(workers=cfg["threads"], seed=cfg["seed"], only=cfg["criteria"])
    checks, rows = [], []
    for res in results:
        print(res.summary_line())
        for c in res.checks:
            c.name = f"[{res.number}] {c.name}"
            checks.append(c)
        rows.append((res.number, res.title, res.passed, len(res.checks)))
    names = [c.name for c in checks]
    if len(set(names)) != len(names):
        dup = sorted({x for x in names if names.count(x) > 1})
        raise RuntimeError(f"duplicate check names in the acceptance suite: {dup}")
    timing = {f"criterion_{r.number}": r.seconds for r in results}
    return checks, {"acceptance": (["criterion", "title", "passed", "checks"], rows)}, {"_timing": timing}


HANDLERS = {
    "constants": cmd_constants,
    "bubble-verify": cmd_bubble_verify,
    "sphere-moments": cmd_sphere_moments,
    "curvature": cmd_curvature,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "pohozaev": cmd_pohozaev,
    "pohozaev-asymptotics": cmd_pohozaev_asymptotics,
    "mass": cmd_mass,
    "mass-root": cmd_mass_root,
    "acceptance": cmd_acceptance,
}


# -- running and writing ----------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def config_echo(cfg):
    return _jsonable({k: v for k, v in cfg.items() if k not in ("model", "out", "threads")})


def run(cfg):
    """Execute a validated configuration; returns ``(report, tables, timing)``.

    Numerical failures inside a subcommand are recorded as a failed check
    named ``evaluation``; configuration errors propagate as ``ConfigError``.
    """
    t0 = time.perf_counter()
    try:
        checks, tables, extra = HANDLERS[cfg["command"]](cfg)
    except ConfigError:
        raise
    except Exception as exc:
        log.debug("subcommand failed", exc_info=True)
        checks = [acc.Check("evaluation", None, None, None, "error", False, f"{type(exc).__name__}: {exc}")]
        tables, extra = {}, {}
    timing = {"total_seconds": time.perf_counter() - t0}
    timing.update(extra.pop("_timing", {}))
    report = {
        "command": cfg["command"],
        "config": config_echo(cfg),
        "checks": [c.as_dict() for c in checks],
        "passed": bool(checks) and all(c.passed for c in checks),
        "results": _jsonable(extra),
        "tables": sorted(tables),
    }
    return report, tables, timing


def report_bytes(report):
    return (json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n").encode()


def table_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in r])
    return buf.getvalue()


def write_outputs(out, report, tables, timing):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.json"), "wb") as fh:
        fh.write(report_bytes(report))
    for name, (cols, rows) in tables.items():
        with open(os.path.join(out, f"{name}.csv"), "w") as fh:
            fh.write(table_text(cols, rows))
    with open(os.path.join(out, "timing.json"), "w") as fh:
        json.dump(timing, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- argument parsing ----------------------------------------------------------------------

CSV_HELP = {
    "constants": "constants.csv: name, value",
    "bubble-verify": "bubble.csv: r, u, du, pde_residual",
    "sphere-moments": "moments.csv: indices, closed_form, quadrature, gamma_formula, monte_carlo, mc_stderr",
    "curvature": "curvature.csv: quantity, value, target, error_estimate; cartan.csv: radius, residual",
    "solve": "solve.csv: a, lambda, mu, argmax_theta, residual, C_upper, C_lower, morse_index[, gradient_max, green_discrepancy]",
    "sweep": "sweep.csv: a, lambda, mu, argmax_theta, residual, C_upper, C_lower",
    "pohozaev": "pohozaev.csv: delta, B, C, D, D1, D2, D3, D4, volume_flat, identity_residual",
    "pohozaev-asymptotics": "ladder.csv: term, mu, value (n=3: n3.csv: mu, ratio_delta, ratio_half_delta)",
    "mass": "mass.csv: h, mass, error, closed_form, window_consistent",
    "mass-root": "mass_root.csv: h_star, target",
    "acceptance": "acceptance.csv: criterion, title, passed, checks",
}

SUMMARY = {
    "constants": "critical exponent, c_{n,s}, best constant and bubble scale",
    "bubble-verify": "normalisation, closure and PDE checks for the Euclidean bubble",
    "sphere-moments": "second and fourth moments on S^(n-1): closed form, product rule, Monte Carlo",
    "curvature": "curvature sums and Cartan residual of a normal-coordinate metric model",
    "solve": "radial minimiser at fixed a, or a blow-up ladder with --mu-ladder",
    "sweep": "threshold sweep over --a-grid",
    "pohozaev": "Pohozaev terms for the bubble on a metric model",
    "pohozaev-asymptotics": "C and D slopes, logarithmic moments, n=3 bound",
    "mass": "mass of Delta + h on S^3 over --h or --h-grid",
    "mass-root": "constant h at which the mass vanishes",
    "acceptance": "the full acceptance suite (select with --criteria)",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", help="JSON file with the same keys as the flags (flags win)")
    common.add_argument("--n", type=int, default=S, help="dimension (default 4)")
    common.add_argument("--s", type=float, default=S, help="singularity exponent in [0, 2) (default 1)")
    common.add_argument("--manifold", default=S, help="model: JSON file, sphere[:R] or torus")
    common.add_argument("--a", type=float, default=S, help="constant potential")
    common.add_argument("--a-grid", dest="a_grid", default=S, help="lo:hi:count or comma list")
    common.add_argument("--mu-ladder", dest="mu_ladder", default=S, help="comma list of blow-up scales")
    common.add_argument("--delta", default=S, help="ball radius, or comma list")
    common.add_argument("--h", type=float, default=S, help="constant potential of the Green operator")
    common.add_argument("--h-grid", dest="h_grid", default=S, help="lo:hi:count or comma list of h")
    common.add_argument("--tol", type=float, default=S, help="solver or check tolerance override")
    common.add_argument("--out", default=S, help="output directory (default hslab-out/<command>)")
    common.add_argument("--seed", type=int, default=S, help="seed for randomised checks (default 0)")
    common.add_argument("--threads", type=int, default=S, help="worker processes for sweeps (default 1)")
    common.add_argument("--criteria", default=S, help="acceptance: comma list of criterion numbers")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser = argparse.ArgumentParser(prog="hslab", description=__doc__.split("\n\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=SUMMARY[name], description=SUMMARY[name],
                       epilog="CSV output: " + CSV_HELP[name])
    return parser


def config_from_args(args):
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config: top level must be an object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
        file_cfg.pop("command", None)
        cfg.update(file_cfg)
    for k, v in vars(args).items():
        if k not in ("config", "verbose", "command"):
            cfg[k] = v
    cfg["command"] = args.command
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = validate(config_from_args(args))
        report, tables, timing = run(cfg)
    except ConfigError as exc:
        print(f"hslab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = cfg["out"] or os.path.join("hslab-out", cfg["command"])
    write_outputs(out, report, tables, timing)
    n_fail = sum(not c["passed"] for c in report["checks"])
    if cfg["command"] != "acceptance":
        for c in report["checks"]:
            print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['value']!r}")
    print(f"{len(report['checks']) - n_fail}/{len(report['checks'])} checks passed; report in {out}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
