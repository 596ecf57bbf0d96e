"""Command-line harness: config ingestion, built-in libraries, reports.

Every run is deterministic given (config, seed): one seeded generator feeds
all randomness, numeric CSV cells carry 17 significant digits, and files are
written by a single writer. Exit codes: 0 all assertions pass, 1 assertion
failure (with witness dump), 2 config schema violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import czd, czo, geometry, maximal, oracles, weights
from .atoms import atomic_decompose, normalize_to_atom, reconstruct, validate_atom
from .errors import MwhardyError
from .grid import Cube, Grid

SCHEMA_VERSION = 1


class ConfigError(MwhardyError):
    pass


# ----------------------------------------------------------------------
# built-in libraries

def weight_from_config(cfg):
    fam = cfg.get("family")
    n = int(cfg.get("n", 1))
    L = float(cfg.get("L", 4.0))
    h = float(cfg.get("h", 1.0 / 32))
    if fam == "identity":
        return weights.identity_weight(n, int(cfg.get("m", 1)), L, h)
    if fam == "scalar-power":
        return weights.scalar_power_weight(n, L, h, float(cfg["alpha"]))
    if fam == "step":
        return weights.step_weight(L, h, cfg["breaks"], cfg["values"])
    if fam == "rotating-2x2":
        return weights.rotating_weight(n, L, h, float(cfg["alpha1"]),
                                       float(cfg["alpha2"]),
                                       theta=cfg.get("theta", "linear"),
                                       theta_scale=float(cfg.get("theta_scale", 1.0)))
    if fam == "constant":
        return weights.constant_weight(n, L, h, np.asarray(cfg["matrix"]))
    raise ConfigError(f"unknown weight family {fam!r}")


def function_from_config(cfg, grid, m, rng=None):
    kind = cfg.get("function")
    comps = np.asarray(cfg.get("components", [1.0] * m), dtype=complex)
    if comps.shape != (m,):
        raise ConfigError(f"components must have length {m}")
    center = np.atleast_1d(np.asarray(cfg.get("center", 0.0), dtype=float))
    if center.size == 1 and grid.n == 2:
        center = np.repeat(center, 2)
    width = float(cfg.get("width", 1.0))
    u = (grid.points - center) / width
    r2 = np.sum(u * u, axis=1)
    bump = np.where(r2 < 1.0, np.exp(-1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)
    if kind == "bump":
        profile = bump
    elif kind == "mean-zero-bump":
        profile = u[:, 0] * bump
    elif kind == "dipole":
        u2 = (grid.points - center - width / 2) / (width / 2)
        u3 = (grid.points - center + width / 2) / (width / 2)
        r22 = np.sum(u2 * u2, axis=1)
        r23 = np.sum(u3 * u3, axis=1)
        profile = (np.where(r22 < 1, np.exp(-1.0 / np.maximum(1 - r22, 1e-300)), 0.0)
                   - np.where(r23 < 1, np.exp(-1.0 / np.maximum(1 - r23, 1e-300)), 0.0))
    elif kind == "random-cells":
        if rng is None:
            rng = np.random.default_rng(int(cfg.get("seed", 0)))
        mask = r2 < 1.0
        vals = np.zeros(grid.size)
        vals[mask] = rng.standard_normal(int(mask.sum()))
        if mask.any():
            vals[mask] -= vals[mask].mean()
        profile = vals
    else:
        raise ConfigError(f"unknown function kind {kind!r}")
    return maximal.VectorField(grid, profile[:, None] * comps[None, :])


def builtin_kernel(name):
    if name == "hilbert":
        return czo.hilbert_kernel()
    if name == "riesz2d":
        return czo.riesz_kernel_2d()
    raise ConfigError(f"unknown kernel {name!r}")


def kernel_from_config(cfg):
    name = cfg.get("kernel", "hilbert")
    if isinstance(name, dict):
        return czo.rational_kernel(name["num"], name["den"],
                                   order=int(name.get("order", 0)),
                                   delta=float(name.get("delta", 1.0)))
    return builtin_kernel(name)


# ----------------------------------------------------------------------
# reports

def _fmt(x):
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


class Report:
    def __init__(self, config, seed):
        self.config = config
        self.seed = seed
        self.tables = {}      # name -> (header, rows)
        self.constants = {}
        self.passes = {}
        self.started = time.time()

    def add_table(self, name, header, rows):
        self.tables[name] = (header, rows)

    def log(self, key, value):
        self.constants[key] = value

    def check(self, key, ok, witness=None):
        self.passes[key] = {"ok": bool(ok)}
        if witness is not None and not ok:
            self.passes[key]["witness"] = witness

    @property
    def all_ok(self):
        return all(v["ok"] for v in self.passes.values())

    def write(self, outdir):
        os.makedirs(outdir, exist_ok=True)
        for name, (header, rows) in self.tables.items():
            path = os.path.join(outdir, f"{name}.csv")
            with open(path, "w", newline="\n") as fh:
                fh.write(",".join(header) + "\n")
                for row in rows:
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
        summary = {
            "schema": SCHEMA_VERSION,
            "command": self.config.get("command"),
            "seed": self.seed,
            "constants": self.constants,
            "checks": self.passes,
            "all_ok": self.all_ok,
            "wall_seconds": round(time.time() - self.started, 3),
        }
        with open(os.path.join(outdir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True, default=str)
        return summary


# ----------------------------------------------------------------------
# subcommands

def _validate_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"config schema must be {SCHEMA_VERSION}")
    if "command" not in cfg:
        raise ConfigError("config needs a command")
    return cfg


def _cube_from(params, grid):
    center = params.get("cube_center", [0.0] * grid.n)
    edge = params.get("cube_edge", grid.L)
    return Cube(tuple(np.atleast_1d(center)), float(edge), grid.n)


def run(config, outdir=None, seed=0, threads=None):
    """Dispatch a validated config to its subcommand; returns the Report."""
    cfg = _validate_config(config)
    command = cfg["command"]
    report = Report(cfg, seed)
    report.log("threads", threads or int(os.environ.get("MWHARDY_THREADS", "1")))
    params = cfg.get("params", {})
    handler = {
        "characteristic": _run_characteristic,
        "reduce": _run_reduce,
        "maximal": _run_maximal,
        "czd": _run_czd,
        "atoms": _run_atoms,
        "czo": _run_czo,
        "verify": _run_verify,
        "oracle-scalar": _run_oracle_scalar,
    }.get(command)
    if handler is None:
        raise ConfigError(f"unknown command {command!r}")
    handler(cfg, params, report, seed)
    if outdir:
        report.write(outdir)
    return report


def _run_characteristic(cfg, params, report, seed):
    w = weight_from_config(cfg["weight"])
    p = float(params.get("p", 1.0))
    cubes = w.grid.aligned_cube_family(min_edge=params.get("min_edge"))
    rep = weights.ap_characteristic(w, p, cubes)
    rows = [(",".join(_fmt(c) for c in cube.center), cube.edge, val)
            for cube, val in rep.per_cube]
    report.add_table("characteristic", ["cube_center", "cube_edge", "value"], rows)
    report.log("ap_value", rep.value if not rep.infinite else "inf")
    rep_inf = weights.ap_infty_characteristic(w, p, cubes)
    report.log("ap_infty_value", rep_inf.value if not rep_inf.infinite else "inf")
    report.check("characteristic_at_least_one", rep_inf.per_cube[0][1] >= 1 - 1e-9)


def _run_reduce(cfg, params, report, seed):
    w = weight_from_config(cfg["weight"])
    p = float(params.get("p", 1.0))
    fam = weights.ReducingFamily(w, p, strategy=params.get("strategy", "auto"),
                                 seed=seed)
    rows = []
    for cube in w.grid.aligned_cube_family(min_edge=params.get("min_edge", 4 * w.grid.h)):
        a = fam.operator(cube)
        c_low, c_high = fam.constants[cube.key()]
        rows.append((",".join(_fmt(c) for c in cube.center), cube.edge,
                     float(np.linalg.norm(a, 2)), c_low, c_high))
    report.add_table("reduce", ["cube_center", "cube_edge", "op_norm",
                                "c_low", "c_high"], rows)
    spread = max(r[4] / r[3] for r in rows)
    report.log("worst_constant_spread", spread)
    report.check("reducing_constants_finite", np.isfinite(spread))


def _run_maximal(cfg, params, report, seed):
    w = weight_from_config(cfg["weight"])
    p = float(params.get("p", 1.0))
    f = function_from_config(cfg["function"], w.grid, w.m,
                             np.random.default_rng(seed))
    psi = maximal.bump(w.grid.n)
    field = maximal.radial_maximal(f, psi, "W", p=p, weight=w)
    rows = [(",".join(_fmt(c) for c in w.grid.points[i]), float(field[i]))
            for i in range(w.grid.size)]
    report.add_table("maximal_field", ["x", "value"], rows)
    report.log("hardy_quasinorm", maximal.lp_quasinorm(field, w.grid, p))
    fam = weights.ReducingFamily(w, p, seed=seed)
    cfg_m = maximal.MaximalConfig(p=p, a=float(params.get("a", 1.0)),
                                  b=float(params.get("b", 0.25)))
    chain = maximal.chain_check(f, psi, cfg_m, maximal.ReducingMode(fam),
                                dictionary=maximal.SchwartzDictionary.default(
                                    w.grid.n, int(params.get("N", 3)), psi))
    report.check("maximal_chains", chain.ok, witness=chain.violations[:5])


def _run_czd(cfg, params, report, seed):
    w = weight_from_config(cfg["weight"])
    p = float(params.get("p", 1.0))
    s = int(params.get("s", 0))
    f = function_from_config(cfg["function"], w.grid, w.m,
                             np.random.default_rng(seed))
    psi = maximal.bump(w.grid.n)
    fam = weights.ReducingFamily(w, p, seed=seed)
    proxy = czd.maximal_proxy(f, psi, fam)
    alpha = float(params.get("alpha", 0.5 * proxy.max()))
    dec = czd.cz_decompose(f, w, p, fam, alpha, s, psi, proxy=proxy)
    d = dec.diagnostics
    rows = []
    for k, cube in enumerate(dec.cubes_star):
        rows.append((k, ",".join(_fmt(c) for c in cube.center), cube.edge,
                     d["moment_rows"][k], d["good_bound_constant"],
                     d["bad_energy_ratios"][k] if d["bad_energy_ratios"] else 0.0))
    report.add_table("czd", ["k", "center", "edge", "moment_residual_max",
                             "good_bound", "bad_energy_ratio"], rows)
    report.log("good_bound_constant", d.get("good_bound_constant", 0.0))
    report.check("czd_moments", d.get("moment_residual_max", 0.0) <= 1e-6)
    fmax = float(np.max(np.abs(f.values)))
    report.check("czd_reconstruction",
                 d.get("reconstruction_residual_on_set", 0.0) <= 1e-8 * fmax)


def _run_atoms(cfg, params, report, seed):
    w = weight_from_config(cfg["weight"])
    p = float(params.get("p", 1.0))
    s = int(params.get("s", 0))
    f = function_from_config(cfg["function"], w.grid, w.m,
                             np.random.default_rng(seed))
    psi = maximal.bump(w.grid.n)
    fam = weights.ReducingFamily(w, p, seed=seed)
    dec = atomic_decompose(f, w, p, fam, s, psi)
    rows = []
    for j, k, lam, atom in dec.entries:
        rows.append((j, k, lam, max(atom.report.moment_residuals.values()),
                     atom.report.size_margin))
    report.add_table("atoms", ["j", "k", "lambda", "moment_residual",
                               "validation_margin"], rows)
    report.log("coefficient_norm", dec.coefficient_norm())
    report.log("hardy_proxy", maximal.hardy_quasinorm(f, psi, w, p))
    report.check("atoms_valid", all(a.report.valid for _, _, _, a in dec.entries))
    profiles = [("bump", np.exp(-np.sum(w.grid.points ** 2, axis=1)))]
    resid = reconstruct(dec, profiles)
    report.check("reconstruction",
                 all(r <= 1e-6 * max(s, 1e-300) for _, r, s in resid),
                 witness=resid)


def _run_czo(cfg, params, report, seed):
    w = weight_from_config(cfg["weight"])
    p = float(params.get("p", 1.0))
    kern = kernel_from_config(params)
    val = czo.kernel_validate(kern, seed=seed)
    report.log("kernel_constant", val["c_measured"])
    report.check("kernel_conditions", val["passes"])
    rng = np.random.default_rng(seed)
    psi = maximal.bump(w.grid.n)
    panel = random_atom_panel(w, p, int(params.get("n_atoms", 8)), rng)
    results, family_max = czo.boundedness_harness(kern, panel, w, p, psi)
    rows = [(i, r["near"], r["lp_bound"], r["hardy_bound"])
            for i, r in enumerate(results)]
    report.add_table("czo", ["atom", "near", "lp_bound", "hardy_bound"], rows)
    report.log("family_max_lp", family_max["lp"])
    report.log("family_max_hardy", family_max["hardy"])
    report.check("family_max_finite",
                 np.isfinite(family_max["lp"]) and np.isfinite(family_max["hardy"]))


def random_atom_panel(weight, p, count, rng, s=0):
    """Mean-zero random smooth atoms on random aligned cubes."""
    grid = weight.grid
    panel = []
    attempts = 0
    while len(panel) < count and attempts < 20 * count:
        attempts += 1
        edge = float(rng.choice([0.5, 1.0, 2.0]))
        span = grid.L - edge / 2
        center = np.round(rng.uniform(-span, span, size=grid.n) / grid.h) * grid.h
        cube = Cube(tuple(center), edge, grid.n)
        u = (grid.points - center) / (edge / 2)
        r2 = np.sum(u * u, axis=1)
        prof = np.where(r2 < 1, np.exp(-1.0 / np.maximum(1 - r2, 1e-300)), 0.0)
        vals = (u[:, 0] + 0.3 * rng.standard_normal()) * prof
        inside = r2 < 1
        if not inside.any():
            continue
        vals[inside] -= vals[inside].mean()  # mean zero on the support
        comps = rng.standard_normal(weight.m) + 0j
        comps /= np.linalg.norm(comps)
        field = maximal.VectorField(grid, vals[:, None] * comps[None, :])
        if float(np.max(np.abs(field.values))) == 0.0:
            continue
        atom, _ = normalize_to_atom(field, cube, weight, p, np.inf, s, flavor="W")
        if atom.report.valid:
            panel.append(atom)
    return panel


def _run_oracle_scalar(cfg, params, report, seed):
    w = weight_from_config(cfg["weight"])
    if w.m != 1:
        raise ConfigError("oracle-scalar requires m = 1")
    p = float(params.get("p", 1.0))
    cubes = w.grid.aligned_cube_family(min_edge=4 * w.grid.h)
    ap_main = weights.ap_characteristic(w, p, cubes).value
    ap_oracle = (oracles.scalar_a1_characteristic(w, cubes) if p == 1
                 else oracles.scalar_ap_characteristic(w, p, cubes))
    ainf_main = weights.ap_infty_characteristic(w, p, cubes).value
    ainf_oracle = oracles.scalar_ainfty_characteristic(w, p, cubes)
    fam = weights.ReducingFamily(w, p, seed=seed)
    cube = _cube_from(params, w.grid)
    red_main = float(fam.operator(cube)[0, 0].real)
    red_oracle = oracles.scalar_reducing_value(w, p, cube)
    t = 4 * w.grid.h
    gam_main = weights.gamma_field(w, p, fam, t)
    gam_oracle = oracles.scalar_gamma_field(w, p, t)
    rows = [
        ("ap", ap_main, ap_oracle, abs(ap_main - ap_oracle) / max(ap_oracle, 1e-300)),
        ("ap_infty", ainf_main, ainf_oracle,
         abs(ainf_main - ainf_oracle) / max(ainf_oracle, 1e-300)),
        ("reducing", red_main, red_oracle,
         abs(red_main - red_oracle) / max(red_oracle, 1e-300)),
        ("gamma_field", float(np.max(gam_main)), float(np.max(gam_oracle)),
         float(np.max(np.abs(gam_main - gam_oracle)) / max(np.max(gam_oracle), 1e-300))),
    ]
    report.add_table("oracle_scalar", ["quantity", "pipeline", "oracle",
                                       "rel_disagreement"], rows)
    worst = max(r[3] for r in rows)
    report.log("worst_disagreement", worst)
    report.check("oracle_agreement", worst <= 1e-8,
                 witness=[r for r in rows if r[3] > 1e-8])


def _run_verify(cfg, params, report, seed):
    """Compact end-to-end property suite; one check per block."""
    rng = np.random.default_rng(seed)

    # Whitney on two sets per dimension
    ok = True
    for n in (1, 2):
        for _ in range(2):
            om = _random_open_set(n, rng)
            cover = geometry.whitney_decompose(om)
            rep = geometry.verify_whitney(cover)
            ok = ok and rep["all_ok"]
    report.check("whitney", ok)

    # ball lemma Monte Carlo
    bad = 0
    for _ in range(100):
        r = float(rng.uniform(0.2, 2.0))
        delta = float(rng.uniform(0.2, 2.0))
        d = float(rng.uniform(0, (1 + delta) * r * 0.999))
        x = rng.uniform(-1, 1, size=2)
        u = rng.normal(size=2)
        u /= np.linalg.norm(u)
        y = x + d * u
        rstar = geometry.ball_intersection_radius(r, delta, d)
        z = geometry.ball_intersection_center(x, y, r, delta)
        pts = z + rstar * _unit_ball_samples(rng, 200, 2)
        inside = (np.linalg.norm(pts - x, axis=1) <= r + 1e-12) \
            & (np.linalg.norm(pts - y, axis=1) <= delta * r + 1e-12)
        bad += int(np.sum(~inside))
    report.check("ball_lemma", bad == 0, witness=bad)

    # identity-weight chains and scalar oracle agreement
    wcfg = cfg.get("weight", {"family": "step", "n": 1, "L": 4.0, "h": 1.0 / 32,
                              "breaks": [0.0], "values": [1.0, 2.0]})
    sub = dict(cfg)
    sub["weight"] = wcfg
    _run_oracle_scalar(sub, params, report, seed)
    _run_maximal({"weight": wcfg,
                  "function": {"function": "mean-zero-bump", "center": 0.0,
                               "width": 1.0}}, params, report, seed)

    # dyadic sup sharpness
    g = Grid(1, 4.0, 1.0 / 32)
    q0 = Cube((0.5,), 1.0)
    idx0 = g.cube_indices(q0)
    om_levels, f_levels = {}, {}
    for j in range(-2, 6):
        fld = np.zeros(g.size)
        fld[idx0] = 2.0 ** (-j)
        om_levels[j] = fld
        f_levels[j] = np.ones(g.size)
    _, _, ratio = weights.dyadic_sup_estimate(om_levels, f_levels, -2, q0, 1.0, g)
    report.check("dyadic_sup_sharpness", abs(ratio - 4.0) <= 1e-12, witness=ratio)


def _unit_ball_samples(rng, count, n):
    pts = rng.normal(size=(count, n))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    radii = rng.uniform(0, 1, size=(count, 1)) ** (1.0 / n)
    return pts * radii


def _random_open_set(n, rng):
    r = 2
    boxes = []
    for _ in range(int(rng.integers(1, 4))):
        lo = rng.integers(-6, 4, size=n) / 4.0
        ext = rng.integers(1, 6, size=n) / 4.0
        boxes.append((tuple(lo), tuple(lo + ext)))
    return geometry.OpenBoxUnion(n, boxes, resolution_level=r)


# ----------------------------------------------------------------------
# CLI

def main(argv=None):
    parser = argparse.ArgumentParser(prog="mwhardy",
                                     description="matrix-weighted Hardy toolkit")
    parser.add_argument("command", choices=["characteristic", "reduce", "maximal",
                                            "czd", "atoms", "czo", "verify",
                                            "oracle-scalar"])
    parser.add_argument("--config", required=True, help="path to config JSON")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("MWHARDY_THREADS", "1")))
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        cfg["command"] = args.command
        report = run(cfg, outdir=args.out, seed=args.seed, threads=args.threads)
    except (ConfigError, json.JSONDecodeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for key, val in report.passes.items():
        status = "PASS" if val["ok"] else "FAIL"
        print(f"[{status}] {key}")
        if not val["ok"] and "witness" in val:
            print(f"        witness: {val['witness']}")
    for key, val in report.constants.items():
        print(f"  {key} = {val}")
    return 0 if report.all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
