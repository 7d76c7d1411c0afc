"""Command-line front end: ``otcalib verify-map|comass|mass-compare|curvature|suite``."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import calibration as cal
from . import curvature as cu
from . import graph as gr
from . import io
from . import transport as tr
from .config import RunConfig, build_map, load_config, parse_config
from .cost import check_nondegenerate, check_twist, mixed_hessian
from .domain import DensitySpec, sample
from .errors import ConfigError, OTCalibError
from .geometry import base_metric_field, conformal_metric
from .report import Check, VerificationReport, check_rng
from .suite import SuiteOptions, run_suite

FLAT_COSTS = {"quadratic", "bilinear"}
SYMBOLIC_COSTS = {"quadratic", "bilinear", "log", "sqrt1p"}


def _grid_info(cfg: RunConfig) -> dict:
    try:
        dom = cfg.domain()
        return {"resolution": list(dom.resolution), "low": dom.low.tolist(), "high": dom.high.tolist()}
    except ConfigError:
        return {}


def _central_box(d: DensitySpec, frac: float):
    lo, hi = d.support.low, d.support.high
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * frac
    return mid - half, mid + half


def _draw_central(d: DensitySpec, rng, frac: float) -> np.ndarray:
    lo, hi = _central_box(d, frac)
    return rng.uniform(lo, hi)


# --- verify-map --------------------------------------------------------------------------

def cmd_verify_map(cfg: RunConfig) -> VerificationReport:
    rep = VerificationReport("verify-map", cfg.seed, _grid_info(cfg))
    cost = cfg.cost()
    rho, rhob = cfg.densities()
    dom = cfg.domain()
    if cfg.get("map", "source") == "discrete":
        return _verify_discrete(cfg, rep, cost, rho, rhob)
    holder = {}

    def make_map():
        holder["F"] = cfg.transport_map()
        holder["surface"] = gr.GraphSurface.build(holder["F"], dom)
        return []

    rep.run("map", make_map)
    if "F" not in holder:
        return rep
    F, surf = holder["F"], holder["surface"]
    analytic = F.jac is not None
    cal_tol = cfg.tol("calibration_tol", 1e-6 if analytic else 1e-3)
    columns: dict = {}

    def twist():
        samples = rhob.support.with_resolution(min(rhob.support.resolution[0], 41)).nodes().reshape(-1, cost.n)
        x0 = 0.5 * (dom.low + dom.high)
        r = check_twist(cost, x0, samples)
        return Check("twist", r.min_separation, 1e-9, r.ok, detail={"samples": r.n_samples})

    def nondegenerate():
        det = np.abs(np.linalg.det(mixed_hessian(cost, surf.points, surf.values)))
        ok = all(check_nondegenerate(cost, x, xb) for x, xb in zip(surf.points[::max(1, len(det) // 200)],
                                                                    surf.values[::max(1, len(det) // 200)]))
        return Check("nondegenerate", float(det.min()), 1e-12, ok and det.min() > 1e-12)

    def spacelike():
        f = gr.spacelike_field(surf, cost)
        columns["spacelike_margin"] = f
        m = float(f[surf.mask].min())
        return Check("spacelike", m, 0.0, m > 0, int(np.sum(surf.interior & surf.kinks)))

    def lagrangian():
        f = gr.lagrangian_field(surf, cost)
        columns["lagrangian"] = f
        v = float(f[surf.mask].max())
        tol = cfg.tol("lagrangian_tol", 1e-6)
        return Check("lagrangian", v, tol, v < tol)

    def pushforward():
        f = gr.pushforward_field(surf, rho, rhob)
        columns["pushforward"] = f
        v = float(f[surf.mask].max())
        tol = cfg.tol("pushforward_tol", cal_tol)
        return Check("pushforward", v, tol, v < tol)

    def calibration():
        r = gr.calibration_equality_check(surf, cost, rho, rhob)
        columns.update(sqrt_det_g=r.sqrt_det_g, rho=r.rho, phi_pullback=r.phi_pullback)
        return Check("calibration-equality", r.max_gap, cal_tol, r.max_gap < cal_tol, r.flagged,
                     detail={"metric_gap": r.metric_gap, "phi_gap": r.phi_gap})

    def mean_curv():
        h = float(cfg.get("curvature", "fd_step", 1e-3 * dom.diameter))
        mc = gr.mean_curvature(surf, cost, rho, rhob, h)
        full = np.full(len(surf.points), np.nan)
        full[surf.mask] = mc.norm
        columns["mean_curvature"] = full
        tol = cfg.tol("mean_curvature_tol", 1e-3)
        return Check("mean-curvature", mc.sup, tol, mc.sup < tol and mc.projector_error < 1e-8,
                     detail={"fd_step": h, "projector_error": mc.projector_error})

    for name, fn in (("twist", twist), ("nondegenerate", nondegenerate), ("spacelike", spacelike),
                     ("lagrangian", lagrangian), ("pushforward", pushforward),
                     ("calibration-equality", calibration), ("mean-curvature", mean_curv)):
        rep.run(name, fn)
    cols = {k: columns[k] for k in sorted(columns)}
    if cols:
        io.write_grid(cfg.out / "graph_grid.csv", surf.points, cols)
    return rep


def _verify_discrete(cfg, rep, cost, rho, rhob):
    count = int(cfg.get("map", "points", 200))
    rng = check_rng(cfg.seed, "discrete-samples")
    if cfg.get("map", "source_points"):
        x = io.read_points(cfg._path(cfg.get("map", "source_points")))
        xb = io.read_points(cfg._path(cfg.get("map", "target_points")))
    else:
        x, xb = sample(rho, count, rng), sample(rhob, count, rng)
    holder = {}

    def solve():
        holder["plan"] = tr.solve_discrete(x, xb, cost)
        return Check("assignment", tr.total_cost(holder["plan"], None, cost), None, True,
                     detail={"points": int(x.shape[0])})

    rep.run("assignment", solve)
    if "plan" not in holder:
        return rep
    a, b = holder["plan"].pairs()

    def monotone():
        r = tr.cyclical_monotonicity_check(a, b, cost, max_cycle=int(cfg.get("checks", "max_cycle", 3)),
                                           rng=check_rng(cfg.seed, "cyclical-monotonicity"))
        return Check("cyclical-monotonicity", r.worst_gain, 1e-10, r.ok, detail={"subsets": r.subsets_checked})

    def chords():
        v = gr.chord_spacelikeness(a, b, cost)
        return Check("chord-spacelike", v, 0.0, v >= -1e-12)

    rep.run("cyclical-monotonicity", monotone)
    if cost.n == 1:
        rep.run("chord-spacelike", chords)
    io.write_grid(cfg.out / "plan.csv", a, {f"xbar{i + 1}": b[:, i] for i in range(cost.n)})
    return rep


# --- comass --------------------------------------------------------------------------------

def cmd_comass(cfg: RunConfig) -> VerificationReport:
    rep = VerificationReport("comass", cfg.seed, _grid_info(cfg))
    cost = cfg.cost()
    rho, rhob = cfg.densities()
    count = int(cfg.get("comass", "points", 20))
    frac = float(cfg.get("comass", "box_fraction", 0.25))
    form_name = cfg.get("comass", "form", "calibration")
    if form_name == "calibration":
        form = cal.CalibrationForm(rho, rhob)
    elif form_name == "negative":
        form = cal.VolumeForm("M", -1.0)
    elif form_name in ("dx", "dxbar"):
        form = cal.VolumeForm("M" if form_name == "dx" else "Mbar", 1.0)
    else:
        raise ConfigError(f"unknown comass form {form_name!r}")
    lo_tol = cfg.tol("comass_low_tol", 1e-3)
    hi_tol = cfg.tol("comass_high_tol", 1e-2)
    rows = []

    def run():
        rng = check_rng(cfg.seed, "comass")
        for _ in range(count):
            x, xb = _draw_central(rho, rng, frac), _draw_central(rhob, rng, frac)
            m = conformal_metric(cost, rho, rhob, x, xb)
            r = cal.numeric_comass(form, m, x, xb, cal.ComassConfig(seed=int(rng.integers(2**31))))
            rows.append(np.concatenate([x, xb, [r.estimate, float(r.bounded)]]))
        est = np.array([r[-2] for r in rows])
        bounded = np.array([r[-1] for r in rows]).astype(bool)
        ok = bool(np.all(bounded) and est.min() >= 1 - lo_tol and est.max() <= 1 + hi_tol)
        return [Check("comass", float(est.min()), lo_tol, ok, int(np.sum(~bounded)),
                      detail={"max": float(est.max()), "bounded": bool(np.all(bounded)), "form": form_name})]

    rep.run("comass", run)
    if rows:
        n = cost.n
        header = [f"x{i + 1}" for i in range(n)] + [f"xbar{i + 1}" for i in range(n)] + ["estimate", "bounded"]
        io.write_table(cfg.out / "comass.csv", header, [list(map(float, r)) for r in rows])
    return rep


# --- mass-compare ------------------------------------------------------------------------

def _competitors(cfg: RunConfig) -> list:
    sec = cfg.section("competitors")
    out = []
    for deg in sec.get("rotations_deg", []):
        F = tr.rotation_map(math.radians(float(deg)))
        F.meta["angle"] = math.radians(float(deg))
        out.append(F)
    for name in sec.get("maps", []):
        out.append(build_map({"source": name}, cfg))
    return out


def cmd_mass_compare(cfg: RunConfig) -> VerificationReport:
    rep = VerificationReport("mass-compare", cfg.seed, _grid_info(cfg))
    cost = cfg.cost()
    rho, rhob = cfg.densities()
    dom = cfg.domain()
    holder = {}

    def run():
        F = cfg.transport_map()
        comps = _competitors(cfg)
        mc = cal.mass_compare(F, comps, cost, rho, rhob, dom,
                              threshold=cfg.tol("pushforward_tol", 1e-2))
        holder["mc"] = mc
        cur = cal.PolyhedralCurrent.from_graph(F, dom)
        io.write_mesh(cfg.out / "mesh", cur.vertices, cur.simplices)
        tol = cfg.tol("mass_tol", 2e-3)
        checks = [Check("mass.optimal-first", float(mc.optimal_wins), None, mc.optimal_wins),
                  Check("mass.phi-period", mc.phi_error, cfg.tol("phi_tol", 1e-3),
                        mc.phi_error < cfg.tol("phi_tol", 1e-3))]
        best = mc.rows[0].mass
        for row, Fc in zip(mc.rows[1:], comps):
            if "angle" in Fc.meta:
                e = best * math.cos(Fc.meta["angle"])
                checks.append(Check(f"mass.{row.name}", abs(row.mass - e), tol, abs(row.mass - e) < tol,
                                    detail={"mass": row.mass, "expected": e}))
        for row in mc.rows:
            if row.flagged:
                checks.append(Check(f"mass.flagged.{row.name}", row.mass, None, True,
                                    row.n_timelike + row.n_negative,
                                    detail={"reason": "timelike simplices" if row.n_timelike
                                            else "negatively oriented simplices"}))
        return checks

    rep.run("mass", run)
    if "mc" in holder:
        rows = sorted(holder["mc"].rows, key=lambda r: -r.mass)
        table = [[r.name, r.mass, r.phi_integral, r.n_timelike, r.n_negative, r.pushforward,
                  ("timelike simplices" if r.n_timelike else "negatively oriented simplices") if r.flagged else ""]
                 for r in rows]
        io.write_table(cfg.out / "mass_ranking.csv",
                       ["name", "mass", "phi_integral", "timelike", "negative", "pushforward", "flag"], table)
    return rep


# --- curvature ---------------------------------------------------------------------------

def _curvature_points(cfg, cost, rho, rhob, count, frac, rng):
    n = cost.n
    lo = np.concatenate(_central_box(rho, frac)[:1] + _central_box(rhob, frac)[:1])
    hi = np.concatenate(_central_box(rho, frac)[1:] + _central_box(rhob, frac)[1:])
    pts = []
    while len(pts) < count:
        p = rng.uniform(lo, hi)
        if cost.cut_locus is not None and np.any(cost.cut_locus(p[:n], p[n:])):
            continue
        pts.append(p)
    return np.array(pts)


def cmd_curvature(cfg: RunConfig) -> VerificationReport:
    rep = VerificationReport("curvature", cfg.seed, _grid_info(cfg))
    cost = cfg.cost()
    rho, rhob = cfg.densities()
    n = cost.n
    count = int(cfg.get("curvature", "points", 10))
    frac = float(cfg.get("curvature", "box_fraction", 0.25))
    pts = _curvature_points(cfg, cost, rho, rhob, count, frac, check_rng(cfg.seed, "curvature-points"))
    diam = float(np.linalg.norm(np.concatenate([np.subtract(*_central_box(rho, frac)[::-1]),
                                                np.subtract(*_central_box(rhob, frac)[::-1])])))
    h = float(cfg.get("curvature", "fd_step", 1e-3 * diam))
    uniform_pair = rho.name == "uniform" and rhob.name == "uniform"
    id_tol = cfg.tol("identity_tol", 1e-4 if uniform_pair else 1e-3)
    rows = []
    if n == 1:
        rep.add(Check("mtw", float("nan"), None, True, detail={"note": "n = 1 has no vanishing cross components"}))
        return rep

    def riemann():
        field_ = base_metric_field(cost)
        tens = [cu.riemann_tensor(field_, p, h) for p in pts]
        scale = max(1.0, max(float(np.abs(R).max()) for R in tens))
        anti = max(float(np.abs(R + R.transpose(1, 0, 2, 3)).max()) for R in tens)
        pair = max(float(np.abs(R - R.transpose(2, 3, 0, 1)).max()) for R in tens)
        out = [Check("riemann.symmetry", max(anti, pair) / scale, 1e-6, max(anti, pair) / scale < 1e-6)]
        if cost.name in SYMBOLIC_COSTS:
            exact = [cu.exact_base_riemann(cost.name, n, p) for p in pts]
            rich = [cu.richardson_riemann(field_, p, h) for p in pts]
            diff = max(float(np.abs(R - E).max()) for R, E in zip(rich, exact))
            out.append(Check("riemann.fd-exact", diff, 1e-4, diff < 1e-4))
            coarse = max(float(np.abs(R - E).max()) for R, E in zip(tens, exact))
            fine = max(float(np.abs(cu.riemann_tensor(field_, p, h / 2) - E).max()) for p, E in zip(pts, exact))
            ratio = coarse / fine if fine > 0 else math.inf
            out.append(Check("riemann.fd-convergence", ratio, 3.5, ratio >= 3.5 or coarse < 1e-10,
                             detail={"coarse": coarse, "fine": fine}))
        if cost.name in FLAT_COSTS:
            big = max(float(np.abs(R).max()) for R in tens)
            out.append(Check("riemann.flatness", big, 1e-8, big < 1e-8))
        return out

    def mtw():
        r = cu.mtw_check(cost, pts, fd_step=h)
        out = [Check("mtw", float(r.per_point.min()), 1e-8, r.classification != "violated",
                     int(np.sum(r.per_point < -1e-8)), detail={"classification": r.classification})]
        if cost.name in SYMBOLIC_COSTS:
            r2 = cu.mtw_check(cost, pts, pipeline="exact")
            out.append(Check("mtw.dual-pipeline", float(np.abs(r.per_point - r2.per_point).max()), 1e-4,
                             r.classification == r2.classification,
                             detail={"fd": r.classification, "exact": r2.classification}))
        return out

    def identity():
        worst = 0.0
        for p in pts:
            for i in range(n):
                for j in range(n):
                    ci = cu.conformal_identity_check(cost, rho, rhob, p, (i, j), h, rotate=True)
                    worst = max(worst, ci.rel_error)
                    rows.append(list(map(float, p)) + [i, j, ci.rhs / ci.factor if ci.factor else 0.0,
                                                       ci.lhs, ci.factor, ci.rel_error])
        return Check("conformal-identity", worst, id_tol, worst < id_tol, detail={"configurations": len(rows)})

    rep.run("riemann", riemann)
    rep.run("mtw", mtw)
    rep.run("conformal-identity", identity)
    if rows:
        header = ([f"x{i + 1}" for i in range(n)] + [f"xbar{i + 1}" for i in range(n)]
                  + ["i", "j", "R_base", "R_conformal", "factor", "identity_rel_error"])
        io.write_table(cfg.out / "curvature.csv", header, rows)
    return rep


# --- suite ---------------------------------------------------------------------------------

def cmd_suite(cfg: Optional[RunConfig]) -> int:
    opts = SuiteOptions()
    if cfg is not None:
        opts = SuiteOptions(seed=cfg.seed,
                            fd_scale=float(cfg.get("suite", "fd_scale", 1.0)),
                            mutation=cfg.get("suite", "mutation"),
                            mass_mesh=int(cfg.grid or cfg.get("suite", "mass_mesh", 128)))
    rep, timings = run_suite(opts)
    out = cfg.out if cfg is not None else Path("otcalib-out")
    rep.write(out)
    io.write_table(out / "timings.csv", ["criterion", "seconds"], [[k, float(v)] for k, v in timings.items()])
    _print(rep)
    if not rep.verdict:
        print("failing checks: " + ", ".join(rep.failing()), file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "verify-map": cmd_verify_map,
    "comass": cmd_comass,
    "mass-compare": cmd_mass_compare,
    "curvature": cmd_curvature,
}


def _print(rep: VerificationReport) -> None:
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  value={c.value!r}  tol={c.tolerance!r}")
    print(f"verdict: {'pass' if rep.verdict else 'fail'}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otcalib", description="Verify calibrated geometry of transport maps.")
    p.add_argument("command", choices=[*COMMANDS, "suite"])
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("seed must be non-negative")
        if args.config is None:
            if args.command != "suite":
                raise ConfigError(f"{args.command} requires --config")
            cfg = parse_config("").with_overrides(args.seed, args.out, args.grid)
        else:
            cfg = load_config(args.config).with_overrides(args.seed, args.out, args.grid)
        if args.grid is not None and args.grid < 3:
            raise ConfigError("--grid must be at least 3")
        if args.command == "suite":
            return cmd_suite(cfg)
        rep = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OTCalibError as exc:  # setup failures outside any named check
        rep = VerificationReport(args.command, cfg.seed)
        rep.add(Check("setup", float("nan"), None, False, detail={"error": type(exc).__name__, "message": str(exc)}))
    rep.write(cfg.out)
    _print(rep)
    if not rep.verdict:
        print("failing checks: " + ", ".join(rep.failing()), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
