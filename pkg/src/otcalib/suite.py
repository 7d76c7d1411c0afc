"""Acceptance battery: eight criteria, each a function returning named checks."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import calibration as cal
from . import curvature as cu
from . import transport as tr
from .cost import bilinear, get_cost, quadratic, sqrt1p
from .domain import DensitySpec, DomainSpec, gaussian, uniform
from .errors import OrientationError
from .geometry import (DEFAULT_VARIANT, MetricVariant, base_metric_matrix, conformal_metric,
                       signature)
from .graph import (GraphSurface, calibration_equality_check, determinant_inequality_check,
                    lagrangian_residual, mean_curvature)
from .report import Check, VerificationReport, check_rng

BUDGETS = {1: 10.0, 2: 60.0, 3: 60.0, 4: 120.0, 5: 120.0, 6: 60.0, 7: 30.0, 8: 10.0}


@dataclass
class SuiteOptions:
    seed: int = 0
    fd_scale: float = 1.0
    mutation: Optional[str] = None
    mass_mesh: int = 128
    budgets: bool = True

    def variant_for(self, n: int) -> MetricVariant:
        return mutated_variant(self.mutation, n)


def mutated_variant(mutation: Optional[str], n: int) -> MetricVariant:
    """Deliberately wrong conformal factors used for fault injection."""
    if mutation is None:
        return DEFAULT_VARIANT
    if mutation == "exponent":
        return MetricVariant(exponent=1.0 / (n + 1))
    if mutation == "half":
        return MetricVariant(half=False)
    raise ValueError(f"unknown mutation {mutation!r}")


# --- shared fixtures -------------------------------------------------------------------

S2 = np.array([[1.0, 0.3], [0.3, 0.5]])
S2B = np.array([[2.0, -0.4], [-0.4, 1.0]])


def calibration_families():
    """(name, cost, rho, rhob, map, domain) for the analytic families of criterion 1."""
    u0, u2 = uniform([0.0], [1.0]), uniform([0.0], [2.0])
    g1, g4 = gaussian([0.0], [[1.0]]), gaussian([0.5], [[4.0]])
    ga, gb = gaussian([0.0, 0.0], S2), gaussian([0.0, 0.0], S2B)
    Fg = tr.gaussian_map([[1.0]], [[4.0]])
    Fg = tr.linear_map(Fg.matrix, np.array([0.5]), name="gaussian-1d")
    return [
        ("uniform-1d", quadratic(1), u0, u2, tr.solve_1d_monotone(u0, u2), DomainSpec([0.0], [1.0], 201)),
        ("gaussian-1d", quadratic(1), g1, g4, Fg, DomainSpec([-3.0], [3.0], 201)),
        ("gaussian-2d", quadratic(2), ga, gb, tr.gaussian_map(S2, S2B), DomainSpec([-2.0, -2.0], [2.0, 2.0], 41)),
    ]


# --- criteria ----------------------------------------------------------------------------

def criterion_1(opt: SuiteOptions) -> list:
    out = []
    for name, cost, rho, rhob, F, dom in calibration_families():
        for mode, tol in (("auto", 1e-6), ("fd", 1e-3)):
            r = calibration_equality_check(F, cost, rho, rhob, dom, jacobian=mode, variant=opt.variant_for(cost.n))
            label = "analytic" if mode == "auto" else "fd"
            out.append(Check(f"c1.calibration-equality.{name}.{label}", r.max_gap, tol,
                             r.max_gap < tol, r.flagged,
                             detail={"metric_gap": r.metric_gap, "phi_gap": r.phi_gap}))
    return out


def criterion_2(opt: SuiteOptions) -> list:
    rho = gaussian([0.0, 0.0], np.eye(2))
    dom = DomainSpec([-4.0, -4.0], [4.0, 4.0], opt.mass_mesh + 1)
    angles = (10.0, 30.0, 60.0)
    comps = [tr.rotation_map(math.radians(a)) for a in angles]
    mc = cal.mass_compare(tr.identity_map(2), comps, bilinear(2), rho, rho, dom, variant=opt.variant_for(2))
    out = []
    expected = [1.0] + [math.cos(math.radians(a)) for a in angles]
    for row, e in zip(mc.rows, expected):
        err = abs(row.mass - e)
        out.append(Check(f"c2.mass.{row.name}", err, 2e-3, err < 2e-3, row.n_timelike + row.n_negative,
                         detail={"mass": row.mass, "expected": e}))
    out.append(Check("c2.mass.optimal-first", float(mc.optimal_wins), None, mc.optimal_wins))
    out.append(Check("c2.mass.phi-period", mc.phi_error, 1e-3, mc.phi_error < 1e-3))
    return out


def comass_configs():
    """Three cost/density settings with (x, xbar) sampled in their central boxes."""
    u = uniform([0.0], [1.0])
    g = gaussian([0.0, 0.0], np.eye(2))
    ga, gb = gaussian([0.0, 0.0], S2), gaussian([0.2, -0.1], S2B)
    return [
        ("uniform-quadratic-1d", quadratic(1), u, u, 7),
        ("gaussian-bilinear-2d", bilinear(2), g, g, 7),
        ("gaussian-sqrt1p-2d", sqrt1p(2), ga, gb, 6),
    ]


def _central(d: DensitySpec, rng, frac=0.25):
    lo, hi = d.support.low, d.support.high
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * frac
    return rng.uniform(mid - half, mid + half)


def criterion_3(opt: SuiteOptions) -> list:
    out = []
    for name, cost, rho, rhob, count in comass_configs():
        rng = check_rng(opt.seed, f"c3.comass.{name}")
        phi = cal.CalibrationForm(rho, rhob)
        ests, bounded = [], []
        for _ in range(count):
            x, xb = _central(rho, rng), _central(rhob, rng)
            m = conformal_metric(cost, rho, rhob, x, xb, variant=opt.variant_for(cost.n))
            res = cal.numeric_comass(phi, m, x, xb, cal.ComassConfig(seed=int(rng.integers(2**31))))
            ests.append(res.estimate)
            bounded.append(res.bounded)
        lo, hi = min(ests), max(ests)
        ok = lo >= 0.999 and hi <= 1.01 and all(bounded)
        out.append(Check(f"c3.comass.{name}", lo, 1e-3, ok, bounded.count(False),
                         detail={"min": lo, "max": hi, "points": count}))
    rho = uniform([0.0], [1.0])
    m = conformal_metric(quadratic(1), rho, rho, np.array([0.5]), np.array([0.5]))
    neg = cal.numeric_comass(cal.VolumeForm("M", -1.0), m, np.array([0.5]), np.array([0.5]))
    out.append(Check("c3.comass.negative-control", neg.estimate, None, not neg.bounded,
                     detail={"bounded": neg.bounded}))
    return out


def criterion_4(opt: SuiteOptions) -> list:
    g1, g4 = gaussian([0.0], [[1.0]]), gaussian([0.0], [[4.0]])
    dom = DomainSpec([-2.0], [2.0], 81)
    h = 1e-3 * dom.diameter * opt.fd_scale
    surf = GraphSurface.build(tr.gaussian_map([[1.0]], [[4.0]]), dom)
    q = quadratic(1)
    a = mean_curvature(surf, q, g1, g4, h, variant=opt.variant_for(1)).sup
    b = mean_curvature(surf, q, g1, g4, h / 2, variant=opt.variant_for(1)).sup
    decay = a / b if b > 0 else math.inf
    u = uniform([0.0], [1.0])
    sdom = DomainSpec([0.0], [1.0], 81)
    ssurf = GraphSurface.build(tr.sinusoid_map(0.1), sdom)
    hs = 1e-3 * sdom.diameter * opt.fd_scale
    s1 = mean_curvature(ssurf, q, u, u, hs, variant=opt.variant_for(1)).sup
    s2 = mean_curvature(ssurf, q, u, u, hs / 2, variant=opt.variant_for(1)).sup
    stable = abs(s1 - s2) <= 0.05 * s2
    return [
        Check("c4.mean-curvature.gaussian-1d", a, 1e-3, a < 1e-3, detail={"fd_step": h}),
        Check("c4.mean-curvature.gaussian-1d.decay", decay, 3.5, decay >= 3.5 or a < 1e-12,
              detail={"coarse": a, "fine": b}),
        Check("c4.mean-curvature.sinusoid", min(s1, s2), 1e-2, min(s1, s2) > 1e-2 and stable,
              detail={"coarse": s1, "fine": s2}),
    ]


def vanishing_points(rng, count: int, box: float = 1.0) -> list:
    """Points with ``xbar_1 = x_1``; there the sqrt1p cross components (0,1) and (1,0) vanish."""
    pts = []
    for _ in range(count):
        p = rng.uniform(-box, box, 4)
        p[2] = p[0]
        pts.append(p)
    return pts


def criterion_5(opt: SuiteOptions) -> list:
    rng = check_rng(opt.seed, "c5.conformal-identity")
    ga = gaussian([0.0, 0.0], 0.5 * np.eye(2))
    gb = gaussian([0.1, 0.0], [[1.0, 0.2], [0.2, 0.8]])
    h = 1e-3 * 4.0 * opt.fd_scale  # product box [-1, 1]^4 has diameter 4
    errs = []
    for p in vanishing_points(rng, 5):
        for idx in ((0, 1), (1, 0)):
            errs.append(cu.conformal_identity_check(sqrt1p(2), ga, gb, p, idx, h, variant=opt.variant_for(2)).rel_error)
    out = [Check("c5.conformal-identity.sqrt1p-gaussian", max(errs), 1e-3, max(errs) < 1e-3,
                 detail={"configurations": len(errs)})]
    for cname in ("quadratic", "bilinear"):
        cost = get_cost(cname, 2)
        worst = 0.0
        for p in rng.uniform(-1, 1, (5, 4)):
            for idx in ((0, 1), (1, 0), (0, 0), (1, 1)):
                ci = cu.conformal_identity_check(cost, ga, gb, p, idx, h, rotate=True, variant=opt.variant_for(2))
                worst = max(worst, abs(ci.lhs), abs(ci.rhs))
        out.append(Check(f"c5.conformal-identity.{cname}-flat", worst, 1e-8, worst < 1e-8))
    return out


def brute_force_assignment(C: np.ndarray) -> float:
    """Minimum of ``sum_i C[i, s(i)]`` over all permutations (independent oracle)."""
    m = C.shape[0]
    perms = np.array(list(itertools.permutations(range(m))), dtype=int)
    return float(C[np.arange(m), perms].sum(axis=1).min())


def convergence_errors(repeats: dict, rng) -> dict:
    """Mean sup error of the discrete matching against ``x -> 2x`` (uniform[0,1] to uniform[0,2]).

    ``repeats`` maps sample size to the number of independent draws averaged.
    """
    q = quadratic(1)
    out = {}
    for N, reps in repeats.items():
        errs = []
        for _ in range(reps):
            x = rng.uniform(0.0, 1.0, (N, 1))
            xb = rng.uniform(0.0, 2.0, (N, 1))
            a, b = tr.solve_discrete(x, xb, q).pairs()
            errs.append(np.abs(b - 2 * a).max())
        out[N] = float(np.mean(errs))
    return out


CONVERGENCE_REPEATS = {100: 200, 400: 100, 1600: 10}


def criterion_6(opt: SuiteOptions) -> list:
    rng = check_rng(opt.seed, "c6.assignment")
    costs = [quadratic(2), bilinear(2), sqrt1p(2), quadratic(1), sqrt1p(1)]
    mismatches, worst = 0, 0.0
    for k in range(50):
        cost = costs[k % len(costs)]
        m = int(rng.integers(2, 9))
        x = rng.normal(size=(m, cost.n))
        xb = rng.normal(size=(m, cost.n))
        plan = tr.solve_discrete(x, xb, cost)
        got = tr.total_cost(plan, None, cost) * m
        best = brute_force_assignment(tr.cost_matrix(cost, x, xb))
        gap = abs(got - best)
        worst = max(worst, gap)
        mismatches += gap > 1e-12 * max(1.0, abs(best))
    out = [Check("c6.assignment.brute-force", worst, 1e-12, mismatches == 0, mismatches)]
    crng = check_rng(opt.seed, "c6.convergence")
    errs = convergence_errors(CONVERGENCE_REPEATS, crng)
    e = np.array([errs[N] for N in sorted(errs)])
    ratios = e[1:] / e[:-1]
    ok = bool(np.all((ratios > 0.35) & (ratios < 0.65)))
    out.append(Check("c6.convergence.ratio", float(np.abs(ratios - 0.5).max()), 0.15, ok,
                     detail={"N": sorted(errs), "mean_sup_error": e.tolist(), "ratios": ratios.tolist()}))
    return out


def criterion_7(opt: SuiteOptions) -> list:
    out = []
    rng = check_rng(opt.seed, "c7.signature")
    for cname in ("quadratic", "bilinear", "log", "sqrt1p"):
        cost = get_cost(cname, 2)
        pts = rng.uniform(-1, 1, (1000, 4))
        d = np.linalg.norm(pts[:, :2] - pts[:, 2:], axis=1)
        pts[d < 0.05, 2:] += 0.1  # keep clear of the log cost's singular diagonal
        mats = base_metric_matrix(cost, pts[:, :2], pts[:, 2:])
        bad = sum(signature(M) != (2, 2) for M in mats)
        out.append(Check(f"c7.signature.{cname}", float(bad), 0.0, bad == 0, bad))
    worst = 0.0
    for name, cost, rho, rhob, F, dom in calibration_families():
        worst = max(worst, lagrangian_residual(F, cost, dom))
    out.append(Check("c7.lagrangian.optimal-families", worst, 1e-6, worst < 1e-6))
    drng = check_rng(opt.seed, "c7.determinant-inequality")
    fails = 0
    for _ in range(1000):
        n = int(drng.integers(1, 6))
        G = drng.normal(size=(n, n))
        W = drng.normal(size=(n, n))
        B = G @ G.T + 1e-3 * np.eye(n) + (W - W.T)
        fails += not determinant_inequality_check(B).ok
    out.append(Check("c7.determinant-inequality", float(fails), 0.0, fails == 0, fails))
    mrng = check_rng(opt.seed, "c7.cyclical-monotonicity")
    worst_gain, ok = -np.inf, True
    for cost in (quadratic(1), quadratic(2), bilinear(2), sqrt1p(2)):
        x = mrng.normal(size=(30, cost.n))
        xb = mrng.normal(size=(30, cost.n))
        a, b = tr.solve_discrete(x, xb, cost).pairs()
        rep = tr.cyclical_monotonicity_check(a, b, cost, max_cycle=3, rng=mrng)
        worst_gain, ok = max(worst_gain, rep.worst_gain), ok and rep.ok
    for name, cost, rho, rhob, F, dom in calibration_families():
        pts = dom.with_resolution(8 if cost.n == 1 else 5).nodes().reshape(-1, cost.n)
        rep = tr.cyclical_monotonicity_check(pts, F(pts), cost, max_cycle=3, rng=mrng)
        worst_gain, ok = max(worst_gain, rep.worst_gain), ok and rep.ok
    out.append(Check("c7.cyclical-monotonicity", worst_gain, 1e-10, ok))
    return out


def criterion_8(opt: SuiteOptions) -> list:
    out = []
    for label in ("exponent", "half"):
        caught = []
        for name, cost, rho, rhob, F, dom in calibration_families():
            r = calibration_equality_check(F, cost, rho, rhob, dom, variant=mutated_variant(label, cost.n))
            caught.append(r.max_gap >= 1e-6)
        out.append(Check(f"c8.mutation.{label}", float(sum(caught)), None, all(caught),
                         detail={"families_detecting": int(sum(caught))}))
    cur = cal.PolyhedralCurrent.from_graph(tr.identity_map(2), DomainSpec([0, 0], [1, 1], 5))
    simp = cur.simplices.copy()
    simp[3, [0, 1]] = simp[3, [1, 0]]
    try:
        cal.PolyhedralCurrent(cur.vertices, simp)
        rejected = False
    except OrientationError:
        rejected = True
    out.append(Check("c8.mutation.orientation-flip", float(rejected), None, rejected))
    return out


CRITERIA: dict[int, Callable[[SuiteOptions], list]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
    5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8,
}


def run_criterion(k: int, opt: SuiteOptions, report: VerificationReport) -> tuple[list, float]:
    t0 = time.perf_counter()
    checks = report.run(f"c{k}.error", lambda: CRITERIA[k](opt))
    dt = time.perf_counter() - t0
    if opt.budgets:
        report.add(Check(f"c{k}.runtime", dt, BUDGETS[k], dt < BUDGETS[k]))
    return checks, dt


def run_suite(opt: Optional[SuiteOptions] = None, only=None) -> tuple[VerificationReport, dict]:
    opt = opt or SuiteOptions()
    report = VerificationReport("suite", opt.seed, {"mass_mesh": opt.mass_mesh, "fd_scale": opt.fd_scale})
    timings = {}
    for k in sorted(CRITERIA):
        if only is not None and k not in only:
            continue
        _, timings[k] = run_criterion(k, opt, report)
    return report, timings


def criterion_passed(report: VerificationReport, k: int, include_runtime: bool = True) -> bool:
    rel = [c for c in report.checks if c.name.startswith(f"c{k}.")
           and (include_runtime or not c.name.endswith(".runtime"))]
    return bool(rel) and all(c.passed for c in rel)
