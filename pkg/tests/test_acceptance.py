"""Acceptance battery: one test per criterion, run once through the suite runner.

Run with ``pytest tests/test_acceptance.py -s`` to see the PASS/FAIL summary.
"""

import math

import numpy as np
import pytest

from otcalib import calibration as cal
from otcalib import graph as gr
from otcalib import transport as tr
from otcalib.cost import quadratic
from otcalib.domain import DomainSpec, uniform
from otcalib.geometry import conformal_metric_field, conformal_metric_matrix
from otcalib.suite import BUDGETS, CRITERIA, SuiteOptions, criterion_passed, run_suite

TITLES = {
    1: "calibration equality",
    2: "mass maximality",
    3: "comass of the calibration form",
    4: "zero mean curvature",
    5: "conformal curvature identity",
    6: "oracle equivalence",
    7: "structural suite",
    8: "mutation test",
}


@pytest.fixture(scope="module")
def suite_run(request):
    report, timings = run_suite(SuiteOptions())
    yield report, timings
    lines = []
    for k in sorted(CRITERIA):
        status = "PASS" if criterion_passed(report, k) else "FAIL"
        lines.append(f"criterion {k} ({TITLES[k]}): {status}  [{timings[k]:.1f}s / budget {BUDGETS[k]}s]")
    capman = request.config.pluginmanager.getplugin("capturemanager")
    with capman.global_and_fixture_disabled():
        print("\n" + "\n".join(lines))


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(suite_run, k):
    report, timings = suite_run
    rel = [c for c in report.checks if c.name.startswith(f"c{k}.")]
    failing = [(c.name, c.value, c.tolerance, c.detail) for c in rel if not c.passed]
    print(f"criterion {k}: {'PASS' if not failing else 'FAIL'} ({timings[k]:.1f}s)")
    assert rel, f"criterion {k} produced no checks"
    assert not failing, failing


def test_doubled_fd_step_still_passes():
    # tolerances are set with enough convergence margin to survive a coarser stencil
    report, _ = run_suite(SuiteOptions(fd_scale=2.0, budgets=False), only={1, 4, 5})
    assert report.verdict, report.failing()


@pytest.mark.parametrize("mutation", ["exponent", "half"])
def test_mutations_fail_calibration_equality(mutation):
    report, _ = run_suite(SuiteOptions(mutation=mutation, budgets=False), only={1})
    assert not criterion_passed(report, 1)


def _first_variation(F, bump, res=2001, eps=1e-4):
    """Mass derivative along ``(0, bump)`` two ways: polyhedral difference and ``-int h(H, V) dvol``."""
    U = uniform([0.0], [1.0])
    cost = quadratic(1)
    dom = DomainSpec([0.0], [1.0], res)
    field_ = conformal_metric_field(cost, U, U)

    def mass(e):
        G = tr.TransportMap(1, lambda x: F(x) + e * bump(x[..., 0])[..., None])
        return cal.polyhedral_mass(cal.PolyhedralCurrent.from_graph(G, dom), field_)

    dm = (mass(eps) - mass(-eps)) / (2 * eps)
    mc = gr.mean_curvature(gr.GraphSurface.build(F, dom), cost, U, U, 1e-3)
    x = mc.points
    h = conformal_metric_matrix(cost, U, U, x, F(x))
    V = np.zeros((len(x), 2))
    V[:, 1] = bump(x[:, 0])
    vol = np.sqrt(gr.pullback_metric(F, cost, U, U, x)[:, 0, 0])
    dh = np.trapezoid(-np.einsum("ka,kab,kb->k", mc.H, h, V) * vol, x[:, 0])
    return dm, dh


def test_mean_curvature_matches_first_variation_of_mass():
    def bump(t):
        return np.where((t > 0.2) & (t < 0.8), np.sin(math.pi * (t - 0.2) / 0.6) ** 2, 0.0)

    dm, dh = _first_variation(tr.sinusoid_map(0.1), bump)
    assert abs(dm) > 1e-2
    assert dh == pytest.approx(dm, rel=1e-4)
    dm0, dh0 = _first_variation(tr.identity_map(1), bump)
    assert abs(dm0) < 1e-8 and abs(dh0) < 1e-8
