import math

import numpy as np
import pytest

from otcalib import calibration as cal
from otcalib import io
from otcalib import transport as tr
from otcalib.cost import bilinear, quadratic
from otcalib.domain import DomainSpec, gaussian, uniform
from otcalib.errors import BadSignature, NotComparable, OrientationError
from otcalib.geometry import TangentPlane, base_metric, base_metric_field, conformal_metric, conformal_metric_field

U1 = uniform([0.0], [1.0])


def test_eval_calibration_examples():
    phi = cal.CalibrationForm(U1, U1)
    assert cal.eval_calibration(phi, [0.3], [0.3], TangentPlane.graph([[1.0]])) == pytest.approx(1.0)
    assert cal.eval_calibration(phi, [0.3], [0.3], TangentPlane.from_parts([[1.0]], [[0.0]])) == pytest.approx(0.5)
    g = gaussian([0.0], [[1.0]])
    phi = cal.CalibrationForm(g, g)
    for x in (-1.0, 0.0, 0.7):
        assert cal.eval_calibration(phi, [x], [x], TangentPlane.graph([[1.0]])) == pytest.approx(float(g(np.array([x]))))


def test_form_rescales_with_frame():
    phi = cal.CalibrationForm(uniform([0, 0], [1, 1]), uniform([0, 0], [1, 1]))
    rng = np.random.default_rng(0)
    fr = rng.normal(size=(4, 2))
    A = rng.normal(size=(2, 2))
    x = np.array([0.5, 0.5])
    assert phi(x, x, fr @ A) == pytest.approx(np.linalg.det(A) * phi(x, x, fr))


def test_comass_is_one_for_calibration():
    m = conformal_metric(quadratic(1), U1, U1, [0.5], [0.5])
    r = cal.numeric_comass(cal.CalibrationForm(U1, U1), m, [0.5], [0.5])
    assert r.bounded and r.estimate == pytest.approx(1.0, abs=1e-6)
    r2 = cal.numeric_comass(cal.CalibrationForm(U1, U1, scale=2.0), m, [0.5], [0.5])
    assert r2.estimate == pytest.approx(2.0, abs=1e-5)


def test_comass_two_dimensional():
    g = gaussian([0, 0], [[1, 0.3], [0.3, 0.5]])
    gb = gaussian([0, 0], [[2, -0.4], [-0.4, 1]])
    x, xb = np.array([0.2, -0.1]), np.array([0.1, 0.3])
    r = cal.numeric_comass(cal.CalibrationForm(g, gb), conformal_metric(quadratic(2), g, gb, x, xb), x, xb)
    assert r.bounded and 1 - 1e-3 <= r.estimate <= 1 + 1e-2


def test_negative_form_unbounded():
    m = conformal_metric(quadratic(1), U1, U1, [0.5], [0.5])
    r = cal.numeric_comass(cal.VolumeForm("M", -1.0), m, [0.5], [0.5])
    assert not r.bounded


def test_comass_requires_oriented_split_metric():
    with pytest.raises(BadSignature):
        cal.numeric_comass(cal.CalibrationForm(U1, U1), np.eye(2), [0.5], [0.5])
    with pytest.raises(BadSignature):
        cal.numeric_comass(cal.CalibrationForm(U1, U1), -base_metric(quadratic(1), [0], [0]).matrix, [0.5], [0.5])


def test_oriented_rotation():
    ddc = -np.array([[0.0, 1.0], [-1.0, 0.0]])
    P = cal.oriented_rotation(ddc)
    S = -ddc @ P
    np.testing.assert_allclose(S, S.T, atol=1e-12)
    assert np.linalg.eigvalsh(S).min() > 0


def test_sweep_example_and_random():
    phi = cal.CalibrationForm(U1, U1)
    rep = cal.calibration_inequality_sweep(phi, quadratic(1), U1, U1, [[0.5]], [[0.5]], [[[2.0]]])
    assert rep.gaps[0] == pytest.approx(1.5 - math.sqrt(2))
    rng = np.random.default_rng(3)
    g = gaussian([0, 0], np.eye(2))
    N = 300
    M = rng.normal(size=(N, 2, 2))
    K = M @ np.swapaxes(M, 1, 2) + 0.05 * np.eye(2) + (lambda W: W - np.swapaxes(W, 1, 2))(rng.normal(size=(N, 2, 2)))
    rep = cal.calibration_inequality_sweep(cal.CalibrationForm(g, g), bilinear(2), g, g,
                                           rng.normal(size=(N, 2)), rng.normal(size=(N, 2)), K)
    assert rep.ok


def test_polyhedral_mass_examples():
    dom = DomainSpec([0.0], [1.0], 11)
    cur = cal.PolyhedralCurrent.from_graph(tr.identity_map(1), dom)
    assert cal.polyhedral_mass(cur, conformal_metric_field(quadratic(1), U1, U1)) == pytest.approx(1.0)
    assert cal.polyhedral_mass(cur, base_metric_field(quadratic(1))) == pytest.approx(math.sqrt(2))
    flipped = cal.PolyhedralCurrent.from_graph(tr.linear_map([[-1.0]], [1.0]), dom)
    assert cal.polyhedral_mass(flipped, base_metric_field(quadratic(1))) == -math.inf


def test_mass_compare_tie_and_flag():
    dom = DomainSpec([0.0], [1.0], 65)
    mc = cal.mass_compare(tr.identity_map(1), [tr.identity_map(1)], quadratic(1), U1, U1, dom)
    assert mc.optimal_wins and mc.rows[0].mass == pytest.approx(mc.rows[1].mass)
    mc = cal.mass_compare(tr.identity_map(1), [tr.sawtooth_map(0.0, 1.0)], quadratic(1), U1, U1, dom)
    assert mc.optimal_wins and mc.rows[1].flagged and mc.rows[1].mass == -math.inf
    assert mc.phi_error < 1e-10


def test_mass_compare_rotations():
    g = gaussian([0, 0], np.eye(2))
    dom = DomainSpec([-4.0, -4.0], [4.0, 4.0], 33)
    theta = math.radians(30)
    mc = cal.mass_compare(tr.identity_map(2), [tr.rotation_map(theta)], bilinear(2), g, g, dom)
    best = mc.rows[0].mass
    assert mc.optimal_wins
    assert mc.rows[1].mass == pytest.approx(best * math.cos(theta), abs=5e-3)


def test_mass_compare_not_comparable():
    dom = DomainSpec([0.0], [1.0], 33)
    with pytest.raises(NotComparable):
        cal.mass_compare(tr.identity_map(1), [tr.linear_map([[0.5]])], quadratic(1), U1, U1, dom)


def test_kuhn_orientation():
    for res in ((5,), (4, 3), (3, 3, 3)):
        simp = cal.kuhn_simplices(res)
        cal.check_orientation_consistency(simp)
        dom = DomainSpec([0.0] * len(res), [1.0] * len(res), res)
        cur = cal.PolyhedralCurrent.from_graph(tr.identity_map(len(res)), dom)
        n = len(res)
        assert np.all(np.linalg.det(cur.frames()[:, :n]) > 0)
    bad = cal.kuhn_simplices((3, 3)).copy()
    bad[0, [0, 1]] = bad[0, [1, 0]]
    with pytest.raises(OrientationError):
        cal.check_orientation_consistency(bad)


def test_mesh_roundtrip(tmp_path):
    cur = cal.PolyhedralCurrent.from_graph(tr.identity_map(2), DomainSpec([0.0, 0.0], [1.0, 1.0], 4))
    io.write_mesh(tmp_path / "mesh", cur.vertices, cur.simplices)
    v, s = io.read_mesh(tmp_path / "mesh")
    np.testing.assert_array_equal(v, cur.vertices)
    np.testing.assert_array_equal(s, cur.simplices)
    assert (tmp_path / "mesh" / "vertices.csv").read_text().splitlines()[0] == "x1,x2,xbar1,xbar2"
