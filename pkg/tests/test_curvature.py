import math

import numpy as np
import pytest

from otcalib import curvature as cu
from otcalib.cost import bilinear, log_cost, mixed_hessian, quadratic, sqrt1p
from otcalib.domain import DomainSpec, gaussian, uniform
from otcalib.errors import BoundaryTooClose, NotVanishing, NoVanishingComponent
from otcalib.geometry import base_metric_field

G2 = gaussian([0, 0], np.eye(2))


def test_sign_convention_on_sphere():
    th = 0.9
    R = cu.riemann_tensor(cu.sphere_metric, np.array([th, 0.3]), 1e-3)
    assert R[0, 1, 1, 0] == pytest.approx(math.sin(th) ** 2, rel=1e-5)
    assert R[0, 1, 0, 1] == pytest.approx(-math.sin(th) ** 2, rel=1e-5)


def test_polar_coordinates_are_flat():
    R = cu.riemann_tensor(cu.polar_flat_metric, np.array([1.3, 0.4]), 1e-3)
    assert np.abs(R).max() < 1e-6


@pytest.mark.parametrize("cost", [quadratic(2), bilinear(2)])
def test_flat_costs(cost):
    p = np.array([0.1, -0.2, 0.3, 0.5])
    assert np.abs(cu.riemann_tensor(base_metric_field(cost), p, 1e-3)).max() < 1e-8
    assert np.abs(cu.exact_base_riemann(cost.name, 2, p)).max() == 0


def test_fd_matches_exact_and_converges():
    p = np.array([0.2, -0.1, 0.5, 0.3])
    field_ = base_metric_field(sqrt1p(2))
    E = cu.exact_base_riemann("sqrt1p", 2, p)
    assert np.abs(cu.richardson_riemann(field_, p, 2e-3) - E).max() < 1e-6
    coarse = np.abs(cu.riemann_tensor(field_, p, 4e-3) - E).max()
    fine = np.abs(cu.riemann_tensor(field_, p, 2e-3) - E).max()
    assert coarse / fine > 3.5


def test_riemann_symmetries():
    R = cu.exact_base_riemann("log", 2, np.array([0.1, 0.2, 1.0, -0.7]))
    np.testing.assert_allclose(R, -R.transpose(1, 0, 2, 3), atol=1e-12)
    np.testing.assert_allclose(R, -R.transpose(0, 1, 3, 2), atol=1e-12)
    np.testing.assert_allclose(R, R.transpose(2, 3, 0, 1), atol=1e-12)
    bianchi = R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)
    assert np.abs(bianchi).max() < 1e-10


def test_vanishing_rotation():
    rng = np.random.default_rng(0)
    ddc = rng.normal(size=(3, 3))
    for i in range(3):
        for j in range(3):
            Q = cu.vanishing_rotation(ddc, i, j)
            np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-12)
            assert abs((ddc @ Q)[i, j]) < 1e-12
    with pytest.raises(NoVanishingComponent):
        cu.vanishing_rotation(np.array([[2.0]]), 0, 0)


def test_mtw_flat_costs_are_nonnegative():
    pts = np.random.default_rng(1).uniform(-0.5, 0.5, (4, 4))
    for cost in (quadratic(2), bilinear(2)):
        r = cu.mtw_check(cost, pts, pipeline="exact")
        assert r.classification == "nonnegative"
        assert np.abs(r.per_point).max() < 1e-8


def test_mtw_pipelines_agree():
    pts = np.random.default_rng(2).uniform(-0.5, 0.5, (3, 4))
    fd = cu.mtw_check(sqrt1p(2), pts, fd_step=2e-3)
    ex = cu.mtw_check(sqrt1p(2), pts, pipeline="exact")
    assert fd.classification == ex.classification
    np.testing.assert_allclose(fd.per_point, ex.per_point, atol=1e-4)


def test_conformal_identity_at_vanishing_component():
    p = np.array([0.3, 0.1, 0.3, -0.6])  # xbar_1 = x_1
    ddc = mixed_hessian(sqrt1p(2), p[:2], p[2:])
    assert abs(ddc[0, 1]) < 1e-12
    ci = cu.conformal_identity_check(sqrt1p(2), G2, G2, p, (0, 1), 2e-3)
    assert ci.rel_error < 1e-3
    assert ci.factor > 0


def test_conformal_identity_with_rotation_on_flat_cost():
    p = np.array([0.3, -0.2, 0.1, 0.4])
    ci = cu.conformal_identity_check(quadratic(2), G2, G2, p, (0, 0), 1e-3, rotate=True)
    assert abs(ci.lhs) < 1e-6 and ci.rhs == 0


def test_conformal_identity_requires_vanishing():
    with pytest.raises(NotVanishing):
        cu.conformal_identity_check(quadratic(2), G2, G2, np.zeros(4), (0, 0), 1e-3)
    u1 = uniform([0.0], [1.0])
    with pytest.raises(NoVanishingComponent):
        cu.conformal_identity_check(quadratic(1), u1, u1, np.array([0.5, 0.5]), (0, 0), 1e-3, rotate=True)


def test_boundary_too_close_near_cut_locus():
    p = np.array([0.0, 0.0, 1e-4, 0.0])
    with pytest.raises(BoundaryTooClose):
        cu.riemann_tensor(base_metric_field(log_cost(2)), p, 1e-3)


def test_sample_points_avoid():
    box = DomainSpec([-1.0], [1.0], 3)
    rng = np.random.default_rng(3)
    pts = cu.sample_points(box, box, 50, rng, avoid=lambda x, xb: np.abs(x - xb).min() < 0.1)
    assert pts.shape == (50, 2) and np.all(np.abs(pts[:, 0] - pts[:, 1]) >= 0.1)
