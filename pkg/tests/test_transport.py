import itertools
import math

import numpy as np
import pytest

from otcalib import transport as tr
from otcalib.cost import bilinear, eval_cost, log_cost, quadratic, sqrt1p
from otcalib.domain import DomainSpec, from_grid, gaussian, uniform
from otcalib.errors import FlatCDF, NoRoot, NotPositiveDefinite, SizeMismatch


def brute(C):
    m = C.shape[0]
    return min(sum(C[i, p[i]] for i in range(m)) for p in itertools.permutations(range(m)))


def test_monotone_uniform_scaling():
    F = tr.solve_1d_monotone(uniform([0.0], [1.0]), uniform([0.0], [2.0]))
    x = np.linspace(0, 1, 11)[:, None]
    np.testing.assert_allclose(F(x), 2 * x, atol=1e-12)
    np.testing.assert_allclose(F.jacobian(x)[..., 0, 0], 2.0, atol=1e-8)


def test_monotone_identity_and_gaussian():
    g = gaussian([0.0], [[1.0]])
    x = np.linspace(-3, 3, 13)[:, None]
    np.testing.assert_allclose(tr.solve_1d_monotone(g, g)(x), x, atol=1e-9)
    F = tr.solve_1d_monotone(g, gaussian([0.0], [[9.0]]))
    np.testing.assert_allclose(F(x), 3 * x, atol=1e-8)


def test_monotone_grid_path():
    xs = np.linspace(0, 1, 401)
    rho = from_grid([xs], np.ones_like(xs), name="flat")
    rhob = from_grid([xs * 2], np.ones_like(xs), name="flat2")
    x = np.linspace(0.05, 0.95, 7)[:, None]
    np.testing.assert_allclose(tr.solve_1d_monotone(rho, rhob)(x), 2 * x, atol=1e-9)
    # without closed-form CDFs the tabulated route is used
    from dataclasses import replace
    F = tr.solve_1d_monotone(replace(rho, cdf=None, ppf=None), replace(rhob, cdf=None, ppf=None))
    assert F.kind == "grid-interpolated"
    np.testing.assert_allclose(F(x), 2 * x, atol=1e-6)
    np.testing.assert_allclose(F.jacobian(x)[..., 0, 0], 2.0, atol=1e-4)


def test_monotone_flat_cdf():
    xs = np.linspace(0, 1, 11)
    from otcalib.domain import DensitySpec, DomainSpec as DS
    bad = DensitySpec(1, lambda x: np.where(np.abs(x[..., 0] - 0.5) < 0.2, 0.0, 1.0 / 0.6), DS([0.0], [1.0], 11))
    with pytest.raises(FlatCDF):
        tr.solve_1d_monotone(bad, uniform([0.0], [1.0]))


def test_discrete_sorted_and_single():
    q = quadratic(1)
    x = np.sort(np.random.default_rng(0).normal(size=7))[:, None]
    xb = np.sort(np.random.default_rng(1).normal(size=7))[:, None]
    plan = tr.solve_discrete(x, xb, q)
    np.testing.assert_array_equal(plan.matching, np.arange(7))
    plan = tr.solve_discrete([[0.3]], [[0.9]], q)
    np.testing.assert_array_equal(plan.matching, [0])
    with pytest.raises(SizeMismatch):
        tr.solve_discrete(x, xb[:3], q)


@pytest.mark.parametrize("cost", [quadratic(2), sqrt1p(2), bilinear(2)])
def test_discrete_matches_brute_force(cost):
    rng = np.random.default_rng(4)
    x, xb = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    plan = tr.solve_discrete(x, xb, cost)
    got = tr.total_cost(plan, None, cost) * 6
    assert got == pytest.approx(brute(tr.cost_matrix(cost, x, xb)), abs=1e-12)


def test_plan_transposition():
    rng = np.random.default_rng(5)
    x, xb = rng.normal(size=(5, 1)), rng.normal(size=(5, 1))
    plan = tr.solve_discrete(x, xb, quadratic(1))
    back = plan.transposed()
    a, b = back.pairs()
    c, d = plan.pairs()
    assert {tuple(r) for r in np.hstack([b, a])} == {tuple(r) for r in np.hstack([c, d])}


def test_gaussian_map_examples():
    np.testing.assert_allclose(tr.gaussian_map(np.eye(2), np.eye(2)).matrix, np.eye(2))
    np.testing.assert_allclose(tr.gaussian_map(np.eye(2), 4 * np.eye(2)).matrix, 2 * np.eye(2))
    A = tr.gaussian_map(np.diag([1.0, 4.0]), np.diag([9.0, 1.0])).matrix
    np.testing.assert_allclose(A, np.diag([3.0, 0.5]), atol=1e-12)
    S, Sb = np.array([[1, 0.3], [0.3, 0.5]]), np.array([[2, -0.4], [-0.4, 1]])
    A = tr.gaussian_map(S, Sb).matrix
    np.testing.assert_allclose(A @ S @ A.T, Sb, atol=1e-12)
    np.testing.assert_allclose(A, A.T)
    with pytest.raises(NotPositiveDefinite):
        tr.gaussian_map(np.eye(2), -np.eye(2))


def test_map_from_potential_examples():
    x = np.random.default_rng(6).uniform(-1, 1, (5, 2))
    F = tr.map_from_potential(lambda z: np.zeros(z.shape[:-1]), quadratic(2))
    np.testing.assert_allclose(F(x), x, atol=1e-10)
    b = np.array([0.3, -0.1])
    F = tr.map_from_potential(lambda z: z @ b, quadratic(2))
    np.testing.assert_allclose(F(x), x + b, atol=1e-10)
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    F = tr.map_from_potential(lambda z: 0.5 * np.einsum("...i,ij,...j", z, Q, z), bilinear(2),
                              grad_u=lambda z: z @ Q)
    np.testing.assert_allclose(F(x), x @ Q, atol=1e-10)


def test_map_from_potential_nonlinear_cost():
    # sqrt1p: Dc = d / c, so prescribing Du = -d/c for a known shift recovers it
    cost = sqrt1p(1)
    shift = 0.4
    F = tr.map_from_potential(None, cost, grad_u=lambda z: shift / np.sqrt(1 + shift ** 2) * np.ones_like(z))
    x = np.linspace(-1, 1, 5)[:, None]
    np.testing.assert_allclose(F(x), x + shift, atol=1e-10)


def test_map_from_potential_noroot():
    box = DomainSpec([0.0], [1.0], 5)
    F = tr.map_from_potential(lambda z: 5.0 * z[..., 0], quadratic(1), target=box)
    with pytest.raises(NoRoot):
        F(np.array([[0.5]]))


def test_potentials_and_gaps():
    S, Sb = np.array([[1, 0.3], [0.3, 0.5]]), np.array([[2, -0.4], [-0.4, 1]])
    F = tr.gaussian_map(S, Sb)
    pot = tr.gaussian_potentials(F.matrix)
    rng = np.random.default_rng(7)
    xs, xbs = rng.normal(size=(60, 2)), rng.normal(size=(60, 2))
    slack, on_graph = tr.potential_gaps(pot, quadratic(2), F, xs, xbs)
    assert slack <= 1e-12 and on_graph < 1e-12


def test_total_cost_examples():
    assert tr.total_cost(tr.identity_map(1), uniform([0.0], [1.0]), quadratic(1)) == pytest.approx(0.0)
    F = tr.linear_map([[2.0]])
    dom = DomainSpec([0.0], [1.0], 2001)
    assert tr.total_cost(F, uniform([0.0], [1.0]), quadratic(1), dom) == pytest.approx(1 / 6, abs=1e-6)
    C = tr.cost_matrix(quadratic(1), [[0.0], [1.0]], [[0.0], [1.0]])
    assert C[0, 0] + C[1, 1] == 0 and C[0, 1] + C[1, 0] == pytest.approx(1.0)


def test_cyclical_monotonicity_examples():
    q = quadratic(1)
    assert tr.cyclical_monotonicity_check([[0.0], [1.0]], [[0.0], [2.0]], q).ok
    rep = tr.cyclical_monotonicity_check([[0.0], [1.0]], [[2.0], [0.0]], q)
    assert not rep.ok and rep.violation is not None
    assert tr.cyclical_monotonicity_check([[0.0]], [[5.0]], q).ok


def test_cyclical_monotonicity_catches_three_cycle():
    # pairwise swaps never help, only the 3-cycle does
    C = np.array([[0.0, 0.0, 10.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0]]) + np.eye(3) * 1.0
    idx = np.arange(3)
    from otcalib.cost import CostField
    cost = CostField(1, lambda x, xb: C[x[..., 0].astype(int), xb[..., 0].astype(int)])
    pts = idx[:, None].astype(float)
    assert tr.cyclical_monotonicity_check(pts, pts, cost, max_cycle=2).ok
    assert not tr.cyclical_monotonicity_check(pts, pts, cost, max_cycle=3).ok


def test_weak_pushforward():
    u = uniform([0.0], [1.0])
    assert tr.weak_pushforward_residual(tr.sawtooth_map(0.0, 1.0), u, u) < 1e-2
    assert tr.weak_pushforward_residual(tr.linear_map([[0.5]]), u, u) > 0.05


def test_fd_jacobian_agrees():
    F = tr.sinusoid_map(0.1)
    x = np.linspace(0, 1, 9)[:, None]
    np.testing.assert_allclose(F.fd_jacobian(x), F.jacobian(x), atol=1e-9)
    np.testing.assert_allclose(F.second_derivatives(x, 1e-4)[..., 0, 0, 0],
                               -0.1 * math.pi ** 2 * np.sin(math.pi * x[:, 0]), atol=1e-6)
