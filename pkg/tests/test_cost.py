import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otcalib.cost import (CostField, check_nondegenerate, check_twist, eval_cost, fd_mixed_hessian,
                          get_cost, grad_x, grad_xbar, grid_cost, log_cost, mixed_hessian, quadratic,
                          sqrt1p, with_domain)
from otcalib.domain import DomainSpec
from otcalib.errors import CutLocus, DegenerateStep

coords = st.floats(-2, 2, allow_nan=False)


def test_eval_examples():
    assert eval_cost(quadratic(1), [1.0], [3.0]) == pytest.approx(2.0)
    assert eval_cost(get_cost("bilinear", 2), [1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
    assert eval_cost(log_cost(1), [0.0], [1.0]) == pytest.approx(0.0)


def test_cut_locus_raises():
    with pytest.raises(CutLocus):
        eval_cost(log_cost(1), [0.5], [0.5])
    with pytest.raises(CutLocus):
        mixed_hessian(log_cost(2), [0.0, 0.0], [0.0, 0.0])


@pytest.mark.parametrize("name", ["quadratic", "bilinear"])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_constant_mixed_hessian(name, n):
    rng = np.random.default_rng(n)
    H = mixed_hessian(get_cost(name, n), rng.normal(size=n), rng.normal(size=n))
    np.testing.assert_array_equal(H, -np.eye(n))


def test_log_mixed_hessian_matches_fd():
    c = log_cost(1)
    a = mixed_hessian(c, [0.0], [1.0])
    f = fd_mixed_hessian(c, [0.0], [1.0])
    assert a[0, 0] == pytest.approx(-1.0)
    assert abs(f[0, 0] - a[0, 0]) / abs(a[0, 0]) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.lists(coords, min_size=4, max_size=4))
def test_closed_forms_agree_with_fd(p):
    x, xb = np.array(p[:2]), np.array(p[2:])
    for c in (sqrt1p(2), quadratic(2)):
        a = mixed_hessian(c, x, xb)
        np.testing.assert_allclose(fd_mixed_hessian(c, x, xb, h=1e-3), a, atol=1e-5)
        plain = c.without_closed_forms()
        np.testing.assert_allclose(grad_x(plain, x, xb), grad_x(c, x, xb), atol=1e-7)
        np.testing.assert_allclose(grad_xbar(plain, x, xb), grad_xbar(c, x, xb), atol=1e-7)


def test_fd_mixed_hessian_second_order():
    c = sqrt1p(2)
    x, xb = np.array([0.3, -0.2]), np.array([-0.5, 0.4])
    exact = mixed_hessian(c, x, xb)
    e1 = np.abs(fd_mixed_hessian(c, x, xb, h=1e-2) - exact).max()
    e2 = np.abs(fd_mixed_hessian(c, x, xb, h=5e-3) - exact).max()
    assert 3.5 < e1 / e2 < 4.5


def test_degenerate_step():
    c = quadratic(1).without_closed_forms()
    with pytest.raises(DegenerateStep):
        fd_mixed_hessian(c, [1.0], [2.0], h=1e-14)


def test_with_domain_scales_step():
    c = with_domain(quadratic(2), DomainSpec([0, 0], [3, 4], 5))
    assert c.fd_step == pytest.approx(5e-4)


def test_twist_examples():
    assert check_twist(quadratic(1), [0.0], np.linspace(0, 1, 11)[:, None]).ok
    cosine = CostField(1, lambda x, xb: np.cos(x - xb)[..., 0], name="cos")
    grid = np.linspace(0, 2 * np.pi, 64, endpoint=False)[:, None]
    rep = check_twist(cosine, [0.0], grid)
    assert not rep.ok and rep.colliding_pair is not None
    assert check_twist(quadratic(1), [0.0], [[0.3]]).ok


def test_twist_respects_cut_locus():
    with pytest.raises(CutLocus):
        check_twist(log_cost(1), [0.0], [[0.0], [1.0]])


def test_nondegenerate_examples():
    for n in (1, 2, 3):
        assert check_nondegenerate(quadratic(n), np.zeros(n), np.ones(n))
        assert np.linalg.det(mixed_hessian(quadratic(n), np.zeros(n), np.ones(n))) == pytest.approx((-1) ** n)
    rank1 = CostField(2, lambda x, xb: x[..., 0] * xb[..., 0], name="rank1")
    assert not check_nondegenerate(rank1, [0.1, 0.2], [0.3, 0.4])
    assert check_nondegenerate(log_cost(1), [0.0], [1.0])


def test_transposed_cost():
    c = sqrt1p(2)
    t = c.transposed()
    x, xb = np.array([0.1, 0.2]), np.array([-0.3, 0.5])
    assert eval_cost(t, xb, x) == pytest.approx(eval_cost(c, x, xb))
    np.testing.assert_allclose(mixed_hessian(t, xb, x), mixed_hessian(c, x, xb).T)


def test_grid_cost_interpolates_quadratic():
    xs = np.linspace(-1, 1, 41)
    vals = 0.5 * (xs[:, None] - xs[None, :]) ** 2
    c = grid_cost(xs, xs, vals)
    assert c.name == "custom-grid"
    assert eval_cost(c, [0.13], [-0.41]) == pytest.approx(0.5 * 0.54 ** 2, abs=1e-8)
    assert mixed_hessian(c, [0.13], [-0.41])[0, 0] == pytest.approx(-1.0, abs=1e-6)


def test_unknown_cost():
    with pytest.raises(KeyError):
        get_cost("nope", 1)
