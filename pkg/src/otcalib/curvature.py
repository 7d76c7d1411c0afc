"""Riemann curvature of cost-induced metrics and the MTW sign test.

Sign convention: ``R_{abcd} = h(R(d_a, d_b) d_c, d_d)`` with
``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]``, so ``R_{abba} > 0`` for
orthonormal ``a, b`` on the round sphere.  MTW components are ``R[i, jb, jb, i]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .cost import CostField, mixed_hessian
from .domain import DensitySpec
from .errors import BoundaryTooClose, CutLocus, Degenerate, NoVanishingComponent, NotVanishing
from .geometry import (DEFAULT_VARIANT, MetricVariant, base_metric_field, conformal_factor,
                       conformal_metric_field)

VANISH_RTOL = 1e-8


def riemann_from_derivatives(g, dg, ddg) -> np.ndarray:
    """Assemble ``R_{abcd}`` from the metric and its first/second partials.

    ``dg[a, b, e] = d_e g_ab`` and ``ddg[a, b, e, f] = d_e d_f g_ab``.
    """
    ginv = np.linalg.inv(g)
    lower = 0.5 * (np.einsum("dcb->dbc", dg) + dg - np.einsum("bcd->dbc", dg))  # Gamma_{d,bc}
    gam = np.einsum("ad,dbc->abc", ginv, lower)
    # W_{rsmn} = 1/2 (g_rn,sm + g_sm,rn - g_rm,sn - g_sn,rm) + g_zh (G^z_sm G^h_rn - G^z_sn G^h_rm)
    t1 = np.einsum("rnsm->rsmn", ddg)
    t2 = np.einsum("smrn->rsmn", ddg)
    t3 = np.einsum("rmsn->rsmn", ddg)
    t4 = np.einsum("snrm->rsmn", ddg)
    quad = (np.einsum("zh,zsm,hrn->rsmn", g, gam, gam)
            - np.einsum("zh,zsn,hrm->rsmn", g, gam, gam))
    W = 0.5 * (t1 + t2 - t3 - t4) + quad
    return np.swapaxes(W, -1, -2)


def fd_metric_derivatives(metric_field: Callable, point, h: float):
    """Metric, first and second partials by central differences (all O(h^2))."""
    p = np.asarray(point, dtype=float)
    D = p.size
    eye = np.eye(D)
    stencil = [p]
    for e in range(D):
        stencil += [p + h * eye[e], p - h * eye[e]]
    pairs = [(e, f) for e in range(D) for f in range(e + 1, D)]
    for e, f in pairs:
        for se in (1, -1):
            for sf in (1, -1):
                stencil.append(p + h * (se * eye[e] + sf * eye[f]))
    try:
        vals = np.asarray(metric_field(np.array(stencil)), dtype=float)
    except CutLocus as exc:
        raise BoundaryTooClose(f"stencil of radius {h:g} reaches the cut locus") from exc
    if not np.all(np.isfinite(vals)):
        raise BoundaryTooClose("metric is not finite on the stencil")
    g0 = vals[0]
    dg = np.empty((D, D, D))
    ddg = np.empty((D, D, D, D))
    for e in range(D):
        gp, gm = vals[1 + 2 * e], vals[2 + 2 * e]
        dg[..., e] = (gp - gm) / (2 * h)
        ddg[..., e, e] = (gp - 2 * g0 + gm) / (h * h)
    base = 1 + 2 * D
    for k, (e, f) in enumerate(pairs):
        pp, pm, mp, mm = vals[base + 4 * k: base + 4 * k + 4]
        v = (pp - pm - mp + mm) / (4 * h * h)
        ddg[..., e, f] = v
        ddg[..., f, e] = v
    return g0, dg, ddg


def riemann_tensor(metric_field: Callable, point, fd_step: float) -> np.ndarray:
    g, dg, ddg = fd_metric_derivatives(metric_field, point, fd_step)
    if abs(np.linalg.det(g)) == 0:
        raise Degenerate("metric singular at the point")
    return riemann_from_derivatives(g, dg, ddg)


def richardson_riemann(metric_field: Callable, point, fd_step: float) -> np.ndarray:
    """``(4 R(h/2) - R(h)) / 3``: cancels the leading O(h^2) central-difference error."""
    return (4 * riemann_tensor(metric_field, point, fd_step / 2) - riemann_tensor(metric_field, point, fd_step)) / 3


def riemann_component(metric_field: Callable, point, indices, fd_step: float) -> float:
    a, b, c, d = indices
    return float(riemann_tensor(metric_field, point, fd_step)[a, b, c, d])


# --- exact derivative pipeline for built-in costs --------------------------------------------

@lru_cache(maxsize=None)
def _symbolic_metric(cost_name: str, n: int):
    import sympy as sp

    xs = sp.symbols(f"x1:{n + 1}")
    ys = sp.symbols(f"y1:{n + 1}")
    r2 = sum((a - b) ** 2 for a, b in zip(xs, ys))
    exprs = {
        "quadratic": r2 / 2,
        "bilinear": -sum(a * b for a, b in zip(xs, ys)),
        "log": -sp.log(r2) / 2,
        "sqrt1p": sp.sqrt(1 + r2),
    }
    if cost_name not in exprs:
        raise KeyError(f"no symbolic form for cost {cost_name!r}")
    c = exprs[cost_name]
    coords = list(xs) + list(ys)
    D = 2 * n
    G = [[sp.Integer(0)] * D for _ in range(D)]
    for i in range(n):
        for j in range(n):
            m = -sp.diff(c, xs[i], ys[j])
            G[i][n + j] = m
            G[n + j][i] = m
    dG = [[[sp.diff(G[a][b], coords[e]) for e in range(D)] for b in range(D)] for a in range(D)]
    ddG = [[[[sp.diff(dG[a][b][e], coords[f]) for f in range(D)] for e in range(D)]
            for b in range(D)] for a in range(D)]
    return (sp.lambdify(coords, G, "numpy"), sp.lambdify(coords, dG, "numpy"),
            sp.lambdify(coords, ddG, "numpy"))


def exact_base_riemann(cost_name: str, n: int, point) -> np.ndarray:
    """Curvature of the cost metric from exact cost derivatives up to fourth order."""
    fg, fdg, fddg = _symbolic_metric(cost_name, n)
    args = [float(v) for v in np.asarray(point, dtype=float)]
    g = np.array(fg(*args), dtype=float)
    dg = np.array(fdg(*args), dtype=float)
    ddg = np.array(fddg(*args), dtype=float)
    return riemann_from_derivatives(g, dg, ddg)


# --- frames with vanishing cross components ----------------------------------------------------

def transform_tensor(R, J) -> np.ndarray:
    return np.einsum("pqrs,pa,qb,rc,sd->abcd", R, J, J, J, J)


def vanishing_rotation(ddc, i: int, j: int) -> np.ndarray:
    """Orthogonal ``Q`` on the target coordinates with ``(DDc Q)_{ij} = 0``."""
    ddc = np.asarray(ddc, dtype=float)
    n = ddc.shape[0]
    row = ddc[i]
    if np.linalg.norm(row) == 0:
        return np.eye(n)
    basis = np.column_stack([row] + [np.eye(n)[k] for k in range(n)])
    Qfull, _ = np.linalg.qr(basis)
    Q0 = Qfull[:, :n]  # first column is along row, the rest orthogonal to it
    if n == 1:
        raise NoVanishingComponent("a 1x1 mixed Hessian component cannot vanish under (A2)")
    cols = list(range(1, n)) + [0]
    Q = Q0[:, cols]
    # move a column orthogonal to row into slot j
    Q[:, [0, j]] = Q[:, [j, 0]]
    return Q


def block_rotation(Q) -> np.ndarray:
    n = Q.shape[0]
    J = np.eye(2 * n)
    J[n:, n:] = Q
    return J


@dataclass
class MTWReport:
    per_point: np.ndarray
    classification: str
    values: list = field(default_factory=list)


def mtw_check(cost: CostField, points, tol: float = 1e-8, fd_step: Optional[float] = None,
              pipeline: str = "fd", rel_vanish: float = VANISH_RTOL) -> MTWReport:
    """Minimum of ``R[i, jb, jb, i]`` over frames where ``(h_c)_{i jb} = 0``, per sampled point.

    For every index pair the target coordinates are rotated so the cross
    component vanishes exactly.  ``pipeline`` is ``"fd"`` (central
    differences of the metric) or ``"exact"`` (symbolic cost derivatives).
    Classification: ``"strict positive"`` if all minima exceed ``tol``,
    ``"nonnegative"`` if all exceed ``-tol``, else ``"violated"``.
    """
    n = cost.n
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mins, values = [], []
    for p in points:
        x, xb = p[:n], p[n:]
        if pipeline == "exact":
            R = exact_base_riemann(cost.name, n, p)
        else:
            h = fd_step if fd_step is not None else 1e-3
            R = riemann_tensor(base_metric_field(cost), p, h)
        ddc = mixed_hessian(cost, x, xb)
        hc = -ddc
        radius = np.abs(np.linalg.eigvals(hc)).max()
        vals = []
        for i in range(n):
            for j in range(n):
                if abs(hc[i, j]) < rel_vanish * radius:
                    Q = np.eye(n)
                else:
                    Q = vanishing_rotation(ddc, i, j)
                if abs((hc @ Q)[i, j]) >= rel_vanish * radius:
                    raise NoVanishingComponent(f"could not zero component ({i}, {j})")
                Rq = transform_tensor(R, block_rotation(Q))
                vals.append(float(Rq[i, n + j, n + j, i]))
        values.append(vals)
        mins.append(min(vals))
    mins = np.array(mins)
    if np.all(mins > tol):
        cls = "strict positive"
    elif np.all(mins >= -tol):
        cls = "nonnegative"
    else:
        cls = "violated"
    return MTWReport(mins, cls, values)


@dataclass
class ConformalIdentity:
    lhs: float
    rhs: float
    factor: float
    abs_error: float
    rel_error: float
    lambda_scale: float


def conformal_identity_check(cost: CostField, rho: DensitySpec, rhob: DensitySpec, point,
                             indices, fd_step: float, rotate: bool = False,
                             variant: MetricVariant = DEFAULT_VARIANT,
                             rel_vanish: float = VANISH_RTOL) -> ConformalIdentity:
    """Compare ``R^{rho}[i, jb, jb, i]`` with ``lambda * R[i, jb, jb, i]`` at a vanishing component.

    Both tensors come from independent finite-difference runs on the two
    metric fields; ``lambda`` is the conformal factor of the weighted metric.
    The relative error is ``|L - R| / (|R| + 1e-6 * s)`` where ``s`` is the
    largest ``|R^{rho}_{abcd} - lambda R_{abcd}|`` over all components (the
    size of the conformal correction terms at the point).  With ``rotate``
    the target coordinates are first rotated to make the component vanish.
    """
    n = cost.n
    p = np.asarray(point, dtype=float)
    x, xb = p[:n], p[n:]
    i, j = indices
    ddc = mixed_hessian(cost, x, xb)
    hc = -ddc
    radius = np.abs(np.linalg.eigvals(hc)).max()
    Q = vanishing_rotation(ddc, i, j) if rotate and abs(hc[i, j]) >= rel_vanish * radius else np.eye(n)
    if abs((hc @ Q)[i, j]) >= rel_vanish * radius:
        raise NotVanishing(f"(h_c)_({i},{j}) = {(hc @ Q)[i, j]:.3e} does not vanish")
    J = block_rotation(Q)
    R0 = transform_tensor(riemann_tensor(base_metric_field(cost), p, fd_step), J)
    Rc = transform_tensor(riemann_tensor(conformal_metric_field(cost, rho, rhob, variant), p, fd_step), J)
    lam = float(conformal_factor(cost, rho, rhob, x, xb, variant, ddc=ddc))
    lhs = float(Rc[i, n + j, n + j, i])
    rhs = lam * float(R0[i, n + j, n + j, i])
    scale = float(np.abs(Rc - lam * R0).max())
    err = abs(lhs - rhs)
    return ConformalIdentity(lhs, rhs, lam, err, err / (abs(rhs) + 1e-6 * scale + 1e-300), scale)


def sample_points(domain_m, domain_mbar, count: int, rng, avoid: Optional[Callable] = None,
                  max_tries: int = 100000) -> np.ndarray:
    """Uniform samples of ``(x, xbar)`` from the product box, rejecting ``avoid(x, xbar)``."""
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries:
            raise RuntimeError("could not sample enough admissible points")
        x = rng.uniform(domain_m.low, domain_m.high)
        xb = rng.uniform(domain_mbar.low, domain_mbar.high)
        if avoid is not None and avoid(x, xb):
            continue
        out.append(np.concatenate([x, xb]))
    return np.array(out)


def sphere_metric(p) -> np.ndarray:
    """Round unit sphere in ``(theta, phi)``; reference for the sign convention."""
    p = np.asarray(p, dtype=float)
    out = np.zeros(p.shape[:-1] + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = np.sin(p[..., 0]) ** 2
    return out


def polar_flat_metric(p) -> np.ndarray:
    """Euclidean plane in polar coordinates ``(r, theta)``: ``diag(1, r^2)``."""
    p = np.asarray(p, dtype=float)
    out = np.zeros(p.shape[:-1] + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = p[..., 0] ** 2
    return out


def conformal_indices(n: int) -> Sequence[tuple]:
    return [(i, j) for i in range(n) for j in range(n)]
