"""Graphs of transport maps in the product space and their pointwise checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cost import CostField, mixed_hessian
from .domain import DensitySpec, DomainSpec
from .errors import (BoundaryPoint, Degenerate, NotMonotone, NotSpacelike, OrientationFlip)
from .geometry import (DEFAULT_VARIANT, MetricVariant, conformal_factor, conformal_metric_matrix)
from .transport import TransportMap


def _sym(B):
    return 0.5 * (B + np.swapaxes(B, -1, -2))


@dataclass
class GraphSurface:
    """Samples of ``x -> (x, F(x))`` on the nodes of ``domain``.

    Arrays are flattened over the grid (row-major); ``interior`` marks nodes
    at least ``erode`` cells from the boundary and ``kinks`` marks nodes where
    one-sided difference Jacobians disagree.
    """

    F: TransportMap
    domain: DomainSpec
    points: np.ndarray
    values: np.ndarray
    jacobians: np.ndarray
    interior: np.ndarray
    kinks: np.ndarray
    jacobian_mode: str = "auto"

    @classmethod
    def build(cls, F: TransportMap, domain: DomainSpec, jacobian: str = "auto",
              erode: int = 2, kink_tol: float = 1e-3) -> "GraphSurface":
        pts = domain.nodes().reshape(-1, domain.n)
        vals = F(pts)
        jac = F.jacobian(pts, jacobian)
        fwd, bwd = F.one_sided_jacobians(pts)
        scale = np.maximum(1.0, np.abs(jac).max(axis=(-1, -2)))
        kinks = np.abs(fwd - bwd).max(axis=(-1, -2)) > 10 * kink_tol * scale
        interior = domain.interior_mask(erode).ravel()
        return cls(F, domain, pts, vals, jac, interior, kinks, jacobian)

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def frames(self) -> np.ndarray:
        """``(N, 2n, n)`` frames ``(e_i, DF e_i)``."""
        eye = np.broadcast_to(np.eye(self.n), self.jacobians.shape)
        return np.concatenate([eye, self.jacobians], axis=-2)

    @property
    def mask(self) -> np.ndarray:
        """Nodes entering sup-norm statistics."""
        return self.interior & ~self.kinks


def _as_surface(F, region, jacobian="auto") -> GraphSurface:
    if isinstance(F, GraphSurface):
        return F
    return GraphSurface.build(F, region, jacobian)


def pullback_metric(F: TransportMap, cost: CostField, rho: DensitySpec, rhob: DensitySpec, x,
                    jacobian: str = "auto", variant: MetricVariant = DEFAULT_VARIANT) -> np.ndarray:
    """Induced metric ``g = lambda * 2 sym((-DDc) DF)`` on the graph, ``lambda`` the conformal factor."""
    x = np.asarray(x, dtype=float)
    xb = F(x)
    ddc = mixed_hessian(cost, x, xb)
    lam = conformal_factor(cost, rho, rhob, x, xb, variant, ddc=ddc)
    B = -ddc @ F.jacobian(x, jacobian)
    return 2 * lam[..., None, None] * _sym(B)


def gram_pullback(F: TransportMap, cost, rho, rhob, x, jacobian="auto",
                  variant: MetricVariant = DEFAULT_VARIANT) -> np.ndarray:
    """Same object as :func:`pullback_metric`, computed as the frame Gram matrix under the ambient metric."""
    x = np.asarray(x, dtype=float)
    n = cost.n
    H = conformal_metric_matrix(cost, rho, rhob, x, F(x), variant)
    jac = F.jacobian(x, jacobian)
    T = np.concatenate([np.broadcast_to(np.eye(n), jac.shape), jac], axis=-2)
    return np.swapaxes(T, -1, -2) @ H @ T


def _b_matrices(surface: GraphSurface, cost: CostField):
    ddc = mixed_hessian(cost, surface.points, surface.values)
    return -ddc @ surface.jacobians


def lagrangian_field(F, cost: CostField, region=None, jacobian="auto") -> np.ndarray:
    """Per-node ``max |B - B^T|`` with ``B = (-DDc) DF`` (the pulled-back symplectic form)."""
    s = _as_surface(F, region, jacobian)
    B = _b_matrices(s, cost)
    return np.abs(B - np.swapaxes(B, -1, -2)).max(axis=(-1, -2))


def lagrangian_residual(F, cost: CostField, region=None, jacobian="auto") -> float:
    s = _as_surface(F, region, jacobian)
    return float(lagrangian_field(s, cost)[s.mask].max())


def spacelike_field(F, cost: CostField, region=None, jacobian="auto") -> np.ndarray:
    s = _as_surface(F, region, jacobian)
    return np.linalg.eigvalsh(_sym(_b_matrices(s, cost))).min(axis=-1)


def spacelike_margin(F, cost: CostField, region=None, jacobian="auto") -> float:
    """Minimum eigenvalue of ``sym((-DDc) DF)`` over the eroded interior."""
    s = _as_surface(F, region, jacobian)
    return float(spacelike_field(s, cost)[s.mask].min())


def pushforward_field(F, rho: DensitySpec, rhob: DensitySpec, region=None, jacobian="auto") -> np.ndarray:
    s = _as_surface(F, region, jacobian)
    det = np.linalg.det(s.jacobians)
    if np.any(det[s.interior] <= 0):
        raise OrientationFlip("det DF <= 0 at an interior node")
    r = rho(s.points)
    return np.abs(rhob(s.values) * det - r) / r


def pushforward_residual(F, rho, rhob, region=None, jacobian="auto") -> float:
    """``max |rhobar(F) det DF - rho| / rho`` over the eroded interior."""
    s = _as_surface(F, region, jacobian)
    return float(pushforward_field(s, rho, rhob)[s.mask].max())


@dataclass
class CalibrationReport:
    sqrt_det_g: np.ndarray
    rho: np.ndarray
    phi_pullback: np.ndarray
    metric_gap: float
    phi_gap: float
    flagged: int
    mask: np.ndarray = field(repr=False)

    @property
    def max_gap(self) -> float:
        return max(self.metric_gap, self.phi_gap)


def calibration_equality_check(F, cost: CostField, rho: DensitySpec, rhob: DensitySpec,
                               region=None, jacobian="auto",
                               variant: MetricVariant = DEFAULT_VARIANT) -> CalibrationReport:
    """Compare ``sqrt(det g)``, ``rho`` and the pulled-back calibration at every node.

    Gaps are ``max |sqrt(det g) - rho| / rho`` and ``max |Phi - rho| / rho``
    over the eroded interior, kinks excluded.
    """
    s = _as_surface(F, region, jacobian)
    x, xb = s.points, s.values
    ddc = mixed_hessian(cost, x, xb)
    lam = conformal_factor(cost, rho, rhob, x, xb, variant, ddc=ddc)
    g = 2 * lam[..., None, None] * _sym(-ddc @ s.jacobians)
    detg = np.linalg.det(g)
    if np.any(detg[s.interior] <= 0):
        raise NotSpacelike("induced metric is not positive definite at an interior node")
    root = np.sqrt(np.clip(detg, 0, None))
    r = rho(x)
    phi = 0.5 * (r + rhob(xb) * np.linalg.det(s.jacobians))
    m = s.mask
    return CalibrationReport(
        root, r, phi,
        float(np.max(np.abs(root - r)[m] / r[m])),
        float(np.max(np.abs(phi - r)[m] / r[m])),
        int(np.sum(s.interior & s.kinks)),
        m,
    )


@dataclass
class DeterminantCheck:
    ok: bool
    equality: bool
    det_sym: float
    det: float

    def __bool__(self):
        return self.ok


def determinant_inequality_check(B, tol: float = 1e-12) -> DeterminantCheck:
    """``det(sym B) <= det B`` for ``B`` with positive semidefinite symmetric part."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    S = _sym(B)
    if np.linalg.eigvalsh(S).min() < -tol:
        raise NotMonotone("symmetric part has a negative eigenvalue")
    ds, d = float(np.linalg.det(S)), float(np.linalg.det(B))
    return DeterminantCheck(ds <= d + tol, bool(np.abs(B - B.T).max() < tol), ds, d)


def chord_spacelikeness(x, xb, cost: CostField) -> float:
    """Min of ``-<DDc V, Vbar>`` over chords between consecutive matched pairs.

    Points are ordered along the first coordinate; the mixed Hessian is taken
    at chord midpoints.
    """
    x = np.asarray(x, dtype=float).reshape(-1, cost.n)
    xb = np.asarray(xb, dtype=float).reshape(-1, cost.n)
    order = np.argsort(x[:, 0], kind="stable")
    x, xb = x[order], xb[order]
    V, Vb = np.diff(x, axis=0), np.diff(xb, axis=0)
    ddc = mixed_hessian(cost, 0.5 * (x[1:] + x[:-1]), 0.5 * (xb[1:] + xb[:-1]))
    vals = -np.einsum("ki,kij,kj->k", V, ddc, Vb)
    return float(vals.min())


# --- mean curvature ---------------------------------------------------------------------

def metric_derivatives(metric_field, points, h: float) -> np.ndarray:
    """Central differences ``d_e h_{ab}`` as ``(N, D, D, D)`` with the derivative index last."""
    points = np.asarray(points, dtype=float)
    D = points.shape[-1]
    out = np.empty(points.shape[:-1] + (D, D, D))
    eye = np.eye(D)
    for e in range(D):
        out[..., e] = (metric_field(points + h * eye[e]) - metric_field(points - h * eye[e])) / (2 * h)
    return out


def christoffel(hmat, dh) -> np.ndarray:
    """``Gamma^a_{bc} = 1/2 h^{ad} (d_b h_{dc} + d_c h_{db} - d_d h_{bc})``; ``dh[..., a, b, e] = d_e h_{ab}``."""
    hinv = np.linalg.inv(hmat)
    lower = 0.5 * (np.einsum("...dcb->...dbc", dh) + dh - np.einsum("...bcd->...dbc", dh))
    return np.einsum("...ad,...dbc->...abc", hinv, lower)


@dataclass
class MeanCurvature:
    points: np.ndarray
    H: np.ndarray
    norm: np.ndarray
    projector_error: float

    @property
    def sup(self) -> float:
        return float(self.norm.max()) if self.norm.size else 0.0


def mean_curvature(surface: GraphSurface, cost: CostField, rho: DensitySpec, rhob: DensitySpec,
                   fd_step: float, points: Optional[np.ndarray] = None,
                   variant: MetricVariant = DEFAULT_VARIANT) -> MeanCurvature:
    """Mean-curvature vector of ``x -> (x, F(x))`` in the density-weighted metric.

    Ambient Christoffel symbols and the second derivatives of ``F`` come from
    central differences with step ``fd_step``; the second fundamental form is
    projected onto the metric-normal space of the tangent plane and traced
    with the inverse induced metric.  Evaluated at interior nodes (or at
    explicitly given ``points``, which must be interior).
    """
    F, n = surface.F, surface.n
    if points is None:
        x = surface.points[surface.mask]
    else:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        lo = surface.domain.low + 2 * fd_step
        hi = surface.domain.high - 2 * fd_step
        if not np.all((x >= lo) & (x <= hi)):
            raise BoundaryPoint("mean curvature requested too close to the domain boundary")
    xb = F(x)
    P = np.concatenate([x, xb], axis=-1)
    field_ = lambda p: conformal_metric_matrix(cost, rho, rhob, p[..., :n], p[..., n:], variant)  # noqa: E731
    hmat = field_(P)
    if np.any(np.abs(np.linalg.det(hmat)) == 0):
        raise Degenerate("ambient metric singular on the graph")
    gam = christoffel(hmat, metric_derivatives(field_, P, fd_step))
    jac = F.jacobian(x, surface.jacobian_mode)
    T = np.concatenate([np.broadcast_to(np.eye(n), jac.shape), jac], axis=-2)  # (N, 2n, n)
    d2F = F.second_derivatives(x, fd_step, surface.jacobian_mode)  # (N, n, n, n)
    d2X = np.concatenate([np.zeros_like(d2F), d2F], axis=-3)  # (N, 2n, n, n)
    acc = d2X + np.einsum("...abc,...bi,...cj->...aij", gam, T, T)
    g = np.swapaxes(T, -1, -2) @ hmat @ T
    ginv = np.linalg.inv(g)
    W = np.einsum("...ij,...aij->...a", ginv, acc)
    proj = T @ ginv @ np.swapaxes(T, -1, -2) @ hmat
    perr = float(np.abs(proj @ proj - proj).max()) if len(x) else 0.0
    H = W - np.einsum("...ab,...b->...a", proj, W)
    hh = np.einsum("...a,...ab,...b->...", H, hmat, H)
    return MeanCurvature(x, H, np.sqrt(np.abs(hh)), perr)
