"""Cost-induced pseudo-metrics, the symplectic form, and n-plane measurements.

Points of the product space are pairs ``(x, xbar)``; tangent vectors are
stacked as ``(V, Vbar)`` in ``R^{2n}``.  The metric built from a cost is the
block matrix ``[[0, -DDc], [-DDc^T, 0]]`` (``DDc`` = mixed Hessian), and the
density-weighted version multiplies it by
``(1/2) * (rho(x) rhobar(xbar) / |det DDc|)^(1/n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cost import CostField, mixed_hessian
from .domain import DensitySpec
from .errors import Degenerate, NotSpacelike, ZeroOrientation

EIG_RTOL = 1e-10


@dataclass(frozen=True)
class MetricVariant:
    """Knobs on the conformal factor; the defaults are the correct metric.

    Only used to inject faults (wrong exponent, dropped 1/2) in mutation tests.
    """

    exponent: float | None = None
    half: bool = True


DEFAULT_VARIANT = MetricVariant()


@dataclass(frozen=True)
class MetricAtPoint:
    matrix: np.ndarray
    signature: tuple

    @property
    def n(self) -> int:
        return self.matrix.shape[-1] // 2


def block_metric(ddc: np.ndarray) -> np.ndarray:
    """``[[0, -DDc], [-DDc^T, 0]]`` for a (batched) mixed Hessian."""
    n = ddc.shape[-1]
    out = np.zeros(ddc.shape[:-2] + (2 * n, 2 * n))
    out[..., :n, n:] = -ddc
    out[..., n:, :n] = -np.swapaxes(ddc, -1, -2)
    return out


def conformal_factor(cost: CostField, rho: DensitySpec, rhob: DensitySpec, x, xb,
                     variant: MetricVariant = DEFAULT_VARIANT, ddc=None) -> np.ndarray:
    """``(1/2) (rho(x) rhobar(xbar) / |det DDc|)^(1/n)``, batched."""
    if ddc is None:
        ddc = mixed_hessian(cost, x, xb)
    det = np.abs(np.linalg.det(ddc))
    if np.any(det == 0):
        raise Degenerate("mixed Hessian is singular")
    r = rho.positive(x) * rhob.positive(xb)
    expo = 1.0 / cost.n if variant.exponent is None else variant.exponent
    f = (r / det) ** expo
    return 0.5 * f if variant.half else f


def base_metric_matrix(cost: CostField, x, xb) -> np.ndarray:
    return block_metric(mixed_hessian(cost, x, xb))


def conformal_metric_matrix(cost: CostField, rho, rhob, x, xb,
                            variant: MetricVariant = DEFAULT_VARIANT) -> np.ndarray:
    ddc = mixed_hessian(cost, x, xb)
    lam = conformal_factor(cost, rho, rhob, x, xb, variant, ddc=ddc)
    return lam[..., None, None] * block_metric(ddc)


def split_point(p, n):
    p = np.asarray(p, dtype=float)
    return p[..., :n], p[..., n:]


def base_metric_field(cost: CostField):
    """Metric field on ``R^{2n}`` points (batched), for curvature and mass."""
    return lambda p: base_metric_matrix(cost, *split_point(p, cost.n))


def conformal_metric_field(cost: CostField, rho, rhob, variant: MetricVariant = DEFAULT_VARIANT):
    return lambda p: conformal_metric_matrix(cost, rho, rhob, *split_point(p, cost.n), variant=variant)


def signature(metric, tol: float = EIG_RTOL) -> tuple:
    """``(#positive, #negative)`` eigenvalues; raises :class:`Degenerate` on near-zero ones."""
    mat = metric.matrix if isinstance(metric, MetricAtPoint) else np.asarray(metric, dtype=float)
    ev = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    radius = np.max(np.abs(ev))
    if radius == 0 or np.min(np.abs(ev)) <= tol * radius:
        raise Degenerate("metric has a (near-)zero eigenvalue")
    return int(np.sum(ev > 0)), int(np.sum(ev < 0))


def _check_a2(ddc, tol):
    if abs(np.linalg.det(ddc)) <= tol:
        raise Degenerate("|det D Dbar c| below tolerance")


def base_metric(cost: CostField, x, xb, tol: float = 1e-12) -> MetricAtPoint:
    ddc = mixed_hessian(cost, x, xb)
    _check_a2(ddc, tol)
    mat = block_metric(ddc)
    return MetricAtPoint(mat, signature(mat))


def conformal_metric(cost: CostField, rho: DensitySpec, rhob: DensitySpec, x, xb,
                     tol: float = 1e-12, variant: MetricVariant = DEFAULT_VARIANT) -> MetricAtPoint:
    ddc = mixed_hessian(cost, x, xb)
    _check_a2(ddc, tol)
    lam = conformal_factor(cost, rho, rhob, x, xb, variant, ddc=ddc)
    mat = float(lam) * block_metric(ddc)
    return MetricAtPoint(mat, signature(mat))


def symplectic_form(cost: CostField, x, xb, tol: float = 1e-12) -> np.ndarray:
    """``omega_c = [[0, -DDc], [DDc^T, 0]]``."""
    ddc = mixed_hessian(cost, x, xb)
    _check_a2(ddc, tol)
    n = cost.n
    out = np.zeros((2 * n, 2 * n))
    out[:n, n:] = -ddc
    out[n:, :n] = ddc.T
    return out


@dataclass(frozen=True)
class TangentPlane:
    """Frame of ``n`` column vectors in ``R^{2n}`` (shape ``(2n, n)``)."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[0] != 2 * v.shape[1]:
            raise ValueError("frame must have shape (2n, n)")
        if np.linalg.det(v.T @ v) <= 0:
            raise ValueError("frame vectors are linearly dependent")
        object.__setattr__(self, "vectors", v)

    @classmethod
    def from_parts(cls, V, Vbar) -> "TangentPlane":
        return cls(np.vstack([np.atleast_2d(V), np.atleast_2d(Vbar)]))

    @classmethod
    def graph(cls, jac) -> "TangentPlane":
        """Tangent plane of ``x -> (x, F(x))`` with ``DF = jac``: frame ``(e_i, DF e_i)``."""
        jac = np.atleast_2d(np.asarray(jac, dtype=float))
        return cls.from_parts(np.eye(jac.shape[0]), jac)

    @property
    def n(self) -> int:
        return self.vectors.shape[1]

    @property
    def m_part(self) -> np.ndarray:
        return self.vectors[: self.n]

    @property
    def mbar_part(self) -> np.ndarray:
        return self.vectors[self.n:]

    def gram(self, metric) -> np.ndarray:
        mat = metric.matrix if isinstance(metric, MetricAtPoint) else np.asarray(metric)
        return self.vectors.T @ mat @ self.vectors

    def transformed(self, A) -> "TangentPlane":
        return TangentPlane(self.vectors @ np.asarray(A, dtype=float))


def nvector_norm(metric, plane: TangentPlane) -> float:
    """``sqrt(det h(v_i, v_j))`` for a spacelike frame."""
    g = plane.gram(metric)
    g = 0.5 * (g + g.T)
    if np.linalg.eigvalsh(g).min() <= 0:
        raise NotSpacelike("Gram matrix is not positive definite")
    return float(np.sqrt(np.linalg.det(g)))


class Spacelike(NamedTuple):
    ok: bool
    margin: float


def is_spacelike(metric, plane: TangentPlane, tol: float = 1e-12) -> Spacelike:
    g = plane.gram(metric)
    margin = float(np.linalg.eigvalsh(0.5 * (g + g.T)).min())
    return Spacelike(margin > tol, margin)


def orientation_value(plane: TangentPlane) -> tuple:
    """``(tau(xi), det of M-part, det of Mbar-part)`` with ``tau = (dx + dxbar)/2``."""
    dm = float(np.linalg.det(plane.m_part))
    dmb = float(np.linalg.det(plane.mbar_part))
    return 0.5 * (dm + dmb), dm, dmb


def orientation_sign(plane: TangentPlane, tol: float = 1e-14) -> int:
    tau, dm, dmb = orientation_value(plane)
    if abs(tau) <= tol:
        raise ZeroOrientation(f"space orientation form vanishes on the frame (dx={dm:g}, dxbar={dmb:g})")
    return 1 if tau > 0 else -1
