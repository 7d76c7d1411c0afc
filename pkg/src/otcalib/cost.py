"""Transport costs, their derivatives, and the twist / nondegeneracy checks.

All evaluators are batched: points have shape ``(..., n)``; the mixed
Hessian ``D Dbar c`` is returned with shape ``(..., n, n)`` and entry
``[i, j] = d^2 c / dx^i dxbar^j``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import CutLocus, DegenerateStep

Array = np.ndarray


@dataclass(frozen=True)
class CostField:
    """A cost ``c(x, xbar)`` on ``R^n x R^n`` with optional closed-form derivatives.

    ``fd_step`` is the absolute central-difference step used when a closed
    form is missing; :func:`with_domain` rescales it to the domain diameter.
    """

    n: int
    func: Callable[[Array, Array], Array]
    grad_x: Optional[Callable] = None
    grad_xbar: Optional[Callable] = None
    mixed: Optional[Callable] = None
    cut_locus: Optional[Callable[[Array, Array], Array]] = None
    fd_step: float = 1e-4
    name: str = "custom"

    def transposed(self) -> "CostField":
        """The cost ``cbar(xbar, x) = c(x, xbar)``."""
        mixed = None
        if self.mixed is not None:
            m = self.mixed
            mixed = lambda xb, x: np.swapaxes(m(x, xb), -1, -2)  # noqa: E731
        cut = None
        if self.cut_locus is not None:
            cl = self.cut_locus
            cut = lambda xb, x: cl(x, xb)  # noqa: E731
        f = self.func
        gx, gxb = self.grad_x, self.grad_xbar
        return CostField(
            self.n,
            lambda xb, x: f(x, xb),
            grad_x=None if gxb is None else (lambda xb, x: gxb(x, xb)),
            grad_xbar=None if gx is None else (lambda xb, x: gx(x, xb)),
            mixed=mixed,
            cut_locus=cut,
            fd_step=self.fd_step,
            name=f"{self.name}^T",
        )

    def without_closed_forms(self) -> "CostField":
        return replace(self, grad_x=None, grad_xbar=None, mixed=None)


def with_domain(cost: CostField, domain, rel_step: float = 1e-4) -> CostField:
    """Copy of ``cost`` whose FD step is ``rel_step`` times the domain diameter."""
    return replace(cost, fd_step=rel_step * domain.diameter)


def _pts(x, n):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != n:
        raise ValueError(f"expected points with last axis {n}, got shape {x.shape}")
    return x


def _guard(cost: CostField, x, xb):
    if cost.cut_locus is not None and np.any(cost.cut_locus(x, xb)):
        raise CutLocus(f"cost {cost.name!r}: point on the cut locus")


def _check_step(h: float, x, xb):
    scale = max(1.0, float(np.max(np.abs(x))), float(np.max(np.abs(xb))))
    if not h > 1e-10 * scale:
        raise DegenerateStep(f"fd_step {h!r} underflows the coordinate scale {scale:g}")


def eval_cost(cost: CostField, x, xb) -> Array:
    x, xb = _pts(x, cost.n), _pts(xb, cost.n)
    _guard(cost, x, xb)
    return np.asarray(cost.func(x, xb), dtype=float)


def grad_x(cost: CostField, x, xb) -> Array:
    """``Dc``: gradient in the first argument."""
    x, xb = _pts(x, cost.n), _pts(xb, cost.n)
    _guard(cost, x, xb)
    if cost.grad_x is not None:
        return np.asarray(cost.grad_x(*np.broadcast_arrays(x, xb)), dtype=float)
    return _fd_grad(cost, x, xb, first=True)


def grad_xbar(cost: CostField, x, xb) -> Array:
    """``Dbar c``: gradient in the second argument."""
    x, xb = _pts(x, cost.n), _pts(xb, cost.n)
    _guard(cost, x, xb)
    if cost.grad_xbar is not None:
        return np.asarray(cost.grad_xbar(*np.broadcast_arrays(x, xb)), dtype=float)
    return _fd_grad(cost, x, xb, first=False)


def _fd_grad(cost, x, xb, first):
    h = cost.fd_step
    _check_step(h, x, xb)
    x, xb = np.broadcast_arrays(x, xb)
    out = np.empty(x.shape, dtype=float)
    eye = np.eye(cost.n)
    for i in range(cost.n):
        e = h * eye[i]
        if first:
            out[..., i] = (cost.func(x + e, xb) - cost.func(x - e, xb)) / (2 * h)
        else:
            out[..., i] = (cost.func(x, xb + e) - cost.func(x, xb - e)) / (2 * h)
    return out


def fd_mixed_hessian(cost: CostField, x, xb, h: Optional[float] = None) -> Array:
    """Central-difference ``D Dbar c`` (four-point stencil, O(h^2))."""
    h = cost.fd_step if h is None else h
    x, xb = np.broadcast_arrays(_pts(x, cost.n), _pts(xb, cost.n))
    _check_step(h, x, xb)
    n = cost.n
    out = np.empty(x.shape[:-1] + (n, n))
    eye = np.eye(n)
    f = cost.func
    for i in range(n):
        ei = h * eye[i]
        for j in range(n):
            ej = h * eye[j]
            out[..., i, j] = (f(x + ei, xb + ej) - f(x + ei, xb - ej)
                              - f(x - ei, xb + ej) + f(x - ei, xb - ej)) / (4 * h * h)
    return out


def mixed_hessian(cost: CostField, x, xb, analytic: bool = True) -> Array:
    """``(D Dbar c)_{ij} = d^2 c / dx^i dxbar^j``; finite differences when no closed form exists."""
    x, xb = _pts(x, cost.n), _pts(xb, cost.n)
    _guard(cost, x, xb)
    if analytic and cost.mixed is not None:
        x, xb = np.broadcast_arrays(x, xb)
        return np.asarray(cost.mixed(x, xb), dtype=float)
    return fd_mixed_hessian(cost, x, xb)


@dataclass
class TwistReport:
    ok: bool
    n_samples: int
    min_separation: float
    min_abs_det: float
    colliding_pair: Optional[tuple] = None

    def __bool__(self):
        return self.ok


def check_twist(cost: CostField, x, samples, tol: float = 1e-9, det_tol: float = 1e-12) -> TwistReport:
    """Sampled twist test: ``xbar -> Dc(x, xbar)`` injective and ``D Dbar c`` invertible.

    A finite sample can only refute twist; a pass records the resolution it
    was checked at (``n_samples``).
    """
    x = _pts(x, cost.n)
    samples = _pts(samples, cost.n).reshape(-1, cost.n)
    m = samples.shape[0]
    xs = np.broadcast_to(x, samples.shape)
    images = grad_x(cost, xs, samples)
    dets = np.abs(np.linalg.det(mixed_hessian(cost, xs, samples)))
    min_det = float(dets.min())
    if m < 2:
        return TwistReport(bool(min_det > det_tol), m, np.inf, min_det)
    diff = images[:, None, :] - images[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    dist[np.diag_indices(m)] = np.inf
    k = int(np.argmin(dist))
    i, j = divmod(k, m)
    sep = float(dist[i, j])
    scale = max(1.0, float(np.max(np.abs(images))))
    injective = sep > tol * scale
    ok = bool(injective and min_det > det_tol)
    return TwistReport(ok, m, sep, min_det, None if injective else (i, j))


def check_nondegenerate(cost: CostField, x, xb, tol: float = 1e-12) -> bool:
    """(A2) at one point: ``|det D Dbar c| > tol``."""
    return bool(abs(np.linalg.det(mixed_hessian(cost, x, xb))) > tol)


# --- built-in registry -------------------------------------------------------

def _eye_like(x, n):
    return np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()


def quadratic(n: int) -> CostField:
    """``c = |x - xbar|^2 / 2``."""
    return CostField(
        n,
        lambda x, xb: 0.5 * np.sum((x - xb) ** 2, axis=-1),
        grad_x=lambda x, xb: x - xb,
        grad_xbar=lambda x, xb: xb - x,
        mixed=lambda x, xb: -_eye_like(x, n),
        name="quadratic",
    )


def bilinear(n: int) -> CostField:
    """``c = -x . xbar``."""
    return CostField(
        n,
        lambda x, xb: -np.sum(x * xb, axis=-1),
        grad_x=lambda x, xb: -xb,
        grad_xbar=lambda x, xb: -x,
        mixed=lambda x, xb: -_eye_like(x, n),
        name="bilinear",
    )


def log_cost(n: int, margin: float = 1e-3) -> CostField:
    """``c = -log |x - xbar|``; the diagonal band ``|x - xbar| < margin`` is the cut locus."""

    def mixed(x, xb):
        d = x - xb
        r2 = np.sum(d * d, axis=-1)[..., None, None]
        return _eye_like(x, n) / r2 - 2 * d[..., :, None] * d[..., None, :] / r2 ** 2

    def gx(x, xb):
        d = x - xb
        return -d / np.sum(d * d, axis=-1, keepdims=True)

    return CostField(
        n,
        lambda x, xb: -0.5 * np.log(np.sum((x - xb) ** 2, axis=-1)),
        grad_x=gx,
        grad_xbar=lambda x, xb: -gx(x, xb),
        mixed=mixed,
        cut_locus=lambda x, xb: np.linalg.norm(np.asarray(x) - np.asarray(xb), axis=-1) < margin,
        name="log",
    )


def sqrt1p(n: int) -> CostField:
    """``c = sqrt(1 + |x - xbar|^2)``."""

    def val(x, xb):
        return np.sqrt(1.0 + np.sum((x - xb) ** 2, axis=-1))

    def mixed(x, xb):
        d = x - xb
        c = val(x, xb)[..., None, None]
        return -(_eye_like(x, n) / c - d[..., :, None] * d[..., None, :] / c ** 3)

    return CostField(
        n,
        val,
        grad_x=lambda x, xb: (x - xb) / val(x, xb)[..., None],
        grad_xbar=lambda x, xb: (xb - x) / val(x, xb)[..., None],
        mixed=mixed,
        name="sqrt1p",
    )


def grid_cost(xs, xbs, values) -> CostField:
    """1-D cost sampled on a product grid and interpolated bicubically."""
    from scipy.interpolate import RectBivariateSpline

    spline = RectBivariateSpline(np.asarray(xs, float), np.asarray(xbs, float),
                                 np.asarray(values, float), kx=3, ky=3)

    def ev(x, xb, dx=0, dy=0):
        x, xb = np.broadcast_arrays(np.asarray(x, float)[..., 0], np.asarray(xb, float)[..., 0])
        return spline.ev(x, xb, dx=dx, dy=dy)

    return CostField(
        1,
        lambda x, xb: ev(x, xb),
        grad_x=lambda x, xb: ev(x, xb, dx=1)[..., None],
        grad_xbar=lambda x, xb: ev(x, xb, dy=1)[..., None],
        mixed=lambda x, xb: ev(x, xb, dx=1, dy=1)[..., None, None],
        name="custom-grid",
    )


BUILTIN_COSTS = {
    "quadratic": quadratic,
    "bilinear": bilinear,
    "log": log_cost,
    "sqrt1p": sqrt1p,
}


def get_cost(name: str, n: int, **params) -> CostField:
    try:
        factory = BUILTIN_COSTS[name]
    except KeyError:
        raise KeyError(f"unknown cost {name!r}; known: {sorted(BUILTIN_COSTS)} or 'custom-grid'") from None
    return factory(n, **params)
