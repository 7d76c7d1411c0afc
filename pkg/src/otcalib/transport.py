"""Desk-scale optimal maps: 1-D rearrangement, exact matching, Gaussian maps, potentials."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import linear_sum_assignment

from .cost import CostField, eval_cost, grad_x, mixed_hessian
from .domain import DensitySpec, DomainSpec
from .errors import FlatCDF, NoRoot, NotDifferentiable, NotPositiveDefinite, SizeMismatch


@dataclass
class TransportMap:
    """A map ``F: M -> Mbar`` evaluated on batches of points ``(..., n)``.

    ``jac`` is an optional closed-form Jacobian returning ``(..., n, n)`` with
    ``[i, j] = dF^i / dx^j``; otherwise central differences with ``fd_step``.
    """

    n: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    kind: str = "analytic"
    name: str = "map"
    source: Optional[DomainSpec] = None
    target: Optional[DomainSpec] = None
    fd_step: float = 1e-5
    matrix: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x, mode: str = "auto") -> np.ndarray:
        """``DF(x)``; ``mode`` is ``"auto"``, ``"analytic"`` or ``"fd"``."""
        x = np.asarray(x, dtype=float)
        if mode == "fd" or (mode == "auto" and self.jac is None):
            return self.fd_jacobian(x)
        if self.jac is None:
            raise NotDifferentiable(f"map {self.name!r} has no closed-form Jacobian")
        return np.asarray(self.jac(x), dtype=float)

    def fd_jacobian(self, x, h: Optional[float] = None) -> np.ndarray:
        h = self.fd_step if h is None else h
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (self.n,))
        eye = np.eye(self.n)
        for j in range(self.n):
            e = h * eye[j]
            out[..., :, j] = (self(x + e) - self(x - e)) / (2 * h)
        if not np.all(np.isfinite(out)):
            raise NotDifferentiable(f"map {self.name!r}: non-finite difference quotient")
        return out

    def one_sided_jacobians(self, x, h: Optional[float] = None):
        h = self.fd_step if h is None else h
        x = np.asarray(x, dtype=float)
        fwd = np.empty(x.shape + (self.n,))
        bwd = np.empty_like(fwd)
        f0 = self(x)
        eye = np.eye(self.n)
        for j in range(self.n):
            e = h * eye[j]
            fwd[..., :, j] = (self(x + e) - f0) / h
            bwd[..., :, j] = (f0 - self(x - e)) / h
        return fwd, bwd

    def second_derivatives(self, x, h: float, mode: str = "auto") -> np.ndarray:
        """``d^2 F^a / dx^i dx^j`` as ``(..., n, n, n)`` (central differences of the Jacobian)."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (self.n, self.n))
        eye = np.eye(self.n)
        for i in range(self.n):
            e = h * eye[i]
            out[..., :, :, i] = (self.jacobian(x + e, mode) - self.jacobian(x - e, mode)) / (2 * h)
        return 0.5 * (out + np.swapaxes(out, -1, -2))


# --- analytic families ----------------------------------------------------------

def linear_map(A, b=None, name: str = "linear") -> TransportMap:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    return TransportMap(
        n,
        lambda x: x @ A.T + b,
        jac=lambda x: np.broadcast_to(A, np.shape(x)[:-1] + (n, n)).copy(),
        name=name,
        matrix=A,
    )


def identity_map(n: int) -> TransportMap:
    return linear_map(np.eye(n), name="identity")


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotation_map(theta: float, base: Optional[np.ndarray] = None) -> TransportMap:
    """Rotation by ``theta`` (radians), optionally composed after a linear map ``base``."""
    A = rotation_matrix(theta)
    if base is not None:
        A = A @ np.asarray(base, dtype=float)
    return linear_map(A, name=f"rotation({math.degrees(theta):g}deg)")


def sinusoid_map(amplitude: float = 0.1, frequency: float = math.pi) -> TransportMap:
    """``F(x) = x + a sin(k x)`` in 1-D (monotone for ``a k < 1``)."""
    return TransportMap(
        1,
        lambda x: x + amplitude * np.sin(frequency * x),
        jac=lambda x: (1 + amplitude * frequency * np.cos(frequency * x))[..., None],
        name=f"sinusoid(a={amplitude:g})",
    )


def sawtooth_map(low: float = 0.0, high: float = 1.0) -> TransportMap:
    """Two-branch tent map on ``[low, high]``; measure preserving for the uniform law, not monotone."""
    L = high - low

    def f(x):
        t = (x - low) / L
        return low + L * np.where(t < 0.5, 2 * t, 2 - 2 * t)

    def jac(x):
        t = (x - low) / L
        return np.where(t < 0.5, 2.0, -2.0)[..., None]

    return TransportMap(1, f, jac=jac, name="sawtooth")


def _sym_sqrt(S, inverse=False):
    w, Q = np.linalg.eigh(S)
    p = -0.5 if inverse else 0.5
    return (Q * w ** p) @ Q.T


def gaussian_map(cov, cov_bar) -> TransportMap:
    """Quadratic-cost optimal map between centred Gaussians:
    ``A = S^{-1/2} (S^{1/2} Sbar S^{1/2})^{1/2} S^{-1/2}``."""
    S = np.atleast_2d(np.asarray(cov, dtype=float))
    Sb = np.atleast_2d(np.asarray(cov_bar, dtype=float))
    for name, M in (("cov", S), ("cov_bar", Sb)):
        if not np.allclose(M, M.T) or np.linalg.eigvalsh(0.5 * (M + M.T)).min() <= 0:
            raise NotPositiveDefinite(f"{name} is not symmetric positive definite")
    r = _sym_sqrt(S)
    ri = _sym_sqrt(S, inverse=True)
    A = ri @ _sym_sqrt(r @ Sb @ r) @ ri
    A = 0.5 * (A + A.T)
    out = linear_map(A, name="gaussian")
    out.meta.update(cov=S, cov_bar=Sb)
    return out


# --- 1-D monotone rearrangement -------------------------------------------------

def _cdf_table(rho: DensitySpec, grid: int):
    xs = np.linspace(rho.support.low[0], rho.support.high[0], grid)
    vals = rho(xs[:, None])
    if np.any(vals[1:-1] <= 0):
        raise FlatCDF(f"density {rho.name!r} vanishes inside its support")
    # Simpson-corrected cumulative trapezoid on a fine subgrid
    mids = rho(0.5 * (xs[1:] + xs[:-1])[:, None])
    inc = (vals[1:] + 4 * mids + vals[:-1]) * np.diff(xs) / 6
    cum = np.concatenate([[0.0], np.cumsum(inc)])
    cum /= cum[-1]
    if np.any(np.diff(cum) <= 0):
        raise FlatCDF(f"CDF of {rho.name!r} is not strictly increasing")
    return xs, cum


def solve_1d_monotone(rho: DensitySpec, rhob: DensitySpec, grid: int = 4001) -> TransportMap:
    """Monotone rearrangement ``F = CDFbar^{-1} o CDF``.

    Closed-form CDFs are composed directly; otherwise both CDFs are tabulated
    on ``grid`` points and interpolated with monotone cubics.
    """
    if rho.n != 1 or rhob.n != 1:
        raise ValueError("solve_1d_monotone requires n = 1")
    if rho.cdf is not None and rhob.ppf is not None:
        cdf, ppf = rho.cdf, rhob.ppf
        return TransportMap(
            1, lambda x: ppf(cdf(x[..., 0]))[..., None], kind="analytic", name="monotone",
            source=rho.support, target=rhob.support,
        )
    xs, cum = _cdf_table(rho, grid)
    xbs, cumb = _cdf_table(rhob, grid)
    cdf = PchipInterpolator(xs, cum, extrapolate=True)
    ppf = PchipInterpolator(cumb, xbs, extrapolate=True)
    dcdf, dppf = cdf.derivative(), ppf.derivative()

    def f(x):
        return ppf(cdf(x[..., 0]))[..., None]

    def jac(x):
        t = x[..., 0]
        return (dppf(cdf(t)) * dcdf(t))[..., None, None]

    return TransportMap(1, f, jac=jac, kind="grid-interpolated", name="monotone",
                        source=rho.support, target=rhob.support)


# --- discrete plans ---------------------------------------------------------------

@dataclass
class DiscretePlan:
    source: np.ndarray
    target: np.ndarray
    matching: np.ndarray
    source_weights: np.ndarray
    target_weights: np.ndarray

    def pairs(self):
        return self.source, self.target[self.matching]

    def transposed(self) -> "DiscretePlan":
        inv = np.empty_like(self.matching)
        inv[self.matching] = np.arange(self.matching.size)
        return DiscretePlan(self.target, self.source, inv, self.target_weights, self.source_weights)


def cost_matrix(cost: CostField, source, target) -> np.ndarray:
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    return eval_cost(cost, source[:, None, :], target[None, :, :])


def solve_discrete(source, target, cost: CostField, max_points: int = 2000) -> DiscretePlan:
    """Exact optimal matching between equal-size, uniformly weighted clouds."""
    source = np.asarray(source, dtype=float).reshape(-1, cost.n)
    target = np.asarray(target, dtype=float).reshape(-1, cost.n)
    m = source.shape[0]
    if target.shape[0] != m:
        raise SizeMismatch(f"{m} source points vs {target.shape[0]} target points")
    if m > max_points:
        raise SizeMismatch(f"{m} points exceeds the exact-solver limit {max_points}")
    C = cost_matrix(cost, source, target)
    rows, cols = linear_sum_assignment(C)
    matching = np.empty(m, dtype=int)
    matching[rows] = cols
    w = np.full(m, 1.0 / m)
    return DiscretePlan(source, target, matching, w, w.copy())


@dataclass
class MonotonicityReport:
    ok: bool
    worst_gain: float
    subsets_checked: int
    violation: Optional[tuple] = None

    def __bool__(self):
        return self.ok


def cyclical_monotonicity_check(x, xb, cost: CostField, max_cycle: int = 3,
                                max_subsets: int = 20000, rng=None,
                                tol: float = 1e-10) -> MonotonicityReport:
    """Check ``sum c(x_i, xb_i) <= sum c(x_i, xb_sigma(i))`` over subsets of size <= ``max_cycle``.

    Subsets are enumerated exhaustively while their count stays under
    ``max_subsets``; larger families are sampled with ``rng``.
    """
    if max_cycle > 5:
        raise ValueError("max_cycle is limited to 5")
    x = np.asarray(x, dtype=float).reshape(-1, cost.n)
    xb = np.asarray(xb, dtype=float).reshape(-1, cost.n)
    m = x.shape[0]
    if m < 2:
        return MonotonicityReport(True, 0.0, 0)
    rng = np.random.default_rng(0) if rng is None else rng
    C = cost_matrix(cost, x, xb)
    diag = np.diag(C)
    worst, checked, violation = -np.inf, 0, None
    for k in range(2, min(max_cycle, m) + 1):
        if math.comb(m, k) <= max_subsets:
            subsets = np.array(list(itertools.combinations(range(m), k)), dtype=int)
        else:
            subsets = np.array([rng.choice(m, size=k, replace=False) for _ in range(max_subsets)])
        base = diag[subsets].sum(axis=1)
        for perm in itertools.permutations(range(k)):
            if perm == tuple(range(k)):
                continue
            permuted = C[subsets, subsets[:, list(perm)]].sum(axis=1)
            gain = base - permuted  # > 0 means the permutation is cheaper
            j = int(np.argmax(gain))
            if gain[j] > worst:
                worst = float(gain[j])
                if gain[j] > tol:
                    violation = (tuple(int(i) for i in subsets[j]), perm)
        checked += len(subsets)
    return MonotonicityReport(violation is None, worst, checked, violation)


# --- potentials -------------------------------------------------------------------

def _fd_gradient(u, x, h):
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    out = np.empty(x.shape)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        out[..., i] = (u(x + e) - u(x - e)) / (2 * h)
    return out


def map_from_potential(u: Callable, cost: CostField, grad_u: Optional[Callable] = None,
                       target: Optional[DomainSpec] = None, fd_step: float = 1e-5,
                       tol: float = 1e-12, maxiter: int = 100) -> TransportMap:
    """Map solving ``Dc(x, F(x)) = -Du(x)`` by damped Newton in ``xbar``.

    The Newton Jacobian is the mixed Hessian; iterations start from the
    centre of ``target`` (or from ``x`` when no target box is given).
    """
    n = cost.n
    du = grad_u if grad_u is not None else (lambda x: _fd_gradient(u, x, fd_step))

    def solve(x):
        x = np.asarray(x, dtype=float)
        rhs = -np.asarray(du(x), dtype=float)
        if target is not None:
            xb = np.broadcast_to(0.5 * (target.low + target.high), x.shape).copy()
        else:
            xb = x.copy()

        def resid(z):
            return grad_x(cost, x, z) - rhs

        r = resid(xb)
        rn = np.linalg.norm(r, axis=-1)
        for _ in range(maxiter):
            if np.all(rn < tol * np.maximum(1.0, np.linalg.norm(rhs, axis=-1))):
                break
            J = mixed_hessian(cost, x, xb)
            step = -np.linalg.solve(J, r[..., None])[..., 0]
            t = np.ones(rn.shape)
            for _ in range(40):
                trial = xb + t[..., None] * step
                rt = resid(trial)
                rtn = np.linalg.norm(rt, axis=-1)
                bad = ~(rtn < rn) & (rn > 0)
                if not np.any(bad):
                    break
                t = np.where(bad, 0.5 * t, t)
            xb, r, rn = trial, rt, rtn
        if not np.all(rn < 1e-8):
            raise NoRoot(f"Newton did not converge (max residual {rn.max():.3e})")
        if target is not None and not np.all(target.contains(xb, slack=1e-9 * target.diameter)):
            raise NoRoot("root lies outside the target box")
        return xb

    return TransportMap(n, solve, kind="analytic", name="from-potential", target=target)


@dataclass
class TransportPotentials:
    """Kantorovich pair with ``v(xbar) - u(x) <= c(x, xbar)``, equality on the optimal graph."""

    u: Callable
    v: Callable


def gaussian_potentials(A) -> TransportPotentials:
    """Potentials for the quadratic-cost linear map ``F(x) = A x`` (A symmetric positive definite)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    I = np.eye(A.shape[0])
    P = A - I
    Q = I - np.linalg.inv(A)
    return TransportPotentials(
        u=lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, P, x),
        v=lambda xb: 0.5 * np.einsum("...i,ij,...j->...", xb, Q, xb),
    )


def potential_gaps(pot: TransportPotentials, cost: CostField, F: TransportMap, xs, xbs):
    """``(max of v - u - c over xs x xbs, max |c - v + u| on the graph of F)``."""
    xs = np.asarray(xs, dtype=float)
    xbs = np.asarray(xbs, dtype=float)
    C = cost_matrix(cost, xs, xbs)
    slack = pot.v(xbs)[None, :] - pot.u(xs)[:, None] - C
    on_graph = eval_cost(cost, xs, F(xs)) - pot.v(F(xs)) + pot.u(xs)
    return float(slack.max()), float(np.abs(on_graph).max())


# --- costs of maps and plans ---------------------------------------------------------

def total_cost(obj, rho: Optional[DensitySpec], cost: CostField,
               domain: Optional[DomainSpec] = None) -> float:
    """``int c(x, F(x)) rho(x) dx`` by the midpoint rule, or the weighted plan sum."""
    if isinstance(obj, DiscretePlan):
        xs, xbs = obj.pairs()
        return float(np.sum(obj.source_weights * eval_cost(cost, xs, xbs)))
    dom = rho.support if domain is None else domain
    pts, cell = dom.midpoints()
    return float(np.sum(eval_cost(cost, pts, obj(pts)) * rho(pts)) * cell)


def weak_pushforward_residual(F: TransportMap, rho: DensitySpec, rhob: DensitySpec,
                              bins: int = 8, resolution: int = 400) -> float:
    """Max over target-box bins of |(F_# rho)(bin) - rhobar(bin)|.

    Valid for non-injective competitors where the pointwise Jacobian
    identity does not apply.
    """
    n = rho.n
    res = resolution if n == 1 else max(60, int(resolution ** (1.0 / n) * 4))
    pts, cell = rho.support.with_resolution(res).midpoints()
    w = rho(pts).ravel() * cell
    img = F(pts).reshape(-1, n)
    edges = [np.linspace(a, b, bins + 1) for a, b in zip(rhob.support.low, rhob.support.high)]
    pushed, _ = np.histogramdd(img, bins=edges, weights=w)
    tpts, tcell = rhob.support.with_resolution(res).midpoints()
    tw = rhob(tpts).ravel() * tcell
    ref, _ = np.histogramdd(tpts.reshape(-1, n), bins=edges, weights=tw)
    return float(np.max(np.abs(pushed - ref)))
