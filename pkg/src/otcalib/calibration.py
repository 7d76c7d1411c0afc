"""The calibration form, oriented comass, and masses of polyhedral currents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .cost import CostField, mixed_hessian
from .domain import DensitySpec, DomainSpec
from .errors import BadSignature, NotComparable, OrientationError, OrientationFlip
from .geometry import (DEFAULT_VARIANT, MetricVariant, TangentPlane, conformal_metric_field, signature)
from .graph import pushforward_residual
from .transport import TransportMap, weak_pushforward_residual


# --- forms ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationForm:
    """``Phi = (rho dx + rhobar dxbar) / 2``, optionally scaled.

    Evaluated on frames of shape ``(..., 2n, n)``; linear in the frame's
    n-vector, so a change of frame by ``A`` multiplies the value by ``det A``.
    """

    rho: DensitySpec
    rhob: DensitySpec
    scale: float = 1.0

    def __call__(self, x, xb, frames) -> np.ndarray:
        frames = np.asarray(frames, dtype=float)
        n = frames.shape[-1]
        dx = np.linalg.det(frames[..., :n, :])
        dxb = np.linalg.det(frames[..., n:, :])
        return self.scale * 0.5 * (self.rho(x) * dx + self.rhob(xb) * dxb)


@dataclass(frozen=True)
class VolumeForm:
    """``sign * dx`` (``part="M"``) or ``sign * dxbar`` (``part="Mbar"``)."""

    part: str = "M"
    sign: float = 1.0

    def __call__(self, x, xb, frames) -> np.ndarray:
        frames = np.asarray(frames, dtype=float)
        n = frames.shape[-1]
        block = frames[..., :n, :] if self.part == "M" else frames[..., n:, :]
        return self.sign * np.linalg.det(block)


def eval_calibration(phi: CalibrationForm, x, xb, plane: TangentPlane) -> float:
    return float(phi(np.asarray(x, float), np.asarray(xb, float), plane.vectors))


# --- oriented comass ---------------------------------------------------------------------

@dataclass
class ComassConfig:
    ladder: Sequence[float] = (2.0, 8.0, 32.0)
    starts: int = 6
    seed: int = 0
    tol: float = 1e-6
    scan: Sequence[float] = tuple(10.0 ** np.linspace(-4, 4, 81))


@dataclass
class ComassResult:
    estimate: float
    frame: np.ndarray
    bounded: bool
    ladder_values: list = field(default_factory=list)
    center_scale: float = 1.0


def _sym_from_vec(y, n):
    S = np.zeros((n, n))
    iu = np.triu_indices(n)
    S[iu] = y
    return S + np.triu(S, 1).T


def _anti_from_vec(w, n):
    W = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    W[iu] = w
    return W - W.T


def numeric_comass(form: Callable, metric, x, xb, config: Optional[ComassConfig] = None) -> ComassResult:
    """Numerical infimum of ``form`` over tau-oriented spacelike unit n-planes at ``(x, xbar)``.

    Planes are parametrized as frames ``(e_i, A^{-1} K e_i)`` where ``A`` is
    the upper-right block of ``metric`` and ``sym(K)`` is positive definite
    (every spacelike plane arises this way).  The search is centred at the
    best multiple of the identity on a log scan; each ladder radius ``R``
    confines the eigenvalues of ``sym(K)`` to ``[c/R, c R]`` and the
    antisymmetric part to norm ``~ c R``.  A drop of more than ``tol``
    between the last two radii marks the infimum as unbounded.

    Requires signature ``(n, n)`` and ``det(A) > 0`` (oriented coordinates).
    """
    cfg = config or ComassConfig()
    H = np.asarray(getattr(metric, "matrix", metric), dtype=float)
    n = H.shape[0] // 2
    if signature(H) != (n, n):
        raise BadSignature("metric signature is not (n, n)")
    A = H[:n, n:]
    if np.linalg.det(A) <= 0:
        raise BadSignature("coordinates are not oriented: det of the off-diagonal block must be positive")
    Ainv = np.linalg.inv(A)
    x = np.asarray(x, dtype=float)
    xb = np.asarray(xb, dtype=float)
    eye = np.eye(n)

    def frame(K):
        return np.vstack([eye, Ainv @ K])

    def value(K):
        S = 0.5 * (K + K.T)
        w = np.linalg.eigvalsh(S)
        if w.min() <= 0:
            return np.inf
        return float(form(x, xb, frame(K))) / math.sqrt(np.linalg.det(2.0 * S))

    scan = np.array([value(s * eye) for s in cfg.scan])
    c = float(cfg.scan[int(np.argmin(scan))])
    rng = np.random.default_rng(cfg.seed)
    n_sym, n_anti = n * (n + 1) // 2, n * (n - 1) // 2

    def build(p, R):
        Y = _sym_from_vec(p[:n_sym], n)
        w, Q = np.linalg.eigh(Y)
        S = (Q * (c * np.exp(math.log(R) * np.tanh(w)))) @ Q.T
        W = c * R * np.tanh(_anti_from_vec(p[n_sym:], n)) if n_anti else 0.0
        return S + W

    ladder_vals, best_K = [], c * eye
    starts = [np.zeros(n_sym + n_anti)] + [rng.normal(scale=0.7, size=n_sym + n_anti)
                                            for _ in range(cfg.starts - 1)]
    for R in cfg.ladder:
        best = (np.inf, None)
        for p0 in starts:
            res = minimize(lambda p: value(build(p, R)), p0, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000 * (n_sym + n_anti)})
            if res.fun < best[0]:
                best = (float(res.fun), res.x)
        ladder_vals.append(best[0])
        best_K = build(best[1], R)
        starts[0] = best[1]
    drop = ladder_vals[-2] - ladder_vals[-1] if len(ladder_vals) > 1 else 0.0
    bounded = bool(drop <= cfg.tol * max(1.0, abs(ladder_vals[-1])))
    return ComassResult(ladder_vals[-1], frame(best_K), bounded, ladder_vals, c)


def oriented_rotation(ddc) -> np.ndarray:
    """Orthogonal ``P`` with ``-DDc P`` symmetric positive definite (polar factor).

    Using ``xbar = P ybar`` as new target coordinates makes the metric's
    off-diagonal block positive definite.
    """
    U, _, Vt = np.linalg.svd(-np.asarray(ddc, dtype=float))
    # -DDc = U S Vt  =>  -DDc (Vt^T U^T) = U S U^T
    return Vt.T @ U.T


@dataclass
class SweepReport:
    min_gap: float
    gaps: np.ndarray
    histogram: tuple

    @property
    def ok(self) -> bool:
        return self.min_gap >= -1e-8


def calibration_inequality_sweep(phi: CalibrationForm, cost: CostField, rho, rhob, xs, xbs, Ks,
                                 variant: MetricVariant = DEFAULT_VARIANT) -> SweepReport:
    """``Phi(xi) - ||xi||_h`` over planes ``(e_i, (-DDc)^{-1} K e_i)``, ``sym(K)`` positive definite.

    ``xs``, ``xbs``, ``Ks`` are parallel batches.
    """
    xs = np.asarray(xs, dtype=float)
    xbs = np.asarray(xbs, dtype=float)
    Ks = np.asarray(Ks, dtype=float)
    n = cost.n
    ddc = mixed_hessian(cost, xs, xbs)
    B = np.linalg.solve(-ddc, Ks)
    frames = np.concatenate([np.broadcast_to(np.eye(n), B.shape), B], axis=-2)
    H = conformal_metric_field(cost, rho, rhob, variant)(np.concatenate([xs, xbs], axis=-1))
    G = np.swapaxes(frames, -1, -2) @ H @ frames
    norms = np.sqrt(np.linalg.det(G))
    gaps = phi(xs, xbs, frames) - norms
    return SweepReport(float(gaps.min()), gaps, np.histogram(gaps, bins=20))


# --- polyhedral currents -----------------------------------------------------------------

def _perm_parity(rows: np.ndarray) -> np.ndarray:
    """Parity (+1/-1) of the permutation sorting each row."""
    k = rows.shape[1]
    inv = np.zeros(rows.shape[0], dtype=int)
    for i in range(k):
        for j in range(i + 1, k):
            inv += rows[:, i] > rows[:, j]
    return np.where(inv % 2 == 0, 1, -1)


def check_orientation_consistency(simplices: np.ndarray) -> None:
    """Raise :class:`OrientationError` unless every shared face is induced with opposite signs."""
    simplices = np.asarray(simplices, dtype=int)
    S, k = simplices.shape
    faces, signs = [], []
    for drop in range(k):
        keep = [i for i in range(k) if i != drop]
        f = simplices[:, keep]
        faces.append(np.sort(f, axis=1))
        signs.append(((-1) ** drop) * _perm_parity(f))
    faces = np.concatenate(faces)
    signs = np.concatenate(signs)
    _, inverse, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    total = np.bincount(inverse, weights=signs, minlength=counts.size)
    if np.any(counts > 2):
        raise OrientationError("a face is shared by more than two simplices")
    bad = (counts == 2) & (total != 0)
    if np.any(bad):
        raise OrientationError(f"{int(bad.sum())} shared faces carry the same induced orientation")


@dataclass
class PolyhedralCurrent:
    """Oriented simplicial n-mesh in ``R^{2n}``: ``vertices (V, 2n)``, ``simplices (S, n+1)``."""

    vertices: np.ndarray
    simplices: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.simplices = np.asarray(self.simplices, dtype=int)
        n = self.vertices.shape[1] // 2
        if self.simplices.shape[1] != n + 1:
            raise ValueError("simplices must have n + 1 vertices")
        check_orientation_consistency(self.simplices)

    @property
    def n(self) -> int:
        return self.vertices.shape[1] // 2

    def frames(self) -> np.ndarray:
        """Edge frames ``(S, 2n, n)``: columns ``p_k - p_0``."""
        p = self.vertices[self.simplices]
        return np.swapaxes(p[:, 1:] - p[:, :1], -1, -2)

    def barycenters(self) -> np.ndarray:
        return self.vertices[self.simplices].mean(axis=1)

    def boundary_faces(self) -> np.ndarray:
        k = self.simplices.shape[1]
        faces = np.concatenate([np.sort(np.delete(self.simplices, d, axis=1), axis=1) for d in range(k)])
        uniq, counts = np.unique(faces, axis=0, return_counts=True)
        return uniq[counts == 1]

    @classmethod
    def from_graph(cls, F: TransportMap, domain: DomainSpec) -> "PolyhedralCurrent":
        """Freudenthal triangulation of the grid cells, lifted to ``(x, F(x))``."""
        n = domain.n
        nodes = domain.nodes().reshape(-1, n)
        verts = np.concatenate([nodes, F(nodes)], axis=-1)
        return cls(verts, kuhn_simplices(domain.resolution))


def kuhn_simplices(resolution) -> np.ndarray:
    """Positively oriented Kuhn simplices of a tensor grid of nodes (row-major indexing)."""
    res = tuple(resolution)
    n = len(res)
    strides = np.array([int(np.prod(res[i + 1:])) for i in range(n)])
    cells = np.stack(np.meshgrid(*[np.arange(r - 1) for r in res], indexing="ij"), -1).reshape(-1, n)
    base = cells @ strides
    out = []
    for perm in permutations(range(n)):
        idx = [base]
        cur = base.copy()
        for ax in perm:
            cur = cur + strides[ax]
            idx.append(cur)
        simp = np.stack(idx, axis=1)
        # edge frame of this simplex is the permutation matrix of perm: fix its sign
        sign = np.linalg.det(np.eye(n)[:, list(perm)])
        if sign < 0:
            simp[:, [0, 1]] = simp[:, [1, 0]]
        out.append(simp)
    return np.concatenate(out)


@dataclass
class MassBreakdown:
    mass: float
    phi_integral: Optional[float]
    n_timelike: int
    n_negative: int
    per_simplex: np.ndarray = field(repr=False)


def simplex_masses(current: PolyhedralCurrent, metric_field, form: Optional[Callable] = None) -> MassBreakdown:
    """Per-simplex h-volumes ``||v_1 ^ ... ^ v_n||_h / n!`` with the metric at barycentres.

    A timelike or negatively tau-oriented simplex makes the mass ``-inf``.
    """
    n = current.n
    fr = current.frames()
    bc = current.barycenters()
    H = metric_field(bc)
    G = np.swapaxes(fr, -1, -2) @ H @ fr
    ev_min = np.linalg.eigvalsh(0.5 * (G + np.swapaxes(G, -1, -2))).min(axis=-1)
    scale = np.abs(G).max(axis=(-1, -2))
    timelike = ev_min <= 1e-14 * np.maximum(scale, 1e-300)
    tau = 0.5 * (np.linalg.det(fr[:, :n]) + np.linalg.det(fr[:, n:]))
    negative = tau <= 0
    vol = np.sqrt(np.clip(np.linalg.det(G), 0, None)) / math.factorial(n)
    bad = timelike | negative
    mass = -np.inf if np.any(bad) else float(vol.sum())
    phi_int = None
    if form is not None:
        phi_int = float(np.sum(form(bc[:, :n], bc[:, n:], fr)) / math.factorial(n))
    return MassBreakdown(mass, phi_int, int(timelike.sum()), int(negative.sum()), vol)


def polyhedral_mass(current: PolyhedralCurrent, metric_field) -> float:
    return simplex_masses(current, metric_field).mass


def form_integral(current: PolyhedralCurrent, form: Callable) -> float:
    n = current.n
    bc = current.barycenters()
    return float(np.sum(form(bc[:, :n], bc[:, n:], current.frames())) / math.factorial(n))


@dataclass
class MassRow:
    name: str
    phi_integral: float
    mass: float
    n_timelike: int
    n_negative: int
    pushforward: float

    @property
    def flagged(self) -> bool:
        return self.n_timelike > 0 or self.n_negative > 0


@dataclass
class MassComparison:
    rows: list
    optimal_wins: bool
    phi_error: float

    @property
    def ok(self) -> bool:
        return self.optimal_wins


def mass_compare(optimal: TransportMap, competitors: Sequence[TransportMap], cost: CostField,
                 rho: DensitySpec, rhob: DensitySpec, domain: DomainSpec,
                 threshold: float = 1e-2, variant: MetricVariant = DEFAULT_VARIANT) -> MassComparison:
    """Mass of the optimal graph against measure-preserving competitors with the same Phi-period."""
    field_ = conformal_metric_field(cost, rho, rhob, variant)
    phi = CalibrationForm(rho, rhob)
    rows = []
    for k, F in enumerate([optimal, *competitors]):
        try:
            push = pushforward_residual(F, rho, rhob, domain)
        except OrientationFlip:
            push = weak_pushforward_residual(F, rho, rhob)
        if k > 0 and push > threshold:
            push_w = weak_pushforward_residual(F, rho, rhob)
            if push_w > threshold:
                raise NotComparable(f"competitor {F.name!r} does not push rho to rhobar "
                                    f"(residual {push_w:.3g})")
            push = push_w
        cur = PolyhedralCurrent.from_graph(F, domain)
        mb = simplex_masses(cur, field_, phi)
        rows.append(MassRow(F.name, mb.phi_integral, mb.mass, mb.n_timelike, mb.n_negative, push))
    best = rows[0].mass
    wins = all(best >= r.mass - 1e-12 for r in rows[1:])
    # flagged graphs are not tau-oriented, so their Phi-period is not comparable
    phi_err = max(abs(r.phi_integral - 1.0) for r in rows if not r.flagged) if not rows[0].flagged else np.inf
    return MassComparison(rows, wins, phi_err)
