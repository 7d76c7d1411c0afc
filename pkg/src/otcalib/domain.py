"""Box domains and probability densities on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats
from scipy.interpolate import PchipInterpolator, RegularGridInterpolator

from .errors import NonpositiveDensity


@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned box with a tensor grid.

    ``nodes`` are the grid vertices (``resolution`` per axis, endpoints
    included); ``midpoints`` are the cell centres used by the midpoint rule.
    """

    low: np.ndarray
    high: np.ndarray
    resolution: tuple

    def __post_init__(self):
        low = np.atleast_1d(np.asarray(self.low, dtype=float))
        high = np.atleast_1d(np.asarray(self.high, dtype=float))
        res = self.resolution
        if np.isscalar(res):
            res = (int(res),) * low.size
        res = tuple(int(r) for r in res)
        if low.shape != high.shape or len(res) != low.size:
            raise ValueError("low, high and resolution must agree in dimension")
        if np.any(high <= low):
            raise ValueError("domain must have nonempty interior")
        if min(res) < 3:
            raise ValueError("resolution must be at least 3 per axis")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        object.__setattr__(self, "resolution", res)

    @property
    def n(self) -> int:
        return self.low.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.high - self.low))

    @property
    def volume(self) -> float:
        return float(np.prod(self.high - self.low))

    def axes(self):
        return [np.linspace(a, b, r) for a, b, r in zip(self.low, self.high, self.resolution)]

    def nodes(self) -> np.ndarray:
        """Grid vertices, shape ``resolution + (n,)``, row-major (``ij``)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def midpoints(self):
        """Cell centres (shape ``(r-1, ..., n)``) and the common cell volume."""
        centres = []
        for a, b, r in zip(self.low, self.high, self.resolution):
            edges = np.linspace(a, b, r)
            centres.append(0.5 * (edges[1:] + edges[:-1]))
        mesh = np.meshgrid(*centres, indexing="ij")
        cell = np.prod((self.high - self.low) / (np.asarray(self.resolution) - 1))
        return np.stack(mesh, axis=-1), float(cell)

    def interior_mask(self, erode: int = 2) -> np.ndarray:
        mask = np.ones(self.resolution, dtype=bool)
        for ax, r in enumerate(self.resolution):
            idx = [slice(None)] * self.n
            idx[ax] = slice(0, erode)
            mask[tuple(idx)] = False
            idx[ax] = slice(r - erode, r)
            mask[tuple(idx)] = False
        return mask

    def contains(self, x, slack: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.low - slack) & (x <= self.high + slack), axis=-1)

    def with_resolution(self, resolution) -> "DomainSpec":
        return DomainSpec(self.low, self.high, resolution)

    def scaled(self, factor) -> "DomainSpec":
        """Box image under ``x -> factor * x`` (``factor`` > 0 per axis)."""
        f = np.broadcast_to(np.asarray(factor, dtype=float), self.low.shape)
        return DomainSpec(self.low * f, self.high * f, self.resolution)


@dataclass(frozen=True)
class DensitySpec:
    """A strictly positive probability density with box support.

    ``pdf`` accepts points of shape ``(..., n)`` and returns ``(...)``.  The
    evaluator is a smooth extension beyond ``support`` so finite-difference
    stencils near the boundary stay well defined; quadrature uses ``support``.
    """

    n: int
    pdf: Callable[[np.ndarray], np.ndarray]
    support: DomainSpec
    name: str = "custom"
    params: dict = field(default_factory=dict)
    cdf: Optional[Callable] = None
    ppf: Optional[Callable] = None
    grad: Optional[Callable] = None

    def __call__(self, x) -> np.ndarray:
        return self.pdf(np.asarray(x, dtype=float))

    def positive(self, x) -> np.ndarray:
        """Evaluate and raise :class:`NonpositiveDensity` on any value <= 0."""
        val = self(x)
        if np.any(~np.isfinite(val)) or np.any(val <= 0):
            raise NonpositiveDensity(f"density {self.name!r} is not positive at a queried point")
        return val

    def mass(self, resolution: Optional[int] = None) -> float:
        dom = self.support if resolution is None else self.support.with_resolution(resolution)
        pts, cell = dom.midpoints()
        return float(np.sum(self(pts)) * cell)

    def normalization_error(self, resolution: int = 401) -> float:
        return abs(self.mass(resolution) - 1.0)


def uniform(low, high, resolution: int = 201) -> DensitySpec:
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    dom = DomainSpec(low, high, resolution)
    value = 1.0 / dom.volume

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], value)

    def grad(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    cdf = ppf = None
    if low.size == 1:
        a, b = float(low[0]), float(high[0])

        def cdf(t):
            return (np.asarray(t, dtype=float) - a) / (b - a)

        def ppf(q):
            return a + np.asarray(q, dtype=float) * (b - a)

    return DensitySpec(low.size, pdf, dom, "uniform", {"low": low.tolist(), "high": high.tolist()},
                       cdf=cdf, ppf=ppf, grad=grad)


def gaussian(mean, cov, nsigma: float = 6.0, resolution: int = 201) -> DensitySpec:
    """Untruncated normal density; the support box spans ``nsigma`` marginal deviations."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = mean.size
    if cov.shape != (n, n):
        raise ValueError("covariance shape does not match mean")
    evals = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    if evals.min() <= 0:
        raise ValueError("covariance must be positive definite")
    prec = np.linalg.inv(cov)
    norm = 1.0 / np.sqrt((2 * np.pi) ** n * np.linalg.det(cov))
    sd = np.sqrt(np.diag(cov))
    dom = DomainSpec(mean - nsigma * sd, mean + nsigma * sd, resolution)

    def pdf(x):
        d = np.asarray(x, dtype=float) - mean
        q = np.einsum("...i,ij,...j->...", d, prec, d)
        return norm * np.exp(-0.5 * q)

    def grad(x):
        d = np.asarray(x, dtype=float) - mean
        return -pdf(x)[..., None] * (d @ prec)

    cdf = ppf = None
    if n == 1:
        dist = stats.norm(loc=mean[0], scale=sd[0])
        cdf, ppf = dist.cdf, dist.ppf
    return DensitySpec(n, pdf, dom, "gaussian", {"mean": mean.tolist(), "cov": cov.tolist()},
                       cdf=cdf, ppf=ppf, grad=grad)


def from_grid(axes, values, name: str = "grid") -> DensitySpec:
    """Density sampled on a tensor grid, linearly interpolated and renormalized.

    Values outside the grid are clamped to the nearest boundary sample.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    values = np.asarray(values, dtype=float)
    if values.shape != tuple(a.size for a in axes):
        raise ValueError("grid values do not match axes")
    if np.any(values <= 0):
        raise NonpositiveDensity("grid density must be strictly positive")
    low = np.array([a[0] for a in axes])
    high = np.array([a[-1] for a in axes])
    interp = RegularGridInterpolator(axes, values, method="linear")

    def raw(x):
        x = np.clip(np.asarray(x, dtype=float), low, high)
        return interp(x.reshape(-1, low.size)).reshape(x.shape[:-1])

    # trapezoid normalization on the sample grid, exact for the piecewise-linear interpolant in 1-D
    total = values
    for ax in reversed(axes):
        total = np.trapezoid(total, ax, axis=-1)
    scale = 1.0 / float(total)

    def pdf(x):
        return scale * raw(x)

    cdf = ppf = None
    if len(axes) == 1:
        xs = axes[0]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(xs))]) * scale
        cum /= cum[-1]
        cdf_i = PchipInterpolator(xs, cum, extrapolate=True)
        ppf_i = PchipInterpolator(cum, xs, extrapolate=True)
        cdf, ppf = cdf_i, ppf_i
    dom = DomainSpec(low, high, max(201, max(a.size for a in axes)))
    return DensitySpec(len(axes), pdf, dom, name, {"points": int(values.size)}, cdf=cdf, ppf=ppf)


def sample(density: DensitySpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` points; closed-form for the named families, rejection sampling otherwise."""
    if density.name == "uniform":
        return rng.uniform(density.support.low, density.support.high, (count, density.n))
    if density.name == "gaussian":
        return rng.multivariate_normal(density.params["mean"], density.params["cov"], size=count)
    dom = density.support
    bound = 1.05 * float(density(dom.nodes().reshape(-1, dom.n)).max())
    out = np.empty((0, dom.n))
    while out.shape[0] < count:
        cand = rng.uniform(dom.low, dom.high, (2 * count, dom.n))
        keep = rng.uniform(0, bound, 2 * count) < density(cand)
        out = np.vstack([out, cand[keep]])
    return out[:count]
