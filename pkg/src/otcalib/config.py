"""Run configuration: TOML with at most two levels (``[section] key = value``).

Example::

    seed = 7
    out = "results"

    [cost]
    id = "quadratic"
    n = 1

    [source]
    family = "uniform"
    low = [0.0]
    high = [1.0]

    [target]
    family = "uniform"
    low = [0.0]
    high = [2.0]

    [domain]
    low = [0.0]
    high = [1.0]
    resolution = 101

    [map]
    source = "monotone"
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import transport as tr
from .cost import CostField, get_cost, grid_cost
from .domain import DensitySpec, DomainSpec, gaussian, uniform
from .errors import ConfigError
from .io import read_density_grid

SECTIONS = {"cost", "source", "target", "domain", "map", "checks", "competitors", "comass",
            "curvature", "suite"}
TOP_KEYS = {"seed", "out", "name"}


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)
    seed: int = 0
    out: Path = Path("otcalib-out")
    grid: Optional[int] = None

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    def get(self, section: str, key: str, default: Any = None) -> Any:
        return self.raw.get(section, {}).get(key, default)

    def tol(self, key: str, default: float) -> float:
        return float(self.get("checks", key, default))

    def with_overrides(self, seed=None, out=None, grid=None) -> "RunConfig":
        return replace(self, seed=self.seed if seed is None else int(seed),
                       out=self.out if out is None else Path(out),
                       grid=self.grid if grid is None else int(grid))

    # --- builders ---------------------------------------------------------------------

    @property
    def n(self) -> int:
        return int(self.get("cost", "n", 1))

    def cost(self) -> CostField:
        cid = self.get("cost", "id", "quadratic")
        if cid == "custom-grid":
            return _grid_cost_from_file(self._path(self.get("cost", "file")))
        params = {k: v for k, v in self.section("cost").items() if k not in {"id", "n"}}
        try:
            return get_cost(cid, self.n, **params)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad cost specification: {exc}") from exc

    def densities(self) -> tuple[DensitySpec, DensitySpec]:
        return self._density("source"), self._density("target")

    def domain(self) -> DomainSpec:
        sec = self.section("domain")
        if "low" in sec:
            dom = DomainSpec(sec["low"], sec["high"], sec.get("resolution", 101 if self.n == 1 else 41))
        else:
            rho = self._density("source")
            dom = rho.support.with_resolution(sec.get("resolution", 101 if self.n == 1 else 41))
        if self.grid is not None:
            dom = dom.with_resolution(self.grid)
        return dom

    def transport_map(self) -> tr.TransportMap:
        return build_map(self.section("map"), self)

    def _density(self, which: str) -> DensitySpec:
        sec = self.section(which)
        fam = sec.get("family", "uniform")
        n = self.n
        try:
            if fam == "uniform":
                return uniform(sec.get("low", [0.0] * n), sec.get("high", [1.0] * n))
            if fam == "gaussian":
                cov = np.atleast_2d(np.asarray(sec.get("cov", np.eye(n).tolist()), dtype=float))
                return gaussian(sec.get("mean", [0.0] * n), cov, nsigma=sec.get("nsigma", 6.0))
            if fam == "grid":
                return read_density_grid(self._path(sec.get("file")), name=f"{which}-grid")
        except ValueError as exc:
            raise ConfigError(f"[{which}]: {exc}") from exc
        raise ConfigError(f"[{which}]: unknown density family {fam!r}")

    def _path(self, value) -> Path:
        if not value:
            raise ConfigError("a file path is required")
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p


def _grid_cost_from_file(path: Path) -> CostField:
    from .io import _read_rows

    header, data = _read_rows(path)
    if header != ["x1", "xbar1", "value"]:
        raise ConfigError(f"{path}: custom-grid cost needs columns x1,xbar1,value")
    xs, xbs = np.unique(data[:, 0]), np.unique(data[:, 1])
    order = np.lexsort((data[:, 1], data[:, 0]))
    return grid_cost(xs, xbs, data[order, 2].reshape(xs.size, xbs.size))


def _map_from_file(path: Path, n: int) -> tr.TransportMap:
    from scipy.interpolate import PchipInterpolator, RegularGridInterpolator

    from .io import _read_rows

    header, data = _read_rows(path)
    if len(header) != 2 * n:
        raise ConfigError(f"{path}: expected {2 * n} columns x1..xn,y1..yn")
    if n == 1:
        order = np.argsort(data[:, 0])
        p = PchipInterpolator(data[order, 0], data[order, 1])
        dp = p.derivative()
        return tr.TransportMap(1, lambda x: p(x[..., 0])[..., None],
                               jac=lambda x: dp(x[..., 0])[..., None, None],
                               kind="grid-interpolated", name=path.stem)
    axes = [np.unique(data[:, k]) for k in range(n)]
    order = np.lexsort(tuple(data[:, k] for k in reversed(range(n))))
    vals = data[order, n:].reshape(tuple(a.size for a in axes) + (n,))
    interp = RegularGridInterpolator(axes, vals, method="cubic")
    return tr.TransportMap(n, lambda x: interp(x.reshape(-1, n)).reshape(x.shape),
                           kind="grid-interpolated", name=path.stem)


def build_map(sec: dict, cfg: RunConfig) -> tr.TransportMap:
    """Map from a ``[map]``-style table (also used for competitor entries)."""
    src = sec.get("source", "monotone")
    n = cfg.n
    rho, rhob = cfg.densities()
    if src == "monotone":
        return tr.solve_1d_monotone(rho, rhob)
    if src == "gaussian":
        S = np.asarray(rho.params.get("cov", np.eye(n)))
        Sb = np.asarray(rhob.params.get("cov", np.eye(n)))
        F = tr.gaussian_map(S, Sb)
        m = np.asarray(rho.params.get("mean", np.zeros(n)))
        mb = np.asarray(rhob.params.get("mean", np.zeros(n)))
        A = F.matrix
        return tr.linear_map(A, mb - A @ m, name="gaussian")
    if src == "identity":
        return tr.identity_map(n)
    if src == "linear":
        return tr.linear_map(sec["matrix"], sec.get("offset"))
    if src == "rotation":
        return tr.rotation_map(math.radians(float(sec.get("angle_deg", 0.0))))
    if src == "sinusoid":
        return tr.sinusoid_map(float(sec.get("amplitude", 0.1)), float(sec.get("frequency", math.pi)))
    if src == "sawtooth":
        dom = rho.support
        return tr.sawtooth_map(float(dom.low[0]), float(dom.high[0]))
    if src == "potential":
        P = np.atleast_2d(np.asarray(sec["matrix"], dtype=float))
        return tr.map_from_potential(lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, P, x), cfg.cost(),
                                     grad_u=lambda x: x @ P.T, target=rhob.support)
    if src == "file":
        return _map_from_file(cfg._path(sec.get("file")), n)
    raise ConfigError(f"unknown map source {src!r}")


def _validate(raw: dict, base: Path) -> None:
    for key, val in raw.items():
        if isinstance(val, dict):
            if key not in SECTIONS:
                raise ConfigError(f"unknown section [{key}]")
            for k, v in val.items():
                if isinstance(v, dict):
                    raise ConfigError(f"[{key}].{k}: nesting deeper than two levels")
                if k.endswith("tol") and not (isinstance(v, (int, float)) and v > 0):
                    raise ConfigError(f"[{key}].{k}: tolerances must be positive numbers")
                if k == "file":
                    p = Path(v) if Path(v).is_absolute() else base / v
                    if not p.exists():
                        raise ConfigError(f"[{key}].file: {p} does not exist")
        elif key not in TOP_KEYS:
            raise ConfigError(f"unknown top-level key {key!r}")


def parse_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    base = Path(base_dir)
    _validate(raw, base)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    cfg = RunConfig(raw, base, seed, Path(raw.get("out", "otcalib-out")))
    # build the pieces eagerly so bad parameters surface before any check runs
    try:
        cfg.cost()
        cfg.densities()
        cfg.domain()
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(encoding="utf-8"), path.parent)
