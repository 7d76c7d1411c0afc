"""CSV exchange: point clouds, density grids, polyhedral meshes and per-point result grids."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .domain import DensitySpec, from_grid


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    return header, data.reshape(-1, len(header))


def _write_rows(path, header: Sequence[str], data) -> None:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def read_points(path) -> np.ndarray:
    """Point cloud with header ``x1,...,xn``."""
    header, data = _read_rows(path)
    expected = [f"x{i + 1}" for i in range(len(header))]
    if header != expected:
        raise ValueError(f"{path}: header must be {','.join(expected)}")
    return data


def write_points(path, points) -> None:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _write_rows(path, [f"x{i + 1}" for i in range(points.shape[1])], points)


def read_density_grid(path, name: str | None = None) -> DensitySpec:
    """Tensor-grid density: columns ``x1..xn,value``, rows row-major over the grid."""
    header, data = _read_rows(path)
    if header[-1] != "value":
        raise ValueError(f"{path}: last column must be 'value'")
    n = len(header) - 1
    axes = [np.unique(data[:, k]) for k in range(n)]
    shape = tuple(a.size for a in axes)
    if int(np.prod(shape)) != data.shape[0]:
        raise ValueError(f"{path}: samples do not form a full tensor grid")
    order = np.lexsort(tuple(data[:, k] for k in reversed(range(n))))
    values = data[order, -1].reshape(shape)
    return from_grid(axes, values, name=name or Path(path).stem)


def write_density_grid(path, axes, values) -> None:
    mesh = np.meshgrid(*axes, indexing="ij")
    cols = [m.ravel() for m in mesh] + [np.asarray(values, dtype=float).ravel()]
    _write_rows(path, [f"x{i + 1}" for i in range(len(axes))] + ["value"], np.column_stack(cols))


def write_mesh(directory, vertices, simplices) -> None:
    """``vertices.csv`` (2n coordinate columns) and ``simplices.csv`` (n+1 vertex indices)."""
    directory = Path(directory)
    vertices = np.asarray(vertices, dtype=float)
    simplices = np.asarray(simplices, dtype=int)
    n = vertices.shape[1] // 2
    vh = [f"x{i + 1}" for i in range(n)] + [f"xbar{i + 1}" for i in range(n)]
    _write_rows(directory / "vertices.csv", vh, vertices)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "simplices.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"v{k}" for k in range(simplices.shape[1])])
        w.writerows(simplices.tolist())


def read_mesh(directory):
    directory = Path(directory)
    _, vertices = _read_rows(directory / "vertices.csv")
    header, simp = _read_rows(directory / "simplices.csv")
    if vertices.shape[1] % 2 or simp.shape[1] != vertices.shape[1] // 2 + 1:
        raise ValueError(f"{directory}: inconsistent mesh column counts")
    return vertices, simp.astype(int)


def write_grid(path, points, columns: Mapping[str, np.ndarray]) -> None:
    """Per-point results, one row per grid node in row-major order."""
    points = np.asarray(points, dtype=float)
    points = points.reshape(-1, points.shape[-1])
    names = [f"x{i + 1}" for i in range(points.shape[1])] + list(columns)
    cols = [points] + [np.asarray(v, dtype=float).reshape(points.shape[0], -1) for v in columns.values()]
    data = np.concatenate(cols, axis=1)
    if data.shape[1] != len(names):
        raise ValueError("every extra column must hold one scalar per point")
    _write_rows(path, names, data)


def write_table(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """Mixed text/number table (e.g. the mass ranking)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
