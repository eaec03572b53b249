"""Grids on [0, 1], sampled curves, and trapezoid-rule L2 inner products."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from flrn.errors import InvalidArgument, NumericError

FLOAT_FMT = "{:.17g}"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def trapezoid_weights(points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    gaps = np.diff(points)
    w = np.zeros_like(points)
    w[:-1] += gaps / 2
    w[1:] += gaps / 2
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Quadrature nodes on [0, 1] and their weights."""

    points: np.ndarray
    weights: np.ndarray
    key: tuple = field(init=False, repr=False)

    def __post_init__(self):
        p = _frozen(self.points)
        w = _frozen(self.weights)
        if p.ndim != 1 or p.shape != w.shape:
            raise InvalidArgument("grid points and weights must be 1-D arrays of equal length")
        if p.size < 2 or p[0] != 0.0 or p[-1] != 1.0:
            raise InvalidArgument("grid must start at 0 and end at 1")
        if np.any(np.diff(p) <= 0):
            raise InvalidArgument("grid points must be strictly increasing")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgument("grid weights must be nonnegative and sum to 1")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "key", (p.size, hash(p.tobytes()), hash(w.tobytes())))

    @property
    def size(self) -> int:
        return self.points.size

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self is other or (
            self.key == other.key
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"Grid(size={self.size})"


def make_uniform_grid(G: int) -> Grid:
    """Uniform grid of ``G`` points with composite trapezoid weights."""
    if int(G) != G or G < 3:
        raise InvalidArgument(f"grid size must be an integer >= 3, got {G!r}")
    points = np.linspace(0.0, 1.0, int(G))
    return Grid(points, trapezoid_weights(points))


def grid_from_points(points) -> Grid:
    return Grid(points, trapezoid_weights(points))


@dataclass(frozen=True, eq=False)
class Curve:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.grid.size,):
            raise InvalidArgument(
                f"curve has {v.size} values but grid has {self.grid.size} points"
            )
        if not np.all(np.isfinite(v)):
            raise NumericError("curve values must be finite")
        object.__setattr__(self, "values", v)

    def __add__(self, other: Curve) -> Curve:
        _check_same_grid(self.grid, other.grid)
        return Curve(self.values + other.values, self.grid)

    def __sub__(self, other: Curve) -> Curve:
        _check_same_grid(self.grid, other.grid)
        return Curve(self.values - other.values, self.grid)

    def __mul__(self, c: float) -> Curve:
        return Curve(self.values * float(c), self.grid)

    __rmul__ = __mul__


def _check_same_grid(a: Grid, b: Grid):
    if a != b:
        raise InvalidArgument("curves live on different grids")


def l2_inner(f: Curve, g: Curve) -> float:
    """Trapezoid approximation of the integral of f*g over [0, 1]."""
    _check_same_grid(f.grid, g.grid)
    # product is commutative elementwise, so the sum is bit-symmetric in (f, g)
    return float(np.sum(f.grid.weights * (f.values * g.values)))


def curve_from_function(fn: Callable, grid: Grid) -> Curve:
    """Sample ``fn`` at the grid points; ``fn`` may be vectorized or scalar."""
    try:
        values = np.asarray(fn(grid.points), dtype=float)
        if values.shape != grid.points.shape:
            values = np.broadcast_to(values, grid.points.shape).astype(float)
    except (TypeError, ValueError):
        values = np.array([float(fn(t)) for t in grid.points])
    if not np.all(np.isfinite(values)):
        raise NumericError("function is not finite on every grid point")
    return Curve(values, grid)


class Dataset:
    """Curves X_i sampled on one grid, stored row-wise, with scalar responses Y_i."""

    def __init__(self, X, y, grid: Grid):
        X = np.array(X, dtype=float, ndmin=2)
        y = np.array(y, dtype=float).reshape(-1)
        if X.shape[1] != grid.size:
            raise InvalidArgument(
                f"curve matrix has {X.shape[1]} columns but grid has {grid.size} points"
            )
        if X.shape[0] != y.size:
            raise InvalidArgument(f"{X.shape[0]} curves but {y.size} responses")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NumericError("dataset contains non-finite values")
        X.setflags(write=False)
        y.setflags(write=False)
        self.X = X
        self.y = y
        self.grid = grid

    @classmethod
    def from_curves(cls, curves: Sequence[Curve], responses) -> Dataset:
        curves = list(curves)
        if not curves:
            raise InvalidArgument("dataset needs at least one curve")
        grid = curves[0].grid
        for c in curves[1:]:
            _check_same_grid(grid, c.grid)
        return cls(np.vstack([c.values for c in curves]), responses, grid)

    def __len__(self):
        return self.X.shape[0]

    def curve(self, i: int) -> Curve:
        return Curve(self.X[i], self.grid)

    @property
    def curves(self) -> list[Curve]:
        return [self.curve(i) for i in range(len(self))]

    def __iter__(self) -> Iterator[tuple[Curve, float]]:
        for i in range(len(self)):
            yield self.curve(i), float(self.y[i])

    def subset(self, indices) -> Dataset:
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.X[idx], self.y[idx], self.grid)


def as_matrix(curves) -> tuple[np.ndarray, Grid]:
    """Normalize a Dataset, a Curve, or a sequence of Curves to (matrix, grid)."""
    if isinstance(curves, Dataset):
        return curves.X, curves.grid
    if isinstance(curves, Curve):
        return curves.values[None, :], curves.grid
    curves = list(curves)
    if not curves:
        raise InvalidArgument("need at least one curve")
    grid = curves[0].grid
    for c in curves[1:]:
        _check_same_grid(grid, c.grid)
    return np.vstack([c.values for c in curves]), grid


def write_dataset_csv(data: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y/t"] + [FLOAT_FMT.format(t) for t in data.grid.points])
        for yi, row in zip(data.y, data.X):
            w.writerow([FLOAT_FMT.format(yi)] + [FLOAT_FMT.format(v) for v in row])


def read_dataset_csv(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows or rows[0][0].strip() != "y/t":
        raise InvalidArgument(f"{path}: first row must start with 'y/t'")
    grid = grid_from_points([float(v) for v in rows[0][1:]])
    body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    if body.size == 0:
        raise InvalidArgument(f"{path}: no data rows")
    return Dataset(body[:, 1:], body[:, 0], grid)
