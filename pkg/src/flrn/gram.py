"""Double-integral Gram matrices of functional predictors.

Every entry is the quadrature quadratic form (W x_i)^T K_grid (W x_j), where
K_grid[p, q] = k(t_p, t_q) and W holds the trapezoid weights. The left factor
Z = (W X_rows) K_grid is formed once, then multiplied against the column
curves in fixed-width, zero-padded blocks. Each output column therefore goes
through an identically shaped BLAS call whatever the column set is, which
keeps a column subset bit-identical to the matching slice of the full matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flrn.errors import InvalidArgument, NumericError
from flrn.funcspace import Curve, Grid, _check_same_grid, as_matrix
from flrn.kernels import KernelSpec, _kernel_values, grid_kernel

COLUMN_BLOCK = 64


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray
    kernel: KernelSpec
    grid: Grid
    square: bool = False

    @property
    def shape(self):
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def _weighted(X: np.ndarray, grid: Grid) -> np.ndarray:
    return X * grid.weights[None, :]


def _blocked_product(Z: np.ndarray, Wcols: np.ndarray) -> np.ndarray:
    n_cols, G = Wcols.shape
    out = np.empty((Z.shape[0], n_cols))
    buf = np.zeros((COLUMN_BLOCK, G))
    for start in range(0, n_cols, COLUMN_BLOCK):
        stop = min(start + COLUMN_BLOCK, n_cols)
        width = stop - start
        buf[:width] = Wcols[start:stop]
        buf[width:] = 0.0
        out[:, start:stop] = (Z @ buf.T)[:, :width]
    return out


def _assemble(rows, cols, kernel: KernelSpec) -> tuple[np.ndarray, Grid]:
    Xr, grid = as_matrix(rows)
    Xc, grid_c = as_matrix(cols)
    _check_same_grid(grid, grid_c)
    return cross_entries(Xr, Xc, grid, kernel), grid


def cross_entries(Xr: np.ndarray, Xc: np.ndarray, grid: Grid, kernel: KernelSpec) -> np.ndarray:
    """Array-level Gram assembly for curve matrices already known to share ``grid``."""
    Kg = grid_kernel(kernel, grid)
    Z = _weighted(Xr, grid) @ Kg
    K = _blocked_product(Z, _weighted(Xc, grid))
    if not np.all(np.isfinite(K)):
        raise NumericError("Gram matrix has non-finite entries")
    K.setflags(write=False)
    return K


def gram_full(curves, kernel: KernelSpec) -> GramMatrix:
    """n x n matrix of double integrals of k(s, t) X_i(s) X_j(t)."""
    K, grid = _assemble(curves, curves, kernel)
    return GramMatrix(K, kernel, grid, square=True)


def gram_cross(rows, cols, kernel: KernelSpec) -> GramMatrix:
    """n x m matrix pairing every row curve with every column curve.

    For ``cols`` a subset of ``rows`` the result equals the corresponding
    column slice of ``gram_full(rows)`` exactly.
    """
    K, grid = _assemble(rows, cols, kernel)
    return GramMatrix(K, kernel, grid)


def embed_vector(train, x_new: Curve, kernel: KernelSpec) -> np.ndarray:
    """Entries of the double integral of k(s, t) X_i(t) x_new(s), one per training curve."""
    K, _ = _assemble(x_new, train, kernel)
    return np.array(K[0])


def slope_from_coefficients(coeff, curves, kernel: KernelSpec, out_grid: Grid) -> Curve:
    """Evaluate u -> sum_i coeff_i * integral of k(u, t) X_i(t) dt on ``out_grid``."""
    X, grid = as_matrix(curves)
    coeff = np.asarray(coeff, dtype=float).reshape(-1)
    if coeff.size != X.shape[0]:
        raise InvalidArgument(f"{coeff.size} coefficients for {X.shape[0]} curves")
    if out_grid == grid:
        Kug = grid_kernel(kernel, grid)
    else:
        Kug = _kernel_values(kernel, out_grid.points[:, None], grid.points[None, :])
    # weighted combination of curves first: O(nG) + O(G_out G)
    profile = _weighted(X, grid).T @ coeff
    return Curve(Kug @ profile, out_grid)
