"""Full kernel-ridge and Nystrom-subsampled solvers for the functional slope.

Both solvers use the n-scaled ridge penalty: the full coefficients solve
(K + n lam I) a = Y, and the Nystrom coefficients solve
(K_nm^T K_nm + n lam K_mm) a = K_nm^T Y. With this scaling a Nystrom fit on
all n curves reproduces the full fit whenever K is invertible.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.linalg

from flrn.errors import InvalidArgument, NumericError
from flrn.funcspace import FLOAT_FMT, Curve, Dataset, Grid, _check_same_grid, as_matrix
from flrn.gram import cross_entries, gram_full, slope_from_coefficients
from flrn.kernels import KernelSpec

log = logging.getLogger(__name__)

JITTER_ESCALATION = 100.0


@dataclass(frozen=True)
class RidgeConfig:
    lam: float
    jitter: Literal["off", "auto"] = "auto"
    jitter_rel: float = 1e-10

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidArgument(f"lambda must be a positive finite number, got {self.lam!r}")
        if self.jitter not in ("off", "auto"):
            raise InvalidArgument(f"jitter policy must be 'off' or 'auto', got {self.jitter!r}")
        if not self.jitter_rel > 0:
            raise InvalidArgument("jitter_rel must be positive")


@dataclass(frozen=True, eq=False)
class FittedModel:
    kind: Literal["full", "nystrom"]
    coeff: np.ndarray
    basis: np.ndarray  # basis curves, one per row, on ``grid``
    subsample_indices: np.ndarray
    lam: float
    kernel: KernelSpec
    grid: Grid
    n_train: int
    jitter_added: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.coeff.shape != (self.basis.shape[0],):
            raise InvalidArgument("one coefficient per basis curve is required")
        if self.kind == "nystrom":
            idx = self.subsample_indices
            if idx.size != self.coeff.size or np.any(np.diff(idx) <= 0):
                raise InvalidArgument("subsample indices must be distinct and sorted")
            if idx.size and (idx[0] < 0 or idx[-1] >= self.n_train):
                raise InvalidArgument("subsample indices out of range")

    @property
    def m(self) -> int:
        return self.coeff.size

    @property
    def basis_curves(self) -> list[Curve]:
        return [Curve(row, self.grid) for row in self.basis]


def _spd_diagnostics(M: np.ndarray) -> dict:
    eig = np.linalg.eigvalsh(M)
    top = float(np.max(np.abs(eig))) if eig.size else 0.0
    low = float(eig[0]) if eig.size else 0.0
    return {
        "dim": int(M.shape[0]),
        "trace": float(np.trace(M)),
        "min_eigenvalue": low,
        "max_abs_eigenvalue": top,
        "condition": top / low if low > 0 else float("inf"),
    }


def solve_spd(M: np.ndarray, rhs: np.ndarray, cfg: RidgeConfig) -> tuple[np.ndarray, float]:
    """Symmetrize and Cholesky-solve ``M x = rhs``; returns (x, jitter added).

    Under the ``auto`` policy a failed factorization is retried with
    rel * trace(M) / dim on the diagonal, then once more with rel escalated.
    """
    M = (M + M.T) / 2
    if not np.all(np.isfinite(M)) or not np.all(np.isfinite(rhs)):
        raise NumericError("system has non-finite entries")
    dim = M.shape[0]
    scale = np.trace(M) / dim
    jitters = [0.0]
    if cfg.jitter == "auto":
        jitters += [cfg.jitter_rel * scale, cfg.jitter_rel * JITTER_ESCALATION * scale]
    for eps in jitters:
        A = M + eps * np.eye(dim) if eps else M
        try:
            factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        if eps:
            log.debug("Cholesky succeeded after adding jitter %.3g", eps)
        return scipy.linalg.cho_solve(factor, rhs, check_finite=False), eps
    diag = _spd_diagnostics(M)
    raise NumericError(
        "system matrix is not numerically positive definite "
        f"(dim={diag['dim']}, min eigenvalue={diag['min_eigenvalue']:.3g}, "
        f"condition={diag['condition']:.3g})",
        diag,
    )


def _solve_full(K: np.ndarray, y: np.ndarray, cfg: RidgeConfig) -> tuple[np.ndarray, float]:
    n = K.shape[0]
    return solve_spd(K + n * cfg.lam * np.eye(n), y, cfg)


def _solve_nystrom(
    Knm: np.ndarray, idx: np.ndarray, y: np.ndarray, cfg: RidgeConfig
) -> tuple[np.ndarray, float]:
    # fixed memory layout keeps BLAS on one code path, so sliced and freshly
    # assembled K_nm give bit-identical coefficients
    Knm = np.ascontiguousarray(Knm)
    n = Knm.shape[0]
    # K_mm is the subsampled rows of K_nm; no separate m x m assembly needed
    Kmm = Knm[idx]
    M = Knm.T @ Knm + (n * cfg.lam) * Kmm
    return solve_spd(M, Knm.T @ y, cfg)


def fit_full(data: Dataset, kernel: KernelSpec, cfg: RidgeConfig) -> FittedModel:
    K = gram_full(data, kernel).entries
    coeff, eps = _solve_full(K, data.y, cfg)
    return FittedModel(
        kind="full",
        coeff=coeff,
        basis=data.X,
        subsample_indices=np.arange(len(data)),
        lam=cfg.lam,
        kernel=kernel,
        grid=data.grid,
        n_train=len(data),
        jitter_added=eps,
    )


def _check_seed(seed) -> int:
    if int(seed) != seed or not 0 <= seed < 2**64:
        raise InvalidArgument(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


def subsample_uniform(n: int, m: int, seed: int) -> np.ndarray:
    """Sorted sample of ``m`` distinct indices from range(n), without replacement.

    Partial Fisher-Yates shuffle: position k is swapped with a uniform draw
    from [k, n), the draws coming from numpy's PCG64 generator seeded with
    ``seed``. Same (n, m, seed) always gives the same indices.
    """
    if not 1 <= m <= n:
        raise InvalidArgument(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(_check_seed(seed))
    picks = rng.integers(np.arange(m), n)
    perm = np.arange(n)
    for k, j in enumerate(picks):
        perm[k], perm[j] = perm[j], perm[k]
    return np.sort(perm[:m])


def fit_nystrom(
    data: Dataset, kernel: KernelSpec, cfg: RidgeConfig, m: int, seed: int
) -> FittedModel:
    n = len(data)
    idx = subsample_uniform(n, m, seed)
    Knm = cross_entries(data.X, data.X[idx], data.grid, kernel)
    coeff, eps = _solve_nystrom(Knm, idx, data.y, cfg)
    return FittedModel(
        kind="nystrom",
        coeff=coeff,
        basis=data.X[idx],
        subsample_indices=idx,
        lam=cfg.lam,
        kernel=kernel,
        grid=data.grid,
        n_train=n,
        jitter_added=eps,
    )


def predict_many(model: FittedModel, curves) -> np.ndarray:
    X, grid = as_matrix(curves)
    _check_same_grid(grid, model.grid)
    return cross_entries(X, model.basis, grid, model.kernel) @ model.coeff


def predict(model: FittedModel, x_new: Curve) -> float:
    """Predicted response: L2 pairing of the fitted slope with ``x_new``."""
    return float(predict_many(model, [x_new])[0])


def reconstruct_slope(model: FittedModel, out_grid: Grid | None = None) -> Curve:
    return slope_from_coefficients(
        model.coeff, [Curve(b, model.grid) for b in model.basis], model.kernel,
        out_grid or model.grid,
    )


def write_model_csv(model: FittedModel, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "lambda", "kernel", "m"])
        w.writerow([model.kind, FLOAT_FMT.format(model.lam), str(model.kernel), model.m])
        w.writerow(["index", "subsample_index", "coefficient"])
        for i, (j, c) in enumerate(zip(model.subsample_indices, model.coeff)):
            w.writerow([i, int(j), FLOAT_FMT.format(c)])


def read_model_csv(path, train: Dataset) -> FittedModel:
    """Load a model file, re-deriving its basis curves from the training data."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 3 or rows[0] != ["kind", "lambda", "kernel", "m"]:
        raise InvalidArgument(f"{path}: not a model file")
    kind, lam, kernel, m = rows[1]
    if kind not in ("full", "nystrom"):
        raise InvalidArgument(f"{path}: unknown model kind {kind!r}")
    body = rows[3:]
    idx = np.array([int(r[1]) for r in body], dtype=int)
    coeff = np.array([float(r[2]) for r in body])
    if idx.size != int(m):
        raise InvalidArgument(f"{path}: header says m={m} but file has {idx.size} coefficients")
    if idx.size and (idx.min() < 0 or idx.max() >= len(train)):
        raise InvalidArgument(f"{path}: subsample index outside the training set")
    if kind == "full" and idx.size != len(train):
        raise InvalidArgument(f"{path}: full model needs all {len(train)} training curves")
    return FittedModel(
        kind=kind,
        coeff=coeff,
        basis=train.X[idx],
        subsample_indices=idx,
        lam=float(lam),
        kernel=KernelSpec.parse(kernel),
        grid=train.grid,
        n_train=len(train),
    )
