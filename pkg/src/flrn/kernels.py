"""Closed-form Sobolev-type reproducing kernel, Brownian covariance, and their pieces.

The Sobolev-Bernoulli kernel reproduces the cosine space with inner product
sum (k pi)^4 f_k g_k; its cosine series is kept here as a slow reference.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass

import numpy as np

from flrn.errors import InvalidArgument
from flrn.funcspace import Grid

SOBOLEV = "sobolev-bernoulli"
GAUSSIAN = "gaussian"
BROWNIAN = "brownian"
CUSTOM_GRID = "custom-grid"


def bernoulli_b2(x):
    return x * x - x + 1.0 / 6.0


def bernoulli_b4(x):
    x2 = x * x
    return x2 * x2 - 2.0 * x2 * x + x2 - 1.0 / 30.0


def euler_e1(x):
    return x - 0.5


@dataclass(frozen=True)
class KernelSpec:
    kind: str = SOBOLEV
    gamma: float | None = None

    def __post_init__(self):
        if self.kind == GAUSSIAN:
            if self.gamma is None or not self.gamma > 0:
                raise InvalidArgument("gaussian kernel needs gamma > 0")
            object.__setattr__(self, "gamma", float(self.gamma))
        elif self.kind == SOBOLEV:
            if self.gamma is not None:
                raise InvalidArgument("sobolev-bernoulli kernel takes no parameters")
        else:
            raise InvalidArgument(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> KernelSpec:
        """Parse ``sobolev-bernoulli`` or ``gaussian:γ=<float>`` (``gamma=`` also accepted)."""
        text = text.strip()
        if text == SOBOLEV:
            return cls(SOBOLEV)
        m = re.fullmatch(r"gaussian:(?:γ|gamma)=(.+)", text)
        if m:
            try:
                return cls(GAUSSIAN, float(m.group(1)))
            except ValueError:
                pass
        raise InvalidArgument(f"cannot parse kernel {text!r}")

    def __str__(self):
        if self.kind == GAUSSIAN:
            return f"gaussian:γ={self.gamma!r}"
        return SOBOLEV


class CovarianceSpec:
    """Covariance of the predictor process: Brownian motion or a tabulated matrix."""

    def __init__(self, kind: str = BROWNIAN, matrix=None, grid: Grid | None = None):
        if kind == BROWNIAN:
            if matrix is not None:
                raise InvalidArgument("brownian covariance takes no matrix")
            self.matrix = None
        elif kind == CUSTOM_GRID:
            C = np.array(matrix, dtype=float)
            if grid is None or C.shape != (grid.size, grid.size):
                raise InvalidArgument("custom covariance needs a grid-sized square matrix")
            if np.max(np.abs(C - C.T), initial=0.0) > 1e-10:
                raise InvalidArgument("custom covariance matrix is not symmetric")
            eig = np.linalg.eigvalsh((C + C.T) / 2)
            if eig[0] < -1e-10 * max(1.0, abs(eig[-1])):
                raise InvalidArgument("custom covariance matrix is not positive semidefinite")
            C.setflags(write=False)
            self.matrix = C
        else:
            raise InvalidArgument(f"unknown covariance kind {kind!r}")
        self.kind = kind
        self.grid = grid

    @classmethod
    def parse(cls, text: str) -> CovarianceSpec:
        if text.strip() == BROWNIAN:
            return cls(BROWNIAN)
        raise InvalidArgument(f"cannot parse covariance {text!r}")

    def __str__(self):
        return self.kind


def _check_unit(*xs):
    for x in xs:
        a = np.asarray(x, dtype=float)
        if np.any(~(a >= 0.0) | ~(a <= 1.0)):
            raise InvalidArgument("kernel arguments must lie in [0, 1]")


def _kernel_values(spec: KernelSpec, s, t):
    if spec.kind == SOBOLEV:
        return -(bernoulli_b4((s + t) / 2) + bernoulli_b4(np.abs(s - t) / 2)) / 3.0
    return np.exp(-spec.gamma * (s - t) ** 2)


def kernel_eval(spec: KernelSpec, s, t):
    """k(s, t); broadcasts over array arguments."""
    _check_unit(s, t)
    out = _kernel_values(spec, np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def kernel_series(s, t, kmax: int) -> float:
    """Truncated cosine series of the Sobolev-Bernoulli kernel. Reference only."""
    if kmax < 1:
        raise InvalidArgument("kmax must be >= 1")
    k = np.arange(1, int(kmax) + 1, dtype=float)
    terms = 2.0 / (k * np.pi) ** 4 * np.cos(k * np.pi * s) * np.cos(k * np.pi * t)
    # smallest terms first keeps the rounding error near one ulp of the sum
    return float(np.sum(terms[::-1]))


def covariance_eval(spec: CovarianceSpec, s, t):
    _check_unit(s, t)
    if spec.kind == BROWNIAN:
        out = np.minimum(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        return float(out) if np.ndim(out) == 0 else out
    pts = spec.grid.points
    i = np.searchsorted(pts, s)
    j = np.searchsorted(pts, t)
    if np.any(pts[np.clip(i, 0, pts.size - 1)] != s) or np.any(
        pts[np.clip(j, 0, pts.size - 1)] != t
    ):
        raise InvalidArgument("custom covariance is only defined on its grid points")
    out = spec.matrix[i, j]
    return float(out) if np.ndim(out) == 0 else out


def brownian_euler_form(s, t):
    """min(s, t) written through the degree-1 Euler polynomial."""
    return euler_e1((s + t) / 2) - euler_e1(np.abs(s - t) / 2)


_grid_cache: dict = {}
_cache_lock = threading.Lock()


def grid_kernel(spec: KernelSpec, grid: Grid) -> np.ndarray:
    """Read-only G x G matrix k(t_p, t_q), computed once per (kernel, grid)."""
    key = (spec, grid.key)
    hit = _grid_cache.get(key)
    if hit is not None:
        return hit
    s = grid.points[:, None]
    t = grid.points[None, :]
    Kg = _kernel_values(spec, s, t)
    Kg = (Kg + Kg.T) / 2
    Kg.setflags(write=False)
    with _cache_lock:
        return _grid_cache.setdefault(key, Kg)


def grid_covariance(spec: CovarianceSpec, grid: Grid) -> np.ndarray:
    if spec.kind == BROWNIAN:
        return np.minimum.outer(grid.points, grid.points)
    if spec.grid != grid:
        raise InvalidArgument("custom covariance was tabulated on a different grid")
    return np.array(spec.matrix)


def clear_cache() -> None:
    with _cache_lock:
        _grid_cache.clear()
