"""Synthetic scalar-on-function data: Brownian-motion predictors and a cosine slope.

Predictors follow the truncated Karhunen-Loeve expansion of Brownian motion,

    X(t) = sum_{k=1}^{N} sqrt(2) / ((k - 1/2) pi) * Z_k * sin((k - 1/2) pi t),

with Z_k i.i.d. standard normal, and responses are Y = <X, beta> + eps.

Seeding: the master seed feeds ``numpy.random.SeedSequence``; its first two
spawned children drive the predictor scores and the noise respectively, each
through a PCG64 ``Generator`` whose normals come from numpy's ziggurat
transform of the uniform stream. Curves therefore do not change when only the
noise level changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from flrn.errors import InvalidArgument
from flrn.funcspace import Curve, Dataset, Grid, make_uniform_grid
from flrn.kernels import bernoulli_b2, euler_e1

H_VARIANT_TERMS = 200


@dataclass(frozen=True)
class SynthConfig:
    n_total: int = 650
    n_train: int = 550
    n_modes: int = 500
    sigma2: float = 0.5
    grid_size: int = 256
    seed: int = 20240101

    def __post_init__(self):
        if not 1 <= self.n_train < self.n_total:
            raise InvalidArgument("need 1 <= n_train < n_total")
        if self.n_modes < 1:
            raise InvalidArgument("need at least one Karhunen-Loeve mode")
        if not self.sigma2 >= 0:
            raise InvalidArgument("noise variance must be nonnegative")
        if self.grid_size < 3:
            raise InvalidArgument("grid_size must be >= 3")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InvalidArgument("seed must be an integer in [0, 2**64)")

    @property
    def n_test(self) -> int:
        return self.n_total - self.n_train

    def streams(self) -> tuple[int, int]:
        """64-bit seeds for the predictor stream and the noise stream."""
        x_ss, eps_ss = np.random.SeedSequence(self.seed).spawn(2)
        return (
            int(x_ss.generate_state(1, np.uint64)[0]),
            int(eps_ss.generate_state(1, np.uint64)[0]),
        )


def kl_basis(grid: Grid, n_modes: int) -> np.ndarray:
    """(n_modes, G) matrix of scaled sine modes of the Brownian expansion."""
    freq = (np.arange(1, n_modes + 1) - 0.5) * np.pi
    return (np.sqrt(2.0) / freq)[:, None] * np.sin(freq[:, None] * grid.points[None, :])


def gen_predictors(
    cfg: SynthConfig, grid: Grid | None = None, scores: np.ndarray | None = None
) -> np.ndarray:
    """(n_total, G) matrix of predictor curves.

    ``scores`` overrides the random Z draws (shape (n_total, n_modes)).
    """
    grid = grid or make_uniform_grid(cfg.grid_size)
    if scores is None:
        x_seed, _ = cfg.streams()
        scores = np.random.default_rng(x_seed).standard_normal((cfg.n_total, cfg.n_modes))
    elif scores.shape != (cfg.n_total, cfg.n_modes):
        raise InvalidArgument(f"scores must have shape {(cfg.n_total, cfg.n_modes)}")
    return scores @ kl_basis(grid, cfg.n_modes)


def beta_star(grid: Grid) -> Curve:
    """Closed form -sqrt(2) pi^2 (E1(t) + B2(t)) of the cosine-series slope."""
    t = grid.points
    return Curve(-np.sqrt(2.0) * np.pi**2 * (euler_e1(t) + bernoulli_b2(t)), grid)


def beta_star_h_variant(grid: Grid, decay: float) -> Curve:
    """Faster-decaying slope sum_{k<=200} 4 sqrt(2) (-1)^(k-1) k^(-decay) cos(k pi t).

    Unlike :func:`beta_star` it has finite norm in the Sobolev RKHS once decay > 4.5.
    """
    if not decay >= 4:
        raise InvalidArgument("decay must be >= 4")
    k = np.arange(1, H_VARIANT_TERMS + 1, dtype=float)
    coef = 4.0 * np.sqrt(2.0) * (-1.0) ** (k - 1) * k ** (-float(decay))
    return Curve(coef @ np.cos(np.pi * k[:, None] * grid.points[None, :]), grid)


def noiseless_responses(X: np.ndarray, beta: Curve) -> np.ndarray:
    # same elementwise order as funcspace.l2_inner, so the two agree bit for bit
    return np.array([np.sum(beta.grid.weights * (row * beta.values)) for row in X])


def gen_responses(X: np.ndarray, beta: Curve, sigma2: float, seed: int) -> np.ndarray:
    if not sigma2 >= 0:
        raise InvalidArgument("noise variance must be nonnegative")
    X = np.atleast_2d(X)
    if X.shape[1] != beta.grid.size:
        raise InvalidArgument("curves and slope live on different grids")
    signal = noiseless_responses(X, beta)
    if sigma2 == 0:
        return signal
    noise = np.random.default_rng(seed).normal(0.0, np.sqrt(sigma2), X.shape[0])
    return signal + noise


def make_experiment(cfg: SynthConfig = SynthConfig()) -> tuple[Dataset, Dataset]:
    """Generate n_total pairs; the first n_train form the training set, the rest the test set."""
    grid = make_uniform_grid(cfg.grid_size)
    X = gen_predictors(cfg, grid)
    _, eps_seed = cfg.streams()
    y = gen_responses(X, beta_star(grid), cfg.sigma2, eps_seed)
    k = cfg.n_train
    return Dataset(X[:k], y[:k], grid), Dataset(X[k:], y[k:], grid)
