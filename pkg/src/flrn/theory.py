"""Parameter rules from the convergence theory and an effective-dimension diagnostic.

``b`` is the polynomial eigenvalue decay exponent and ``s`` the source-condition
smoothness. The rules drop the unspecified constants hidden in the asymptotic
notation, i.e. every implied constant is taken to be 1. The extra lower bound
on lambda involving an unknown constant c_1 is not enforced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from flrn.errors import InvalidArgument


@dataclass(frozen=True)
class TheoryParams:
    b: float
    s: float = 0.0

    def __post_init__(self):
        if not self.b > 1:
            raise InvalidArgument(f"decay exponent b must exceed 1, got {self.b}")
        if not 0 <= self.s <= 0.5:
            raise InvalidArgument(f"smoothness s must lie in [0, 1/2], got {self.s}")

    @property
    def denominator(self) -> float:
        return 1 + self.b + 2 * self.s * self.b


def _check_n(n):
    if int(n) != n or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n!r}")


def lambda_rule(n: int, p: TheoryParams) -> float:
    """lambda = n^(-b / (1 + b + 2 s b))."""
    _check_n(n)
    return float(n) ** (-p.b / p.denominator)


def min_subsample(lam: float, p: TheoryParams, n: int) -> int:
    """Smallest m with m^(-1/b) <= lam, capped at n."""
    _check_n(n)
    if not 0 < lam <= 1:
        raise InvalidArgument(f"lambda must lie in (0, 1], got {lam!r}")
    raw = lam ** (-p.b)
    m = math.ceil(raw)
    # guard against ceil of a value a few ulps above an integer
    if m > 1 and (m - 1) ** (-1.0 / p.b) <= lam:
        m -= 1
    return int(min(n, max(1, m)))


def empirical_effective_dimension(gram, lam: float) -> float:
    """sum_i mu_i / (mu_i + lam) over the eigenvalues mu_i of K / n.

    A spectral proxy computed from data; the eigenvalues are clipped at zero.
    """
    K = np.asarray(gram, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidArgument("effective dimension needs a square Gram matrix")
    if not lam > 0:
        raise InvalidArgument("lambda must be positive")
    scale = max(1.0, float(np.max(np.abs(K), initial=0.0)))
    if np.max(np.abs(K - K.T), initial=0.0) > 1e-10 * scale:
        raise InvalidArgument("Gram matrix is not symmetric")
    n = K.shape[0]
    mu = np.clip(np.linalg.eigvalsh((K + K.T) / (2 * n)), 0.0, None)
    return float(np.sum(mu / (mu + lam)))


def predicted_rates(n: int, p: TheoryParams) -> tuple[float, float]:
    """(prediction-error rate, estimation-error rate) at the rule-chosen lambda."""
    _check_n(n)
    pred = float(n) ** (-p.b * (1 + 2 * p.s) / (2 * p.denominator))
    est = float(n) ** (-p.b * p.s / p.denominator)
    return pred, est
