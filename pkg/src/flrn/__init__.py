"""Functional linear regression in an RKHS with full and Nystrom-subsampled solvers."""

from flrn.errors import InvalidArgument, NumericError
from flrn.funcspace import Curve, Dataset, Grid, l2_inner, make_uniform_grid
from flrn.kernels import CovarianceSpec, KernelSpec
from flrn.estimator import FittedModel, RidgeConfig, fit_full, fit_nystrom, predict

__version__ = "0.1.0"

__all__ = [
    "Curve",
    "CovarianceSpec",
    "Dataset",
    "FittedModel",
    "Grid",
    "InvalidArgument",
    "KernelSpec",
    "NumericError",
    "RidgeConfig",
    "fit_full",
    "fit_nystrom",
    "l2_inner",
    "make_uniform_grid",
    "predict",
]
