import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flrn.errors import InvalidArgument
from flrn.funcspace import make_uniform_grid
from flrn.kernels import (
    CovarianceSpec,
    KernelSpec,
    bernoulli_b2,
    bernoulli_b4,
    brownian_euler_form,
    covariance_eval,
    euler_e1,
    grid_kernel,
    kernel_eval,
    kernel_series,
)

unit = st.floats(0.0, 1.0)


@pytest.mark.parametrize("x, want", [(0.0, 1 / 6), (0.5, -1 / 12), (1.0, 1 / 6)])
def test_b2(x, want):
    assert bernoulli_b2(x) == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("x, want", [(0.0, -1 / 30), (1.0, -1 / 30), (0.5, 7 / 240)])
def test_b4(x, want):
    assert bernoulli_b4(x) == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("x, want", [(0.5, 0.0), (0.0, -0.5), (0.7, 0.2)])
def test_e1(x, want):
    assert euler_e1(x) == pytest.approx(want, abs=1e-15)


def test_sobolev_kernel_at_origin_is_one_over_45():
    # sum 2/(k pi)^4 = 2 zeta(4) / pi^4 = 1/45
    assert kernel_eval(KernelSpec(), 0.0, 0.0) == pytest.approx(1 / 45, abs=1e-15)


def test_closed_form_matches_series_at_sample_points():
    k = KernelSpec()
    assert abs(kernel_eval(k, 0.3, 0.7) - kernel_series(0.3, 0.7, 10**4)) <= 1e-8
    assert abs(kernel_eval(k, 0.0, 1.0) - kernel_series(0.0, 1.0, 10**4)) <= 1e-8


def test_series_examples():
    # tail of sum 2/(k pi)^4 beyond K is below 2/(3 pi^4 K^3)
    assert abs(kernel_series(0, 0, 10**4) - 1 / 45) <= 1e-11
    assert kernel_series(0, 0, 1) == pytest.approx(2 / math.pi**4, rel=1e-15)
    with pytest.raises(InvalidArgument):
        kernel_series(0, 0, 0)


def test_closed_form_vs_series_sup_on_33_grid():
    t = np.linspace(0, 1, 33)
    closed = kernel_eval(KernelSpec(), t[:, None], t[None, :])
    series = np.array([[kernel_series(a, b, 10**4) for b in t] for a in t])
    assert np.max(np.abs(closed - series)) <= 1e-8


def test_gaussian_kernel():
    k = KernelSpec("gaussian", 1.0)
    assert kernel_eval(k, 0.4, 0.4) == 1.0
    assert kernel_eval(k, 0.0, 1.0) == pytest.approx(math.exp(-1))
    with pytest.raises(InvalidArgument):
        KernelSpec("gaussian", 0.0)
    with pytest.raises(InvalidArgument):
        KernelSpec("gaussian")


def test_out_of_domain():
    with pytest.raises(InvalidArgument):
        kernel_eval(KernelSpec(), -0.1, 0.5)
    with pytest.raises(InvalidArgument):
        covariance_eval(CovarianceSpec(), 0.5, 1.5)
    with pytest.raises(InvalidArgument):
        kernel_eval(KernelSpec(), float("nan"), 0.5)


@pytest.mark.parametrize("text", ["sobolev-bernoulli", "gaussian:γ=2.5", "gaussian:gamma=0.125"])
def test_kernel_spec_roundtrip(text):
    k = KernelSpec.parse(text)
    assert KernelSpec.parse(str(k)) == k


@pytest.mark.parametrize("text", ["rbf", "gaussian:γ=-1", "gaussian:", "gaussian:γ=abc"])
def test_kernel_spec_rejects(text):
    with pytest.raises(InvalidArgument):
        KernelSpec.parse(text)


def test_brownian_covariance():
    c = CovarianceSpec()
    assert covariance_eval(c, 0.3, 0.7) == 0.3
    for t in [0.0, 0.2, 1.0]:
        assert covariance_eval(c, t, t) == t
    assert str(CovarianceSpec.parse("brownian")) == "brownian"


def test_brownian_euler_identity_random_pairs(rng):
    s, t = rng.uniform(0, 1, (2, 100))
    assert np.max(np.abs(brownian_euler_form(s, t) - np.minimum(s, t))) <= 1e-14


def test_custom_covariance_validation():
    g = make_uniform_grid(5)
    C = np.minimum.outer(g.points, g.points)
    spec = CovarianceSpec("custom-grid", C, g)
    assert covariance_eval(spec, 0.25, 0.75) == 0.25
    with pytest.raises(InvalidArgument):
        CovarianceSpec("custom-grid", C + np.triu(np.ones((5, 5)), 1), g)
    with pytest.raises(InvalidArgument):
        CovarianceSpec("custom-grid", -np.eye(5), g)


@settings(max_examples=200, deadline=None)
@given(unit, unit)
def test_kernel_symmetric_exactly(s, t):
    for k in (KernelSpec(), KernelSpec("gaussian", 3.0)):
        assert kernel_eval(k, s, t) == kernel_eval(k, t, s)


@settings(max_examples=100, deadline=None)
@given(unit, unit)
def test_brownian_forms_agree(s, t):
    assert abs(brownian_euler_form(s, t) - covariance_eval(CovarianceSpec(), s, t)) <= 1e-15


@settings(max_examples=30, deadline=None)
@given(st.lists(unit, min_size=1, max_size=25), st.sampled_from(["sobolev", "gauss"]))
def test_kernel_matrix_psd(points, which):
    k = KernelSpec() if which == "sobolev" else KernelSpec("gaussian", 5.0)
    p = np.array(points)
    K = kernel_eval(k, p[:, None], p[None, :])
    eig = np.linalg.eigvalsh(K)
    assert eig[0] >= -1e-10 * max(eig[-1], 1e-300)


def test_grid_kernel_cached_and_readonly():
    g = make_uniform_grid(17)
    a = grid_kernel(KernelSpec(), g)
    b = grid_kernel(KernelSpec(), make_uniform_grid(17))
    assert a is b
    assert not a.flags.writeable
    assert np.array_equal(a, a.T)
