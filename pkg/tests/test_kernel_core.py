import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from kernel_ns.kernel_core import (
    KernelDomainError,
    KernelQuery,
    compensated_primitive,
    estimate_ratio_sweep,
    eval_kernel,
    gauss_primitive,
    heat_kernel,
    identity_suite,
    kernel_moment,
    ratio_drift,
    time_integrated_gradient,
    time_integrated_kernel,
    time_moment,
)

times = st.floats(1e-3, 10.0)
positions = st.floats(-5.0, 5.0)


@settings(max_examples=60, deadline=None)
@given(t=times, x=positions, m=st.integers(0, 2))
def test_space_derivatives_match_differences(t, x, m):
    step = 1e-3 * math.sqrt(t)
    if m == 0:
        expected = heat_kernel(t, x)
    elif m == 1:
        expected = (heat_kernel(t, x + step) - heat_kernel(t, x - step)) / (2 * step)
    else:
        expected = (heat_kernel(t, x + step) - 2 * heat_kernel(t, x) + heat_kernel(t, x - step)) / step ** 2
    scale = heat_kernel(t, 0.0) / t ** (m / 2)
    assert abs(eval_kernel(t, x, m) - expected) <= 1e-5 * scale


@settings(max_examples=40, deadline=None)
@given(t=times, x=positions, c=st.floats(0.2, 5.0))
def test_time_derivative_with_coefficient(t, x, c):
    dt = 1e-5 * t
    fd = (heat_kernel(c * (t + dt), x) - heat_kernel(c * (t - dt), x)) / (2 * dt)
    assert eval_kernel(t, x, 0, 1, c) == pytest.approx(fd, rel=1e-5, abs=1e-9 * heat_kernel(c * t, 0) / t)


@settings(max_examples=40, deadline=None)
@given(tau=st.floats(1e-3, 4.0), z=st.floats(-6.0, 6.0), n=st.integers(1, 4))
def test_primitives_differentiate_down(tau, z, n):
    step = 1e-4 * math.sqrt(tau)
    d = (gauss_primitive(n, tau, z + step) - gauss_primitive(n, tau, z - step)) / (2 * step)
    assert d == pytest.approx(gauss_primitive(n - 1, tau, z), rel=1e-5, abs=1e-8)
    dc = (compensated_primitive(n, tau, z + step) - compensated_primitive(n, tau, z - step)) / (2 * step)
    if n > 1 and abs(z) > 2 * step:
        assert dc == pytest.approx(compensated_primitive(n - 1, tau, z), rel=1e-5, abs=1e-8)


@pytest.mark.parametrize("z", [-1.3, -0.2, 0.05, 0.7, 2.5])
def test_time_integrated_kernels_against_quadrature(z):
    c, dt = 1.7, 0.3
    ref = quad(lambda s: heat_kernel(c * s, z), 0, dt, epsabs=1e-13, limit=200)[0]
    assert time_integrated_kernel(c, dt, z) == pytest.approx(ref, rel=1e-10)
    ref_grad = quad(lambda s: eval_kernel(s, z, 1, 0, c), 0, dt, epsabs=1e-13, limit=200)[0]
    assert time_integrated_gradient(c, dt, z) == pytest.approx(ref_grad, rel=1e-9)


def test_domain_errors():
    with pytest.raises(KernelDomainError):
        KernelQuery(t=0.0, x=1.0)
    with pytest.raises(KernelDomainError):
        KernelQuery(t=1.0, x=1.0, m=3)
    with pytest.raises(KernelDomainError):
        eval_kernel(1.0, 0.0, c=-1.0)
    with pytest.raises(KernelDomainError):
        estimate_ratio_sweep(0, 0, 1.0, 0.0, [0.0, 1.0])
    assert KernelQuery(t=1.0, x=0.0).evaluate() == pytest.approx(1 / math.sqrt(4 * math.pi))


@pytest.mark.parametrize("t", [1e-3, 0.1, 2.0])
def test_moments_closed_forms(t):
    assert kernel_moment(0, 0, 1.0, 0.0, t).value == pytest.approx(1.0, rel=1e-10)
    assert kernel_moment(0, 0, 2.0, 0.0, t).value == pytest.approx((8 * math.pi * t) ** -0.25, rel=1e-10)
    # first absolute moment: int |x| K = 2 sqrt(t / pi)
    assert kernel_moment(0, 0, 1.0, 1.0, t).value == pytest.approx(2 * math.sqrt(t / math.pi), rel=1e-9)
    assert kernel_moment(0, 0, math.inf, 0.0, t).value == pytest.approx(heat_kernel(t, 0.0), rel=1e-12)


def test_time_moment_divergence_flags():
    assert time_moment(0, 0, 1.0, 0.5).diverged  # K decays like t^(-1/2)
    assert not time_moment(1, 0, 1.0, 0.5).diverged
    # int_0^inf |K_x(t, x)| dt = 1/2 for every x != 0
    assert time_moment(1, 0, 1.0, 0.5).value == pytest.approx(0.5, rel=1e-9)


def test_identity_suite_at_roundoff():
    ident = identity_suite()
    assert ident["normalization"] <= 1e-10
    assert ident["self_similarity"] <= 1e-12
    assert ident["pde_residual"] <= 1e-12


def test_ratio_tables_bounded_and_grid_stable():
    t_grid = np.geomspace(1e-3, 1.0, 4)
    coarse = estimate_ratio_sweep(1, 0, 2.0, 0.5, t_grid, samples=1001)
    fine = estimate_ratio_sweep(1, 0, 2.0, 0.5, t_grid, samples=2001)
    assert ratio_drift(coarse, fine) < 1e-2
    assert all(math.isfinite(r["ratio"]) for r in fine)
    # self-similarity makes the pointwise ratio independent of t
    pointwise = [r["ratio"] for r in fine if r["inequality_id"] == "pointwise"]
    assert np.ptp(pointwise) < 1e-6 * max(pointwise)
