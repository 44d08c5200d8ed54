import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from kernel_ns.kernel_core import eval_kernel, heat_kernel
from kernel_ns.reference_oracle import neumann_layer_reference
from kernel_ns.singular_quadrature import (
    ConvolutionPlan,
    bubble_weights,
    convolve_grid,
    duhamel,
    flux_history,
    graded_mesh,
    hat_weights,
    two_sided_rule,
    two_sided_rule_split,
)

KERNELS = {
    "K": lambda tau, z: heat_kernel(tau, z),
    "dK": lambda tau, z: eval_kernel(tau, z, 1),
}


def hat(y, h):
    return np.maximum(0.0, 1.0 - np.abs(y) / h)


@settings(max_examples=30, deadline=None)
@given(name=st.sampled_from(["K", "dK"]), tau=st.floats(1e-3, 1.0), k=st.integers(-6, 6), h=st.floats(0.01, 0.2))
def test_hat_weights_against_quadrature(name, tau, k, h):
    z = k * h
    kern = KERNELS[name]
    ref = quad(lambda y: kern(tau, z - y) * hat(y, h), -h, h, points=[0.0, z] if abs(z) < h else [0.0],
               epsabs=1e-14, epsrel=1e-11, limit=200)[0]
    scale = heat_kernel(tau, 0.0) * h / math.sqrt(tau) ** (name == "dK")
    assert abs(hat_weights(name, tau, z, h) - ref) <= 1e-9 * scale


@pytest.mark.parametrize("name", ["K", "dK"])
@pytest.mark.parametrize("k", [-3, 0, 2])
def test_bubble_weights_against_quadrature(name, k):
    tau, h = 0.01, 0.05
    z = k * h
    ref = quad(lambda s: KERNELS[name](tau, z - s) * s * (h - s), 0, h, epsabs=1e-15, epsrel=1e-12)[0]
    assert bubble_weights(name, tau, z, h) == pytest.approx(ref, rel=1e-8, abs=1e-14)


def test_convolution_reproduces_linear_data():
    x = np.linspace(-4, 4, 161)
    data = 2.0 + 0.5 * x
    out = convolve_grid("K", 0.05, x[1] - x[0], data)
    inner = np.abs(x) < 2
    np.testing.assert_allclose(out[inner], data[inner], atol=1e-12)
    grad = convolve_grid("dK", 0.05, x[1] - x[0], data)
    # K_x * f = K * f_x = 0.5 away from the ends
    np.testing.assert_allclose(grad[inner], 0.5, atol=1e-12)


def test_convolution_of_gaussian_is_gaussian():
    # piecewise-linear data: second order in h
    a, tau = 0.3, 0.2
    errs = []
    for n in (401, 1601):
        x = np.linspace(-8, 8, n)
        out = convolve_grid("K", tau, x[1] - x[0], heat_kernel(a, x))
        errs.append(np.max(np.abs(out - heat_kernel(a + tau, x))))
    assert errs[1] < 1e-5
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.1)


def test_graded_mesh():
    mesh = graded_mesh(2.0, 8, q=2.0)
    assert mesh[0] == 0.0 and mesh[-1] == 2.0
    assert np.all(np.diff(mesh) > 0) and np.all(np.diff(mesh, 2) > 0)
    with pytest.raises(ValueError):
        graded_mesh(1.0, 4, q=0.5)


def test_duhamel_of_constant_source():
    # R = 1 everywhere: f(t) = t
    x = np.linspace(-4, 4, 81)
    plan = ConvolutionPlan.graded(0.5, 10, x[1] - x[0], m=0, c=2.0)
    out = duhamel(plan, np.ones((len(plan.times), len(x))))
    np.testing.assert_allclose(out, np.repeat(plan.times[:, None], len(x), axis=1), atol=1e-12)


def test_duhamel_divergence_form_against_brute():
    # d_x K * F with F(t, x) = exp(-x^2) constant in time: compare with quad in time of the exact convolution
    x = np.linspace(-6, 6, 481)
    h = x[1] - x[0]
    plan = ConvolutionPlan(np.linspace(0, 0.2, 41), h, m=1)
    out = duhamel(plan, np.tile(np.exp(-x ** 2), (41, 1)))

    def exact(t, xx):
        # d_x of (K(s) * exp(-x^2)) = d_x exp(-x^2/(1+4s))/sqrt(1+4s)
        a = 1 + 4 * t
        return -2 * xx / a * np.exp(-xx ** 2 / a) / math.sqrt(a)

    for xx in (-1.0, 0.3, 2.0):
        ref = quad(lambda s: exact(s, xx), 0, 0.2, epsabs=1e-13)[0]
        assert out[-1][np.argmin(np.abs(x - xx))] == pytest.approx(ref, abs=2e-4)


def test_two_sided_rule_integrates_endpoint_singularities():
    t = 0.7
    tau, rest, w = two_sided_rule_split(t)
    # int_0^t tau^-1/2 (t - tau)^-1/2 = pi
    assert np.sum(w / np.sqrt(tau * rest)) == pytest.approx(math.pi, rel=1e-8)
    assert np.all(rest > 0)
    np.testing.assert_allclose(tau + rest, t, rtol=1e-14)
    _, w_plain = two_sided_rule(t)
    assert np.sum(w_plain) == pytest.approx(t, rel=1e-12)


def test_flux_history_neumann_limit_and_oddness():
    c = 1.5
    one = lambda s: np.ones_like(np.asarray(s, dtype=float))  # noqa: E731
    assert flux_history(c, one, 0.0, 1.0) == pytest.approx(1 / (2 * c))
    xs = [4e-3, 2e-3, 1e-3]
    errs = [abs(flux_history(c, one, x, 1.0) - 1 / (2 * c)) for x in xs]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.02)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.02)
    assert flux_history(c, one, -0.3, 1.0) == pytest.approx(-flux_history(c, one, 0.3, 1.0))
    with pytest.raises(ValueError):
        flux_history(0.0, one, 0.1, 1.0)


@pytest.mark.parametrize("x", [0.05, 0.4, 1.5])
def test_flux_history_against_adaptive_quadrature(x):
    c = 2.0
    density = lambda s: np.sin(3 * s) + 1.0  # noqa: E731
    assert flux_history(c, density, x, 0.8) == pytest.approx(neumann_layer_reference(c, density, x, 0.8),
                                                             rel=1e-8, abs=1e-12)
