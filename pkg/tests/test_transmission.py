import math

import numpy as np
import pytest

from kernel_ns.function_spaces import GridFunction
from kernel_ns.reference_oracle import transmission_green
from kernel_ns.singular_quadrature import convolve_grid
from kernel_ns.transmission import (
    TransmissionDomainError,
    TwoPhaseProblem,
    boundary_coefficients,
    half_line_dirichlet,
    interface_index,
    solve_constant_coeff,
    solve_two_phase,
)


def profile(x):
    return np.exp(-4 * (x - 0.3) ** 2) * (1 + 0.5 * np.sin(3 * x))


def gauss_cells(g, order=8):
    """Quadrature nodes, weights and piecewise-linear data values on every cell of g."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    frac = 0.5 * (nodes + 1.0)
    x = g.x
    y = (x[:-1, None] + g.h * frac).ravel()
    data = (g.values[:-1, None] * (1 - frac) + g.values[1:, None] * frac).ravel()
    return y, np.tile(0.5 * g.h * weights, g.n - 1), data


def test_boundary_coefficients():
    cp, cm = boundary_coefficients(4.0, 1.0)
    assert cp == pytest.approx(-4 / 3) and cm == pytest.approx(-2 / 3)
    assert sum(boundary_coefficients(2.0, 2.0)) == pytest.approx(-2.0)


def test_domain_checks():
    g = GridFunction.sample(profile, -4, 4, 81)
    with pytest.raises(TransmissionDomainError):
        TwoPhaseProblem(0.0, 1.0, g)
    with pytest.raises(TransmissionDomainError):
        interface_index(GridFunction.sample(profile, -4, 4, 80))
    with pytest.raises(TransmissionDomainError):
        half_line_dirichlet(1.0, g, [0.1])


@pytest.mark.parametrize("c_plus,c_minus", [(2.0, 1.0), (1.0, 4.0)])
def test_two_phase_against_closed_form_green(c_plus, c_minus):
    g = GridFunction.sample(profile, -8, 8, 513)
    times = np.array([0.02, 0.2, 1.0])
    res = solve_two_phase(TwoPhaseProblem(c_plus, c_minus, g), times)
    y, w, data = gauss_cells(g)
    x = g.x
    for k, t in enumerate(times):
        ref = transmission_green(c_plus, c_minus, t, x[:, None], y[None, :]) @ (w * data)
        assert np.max(np.abs(res.field.slices[k] - ref)) <= 1e-6 * np.max(np.abs(ref))
    assert np.max(np.abs(res.jump)) <= 1e-12


def test_two_phase_conserves_mass():
    g = GridFunction.sample(profile, -10, 10, 801)
    res = solve_two_phase(TwoPhaseProblem(3.0, 1.0, g), [0.1, 0.5])
    mass0 = np.trapezoid(g.values, g.x)
    for row in res.field.slices:
        assert np.trapezoid(row, g.x) == pytest.approx(mass0, rel=1e-4)


def test_equal_coefficients_reduce_to_whole_line():
    g = GridFunction.sample(profile, -8, 8, 257)
    res = solve_two_phase(TwoPhaseProblem(1.5, 1.5, g), [0.05, 0.5])
    for k, t in enumerate([0.05, 0.5]):
        ref = convolve_grid("K", 1.5 * t, g.h, g.values)
        assert np.max(np.abs(res.field.slices[k] - ref)) <= 1e-10


def test_constant_coefficient_fourier_mode():
    x = np.linspace(-4 * math.pi, 4 * math.pi, 513)
    g = GridFunction(x[0], x[-1], np.zeros_like(x))
    # sin vanishes at both ends, so the constant extension beyond the grid is zero
    tilde = g.with_values(np.sin(x))
    fld = solve_constant_coeff(None, tilde, T=0.5, n_t=8, c=2.0)
    inner = np.abs(x) < 6
    expected = np.exp(-2.0 * fld.times[-1]) * np.sin(x[inner])
    assert np.max(np.abs(fld.slices[-1][inner] - expected)) <= 2e-3
