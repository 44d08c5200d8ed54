import math

import numpy as np
import pytest

from kernel_ns.reference_oracle import (
    FluidParams,
    _face_coefficient,
    brute_lp,
    brute_sobolev,
    fd_solve_full,
    fd_solve_linear,
    fd_solve_psystem,
    richardson,
    transmission_green,
)


def test_fd_linear_fourier_mode_first_order():
    x = np.linspace(0, 2 * math.pi, 257)
    phi = lambda y: np.ones_like(y)  # noqa: E731
    errs = []
    for nt in (20, 40, 80):
        _, slices = fd_solve_linear(x, phi, np.cos(x), 0.5, nt)
        errs.append(np.max(np.abs(slices[-1] - math.exp(-0.5) * np.cos(x))))
    # backward Euler: first order until the O(h^2) floor
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.15)
    _, a = fd_solve_linear(x, phi, np.cos(x), 0.5, 40)
    _, b = fd_solve_linear(x, phi, np.cos(x), 0.5, 80)
    assert np.max(np.abs(richardson(a, b)[-1] - math.exp(-0.5) * np.cos(x))) < 0.05 * errs[2]


def test_harmonic_face_coefficient_for_steady_flux():
    x = np.linspace(-1, 1, 9)
    coef = _face_coefficient(lambda y: np.where(y >= 0, 4.0, 1.0), x)
    assert np.all(np.isin(coef, [1.0, 4.0]))
    x = np.linspace(-1, 1, 10)  # interface inside a cell
    coef = _face_coefficient(lambda y: np.where(y >= 0, 4.0, 1.0), x)
    assert coef[4] == pytest.approx(1.6)


def test_fd_linear_conserves_mass_with_step():
    x = np.linspace(-8, 8, 401)
    f0 = np.exp(-x ** 2)
    _, slices = fd_solve_linear(x, lambda y: np.where(y >= 0, 2.0, 1.0), f0, 0.5, 50)
    h = x[1] - x[0]
    w = np.full(len(x), h)
    w[0] = w[-1] = h / 2
    for row in slices:
        assert np.sum(w * row) == pytest.approx(np.sum(w * f0), rel=1e-13)


@pytest.mark.parametrize("y", [-0.7, 0.4])
def test_transmission_green_mass_and_continuity(y):
    x = np.linspace(-30, 30, 60001)
    G = transmission_green(2.0, 1.0, 0.3, x, y)
    # the kink at the interface limits the trapezoid rule to O(h^2)
    assert np.trapezoid(G, x) == pytest.approx(1.0, rel=1e-6)
    assert transmission_green(2.0, 1.0, 0.3, -1e-12, y) == pytest.approx(
        transmission_green(2.0, 1.0, 0.3, 0.0, y), rel=1e-9)


def test_psystem_constant_state_and_momentum():
    x = np.linspace(-8, 8, 257)
    pressure = lambda v: v ** -1.4  # noqa: E731
    _, v, u = fd_solve_psystem(x, lambda y: np.ones_like(y), np.zeros(257), pressure, 0.05, 10)
    assert np.max(np.abs(u)) == 0.0 and np.max(np.abs(v - 1.0)) <= 1e-14
    u0 = 0.1 * np.exp(-x ** 2)
    # v0 equal at both ends: no net pressure force, so the trapezoid momentum is conserved
    _, v, u = fd_solve_psystem(x, lambda y: 1 + 0.1 * ((y >= -0.5) & (y < 0.5)), u0, pressure, 0.05, 20)
    h = x[1] - x[0]
    w = np.full(len(x), h)
    w[0] = w[-1] = h / 2
    assert np.sum(w * u[-1]) == pytest.approx(np.sum(w * u0), abs=1e-13)
    # a step in v0 changes the momentum by the end pressure difference, exactly
    _, v, u = fd_solve_psystem(x, lambda y: 1 + 0.1 * (y >= 0), u0, pressure, 0.05, 20)
    assert np.sum(w * u[-1]) - np.sum(w * u0) == pytest.approx(-0.05 * (1.1 ** -1.4 - 1.0), rel=1e-10)


def test_full_system_energy_structure():
    x = np.linspace(-8, 8, 257)
    _, v, u, th = fd_solve_full(x, lambda y: np.ones_like(y), np.zeros(257), np.ones(257), 0.05, 10,
                                FluidParams())
    assert np.max(np.abs(u)) <= 1e-14 and np.max(np.abs(th - 1.0)) <= 1e-14


def test_brute_norm_basics():
    assert brute_lp(np.ones(11), 0.1, 2.0) == pytest.approx(1.0)
    assert brute_lp(np.array([1.0, -3.0]), 1.0, math.inf) == 3.0
    assert brute_sobolev(lambda y: np.ones_like(y), -1, 1, 41, 0.5, 2.0) == 0.0
