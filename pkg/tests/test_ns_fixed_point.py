import numpy as np
import pytest

from kernel_ns.function_spaces import GridFunction
from kernel_ns.ns_fixed_point import (
    DataTooRough,
    FluidScenario,
    InitialData,
    InvalidData,
    InvalidIterate,
    PressureModel,
    UndefinedRatio,
    assemble_v,
    build_plateau_coefficient,
    contraction_probe,
    prepare,
    run_fixed_point,
)

L = 8.0


def grid(values):
    return GridFunction(-L, L, values)


def small_scenario(n=257, nt=12, **kw):
    x = np.linspace(-L, L, n)
    data = InitialData(grid(1 + 0.1 * (x >= 0)), (0.0,), 1.0, u0=grid(0.1 * np.exp(-x ** 2)))
    return FluidScenario(data, PressureModel.power_law(1.4), eps=0.5, T=0.05, n_t=nt, **kw)


def test_initial_data_validation():
    x = np.linspace(-L, L, 65)
    with pytest.raises(InvalidData, match="lambda0"):
        InitialData(grid(np.ones(65)), lam0=0.0, u0=grid(np.zeros(65)))
    with pytest.raises(InvalidData):
        InitialData(grid(0.5 + 0 * x), lam0=1.0, u0=grid(np.zeros(65)))
    with pytest.raises(InvalidData):
        InitialData(grid(np.ones(65)))
    data = InitialData(grid(1 + 0.1 * (x >= 0)), (0.0,), u0=grid(np.zeros(65)))
    assert data.lam0 == 1.0
    assert data.jump_limits() == [(0.0, 1.0, 1.1)]


def test_pressure_models():
    ideal = PressureModel("polytropic_ideal", K=2.0)
    assert ideal(2.0, 3.0) == pytest.approx(3.0)
    with pytest.raises(InvalidData):
        ideal(1.0)
    with pytest.raises(InvalidData):
        PressureModel("polytropic_ideal", K=0.0)
    power = PressureModel.power_law(1.4)
    assert float(power(2.0)) == pytest.approx(2.0 ** -1.4, rel=1e-6)
    assert power.certify(0.5, 2.0) == pytest.approx(1.4 * 2.4 * 0.5 ** -3.4, rel=1e-3)
    with pytest.raises(InvalidData):
        power.certify(0.1, 2.0)
    with pytest.raises(InvalidData):
        PressureModel("vdw")


def test_plateau_coefficient():
    x = np.linspace(-L, L, 513)
    v0 = grid(1 + 0.1 * (x >= 0) + 0.01 * np.sin(x))
    b = build_plateau_coefficient(v0, (0.0,), 0.5)
    left = (x < 0) & (x >= -0.5)
    right = (x >= 0) & (x <= 0.5)
    assert np.ptp(b.values[left]) == 0.0 and np.ptp(b.values[right]) == 0.0
    far = np.abs(x) > 1
    assert np.max(np.abs(b.values[far] - v0.values[far])) < 1e-3
    with pytest.raises(DataTooRough):
        build_plateau_coefficient(v0, (0.0,), 0.5, eps0=1e-4)


def test_assemble_v_integrates_linear_rates_exactly():
    scenario = small_scenario()
    times = np.linspace(0, 0.02, 6)
    wx = np.ones((5, 257)) * times[1:, None]
    v = assemble_v(scenario, times, wx)
    # w_x(0) is taken as w_x(t_1): the first interval integrates the constant t_1
    expected = scenario.data.v0.values + (0.5 * times ** 2 + 0.5 * times[1] ** 2 * (times > 0))[:, None]
    np.testing.assert_allclose(v, expected, atol=1e-15)


def test_constant_state_is_a_fixed_point():
    data = InitialData(grid(np.ones(257)), (), 1.0, u0=grid(np.zeros(257)))
    res = run_fixed_point(FluidScenario(data, PressureModel.power_law(1.4), T=0.05, n_t=8))
    assert np.max(np.abs(res.u.slices)) <= 1e-12
    assert np.max(np.abs(res.v - 1.0)) <= 1e-12


def test_small_psystem_run_converges():
    res = run_fixed_point(small_scenario())
    assert res.iterations <= 25
    assert all(r < 1 for r in res.ratios)
    assert res.min_v >= 0.5 and res.v_yt <= 2 * res.v0_sup
    assert set(res.diagnostics()) >= {"iterations", "ratios", "min_v", "v_YT", "T"}


def test_probe_errors():
    scenario = small_scenario()
    setup = prepare(scenario)
    w = np.zeros((len(setup.times) - 1, 257))
    with pytest.raises(UndefinedRatio):
        contraction_probe(scenario, w, w, setup=setup)
    x = np.linspace(-L, L, 257)
    data = InitialData(grid(np.ones(257)), (), 1.0, u0=grid(np.zeros(257)), theta0=grid(np.ones(257)))
    full = FluidScenario(data, PressureModel(), system="full", T=0.02, n_t=8)
    with pytest.raises(InvalidIterate):
        contraction_probe(full, w, w + 1.0)
    with pytest.raises(InvalidData):
        FluidScenario(InitialData(grid(np.ones(257)), u0=grid(0 * x)), PressureModel(), system="full")
