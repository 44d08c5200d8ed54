import json

import numpy as np
import pytest
from pydantic import ValidationError

from kernel_ns import config as cfgmod
from kernel_ns.config import FieldSpec, ScenarioConfig, fractional_noise
from kernel_ns.output import read_field_csv, read_table, write_csv, write_field_csv, write_json


def test_presets():
    x = np.linspace(-2, 2, 9)
    steps = FieldSpec(preset="steps", value=1.0, pieces=[(0.0, 1.0, 0.5)]).sample(x)
    np.testing.assert_allclose(steps, np.where((x >= 0) & (x < 1), 1.5, 1.0))
    gs = FieldSpec(preset="gaussian_sine", amplitude=2.0, wavenumber=3.0).sample(x)
    np.testing.assert_allclose(gs, 2 * np.exp(-x ** 2) * np.sin(3 * x))
    with pytest.raises(ValidationError):
        FieldSpec(preset="csv")
    with pytest.raises(ValidationError):
        FieldSpec(preset="gaussian", width=0.0)


def test_fractional_noise_deterministic_and_tapered():
    x = np.linspace(-8, 8, 513)
    a = fractional_noise(x, 0.2, seed=3)
    np.testing.assert_array_equal(a, fractional_noise(x, 0.2, seed=3))
    assert not np.allclose(a, fractional_noise(x, 0.2, seed=4))
    assert np.all(a[np.abs(x) >= 5] == 0.0)


def test_lambda0_invariant_messages():
    with pytest.raises(ValidationError, match="lambda0 invariant"):
        ScenarioConfig.model_validate({"data": {"v0": {"value": 0.0}}})
    with pytest.raises(ValidationError, match="lambda0 invariant"):
        ScenarioConfig.model_validate({"data": {"v0": {"value": 1.0}, "lam0": 2.0}})
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate({"unknown_key": 1})
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate({"system": "full", "data": {"v0": {"value": 1.0}}})
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate({"data": {"v0": {"value": 1.0}, "jumps": [20.0]}})


def test_default_velocity_and_hash():
    cfg = ScenarioConfig.model_validate({"data": {"v0": {"value": 1.0}}})
    assert cfg.data.u0 is not None
    again = ScenarioConfig.model_validate(json.loads(cfg.canonical_json()))
    assert again.config_hash() == cfg.config_hash()
    other = ScenarioConfig.model_validate({"data": {"v0": {"value": 1.0}}, "seed": 1})
    assert other.config_hash() != cfg.config_hash()


def test_refined_levels():
    cfg = ScenarioConfig.model_validate({"grid": {"nx": 65}, "time": {"nt": 8}})
    sub = cfgmod.refined(cfg, 2)
    assert (sub.grid.nx, sub.time.nt) == (257, 32)


def test_linear_builder_tiles_forcing():
    cfg = ScenarioConfig.model_validate({
        "system": "linear", "grid": {"nx": 65}, "time": {"T": 0.1, "nt": 4},
        "linear": {"f0": {"preset": "gaussian"}, "R": {"value": 2.0}},
    })
    prob = cfgmod.linear_problem(cfg)
    assert prob.R.slices.shape == (len(prob.times), 65)
    assert np.all(prob.R.slices == 2.0)


def test_csv_round_trip_and_csv_preset(tmp_path):
    times = np.array([0.1, 0.2])
    x = np.linspace(0, 1, 5)
    values = np.arange(10.0).reshape(2, 5) / 3.0
    path = tmp_path / "field.csv"
    write_field_csv(path, times, x, {"f": values}, "abc")
    assert path.read_text().startswith("# config_hash=abc\n")
    t2, x2, v2 = read_field_csv(path)
    np.testing.assert_array_equal(t2, times)
    np.testing.assert_array_equal(x2, x)
    np.testing.assert_array_equal(v2, values)
    profile = tmp_path / "profile.csv"
    write_csv(profile, ["x", "value"], [x, 2 * x], "abc")
    assert read_table(profile)["value"][-1] == 2.0
    spec = FieldSpec(preset="csv", path="profile.csv")
    np.testing.assert_allclose(spec.sample(np.array([0.5]), tmp_path), [1.0])
    write_json(tmp_path / "d.json", {"a": np.float64(1.5), "b": np.arange(2)}, "abc")
    assert json.loads((tmp_path / "d.json").read_text()) == {"a": 1.5, "b": [0, 1], "config_hash": "abc"}
