"""Scenario configuration: a validated JSON schema and the builders that turn it into solver inputs."""

import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .function_spaces import GridFunction


class FieldSpec(BaseModel):
    """An initial profile: an analytic preset or a CSV import (columns x,value).

    Presets
      constant      value
      steps         value + sum of level on [a, b) for each [a, b, level] in ``pieces``
      gaussian      offset + amplitude exp(-((x - center) / width)^2)
      gaussian_sine gaussian times sin(wavenumber x)
      fbm           fractional-noise sample (random-phase spectral synthesis), tapered to ``support``
      csv           linear interpolation of the file at ``path``
    """

    model_config = ConfigDict(extra="forbid")

    preset: Literal["constant", "steps", "gaussian", "gaussian_sine", "fbm", "csv"] = "constant"
    value: float = 0.0
    pieces: list[tuple[float, float, float]] = []
    amplitude: float = 1.0
    offset: float = 0.0
    center: float = 0.0
    width: float = 1.0
    wavenumber: float = 1.0
    hurst: float = 0.2
    seed: int = 0
    omega_max: float = 100.0
    omega_step: float = 0.25
    support: float = 5.0
    path: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.width <= 0 or self.support <= 0:
            raise ValueError("width and support must be positive")
        if self.preset == "fbm" and not 0.0 < self.hurst < 1.0:
            raise ValueError("fbm hurst exponent must lie in (0, 1)")
        if self.preset == "fbm" and not 0.0 < self.omega_step < self.omega_max:
            raise ValueError("fbm needs 0 < omega_step < omega_max")
        if self.preset == "csv" and not self.path:
            raise ValueError("csv preset needs a path")
        return self

    def sample(self, x, base_dir=None):
        x = np.asarray(x, dtype=float)
        if self.preset == "constant":
            return np.full_like(x, self.value)
        if self.preset == "steps":
            out = np.full_like(x, self.value)
            for a, b, level in self.pieces:
                out += level * ((x >= a) & (x < b))
            return out
        if self.preset in ("gaussian", "gaussian_sine"):
            out = self.amplitude * np.exp(-(((x - self.center) / self.width) ** 2))
            if self.preset == "gaussian_sine":
                out = out * np.sin(self.wavenumber * x)
            return self.offset + out
        if self.preset == "fbm":
            return self.amplitude * fractional_noise(x, self.hurst, self.seed, self.omega_max,
                                                     self.omega_step, self.support)
        path = Path(self.path)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        from .output import read_table

        table = read_table(path)
        return np.interp(x, table["x"], table["value"])


def fractional_noise(x, hurst, seed, omega_max=100.0, omega_step=0.25, support=5.0):
    """Random-phase spectral sample with amplitude omega^-(H + 1/2), times a smooth bump on |x| < support.

    The sample is Hoelder continuous of every order below ``hurst`` at the scales
    the band [omega_step, omega_max] resolves.
    """
    rng = np.random.default_rng(seed)
    omega = omega_step * np.arange(1, int(omega_max / omega_step) + 1)
    amp = omega ** (-(hurst + 0.5)) * math.sqrt(omega_step)
    a = rng.standard_normal(len(omega))
    b = rng.standard_normal(len(omega))
    phase = np.outer(x, omega)
    noise = np.cos(phase) @ (amp * a) + np.sin(phase) @ (amp * b)
    r = np.asarray(x) / support
    taper = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    taper[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return taper * noise


class GridConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    x_min: float = -8.0
    x_max: float = 8.0
    nx: int = Field(513, ge=17)

    @model_validator(mode="after")
    def _check(self):
        if not self.x_min < self.x_max:
            raise ValueError("grid needs x_min < x_max")
        return self

    @property
    def h(self):
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.nx)


class TimeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    T: float = Field(0.05, gt=0)
    nt: int = Field(32, ge=2)
    q: float = Field(2.0, ge=1.0)


class PressureConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    model: Literal["polytropic", "power_law", "table"] = "power_law"
    exponent: float = Field(1.4, gt=0)
    A: float = Field(1.0, gt=0)
    table_v: list[float] = []
    table_p: list[float] = []


class PhysicsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    mu: float = Field(1.0, gt=0)
    kappa: float = Field(1.0, gt=0)
    cv: float = Field(1.0, gt=0)
    K: float = Field(1.0, gt=0)
    pressure: PressureConfig = PressureConfig()


class FluidDataConfig(BaseModel):
    """Initial data of the fluid systems; u and theta come raw or through their antiderivatives."""

    model_config = ConfigDict(extra="forbid")
    v0: FieldSpec = FieldSpec(value=1.0)
    jumps: list[float] = []
    lam0: Optional[float] = None
    u0: Optional[FieldSpec] = None
    ubar0: Optional[FieldSpec] = None
    theta0: Optional[FieldSpec] = None
    thetabar0: Optional[FieldSpec] = None


class LinearConfig(BaseModel):
    """Coefficient and data of the linear problem d_t f = d_x(phi d_x f) + d_x F + R."""

    model_config = ConfigDict(extra="forbid")
    phi: FieldSpec = FieldSpec(value=1.0)
    jumps: list[float] = []
    eps: float = Field(0.25, gt=0)
    f0: Optional[FieldSpec] = None
    fbar0: Optional[FieldSpec] = None
    F: Optional[FieldSpec] = None  # time independent
    R: Optional[FieldSpec] = None


class TwoPhaseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    c_plus: float = Field(2.0, gt=0)
    c_minus: float = Field(1.0, gt=0)
    f0: FieldSpec = FieldSpec(preset="gaussian", center=0.3, width=0.7)
    times: list[float] = [0.01, 0.1, 0.5, 1.0]


class NormConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    alpha: float = Field(0.05, ge=0)
    gamma: float = Field(0.1, gt=0, lt=0.5)

    @model_validator(mode="after")
    def _check(self):
        if self.alpha >= self.gamma:
            raise ValueError("need 0 <= alpha < gamma")
        return self


class FixedPointConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    eps: float = Field(0.25, gt=0)
    eta: Optional[float] = None
    eps0: float = Field(0.5, gt=0)
    tol_fp: float = Field(1e-7, gt=0)
    max_iter: int = Field(50, ge=1)
    max_halvings: int = Field(6, ge=0)


class OracleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    enabled: bool = False
    nx: int = Field(2049, ge=17)
    nt: int = Field(400, ge=2)


class ProbeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    pairs: int = Field(20, ge=1)
    amplitude: float = Field(0.2, gt=0)
    threshold: float = Field(0.55, gt=0)


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dir: str = "out"
    plots: bool = True
    snapshots: bool = False


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    system: Literal["psystem", "full", "linear"] = "psystem"
    physics: PhysicsConfig = PhysicsConfig()
    data: FluidDataConfig = FluidDataConfig()
    linear: LinearConfig = LinearConfig()
    two_phase: TwoPhaseConfig = TwoPhaseConfig()
    grid: GridConfig = GridConfig()
    time: TimeConfig = TimeConfig()
    norms: NormConfig = NormConfig()
    fixed_point: FixedPointConfig = FixedPointConfig()
    oracle: OracleConfig = OracleConfig()
    probe: ProbeConfig = ProbeConfig()
    output: OutputConfig = OutputConfig()
    seed: int = 0

    @model_validator(mode="after")
    def _positivity(self):
        x = self.grid.x
        if self.system in ("psystem", "full"):
            d = self.data
            v0 = d.v0.sample(x) if d.v0.preset != "csv" else None
            lam0 = d.lam0
            if lam0 is not None and not lam0 > 0:
                raise ValueError(f"lambda0 invariant: the positivity floor lambda0 must be > 0 (got {lam0})")
            if v0 is not None:
                vmin = float(np.min(v0))
                floor = lam0 if lam0 is not None else vmin
                if not vmin > 0 or vmin < floor:
                    raise ValueError(f"lambda0 invariant: inf v0 = {vmin:g} must be >= lambda0 > 0")
            if d.u0 is None and d.ubar0 is None:
                d.u0 = FieldSpec(value=0.0)
            if d.u0 is not None and d.ubar0 is not None:
                raise ValueError("give the initial velocity as u0 or as ubar0, not both")
            if self.system == "full" and d.theta0 is None and d.thetabar0 is None:
                raise ValueError("the full system needs theta0 or thetabar0")
            for a in d.jumps:
                if not self.grid.x_min < a < self.grid.x_max:
                    raise ValueError(f"jump {a} lies outside the grid")
        if self.system == "linear":
            lin = self.linear
            if lin.f0 is None and lin.fbar0 is None:
                raise ValueError("the linear problem needs f0 or fbar0")
            if lin.phi.preset != "csv" and not float(np.min(lin.phi.sample(x))) > 0:
                raise ValueError("the coefficient phi must be positive")
        return self

    def canonical_json(self):
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def load_config(path):
    """Parse and validate a scenario JSON file; raises pydantic.ValidationError on schema errors."""
    text = Path(path).read_text()
    return ScenarioConfig.model_validate_json(text)


# Builders

def grid_function(spec, grid, base_dir=None):
    return GridFunction(grid.x_min, grid.x_max, spec.sample(grid.x, base_dir))


def fluid_scenario(cfg, base_dir=None):
    from .ns_fixed_point import FluidScenario, InitialData, PressureModel

    grid = cfg.grid
    d = cfg.data

    def opt(spec):
        return None if spec is None else grid_function(spec, grid, base_dir)

    data = InitialData(grid_function(d.v0, grid, base_dir), tuple(d.jumps), d.lam0,
                       ubar0=opt(d.ubar0), u0=opt(d.u0), thetabar0=opt(d.thetabar0), theta0=opt(d.theta0))
    pc = cfg.physics.pressure
    if cfg.system == "full" or pc.model == "polytropic":
        pressure = PressureModel("polytropic_ideal", K=cfg.physics.K)
    elif pc.model == "power_law":
        pressure = PressureModel.power_law(pc.exponent, pc.A)
    else:
        pressure = PressureModel("general_W2inf", table_v=pc.table_v, table_p=pc.table_p)
    fp = cfg.fixed_point
    return FluidScenario(
        data, pressure, system=cfg.system, mu=cfg.physics.mu, kappa=cfg.physics.kappa, cv=cfg.physics.cv,
        eps=fp.eps, eta=fp.eta, eps0=fp.eps0, gamma=cfg.norms.gamma, alpha=cfg.norms.alpha,
        T=cfg.time.T, n_t=cfg.time.nt, q=cfg.time.q, tol_fp=fp.tol_fp, max_iter=fp.max_iter,
        max_halvings=fp.max_halvings)


def linear_problem(cfg, base_dir=None):
    from .function_spaces import SpaceTimeField
    from .parabolic import LinearProblem, PiecewiseCoefficient

    grid = cfg.grid
    lin = cfg.linear
    x = grid.x
    values = lin.phi.sample(x, base_dir)
    coef = PiecewiseCoefficient(grid.x_min, grid.x_max, values, tuple(lin.jumps), lin.eps)

    def opt(spec):
        return None if spec is None else grid_function(spec, grid, base_dir)

    prob = LinearProblem(coef, fbar0=opt(lin.fbar0), f0=opt(lin.f0), T=cfg.time.T, n_t=cfg.time.nt, q=cfg.time.q)
    fields = {}
    for name in ("F", "R"):
        spec = getattr(lin, name)
        if spec is not None:
            row = spec.sample(x, base_dir)
            fields[name] = SpaceTimeField(grid.x_min, grid.x_max, prob.times, np.tile(row, (len(prob.times), 1)))
    if fields:
        prob = LinearProblem(coef, fbar0=prob.fbar0, f0=prob.f0, T=prob.T, n_t=prob.n_t, q=prob.q, **fields)
    return prob


def refined(cfg, level):
    """The same scenario with nx - 1 and nt multiplied by 2^level."""
    data = cfg.model_dump()
    data["grid"]["nx"] = (cfg.grid.nx - 1) * 2 ** level + 1
    data["time"]["nt"] = cfg.time.nt * 2 ** level
    return ScenarioConfig.model_validate(data)
