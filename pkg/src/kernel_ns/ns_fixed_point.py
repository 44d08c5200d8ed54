"""Picard maps for the isentropic (p-system) and full polytropic systems.

Lagrangian form with specific volume v, velocity u and temperature theta:

    v_t - u_x = 0
    u_t + p_x = (mu u_x / v)_x
    cv theta_t + p u_x = (kappa theta_x / v)_x + mu u_x^2 / v      (full system)

The coefficient of the linearisation is b, a mollified copy of v0 with exact
constant plateaus around every jump. Given an iterate w (and theta iterate),
v is rebuilt from v = v0 + int_0^t w_x and u solves

    u_t - (mu u_x / b)_x = (-p(v) + mu (1/v - 1/b) w_x)_x,

so a fixed point w = u is a solution of the nonlinear system.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.interpolate import CubicSpline

from .function_spaces import GridFunction, SpaceTimeField, holder_seminorm, xt_terms, yt_terms
from .parabolic import (
    HorizonTooLarge,
    LinearProblem,
    PiecewiseCoefficient,
    smoothing_estimate_harness,
    solve_linear,
)


class DataTooRough(ValueError):
    """v0 is farther than eps0 from its plateau coefficient."""


class InvalidData(ValueError):
    pass


class NoContraction(RuntimeError):
    pass


class BallExit(RuntimeError):
    pass


class UndefinedRatio(ZeroDivisionError):
    pass


class InvalidIterate(RuntimeError):
    pass


@dataclass
class PressureModel:
    kind: str = "polytropic_ideal"  # or "general_W2inf"
    K: float = 1.0
    table_v: np.ndarray = None
    table_p: np.ndarray = None

    def __post_init__(self):
        if self.kind == "polytropic_ideal":
            if not self.K > 0:
                raise InvalidData("ideal-gas constant K must be positive")
        elif self.kind == "general_W2inf":
            if self.table_v is None or self.table_p is None or len(self.table_v) < 4:
                raise InvalidData("tabulated pressure needs at least four (v, p) samples")
            self.table_v = np.asarray(self.table_v, dtype=float)
            self.table_p = np.asarray(self.table_p, dtype=float)
            self._spline = CubicSpline(self.table_v, self.table_p)
        else:
            raise InvalidData(f"unknown pressure model {self.kind!r}")

    @classmethod
    def power_law(cls, exponent=1.4, A=1.0, v_min=0.2, v_max=5.0, samples=400):
        v = np.linspace(v_min, v_max, samples)
        return cls("general_W2inf", table_v=v, table_p=A * v ** (-exponent))

    def __call__(self, v, theta=None):
        v = np.asarray(v, dtype=float)
        if self.kind == "polytropic_ideal":
            if theta is None:
                raise InvalidData("the ideal-gas pressure needs a temperature")
            return self.K * theta / v
        return self._spline(v)

    def certify(self, v_lo, v_hi):
        """max |p''| on [v_lo, v_hi]; raises if the table does not cover the range."""
        if self.kind == "polytropic_ideal":
            return None
        if v_lo < self.table_v[0] or v_hi > self.table_v[-1]:
            raise InvalidData(f"pressure table [{self.table_v[0]}, {self.table_v[-1]}] does not cover [{v_lo}, {v_hi}]")
        grid = np.linspace(v_lo, v_hi, 2001)
        bound = float(np.max(np.abs(self._spline(grid, 2))))
        if not np.isfinite(bound):
            raise InvalidData("pressure second derivative is not bounded")
        return bound


@dataclass
class InitialData:
    v0: GridFunction
    jumps: tuple = ()
    lam0: float = None
    ubar0: GridFunction = None
    u0: GridFunction = None
    thetabar0: GridFunction = None
    theta0: GridFunction = None

    def __post_init__(self):
        vmin = float(self.v0.values.min())
        if self.lam0 is None:
            self.lam0 = vmin
        if not self.lam0 > 0:
            raise InvalidData(f"positivity floor lambda0 must be positive (got {self.lam0})")
        if vmin < self.lam0:
            raise InvalidData(f"inf v0 = {vmin} violates inf v0 >= lambda0 = {self.lam0}")
        if self.ubar0 is None and self.u0 is None:
            raise InvalidData("initial velocity needs ubar0 or u0")

    def jump_limits(self):
        """(a, left limit, right limit) for each jump."""
        g = self.v0
        out = []
        for a in self.jumps:
            j = int(round((a - g.x_min) / g.h))
            out.append((a, float(g.values[j - 1]), float(g.values[j])))
        return out


@dataclass
class FluidScenario:
    data: InitialData
    pressure: PressureModel
    system: str = "psystem"  # or "full"
    mu: float = 1.0
    kappa: float = 1.0
    cv: float = 1.0
    eps: float = 0.1
    eta: float = None
    eps0: float = 0.5
    gamma: float = 0.1
    alpha: float = 0.05
    T: float = 0.05
    n_t: int = 48
    q: float = 2.0
    tol_fp: float = 1e-7
    max_iter: int = 50
    max_halvings: int = 6

    def __post_init__(self):
        if self.system not in ("psystem", "full"):
            raise InvalidData(f"unknown system {self.system!r}")
        for name in ("mu", "kappa", "cv", "eps", "T"):
            if not getattr(self, name) > 0:
                raise InvalidData(f"{name} must be positive")
        if self.system == "full" and self.data.thetabar0 is None and self.data.theta0 is None:
            raise InvalidData("the full system needs thetabar0 or theta0")
        if self.eta is None:
            self.eta = self.eps / 4.0


def _bump(r):
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def build_plateau_coefficient(v0, jumps, eps, eta=None, eps0=None):
    """b_{eps,eta}: v0 mollified at scale eta, with constant plateaus of radius eps at each jump."""
    eta = eps / 4.0 if eta is None else eta
    h = v0.h
    x = v0.x
    vals = v0.values
    width = int(math.floor(eta / h))
    if width >= 1:
        k = np.arange(-width, width + 1)
        rho = _bump(k * h / eta)
        rho /= rho.sum()
        ext = np.pad(vals, width, mode="edge")
        smooth = np.convolve(ext, rho, mode="valid")
    else:
        smooth = vals.copy()
    b = smooth.copy()
    for a in jumps:
        right = float(np.interp(a + eps, x, smooth))
        left = float(np.interp(a - eps, x, smooth))
        b[(x >= a) & (x <= a + eps + 1e-12)] = right
        b[(x < a) & (x >= a - eps - 1e-12)] = left
    if eps0 is not None:
        osc = float(np.max(np.abs(vals - b)))
        if osc > eps0:
            raise DataTooRough(f"|v0 - b|_inf = {osc:.4g} exceeds eps0 = {eps0}: data rougher than admissible")
    return v0.with_values(b)


def _linear_problem(scenario, coef, initial_bar, initial, F=None, R=None):
    return LinearProblem(coef, fbar0=initial_bar, F=F, R=R, T=scenario.T, f0=initial,
                         n_t=scenario.n_t, q=scenario.q)


@dataclass
class _Setup:
    b: GridFunction
    coef_u: PiecewiseCoefficient
    coef_theta: PiecewiseCoefficient
    times: np.ndarray  # includes 0


def prepare(scenario):
    d = scenario.data
    b = build_plateau_coefficient(d.v0, d.jumps, scenario.eps, scenario.eta, scenario.eps0)
    g = d.v0
    coef_u = PiecewiseCoefficient(g.x_min, g.x_max, scenario.mu / b.values, d.jumps, scenario.eps)
    coef_t = None
    if scenario.system == "full":
        coef_t = PiecewiseCoefficient(g.x_min, g.x_max, scenario.kappa / (scenario.cv * b.values),
                                      d.jumps, scenario.eps)
    probe = _linear_problem(scenario, coef_u, d.ubar0, d.u0)
    return _Setup(b, coef_u, coef_t, probe.times)


def assemble_v(scenario, times, wx):
    """v(t_k) = v0 + int_0^t_k w_x by the trapezoid rule; w_x(0) is taken as w_x(t_1)."""
    v0 = scenario.data.v0.values
    rows = np.vstack([wx[:1], wx])
    dt = np.diff(times)
    incr = 0.5 * dt[:, None] * (rows[1:] + rows[:-1])
    return np.vstack([v0, v0 + np.cumsum(incr, axis=0)])


def _check_positivity(scenario, v):
    floor = 0.5 * scenario.data.lam0
    vmin = float(v.min())
    if vmin < floor:
        raise HorizonTooLarge(f"v dipped to {vmin:.4g} below lambda0/2 = {floor:.4g}; shrink T")
    return vmin


def apply_map_T(wx, scenario, setup=None):
    """u = T(w) for the p-system; ``wx`` holds w_x on the mesh times without 0."""
    setup = setup or prepare(scenario)
    times = setup.times
    v = assemble_v(scenario, times, wx)
    _check_positivity(scenario, v)
    b = setup.b.values
    rows = np.vstack([wx[:1], wx])
    # a p-system run with the ideal-gas model is isothermal (theta = 1)
    pv = scenario.pressure(v, 1.0) if scenario.pressure.kind == "polytropic_ideal" else scenario.pressure(v)
    F = -pv + scenario.mu * (1.0 / v - 1.0 / b) * rows
    g = scenario.data.v0
    Ffield = SpaceTimeField(g.x_min, g.x_max, times, F)
    sol = solve_linear(_linear_problem(scenario, setup.coef_u, scenario.data.ubar0, scenario.data.u0, Ffield))
    return sol, v


def apply_map_M(wx, thx, th, scenario, setup=None):
    """(u, theta) = M(w, theta iterate) for the full system.

    ``wx``, ``thx`` and ``th`` are w_x, theta_x and theta on the mesh times without 0.
    """
    setup = setup or prepare(scenario)
    times = setup.times
    v = assemble_v(scenario, times, wx)
    _check_positivity(scenario, v)
    b = setup.b.values
    d = scenario.data
    g = d.v0
    cv, mu, kap = scenario.cv, scenario.mu, scenario.kappa
    wrows = np.vstack([wx[:1], wx])
    throws = np.vstack([th[:1], th])
    throws_x = np.vstack([thx[:1], thx])
    p = scenario.pressure(v, throws)
    Fu = -p + mu * (1.0 / v - 1.0 / b) * wrows
    Ft = (kap / cv) * (1.0 / v - 1.0 / b) * throws_x
    R = -p * wrows / cv + mu * wrows ** 2 / (cv * v)
    if not np.all(np.isfinite(R)) or not np.isfinite(np.sum(np.abs(R))):
        raise InvalidIterate("bulk forcing of the temperature equation is not finite")
    u = solve_linear(_linear_problem(scenario, setup.coef_u, d.ubar0, d.u0,
                                     SpaceTimeField(g.x_min, g.x_max, times, Fu)))
    theta = solve_linear(_linear_problem(scenario, setup.coef_theta, d.thetabar0, d.theta0,
                                         SpaceTimeField(g.x_min, g.x_max, times, Ft),
                                         SpaceTimeField(g.x_min, g.x_max, times, R)))
    return u, theta, v


def _x_norm(slices, times, scenario, x_min, x_max):
    """X^{1-gamma, inf} norm of a derivative field."""
    fld = SpaceTimeField(x_min, x_max, times, slices)
    return float(sum(xt_terms(fld, 1.0 - scenario.gamma, math.inf, scenario.alpha)))


def _state_norm(scenario, times, parts):
    g = scenario.data.v0
    return sum(_x_norm(p, times, scenario, g.x_min, g.x_max) for p in parts)


@dataclass
class FixedPointResult:
    times: np.ndarray  # without 0
    v: np.ndarray  # rows at times with 0 prepended
    u: SpaceTimeField
    theta: SpaceTimeField = None
    iterations: int = 0
    ratios: list = field(default_factory=list)
    updates: list = field(default_factory=list)
    min_v: float = 0.0
    ball_norm: float = 0.0
    radius: float = 0.0
    T: float = 0.0
    v_yt: float = 0.0
    v0_sup: float = 0.0
    halvings: int = 0
    calibration: float = 0.0

    def diagnostics(self):
        return {
            "iterations": self.iterations,
            "ratios": [float(r) for r in self.ratios],
            "updates": [float(u) for u in self.updates],
            "min_v": self.min_v,
            "ball_norm": self.ball_norm,
            "ball_radius": self.radius,
            "T": self.T,
            "v_YT": self.v_yt,
            "v0_sup": self.v0_sup,
            "halvings": self.halvings,
            "C1": self.calibration,
        }


def _ubar(data):
    if data.ubar0 is not None:
        return data.ubar0
    g = data.u0
    vals = np.concatenate([[0.0], np.cumsum(0.5 * g.h * (g.values[1:] + g.values[:-1]))])
    return g.with_values(vals)


def ball_radius(scenario, setup):
    """M = 2 C1 [ubar0]_{C^{2 gamma}} + 1 with C1 measured on the zero-forcing linear solve."""
    d = scenario.data
    prob = _linear_problem(scenario, setup.coef_u, d.ubar0, d.u0)
    sol = solve_linear(prob)
    norm_data = holder_seminorm(_ubar(d), 2 * scenario.gamma)
    rows = smoothing_estimate_harness(LinearProblem(setup.coef_u, fbar0=_ubar(d), T=scenario.T,
                                                    n_t=scenario.n_t, q=scenario.q), sol, scenario.gamma)
    c1 = rows[0]["ratio"] if math.isfinite(rows[0]["ratio"]) else 0.0
    return 2.0 * c1 * norm_data + 1.0, c1, sol


def _iterate(scenario, setup, start, radius):
    """Run the Picard loop at a fixed horizon; raises NoContraction / BallExit."""
    times = setup.times[1:]
    full = scenario.system == "full"
    if full:
        state = start
    else:
        state = (start,)
    ratios, updates = [], []
    slow = 0
    last = None
    for it in range(1, scenario.max_iter + 1):
        if full:
            u, th, v = apply_map_M(state[0], state[1], state[2], scenario, setup)
            new = (u.field.dx, th.field.dx, th.field.slices)
            diff = [new[0] - state[0], new[1] - state[1]]
            size = _state_norm(scenario, times, [new[0], new[1]])
        else:
            u, v = apply_map_T(state[0], scenario, setup)
            th = None
            new = (u.field.dx,)
            diff = [new[0] - state[0]]
            size = _state_norm(scenario, times, [new[0]])
        if size > radius:
            raise BallExit(f"iterate norm {size:.4g} left the ball of radius {radius:.4g}; shrink T")
        update = _state_norm(scenario, times, diff)
        updates.append(update)
        if last is not None and last > 0:
            ratio = update / last
            ratios.append(ratio)
            slow = slow + 1 if ratio >= 1.0 else 0
            if slow >= 3:
                raise NoContraction(f"contraction ratio {ratio:.3g} >= 1 for 3 steps; "
                                    "use a smaller T or smoother data (smaller eps0)")
        last = update
        state = new
        if update <= scenario.tol_fp * max(1.0, size):
            return state, u, th, v, it, ratios, updates, size
    raise NoContraction(f"no convergence within {scenario.max_iter} iterations (last ratio "
                        f"{ratios[-1] if ratios else float('nan'):.3g})")


def initial_iterate(scenario, setup):
    d = scenario.data
    u0 = solve_linear(_linear_problem(scenario, setup.coef_u, d.ubar0, d.u0))
    if scenario.system == "psystem":
        return u0.field.dx, u0
    th = solve_linear(_linear_problem(scenario, setup.coef_theta, d.thetabar0, d.theta0))
    return (u0.field.dx, th.field.dx, th.field.slices), u0


def run_fixed_point(scenario):
    """Fixed point of the Picard map with adaptive halving of T on failure."""
    current = scenario
    halvings = 0
    while True:
        try:
            return _run_at_horizon(current, halvings)
        except (NoContraction, BallExit, HorizonTooLarge):
            if halvings >= scenario.max_halvings:
                raise
            halvings += 1
            current = _with_horizon(current, current.T / 2.0)


def _with_horizon(scenario, T):
    from dataclasses import replace
    return replace(scenario, T=T)


def _run_at_horizon(scenario, halvings):
    setup = prepare(scenario)
    radius, c1, _ = ball_radius(scenario, setup)
    start, _ = initial_iterate(scenario, setup)
    state, u, th, v, it, ratios, updates, size = _iterate(scenario, setup, start, radius)
    g = scenario.data.v0
    vmin = float(v.min())
    v_field = SpaceTimeField(g.x_min, g.x_max, setup.times, v)
    v_yt = float(sum(yt_terms(v_field, scenario.alpha)))
    v0_sup = float(np.max(np.abs(g.values)))
    if vmin < 0.5 * scenario.data.lam0:
        raise HorizonTooLarge(f"min v = {vmin:.4g} below lambda0/2")
    if v_yt > 2.0 * v0_sup:
        raise BallExit(f"|v|_Y = {v_yt:.4g} exceeds 2 |v0|_inf = {2 * v0_sup:.4g}")
    return FixedPointResult(
        times=setup.times[1:], v=v, u=u.field, theta=None if th is None else th.field,
        iterations=it, ratios=ratios, updates=updates, min_v=vmin, ball_norm=size, radius=radius,
        T=scenario.T, v_yt=v_yt, v0_sup=v0_sup, halvings=halvings, calibration=c1)


def contraction_probe(scenario, w1, w2, th1=None, th2=None, setup=None):
    """|map(w1) - map(w2)| / |w1 - w2| in the iteration norm.

    ``w1``/``w2`` are w_x arrays on the mesh without 0; for the full system
    ``th1``/``th2`` are (theta_x, theta) pairs.
    """
    setup = setup or prepare(scenario)
    times = setup.times[1:]
    if scenario.system == "full":
        if th1 is None or th2 is None:
            raise InvalidIterate("the full-system probe needs temperature iterates")
        den = _state_norm(scenario, times, [w1 - w2, th1[0] - th2[0]])
        if den == 0.0:
            raise UndefinedRatio("identical iterates: the contraction ratio is undefined")
        a = apply_map_M(w1, th1[0], th1[1], scenario, setup)
        b = apply_map_M(w2, th2[0], th2[1], scenario, setup)
        num = _state_norm(scenario, times, [a[0].field.dx - b[0].field.dx, a[1].field.dx - b[1].field.dx])
        return num / den
    den = _state_norm(scenario, times, [w1 - w2])
    if den == 0.0:
        raise UndefinedRatio("identical iterates: the contraction ratio is undefined")
    a, _ = apply_map_T(w1, scenario, setup)
    b, _ = apply_map_T(w2, scenario, setup)
    return _state_norm(scenario, times, [a.field.dx - b.field.dx]) / den


def random_ball_pair(scenario, setup, rng, amplitude=0.2, modes=4):
    """Two iterates near the initial iterate: w_x + t^(gamma-1) times smooth random profiles."""
    start, _ = initial_iterate(scenario, setup)
    base = start if scenario.system == "psystem" else start[0]
    g = scenario.data.v0
    x = g.x
    times = setup.times[1:]
    span = g.x_max - g.x_min
    out = []
    for _ in range(2):
        prof = np.zeros_like(x)
        for _k in range(modes):
            c = rng.uniform(g.x_min + 0.25 * span, g.x_max - 0.25 * span)
            width = rng.uniform(0.2, 1.0)
            prof += rng.normal() * np.exp(-((x - c) / width) ** 2)
        prof *= amplitude / max(np.max(np.abs(prof)), 1e-300)
        weight = np.minimum((times / scenario.T) ** (scenario.gamma - 1.0), 1e6)
        out.append(base + weight[:, None] * prof[None, :])
    return out[0], out[1]
