"""Sampled fields and the norms used to measure them.

Space-time norms follow the parabolic scaling conventions

    X_T^{sigma,p}: sup_s s^sigma |f(s)|_p + sup_{s<t} s^(sigma+alpha) |f(t)-f(s)|_p / (t-s)^alpha
    Y_T:           sup_s |f(s)|_inf + sup_{s<t} s^alpha |f(t)-f(s)|_inf / (t-s)^alpha
    L^p_T:         (int_0^T int |f|^p)^(1/p)

Suprema are taken over the sampled times and pairs of sampled times.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np

DEFAULT_ALPHA = 0.05
DEFAULT_GAMMA = 0.1
NORM_KINDS = ("Lp_space", "SobolevFrac", "HolderC2gamma", "XT", "YT", "LpT", "ZT", "XT_tilde", "LpT_tilde")


class NormDomainError(ValueError):
    pass


class NormWarning(UserWarning):
    pass


@dataclass
class GridFunction:
    x_min: float
    x_max: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or len(self.values) < 2:
            raise ValueError("a grid function needs at least two samples")
        if not self.x_max > self.x_min:
            raise ValueError("grid spacing must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    @classmethod
    def sample(cls, func, x_min, x_max, n):
        x = np.linspace(x_min, x_max, n)
        return cls(x_min, x_max, func(x))

    @property
    def n(self):
        return len(self.values)

    @property
    def h(self):
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.n)

    def with_values(self, values):
        return GridFunction(self.x_min, self.x_max, values)


@dataclass
class SpaceTimeField:
    x_min: float
    x_max: float
    times: np.ndarray
    slices: np.ndarray
    dx: np.ndarray = None  # optional analytically differentiated slices

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.slices = np.atleast_2d(np.asarray(self.slices, dtype=float))
        if self.slices.shape[0] != len(self.times):
            raise ValueError("one slice per time is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.dx is not None:
            self.dx = np.asarray(self.dx, dtype=float)
            if self.dx.shape != self.slices.shape:
                raise ValueError("derivative slices must match the field slices")
        # immutable after construction
        self.times.setflags(write=False)
        self.slices.setflags(write=False)

    @property
    def n(self):
        return self.slices.shape[1]

    @property
    def h(self):
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.n)

    def at(self, k):
        return GridFunction(self.x_min, self.x_max, self.slices[k])

    def derivative(self):
        """d/dx slices: stored ones if present, else fourth-order differences."""
        if self.dx is not None:
            return SpaceTimeField(self.x_min, self.x_max, self.times, self.dx)
        return SpaceTimeField(self.x_min, self.x_max, self.times, derivative(self.slices, self.h))

    def scaled(self, factor):
        dx = None if self.dx is None else factor * self.dx
        return SpaceTimeField(self.x_min, self.x_max, self.times, factor * self.slices, dx)

    def combine(self, other, a=1.0, b=1.0):
        dx = None
        if self.dx is not None and other.dx is not None:
            dx = a * self.dx + b * other.dx
        return SpaceTimeField(self.x_min, self.x_max, self.times, a * self.slices + b * other.slices, dx)


@dataclass
class NormSpec:
    kind: str
    sigma: float = 0.0
    p: float = 2.0
    alpha: float = DEFAULT_ALPHA
    gamma: float = DEFAULT_GAMMA
    T: float = 1.0
    subdomain: tuple = None

    def __post_init__(self):
        if self.kind not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        self.p = float(self.p)
        if not self.p >= 1.0:
            raise ValueError("p must lie in [1, inf]")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.alpha < 0 or (self.alpha > 0 and not self.alpha < self.gamma):
            raise ValueError("need 0 <= alpha < gamma")
        if self.subdomain is not None:
            self.subdomain = tuple(float(v) for v in self.subdomain)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if str(data.get("p", "")).lower() in ("inf", "infinity"):
            data["p"] = math.inf
        return cls(**data)


# Basic one-dimensional pieces

def _mask(x, E):
    if E is None:
        return np.ones_like(x, dtype=bool)
    lo, hi = E
    mask = (x >= lo - 1e-12) & (x <= hi + 1e-12)
    if not np.any(mask):
        raise NormDomainError(f"subdomain {E} does not meet the grid [{x[0]}, {x[-1]}]")
    return mask


def _trapezoid_weights(n, h):
    w = np.full(n, h)
    if n > 1:
        w[0] = w[-1] = 0.5 * h
    else:
        w[:] = 0.0
    return w


def _lp(values, h, p, mask):
    """L^p norm along the last axis over the masked nodes (trapezoid rule)."""
    sub = np.asarray(values)[..., mask]
    if math.isinf(p):
        return np.max(np.abs(sub), axis=-1)
    w = _trapezoid_weights(sub.shape[-1], h)
    return np.sum(w * np.abs(sub) ** p, axis=-1) ** (1.0 / p)


def lp_norm(g, p=2.0, E=None):
    return float(_lp(g.values, g.h, float(p), _mask(g.x, E)))


def derivative(values, h):
    """Fourth-order centred differences along the last axis, one-sided near the ends."""
    f = np.asarray(values, dtype=float)
    d = np.empty_like(f)
    n = f.shape[-1]
    if n < 5:
        return np.gradient(f, h, axis=-1)
    d[..., 2:-2] = (f[..., :-4] - 8 * f[..., 1:-3] + 8 * f[..., 3:-1] - f[..., 4:]) / (12 * h)
    d[..., 0] = (-25 * f[..., 0] + 48 * f[..., 1] - 36 * f[..., 2] + 16 * f[..., 3] - 3 * f[..., 4]) / (12 * h)
    d[..., 1] = (-3 * f[..., 0] - 10 * f[..., 1] + 18 * f[..., 2] - 6 * f[..., 3] + f[..., 4]) / (12 * h)
    d[..., -1] = (25 * f[..., -1] - 48 * f[..., -2] + 36 * f[..., -3] - 16 * f[..., -4] + 3 * f[..., -5]) / (12 * h)
    d[..., -2] = (3 * f[..., -1] + 10 * f[..., -2] - 18 * f[..., -3] + 6 * f[..., -4] - f[..., -5]) / (12 * h)
    return d


def frac_sobolev_norm(g, sigma, p, tails=True):
    """Gagliardo seminorm (iint |g(x)-g(y)|^p / |x-y|^(1+sigma p))^(1/p).

    Node pairs stand for cells |x - y| in [(k - 1/2) h, (k + 1/2) h]. The
    diagonal strip |x - y| < h/2 is added in closed form from the local slope
    of the piecewise-linear interpolant, and pairs with one point outside the
    grid use the constant extension of the end values.
    """
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    v = g.values
    h = g.h
    n = len(v)
    s = 1.0 + sigma * p
    tw = _trapezoid_weights(n, h)
    total = 0.0
    for k in range(1, n):
        diff = np.abs(v[k:] - v[:-k]) ** p
        total += 2.0 * np.sum(tw[k:] * tw[:-k] * diff) / (k * h) ** s
    slopes = np.abs(np.diff(v)) / h
    node_slope_p = np.zeros(n)
    node_slope_p[:-1] += 0.5 * slopes ** p
    node_slope_p[1:] += 0.5 * slopes ** p
    expo = p - sigma * p
    total += np.sum(tw * node_slope_p) * 2.0 * (0.5 * h) ** expo / expo
    if tails:
        x = g.x
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.abs(v - v[0]) ** p * (x - g.x_min) ** (-sigma * p)
            right = np.abs(v - v[-1]) ** p * (g.x_max - x) ** (-sigma * p)
        left[0] = right[-1] = 0.0
        total += 2.0 * np.sum(tw * (left + right)) / (sigma * p)
    return float(total ** (1.0 / p))


def holder_seminorm(g, exponent):
    """sup |g(x) - g(y)| / |x - y|^exponent over node pairs."""
    v = g.values
    h = g.h
    best = 0.0
    for k in range(1, len(v)):
        best = max(best, float(np.max(np.abs(v[k:] - v[:-k]))) / (k * h) ** exponent)
    return best


# Space-time norms

def _holder_in_time(norms_of_diff, times, weight_exp, alpha):
    best = 0.0
    for a in range(len(times) - 1):
        s = times[a]
        dt = times[a + 1:] - s
        vals = s ** weight_exp * norms_of_diff[a] / dt ** alpha
        best = max(best, float(np.max(vals)))
    return best


def _pair_norms(slices, h, p, mask):
    """norms_of_diff[a][b'] = |f(t_{a+1+b'}) - f(t_a)|."""
    out = []
    for a in range(slices.shape[0] - 1):
        out.append(np.atleast_1d(_lp(slices[a + 1:] - slices[a], h, p, mask)))
    return out


def xt_terms(f, sigma, p, alpha=DEFAULT_ALPHA, T=None, E=None):
    """(weighted sup term, Holder term) of the X_T^{sigma,p} norm."""
    times, slices = _restrict_times(f, T)
    mask = _mask(f.x, E)
    norms = np.atleast_1d(_lp(slices, f.h, p, mask))
    sup_term = float(np.max(times ** sigma * norms))
    if len(times) < 2:
        warnings.warn("fewer than two time slices: Holder term set to 0", NormWarning)
        return sup_term, 0.0
    return sup_term, _holder_in_time(_pair_norms(slices, f.h, p, mask), times, sigma + alpha, alpha)


def _restrict_times(f, T):
    times, slices = f.times, f.slices
    if T is not None:
        keep = times <= T * (1 + 1e-12)
        times, slices = times[keep], slices[keep]
    if np.any(times < 0):
        raise NormDomainError("times must be non-negative")
    return times, slices


def xt_norm(f, spec):
    if spec.kind not in ("XT", "XT_tilde"):
        raise ValueError("xt_norm needs an XT spec")
    return float(sum(xt_terms(f, spec.sigma, spec.p, spec.alpha, spec.T, spec.subdomain)))


def yt_terms(f, alpha=DEFAULT_ALPHA, T=None, E=None):
    times, slices = _restrict_times(f, T)
    mask = _mask(f.x, E)
    sup_term = float(np.max(_lp(slices, f.h, math.inf, mask)))
    if len(times) < 2:
        warnings.warn("fewer than two time slices: Holder term set to 0", NormWarning)
        return sup_term, 0.0
    return sup_term, _holder_in_time(_pair_norms(slices, f.h, math.inf, mask), times, alpha, alpha)


def yt_norm(f, alpha=DEFAULT_ALPHA, T=None, E=None):
    return float(sum(yt_terms(f, alpha, T, E)))


def time_weights(times):
    """Trapezoid weights in time; the first sample also covers [0, t_0]."""
    times = np.asarray(times, dtype=float)
    w = np.zeros(len(times))
    if len(times) > 1:
        dt = np.diff(times)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
    w[0] += times[0]
    return w


def lpt_norm(f, p, T=None, E=None):
    times, slices = _restrict_times(f, T)
    mask = _mask(f.x, E)
    if math.isinf(p):
        return float(np.max(np.abs(slices[:, mask])))
    per_slice = np.atleast_1d(_lp(slices, f.h, p, mask)) ** p
    return float(np.sum(time_weights(times) * per_slice) ** (1.0 / p))


def zt_terms(w, theta, alpha=DEFAULT_ALPHA, T=None, E=None):
    """The seven constituents of Z_T(w, theta), keyed by name."""
    wx = w.derivative()
    thx = theta.derivative()
    terms = {
        "L2T(w_x)": lpt_norm(wx, 2.0, T, E),
        "X^{1/2,2}(w_x)": sum(xt_terms(wx, 0.5, 2.0, alpha, T, E)),
        "X^{3/4,inf}(w_x)": sum(xt_terms(wx, 0.75, math.inf, alpha, T, E)),
        "L2T(theta)": lpt_norm(theta, 2.0, T, E),
        "X^{1/2,2}(theta)": sum(xt_terms(theta, 0.5, 2.0, alpha, T, E)),
        "L6/5T(theta_x)": lpt_norm(thx, 1.2, T, E),
        "X^{5/6,6/5}(theta_x)": sum(xt_terms(thx, 5.0 / 6.0, 1.2, alpha, T, E)),
    }
    return {k: float(v) for k, v in terms.items()}


def zt_norm(w, theta, alpha=DEFAULT_ALPHA, T=None, E=None):
    return float(sum(zt_terms(w, theta, alpha, T, E).values()))


# Reflections

def _check_symmetric(g):
    if abs(g.x_min + g.x_max) > 1e-12 * max(1.0, abs(g.x_max)) or g.n % 2 == 0:
        raise NormDomainError("reflection needs a grid symmetric about 0 with a node at 0")


def reflect_even(g):
    """h(x) for x >= 0 mirrored onto x < 0."""
    _check_symmetric(g)
    mid = g.n // 2
    right = g.values[mid:]
    return g.with_values(np.concatenate([right[::-1], right[1:]]))


def reflect_antisym(g):
    """(h(x) - h(-x)) on x <= 0, zero on x > 0."""
    _check_symmetric(g)
    out = np.zeros(g.n)
    mid = g.n // 2
    out[: mid + 1] = g.values[: mid + 1] - g.values[mid:][::-1]
    return g.with_values(out)


def half_gagliardo(g, sigma, p, side="left"):
    """Gagliardo double integral restricted to one half-line, to the power p."""
    _check_symmetric(g)
    mid = g.n // 2
    part = g.values[: mid + 1] if side == "left" else g.values[mid:]
    sub = GridFunction(0.0, g.x_max, part)
    return frac_sobolev_norm(sub, sigma, p, tails=False) ** p


# Localised norms

def _smooth_step(r):
    # 0 for r <= 0, 1 for r >= 1, built from exp(-1/s)
    r = np.clip(r, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(r > 0, np.exp(-1.0 / np.where(r > 0, r, 1.0)), 0.0)
        b = np.where(r < 1, np.exp(-1.0 / np.where(r < 1, 1.0 - r, 1.0)), 0.0)
    return a / (a + b)


def cutoff(x, z):
    """Smooth chi_z: 1 on [z-1, z+1], 0 outside (z-2, z+2)."""
    return _smooth_step(2.0 - np.abs(np.asarray(x) - z))


def tilde_norm(f, spec):
    """sup over a z-lattice (spacing 1/2) of the windowed XT or L^p_T norm."""
    if spec.kind not in ("XT_tilde", "LpT_tilde"):
        raise ValueError("tilde_norm needs an XT_tilde or LpT_tilde spec")

    def inner(field):
        if spec.kind == "XT_tilde":
            return sum(xt_terms(field, spec.sigma, spec.p, spec.alpha, spec.T))
        return lpt_norm(field, spec.p, spec.T)

    if f.x_max - f.x_min < 4.0:
        warnings.warn("grid shorter than one cutoff window: using the global norm", NormWarning)
        return float(inner(f))
    x = f.x
    best = 0.0
    for z in np.arange(f.x_min, f.x_max + 0.25, 0.5):
        chi = cutoff(x, z)
        best = max(best, inner(SpaceTimeField(f.x_min, f.x_max, f.times, f.slices * chi)))
    return float(best)


def evaluate_spec(spec, field, theta=None):
    """Dispatch a NormSpec on a field; returns (value, per-term breakdown)."""
    kind = spec.kind
    E = spec.subdomain
    if kind in ("Lp_space", "SobolevFrac", "HolderC2gamma"):
        g = field.at(len(field.times) - 1)
        if kind == "Lp_space":
            val = lp_norm(g, spec.p, E)
        elif kind == "SobolevFrac":
            val = frac_sobolev_norm(g, spec.sigma, spec.p)
        else:
            val = holder_seminorm(g, 2.0 * spec.gamma)
        return val, {kind: val}
    if kind == "XT":
        sup_term, hol = xt_terms(field, spec.sigma, spec.p, spec.alpha, spec.T, E)
        return sup_term + hol, {"sup": sup_term, "holder": hol}
    if kind == "YT":
        sup_term, hol = yt_terms(field, spec.alpha, spec.T, E)
        return sup_term + hol, {"sup": sup_term, "holder": hol}
    if kind == "LpT":
        val = lpt_norm(field, spec.p, spec.T, E)
        return val, {kind: val}
    if kind == "ZT":
        if theta is None:
            theta = field.scaled(0.0)
        terms = zt_terms(field, theta, spec.alpha, spec.T, E)
        return sum(terms.values()), terms
    val = tilde_norm(field, spec)
    return val, {kind: val}
