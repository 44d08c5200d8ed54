"""Heat kernel, its closed-form derivatives and the estimate harness.

The kernel is K(t, x) = (4 pi t)^(-1/2) exp(-x^2 / 4t). Every derivative is
evaluated through the Hermite representation

    d^n/dx^n K(s, x) = (-1)^n (4s)^(-n/2) H_n(x / 2 sqrt(s)) K(s, x),

and time derivatives are traded for pairs of space derivatives (K_t = K_xx).
"""

from dataclasses import dataclass
import math

import numpy as np
from numpy.polynomial import hermite
from scipy.special import erfc

MAX_ORDER = 2
WINDOW = 40.0  # half-width of the x-quadrature window, in units of sqrt(c t)


class KernelDomainError(ValueError):
    """Raised for non-positive time or diffusion coefficient."""


@dataclass(frozen=True)
class KernelQuery:
    t: float
    x: float
    m: int = 0
    j: int = 0
    c: float = 1.0

    def __post_init__(self):
        _check_domain(self.t, self.c)
        if not (0 <= self.m <= MAX_ORDER and 0 <= self.j <= MAX_ORDER):
            raise KernelDomainError(f"derivative orders (m={self.m}, j={self.j}) outside 0..{MAX_ORDER}")

    def evaluate(self):
        return float(eval_kernel(self.t, self.x, self.m, self.j, self.c))


def _check_domain(t, c):
    if np.any(np.asarray(t) <= 0):
        raise KernelDomainError("kernel time must be positive")
    if np.any(np.asarray(c) <= 0):
        raise KernelDomainError("diffusion coefficient must be positive")


def heat_kernel(t, x):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)


def space_derivative(n, s, x):
    """n-th x-derivative of K(s, x), exact."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    if n == 0:
        return heat_kernel(s, x)
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    u = x / (2.0 * np.sqrt(s))
    return (-1.0) ** n * (4.0 * s) ** (-n / 2.0) * hermite.hermval(u, coeffs) * heat_kernel(s, x)


def eval_kernel(t, x, m=0, j=0, c=1.0):
    """d_t^j d_x^m of K(c t, x). Vectorised over t and x."""
    _check_domain(t, c)
    if not (0 <= m <= MAX_ORDER and 0 <= j <= MAX_ORDER):
        raise KernelDomainError(f"derivative orders (m={m}, j={j}) outside 0..{MAX_ORDER}")
    c = np.asarray(c, dtype=float)
    return c ** j * space_derivative(m + 2 * j, c * np.asarray(t, dtype=float), x)


# Primitives in x. G_n is the n-th antiderivative of K(tau, .) vanishing at -inf;
# E_n = G_n - [z >= 0] z^(n-1)/(n-1)! is the same object for K - delta, which
# decays on both sides. E_2 equals the time integral of K over (0, tau], so the
# E family also gives the time-integrated kernels and their antiderivatives.

def _parts(tau, z):
    tau = np.asarray(tau, dtype=float)
    z = np.asarray(z, dtype=float)
    kern = heat_kernel(tau, z)
    s = 2.0 * np.sqrt(tau)
    pos = z >= 0
    # lower tail for z < 0, upper tail for z >= 0, both without cancellation
    tail = 0.5 * erfc(np.abs(z) / s)
    return tau, z, kern, pos, tail


def gauss_primitive(n, tau, z):
    """G_n(tau, z) for n = 0..4, evaluated stably on both sides of 0."""
    if n == 0:
        return heat_kernel(tau, z)
    tau, z, kern, pos, tail = _parts(tau, z)
    cdf = np.where(pos, 1.0 - tail, tail)
    if n == 1:
        return cdf
    if n == 2:
        return np.where(pos, z - z * tail, z * tail) + 2.0 * tau * kern
    if n == 3:
        poly = 0.5 * z * z + tau
        return np.where(pos, 0.5 * z * z + tau - poly * tail, poly * tail) + tau * z * kern
    if n == 4:
        poly = z ** 3 / 6.0 + tau * z
        kpart = (tau * z * z / 3.0 + 4.0 * tau * tau / 3.0) * kern
        return np.where(pos, z ** 3 / 6.0 + tau * z - poly * tail, poly * tail) + kpart
    raise ValueError(f"primitive order {n} not supported")


def compensated_primitive(n, tau, z):
    """E_n(tau, z) for n = 1..4."""
    tau, z, kern, pos, tail = _parts(tau, z)
    if n == 1:
        return np.where(pos, -tail, tail)
    if n == 2:
        return np.where(pos, -z * tail, z * tail) + 2.0 * tau * kern
    if n == 3:
        poly = 0.5 * z * z + tau
        return np.where(pos, tau - poly * tail, poly * tail) + tau * z * kern
    if n == 4:
        poly = z ** 3 / 6.0 + tau * z
        kpart = (tau * z * z / 3.0 + 4.0 * tau * tau / 3.0) * kern
        return np.where(pos, tau * z - poly * tail, poly * tail) + kpart
    raise ValueError(f"compensated order {n} not supported")


def time_integrated_kernel(c, dt, z):
    """int_0^dt K(c s, z) ds in closed form."""
    return compensated_primitive(2, c * dt, z) / c


def time_integrated_gradient(c, dt, z):
    """int_0^dt d_z K(c s, z) ds = -sign(z) erfc(|z| / 2 sqrt(c dt)) / 2c."""
    return compensated_primitive(1, c * dt, z) / c


# Estimate harness

@dataclass
class MomentResult:
    value: float
    diverged: bool = False


def _gauss_panels(edges, order=48):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    a = np.asarray(edges[:-1])[:, None]
    b = np.asarray(edges[1:])[:, None]
    x = 0.5 * (b - a) * nodes[None, :] + 0.5 * (a + b)
    w = 0.5 * (b - a) * weights[None, :]
    return x.ravel(), w.ravel()


def _half_window_rule(scale, order=48):
    # panels graded towards 0 to absorb |x|^(sigma p) and geometric towards the tail
    inner = scale * np.geomspace(1e-8, 1.0, 12)
    outer = scale * np.linspace(1.0, WINDOW, 40)[1:]
    edges = np.concatenate([[0.0], inner, outer])
    return _gauss_panels(edges, order)


def kernel_moment(m, j, p, sigma, t):
    """(int |d_t^j d_x^m K(t, x)|^p |x|^(sigma p) dx)^(1/p); p = inf gives the weighted sup."""
    _check_domain(t, 1.0)
    if sigma < 0:
        return MomentResult(math.inf, True)
    n = m + 2 * j
    root = math.sqrt(t)
    if math.isinf(p):
        x = root * np.linspace(0.0, WINDOW, 200001)
        vals = np.abs(space_derivative(n, t, x)) * np.abs(x) ** sigma
        k = int(np.argmax(vals))
        lo, hi = x[max(k - 1, 0)], x[min(k + 1, len(x) - 1)]
        fine = np.linspace(lo, hi, 2001)
        best = np.max(np.abs(space_derivative(n, t, fine)) * np.abs(fine) ** sigma)
        return MomentResult(float(max(best, vals[k])))
    x, w = _half_window_rule(root)
    vals = np.abs(space_derivative(n, t, x)) ** p * np.abs(x) ** (sigma * p)
    total = 2.0 * np.sum(w * vals)
    if not np.isfinite(total):
        return MomentResult(math.inf, True)
    return MomentResult(float(total ** (1.0 / p)))


def _time_decay_exponent(n):
    # |d_x^n K(t, x)| ~ t^(-d) as t -> inf at fixed x
    return (n + 1) / 2.0 if n % 2 == 0 else (n + 2) / 2.0


def time_moment(m, j, p, x):
    """(int_0^inf |d_t^j d_x^m K(t, x)|^p dt)^(1/p) at fixed x != 0."""
    n = m + 2 * j
    if x == 0 or _time_decay_exponent(n) * p <= 1.0:
        return MomentResult(math.inf, True)
    center = math.log(x * x)
    r, w = _gauss_panels(np.linspace(center - 30.0, center + 60.0, 91))
    t = np.exp(r)
    vals = t * np.abs(space_derivative(n, t, x)) ** p
    return MomentResult(float(np.sum(w * vals) ** (1.0 / p)))


def _space_bound(m, j, p, sigma, t):
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    return t ** (-j - (m - inv_p + 1.0 - sigma) / 2.0)


def _difference_moment(m, j, p, sigma, t, a, samples):
    n = m + 2 * j
    root = math.sqrt(t)
    if a == 0:
        return 0.0
    if math.isinf(p):
        x = root * np.linspace(0.0, WINDOW, samples)
        diff = space_derivative(n, t + a, x) - space_derivative(n, t, x)
        return float(np.max(np.abs(diff) * x ** sigma))
    x, w = _half_window_rule(root)
    diff = space_derivative(n, t + a, x) - space_derivative(n, t, x)
    return float((2.0 * np.sum(w * np.abs(diff) ** p * x ** (sigma * p))) ** (1.0 / p))


def estimate_ratio_sweep(m, j, p, sigma, t_grid, samples=4001, a_factors=(0.0, 0.01, 0.1, 1.0, 10.0, 100.0)):
    """Rows of LHS/RHS ratios for the four kernel inequalities.

    For the time-integrated inequality the sweep variable is |x| and it is
    written to the ``t`` column. Diverged entries carry ratio = inf.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0):
        raise KernelDomainError("t_grid must be strictly positive")
    n = m + 2 * j
    rows = []

    def row(kind, t, ratio):
        rows.append({"inequality_id": kind, "m": m, "j": j, "p": p, "sigma": sigma, "t": float(t), "ratio": float(ratio)})

    xi = np.linspace(0.0, WINDOW, samples)
    for t in t_grid:
        x = math.sqrt(t) * xi
        lhs = np.abs(space_derivative(n, t, x)) * (math.sqrt(t) + x) ** (1 + n)
        row("pointwise", t, np.max(lhs))

        mom = kernel_moment(m, j, p, sigma, t)
        row("lp_space_weighted", t, math.inf if mom.diverged else mom.value / _space_bound(m, j, p, sigma, t))

        if not math.isinf(p):
            tm = time_moment(m, j, p, t)
            row("lp_time", t, math.inf if tm.diverged else tm.value / t ** (2.0 / p - 1.0 - n))

        for factor in a_factors:
            a = factor * t
            lhs = _difference_moment(m, j, p, sigma, t, a, samples)
            rhs = _space_bound(m, j, p, sigma, t) * min(1.0, a / t)
            row(f"time_difference[a/t={factor:g}]", t, 0.0 if lhs == 0.0 else lhs / rhs)
    return rows


def ratio_drift(coarse_rows, fine_rows):
    """Largest relative change between two sweeps with matching row order."""
    worst = 0.0
    for a, b in zip(coarse_rows, fine_rows):
        ra, rb = a["ratio"], b["ratio"]
        if math.isinf(ra) or math.isinf(rb) or rb == 0.0:
            continue
        worst = max(worst, abs(ra - rb) / abs(rb))
    return worst


def _analytic_time_derivative(t, x):
    # d_t K written out directly, independent of the Hermite path
    return heat_kernel(t, x) * (x * x / (4.0 * t * t) - 0.5 / t)


def identity_suite(t_values=(1e-3, 1e-2, 0.1, 1.0, 10.0), scales=(0.5, 2.0, 10.0)):
    """Normalization, self-similarity and PDE-residual checks of K; returns the worst errors."""
    norm_err = 0.0
    similarity_err = 0.0
    residual = 0.0
    for t in t_values:
        x, w = _gauss_panels(math.sqrt(t) * np.linspace(-WINDOW, WINDOW, 161))
        norm_err = max(norm_err, abs(float(np.sum(w * heat_kernel(t, x))) - 1.0))
        xs = math.sqrt(t) * np.linspace(-8.0, 8.0, 401)
        base = heat_kernel(t, xs)
        for lam in scales:
            scaled = lam * heat_kernel(lam * lam * t, lam * xs)
            similarity_err = max(similarity_err, float(np.max(np.abs(scaled - base) / base)))
        # residual relative to the size of the individual terms
        kt = _analytic_time_derivative(t, xs)
        kxx = space_derivative(2, t, xs)
        scale = float(np.max(np.abs(kt)))
        residual = max(residual, float(np.max(np.abs(kt - kxx))) / scale)
    return {"normalization": norm_err, "self_similarity": similarity_err, "pde_residual": residual}
