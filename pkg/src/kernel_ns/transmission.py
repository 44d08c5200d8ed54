"""Two-phase heat transmission problem and constant-coefficient whole-line solver.

Two-phase problem, interface at x = 0:

    d_t f = c_+ f_xx (x > 0),  d_t f = c_- f_xx (x < 0),
    f(t, 0+) = f(t, 0-),  c_+ f_x(t, 0+) = c_- f_x(t, 0-).

The solution is f = f_M + f_B. f_M solves each half-line problem with zero
Dirichlet data (odd image kernels). The flux mismatch of f_M at the interface,

    h(t) = c_+ d_x f_M(t, 0+) - c_- d_x f_M(t, 0-),

is cancelled by the boundary layer

    f_B(t, x) = D_pm int_0^t K(c_pm (t - tau), x) h(tau) dtau,
    D_pm = 2 sqrt(c_pm) / (sqrt(c_+) + sqrt(c_-)) = -C_pm.
"""

from dataclasses import dataclass
import math

import numpy as np

from .function_spaces import GridFunction, SpaceTimeField
from .singular_quadrature import (
    ConvolutionPlan,
    convolve_grid,
    duhamel,
    flux_history,
    segment_matrix,
    two_sided_rule_split,
)
from .kernel_core import heat_kernel


class TransmissionDomainError(ValueError):
    pass


def boundary_coefficients(c_plus, c_minus):
    """C_pm = -2 sqrt(c_pm) / (sqrt(c_+) + sqrt(c_-))."""
    s = math.sqrt(c_plus) + math.sqrt(c_minus)
    return -2.0 * math.sqrt(c_plus) / s, -2.0 * math.sqrt(c_minus) / s


@dataclass
class TwoPhaseProblem:
    c_plus: float
    c_minus: float
    f0: GridFunction
    T: float = 1.0
    forcing: SpaceTimeField = None  # bulk forcing; times must start at 0

    def __post_init__(self):
        if self.c_plus <= 0 or self.c_minus <= 0:
            raise TransmissionDomainError("diffusion coefficients must be positive")
        interface_index(self.f0)

    @property
    def coefficients(self):
        return boundary_coefficients(self.c_plus, self.c_minus)


def interface_index(g):
    if not g.x_min < 0 < g.x_max:
        raise TransmissionDomainError("grid must span both sides of the interface")
    k = -g.x_min / g.h
    i0 = int(round(k))
    if abs(k - i0) > 1e-9:
        raise TransmissionDomainError("grid needs a node at the interface")
    return i0


def _split(values, i0):
    """Right half as given, left half mirrored onto eta >= 0."""
    return np.asarray(values[i0:]), np.asarray(values[: i0 + 1][::-1])


# Half-line Dirichlet solution (odd images)

def _image_matrix(name, tau, xi, h, n, sign=-1.0):
    """Kernel at (xi - y) plus sign * kernel at (xi + y), y on [0, (n-1) h], constant tail."""
    direct = segment_matrix(name, tau, xi, 0.0, h, n, right_tail=True)
    image = segment_matrix(name, tau, -np.asarray(xi), 0.0, h, n, right_tail=True)
    return direct + sign * image


def half_line_dirichlet(c, f0, t, side="+", forcing=None):
    """Dirichlet half-line solution f_M on the half-grid at the times ``t``.

    ``f0`` lives on [0, L] (side '+') or [-L, 0] (side '-'); ``forcing`` is an
    optional SpaceTimeField on the same half-grid with times starting at 0,
    held constant on each time interval.
    """
    if side == "+" and f0.x_min != 0.0 or side == "-" and f0.x_max != 0.0:
        raise TransmissionDomainError("initial data must be supported on the stated half-line")
    g = f0.values if side == "+" else f0.values[::-1]
    n = len(g)
    xi = f0.h * np.arange(n)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((len(times), n))
    for k, tk in enumerate(times):
        out[k] = _image_matrix("K", c * tk, xi, f0.h, n) @ g
        if forcing is not None:
            out[k] += _forced_half(c, forcing, side, tk, xi, "I")
    return out if side == "+" else out[:, ::-1]


def _forced_half(c, forcing, side, t, xi, name):
    """int_0^t of the odd-image kernel against bulk forcing, piecewise constant in time."""
    ft = forcing.times
    data = forcing.slices if side == "+" else forcing.slices[:, ::-1]
    n = data.shape[1]
    acc = np.zeros(len(xi))
    for l in range(len(ft) - 1):
        a, b = ft[l], min(ft[l + 1], t)
        if a >= t:
            break
        mid = 0.5 * (data[l] + data[l + 1])
        hi = _image_matrix(name, c * (t - a), xi, forcing.h, n) @ mid
        lo = _image_matrix(name, c * (t - b), xi, forcing.h, n) @ mid if t > b else 0.0
        acc += (hi - lo) / c
    return acc


def one_sided_gradient(c, g, h, s):
    """d_x f_M(s, 0+) for half-line data g on eta >= 0, for each time in ``s``.

    Differentiating the image kernels under the integral gives 2 int K'(c s, -y) g(y) dy.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    mat = segment_matrix("dK", c * s, np.zeros_like(s), 0.0, h, len(g), right_tail=True)
    return 2.0 * (mat @ g)


def _forced_gradient(c, forcing, side, s, h):
    # d_x of the forced odd-image solution at 0+: 2 int_0^s int K'(c r, -y) F dy dr
    data = forcing.slices if side == "+" else forcing.slices[:, ::-1]
    ft = forcing.times
    n = data.shape[1]
    out = np.zeros(len(s))
    zero = np.zeros(1)
    for q, sq in enumerate(s):
        acc = 0.0
        for l in range(len(ft) - 1):
            a, b = ft[l], min(ft[l + 1], sq)
            if a >= sq:
                break
            mid = 0.5 * (data[l] + data[l + 1])
            hi = segment_matrix("J", c * (sq - a), zero, 0.0, h, n, right_tail=True) @ mid
            lo = segment_matrix("J", c * (sq - b), zero, 0.0, h, n, right_tail=True) @ mid if sq > b else 0.0
            acc += 2.0 * float((hi - lo)[0]) / c
        out[q] = acc
    return out


def interface_flux_mismatch(problem, s):
    """h(s) = c_+ d_x f_M(s, 0+) - c_- d_x f_M(s, 0-) at the times ``s``."""
    f0 = problem.f0
    i0 = interface_index(f0)
    right, left = _split(f0.values, i0)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    plus = one_sided_gradient(problem.c_plus, right, f0.h, s)
    # on the mirrored left half the outward derivative changes sign
    minus = -one_sided_gradient(problem.c_minus, left, f0.h, s)
    if problem.forcing is not None:
        Fr = SpaceTimeField(0.0, f0.x_max, problem.forcing.times, problem.forcing.slices[:, i0:])
        Fl = SpaceTimeField(f0.x_min, 0.0, problem.forcing.times, problem.forcing.slices[:, : i0 + 1])
        plus = plus + _forced_gradient(problem.c_plus, Fr, "+", s, f0.h)
        minus = minus - _forced_gradient(problem.c_minus, Fl, "-", s, f0.h)
    return problem.c_plus * plus - problem.c_minus * minus


@dataclass
class TwoPhaseResult:
    field: SpaceTimeField
    jump: np.ndarray
    flux_mismatch: np.ndarray


def solve_two_phase(problem, times, panels=12, order=16):
    """f = f_M + f_B at the output ``times`` (all > 0) on the full grid.

    ``panels`` sets the time resolution of the boundary-layer quadrature.
    """
    f0 = problem.f0
    i0 = interface_index(f0)
    x = f0.x
    cp, cm = problem.c_plus, problem.c_minus
    Cp, Cm = problem.coefficients
    times = np.asarray(times, dtype=float)
    right = GridFunction(0.0, f0.x_max, f0.values[i0:])
    left = GridFunction(f0.x_min, 0.0, f0.values[: i0 + 1])
    Fr = Fl = None
    if problem.forcing is not None:
        Fr = SpaceTimeField(0.0, f0.x_max, problem.forcing.times, problem.forcing.slices[:, i0:])
        Fl = SpaceTimeField(f0.x_min, 0.0, problem.forcing.times, problem.forcing.slices[:, : i0 + 1])
    fm_plus = half_line_dirichlet(cp, right, times, "+", Fr)
    fm_minus = half_line_dirichlet(cm, left, times, "-", Fl)

    out = np.empty((len(times), len(x)))
    jump = np.empty(len(times))
    mismatch = np.empty(len(times))
    xp = x[i0:]
    xm = x[: i0 + 1]
    for k, t in enumerate(times):
        tau, rest, w = two_sided_rule_split(t, panels, order)
        hq = interface_flux_mismatch(problem, tau)
        # boundary layer: -C_pm times the single layer with density h
        bp = -Cp * (heat_kernel(cp * rest[None, :], xp[:, None]) @ (w * hq))
        bm = -Cm * (heat_kernel(cm * rest[None, :], xm[:, None]) @ (w * hq))
        out[k, i0:] = fm_plus[k] + bp
        out[k, : i0 + 1] = fm_minus[k] + bm
        jump[k] = (fm_plus[k, 0] + bp[0]) - (fm_minus[k, -1] + bm[-1])
        # interface fluxes: analytic f_M gradients plus the Neumann limits of the sampled layer
        h_t = float(interface_flux_mismatch(problem, [t])[0])
        order_idx = np.argsort(tau)
        density = (tau[order_idx], hq[order_idx])
        layer_plus = -Cp * -flux_history(cp, density, 0.0, t)
        layer_minus = -Cm * flux_history(cm, density, 0.0, t)
        mismatch[k] = h_t + cp * layer_plus - cm * layer_minus
        out[k, i0] = 0.5 * (fm_plus[k, 0] + bp[0] + fm_minus[k, -1] + bm[-1])
    field = SpaceTimeField(f0.x_min, f0.x_max, times, out)
    return TwoPhaseResult(field, jump, mismatch)


def solve_constant_coeff(fbar0, ftilde0, F=None, R=None, T=1.0, n_t=64, q=2.0, c=1.0, times=None):
    """Whole-line solution of d_t f = c f_xx + d_x F + R with f(0) = d_x fbar0 + ftilde0.

    f = K * d_x fbar0 + K * ftilde0 + int d_x K * F + int K * R, each term by
    exact kernel integration against piecewise-linear data. F and R, when
    given, are arrays sampled on the mesh ``times`` (starting at 0).
    Returns a SpaceTimeField on the mesh without t = 0.
    """
    grid = fbar0 if fbar0 is not None else ftilde0
    h = grid.h
    if times is None:
        plan_times = ConvolutionPlan.graded(T, n_t, h, q=q).times
    else:
        plan_times = np.asarray(times, dtype=float)
    out = np.zeros((len(plan_times), grid.n))
    for k, t in enumerate(plan_times[1:], start=1):
        if fbar0 is not None:
            out[k] += convolve_grid("dK", c * t, h, fbar0.values)
        if ftilde0 is not None:
            out[k] += convolve_grid("K", c * t, h, ftilde0.values)
    if F is not None:
        out += duhamel(ConvolutionPlan(plan_times, h, m=1, c=c), F)
    if R is not None:
        out += duhamel(ConvolutionPlan(plan_times, h, m=0, c=c), R)
    return SpaceTimeField(grid.x_min, grid.x_max, plan_times[1:], out[1:])
