"""Space-time convolutions against heat kernels with endpoint singularities.

Spatial data are treated as continuous piecewise-linear interpolants of the
grid samples, and every kernel is integrated exactly against them through its
closed-form x-primitives. In time, the forcing is held constant on each mesh
interval and the kernel is integrated exactly over the interval (product
integration).
"""

from dataclasses import dataclass
import math

import numpy as np

from .kernel_core import (
    compensated_primitive,
    gauss_primitive,
    heat_kernel,
    space_derivative,
)

TRUNCATION = 12.0  # kernel support cut, in standard deviations sqrt(2 tau)
TAIL_WINDOW = 40.0  # Gaussian window for the flux-history substitution


# kernel name -> (value, first primitive, second primitive, first primitive at +inf)
def _kernel_parts(name, tau):
    if name == "K":
        return (lambda z: heat_kernel(tau, z), lambda z: gauss_primitive(1, tau, z),
                lambda z: gauss_primitive(2, tau, z), 1.0)
    if name == "dK":
        return (lambda z: space_derivative(1, tau, z), lambda z: heat_kernel(tau, z),
                lambda z: gauss_primitive(1, tau, z), 0.0)
    if name == "ddK":
        return (lambda z: space_derivative(2, tau, z), lambda z: space_derivative(1, tau, z),
                lambda z: heat_kernel(tau, z), 0.0)
    if name == "I":
        return (lambda z: compensated_primitive(2, tau, z), lambda z: compensated_primitive(3, tau, z),
                lambda z: compensated_primitive(4, tau, z), tau)
    if name == "J":
        return (lambda z: compensated_primitive(1, tau, z), lambda z: compensated_primitive(2, tau, z),
                lambda z: compensated_primitive(3, tau, z), 0.0)
    raise ValueError(f"unknown kernel {name!r}")


def hat_weights(name, tau, z, h):
    """Integral of the kernel at x - y against the unit hat centred at y (z = x - y)."""
    _, _, prim2, _ = _kernel_parts(name, tau)
    return (prim2(z + h) - 2.0 * prim2(z) + prim2(z - h)) / h


def end_weights(name, tau, z, h, side, tail):
    """Weight of an end node: half hat, plus a constant tail beyond the end when ``tail``."""
    _, prim1, prim2, at_inf = _kernel_parts(name, tau)
    if side == "left":
        if tail:
            return at_inf - (prim2(z) - prim2(z - h)) / h
        return prim1(z) - (prim2(z) - prim2(z - h)) / h
    if tail:
        return (prim2(z + h) - prim2(z)) / h
    return -prim1(z) + (prim2(z + h) - prim2(z)) / h


def segment_matrix(name, tau, x_eval, y0, h, n_nodes, left_tail=False, right_tail=False):
    """Dense matrix mapping samples on a uniform segment to the convolution at ``x_eval``.

    ``tau`` may be a scalar or one value per evaluation point.
    """
    x_eval = np.atleast_1d(np.asarray(x_eval, dtype=float))
    tau = np.broadcast_to(np.asarray(tau, dtype=float), x_eval.shape)[:, None]
    y = y0 + h * np.arange(n_nodes)
    z = x_eval[:, None] - y[None, :]
    mat = hat_weights(name, tau, z, h)
    mat[:, 0] = end_weights(name, tau[:, 0], z[:, 0], h, "left", left_tail)
    mat[:, -1] = end_weights(name, tau[:, 0], z[:, -1], h, "right", right_tail)
    return mat


def _third_primitive(name, tau):
    # K is handled through K - delta, whose bubble integral agrees with K's on grid offsets
    if name == "K":
        return lambda z: compensated_primitive(2, tau, z), lambda z: compensated_primitive(3, tau, z)
    if name == "dK":
        return lambda z: gauss_primitive(1, tau, z), lambda z: gauss_primitive(2, tau, z)
    raise ValueError(f"no bubble weights for kernel {name!r}")


def bubble_weights(name, tau, z, h):
    """int_0^h kernel(z - s) s (h - s) ds, for z on grid offsets.

    Adding these against the cell values -f''/2 upgrades the piecewise-linear
    reconstruction to piecewise quadratic, so repeated restarts do not pile up
    the O(h^2) interpolation error.
    """
    prim2, prim3 = _third_primitive(name, tau)
    return h * (prim2(z) + prim2(z - h)) + 2.0 * (prim3(z - h) - prim3(z))


def banded_bubble_weights(name, tau, h):
    tau = np.asarray(tau, dtype=float)
    width = band_width(float(np.max(tau)), h) + 1
    offsets = np.arange(-width, width + 1)
    z = offsets * h
    if tau.ndim == 0:
        return offsets, bubble_weights(name, tau, z, h)
    return offsets, bubble_weights(name, tau[:, None], z[None, :], h)


def apply_bubbles(offsets, weights, cells):
    """out_i = sum_d w_d cells[i - d]; cells beyond the grid carry no curvature."""
    cells = np.asarray(cells, dtype=float)
    n = cells.shape[-1] + 1
    width = int(offsets[-1])
    ext = np.concatenate([np.zeros(width), cells, np.zeros(width + 1)])
    out = np.zeros(n)
    for k, d in enumerate(offsets):
        w = weights[k] if weights.ndim == 1 else weights[:, k]
        out += w * ext[width - d: width - d + n]
    return out


def cell_curvature(values, h, jump_index=()):
    """-f''/2 on each cell [x_j, x_{j+1}], never differencing across a jump node."""
    f = np.asarray(values, dtype=float)
    n = len(f)
    node = np.zeros(n)
    node[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h ** 2
    cells = 0.5 * (node[1:] + node[:-1])
    # end cells and cells touching a jump: extrapolate from two interior second differences
    cells[0] = 1.5 * node[1] - 0.5 * node[2]
    cells[-1] = 1.5 * node[-2] - 0.5 * node[-3]
    for j in jump_index:
        right = (f[j] - 2.0 * f[j + 1] + f[j + 2]) / h ** 2
        right_next = (f[j + 1] - 2.0 * f[j + 2] + f[j + 3]) / h ** 2
        left = (f[j - 2] - 2.0 * f[j - 1] + f[j]) / h ** 2
        left_next = (f[j - 3] - 2.0 * f[j - 2] + f[j - 1]) / h ** 2
        cells[j] = 1.5 * right - 0.5 * right_next
        cells[j - 1] = 1.5 * left - 0.5 * left_next
    return -0.5 * cells


def band_width(tau_max, h):
    return int(math.ceil(TRUNCATION * math.sqrt(2.0 * max(tau_max, 0.0)) / h)) + 2


def banded_weights(name, tau, h):
    """Offsets and hat weights for a whole-line convolution; ``tau`` scalar or per row."""
    tau = np.asarray(tau, dtype=float)
    width = band_width(float(np.max(tau)), h)
    offsets = np.arange(-width, width + 1)
    # second primitive on the offsets padded by one node, then second differences
    z = np.arange(-width - 1, width + 2) * h
    prim2 = _kernel_parts(name, tau if tau.ndim == 0 else tau[:, None])[2]
    P = prim2(z if tau.ndim == 0 else z[None, :])
    return offsets, (P[..., 2:] - 2.0 * P[..., 1:-1] + P[..., :-2]) / h


def apply_banded(offsets, weights, data):
    """Apply precomputed banded weights to grid data, constant extension beyond both ends."""
    data = np.asarray(data, dtype=float)
    n = data.shape[-1]
    width = int(offsets[-1])
    pad = [(0, 0)] * (data.ndim - 1) + [(width, width)]
    ext = np.pad(data, pad, mode="edge")
    out = np.zeros_like(data)
    # row i picks ext[i + width - d] for d in offsets
    if weights.ndim == 1:
        for k, d in enumerate(offsets):
            out += weights[k] * ext[..., width - d: width - d + n]
    else:
        for k, d in enumerate(offsets):
            out += weights[:, k] * ext[..., width - d: width - d + n]
    return out


def ramp_weights(name, tau, h, n, j):
    """Half-hat weights of the cell left of node j, one per row.

    Data that jumps at node j is stored with its right value; on the cell to
    the left it really ramps to the left limit, so a hat-based convolution is
    corrected by (left - right) times these weights.
    """
    z = h * (np.arange(n) - j)
    return end_weights(name, np.asarray(tau, dtype=float), z, h, "right", False)


def convolve_grid(name, tau, h, data):
    """Whole-line convolution of grid data, constant extension beyond both ends.

    ``tau`` is a scalar or one value per grid row (frozen-coefficient kernels).
    ``data`` may be 1D or 2D with the grid along the last axis.
    """
    offsets, weights = banded_weights(name, tau, h)
    return apply_banded(offsets, weights, data)


def graded_mesh(T, n, q=2.0):
    """t_k = T (k/n)^q, k = 0..n."""
    if q < 1:
        raise ValueError("grading exponent q must be >= 1")
    return T * (np.arange(n + 1) / n) ** q


@dataclass
class ConvolutionPlan:
    times: np.ndarray  # includes t = 0
    h: float
    m: int = 0
    c: float = 1.0
    compensated: bool = False
    q: float = 2.0

    @classmethod
    def graded(cls, T, n, h, m=0, c=1.0, q=2.0, compensated=False):
        return cls(graded_mesh(T, n, q), h, m, c, compensated, q)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time mesh must be strictly increasing")


def _interval_operator(plan, s_lo, s_hi, data):
    c = plan.c
    if plan.m == 0:
        hi = convolve_grid("I", c * s_hi, plan.h, data)
        lo = convolve_grid("I", c * s_lo, plan.h, data) if s_lo > 0 else 0.0
        return (hi - lo) / c
    if plan.m == 1:
        hi = convolve_grid("J", c * s_hi, plan.h, data)
        lo = convolve_grid("J", c * s_lo, plan.h, data) if s_lo > 0 else 0.0
        return (hi - lo) / c
    hi = convolve_grid("K", c * s_hi, plan.h, data)
    lo = convolve_grid("K", c * s_lo, plan.h, data) if s_lo > 0 else data
    return (hi - lo) / c


def duhamel(plan, G):
    """int_0^t int d_x^m K(c (t - tau), x - y) G(tau, y) dy dtau on the plan's mesh.

    ``G`` has one row per mesh time (including t = 0). Returns an array of the
    same shape; row 0 is zero.
    """
    G = np.asarray(G, dtype=float)
    if G.shape[0] != len(plan.times):
        raise ValueError("G must be sampled on the plan's time mesh")
    if plan.m == 2 and not plan.compensated:
        raise ValueError("second-derivative Duhamel needs the compensated form (compensated=True)")
    times = plan.times
    out = np.zeros_like(G)
    mids = 0.5 * (G[1:] + G[:-1])
    for k in range(1, len(times)):
        t = times[k]
        if plan.m == 2:
            # split G(tau) = (G(tau) - G(t)) + G(t); the second piece integrates in closed form
            acc = (convolve_grid("K", plan.c * t, plan.h, G[k]) - G[k]) / plan.c
            for l in range(k):
                acc = acc + _interval_operator(plan, t - times[l + 1], t - times[l], mids[l] - G[k])
        else:
            acc = np.zeros(G.shape[1])
            for l in range(k):
                acc = acc + _interval_operator(plan, t - times[l + 1], t - times[l], mids[l])
        out[k] = acc
    return out


# Quadrature rules with integrable endpoint singularities

def _gauss(edges, order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    a = np.asarray(edges[:-1])[:, None]
    b = np.asarray(edges[1:])[:, None]
    return ((0.5 * (b - a) * nodes + 0.5 * (a + b)).ravel(),
            (0.5 * (b - a) * weights).ravel())


def two_sided_rule(t, panels=12, order=16, depth=1e-6):
    """Nodes/weights on (0, t) for integrands with (tau)^(-1/2) and (t - tau)^(-1/2) ends.

    Uses tau = t S(u), S(u) = 3u^2 - 2u^3, which absorbs both square-root ends,
    with Gauss panels in u refined geometrically towards u = 0 and u = 1.
    """
    left = np.geomspace(depth, 0.5, panels)
    edges = np.unique(np.concatenate([[0.0], left, 1.0 - left[::-1], [1.0]]))
    u, w = _gauss(edges, order)
    tau = t * u * u * (3.0 - 2.0 * u)
    jac = 6.0 * t * u * (1.0 - u)
    return tau, w * jac


def two_sided_rule_split(t, panels=12, order=16, depth=1e-6):
    """As two_sided_rule, also returning t - tau computed without cancellation."""
    tau, w = two_sided_rule(t, panels, order, depth)
    left = np.geomspace(depth, 0.5, panels)
    edges = np.unique(np.concatenate([[0.0], left, 1.0 - left[::-1], [1.0]]))
    u, _ = _gauss(edges, order)
    return tau, t * (1.0 - u) ** 2 * (1.0 + 2.0 * u), w


def _as_callable(h):
    if callable(h):
        return h
    times, values = (np.asarray(a, dtype=float) for a in h)
    return lambda s: np.interp(s, times, values)


def flux_history(c, h, x, t, panels=24, order=20):
    """Single-layer flux int_0^t (-d_x K)(c (t - tau), x) h(tau) dtau.

    ``h`` is a callable or a (times, values) pair (linear interpolation).
    The one-sided limit at x -> 0+ is h(t) / 2c, returned directly at x = 0;
    the function is odd in x.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    hf = _as_callable(h)
    if x == 0:
        return float(hf(t)) / (2.0 * c)
    if x < 0:
        return -flux_history(c, hf, -x, t, panels, order)
    lo = x / math.sqrt(c * t)
    # substitute tau~ = x / sqrt(c (t - tau)): smooth Gaussian weight on [lo, inf)
    span = TAIL_WINDOW
    edges = lo + span * np.concatenate([[0.0], np.geomspace(1e-12, 1.0, panels)])
    s, w = _gauss(edges, order)
    arg = np.clip(t - x * x / (c * s * s), 0.0, t)
    return float(np.sum(w * heat_kernel(1.0, s) * hf(arg)) / c)

