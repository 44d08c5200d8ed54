"""Linear divergence-form problem with a piecewise coefficient.

    d_t f - d_x(phi d_x f) = d_x F + R,   f(0) = d_x fbar0 (+ f0)

The solver marches over a graded time mesh and restarts the kernel
representation from f(t_k) on every step:

- away from the jumps the coefficient is frozen at the evaluation node,
  phi_i, and the remainder d_x((phi - phi_i) f_x) is carried as extra
  divergence forcing (the parametrix error term);
- within the plateau radius of a jump the exact two-phase kernel is used with
  constant values c_pm, the remainder (phi - c_pm) f_x is again divergence
  forcing, and the interface flux mismatch of the half-line solutions is
  cancelled by a single-layer boundary term.

Both error terms depend on f_x at the new time level, so each step runs an
inner Picard iteration on f_x. Forcing is averaged over the step (trapezoid);
the first step uses right-end values only, which keeps rough data and
singular-at-zero forcing out of the quadrature.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .function_spaces import (
    GridFunction,
    SpaceTimeField,
    derivative,
    holder_seminorm,
    time_weights,
)
from .kernel_core import heat_kernel
from .singular_quadrature import (
    apply_banded,
    apply_bubbles,
    band_width,
    banded_bubble_weights,
    banded_weights,
    ramp_weights,
    bubble_weights,
    cell_curvature,
    graded_mesh,
    segment_matrix,
    two_sided_rule_split,
)
from .transmission import boundary_coefficients

PLATEAU_TOL = 1e-12


class HorizonTooLarge(RuntimeError):
    """The inner (or outer) Picard iteration stopped contracting; shrink T."""

    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class CoefficientError(ValueError):
    pass


@dataclass
class PiecewiseCoefficient:
    """phi sampled on the grid; a jump node stores the right-hand value."""

    x_min: float
    x_max: float
    values: np.ndarray
    jumps: tuple = ()
    eps: float = 0.1
    c0: float = None
    lipschitz: float = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.jumps = tuple(sorted(float(a) for a in self.jumps))
        n = len(self.values)
        h = (self.x_max - self.x_min) / (n - 1)
        if self.eps <= 0:
            raise CoefficientError("plateau radius eps must be positive")
        for a, b in zip(self.jumps, self.jumps[1:]):
            if b - a < 10 * self.eps - 1e-12:
                raise CoefficientError(f"jumps at {a} and {b} closer than 10*eps = {10 * self.eps}")
        idx = []
        for a in self.jumps:
            k = (a - self.x_min) / h
            if abs(k - round(k)) > 1e-8 or not 2 <= round(k) <= n - 3:
                raise CoefficientError(f"jump {a} must sit on an interior grid node")
            idx.append(int(round(k)))
        self.jump_index = tuple(idx)
        if np.any(self.values <= 0) or not np.all(np.isfinite(self.values)):
            raise CoefficientError("phi must be finite and positive")
        if self.c0 is None:
            self.c0 = float(min(self.values.min(), 1.0 / self.values.max()))
        if np.any(self.values < self.c0 - 1e-12) or np.any(self.values > 1.0 / self.c0 + 1e-12):
            raise CoefficientError(f"ellipticity c0 <= phi <= 1/c0 violated for c0 = {self.c0}")
        x = self.x
        for a, j in zip(self.jumps, idx):
            left = (x >= a - self.eps - 1e-12) & (x < a)
            right = (x >= a) & (x <= a + self.eps + 1e-12)
            for side, mask in (("left", left), ("right", right)):
                vals = self.values[mask]
                if np.ptp(vals) > PLATEAU_TOL * max(1.0, abs(vals[0])):
                    raise CoefficientError(f"phi is not constant on the {side} plateau of the jump at {a}")
        if self.lipschitz is None:
            d = np.abs(np.diff(self.values)) / h
            for j in idx:
                d[j - 1] = 0.0
            self.lipschitz = float(d.max()) if len(d) else 0.0

    @classmethod
    def from_function(cls, phi, x_min, x_max, n, jumps=(), eps=0.1, c0=None):
        """Sample ``phi`` on the nodes; phi(a) must return the right limit at a jump."""
        x = np.linspace(x_min, x_max, n)
        return cls(x_min, x_max, phi(x), jumps, eps, c0)

    @classmethod
    def step(cls, c_plus, c_minus, x_min, x_max, n, jump=0.0, eps=None):
        x = np.linspace(x_min, x_max, n)
        if eps is None:
            eps = (x_max - x_min) / 20.0
        return cls(x_min, x_max, np.where(x >= jump, c_plus, c_minus), (jump,), eps)

    @property
    def n(self):
        return len(self.values)

    @property
    def h(self):
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.n)

    @property
    def plus_values(self):
        return [float(self.values[j]) for j in self.jump_index]

    @property
    def minus_values(self):
        return [float(self.values[j - 1]) for j in self.jump_index]

    def __call__(self, x):
        """Evaluate phi off the grid: linear between nodes, the left value just before a jump."""
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.x, self.values)
        for a, j in zip(self.jumps, self.jump_index):
            out = np.where((x > a - self.h) & (x < a), self.values[j - 1], out)
        return out


@dataclass
class LinearProblem:
    coefficient: PiecewiseCoefficient
    fbar0: GridFunction = None
    F: SpaceTimeField = None  # on the mesh times, t = 0 included
    R: SpaceTimeField = None
    T: float = 1.0
    f0: GridFunction = None  # optional regular part of the initial data
    n_t: int = 64
    q: float = 2.0
    resolution_floor: float = 1.0  # earliest kept time, in units of h^2 / min(phi)

    def __post_init__(self):
        if self.fbar0 is None and self.f0 is None:
            raise ValueError("initial data needs fbar0 or f0")
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        n = self.coefficient.n
        for name in ("fbar0", "f0"):
            g = getattr(self, name)
            if g is not None and g.n != n:
                raise ValueError(f"{name} must live on the coefficient grid")
        times = self.times
        for name in ("F", "R"):
            fld = getattr(self, name)
            if fld is None:
                continue
            if fld.slices.shape != (len(times), n) or not np.allclose(fld.times, times):
                raise ValueError(f"{name} must be sampled on the problem's time mesh")
            # the t = 0 row may be undefined for rough data; it is never used
            if not np.all(np.isfinite(fld.slices[1:])):
                raise ValueError(f"{name} has non-finite values")

    @property
    def times(self):
        """Graded mesh, merging levels so that no step is shorter than the grid's diffusive resolution.

        A step whose kernel is narrower than h cannot be sampled on the grid, and
        restarting after it loses the unresolved interface layer.
        """
        mesh = graded_mesh(self.T, self.n_t, self.q)
        coef = self.coefficient
        floor = self.resolution_floor * coef.h ** 2 / float(coef.values.min())
        floor = min(floor, self.T)
        kept = [0.0]
        for t in mesh[1:-1]:
            if t - kept[-1] >= floor and self.T - t >= floor:
                kept.append(t)
        kept.append(self.T)
        return np.array(kept)


@dataclass
class LinearSolution:
    field: SpaceTimeField  # times without 0, with dx slices
    inner_ratios: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)

    @property
    def max_inner_ratio(self):
        vals = [r for rs in self.inner_ratios for r in rs]
        return max(vals) if vals else 0.0


def jump_derivative(values, h, jump_index):
    """Fourth-order differences that never reach across a jump node.

    Returns the derivative (right limit stored at each jump node) and the left
    limits at the jump nodes.
    """
    f = np.asarray(values, dtype=float)
    cuts = [0] + list(jump_index) + [f.shape[-1] - 1]
    out = np.empty_like(f)
    left = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        seg = derivative(f[..., a:b + 1], h)
        out[..., a:b + 1] = seg
        if b != cuts[-1]:
            left.append(seg[..., -1])
    # the later segment overwrote each jump node, so it holds the right limit
    return out, left


def left_limit(values, j):
    """Left limit at node j by cubic extrapolation from the four nodes before it."""
    v = values
    return 4.0 * v[..., j - 1] - 6.0 * v[..., j - 2] + 4.0 * v[..., j - 3] - v[..., j - 4]


def _update_norm(update, h, t):
    # discrete X^{5/6, 6/5}-type weight at the new time level
    p = 1.2
    w = np.full(update.shape[-1], h)
    w[0] = w[-1] = 0.5 * h
    return t ** (5.0 / 6.0) * float(np.sum(w * np.abs(update) ** p) ** (1.0 / p))


def _image(name, tau, xi, h, n):
    # direct minus mirrored kernel; odd image for even kernels, even image for odd ones
    direct = segment_matrix(name, tau, xi, 0.0, h, n, right_tail=True)
    mirror = segment_matrix(name, tau, -np.asarray(xi), 0.0, h, n, right_tail=True)
    return direct - mirror


def _image_bubbles(tau, xi, h, n_cells):
    y = h * np.arange(n_cells)
    xi = np.asarray(xi, dtype=float)[:, None]
    return bubble_weights("K", tau, xi - y, h) - bubble_weights("K", tau, -xi - y, h)


class _JumpStep:
    """Precomputed two-phase operators for one jump and one time step."""

    def __init__(self, coef, jump_number, dt, radius, rough, panels, order):
        j = coef.jump_index[jump_number]
        a = coef.jumps[jump_number]
        h = coef.h
        x = coef.x
        self.j = j
        cp = coef.plus_values[jump_number]
        cm = coef.minus_values[jump_number]
        self.c = (cp, cm)
        Cp, Cm = boundary_coefficients(cp, cm)
        D = (-Cp, -Cm)
        s, rest, w = two_sided_rule_split(dt, panels, order)
        self.local_right = np.nonzero((x >= a) & (x <= a + radius + 1e-12))[0]
        self.local_left = np.nonzero((x < a) & (x >= a - radius - 1e-12))[0]
        n_avail = (coef.n - j, j + 1)
        self.width = []
        self.flux, self.value = [], []
        for side, (c, d) in enumerate(zip(self.c, D)):
            local = self.local_right if side == 0 else self.local_left
            # data must reach one kernel band past the farthest local node
            m = min(n_avail[side], len(local) + band_width(c * dt, h) + 4)
            self.width.append(m)
            zero = np.zeros_like(s)
            data_kernel = "ddK" if rough else "dK"
            flux = {
                "data": 2.0 * c * segment_matrix(data_kernel, c * s, zero, 0.0, h, m, right_tail=True),
                "F": 2.0 * segment_matrix("K", c * s, zero, 0.0, h, m, right_tail=True),
                "R": 2.0 * segment_matrix("J", c * s, zero, 0.0, h, m, right_tail=True),
            }
            xi = np.abs(x[local] - a)
            if not rough:
                flux["bubble"] = 2.0 * c * bubble_weights("dK", c * s[:, None], -h * np.arange(m - 1)[None, :], h)
            value = {
                "data": _image("dK" if rough else "K", c * dt, xi, h, m),
                "F": _image("J", c * dt, xi, h, m) / c,
                "R": _image("I", c * dt, xi, h, m) / c,
                "layer": d * heat_kernel(c * rest[None, :], xi[:, None]) * w[None, :],
            }
            if not rough:
                value["bubble"] = _image_bubbles(c * dt, xi, h, m - 1)
            self.flux.append(flux)
            self.value.append(value)

    def halves(self, arr, left_value):
        """(right half, mirrored left half) of grid data; ``left_value`` replaces the jump node."""
        j = self.j
        right = arr[j:j + self.width[0]]
        left = arr[j::-1][: self.width[1]].copy()
        left[0] = left_value
        return right, left

    def cell_halves(self, cells):
        j = self.j
        return cells[j:j + self.width[0] - 1], cells[j - 1::-1][: self.width[1] - 1]

    def evaluate(self, data, Ftilde, R, cells=None):
        """Two-phase values on the local nodes. Each argument is a (right, mirrored-left) pair,
        with the mirrored divergence forcing already sign-flipped."""
        phi_flux = []
        for side in (0, 1):
            fl = self.flux[side]
            total = fl["data"] @ data[side] + fl["F"] @ Ftilde[side] + fl["R"] @ R[side]
            if cells is not None:
                total = total + fl["bubble"] @ cells[side]
            phi_flux.append(total)
        # total flux on the left is minus the mirrored flux
        mismatch = phi_flux[0] + phi_flux[1]
        out = []
        for side in (0, 1):
            v = self.value[side]
            val = v["data"] @ data[side] + v["F"] @ Ftilde[side] + v["R"] @ R[side] + v["layer"] @ mismatch
            if cells is not None:
                val = val + v["bubble"] @ cells[side]
            out.append(val)
        return out


def solve_linear(problem, tol_inner=1e-8, max_inner=60, radius=None, panels=10, order=12, curvature=True):
    """March the linear problem over its graded mesh; returns a LinearSolution.

    ``radius`` is the half-width of the two-phase zone around each jump
    (defaults to the plateau radius eps). ``curvature=False`` drops the
    quadratic cell correction and leaves the plain piecewise-linear steps.
    """
    coef = problem.coefficient
    phi = coef.values
    h = coef.h
    n = coef.n
    radius = coef.eps if radius is None else radius
    if radius > coef.eps + 1e-12:
        raise ValueError("two-phase radius cannot exceed the plateau radius")
    times = problem.times
    jumps = coef.jump_index

    f_prev = None if problem.f0 is None else problem.f0.values.copy()
    fx_prev = np.zeros(n)
    fxl_prev = np.zeros(len(jumps))
    slices, dslices, ratios_all, iters_all = [], [], [], []

    for k in range(len(times) - 1):
        t_new = times[k + 1]
        dt = t_new - times[k]
        first = k == 0
        rough = first and problem.fbar0 is not None
        tau = phi * dt
        offK, wK = banded_weights("K", tau, h)
        offJ, wJ = banded_weights("J", tau, h)

        # forcing averaged over the step; right-end values on the first step
        def averaged(field_):
            if field_ is None:
                return np.zeros(n)
            if first:
                return field_.slices[1].copy()
            return 0.5 * (field_.slices[k] + field_.slices[k + 1])

        Fbar = averaged(problem.F)
        Rbar = averaged(problem.R)

        base = np.zeros(n)
        cells = None
        if first and problem.fbar0 is not None:
            offD, wD = banded_weights("dK", tau, h)
            base += apply_banded(offD, wD, problem.fbar0.values)
        data_now = problem.f0.values if first and problem.f0 is not None else (None if first else f_prev)
        if data_now is not None and not curvature:
            base += apply_banded(offK, wK, data_now)
        elif data_now is not None:
            cells = cell_curvature(data_now, h, jumps)
            offB, wB = banded_bubble_weights("K", tau, h)
            base += apply_banded(offK, wK, data_now) + apply_bubbles(offB, wB, cells)
        # hat weights smear a jump over the cell left of it; ramp weights undo that
        rampJ = [ramp_weights("J", tau, h, n, j) for j in jumps]
        if problem.F is not None:
            base += apply_banded(offJ, wJ, Fbar) / phi
            for j, w in zip(jumps, rampJ):
                base += (left_limit(Fbar, j) - Fbar[j]) * w / phi
        if problem.R is not None:
            offI, wI = banded_weights("I", tau, h)
            base += apply_banded(offI, wI, Rbar) / phi
            for j in jumps:
                base += (left_limit(Rbar, j) - Rbar[j]) * ramp_weights("I", tau, h, n, j) / phi

        steps = [_JumpStep(coef, q, dt, radius, rough, panels, order) for q in range(len(jumps))]
        if rough and problem.f0 is not None and steps:
            raise ValueError("fold f0 into fbar0 when the coefficient jumps")

        # Picard on f_x at the new level
        fx_new = np.zeros(n) if first else fx_prev.copy()
        fxl_new = np.zeros(len(jumps)) if first else fxl_prev.copy()
        ratios, last_update = [], None
        slow = 0
        for sweep in range(max_inner):
            fx_bar = fx_new if first else 0.5 * (fx_prev + fx_new)
            f_new = base + apply_banded(offJ, wJ, phi * fx_bar) / phi - apply_banded(offJ, wJ, fx_bar)
            fxl_bar = fxl_new if first else 0.5 * (fxl_prev + fxl_new)
            for q, (j, w) in enumerate(zip(jumps, rampJ)):
                jump_fx = fxl_bar[q] - fx_bar[j]
                jump_flux = coef.minus_values[q] * fxl_bar[q] - phi[j] * fx_bar[j]
                f_new += (jump_flux / phi - jump_fx) * w
            for st in steps:
                j = st.j
                cp, cm = st.c
                if rough:
                    # mirrored data is d_xi of -fbar0(-xi)
                    data_r, data_l = st.halves(problem.fbar0.values, problem.fbar0.values[j])
                    data = (data_r, -data_l)
                else:
                    data = st.halves(f_prev, f_prev[j])
                # F~ = F + (phi - c_pm) f_x; on the plateau it is F itself, so the
                # jump node takes the one-sided limits of F
                Ft_r, _ = st.halves(Fbar + (phi - cp) * fx_bar, 0.0)
                _, Ft_l = st.halves(Fbar + (phi - cm) * fx_bar, left_limit(Fbar, j))
                R_r, R_l = st.halves(Rbar, left_limit(Rbar, j))
                right, left = st.evaluate(data, (Ft_r, -Ft_l), (R_r, R_l),
                                          None if cells is None else st.cell_halves(cells))
                f_new[st.local_right] = right
                f_new[st.local_left] = left
            fx_next, fxl_next = jump_derivative(f_new, h, jumps)
            update = _update_norm(fx_next - fx_new, h, t_new)
            scale = _update_norm(fx_next, h, t_new) + 1e-300
            fx_new = fx_next
            fxl_new = np.array(fxl_next, dtype=float).reshape(len(jumps))
            if last_update is not None and last_update > 0:
                ratio = update / last_update
                ratios.append(ratio)
                slow = slow + 1 if ratio >= 0.9 else 0
                if slow >= 3:
                    raise HorizonTooLarge(
                        f"inner iteration not contracting at t = {t_new:.3g}: update ratio {ratio:.3g} "
                        f"for 3 sweeps; reduce T", ratio)
            last_update = update
            if update <= tol_inner * scale:
                break
        else:
            raise HorizonTooLarge(f"inner iteration hit {max_inner} sweeps at t = {t_new:.3g}",
                                  ratios[-1] if ratios else None)
        if not np.all(np.isfinite(f_new)):
            raise HorizonTooLarge(f"non-finite solution at t = {t_new:.3g}")
        slices.append(f_new)
        dslices.append(fx_new)
        ratios_all.append(ratios)
        iters_all.append(sweep + 1)
        f_prev, fx_prev, fxl_prev = f_new, fx_new, fxl_new

    fld = SpaceTimeField(coef.x_min, coef.x_max, times[1:], np.array(slices), np.array(dslices))
    return LinearSolution(fld, ratios_all, iters_all)


# Diagnostics

@dataclass
class ResidualReport:
    times: np.ndarray  # interior mesh times where d_t f is centred
    residual: np.ndarray  # zero on excluded nodes
    l1_norm: float  # int ||res(t)||_L1 dt over the interior times
    interface_max: float  # largest |res| on the excluded nodes next to jumps


def _time_derivative(times, slices, width=5):
    """d/dt at the interior levels by Lagrange differentiation on a sliding stencil."""
    n = len(times)
    width = min(width, n)
    out = np.empty((n - 2, slices.shape[1]))
    for k in range(1, n - 1):
        lo = min(max(k - width // 2, 0), n - width)
        idx = np.arange(lo, lo + width)
        dt = times[idx] - times[k]
        # weights w with sum w_i dt_i^m = [m == 1]
        V = np.vander(dt, width, increasing=True).T
        rhs = np.zeros(width)
        rhs[1] = 1.0
        w = np.linalg.solve(V, rhs)
        out[k - 1] = w @ slices[idx]
    return out


def residual_check(problem, field_, exclude=4):
    """d_t f - d_x(phi f_x) - d_x F - R on interior nodes, by high-order differences.

    ``field_`` is a SpaceTimeField on the problem mesh without t = 0 (as returned
    in LinearSolution.field). Nodes within ``exclude`` cells of a jump or of the
    domain ends are left out of the norm; the jump neighbourhoods are reported
    separately.
    """
    coef = problem.coefficient
    h = coef.h
    jumps = coef.jump_index
    times = field_.times
    if len(times) < 3:
        raise ValueError("the residual check needs at least three time levels")
    fx = field_.dx if field_.dx is not None else jump_derivative(field_.slices, h, jumps)[0]
    flux = coef.values * fx
    flux_x, _ = jump_derivative(flux, h, jumps)
    res = _time_derivative(times, field_.slices) - flux_x[1:-1]
    mesh = problem.times
    offset = len(mesh) - len(times)
    for forcing, is_div in ((problem.F, True), (problem.R, False)):
        if forcing is None:
            continue
        rows = forcing.slices[offset + 1: offset + len(times) - 1]
        res -= jump_derivative(rows, h, jumps)[0] if is_div else rows
    n = coef.n
    keep = np.ones(n, dtype=bool)
    keep[:exclude] = keep[-exclude:] = False
    near = np.zeros(n, dtype=bool)
    for j in jumps:
        near[max(j - exclude, 0): j + exclude + 1] = True
    keep &= ~near
    interface_max = float(np.max(np.abs(res[:, near]))) if near.any() else 0.0
    res = np.where(keep, res, 0.0)
    mid = times[1:-1]
    l1 = np.sum(np.abs(res), axis=1) * h
    w = time_weights(mid)
    return ResidualReport(mid, res, float(np.sum(w * l1)), interface_max)


def smoothing_estimate_harness(problem, solution, gamma=0.1):
    """Both sides of the implemented smoothing estimates, with ratios.

    gradient_smoothing: sup_t t^(1-gamma) |f_x|_inf  vs  [fbar0]_{C^2gamma} + sup_t t^(1-gamma) |F_x|_inf
    value_smoothing:    sup_t t^(1/2-gamma) |f|_inf  vs  the same right-hand side
    Only meaningful for R = 0.
    """
    fld = solution.field
    h = fld.h
    rhs = 0.0
    if problem.fbar0 is not None:
        rhs += holder_seminorm(problem.fbar0, 2 * gamma)
    if problem.F is not None:
        Fx = jump_derivative(problem.F.slices[1:], h, problem.coefficient.jump_index)[0]
        t = problem.times[1:]
        rhs += float(np.max(t ** (1 - gamma) * np.max(np.abs(Fx), axis=1)))
    t = fld.times
    rows = []
    lhs_grad = float(np.max(t ** (1 - gamma) * np.max(np.abs(fld.dx), axis=1)))
    lhs_val = float(np.max(t ** (0.5 - gamma) * np.max(np.abs(fld.slices), axis=1)))
    for name, lhs in (("gradient_smoothing", lhs_grad), ("value_smoothing", lhs_val)):
        if lhs == 0.0:
            ratio = 0.0
        elif rhs == 0.0:
            ratio = math.inf
        else:
            ratio = lhs / rhs
        rows.append({"inequality": name, "lhs": lhs, "rhs": rhs, "ratio": ratio})
    return rows


def hardy_ratio(values, x, p):
    """LHS / RHS of the Hardy-type bound int (int h(x) / (x + y) dx)^p dy <= C_p int h^p on a grid.

    Returns (ratio, bound) with bound = p^p / (p-1)^p + p^p.
    """
    values = np.asarray(values, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(values < 0):
        raise ValueError("the Hardy spot-check needs non-negative h")
    w = np.gradient(x)
    y = x
    inner = np.array([np.sum(w * values / (x + yy)) for yy in y])
    lhs = np.sum(w * inner ** p)
    rhs = np.sum(w * values ** p)
    return float(lhs / rhs), p ** p / (p - 1) ** p + p ** p


def jump_corrected_mass(values, h, jump_index=()):
    """Trapezoid integral with the h^2/12 endpoint correction at each derivative jump.

    A kink at a jump node costs the plain trapezoid rule h^2/12 times the jump in f_x.
    """
    f = np.asarray(values, dtype=float)
    total = (f.sum(axis=-1) - 0.5 * (f[..., 0] + f[..., -1])) * h
    if len(jump_index):
        d, left = jump_derivative(f, h, jump_index)
        for j, lim in zip(jump_index, left):
            total = total + h * h / 12.0 * (d[..., j] - lim)
    return total
