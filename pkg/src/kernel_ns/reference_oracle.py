"""Independent ground truth: finite differences, closed-form kernels, brute-force norms.

Nothing here imports the kernel-based modules. The finite-difference solvers
are backward Euler in time with conservative flux differencing:

- scalar unknowns (f, u, theta) live on nodes x_i;
- coefficients and the specific volume v live on faces x_{i+1/2}, so a jump
  located at a node separates faces cleanly;
- face coefficients are harmonic means of the coefficient sampled on the two
  half-faces, which reproduces the two-phase steady flux exactly;
- the domain ends carry constant-extension conditions (zero diffusive flux,
  forcing fluxes continued by their end values).
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.linalg import solve_banded


class OracleFailure(RuntimeError):
    pass


@dataclass
class FDConfig:
    nx: int
    nt: int
    relax_tol: float = 1e-10
    max_relax: int = 200


def _gauss(t, x):
    return np.exp(-x * x / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)


def transmission_green(c_plus, c_minus, t, x, y):
    """Closed-form two-phase Green's function G(t, x, y) (reflection/transmission form).

    In the variable x / sqrt(c) on each side the problem becomes the standard
    heat equation with conductivities sqrt(c_pm), whose Green's function is a
    direct wave plus a reflected and a transmitted image.
    """
    kp, km = math.sqrt(c_plus), math.sqrt(c_minus)
    X, Y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    refl_p = (kp - km) / (kp + km)
    refl_m = -refl_p
    trans_p = 2.0 * kp / (kp + km)
    trans_m = 2.0 * km / (kp + km)
    src_right = Y >= 0
    G = np.where(src_right & (X >= 0),
                 _gauss(c_plus * t, X - Y) + refl_p * _gauss(c_plus * t, X + Y), 0.0)
    G = np.where(src_right & (X < 0), trans_p * _gauss(t, X / km - Y / kp) / kp, G)
    G = np.where(~src_right & (X < 0),
                 _gauss(c_minus * t, X - Y) + refl_m * _gauss(c_minus * t, X + Y), G)
    G = np.where(~src_right & (X >= 0), trans_m * _gauss(t, X / kp - Y / km) / km, G)
    return G


def _face_coefficient(phi, x):
    h = x[1] - x[0]
    left = phi(x[:-1] + 0.25 * h)
    right = phi(x[1:] - 0.25 * h)
    return 2.0 * left * right / (left + right)


def _diffusion_bands(coef, h, dt):
    """Banded matrix of I - dt * D(coef D) with zero-flux ends.

    An end node owns a half cell, so its single face flux is divided by h / 2.
    """
    n = len(coef) + 1
    lower = np.zeros(n)
    upper = np.zeros(n)
    lower[1:] = coef / h ** 2
    upper[:-1] = coef / h ** 2
    upper[0] *= 2.0
    lower[-1] *= 2.0
    diag = 1.0 + dt * (lower + upper)
    ab = np.zeros((3, n))
    ab[0, 1:] = -dt * upper[:-1]
    ab[1] = diag
    ab[2, :-1] = -dt * lower[1:]
    return ab


def _face_divergence(face_values, h):
    """(F_{i+1/2} - F_{i-1/2}) / h at nodes; beyond the ends F is extended by a constant."""
    out = np.zeros(len(face_values) + 1)
    out[1:-1] = np.diff(face_values) / h
    return out


def fd_solve_linear(x, phi, f0, T, nt, F=None, R=None):
    """Backward-Euler oracle for d_t f = d_x(phi d_x f) + d_x F + R.

    ``phi`` and ``F`` are callables of x (F and R also of t: F(t, x)); F is
    evaluated on faces, R on nodes. Returns (times, slices) including t = 0.
    """
    x = np.asarray(x, dtype=float)
    h = x[1] - x[0]
    coef = _face_coefficient(phi, x)
    faces = 0.5 * (x[1:] + x[:-1])
    dt = T / nt
    ab = _diffusion_bands(coef, h, dt)
    f = np.array(f0, dtype=float)
    out = [f.copy()]
    for k in range(1, nt + 1):
        t = k * dt
        rhs = f.copy()
        if F is not None:
            rhs += dt * _face_divergence(F(t, faces), h)
        if R is not None:
            rhs += dt * R(t, x)
        f = solve_banded((1, 1), ab, rhs)
        if not np.all(np.isfinite(f)):
            raise OracleFailure("linear solve produced non-finite values")
        out.append(f.copy())
    return np.linspace(0.0, T, nt + 1), np.array(out)


def fd_solve_problem(problem, cfg):
    """Oracle run of a linear problem record on its own uniform grid of cfg.nx nodes.

    The record is read duck-typed: ``coefficient`` (callable of x, with x_min and
    x_max), optional ``f0`` / ``fbar0`` grid data, optional ``F`` / ``R`` sampled
    fields, and the horizon ``T``. Sampled data are interpolated linearly in x and t.
    Returns (x, times, slices) with t = 0 included.
    """
    coef = problem.coefficient
    x = np.linspace(coef.x_min, coef.x_max, cfg.nx)
    h = x[1] - x[0]
    f0 = np.zeros(cfg.nx)
    if getattr(problem, "f0", None) is not None:
        f0 += np.interp(x, problem.f0.x, problem.f0.values)
    if getattr(problem, "fbar0", None) is not None:
        bar = problem.fbar0
        f0 += (np.interp(x + 0.5 * h, bar.x, bar.values) - np.interp(x - 0.5 * h, bar.x, bar.values)) / h

    def sampled(fld):
        if fld is None:
            return None
        grid = np.linspace(fld.x_min, fld.x_max, fld.slices.shape[1])

        def at(t, pts):
            k = int(np.clip(np.searchsorted(fld.times, t) - 1, 0, len(fld.times) - 2))
            a, b = fld.times[k], fld.times[k + 1]
            s = np.clip((t - a) / (b - a), 0.0, 1.0)
            row = (1.0 - s) * fld.slices[k] + s * fld.slices[k + 1]
            return np.interp(pts, grid, row)
        return at

    times, slices = fd_solve_linear(x, coef, f0, problem.T, cfg.nt,
                                    sampled(getattr(problem, "F", None)), sampled(getattr(problem, "R", None)))
    return x, times, slices


def richardson(coarse, fine):
    """Second-order combination of backward-Euler runs at nt and 2 nt (fine subsampled)."""
    return 2.0 * fine[::2] - coarse


# Nonlinear systems

@dataclass
class FluidParams:
    mu: float = 1.0
    kappa: float = 1.0
    cv: float = 1.0  # heat capacity, e = cv theta
    K: float = 1.0  # ideal-gas constant, p = K theta / v


def fd_solve_psystem(x, v0, u0, pressure, T, nt, mu=1.0, relax_tol=1e-10, max_relax=200):
    """Oracle for v_t - u_x = 0, u_t + p(v)_x = (mu u_x / v)_x.

    ``v0`` and ``pressure`` are callables (v0 sampled on faces); ``u0`` is an
    array on nodes. Returns times, v on faces, u on nodes (t = 0 included).
    """
    x = np.asarray(x, dtype=float)
    h = x[1] - x[0]
    faces = 0.5 * (x[1:] + x[:-1])
    dt = T / nt
    v = v0(faces).astype(float)
    u = np.array(u0, dtype=float)
    vs, us = [v.copy()], [u.copy()]
    for _ in range(nt):
        v, u = _halving(lambda state, step: _psystem_step(*state, pressure, mu, h, step, relax_tol, max_relax),
                        (v, u), dt)
        vs.append(v.copy())
        us.append(u.copy())
    return np.linspace(0.0, T, nt + 1), np.array(vs), np.array(us)


MAX_STEP_HALVINGS = 4


def _halving(step_fn, state, dt, depth=0):
    """One step of size dt; on relaxation failure retry as two half steps, then give up."""
    try:
        return step_fn(state, dt)
    except OracleFailure:
        if depth >= MAX_STEP_HALVINGS:
            raise
        half = _halving(step_fn, state, 0.5 * dt, depth + 1)
        return _halving(step_fn, half, 0.5 * dt, depth + 1)


def _psystem_step(v, u, pressure, mu, h, dt, tol, max_relax):
    v_new = v.copy()
    u_new = u.copy()
    for _ in range(max_relax):
        ab = _diffusion_bands(mu / v_new, h, dt)
        rhs = u - dt * _face_divergence(pressure(v_new), h)
        u_next = solve_banded((1, 1), ab, rhs)
        v_next = v + dt * np.diff(u_next) / h
        change = max(np.max(np.abs(u_next - u_new)), np.max(np.abs(v_next - v_new)))
        u_new, v_new = u_next, v_next
        if np.min(v_new) <= 0 or not np.all(np.isfinite(u_new)):
            raise OracleFailure("relaxation left the admissible set (v <= 0)")
        if change < tol:
            return v_new, u_new
    raise OracleFailure("per-step relaxation did not converge")


def fd_solve_full(x, v0, u0, theta0, T, nt, params=FluidParams(), relax_tol=1e-10, max_relax=200):
    """Oracle for the polytropic system (p = K theta / v, e = cv theta).

    v_t - u_x = 0
    u_t + p_x = (mu u_x / v)_x
    theta_t + (p / cv) u_x - mu u_x^2 / (cv v) = (kappa theta_x / (cv v))_x
    """
    x = np.asarray(x, dtype=float)
    h = x[1] - x[0]
    faces = 0.5 * (x[1:] + x[:-1])
    dt = T / nt
    v = v0(faces).astype(float)
    u = np.array(u0, dtype=float)
    th = np.array(theta0, dtype=float)
    vs, us, ths = [v.copy()], [u.copy()], [th.copy()]
    for _ in range(nt):
        v, u, th = _halving(lambda state, step: _full_step(*state, params, h, step, relax_tol, max_relax),
                            (v, u, th), dt)
        vs.append(v.copy())
        us.append(u.copy())
        ths.append(th.copy())
    return np.linspace(0.0, T, nt + 1), np.array(vs), np.array(us), np.array(ths)


def _full_step(v, u, th, params, h, dt, tol, max_relax):
    mu, kap, cv, K = params.mu, params.kappa, params.cv, params.K
    v_new, u_new, th_new = v.copy(), u.copy(), th.copy()
    for _ in range(max_relax):
        th_face = 0.5 * (th_new[1:] + th_new[:-1])
        p_face = K * th_face / v_new
        ab_u = _diffusion_bands(mu / v_new, h, dt)
        u_next = solve_banded((1, 1), ab_u, u - dt * _face_divergence(p_face, h))
        v_next = v + dt * np.diff(u_next) / h
        ux = np.diff(u_next) / h
        # face source split half-and-half onto the two adjacent nodes
        src_face = (-p_face * ux + mu * ux * ux / v_next) / cv
        src = np.zeros(len(u))
        src[:-1] += 0.5 * src_face
        src[1:] += 0.5 * src_face
        src[0] *= 2.0
        src[-1] *= 2.0
        ab_t = _diffusion_bands(kap / (cv * v_next), h, dt)
        th_next = solve_banded((1, 1), ab_t, th + dt * src)
        change = max(np.max(np.abs(u_next - u_new)), np.max(np.abs(v_next - v_new)),
                     np.max(np.abs(th_next - th_new)))
        u_new, v_new, th_new = u_next, v_next, th_next
        if np.min(v_new) <= 0 or not np.all(np.isfinite(th_new)):
            raise OracleFailure("relaxation left the admissible set (v <= 0)")
        if change < tol:
            return v_new, u_new, th_new
    raise OracleFailure("per-step relaxation did not converge")


def faces_to_nodes(face_values):
    """Node values from face values: mean of the neighbours, one-sided at the ends."""
    fv = np.asarray(face_values)
    out = np.empty(fv.shape[:-1] + (fv.shape[-1] + 1,))
    out[..., 1:-1] = 0.5 * (fv[..., 1:] + fv[..., :-1])
    out[..., 0] = fv[..., 0]
    out[..., -1] = fv[..., -1]
    return out


# Brute-force norm oracles: plain loops over a refined sampling

def brute_lp(values, h, p):
    w = np.full(len(values), h)
    w[0] = w[-1] = h / 2
    if math.isinf(p):
        return float(np.max(np.abs(values)))
    return float(np.sum(w * np.abs(values) ** p) ** (1 / p))


def brute_sobolev(func, a, b, n, sigma, p):
    """Double sum over an n-point grid, diagonal dropped, plus the exact outside tails."""
    x = np.linspace(a, b, n)
    h = x[1] - x[0]
    v = func(x)
    s = 1 + sigma * p
    total = 0.0
    for i in range(n):
        d = np.abs(x - x[i])
        d[i] = np.inf
        total += h * h * np.sum(np.abs(v - v[i]) ** p / d ** s)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail_l = np.where(x > a, np.abs(v - v[0]) ** p * (x - a) ** (-sigma * p), 0.0)
        tail_r = np.where(x < b, np.abs(v - v[-1]) ** p * (b - x) ** (-sigma * p), 0.0)
    total += 2 * h * np.sum(tail_l + tail_r) / (sigma * p)
    return float(total ** (1 / p))


def brute_xt(field, times, x, sigma, p, alpha):
    """sup_s s^sigma |f(s)| + sup_{s<t} s^(sigma+alpha) |f(t)-f(s)| / (t-s)^alpha, by loops."""
    h = x[1] - x[0]
    slices = [field(t, x) for t in times]
    sup_term = max(t ** sigma * brute_lp(f, h, p) for t, f in zip(times, slices))
    hol = 0.0
    for a in range(len(times)):
        for b in range(a + 1, len(times)):
            s, t = times[a], times[b]
            hol = max(hol, s ** (sigma + alpha) * brute_lp(slices[b] - slices[a], h, p) / (t - s) ** alpha)
    return sup_term + hol


def brute_yt(field, times, x, alpha):
    h = x[1] - x[0]
    slices = [field(t, x) for t in times]
    sup_term = max(brute_lp(f, h, math.inf) for f in slices)
    hol = 0.0
    for a in range(len(times)):
        for b in range(a + 1, len(times)):
            s, t = times[a], times[b]
            hol = max(hol, s ** alpha * brute_lp(slices[b] - slices[a], h, math.inf) / (t - s) ** alpha)
    return sup_term + hol


def brute_lpt(field, times, x, p):
    h = x[1] - x[0]
    per = np.array([brute_lp(field(t, x), h, p) ** p for t in times])
    w = np.zeros(len(times))
    dt = np.diff(times)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    w[0] += times[0]
    return float(np.sum(w * per) ** (1 / p))


def brute_zt(wx, theta, thetax, times, x, alpha):
    """Seven-term sum with analytic derivative fields supplied by the caller."""
    return (brute_lpt(wx, times, x, 2.0) + brute_xt(wx, times, x, 0.5, 2.0, alpha)
            + brute_xt(wx, times, x, 0.75, math.inf, alpha)
            + brute_lpt(theta, times, x, 2.0) + brute_xt(theta, times, x, 0.5, 2.0, alpha)
            + brute_lpt(thetax, times, x, 1.2) + brute_xt(thetax, times, x, 5 / 6, 1.2, alpha))


def neumann_layer_reference(c, h, x, t):
    """int_0^t (x / (2 c s)) K(c s, x) h(t - s) ds by adaptive quadrature."""
    from scipy.integrate import quad

    def integrand(s):
        return x / (2 * c * s) * _gauss(c * s, x) * h(t - s)

    pts = [min(t, x * x / c * f) for f in (0.01, 0.1, 1.0)]
    return quad(integrand, 0.0, t, points=sorted(set(pts)), limit=400, epsabs=1e-14, epsrel=1e-12)[0]
