"""Command line entry point: ``kernel-ns <subcommand> --config scenario.json --out dir``.

Exit codes: 0 success, 2 no contraction / ball exit, 3 invalid configuration.
"""

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import config as cfgmod
from . import output, plotting
from .function_spaces import NormSpec, SpaceTimeField, evaluate_spec
from .kernel_core import estimate_ratio_sweep, identity_suite, ratio_drift
from .ns_fixed_point import (
    BallExit,
    DataTooRough,
    InvalidData,
    NoContraction,
    contraction_probe,
    prepare,
    random_ball_pair,
    run_fixed_point,
)
from .parabolic import HorizonTooLarge, jump_corrected_mass, residual_check, solve_linear
from .reference_oracle import (
    FDConfig,
    FluidParams,
    faces_to_nodes,
    fd_solve_full,
    fd_solve_problem,
    fd_solve_psystem,
    richardson,
)

log = logging.getLogger("kernel_ns")

EXIT_OK = 0
EXIT_NO_CONTRACTION = 2
EXIT_INVALID = 3

# convergence verdict: finest-level relative error and fitted order in h (nt refined jointly)
ERROR_THRESHOLD = 2e-2
ORDER_THRESHOLD = 0.9


class Run:
    """Shared state of one CLI invocation: parsed config, output directory, hash."""

    def __init__(self, cfg, out_dir, base_dir, seed=None):
        self.cfg = cfg
        self.out = Path(out_dir if out_dir is not None else cfg.output.dir)
        self.base_dir = base_dir
        self.seed = cfg.seed if seed is None else seed
        self.hash = cfg.config_hash()

    def csv(self, name, times, x, named):
        output.write_field_csv(self.out / name, times, x, named, self.hash)

    def json(self, name, payload):
        output.write_json(self.out / name, payload, self.hash)

    def plot(self, fn, name, *args, **kwargs):
        if self.cfg.output.plots:
            self.out.mkdir(parents=True, exist_ok=True)
            fn(self.out / name, *args, **kwargs)


# Pipelines

def solve_fluid(run):
    cfg = run.cfg
    scenario = cfgmod.fluid_scenario(cfg, run.base_dir)
    res = run_fixed_point(scenario)
    g = scenario.data.v0
    # the solution CSV carries the computed levels; t = 0 is the data itself
    times = res.times
    named = {"v": res.v[1:], "u": res.u.slices}
    if res.theta is not None:
        named["theta"] = res.theta.slices
    run.csv("solution.csv", times, g.x, named)
    diag = res.diagnostics()
    diag["system"] = cfg.system
    diag["jumps"] = list(cfg.data.jumps)
    diag["lambda0"] = scenario.data.lam0
    diag["momentum_change"] = float(jump_corrected_mass(res.u.slices[-1], g.h, _jump_nodes(g, cfg.data.jumps))
                                    - _initial_momentum(scenario))
    run.json("diagnostics.json", diag)
    if cfg.output.snapshots:
        for k in range(len(times)):
            run.csv(f"snapshot_{k:04d}.csv", times[k:k + 1], g.x, {name: arr[k:k + 1] for name, arr in named.items()})
    run.plot(plotting.solution_profiles, "solution.png", times, g.x, named, title=f"{cfg.system}, T = {res.T:.4g}")
    run.plot(plotting.iteration_history, "iterations.png", res.updates, res.ratios, 0.5)
    if cfg.oracle.enabled:
        _fluid_oracle(run, scenario, res.T, compare=(times, g.x, named))
    log.info("fixed point converged in %d iterations at T = %g", res.iterations, res.T)
    return EXIT_OK


def _jump_nodes(g, jumps):
    return [int(round((a - g.x_min) / g.h)) for a in jumps]


def _initial_momentum(scenario):
    d = scenario.data
    if d.u0 is not None:
        return float(jump_corrected_mass(d.u0.values, d.u0.h))
    bar = d.ubar0
    return float(bar.values[-1] - bar.values[0])


def _fluid_oracle(run, scenario, T, compare=None):
    """Run the finite-difference oracle for the fluid scenario and optionally compare."""
    cfg = run.cfg
    grid = cfg.grid
    x = np.linspace(grid.x_min, grid.x_max, cfg.oracle.nx)
    d = cfg.data
    v0 = lambda pts: d.v0.sample(pts, run.base_dir)  # noqa: E731
    if d.u0 is not None:
        u0 = d.u0.sample(x, run.base_dir)
    else:
        hx = x[1] - x[0]
        bar = d.ubar0
        u0 = (bar.sample(x + 0.5 * hx, run.base_dir) - bar.sample(x - 0.5 * hx, run.base_dir)) / hx
    nt = cfg.oracle.nt
    if cfg.system == "psystem":
        pressure = _oracle_pressure(scenario)
        _, va, ua = fd_solve_psystem(x, v0, u0, pressure, T, nt, scenario.mu)
        times, vb, ub = fd_solve_psystem(x, v0, u0, pressure, T, 2 * nt, scenario.mu)
        named = {"v": faces_to_nodes(richardson(va, vb)), "u": richardson(ua, ub)}
    else:
        if d.theta0 is not None:
            th0 = d.theta0.sample(x, run.base_dir)
        else:
            hx = x[1] - x[0]
            bar = d.thetabar0
            th0 = (bar.sample(x + 0.5 * hx, run.base_dir) - bar.sample(x - 0.5 * hx, run.base_dir)) / hx
        params = FluidParams(scenario.mu, scenario.kappa, scenario.cv, scenario.pressure.K)
        _, va, ua, ta = fd_solve_full(x, v0, u0, th0, T, nt, params)
        times, vb, ub, tb = fd_solve_full(x, v0, u0, th0, T, 2 * nt, params)
        named = {"v": faces_to_nodes(richardson(va, vb)), "u": richardson(ua, ub), "theta": richardson(ta, tb)}
    coarse_times = np.linspace(0.0, T, nt + 1)
    run.csv("oracle.csv", coarse_times, x, named)
    run.plot(plotting.solution_profiles, "oracle.png", coarse_times, x, named, title="finite-difference oracle")
    report = {"oracle_nx": cfg.oracle.nx, "oracle_nt": nt, "T": T}
    if compare is not None:
        report["final_time_errors"] = _compare_final(compare, (coarse_times, x, named))
        run.json("oracle_report.json", report)
    return coarse_times, x, named


def _oracle_pressure(scenario):
    if scenario.pressure.kind == "polytropic_ideal":
        K = scenario.pressure.K
        return lambda v: K / v
    return scenario.pressure


def _compare_final(solution, reference):
    """Relative max-norm error of each field at the final time, reference interpolated to the solver grid."""
    _, x, named = solution
    _, xr, ref = reference
    out = {}
    for name, arr in named.items():
        if name not in ref:
            continue
        target = np.interp(x, xr, ref[name][-1])
        scale = max(float(np.max(np.abs(target))), 1e-300)
        out[name] = float(np.max(np.abs(arr[-1] - target))) / scale
    return out


def _oracle_linear(run, nt=None):
    """FD oracle of the linear scenario with the data sampled directly on the oracle grid."""
    cfg = run.cfg
    data = cfg.model_dump()
    data["grid"]["nx"] = cfg.oracle.nx
    fine = cfgmod.ScenarioConfig.model_validate(data)
    prob = cfgmod.linear_problem(fine, run.base_dir)
    return fd_solve_problem(prob, FDConfig(cfg.oracle.nx, nt or cfg.oracle.nt))


def solve_linear_cmd(run):
    cfg = run.cfg
    prob = cfgmod.linear_problem(cfg, run.base_dir)
    sol = solve_linear(prob)
    coef = prob.coefficient
    fld = sol.field
    run.csv("solution.csv", fld.times, coef.x, {"f": fld.slices})
    mass = jump_corrected_mass(fld.slices, coef.h, coef.jump_index)
    diag = {
        "inner_iterations": sol.inner_iterations,
        "max_inner_ratio": sol.max_inner_ratio,
        "residual_L1": None,
        "residual_interface": None,
        "mass": mass,
        "times": fld.times,
    }
    if len(fld.times) >= 3:
        report = residual_check(prob, fld)
        diag["residual_L1"] = report.l1_norm
        diag["residual_interface"] = report.interface_max
    else:
        log.warning("time mesh collapsed to %d level(s) at this resolution; residual skipped", len(fld.times))
    run.json("diagnostics.json", diag)
    run.plot(plotting.solution_profiles, "solution.png", fld.times, coef.x, {"f": fld.slices}, title="linear solve")
    if cfg.oracle.enabled:
        x, times, slices = _oracle_linear(run)
        run.csv("oracle.csv", times, x, {"f": slices})
        err = _compare_final((fld.times, coef.x, {"f": fld.slices}), (times, x, {"f": slices}))
        run.json("oracle_report.json", {"final_time_errors": err, "oracle_nx": cfg.oracle.nx,
                                        "oracle_nt": cfg.oracle.nt})
    return EXIT_OK


def oracle_cmd(run):
    cfg = run.cfg
    if cfg.system == "linear":
        x, times, slices = _oracle_linear(run)
        run.csv("oracle.csv", times, x, {"f": slices})
        run.plot(plotting.solution_profiles, "oracle.png", times, x, {"f": slices}, title="finite-difference oracle")
        run.json("oracle_report.json", {"oracle_nx": cfg.oracle.nx, "oracle_nt": cfg.oracle.nt, "T": cfg.time.T})
        return EXIT_OK
    scenario = cfgmod.fluid_scenario(cfg, run.base_dir)
    _fluid_oracle(run, scenario, cfg.time.T)
    run.json("oracle_report.json", {"oracle_nx": cfg.oracle.nx, "oracle_nt": cfg.oracle.nt, "T": cfg.time.T})
    return EXIT_OK


def kernel_test(run, two_phase=False):
    ident = identity_suite()
    t_grid = np.geomspace(1e-3, 1.0, 7)
    tables = {}
    drift = 0.0
    rows_out = []
    for (m, j, p, sigma) in [(0, 0, 1.0, 0.0), (1, 0, 2.0, 0.5), (2, 0, math.inf, 0.5), (0, 1, 1.2, 0.3)]:
        coarse = estimate_ratio_sweep(m, j, p, sigma, t_grid, samples=2001)
        fine = estimate_ratio_sweep(m, j, p, sigma, t_grid, samples=4001)
        drift = max(drift, ratio_drift(coarse, fine))
        tables[f"m{m}_j{j}"] = fine
        rows_out.extend(fine)
    ident["ratio_drift"] = drift
    ident["ratio_max"] = max(r["ratio"] for r in rows_out if math.isfinite(r["ratio"]))
    run.json("kernel_identities.json", {"identities": ident, "ratio_tables": tables})
    if two_phase:
        _two_phase(run)
    return EXIT_OK


def _two_phase(run):
    from .function_spaces import GridFunction
    from .transmission import TwoPhaseProblem, solve_two_phase

    cfg = run.cfg
    tp = cfg.two_phase
    grid = cfg.grid
    f0 = GridFunction(grid.x_min, grid.x_max, tp.f0.sample(grid.x, run.base_dir))
    res = solve_two_phase(TwoPhaseProblem(tp.c_plus, tp.c_minus, f0), tp.times)
    run.csv("two_phase.csv", res.field.times, grid.x, {"f": res.field.slices})
    output.write_csv(run.out / "interface.csv", ["t", "jump", "flux_mismatch"],
                     [res.field.times, res.jump, res.flux_mismatch], run.hash)
    run.plot(plotting.interface_history, "interface.png", res.field.times, res.jump, res.flux_mismatch)


def norms_cmd(field_path, spec_path, out_dir):
    spec_data = json.loads(Path(spec_path).read_text())
    spec = NormSpec.from_dict(spec_data)
    times, x, values = output.read_field_csv(field_path)
    fld = SpaceTimeField(float(x[0]), float(x[-1]), times, values)
    value, terms = evaluate_spec(spec, fld)
    digest = hashlib.sha256(json.dumps(spec_data, sort_keys=True).encode() + Path(field_path).read_bytes())
    output.write_json(Path(out_dir) / "norms.json", {"spec": spec_data, "value": value, "terms": terms},
                      digest.hexdigest()[:16])
    print(output.fmt(value))
    return EXIT_OK


def convergence(run, levels):
    if levels < 3:
        raise InvalidData("convergence needs at least 3 refinement levels")
    cfg = run.cfg
    rows = []
    for level in range(levels):
        sub = cfgmod.refined(cfg, level)
        if cfg.system == "linear":
            prob = cfgmod.linear_problem(sub, run.base_dir)
            sol = solve_linear(prob)
            x = prob.coefficient.x
            named = {"f": sol.field.slices}
            T = cfg.time.T
        else:
            scenario = cfgmod.fluid_scenario(sub, run.base_dir)
            res = run_fixed_point(scenario)
            x = scenario.data.v0.x
            named = {"u": res.u.slices}
            T = res.T
        rows.append((level, sub.grid.nx, sub.time.nt, sub.grid.h, T, x, named))
    # one oracle run at the finest horizon, Richardson-extrapolated in time
    T_ref = rows[-1][4]
    if cfg.system == "linear":
        xr, _, a = _oracle_linear(run)
        _, _, b = _oracle_linear(run, 2 * cfg.oracle.nt)
        ref = {"f": richardson(a, b)}
    else:
        scenario = cfgmod.fluid_scenario(cfg, run.base_dir)
        _, xr, ref = _fluid_oracle(run, scenario, T_ref)
    table = []
    for level, nx, nt, h, T, x, named in rows:
        if abs(T - T_ref) > 1e-12 * T_ref:
            raise InvalidData("refinement levels settled on different horizons; fix T in the config")
        err = _compare_final((None, x, named), (None, xr, ref))
        table.append({"level": level, "nx": nx, "nt": nt, "h": h, "error": max(err.values())})
    hs = np.array([r["h"] for r in table])
    errs = np.array([r["error"] for r in table])
    order = float(np.polyfit(np.log(hs), np.log(np.maximum(errs, 1e-300)), 1)[0])
    passed = bool(errs[-1] <= ERROR_THRESHOLD and order >= ORDER_THRESHOLD)
    output.write_csv(run.out / "convergence.csv", ["level", "nx", "nt", "h", "error"],
                     [[r[k] for r in table] for k in ("level", "nx", "nt", "h", "error")], run.hash)
    run.json("convergence.json", {"levels": table, "fitted_order": order, "error_threshold": ERROR_THRESHOLD,
                                  "order_threshold": ORDER_THRESHOLD,
                                  "verdict": "PASS" if passed else "FAIL"})
    run.plot(plotting.convergence_plot, "convergence.png", hs, errs, order)
    print(f"fitted order {order:.3f}: {'PASS' if passed else 'FAIL'}")
    return EXIT_OK


def probe_cmd(run):
    cfg = run.cfg
    scenario = cfgmod.fluid_scenario(cfg, run.base_dir)
    res = run_fixed_point(scenario)
    scenario = replace(scenario, T=res.T)
    setup = prepare(scenario)
    rng = np.random.default_rng(run.seed)
    ratios = []
    for _ in range(cfg.probe.pairs):
        w1, w2 = random_ball_pair(scenario, setup, rng, amplitude=cfg.probe.amplitude)
        if scenario.system == "full":
            th = _theta_iterates(scenario, setup)
            ratios.append(contraction_probe(scenario, w1, w2, th, _perturb_theta(th, scenario.data.v0.x, rng), setup))
        else:
            ratios.append(contraction_probe(scenario, w1, w2, setup=setup))
    worst = max(ratios)
    ok = worst <= cfg.probe.threshold
    run.json("probe.json", {"ratios": ratios, "max_ratio": worst, "threshold": cfg.probe.threshold, "T": res.T,
                            "seed": run.seed, "fixed_point_iterations": res.iterations,
                            "verdict": "PASS" if ok else "FAIL"})
    run.plot(plotting.ratio_histogram, "probe.png", ratios, cfg.probe.threshold)
    if not ok:
        raise NoContraction(f"contraction ratio {worst:.3g} exceeds {cfg.probe.threshold}")
    return EXIT_OK


def _theta_iterates(scenario, setup):
    from .ns_fixed_point import initial_iterate

    start, _ = initial_iterate(scenario, setup)
    return start[1], start[2]


def _perturb_theta(th, x, rng, amplitude=0.05):
    """Temperature iterate shifted by a smooth random bump (and its exact derivative)."""
    thx, theta = th
    center = rng.uniform(x[0] / 4.0, x[-1] / 4.0)
    width = rng.uniform(0.2, 1.0)
    scale = amplitude * rng.normal()
    bump = scale * np.exp(-(((x - center) / width) ** 2))
    dbump = -2.0 * (x - center) / width ** 2 * bump
    return thx + dbump[None, :], theta + bump[None, :]


# Argument parsing

def build_parser():
    parser = argparse.ArgumentParser(prog="kernel-ns", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="scenario JSON")
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, default=None, help="seed for randomized families")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    for name in ("solve-psystem", "solve-full", "solve-linear", "oracle", "contraction-probe"):
        common(sub.add_parser(name))
    kt = common(sub.add_parser("kernel-test"), needs_config=False)
    kt.add_argument("--two-phase", action="store_true", help="also run the two-phase transmission solve")
    conv = common(sub.add_parser("convergence"))
    conv.add_argument("--levels", type=int, default=3)
    nm = sub.add_parser("norms")
    nm.add_argument("--field", required=True, help="CSV with columns t,x,value")
    nm.add_argument("--spec", required=True, help="NormSpec JSON")
    nm.add_argument("--out", default=".")
    nm.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load(args, system=None):
    if args.config is None:
        cfg = cfgmod.ScenarioConfig()
        base = Path.cwd()
    else:
        cfg = cfgmod.load_config(args.config)
        base = Path(args.config).resolve().parent
    if system is not None and cfg.system != system:
        raise InvalidData(f"config system is {cfg.system!r} but the subcommand expects {system!r}")
    return Run(cfg, args.out, base, args.seed)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "norms":
            return norms_cmd(args.field, args.spec, args.out)
        if args.command == "solve-psystem":
            return solve_fluid(_load(args, "psystem"))
        if args.command == "solve-full":
            return solve_fluid(_load(args, "full"))
        if args.command == "solve-linear":
            return solve_linear_cmd(_load(args, "linear"))
        if args.command == "oracle":
            return oracle_cmd(_load(args))
        if args.command == "kernel-test":
            return kernel_test(_load(args), args.two_phase)
        if args.command == "convergence":
            return convergence(_load(args), args.levels)
        if args.command == "contraction-probe":
            return probe_cmd(_load(args))
    except ValidationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InvalidData, DataTooRough, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NoContraction, BallExit, HorizonTooLarge) as exc:
        print(f"no contraction: {exc}", file=sys.stderr)
        return EXIT_NO_CONTRACTION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
