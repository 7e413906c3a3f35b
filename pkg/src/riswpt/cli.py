"""Command-line entry point: ``riswpt solve | sweep | oracle | template``."""

import argparse
import dataclasses
import json
import logging
import sys
import time

import numpy as np
import yaml

from .channels import ScenarioConfig, build_scenario, random_ris_phases
from .harness import (
    RIS_MODES,
    SWEEP_KINDS,
    ResultRow,
    SweepSpec,
    emit_results,
    load_sweep,
    run_sweep,
    summarize,
)
from .model import ChannelSet, PowerConstraints, RisPhases, compose_channel
from .oracle import GridSpec, grid_search, max_min_search
from .solver import SolverConfig, initial_beamformer, initial_point, spmc_sca_admm


def _load_yaml(path):
    if path is None:
        return {}
    with open(path) as fh:
        return yaml.safe_load(fh) or {}


def _scenario_and_solver(args):
    data = _load_yaml(args.config)
    scenario = ScenarioConfig.from_dict(data.get("scenario", {}))
    if args.seed is not None:
        scenario = scenario.replace(seed=args.seed)
    return scenario, SolverConfig(**data.get("solver", {}))


def cmd_solve(args):
    scenario, solver = _scenario_and_solver(args)
    channels = build_scenario(scenario)
    if args.ris_mode == "absent":
        channels, ris0 = channels.without_ris(), RisPhases.zeros(0)
    else:
        ris0 = RisPhases(random_ris_phases(scenario))
    optimize_ris = args.ris_mode == "optimized"
    if optimize_ris and channels.N:
        x0, ris0 = initial_point(channels, scenario.tx_power, theta0=ris0.theta, seed=scenario.seed)
    else:
        x0 = initial_beamformer(compose_channel(channels, ris0), scenario.tx_power)

    qmm = None
    if args.gamma is not None:
        qmm, cert = max_min_search(channels, solver, args.bisect_tol, scenario.tx_power, x0=x0,
                                   ris0=ris0, optimize_ris=optimize_ris)
        x0, ris0, p_min = cert.beamformer, cert.ris, args.gamma * qmm
    else:
        p_min = args.p_min
    t0 = time.perf_counter()
    res = spmc_sca_admm(channels, PowerConstraints(np.full(channels.K, p_min)), x0, ris0, solver,
                        allow_infeasible_start=args.p_min > 0 and args.gamma is None,
                        optimize_ris=optimize_ris)
    seconds = time.perf_counter() - t0

    print(f"scenario seed {scenario.seed}: M={channels.M} N={channels.N} K={channels.K} ris={args.ris_mode}")
    if qmm is not None:
        print(f"max-min level Q_MM ~ {qmm:.6e} W, floor {p_min:.6e} W")
    print(f"total power    {res.objective:.6e} W")
    print(f"min user power {np.min(res.per_user_power):.6e} W")
    print(f"feasible       {res.all_feasible}")
    print(f"iterations     outer {res.outer_iters}, inner x {res.inner_iters_x}, inner ris {res.inner_iters_psi}")
    print(f"wall time      {seconds:.3f} s")
    if args.out:
        row = ResultRow(p_min, scenario.seed, res.objective, float(np.min(res.per_user_power)),
                        res.all_feasible, res.outer_iters, seconds)
        emit_results([row], args.out, args.format)
    return 0


def cmd_sweep(args):
    spec = load_sweep(args.config)
    if args.seed is not None:
        spec = dataclasses.replace(spec, scenario=spec.scenario.replace(seed=args.seed))
    rows = run_sweep(spec, jobs=args.jobs)
    if args.out:
        emit_results(rows, args.out, args.format)
    print(f"{spec.sweep_kind} sweep, ris_mode={spec.ris_mode}, {spec.num_seeds} seeds")
    print(f"{'value':>8} {'mean total [W]':>16} {'mean min [W]':>16} {'feasible':>9}")
    for value, s in summarize(rows).items():
        print(f"{value:>8} {s['mean_total_power_w']:>16.6e} {s['mean_min_user_power_w']:>16.6e} "
              f"{s['feasible_rate']:>9.2f}")
    return 0


def _gaussian_instance(M, N, K, seed):
    rng = np.random.default_rng(seed)

    def draw(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    return ChannelSet(draw(K, M), draw(K, N), draw(N, M))


def cmd_oracle(args):
    if args.config:
        scenario, solver = _scenario_and_solver(args)
        channels, P = build_scenario(scenario), scenario.tx_power
    else:
        seed = 0 if args.seed is None else args.seed
        channels, P, solver = _gaussian_instance(args.M, args.N, args.K, seed), 1.0, SolverConfig()
    constraints = PowerConstraints(np.full(channels.K, args.p_min))
    grid = grid_search(channels, constraints, GridSpec(args.levels, args.max_points), P)
    report = {
        "M": channels.M, "N": channels.N, "K": channels.K, "phase_levels": args.levels,
        "grid_objective_w": grid.objective, "grid_feasible": grid.feasible,
        "grid_alpha": grid.alpha.tolist(), "grid_theta": grid.theta.tolist(),
    }
    if args.p_min == 0:
        x0, ris0 = initial_point(channels, P)
        res = spmc_sca_admm(channels, constraints, x0, ris0, solver)
        report["solver_objective_w"] = res.objective
        report["solver_to_grid"] = res.objective / grid.objective if grid.objective > 0 else None
    json.dump(report, sys.stdout, indent=1)
    print()
    return 0


def cmd_template(args):
    if args.kind == "scenario":
        data = {"scenario": ScenarioConfig().to_dict(), "solver": dataclasses.asdict(SolverConfig())}
    else:
        values = {"antennas": [4, 8, 16], "gamma": [0.0, 0.25, 0.5, 0.75, 1.0],
                  "ris_elements": [0, 16, 32]}[args.kind]
        data = SweepSpec(args.kind, values).to_dict()
    yaml.safe_dump(data, sys.stdout, sort_keys=False)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="riswpt", description=__doc__)
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="YAML configuration file")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--out", help="write results to this file")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("solve", help="solve one scenario and print a summary")
    common(p)
    p.add_argument("--ris-mode", choices=RIS_MODES, default="optimized")
    p.add_argument("--p-min", type=float, default=0.0, help="uniform minimum user power [W]")
    p.add_argument("--gamma", type=float, help="set the floor to gamma * Q_MM instead")
    p.add_argument("--bisect-tol", type=float, default=1e-2)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a sweep described by a YAML file")
    common(p, config_required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="grid-search a tiny instance")
    common(p)
    p.add_argument("--M", type=int, default=2)
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--max-points", type=int, default=2 ** 22)
    p.add_argument("--p-min", type=float, default=0.0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("template", help="print a default configuration file")
    p.add_argument("kind", choices=("scenario",) + SWEEP_KINDS)
    p.set_defaults(func=cmd_template)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
