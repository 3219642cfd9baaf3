"""Command line front end.

Subcommands: ``generate`` draws a scenario file, ``solve`` runs one
instance, ``sweep`` executes an experiment plan, ``plot`` renders a results
CSV, ``oracle`` grid-checks a tiny instance. Output locations honour the
DOMANET_OUTDIR environment variable (directories only; file names stay as
given).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .bench import (ExperimentPlan, full_scale_plan, render_plots,
                    run_experiment, ue_sweep_plan, weight_sweep_plan)
from .config import desk_scale, paper_scale
from .modes import parse_mode
from .oracle import GridSpec, exhaustive_best
from .pipeline import SolveSettings, resolve_utopia, solve_instance
from .scalarize import scalarization_for, tchebycheff_objective
from .scenario import Scenario, generate_scenario

_STOCK_PLANS = {
    "weight_sweep": weight_sweep_plan,
    "ue_sweep": ue_sweep_plan,
    "full_scale": full_scale_plan,
}


def _outdir(path: str) -> str:
    """Apply the DOMANET_OUTDIR override to a directory path."""
    return os.environ.get("DOMANET_OUTDIR", path)


def _place(path: str) -> str:
    """Redirect a file path into DOMANET_OUTDIR when the override is set."""
    override = os.environ.get("DOMANET_OUTDIR")
    if override is None:
        return path
    return os.path.join(override, os.path.basename(path))


def _load_scenario(args) -> Scenario:
    if args.scenario:
        return Scenario.load(args.scenario)
    cfg = paper_scale() if args.scale == "paper" else desk_scale()
    return generate_scenario(cfg, seed=args.seed)


def _settings(args) -> SolveSettings:
    base = {"fast": SolveSettings.fast, "default": SolveSettings,
            "accurate": SolveSettings.accurate}[args.profile]()
    overrides = {}
    if getattr(args, "alpha", None) is not None:
        overrides["alpha"] = args.alpha
    if getattr(args, "lambda_cap", None) is not None:
        overrides["lambda_cap"] = args.lambda_cap
    if getattr(args, "iterations", None) is not None:
        overrides["poly_iterations"] = args.iterations
    if getattr(args, "bisect_tol", None) is not None:
        overrides["poly_bisect_tol"] = args.bisect_tol
    return replace(base, **overrides) if overrides else base


def _add_scenario_args(p) -> None:
    p.add_argument("--scenario", help="scenario JSON file (from 'generate')")
    p.add_argument("--scale", choices=["desk", "paper"], default="desk")
    p.add_argument("--seed", type=int, default=1)


def _add_solver_args(p) -> None:
    p.add_argument("--profile", choices=["fast", "default", "accurate"],
                   default="default")
    p.add_argument("--alpha", type=float, help="assignment penalty weight")
    p.add_argument("--lambda-cap", dest="lambda_cap", type=float,
                   help="cap on the scalarized objective variable")
    p.add_argument("--iterations", type=int, help="polyblock iteration limit")
    p.add_argument("--bisect-tol", dest="bisect_tol", type=float,
                   help="boundary projection tolerance")


def cmd_generate(args) -> int:
    scenario = _load_scenario(args)
    out = _place(args.out)
    directory = os.path.dirname(os.path.abspath(out))
    os.makedirs(directory, exist_ok=True)
    scenario.save(out)
    cfg = scenario.config
    print(f"wrote {out}: {cfg.num_aps} APs x {cfg.ues_per_ap} UEs, "
          f"{cfg.num_subbands} subbands, seed {scenario.seed}")
    return 0


def cmd_solve(args) -> int:
    scenario = _load_scenario(args)
    mode = parse_mode(args.mode)
    settings = _settings(args)
    utopia = resolve_utopia(scenario, mode, settings)
    run = solve_instance(scenario, mode, args.omega, utopia, settings)
    W = scenario.config.total_bandwidth_hz
    cfg = scenario.config
    payload = {
        "mode": mode.name,
        "omega": args.omega,
        "status": run.status,
        "utopia_se_bps_hz": utopia.u1_star_se,
        "utopia_sp_w": utopia.u2_star_w,
        "solver_iterations": run.solver.telemetry.iterations,
        "wall_time_s": round(run.wall_time_s, 3),
    }
    if run.best is not None:
        scal = scalarization_for(scenario, utopia, args.omega,
                                 alpha=settings.alpha,
                                 qos_form=settings.qos_form)
        cp_w = cfg.num_aps * cfg.ues_per_ap * cfg.circuit_power_w
        payload.update({
            "se_bps_hz": run.best.se(W),
            "sr_bps": run.best.sr_bps,
            "sp_w": run.best.sp_w,
            "ee_bps_j": run.best.sr_bps / (run.best.sp_w + cp_w),
            "objective": run.best.lam(scal, W),
            "qos_margin_bps": run.best.qos_margin_bps,
            "assignment": run.best.rho.astype(int).tolist(),
            "overlap": run.best.delta_values.tolist(),
        })
    text = json.dumps(payload, indent=2)
    if args.out:
        out = _place(args.out)
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"wrote {out}")
    else:
        print(text)
    return 0 if run.status == "ok" else 1


def cmd_sweep(args) -> int:
    if args.plan:
        plan = ExperimentPlan.load(args.plan)
    else:
        plan = _STOCK_PLANS[args.stock]()
    if args.trials is not None:
        plan.trials = args.trials
    if args.base_seed is not None:
        plan.base_seed = args.base_seed
    plan.out_dir = _outdir(args.out_dir or plan.out_dir)
    records, csv_path = run_experiment(plan, workers=args.workers)
    solved = sum(1 for r in records if r.status == "ok")
    print(f"{len(records)} records ({solved} ok) -> {csv_path}")
    if args.plot:
        for path in render_plots(csv_path):
            print(f"wrote {path}")
    return 0


def cmd_plot(args) -> int:
    out_dir = _outdir(args.out_dir) if args.out_dir else \
        os.environ.get("DOMANET_OUTDIR")
    for path in render_plots(args.csv, out_dir=out_dir):
        print(f"wrote {path}")
    return 0


def cmd_oracle(args) -> int:
    scenario = _load_scenario(args)
    mode = parse_mode(args.mode)
    grid = GridSpec(power_points=args.power_points,
                    delta_points=args.delta_points)
    settings = replace(_settings(args), utopia_grid=grid)
    utopia = resolve_utopia(scenario, mode, settings)
    scal = scalarization_for(scenario, utopia, args.omega,
                             alpha=settings.alpha,
                             qos_form=settings.qos_form)
    W = scenario.config.total_bandwidth_hz

    def objective(sr_bps, sp_w):
        return tchebycheff_objective(scal, sr_bps, sp_w, W).lam

    best = exhaustive_best(scenario, mode, objective, grid)
    print(f"grid optimum: objective {best.objective_value:.6f} "
          f"SE {best.sr_bps / W:.4f} bps/Hz SP {best.sp_w:.4f} W "
          f"({best.n_evaluated} evaluations)")
    if args.compare:
        run = solve_instance(scenario, mode, args.omega, utopia, settings)
        if run.best is None:
            print("solver: infeasible")
            return 1
        lam = run.best.lam(scal, W)
        print(f"solver:       objective {lam:.6f} "
              f"SE {run.best.se(W):.4f} bps/Hz SP {run.best.sp_w:.4f} W")
        print(f"difference:   {lam - best.objective_value:+.6f} "
              f"(one grid step ~ {best.neighbour_step:.6f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="domanet",
        description="Uplink D-OMA network simulator and solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a scenario and save it")
    _add_scenario_args(p)
    p.add_argument("--out", default="scenario.json")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve one (scenario, mode, weight)")
    _add_scenario_args(p)
    _add_solver_args(p)
    p.add_argument("--mode", default="pod")
    p.add_argument("--omega", type=float, default=0.5)
    p.add_argument("--out", help="write the result JSON here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run an experiment plan")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--plan", help="plan JSON file")
    group.add_argument("--stock", choices=sorted(_STOCK_PLANS),
                       help="built-in plan")
    p.add_argument("--trials", type=int)
    p.add_argument("--base-seed", dest="base_seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plot", action="store_true",
                   help="render figures after the sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render figures from a results CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("oracle", help="grid-search a tiny instance")
    _add_scenario_args(p)
    _add_solver_args(p)
    p.add_argument("--mode", default="noma")
    p.add_argument("--omega", type=float, default=0.5)
    p.add_argument("--power-points", dest="power_points", type=int, default=11)
    p.add_argument("--delta-points", dest="delta_points", type=int, default=11)
    p.add_argument("--compare", action="store_true",
                   help="also run the solver and report the gap")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
