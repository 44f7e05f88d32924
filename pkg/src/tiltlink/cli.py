"""Command-line interface wiring configuration files to the library.

Subcommands mirror the library's capabilities: ``hover`` and ``tau-min``
inspect a single form, ``plan`` / ``plan-deform`` / ``corner-scan`` run the
vectoring-angle planner, ``design-beta`` solves the tilt-angle design
problem, and ``simulate`` executes a closed-loop scenario.  Results are
emitted as JSON or CSV.  Exit codes: 0 success, 1 usage error, 2 physical
infeasibility or an aborted run.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import config as cfg
from .allocation import SingularAllocation, allocate
from .feasibility import analyze, zonotope_vertices, torque_basis
from .model import Configuration
from .planner import (
    Infeasible,
    InfeasibleDesign,
    OptimizerStalled,
    PlanBreak,
    design_tilt_angle,
    detect_corner_case,
    optimize_vectoring,
    plan_deformation,
)
from .sim import metrics, run_scenario, write_telemetry_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(payload, output):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if output:
        with open(output, "w") as handle:
            handle.write(text + "\n")
    print(text)


def _load(args):
    data = cfg.load_config(args.config, args.set or ())
    return data, cfg.robot_from_config(data)


def cmd_hover(args):
    data, model = _load(args)
    q = cfg.parse_angles(args.q, model.n_links - 1)
    psi = cfg.parse_angles(args.psi, model.n_links)
    try:
        bundle = allocate(model, Configuration(q, psi))
    except SingularAllocation as exc:
        _emit({"error": str(exc)}, args.output)
        return EXIT_INFEASIBLE
    _emit(
        {
            "lambda_s": bundle.lambda_s.tolist(),
            "alpha_x": bundle.alpha_x,
            "alpha_y": bundle.alpha_y,
            "feasible": bundle.feasible,
            "total_thrust": float(bundle.lambda_s.sum()),
        },
        args.output,
    )
    return EXIT_OK


def cmd_tau_min(args):
    data, model = _load(args)
    q = cfg.parse_angles(args.q, model.n_links - 1)
    psi = cfg.parse_angles(args.psi, model.n_links)
    configuration = Configuration(q, psi)
    report = analyze(model, configuration)
    payload = {
        "tau_min": report.tau_min,
        "singular_class": report.singular_class,
        "degenerate_pairs": [list(p) for p in report.degenerate_pairs],
        "all_degenerate": report.all_degenerate,
    }
    if args.vertices:
        vertices = zonotope_vertices(torque_basis(model, configuration))
        with open(args.vertices, "w") as handle:
            json.dump({"vertices": vertices.tolist()}, handle, indent=2)
        payload["vertices_file"] = args.vertices
    _emit(payload, args.output)
    return EXIT_OK


def cmd_plan(args):
    data, model = _load(args)
    q = cfg.parse_angles(args.q, model.n_links - 1)
    weights = cfg.plan_weights_from_config(data)
    constraints = cfg.plan_constraints_from_config(data)
    try:
        result = optimize_vectoring(model, q, weights, constraints, seed=args.seed)
    except (Infeasible, OptimizerStalled) as exc:
        _emit({"error": str(exc)}, args.output)
        return EXIT_INFEASIBLE
    _emit(
        {
            "psi_bar": result.psi_bar.tolist(),
            "objective": result.objective,
            "tau_min": result.tau_min,
            "lambda_s": result.lambda_s.tolist(),
            "alpha": list(result.alpha),
            "iterations": result.iterations,
        },
        args.output,
    )
    return EXIT_OK


def cmd_plan_deform(args):
    data, model = _load(args)
    weights = cfg.plan_weights_from_config(data)
    constraints = cfg.plan_constraints_from_config(data)
    scenario = cfg.scenario_from_config(data)
    if not scenario.joint_waypoints:
        _emit({"error": "scenario has no joint_waypoints to plan over"}, None)
        return EXIT_USAGE
    rate = scenario.planner_rate
    times = np.arange(
        scenario.joint_waypoints[0][0],
        scenario.joint_waypoints[-1][0] + 0.5 / rate,
        1.0 / rate,
    )
    from .sim import _joints_at

    schedule = [(float(t), _joints_at(scenario, float(t))) for t in times]
    try:
        trace = plan_deformation(
            model,
            schedule,
            weights,
            constraints,
            max_joint_rate=scenario.max_joint_rate,
            seed=args.seed,
        )
        broke = None
    except PlanBreak as exc:
        trace = exc.partial
        broke = exc

    path = args.output or "plan_trace.csv"
    _write_trace_csv(trace, path)
    summary = {
        "trace_file": path,
        "steps": len(trace),
        "tau_min_floor": trace.tau_min_floor if len(trace) else None,
        "max_psi_step": trace.max_psi_step if len(trace) else None,
    }
    if broke is not None:
        summary["plan_break"] = {
            "t": broke.t,
            "q": broke.q.tolist(),
            "reason": broke.reason,
        }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_INFEASIBLE if broke is not None else EXIT_OK


def _write_trace_csv(trace, path):
    import csv as _csv

    with open(path, "w", newline="") as handle:
        writer = _csv.writer(handle)
        if not len(trace):
            writer.writerow(["t"])
            return
        n = trace.steps[0].result.psi_bar.shape[0]
        header = (
            ["t"]
            + [f"q_{i+1}" for i in range(n - 1)]
            + [f"psi_{i+1}" for i in range(n)]
            + ["tau_min", "alpha_x", "alpha_y", "total_thrust"]
        )
        writer.writerow(header)
        for step in trace:
            res = step.result
            writer.writerow(
                [f"{step.t:.6f}"]
                + [f"{x:.12g}" for x in step.q]
                + [f"{x:.12g}" for x in res.psi_bar]
                + [
                    f"{res.tau_min:.12g}",
                    f"{res.alpha[0]:.12g}",
                    f"{res.alpha[1]:.12g}",
                    f"{float(np.sum(res.lambda_s)):.12g}",
                ]
            )


def cmd_design_beta(args):
    try:
        beta = design_tilt_angle(args.gamma1, args.gamma2, args.l, args.d)
    except (InfeasibleDesign, ValueError) as exc:
        _emit({"error": str(exc)}, args.output)
        return EXIT_INFEASIBLE
    _emit(
        {
            "beta": beta,
            "beta_degrees": float(np.degrees(beta)),
            "thrust_overhead": float(1.0 / np.cos(beta)),
        },
        args.output,
    )
    return EXIT_OK


def cmd_simulate(args):
    data, model = _load(args)
    scenario = cfg.scenario_from_config(data)
    lqi, gains, limits = cfg.control_from_config(data)
    weights = cfg.plan_weights_from_config(data)
    constraints = cfg.plan_constraints_from_config(data)
    result = run_scenario(model, scenario, lqi, gains, weights, constraints, limits)

    out_dir = args.output_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{scenario.name}_telemetry.csv")
    json_path = os.path.join(out_dir, f"{scenario.name}_metrics.json")
    payload = {"completed": result.completed, "abort_reason": result.abort_reason}
    if result.records:
        write_telemetry_csv(result.records, csv_path)
        # Keep output files byte-identical across output directories.
        payload["telemetry_file"] = os.path.basename(csv_path)
        payload["metrics"] = metrics(result.records)
    with open(json_path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK if result.completed else EXIT_INFEASIBLE


def cmd_corner_scan(args):
    data, model = _load(args)
    weights = cfg.plan_weights_from_config(data)
    constraints = cfg.plan_constraints_from_config(data)
    values = np.linspace(args.start, args.stop, args.steps)
    rows = []
    for value in values:
        q = np.full(model.n_links - 1, value)
        try:
            is_corner, tau_primal, tau_dual = detect_corner_case(
                model, q, weights, constraints
            )
        except (Infeasible, OptimizerStalled) as exc:
            rows.append({"q": value, "error": str(exc)})
            continue
        rows.append(
            {
                "q": float(value),
                "is_corner": bool(is_corner),
                "tau_primal": tau_primal,
                "tau_dual": tau_dual,
            }
        )
    _emit({"scan": rows}, args.output)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="tiltlink", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="TOML configuration file")
            p.add_argument(
                "--set",
                action="append",
                metavar="SECTION.KEY=VALUE",
                help="override a config value (repeatable)",
            )
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--output", help="also write the JSON result here")

    p = sub.add_parser("hover", help="static thrust and hover attitude for one form")
    common(p)
    p.add_argument("--q", required=True, help="joint angles, comma separated (rad)")
    p.add_argument("--psi", required=True, help="vectoring angles, comma separated")
    p.set_defaults(func=cmd_hover)

    p = sub.add_parser("tau-min", help="guaranteed minimum control torque")
    common(p)
    p.add_argument("--q", required=True)
    p.add_argument("--psi", required=True)
    p.add_argument("--vertices", help="dump torque-set corner points to this JSON file")
    p.set_defaults(func=cmd_tau_min)

    p = sub.add_parser("plan", help="optimize vectoring angles for one form")
    common(p)
    p.add_argument("--q", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser(
        "plan-deform", help="plan vectoring angles along the scenario's joint schedule"
    )
    common(p)
    p.set_defaults(func=cmd_plan_deform)

    p = sub.add_parser("design-beta", help="solve the tilt-angle design problem")
    p.add_argument("--gamma1", type=float, required=True)
    p.add_argument("--gamma2", type=float, required=True)
    p.add_argument("--l", type=float, required=True)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_design_beta)

    p = sub.add_parser("simulate", help="run a closed-loop scenario")
    common(p)
    p.add_argument("--output-dir", help="directory for telemetry CSV and metrics JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("corner-scan", help="scan equal-joint forms for corner cases")
    common(p)
    p.add_argument("--start", type=float, default=0.02)
    p.add_argument("--stop", type=float, default=0.3)
    p.add_argument("--steps", type=int, default=8)
    p.set_defaults(func=cmd_corner_scan)

    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("TILTLINK_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except cfg.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
