"""Command line pipeline: validate, map, plan, simulate, report.

Every command writes its artifacts under ``--out-dir`` with fixed file names
and prints a short table on stdout.  Exit codes: 0 success, 1 property
failure, 2 infeasible mapping, 3 plan error, 4 I/O or parse error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import scenarios
from .deploy import STRATEGIES, PlanError, deployment_time, make_plan
from .design import DesignError, Design, design_to_dict, instantiate, load_design
from .mapper import (
    OPTIMAL,
    BuildError,
    MappingAssignment,
    OracleTooLarge,
    SolveConfig,
    assignment_from_dict,
    brute_force_oracle,
    build_pbo,
    check_assignment,
    map_application,
    to_opb,
)
from .model import ModelError, Network, load_network, network_to_dict, network_to_dot
from .petri import PROPERTIES, Bounds, CompileError, check_properties, compile_to_net, explore, graph_to_dot, net_to_dot
from .sim import Metrics, PlacementMismatch, SimConfig, SimInput, Simulation, replay_deployment, run_discovery, simulation_from_design

EXIT_OK, EXIT_PROPERTY, EXIT_INFEASIBLE, EXIT_PLAN, EXIT_IO = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# helpers


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out}: {exc}", EXIT_IO) from exc
    return out


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    try:
        path.write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc
    return path


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc


def _design(args) -> Design:
    if not args.design:
        raise CliError("--design is required", EXIT_IO)
    try:
        return load_design(args.design)
    except (OSError, DesignError, ModelError) as exc:
        raise CliError(f"design {args.design}: {exc}", EXIT_IO) from exc


def _topology(args) -> Network:
    if not args.topology:
        raise CliError("--topology is required", EXIT_IO)
    try:
        return load_network(args.topology)
    except (OSError, ModelError) as exc:
        raise CliError(f"topology {args.topology}: {exc}", EXIT_IO) from exc


def _bounds(text: str | None) -> Bounds:
    if not text:
        return Bounds()
    fields = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        key = key.strip()
        if key not in ("max_states", "max_tokens", "max_steps") or not value.strip().isdigit():
            raise CliError(f"bad --bounds entry {part!r}; expected max_states=N,max_tokens=N,max_steps=N", EXIT_IO)
        fields[key] = int(value)
    return Bounds(**fields)


def table(headers: list[str], rows: list[list]) -> str:
    cells = [[str(h) for h in headers]] + [["" if c is None else str(c) for c in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*cells[0]), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*r) for r in cells[1:]]
    return "\n".join(lines) + "\n"


def _emit(args, out: Path, name: str, text: str) -> None:
    if args.format == "table":
        _write(out, f"{name}.txt", text)
    sys.stdout.write(text)


def _solve(design: Design, network: Network, time_limit: float) -> MappingAssignment:
    assignment, _report = map_application(design.scopes, design.links, network, SolveConfig(time_limit_s=time_limit))
    return assignment


def _placement(args, design: Design, network: Network) -> dict:
    if getattr(args, "assignment", None):
        assignment = assignment_from_dict(_read_json(args.assignment))
    else:
        assignment = _solve(design, network, args.time_limit)
    if assignment.status != OPTIMAL:
        raise CliError(f"no placement: mapping is {assignment.status} {assignment.note}".strip(), EXIT_INFEASIBLE)
    problems = check_assignment(assignment.chosen, design.scopes, design.links, network)
    if problems:
        raise CliError("assignment violates constraints: " + "; ".join(problems), EXIT_INFEASIBLE)
    return assignment.chosen


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    design = _design(args)
    out = _out_dir(args)
    try:
        net = compile_to_net(design)
    except CompileError as exc:
        raise CliError(f"design does not compile: {exc}", EXIT_PROPERTY) from exc
    graph = explore(net, _bounds(args.bounds))
    report = check_properties(graph)
    _write(out, "properties.json", report.to_json() + "\n")
    if args.format == "dot":
        _write(out, "net.dot", net_to_dot(net))
        _write(out, "states.dot", graph_to_dot(graph))
    rows = []
    for name, verdict in report.verdicts.items():
        cex = " ; ".join(" ".join(str(x) for x in lab) for lab in verdict.path or [])
        rows.append([name, verdict.status, verdict.note, cex])
    text = f"states={report.states} edges={report.edges} truncated={report.truncated}\n"
    text += table(["property", "status", "note", "counterexample"], rows)
    _emit(args, out, "properties", text)
    required = PROPERTIES if args.require == "all" else tuple(p.strip() for p in args.require.split(","))
    unknown = [p for p in required if p not in PROPERTIES]
    if unknown:
        raise CliError(f"unknown properties in --require: {', '.join(unknown)}", EXIT_IO)
    failed = [p for p in required if report[p].status == "fails"]
    return EXIT_PROPERTY if failed else EXIT_OK


def cmd_map(args) -> int:
    design = _design(args)
    network = _topology(args)
    out = _out_dir(args)
    assignment, report = map_application(design.scopes, design.links, network, SolveConfig(time_limit_s=args.time_limit))
    doc = assignment.to_dict()
    doc["mappability"] = report.to_dict()
    if args.oracle:
        try:
            oracle = brute_force_oracle(design.scopes, design.links, network)
        except OracleTooLarge as exc:
            raise CliError(str(exc), EXIT_IO) from exc
        doc["oracle"] = {
            "status": oracle.status,
            "objective": oracle.objective_value,
            "agrees": oracle.status == assignment.status and oracle.objective_value == assignment.objective_value,
        }
    if assignment.status == OPTIMAL:
        doc["violations"] = check_assignment(assignment.chosen, design.scopes, design.links, network)
    _write(out, "assignment.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.format == "dot":
        hosted: dict[str, list[str]] = {}
        for (s, k), n in sorted(assignment.chosen.items()):
            hosted.setdefault(n, []).append(f"{s}#{k}")
        _write(out, "mapping.dot", network_to_dot(network, hosted))
        try:
            _write(out, "problem.opb", to_opb(build_pbo(design.scopes, design.links, network)))
        except BuildError:
            pass
    text = table(
        ["status", "objective", "constraints", "solve_ms", "note"],
        [[assignment.status, assignment.objective_value, assignment.constraint_count, round(assignment.solve_ms, 1), assignment.note]],
    )
    text += table(["scope", "instance", "node"], [[s, k, n] for (s, k), n in sorted(assignment.chosen.items())])
    if "oracle" in doc:
        o = doc["oracle"]
        text += f"oracle: {o['status']} objective={o['objective']} agrees={o['agrees']}\n"
    _emit(args, out, "assignment", text)
    if assignment.status != OPTIMAL:
        print(assignment.note or f"mapping {assignment.status}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.oracle and not doc["oracle"]["agrees"]:
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_plan(args) -> int:
    design = _design(args)
    network = _topology(args)
    out = _out_dir(args)
    chosen = _placement(args, design, network)
    try:
        plan = make_plan(args.strategy, instantiate(design, chosen, network), network)
    except (PlanError, DesignError) as exc:
        raise CliError(f"plan error: {exc}", EXIT_PLAN) from exc
    _write(out, "plan.json", plan.to_json() + "\n")
    rows = [[i, u.entry, u.method, u.path, u.size, u.wave] for i, u in enumerate(plan.units)]
    text = f"strategy={plan.strategy} supervisor={plan.supervisor} waves={plan.waves}\n"
    text += table(["unit", "entry", "method", "path", "bytes", "wave"], rows)
    _emit(args, out, "plan", text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    design = _design(args)
    network = _topology(args)
    out = _out_dir(args)
    chosen = _placement(args, design, network)
    config = SimConfig(seed=args.seed, horizon=args.horizon)
    summary: dict = {}
    if args.strategy:
        sim = Simulation(network, config=config)
        discovery = run_discovery(Simulation(network, config=config))
        summary["discovery"] = {"complete": discovery.complete, "missing": discovery.missing, "ticks": discovery.ticks}
        try:
            plan = make_plan(args.strategy, instantiate(design, chosen, network), network)
            replay = replay_deployment(sim, plan)
        except (PlanError, PlacementMismatch) as exc:
            raise CliError(f"deployment failed: {exc}", EXIT_PLAN) from exc
        d_steps, total = deployment_time(replay.trace)
        trace = replay.trace.to_dict()
        for step, d in zip(trace["steps"], d_steps):
            step["D"] = d
        trace.update(total_ms=total, wall_ms=replay.wall_ms, packets_hops=replay.packets_hops, ticks=replay.ticks)
        _write(out, "deployment.json", json.dumps(trace, indent=2, sort_keys=True) + "\n")
        _write(out, "deploy_events.jsonl", sim.event_log_lines())
        for inp in design.inputs:
            for (scope, _k), node in sorted(chosen.items()):
                if scope == inp.scope:
                    sim.add_input(SimInput(node, inp.path, inp.values, sim.time + inp.start, inp.period))
        sim.log.clear()
        sim.trace.clear()
        sim.metrics = Metrics()
    else:
        sim = simulation_from_design(design, chosen, network, config)
    metrics = sim.run(args.horizon)
    doc = metrics.to_dict()
    doc.update(summary)
    _write(out, "events.jsonl", sim.event_log_lines())
    _write(out, "metrics.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    rows = [[k, v] for k, v in sorted(metrics.fires.items())]
    text = f"ticks={args.horizon} packets_hops={metrics.total_packets_hops} sent={metrics.requests_sent} dropped={metrics.dropped}\n"
    text += table(["agent", "fires"], rows)
    _emit(args, out, "metrics", text)
    return EXIT_OK


def _report_artifact(doc) -> tuple[str, str]:
    if isinstance(doc, list):
        if not doc:
            return "rows", table(["(empty)"], [])
        headers = sorted({k for row in doc for k in row})
        return "rows", table(headers, [[row.get(h) for h in headers] for row in doc])
    if "assignment" in doc and "constraint_count" in doc:
        rows = [[doc.get("status"), doc.get("objective"), doc.get("constraint_count"), doc.get("solve_ms")]]
        return "mapping", table(["status", "objective", "constraints", "solve_ms"], rows)
    if "steps" in doc:
        rows = [[i, s["node"], s["P"], s["W"], s["T"], s["L"], s.get("D")] for i, s in enumerate(doc["steps"])]
        return "deployment", table(["step", "node", "P", "W", "T", "L", "D"], rows)
    if "properties" in doc:
        rows = [[k, v["status"]] for k, v in sorted(doc["properties"].items())]
        return "properties", table(["property", "status"], rows)
    if "units" in doc:
        rows = [[u["entry"], u["path"], u["size"], u["wave"]] for u in doc["units"]]
        return "plan", table(["entry", "path", "bytes", "wave"], rows)
    if "total_packets_hops" in doc:
        rows = [[k, v] for k, v in sorted(doc.get("fires", {}).items())]
        return "metrics", f"packets_hops={doc['total_packets_hops']}\n" + table(["agent", "fires"], rows)
    raise CliError("unrecognised artifact", EXIT_IO)


def cmd_report(args) -> int:
    out = _out_dir(args)
    sections = []
    for path in args.artifacts:
        kind, text = _report_artifact(_read_json(path))
        sections.append(f"# {kind}: {path}\n{text}")
    text = "\n".join(sections) if sections else table(["artifact"], [])
    _write(out, "report.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


FIXTURES = {
    "fig5": lambda n: (scenarios.fig5_design(), None),
    "philosophers": lambda n: (d := scenarios.philosophers_design(n), scenarios.philosopher_network(4, d)),
    "discovery": lambda n: (scenarios.notifier_design(n), scenarios.chain_network(n)),
}


def cmd_fixture(args) -> int:
    out = _out_dir(args)
    design, network = FIXTURES[args.name](args.size)
    if network is None:
        network, _ = scenarios.one_scope_per_node(design)
    _write(out, "design.json", json.dumps(design_to_dict(design), indent=2) + "\n")
    _write(out, "topology.json", json.dumps(network_to_dict(network), indent=2) + "\n")
    print(f"wrote {out / 'design.json'} and {out / 'topology.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="choreo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, design=True, topology=False):
        if design:
            p.add_argument("--design", help="design document (JSON or TOML)")
        if topology:
            p.add_argument("--topology", help="topology document (JSON or TOML)")
        p.add_argument("--out-dir", default="out", help="directory for artifacts (default: out)")
        p.add_argument("--format", choices=("json", "dot", "table"), default="json", help="extra artifact format")

    p = sub.add_parser("validate", help="explore the state graph and check properties")
    common(p)
    p.add_argument("--bounds", help="max_states=N,max_tokens=N,max_steps=N")
    p.add_argument(
        "--require",
        default="safety,deadlock_freedom",
        help="comma-separated properties whose failure gives exit 1, or 'all' (default: safety,deadlock_freedom)",
    )
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("map", help="place scopes on nodes")
    common(p, topology=True)
    p.add_argument("--oracle", action="store_true", help="cross-check with exhaustive enumeration")
    p.add_argument("--time-limit", type=float, default=60.0)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("plan", help="build a deployment plan")
    common(p, topology=True)
    p.add_argument("--assignment", help="assignment.json from 'map' (solved on the fly if omitted)")
    p.add_argument("--strategy", choices=STRATEGIES, default="direct")
    p.add_argument("--time-limit", type=float, default=60.0)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run the choreography on the simulator")
    common(p, topology=True)
    p.add_argument("--assignment")
    p.add_argument("--strategy", choices=STRATEGIES, help="discover and deploy with this strategy before running")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--time-limit", type=float, default=60.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="tabulate JSON artifacts")
    p.add_argument("artifacts", nargs="*")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fixture", help="write a reference design and topology")
    p.add_argument("name", choices=sorted(FIXTURES))
    p.add_argument("--size", type=int, default=3)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
