"""Deployment cost on an N-hop chain for each strategy.

Prints per-step W/T/L/P/D and totals; ``--json`` writes the rows to a file.
"""
from __future__ import annotations

import argparse
import json

from choreo.deploy import STRATEGIES, deployment_time, make_plan
from choreo.design import instantiate
from choreo.mapper import map_application
from choreo.scenarios import chain_network, notifier_design
from choreo.sim import Simulation, replay_deployment


def run(hops: int) -> list[dict]:
    net = chain_network(hops)
    design = notifier_design(hops)
    assignment, _ = map_application(design.scopes, design.links, net)
    placement = instantiate(design, assignment.chosen, net)
    rows = []
    for strategy in STRATEGIES:
        result = replay_deployment(Simulation(net), make_plan(strategy, placement, net))
        per, total = deployment_time(result.trace)
        for i, (step, d) in enumerate(zip(result.trace.steps, per)):
            rows.append({"strategy": strategy, "step": i, **step.to_dict(), "D": d})
        rows.append({"strategy": strategy, "step": "total", "D": total, "packets_hops": result.packets_hops, "matches": result.matches})
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--hops", type=int, default=14)
    parser.add_argument("--json", help="write rows to this file")
    args = parser.parse_args()
    rows = run(args.hops)
    print(f"{'strategy':<9} {'step':>5} {'node':<6} {'W':>6} {'T':>6} {'L':>6} {'P':>6} {'D':>7}")
    for r in rows:
        if r["step"] == "total":
            print(f"{r['strategy']:<9} total  D={r['D']} packets*hops={r['packets_hops']} placement_ok={r['matches']}")
        else:
            print(f"{r['strategy']:<9} {r['step']:>5} {r['node']:<6} {r['W']:>6} {r['T']:>6} {r['L']:>6} {r['P']:>6} {r['D']:>7}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
