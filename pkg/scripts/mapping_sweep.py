"""Constraint count and solve time of the placement problem as the network grows."""
from __future__ import annotations

import argparse
import json

from choreo.mapper import build_pbo, solve
from choreo.scenarios import philosopher_network, philosophers_design


def run(philosophers: int, sizes: list[int], repeats: int) -> list[dict]:
    design = philosophers_design(philosophers)
    rows = []
    for n in sizes:
        net = philosopher_network(n, design, per_node=10)
        results = [solve(build_pbo(design.scopes, design.links, net)) for _ in range(repeats)]
        best = min(results, key=lambda r: r.solve_ms)
        rows.append({
            "nodes": n,
            "constraints": best.constraint_count,
            "solve_ms": round(best.solve_ms, 2),
            "status": best.status,
            "objective": best.objective_value,
        })
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--philosophers", type=int, default=20)
    parser.add_argument("--sizes", default="2,4,8,16")
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--json", help="write rows to this file")
    args = parser.parse_args()
    rows = run(args.philosophers, [int(s) for s in args.sizes.split(",")], args.repeats)
    print(f"{'nodes':>5} {'constraints':>11} {'solve_ms':>9} {'status':>10} {'objective':>9}")
    for r in rows:
        print(f"{r['nodes']:>5} {r['constraints']:>11} {r['solve_ms']:>9} {r['status']:>10} {str(r['objective']):>9}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
