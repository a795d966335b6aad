"""Acceptance criteria 1-8.  Prints one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import itertools
import math
import os
import random
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from choreo.deploy import STRATEGIES, deployment_time, make_plan
from choreo.design import Design, instantiate
from choreo.mapper import OPTIMAL, brute_force_oracle, build_pbo, check_assignment, map_application, solve
from choreo.model import Scope
from choreo.petri import check_properties, compile_to_net, explore, follows_path, labels_from_trace, replay, successors
from choreo.scenarios import (
    chain_network,
    fig5_design,
    listing1_setup,
    listing3_setup,
    notifier_design,
    one_scope_per_node,
    philosopher_network,
    philosophers_design,
    ring_network,
)
from choreo.sim import SimConfig, Simulation, replay_deployment, run_discovery, simulation_from_design
from oracles import FIG5_FINAL, LISTING1_FINAL, LISTING3_HEATER, LISTING3_WIRE_PAYLOAD, r_squared, random_instance


def criterion_1():
    """Exact solver agrees with exhaustive enumeration on 200 small random instances."""
    t0 = time.perf_counter()
    mismatches, counts = 0, {}
    for seed in range(200):
        scopes, links, net = random_instance(random.Random(seed), max_scopes=4, max_nodes=4, max_mult=2)
        exact = solve(build_pbo(scopes, links, net))
        oracle = brute_force_oracle(scopes, links, net)
        counts[oracle.status] = counts.get(oracle.status, 0) + 1
        if (exact.status, exact.objective_value) != (oracle.status, oracle.objective_value):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 60
    return ok, f"mismatches={mismatches} verdicts={counts} time={elapsed:.1f}s (<60s)"


def criterion_2():
    """20 philosophers on 4 nodes: feasible optimum that passes the independent checker."""
    design = philosophers_design(20)
    net = philosopher_network(4, design, per_node=6)
    t0 = time.perf_counter()
    result, _ = map_application(design.scopes, design.links, net)
    elapsed = time.perf_counter() - t0
    violations = check_assignment(result.chosen, design.scopes, design.links, net) if result.status == OPTIMAL else ["not solved"]
    per_node = {n: sum(1 for v in result.chosen.values() if v == n) for n in net.node_ids}
    ok = result.status == OPTIMAL and not violations and elapsed < 30
    return ok, f"status={result.status} z={result.objective_value} per_node={per_node} violations={len(violations)} time={elapsed:.2f}s (<30s)"


def criterion_3():
    """Constraint count linear in |N| (R^2 >= 0.98); solve time super-linear."""
    design = philosophers_design(20)
    sizes = [2, 4, 8, 16]
    counts, times = [], []
    for n in sizes:
        net = philosopher_network(n, design, per_node=10)
        best = math.inf
        for _ in range(3):
            result = solve(build_pbo(design.scopes, design.links, net))
            best = min(best, result.solve_ms)
        if result.status != OPTIMAL:
            return False, f"|N|={n} not solved: {result.status}"
        counts.append(result.constraint_count)
        times.append(best)
    r2 = r_squared(sizes, counts)
    logs = [(math.log(n), math.log(t)) for n, t in zip(sizes, times)]
    slope = (logs[-1][1] - logs[0][1]) / (logs[-1][0] - logs[0][0])
    ok = r2 >= 0.98 and slope > 1
    timing = ", ".join(f"{n}:{t:.0f}ms" for n, t in zip(sizes, times))
    return ok, f"constraints={counts} R2={r2:.4f} (>=0.98) time[{timing}] log-log slope={slope:.2f} (>1)"


def _fixtures():
    out = []
    for n in (5, 14):
        net = chain_network(n)
        design = notifier_design(n)
        assignment, _ = map_application(design.scopes, design.links, net)
        out.append((f"discovery-chain{n}", net, instantiate(design, assignment.chosen, net)))
    for design in (fig5_design(), philosophers_design(3)):
        net, placement = one_scope_per_node(design)
        out.append((design.name, net, instantiate(design, placement, net)))
    # slots cap each node at six philosophers; memory leaves room for deployers
    design = philosophers_design(20)
    net = philosopher_network(4, design, per_node=6, memory=32768)
    assignment, _ = map_application(design.scopes, design.links, net)
    out.append(("philosophers-20-on-4", net, instantiate(design, assignment.chosen, net)))
    return out


_REPLAYS: dict = {}


def _replays():
    if not _REPLAYS:
        for name, net, placement in _fixtures():
            for strategy in STRATEGIES:
                result = replay_deployment(Simulation(net), make_plan(strategy, placement, net), strict=False)
                _REPLAYS[(name, strategy)] = result
    return _REPLAYS


def criterion_4():
    """Sum of D(i) equals the replay's wall-model total exactly, for every trace."""
    bad = []
    for key, result in _replays().items():
        per, total = deployment_time(result.trace)
        last = result.trace.steps[-1]
        if total != result.wall_ms or (result.trace.steps and last.T != 0):
            bad.append(f"{key}: {total} vs {result.wall_ms}")
    return not bad, f"traces={len(_replays())} mismatches={bad or 0}"


def _packets(net, placement, strategy):
    return replay_deployment(Simulation(net), make_plan(strategy, placement, net)).packets_hops


def criterion_5():
    """14-hop chain: composed payload shrinks every hop, self payload constant, composed cheaper than direct."""
    t0 = time.perf_counter()
    net = chain_network(14)
    design = notifier_design(14)
    assignment, _ = map_application(design.scopes, design.links, net)
    placement = instantiate(design, assignment.chosen, net)
    res = {s: replay_deployment(Simulation(net), make_plan(s, placement, net)) for s in STRATEGIES}
    comp = [c["P"] for c in res["composed"].carriers]
    selfp = [c["P"] for c in res["self"].carriers]
    decreasing = len(comp) == 14 and all(a > b for a, b in zip(comp, comp[1:]))
    # the flood is injected on the supervisor, so it has one more carrier than the chain has hops
    constant = len(selfp) >= 14 and len(set(selfp)) == 1
    cheaper = res["composed"].packets_hops < res["direct"].packets_hops
    # other assignments with at least two resources beyond hop 2
    rng = random.Random(5)
    others = []
    far = [n for n in net.node_ids if n != "sup" and net.distance("sup", n) > 2]
    for _ in range(4):
        k = rng.randint(1, len(far))
        nodes = sorted(rng.sample(far, k))
        sub = Design((Scope("notifier", design.scopes[0].resources, multiplicity=k),))
        chosen = {("notifier", i + 1): n for i, n in enumerate(nodes)}
        pl = instantiate(sub, chosen, net)
        others.append((k, _packets(net, pl, "composed"), _packets(net, pl, "direct")))
    others_ok = all(c < d for _, c, d in others)
    elapsed = time.perf_counter() - t0
    ok = decreasing and constant and cheaper and others_ok and elapsed < 10
    return ok, (
        f"composed P {comp[0]}..{comp[-1]} decreasing={decreasing}; self P={selfp[0]} x{len(selfp)} constant={constant}; "
        f"packets*hops composed={res['composed'].packets_hops} direct={res['direct'].packets_hops} self={res['self'].packets_hops}; "
        f"other assignments (nodes, composed, direct)={others} ; time={elapsed:.2f}s (<10s)"
    )


def _listing1(seed):
    net, res = listing1_setup()
    sim = Simulation(net, res, config=SimConfig(seed=seed))
    sim.run(25)
    ok = sim.stores["light"].values == LISTING1_FINAL["light"] and sim.stores["database"].values == LISTING1_FINAL["database"]
    return ok, sim.event_log_lines()


def _listing2(seed):
    net = ring_network(5)
    sim = Simulation(net, config=SimConfig(seed=seed))
    result = run_discovery(sim, horizon=200)
    ok = result.complete and all(len(info["neighbors"]) == 2 for info in result.services.values())
    return ok, sim.event_log_lines()


def _listing3(seed):
    net, res = listing3_setup()
    sim = Simulation(net, res, config=SimConfig(seed=seed))
    wire = []
    sim.listeners.append(lambda node, req, result: wire.append((node, req.path, req.payload)))
    sim.run(20)
    ok = sim.stores["coap1"].values.get("/S/heater") == LISTING3_HEATER and ("coap1", "/S/heater", LISTING3_WIRE_PAYLOAD) in wire
    return ok, sim.event_log_lines()


def _fig5(seed):
    design = fig5_design()
    net, placement = one_scope_per_node(design)
    sim = simulation_from_design(design, placement, net, SimConfig(seed=seed))
    sim.run(30)
    store = sim.stores["n01"]
    return store.values == FIG5_FINAL and store.live_agents() == [], sim.event_log_lines()


def criterion_6():
    """Sensor, discovery, observe and differential scenarios reach their final states; logs repeat byte for byte."""
    parts = []
    ok = True
    for name, fn in (("listing1", _listing1), ("listing2", _listing2), ("listing3", _listing3), ("fig5", _fig5)):
        good, log_a = fn(11)
        _, log_b = fn(11)
        same = log_a == log_b and bool(log_a)
        ok = ok and good and same
        parts.append(f"{name}: final={'ok' if good else 'WRONG'} identical_logs={same}")
    return ok, "; ".join(parts)


def criterion_7():
    """Simulated firing sequences are paths of the state graph; deadlock and termination verdicts."""
    details = []
    ok = True
    for design in (fig5_design(), philosophers_design(3)):
        net_pn = compile_to_net(design)
        graph = explore(net_pn)
        report = check_properties(graph)
        net, base = one_scope_per_node(design)
        nodes = [base[(s.id, 1)] for s in design.scopes]
        runs = 0
        for order in itertools.permutations(range(len(nodes))):
            for seed in range(3):
                placement = {(s.id, 1): nodes[i] for s, i in zip(design.scopes, order)}
                sim = simulation_from_design(design, placement, net, SimConfig(seed=seed))
                sim.run(40)
                labels = labels_from_trace(sim.trace, {n: s for (s, _), n in placement.items()})
                good, _ = follows_path(graph, labels)
                ok = ok and good and bool(labels)
                runs += 1
        details.append(f"{design.name}: {runs} runs on graph of {report.states} states")
        if design.name == "differential":
            term = report["termination"].status
            ok = ok and term == "holds"
            details.append(f"termination={term}")
        else:
            verdict = report["deadlock_freedom"]
            dead = replay(net_pn, verdict.path) if verdict.path else None
            real = dead is not None and dead.live_transitions() and not successors(net_pn, dead)
            ok = ok and verdict.status == "fails" and bool(real)
            details.append(f"deadlock counterexample length={len(verdict.path or [])} replays={bool(real)}")
    return ok, "; ".join(details)


def criterion_8():
    """Direct, composed and self deployment leave identical (node, resource) placements."""
    by_fixture: dict = {}
    for (name, strategy), result in _replays().items():
        by_fixture.setdefault(name, {})[strategy] = (result.placement, result.matches)
    bad = [
        name
        for name, runs in by_fixture.items()
        if not all(m for _, m in runs.values()) or len({repr(p) for p, _ in runs.values()}) != 1
    ]
    return not bad, f"fixtures={sorted(by_fixture)} differing={bad or 0}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


def report_line(i: int, ok: bool, detail: str) -> str:
    return f"[{'PASS' if ok else 'FAIL'}] criterion {i}: {detail}"


@pytest.mark.parametrize("index", range(1, len(CRITERIA) + 1))
def test_criterion(index, capsys):
    ok, detail = CRITERIA[index - 1]()
    with capsys.disabled():
        print("\n" + report_line(index, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failures = 0
    for i, fn in enumerate(CRITERIA, 1):
        ok, detail = fn()
        failures += not ok
        print(report_line(i, ok, detail), flush=True)
    sys.exit(1 if failures else 0)
