"""Exact branch-and-bound over scope-instance placements, plus the exhaustive oracle
and the first-principles cost and constraint checks used to certify it."""
from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from ..model import INF, RESOURCE_TYPES, CommLink, Network, Scope, scope_comm_cost
from .problem import Instance, PboInstance, build_pbo, check_application_mappable, expand_instances, hop_limit, mappable_nodes

OPTIMAL, INFEASIBLE, TIMEOUT = "optimal", "infeasible", "timeout"
ORACLE_LIMIT = 10**7


@dataclass
class MappingAssignment:
    chosen: dict[Instance, str]
    objective_value: int | None
    status: str
    solve_ms: float = 0.0
    constraint_count: int = 0
    explored: int = 0
    note: str = ""

    @property
    def placement(self) -> dict[Instance, str]:
        return dict(self.chosen)

    def key(self) -> tuple:
        return tuple((s, n) for (s, _k), n in sorted(self.chosen.items()))

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective_value,
            "solve_ms": round(self.solve_ms, 3),
            "constraint_count": self.constraint_count,
            "explored": self.explored,
            "assignment": [{"scope_instance": f"{s}#{k}", "scope": s, "instance": k, "node": n} for (s, k), n in sorted(self.chosen.items())],
            **({"note": self.note} if self.note else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def assignment_from_dict(doc: Mapping) -> MappingAssignment:
    chosen = {(a["scope"], int(a["instance"])): a["node"] for a in doc.get("assignment", [])}
    return MappingAssignment(chosen, doc.get("objective"), doc.get("status", OPTIMAL), doc.get("solve_ms", 0.0), doc.get("constraint_count", 0))


# ---------------------------------------------------------------------------
# first-principles checks


def evaluate_cost(chosen: Mapping[Instance, str], links: Iterable[CommLink], network: Network):
    """z(X) straight from the definition: sum of c * d over linked instance placements."""
    links = tuple(links)
    per_scope: dict[str, list[str]] = {}
    for (s, _k), n in chosen.items():
        per_scope.setdefault(s, []).append(n)
    pairs = {(l.from_scope, l.to_scope) for l in links}
    total = 0
    for a, b in sorted(pairs):
        c = scope_comm_cost(a, b, links)
        for n in per_scope.get(a, []):
            for m in per_scope.get(b, []):
                d = network.distance(n, m)
                if d == INF:
                    return INF
                total += c * d
    return total


def check_assignment(chosen: Mapping[Instance, str], scopes: Iterable[Scope], links: Iterable[CommLink], network: Network) -> list[str]:
    """Violations of multiplicity, topology, slot and memory constraints (empty when valid)."""
    scopes = tuple(scopes)
    links = tuple(links)
    errors = []
    known = set(network.node_ids)
    by_node: dict[str, list[Scope]] = {}
    hosts: dict[str, list[str]] = {}
    by_id = {s.id: s for s in scopes}
    for (sid, k), n in chosen.items():
        if sid not in by_id:
            errors.append(f"unknown scope {sid}")
            continue
        if n not in known:
            errors.append(f"{sid}#{k} on unknown node {n}")
            continue
        hosts.setdefault(sid, []).append(n)
        by_node.setdefault(n, []).append(by_id[sid])
    for s in scopes:
        placed = hosts.get(s.id, [])
        if len(placed) != s.multiplicity:
            errors.append(f"multiplicity: {s.id} placed {len(placed)} times, needs {s.multiplicity}")
        if len(set(placed)) != len(placed):
            errors.append(f"multiplicity: {s.id} placed twice on one node")
        for n in placed:
            node = network.node(n)
            missing = [e.name for e in s.requires if not node.has_external(e.name, e.rtype)]
            if missing:
                errors.append(f"{s.id} on {n}: missing external {missing}")
    for n, group in sorted(by_node.items()):
        node = network.node(n)
        for t in RESOURCE_TYPES:
            need = sum(s.demand(t) for s in group)
            if need > node.free_slots[t]:
                errors.append(f"slots: node {n} type {t.value} needs {need} > {node.free_slots[t]}")
        mem = sum(s.size for s in group)
        if mem > node.available_memory:
            errors.append(f"memory: node {n} needs {mem} > {node.available_memory}")
    for a in scopes:
        for b in scopes:
            if a.id == b.id:
                continue
            c = scope_comm_cost(a, b, links)
            limit = hop_limit(a, b)
            for n in hosts.get(a.id, []):
                for m in hosts.get(b.id, []):
                    d = network.distance(n, m)
                    if c > 0 and d == INF:
                        errors.append(f"topology: {a.id}@{n} -> {b.id}@{m} has no route")
                    if limit is not None and a.id < b.id and d > limit:
                        errors.append(f"topology: {a.id}@{n} - {b.id}@{m} exceeds {limit} hops")
    return errors


# ---------------------------------------------------------------------------
# branch and bound


@dataclass
class SolveConfig:
    time_limit_s: float = 60.0
    tie_break: str = "lexicographic"  # or "first"


class _Search:
    def __init__(self, inst: PboInstance):
        net = inst.network
        self.inst = inst
        self.nodes = sorted(net.node_ids)
        pos = {n: i for i, n in enumerate(self.nodes)}
        order = sorted(inst.instances)
        self.order = order
        self.scope_of = [i[0] for i in order]
        by_id = {s.id: s for s in inst.scopes}
        self.demand = [
            [by_id[s].demand(t) for t in RESOURCE_TYPES] + [by_id[s].size] for s in self.scope_of
        ]
        self.cap0 = []
        for n in self.nodes:
            node = net.node(n)
            self.cap0.append([node.free_slots[t] for t in RESOURCE_TYPES] + [node.available_memory])
        self.domain = [sorted(pos[n] for n in inst.domains[i]) for i in order]
        self.d = [[net.distance(a, b) for b in self.nodes] for a in self.nodes]
        k = len(order)
        self.w = [[inst.cost.get((self.scope_of[a], self.scope_of[b]), 0) for b in range(k)] for a in range(k)]
        self.limit = [
            [hop_limit(by_id[self.scope_of[a]], by_id[self.scope_of[b]]) if self.scope_of[a] != self.scope_of[b] else None for b in range(k)]
            for a in range(k)
        ]
        self.neighbors = [[b for b in range(k) if b != a and (self.w[a][b] or self.w[b][a] or self.limit[a][b] is not None)] for a in range(k)]
        self.same = [[b for b in range(k) if b != a and self.scope_of[b] == self.scope_of[a]] for a in range(k)]
        self.explored = 0

    def inc(self, a: int, n: int, assign: list[int | None]):
        """Added cost of placing instance a on node n; None when forbidden."""
        total = 0
        for b in self.neighbors[a]:
            m = assign[b]
            if m is None:
                continue
            dab, dba = self.d[n][m], self.d[m][n]
            lim = self.limit[a][b]
            if lim is not None:
                # limit is checked in the (lower, higher) instance orientation
                dd = dab if self.order[a] < self.order[b] else dba
                if dd > lim:
                    return None
            wab, wba = self.w[a][b], self.w[b][a]
            if wab:
                if dab == INF:
                    return None
                total += wab * dab
            if wba:
                if dba == INF:
                    return None
                total += wba * dba
        return total

    def feasible(self, a: int, n: int, assign: list[int | None], cap: list[list[int]]) -> bool:
        dem = self.demand[a]
        c = cap[n]
        if any(dem[r] > c[r] for r in range(len(dem))):
            return False
        for b in self.same[a]:
            m = assign[b]
            if m is None:
                continue
            if m == n:
                return False
            # instances of one scope take increasing nodes
            if (b < a and m > n) or (b > a and m < n):
                return False
        return True

    def options(self, a: int, assign, cap) -> list[tuple[int, int]]:
        out = []
        for n in self.domain[a]:
            if not self.feasible(a, n, assign, cap):
                continue
            c = self.inc(a, n, assign)
            if c is not None:
                out.append((c, n))
        return out

    def run(self, deadline: float, canonical: bool, bound: float, strict: bool):
        """DFS; returns (best cost, best assignment, timed_out).

        ``strict`` prunes partial costs >= bound, otherwise > bound (used to
        enumerate ties in canonical order).
        """
        k = len(self.order)
        assign: list[int | None] = [None] * k
        cap = [list(c) for c in self.cap0]
        best = [bound, None]
        timed_out = [False]

        def prune(v) -> bool:
            return v >= best[0] if strict or best[1] is not None else v > best[0]

        def rec(depth: int, cost: float) -> bool:
            self.explored += 1
            if self.explored % 2048 == 0 and time.perf_counter() > deadline:
                timed_out[0] = True
                return True
            if depth == k:
                if best[1] is None or cost < best[0] or not prune(cost):
                    best[0], best[1] = cost, list(assign)
                return canonical
            # bound and forward check over every unassigned instance
            lb = cost
            choice, choice_opts, choice_key = None, None, None
            for a in range(k):
                if assign[a] is not None:
                    continue
                opts = self.options(a, assign, cap)
                if not opts:
                    return False
                lb += min(c for c, _ in opts)
                if canonical:
                    if choice is None:
                        choice, choice_opts = a, opts
                else:
                    weight = sum(self.w[a][b] + self.w[b][a] for b in self.neighbors[a] if assign[b] is not None)
                    key = (-weight, len(opts), a)
                    if choice_key is None or key < choice_key:
                        choice, choice_opts, choice_key = a, opts, key
            if prune(lb):
                return False
            if not self._capacity_ok(assign, cap):
                return False
            opts = sorted(choice_opts, key=lambda o: o[1]) if canonical else sorted(choice_opts)
            for c, n in opts:
                if prune(cost + c):
                    continue
                assign[choice] = n
                dem = self.demand[choice]
                for r in range(len(dem)):
                    cap[n][r] -= dem[r]
                stop = rec(depth + 1, cost + c)
                for r in range(len(dem)):
                    cap[n][r] += dem[r]
                assign[choice] = None
                if stop:
                    return True
            return False

        rec(0, 0)
        return best[0], best[1], timed_out[0]

    def _capacity_ok(self, assign, cap) -> bool:
        # aggregate demand of unassigned instances must fit the free capacity of their domains
        reach = set()
        need = [0] * (len(RESOURCE_TYPES) + 1)
        for a, n in enumerate(assign):
            if n is None:
                reach.update(self.domain[a])
                for r, v in enumerate(self.demand[a]):
                    need[r] += v
        if not reach:
            return True
        return all(need[r] <= sum(cap[n][r] for n in reach) for r in range(len(need)))


def solve(instance: PboInstance, config: SolveConfig | None = None) -> MappingAssignment:
    """Exact optimum; ties go to the lexicographically smallest (scope, node) set."""
    config = config or SolveConfig()
    t0 = time.perf_counter()
    deadline = t0 + config.time_limit_s
    count = instance.constraint_count
    if any(not instance.domains[i] for i in instance.instances):
        return MappingAssignment({}, None, INFEASIBLE, (time.perf_counter() - t0) * 1000, count, 0, "a scope has no mappable node")
    search = _Search(instance)
    best, assign, timed_out = search.run(deadline, canonical=False, bound=math.inf, strict=True)
    if assign is not None and not timed_out and config.tie_break == "lexicographic":
        _, lex, t2 = search.run(deadline, canonical=True, bound=best, strict=False)
        if lex is not None:
            assign = lex
        timed_out = timed_out or t2
    ms = (time.perf_counter() - t0) * 1000
    if assign is None:
        status = TIMEOUT if timed_out else INFEASIBLE
        return MappingAssignment({}, None, status, ms, count, search.explored)
    chosen = {search.order[a]: search.nodes[n] for a, n in enumerate(assign)}
    return MappingAssignment(chosen, int(best), TIMEOUT if timed_out else OPTIMAL, ms, count, search.explored)


def map_application(scopes, links, network: Network, config: SolveConfig | None = None) -> tuple[MappingAssignment, object]:
    """Pre-check, encode and solve; the pre-check short-circuits hopeless instances."""
    scopes = tuple(scopes)
    report = check_application_mappable(scopes, network)
    if not report.maybe_satisfiable:
        return MappingAssignment({}, None, INFEASIBLE, 0.0, 0, 0, "infeasible before solve"), report
    inst = build_pbo(scopes, links, network)
    return solve(inst, config), report


# ---------------------------------------------------------------------------
# exhaustive oracle


class OracleTooLarge(ValueError):
    pass


def brute_force_oracle(scopes: Iterable[Scope], links: Iterable[CommLink], network: Network) -> MappingAssignment:
    """Enumerate every placement; certify with the independent checker and cost."""
    scopes = tuple(sorted(scopes, key=lambda s: s.id))
    links = tuple(links)
    t0 = time.perf_counter()
    instances = expand_instances(scopes)
    by_id = {s.id: s for s in scopes}
    domains = [sorted(mappable_nodes(by_id[i[0]], network)) for i in instances]
    size = math.prod(len(d) for d in domains)
    if size > ORACLE_LIMIT:
        raise OracleTooLarge(f"{size} placements exceed the oracle limit {ORACLE_LIMIT}")
    best_cost, best_key, best = None, None, None
    count = 0
    for combo in itertools.product(*domains):
        count += 1
        chosen = dict(zip(instances, combo))
        # canonical form only: instances of one scope on increasing nodes
        if any(a[0] == b[0] and na >= nb for (a, na), (b, nb) in zip(list(chosen.items()), list(chosen.items())[1:])):
            continue
        if check_assignment(chosen, scopes, links, network):
            continue
        cost = evaluate_cost(chosen, links, network)
        key = tuple(combo)
        if best is None or cost < best_cost or (cost == best_cost and key < best_key):
            best_cost, best_key, best = cost, key, chosen
    ms = (time.perf_counter() - t0) * 1000
    if best is None:
        return MappingAssignment({}, None, INFEASIBLE, ms, 0, count)
    return MappingAssignment(best, int(best_cost), OPTIMAL, ms, 0, count)
