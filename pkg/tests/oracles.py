"""Independent reference computations and frozen expected values for the tests."""
from __future__ import annotations

import itertools
import math
import random

from choreo.model import INF, CommLink, ExternalRef, Network, Node, Resource, Scope


def floyd_warshall(network: Network) -> list[list[float]]:
    ids = [n.id for n in network.nodes]
    pos = {n: i for i, n in enumerate(ids)}
    d = [[0 if i == j else INF for j in range(len(ids))] for i in range(len(ids))]
    for a, b in network.adjacency:
        d[pos[a]][pos[b]] = min(d[pos[a]][pos[b]], 1)
        if not network.directed:
            d[pos[b]][pos[a]] = min(d[pos[b]][pos[a]], 1)
    for k, i, j in itertools.product(range(len(ids)), repeat=3):
        if d[i][k] + d[k][j] < d[i][j]:
            d[i][j] = d[i][k] + d[k][j]
    return d


def naive_objective(chosen, links, network) -> float:
    """Sum over links and over every pair of instances of f*p*d, written out directly."""
    total = 0
    for link in links:
        for (s1, _), n1 in chosen.items():
            for (s2, _), n2 in chosen.items():
                if s1 == link.from_scope and s2 == link.to_scope:
                    total += link.frequency * link.weight * network.distance(n1, n2)
    return total


def naive_feasible(chosen, scopes, links, network) -> bool:
    by_node: dict[str, list[Scope]] = {}
    for s in scopes:
        nodes = [n for (sid, _), n in chosen.items() if sid == s.id]
        if len(nodes) != s.multiplicity or len(set(nodes)) != len(nodes):
            return False
        for n in nodes:
            by_node.setdefault(n, []).append(s)
    for node in network.nodes:
        hosted = by_node.get(node.id, [])
        for t, cap in node.free_slots.items():
            if sum(s.demand(t) for s in hosted) > cap:
                return False
        if sum(s.size for s in hosted) > node.available_memory:
            return False
        for s in hosted:
            if any(not node.has_external(e.name, e.rtype) for e in s.requires):
                return False
    for (s1, _), n1 in chosen.items():
        for (s2, _), n2 in chosen.items():
            a = next(s for s in scopes if s.id == s1)
            b = next(s for s in scopes if s.id == s2)
            lims = [x for x in (a.hop_limits.get(s2), b.hop_limits.get(s1)) if x is not None]
            if s1 != s2 and lims and network.distance(n1, n2) > min(lims):
                return False
            linked = any(l.from_scope == s1 and l.to_scope == s2 for l in links)
            if linked and network.distance(n1, n2) == INF:
                return False
    return True


def random_instance(rng: random.Random, max_scopes=4, max_nodes=4, max_mult=2):
    """Small mapping instance: scopes with A/L resources, optional external requirement and hop limits."""
    nn = rng.randint(1, max_nodes)
    nodes = []
    for i in range(nn):
        ext = (Resource("temp", "S", "x"),) if rng.random() < 0.5 else ()
        nodes.append(
            Node(
                f"n{i}",
                memory_bytes=rng.randint(10, 80),
                free_slots={"A": rng.randint(1, 5), "L": rng.randint(1, 5), "S": rng.randint(0, 1)},
                external_resources=ext,
            )
        )
    edges = {(f"n{i}", f"n{j}") for i in range(nn) for j in range(i + 1, nn) if rng.random() < 0.6}
    net = Network(tuple(nodes), frozenset(edges))
    ns = rng.randint(1, max_scopes)
    scopes = []
    for s in range(ns):
        res = tuple(Resource(f"r{s}_{k}", rng.choice("AL"), "v" * rng.randint(1, 10)) for k in range(rng.randint(1, 2)))
        req = (ExternalRef("temp"),) if rng.random() < 0.2 else ()
        limits = {f"s{rng.randrange(ns)}": rng.randint(0, 2)} if rng.random() < 0.2 else {}
        limits.pop(f"s{s}", None)
        scopes.append(Scope(f"s{s}", res, rng.randint(1, max_mult), hop_limits=limits, requires=req))
    links = [
        CommLink(f"{a.id}/L/x", f"{b.id}/L/y", rng.randint(1, 3), rng.randint(1, 3))
        for a in scopes
        for b in scopes
        if a.id != b.id and rng.random() < 0.5
    ]
    return scopes, links, net


def r_squared(xs, ys) -> float:
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    icept = my - slope * mx
    ss_res = sum((y - (icept + slope * x)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - my) ** 2 for y in ys)
    return 1.0 if ss_tot == 0 else 1 - ss_res / ss_tot


def discovery_bound(diameter: int, period: int, slack: int = 10) -> int:
    """Ticks within which a flood plus periodic push should cover every node."""
    return diameter + period * slack


# frozen expected values ------------------------------------------------------

LISTING1_FINAL = {"light": {"/L/light": "3"}, "database": {"/database/light": "40"}}
FIG5_FINAL = {"/L/p0": "20", "/L/p1": "70"}
LISTING3_HEATER = "22.9 C"
LISTING3_WIRE_PAYLOAD = "?value=22.9 C"

PHILOSOPHER_CONSTRAINTS = {2: 26, 4: 32, 8: 44, 16: 68}
CHAIN14_PACKETS_HOPS = {"direct": 210, "composed": 40, "self": 224}
CHAIN14_COMPOSED_FIRST_LAST = (4713, 306)


def is_finite(x) -> bool:
    return not (isinstance(x, float) and math.isinf(x))
