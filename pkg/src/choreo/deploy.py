"""Deployment plans: direct injection, nested (Matroska) deployers and flooding.

Every plan is a list of injection units sent by the supervisor.  Machinery
created by the plans (deployers, flood markers) uses names starting with ``_``
so it can be told apart from application resources.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .agent import DEFAULT_PORT, MULTICAST_NEIGHBORS, SELF_ADDRESS, Agent, serialize_doc
from .model import INF, Network, Resource, ResourceType

MACHINERY_PREFIX = "_"
STRATEGIES = ("direct", "composed", "self")

Placement = Mapping[str, Sequence[Resource]]


class PlanError(ValueError):
    pass


class TraceError(ValueError):
    pass


def is_machinery(path: str) -> bool:
    return path.rsplit("/", 1)[-1].startswith(MACHINERY_PREFIX)


@dataclass(frozen=True)
class InjectionUnit:
    entry: str
    method: str
    path: str
    payload: str
    wave: int = 0
    installs: int = 1

    @property
    def size(self) -> int:
        return len(self.payload.encode("utf-8"))

    def to_dict(self) -> dict:
        out = {"entry": self.entry, "method": self.method, "path": self.path, "wave": self.wave, "size": self.size, "installs": self.installs}
        out["payload"] = json.loads(self.payload) if self.path.startswith("/A/") else self.payload
        return out


@dataclass
class DeploymentPlan:
    strategy: str
    supervisor: str
    units: list[InjectionUnit]
    expected: dict[str, dict[str, str]]
    path_tree: dict[str, str | None] = field(default_factory=dict)
    reservation: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def waves(self) -> int:
        return 1 + max((u.wave for u in self.units), default=-1)

    def is_carrier(self, path: str) -> bool:
        """Whether a request to ``path`` carries deployment payload."""
        if self.strategy == "composed":
            return path.startswith("/A/_dep_")
        if self.strategy == "self":
            return path == "/A/_flood"
        return any(u.path == path for u in self.units)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "supervisor": self.supervisor,
            "waves": self.waves,
            "units": [u.to_dict() for u in self.units],
            "path_tree": self.path_tree,
            "reservation": self.reservation,
            "expected": self.expected,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def expected_placement(placement: Placement) -> dict[str, dict[str, str]]:
    return {n: {r.path: r.value for r in rs} for n, rs in sorted(placement.items()) if rs}


def _install_action(r: Resource):
    """(payload, target) installing ``r`` on the node that runs the carrier."""
    target = f"POST[{SELF_ADDRESS}]:{DEFAULT_PORT}{r.path}"
    if r.rtype is ResourceType.AGENT:
        return json.loads(r.value), target
    return r.value, target


def _free_memory(network: Network, placement: Placement) -> dict[str, int]:
    return {n.id: n.available_memory - sum(r.size for r in placement.get(n.id, ())) for n in network.nodes}


# ---------------------------------------------------------------------------
# direct


def plan_direct(placement: Placement, network: Network) -> DeploymentPlan:
    sup = network.supervisor_id
    units = []
    for node_id, resources in sorted(placement.items()):
        if network.distance(sup, node_id) == INF:
            raise PlanError(f"node {node_id} is hidden from supervisor {sup}")
        for r in resources:
            units.append(InjectionUnit(node_id, "POST", r.path, r.value))
    return DeploymentPlan("direct", sup, units, expected_placement(placement))


# ---------------------------------------------------------------------------
# composed


def bfs_tree(network: Network, root: str) -> dict[str, str | None]:
    """Shortest-hop tree as child -> parent; ties go to the smallest parent id."""
    parent: dict[str, str | None] = {root: None}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        succ = sorted(b for a, b in network.adjacency if a == u)
        if not network.directed:
            succ = sorted(set(succ) | {a for a, b in network.adjacency if b == u})
        for v in succ:
            if v not in parent:
                parent[v] = u
                queue.append(v)
    return parent


def _tree_path(tree: Mapping[str, str | None], a: str, b: str) -> list[str]:
    """Nodes on the tree route from ancestor ``a`` down to ``b`` (both included)."""
    path = [b]
    while path[-1] != a:
        p = tree.get(path[-1])
        if p is None:
            raise PlanError(f"{a} is not an ancestor of {b} in the routing tree")
        path.append(p)
    return path[::-1]


def _deployer_doc(node_id: str, resources: Sequence[Resource], children: Sequence[tuple[str, dict]], network: Network) -> dict:
    posts, targets = [], []
    for r in resources:
        payload, target = _install_action(r)
        posts.append(payload)
        targets.append(target)
    for child, doc in children:
        posts.append(doc)
        targets.append(f"POST[{network.node(child).address}]:{DEFAULT_PORT}/A/{doc['NAME']}")
    posts.append("")
    targets.append(f"DELETE[{SELF_ADDRESS}]:{DEFAULT_PORT}/A/_dep_{node_id}")
    return {"NAME": f"_dep_{node_id}", "PRE": "1==1", "POST": posts, "TARGET": targets}


def plan_composed(placement: Placement, network: Network, routing_tree: Mapping[str, str | None] | None = None) -> DeploymentPlan:
    sup = network.supervisor_id
    tree = dict(routing_tree) if routing_tree is not None else bfs_tree(network, sup)
    hosts = {n for n, rs in placement.items() if rs}
    for n in hosts:
        if n not in tree:
            raise PlanError(f"node {n} is not reachable through the routing tree")
    free = _free_memory(network, placement)

    # prune the tree to hosting nodes: each host hangs below its nearest hosting ancestor
    pruned: dict[str, str | None] = {}
    for n in sorted(hosts):
        p = tree[n]
        while p is not None and p not in hosts:
            p = tree[p]
        pruned[n] = p
    children: dict[str | None, list[str]] = {}
    for n, p in sorted(pruned.items()):
        children.setdefault(p, []).append(n)

    def cap(origin: str, node: str) -> int:
        return min(free[v] for v in _tree_path(tree, origin, node)[1:]) if origin != node else free[node]

    def build(node: str, origin: str, wave: int):
        """(doc, extra units) for ``node`` carried from ``origin``."""
        built = {c: build(c, node, wave) for c in children.get(node, [])}
        included = sorted(built)
        limit = cap(origin, node)
        dropped = []
        while True:
            doc = _deployer_doc(node, placement[node], [(c, built[c][0]) for c in included], network)
            if len(serialize_doc(doc).encode()) <= limit:
                break
            if not included:
                raise PlanError(f"deployer for {node} ({len(serialize_doc(doc))} bytes) exceeds free memory {limit} on its route")
            biggest = max(included, key=lambda c: (len(serialize_doc(built[c][0])), c))
            included.remove(biggest)
            dropped.append(biggest)
        extras = [u for c in included for u in built[c][1]]
        for c in sorted(dropped):
            cdoc, cextra = build(c, sup, wave + 1)
            extras.append((c, cdoc, wave + 1))
            extras.extend(cextra)
        return doc, extras

    units: list[InjectionUnit] = []
    for root in children.get(None, []):
        doc, extras = build(root, sup, 0)
        units.append(InjectionUnit(root, "POST", f"/A/{doc['NAME']}", serialize_doc(doc), 0, len(placement[root])))
        for n, d, w in extras:
            units.append(InjectionUnit(n, "POST", f"/A/{d['NAME']}", serialize_doc(d), w, len(placement[n])))
    units.sort(key=lambda u: (u.wave, u.entry))

    sizes = _nested_sizes(units)
    reservation = {n: {"A_slots": 1, "bytes": sizes.get(n, 0)} for n in sorted(hosts)}
    return DeploymentPlan("composed", sup, units, expected_placement(placement), pruned, reservation)


def _nested_sizes(units: Iterable[InjectionUnit]) -> dict[str, int]:
    """Largest deployer stored on each node, nested ones included."""
    out: dict[str, int] = {}

    def walk(doc: dict):
        name = doc["NAME"]
        if name.startswith("_dep_"):
            node = name[len("_dep_"):]
            out[node] = max(out.get(node, 0), len(serialize_doc(doc).encode()))
        for p in doc["POST"]:
            if isinstance(p, dict) and p.get("NAME", "").startswith("_dep_"):
                walk(p)

    for u in units:
        walk(json.loads(u.payload))
    return out


def unit_chain_sizes(plan: DeploymentPlan) -> list[list[tuple[str, int]]]:
    """Per unit, the (node, deployer size) sequence obtained by peeling nested deployers."""
    chains = []
    for u in plan.units:
        doc = json.loads(u.payload)
        chain = []
        while doc is not None:
            chain.append((doc["NAME"][len("_dep_"):], len(serialize_doc(doc).encode())))
            nested = [p for p in doc["POST"] if isinstance(p, dict) and p.get("NAME", "").startswith("_dep_")]
            doc = nested[0] if len(nested) == 1 else None
        chains.append(chain)
    return chains


# ---------------------------------------------------------------------------
# self deployment by flooding


def _flood_docs(installs: list[tuple[list, list]], cleanup: list[str]) -> tuple[dict, dict]:
    zclean = {
        "NAME": "_zclean",
        "PRE": "?L#_seen && S#time > L#_seen",
        "POST": [""] * (len(cleanup) + 2),
        "TARGET": [f"DELETE[{SELF_ADDRESS}]:{DEFAULT_PORT}/A/{n}" for n in ["_flood", *cleanup, "_zclean"]],
    }
    posts = ["S#time", "A#_flood", zclean, zclean]
    targets = [
        f"PUT[{SELF_ADDRESS}]:{DEFAULT_PORT}/L/_seen",
        f"POST[{MULTICAST_NEIGHBORS}]:{DEFAULT_PORT}/A/_flood",
        f"POST[{MULTICAST_NEIGHBORS}]:{DEFAULT_PORT}/A/_zclean",
        f"POST[{SELF_ADDRESS}]:{DEFAULT_PORT}/A/_zclean",
    ]
    for ps, ts in installs:
        posts.extend(ps)
        targets.extend(ts)
    posts.append("")
    targets.append(f"DELETE[{SELF_ADDRESS}]:{DEFAULT_PORT}/A/_flood")
    flood = {"NAME": "_flood", "PRE": "!?L#_seen", "POST": posts, "TARGET": targets}
    return flood, zclean


def plan_self(application, network: Network) -> DeploymentPlan | None:
    """One flooding agent carrying the whole application.

    ``application`` is either a placement (node -> resources), in which case
    every node gets a guarded installer keyed on its own address, or a
    sequence of agents/resources installed identically on every node.
    """
    sup = network.supervisor_id
    if isinstance(application, Mapping):
        placement = {n: list(rs) for n, rs in application.items() if rs}
        if not placement:
            return None
        installs, cleanup = [], []
        for node_id, resources in sorted(placement.items()):
            name = f"_inst_{node_id}"
            acts = [_install_action(r) for r in resources]
            inst = {
                "NAME": name,
                "PRE": f"S#address=='{network.node(node_id).address}'",
                "POST": [p for p, _ in acts] + [""],
                "TARGET": [t for _, t in acts] + [f"DELETE[{SELF_ADDRESS}]:{DEFAULT_PORT}/A/{name}"],
            }
            installs.append(([inst], [f"POST[{SELF_ADDRESS}]:{DEFAULT_PORT}/A/{name}"]))
            cleanup.append(name)
        expected = expected_placement(placement)
        free = _free_memory(network, placement)
    else:
        resources = [_as_resource(a) for a in application]
        if not resources:
            return None
        acts = [_install_action(r) for r in resources]
        installs = [([p for p, _ in acts], [t for _, t in acts])]
        cleanup = []
        expected = {n: {r.path: r.value for r in resources} for n in network.node_ids}
        free = _free_memory(network, {n: resources for n in network.node_ids})
    flood, _ = _flood_docs(installs, cleanup)
    payload = serialize_doc(flood)
    limit = min(free.values(), default=0)
    if len(payload.encode()) > limit:
        raise PlanError(f"flooding agent of {len(payload.encode())} bytes exceeds the smallest free memory {limit}")
    unit = InjectionUnit(sup, "POST", "/A/_flood", payload, 0, 0)
    return DeploymentPlan("self", sup, [unit], expected)


def _as_resource(item) -> Resource:
    if isinstance(item, Resource):
        return item
    if isinstance(item, Agent):
        return Resource(item.name, "A", item.to_json())
    if isinstance(item, dict):
        return Resource(item["NAME"], "A", serialize_doc(item))
    raise TypeError(f"cannot deploy {item!r}")


def make_plan(strategy: str, placement: Placement, network: Network) -> DeploymentPlan:
    over = {n: -f for n, f in _free_memory(network, placement).items() if f < 0}
    if over:
        raise PlanError(f"placement overflows node memory by {over} bytes")
    if strategy == "direct":
        return plan_direct(placement, network)
    if strategy == "composed":
        return plan_composed(placement, network)
    if strategy == "self":
        plan = plan_self(placement, network)
        if plan is None:
            return DeploymentPlan("self", network.supervisor_id, [], {})
        return plan
    raise PlanError(f"unknown strategy {strategy!r}")


# ---------------------------------------------------------------------------
# timing


@dataclass(frozen=True)
class TraceStep:
    node: str
    W: int
    T: int
    L: int
    P: int
    hops: int = 0

    def to_dict(self) -> dict:
        return {"node": self.node, "W": self.W, "T": self.T, "L": self.L, "P": self.P, "hops": self.hops}


@dataclass
class DeploymentTrace:
    steps: list[TraceStep]

    def to_dict(self) -> dict:
        return {"steps": [s.to_dict() for s in self.steps]}


def deployment_time(trace: DeploymentTrace | Sequence[TraceStep]) -> tuple[list[int], int]:
    """Per-step D(i) = W(i) + (T(i) - W(i+1)) + L(i), with W past the last step taken as 0."""
    steps = trace.steps if isinstance(trace, DeploymentTrace) else list(trace)
    out = []
    for i, s in enumerate(steps):
        if min(s.W, s.T, s.L, s.P) < 0:
            raise TraceError(f"step {i}: negative component")
        w_next = steps[i + 1].W if i + 1 < len(steps) else 0
        tx = s.T - w_next
        if tx < 0:
            raise TraceError(f"step {i}: transmission time {s.T} is shorter than the next write {w_next}")
        out.append(s.W + tx + s.L)
    return out, sum(out)
