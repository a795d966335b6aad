"""Deterministic tick-based simulation of agent-hosting nodes.

Per tick: the clock is set, events due at that tick are applied in canonical
order (node id, kind, sequence number), then every node evaluates its live
agents in name order.  Requests to the node itself are applied right after
the firing that produced them; remote requests arrive after
``ceil(hops * hop_latency_ms / tick_ms)`` ticks (at least one).
"""
from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .agent import (
    MULTICAST_NEIGHBORS,
    SELF_ADDRESS,
    NodeContext,
    Request,
    ResourceStore,
    apply_request,
    packets_for,
    step_agent,
)
from .deploy import DeploymentPlan, DeploymentTrace, TraceStep, deployment_time, is_machinery
from .design import Design, instantiate
from .model import INF, Network, Resource

KIND_RANK = {"resource-write": 0, "request-delivery": 1}


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    tick_ms: int = 10
    hop_latency_ms: int = 10
    packet_bytes: int = 1024
    w_ms_per_byte: int = 1
    t_ms_per_packet_hop: int = 20
    l_ms_per_install: int = 5
    horizon: int = 1000

    def __post_init__(self):
        for name in ("tick_ms", "hop_latency_ms", "packet_bytes", "w_ms_per_byte", "t_ms_per_packet_hop", "l_ms_per_install"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")


@dataclass(frozen=True)
class SimInput:
    node: str
    path: str
    values: tuple[str, ...]
    start: int = 1
    period: int = 1


@dataclass
class Metrics:
    total_packets_hops: int = 0
    requests_sent: int = 0
    dropped: int = 0
    fires: dict[str, int] = field(default_factory=dict)
    history: dict[str, list] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total_packets_hops": self.total_packets_hops,
            "requests_sent": self.requests_sent,
            "dropped": self.dropped,
            "fires": dict(sorted(self.fires.items())),
            "history": {k: v for k, v in sorted(self.history.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class Simulation:
    def __init__(
        self,
        network: Network,
        resources: Mapping[str, Iterable[Resource]] | None = None,
        config: SimConfig | None = None,
        inputs: Iterable[SimInput] = (),
    ):
        self.network = network
        self.config = config or SimConfig()
        self.time = 0
        self.stores: dict[str, ResourceStore] = {}
        self.rngs: dict[str, random.Random] = {}
        for node in network.nodes:
            store = ResourceStore()
            for r in node.external_resources:
                store.write(r.path, r.value, token=False)
            self.stores[node.id] = store
            self.rngs[node.id] = random.Random(f"{self.config.seed}/{node.id}")
        self.queue: list = []
        self.seq = 0
        self.log: list[dict] = []
        # event labels in the vocabulary of the state graph, keyed by node
        self.trace: list[tuple] = []
        self.metrics = Metrics()
        self.subscriptions: dict[tuple[str, str], list[tuple[str, str]]] = {}
        self.listeners: list[Callable[[str, Request, object], None]] = []
        self.machinery_only = False
        for node_id, rs in (resources or {}).items():
            self.install(node_id, rs)
        for inp in inputs:
            self.add_input(inp)

    # -- setup -----------------------------------------------------------
    def install(self, node_id: str, resources: Iterable[Resource]) -> None:
        store = self.stores[node_id]
        for r in resources:
            if not store.write(r.path, r.value):
                raise ValueError(f"cannot install {r.path} on {node_id}: {store.diagnostics[-1]}")

    def add_input(self, inp: SimInput) -> None:
        for k, value in enumerate(inp.values):
            self._push(inp.start + k * inp.period, inp.node, "resource-write", (inp.path, str(value)))

    def _push(self, t: int, node: str, kind: str, data) -> None:
        heapq.heappush(self.queue, (t, node, KIND_RANK[kind], self.seq, kind, data))
        self.seq += 1

    def ctx(self, node_id: str) -> NodeContext:
        node = self.network.node(node_id)
        neighbors = tuple(self.network.node(n).address for n in self.network.neighbors(node_id))
        return NodeContext(node_id, node.address, self.time, self.rngs[node_id], neighbors, self.config.packet_bytes)

    def _emit(self, kind: str, node: str, **fields) -> None:
        entry = {"tick": self.time, "node": node, "kind": kind, **fields}
        self.log.append(entry)

    # -- request routing --------------------------------------------------
    def delay(self, hops) -> int:
        return max(1, math.ceil(hops * self.config.hop_latency_ms / self.config.tick_ms))

    def send(self, source: str, req: Request) -> None:
        """Route one request produced on ``source``."""
        own = self.network.node(source).address
        if req.address in (SELF_ADDRESS, own):
            self.deliver(source, req, local=True)
            return
        if req.address == MULTICAST_NEIGHBORS:
            dests = [(n, 1) for n in self.network.neighbors(source)]
        else:
            node = self.network.by_address(req.address)
            if node is None:
                self._drop(source, req, "unknown address")
                return
            dests = [(node.id, self.network.distance(source, node.id))]
        for dest, hops in dests:
            if hops == INF:
                self._drop(source, req, "no route")
                continue
            self.metrics.requests_sent += 1
            self.metrics.total_packets_hops += req.size_packets * int(hops)
            self._push(self.time + self.delay(hops), dest, "request-delivery", (req, int(hops)))

    def _drop(self, source: str, req: Request, why: str) -> None:
        self.metrics.dropped += 1
        self._emit("drop", source, path=req.path, payload_size=len(req.payload.encode()), address=req.address, reason=why)

    def deliver(self, node_id: str, req: Request, local: bool = False, hops: int = 0) -> None:
        store = self.stores[node_id]
        before = store.get(req.path)
        result = apply_request(store, req, self.ctx(node_id))
        self._emit(
            "request-delivery",
            node_id,
            path=req.path,
            payload_size=len(req.payload.encode()),
            method=req.method,
            source=req.source,
            local=local,
            hops=hops,
            ok=result.ok,
        )
        if not local:
            self.trace.append(("deliver", node_id, req.method, req.path, req.payload))
        if result.created_agent:
            self._emit("install", node_id, path=req.path, payload_size=len(req.payload.encode()))
        if result.deleted_agent:
            self._emit("delete", node_id, path=req.path, payload_size=0)
        for hook in self.listeners:
            hook(node_id, req, result)
        if req.method == "GET" and req.payload.startswith("observe="):
            observer_path = req.payload[len("observe="):]
            subs = self.subscriptions.setdefault((node_id, req.path), [])
            src_addr = self.network.node(req.source).address
            if (src_addr, observer_path) not in subs:
                subs.append((src_addr, observer_path))
            if result.value is not None:
                self._notify(node_id, req.path, result.value, [(src_addr, observer_path)])
            return
        after = store.get(req.path)
        if after != before:
            self._record(node_id, req.path, after)

    def _record(self, node_id: str, path: str, value) -> None:
        self.metrics.history.setdefault(node_id, []).append([self.time, path, value])
        subs = self.subscriptions.get((node_id, path))
        if subs and value is not None:
            self._notify(node_id, path, value, subs)

    def _notify(self, node_id: str, path: str, value: str, subs) -> None:
        for address, target_path in subs:
            req = Request("PUT", node_id, address, 5683, target_path, value, packets_for(value, self.config.packet_bytes), "observe")
            self.send(node_id, req)

    # -- main loop -------------------------------------------------------
    def step(self) -> None:
        while self.queue and self.queue[0][0] <= self.time:
            _t, node, _rank, _seq, kind, data = heapq.heappop(self.queue)
            if kind == "resource-write":
                path, value = data
                store = self.stores[node]
                before = store.get(path)
                store.write(path, value)
                self._emit("resource-write", node, path=path, payload_size=len(value.encode()), value=value)
                self.trace.append(("input", node, path, value))
                if value != before:
                    self._record(node, path, value)
            else:
                req, hops = data
                self.deliver(node, req, hops=hops)
        for node_id in sorted(self.stores):
            store = self.stores[node_id]
            for name in store.live_agents():
                agent = store.agents.get(name)
                if agent is None:
                    continue  # deleted earlier in this tick
                if self.machinery_only and not name.startswith("_"):
                    continue
                requests = step_agent(agent, store, self.ctx(node_id))
                if requests is None:
                    continue
                key = f"{node_id}/{name}"
                self.metrics.fires[key] = self.metrics.fires.get(key, 0) + 1
                self.trace.append(("fire", node_id, name))
                self._emit("agent-eval", node_id, path=f"/A/{name}", payload_size=sum(len(r.payload.encode()) for r in requests), agent=name, requests=len(requests))
                local = []
                for req in requests:
                    if req.address in (SELF_ADDRESS, self.network.node(node_id).address):
                        local.append(req)
                    else:
                        self.send(node_id, req)
                for req in local:
                    self.deliver(node_id, req, local=True)
        self.time += 1

    def run(self, horizon: int | None = None, until: Callable[["Simulation"], bool] | None = None) -> Metrics:
        """Advance ``horizon`` ticks (or until ``until`` holds at a tick boundary)."""
        end = self.time + (self.config.horizon if horizon is None else horizon)
        while self.time < end:
            if until is not None and until(self):
                break
            self.step()
        return self.metrics

    def quiescent(self) -> bool:
        return not self.queue

    def event_log_lines(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.log)

    def inject(self, entry: str, method: str, path: str, payload: str, source: str | None = None) -> None:
        """Send a request from ``source`` (default: supervisor) to node ``entry``."""
        source = source or self.network.supervisor_id
        req = Request(method, source, self.network.node(entry).address, 5683, path, payload, packets_for(payload, self.config.packet_bytes), "inject")
        if entry == source:
            self.deliver(entry, req, local=True)
        else:
            self.send(source, req)

    def placement(self, exclude_initial: Mapping[str, set[str]] | None = None) -> dict[str, dict[str, str]]:
        out = {}
        for node_id, store in sorted(self.stores.items()):
            skip = (exclude_initial or {}).get(node_id, set())
            vals = {p: v for p, v in store.values.items() if not is_machinery(p) and p not in skip}
            if vals:
                out[node_id] = dict(sorted(vals.items()))
        return out


# ---------------------------------------------------------------------------
# construction helpers


def simulation_from_design(design: Design, placement: Mapping[tuple[str, int], str], network: Network, config: SimConfig | None = None) -> Simulation:
    resources = instantiate(design, placement, network)
    inputs = []
    for inp in design.inputs:
        for (scope, _k), node in sorted(placement.items()):
            if scope == inp.scope:
                inputs.append(SimInput(node, inp.path, inp.values, inp.start, inp.period))
    return Simulation(network, resources, config, inputs)


# ---------------------------------------------------------------------------
# discovery


@dataclass
class DiscoveryResult:
    services: dict[str, dict]
    complete: bool
    missing: list[str]
    ticks: int

    def to_dict(self) -> dict:
        return {"complete": self.complete, "missing": self.missing, "ticks": self.ticks, "services": self.services}


def _parse_info(payload: str):
    try:
        return json.loads(payload.replace("'", '"'))
    except ValueError:
        return {"raw": payload}


def run_discovery(sim: Simulation, supervisor: str | None = None, horizon: int = 300, deployer: dict | None = None) -> DiscoveryResult:
    """Flood the discovery deployer from ``supervisor`` and gather what reaches /NetworkInfo."""
    from .scenarios import listing2_agent
    from .agent import serialize_doc

    supervisor = supervisor or sim.network.supervisor_id
    doc = deployer or listing2_agent(with_neighbors=True)
    services: dict[str, dict] = {}
    first_seen: dict[str, int] = {}

    def hook(node_id: str, req: Request, result) -> None:
        if node_id == supervisor and req.path == "/NetworkInfo" and req.method == "PUT":
            services[req.source] = _parse_info(req.payload)
            first_seen.setdefault(req.source, sim.time)

    sim.listeners.append(hook)
    sim.inject(supervisor, "POST", f"/A/{doc['NAME']}", serialize_doc(doc), source=supervisor)
    reachable = [n for n in sim.network.node_ids if sim.network.distance(supervisor, n) != INF]
    start = sim.time
    sim.run(horizon, until=lambda s: all(n in services for n in sim.network.node_ids))
    sim.listeners.remove(hook)
    missing = [n for n in sim.network.node_ids if n not in services]
    for n, info in services.items():
        info["first_seen"] = first_seen[n]
    return DiscoveryResult(dict(sorted(services.items())), not missing, missing, sim.time - start)


# ---------------------------------------------------------------------------
# deployment replay


@dataclass
class ReplayResult:
    trace: DeploymentTrace
    placement: dict[str, dict[str, str]]
    expected: dict[str, dict[str, str]]
    wall_ms: int
    packets_hops: int
    ticks: int
    carriers: list[dict]

    @property
    def matches(self) -> bool:
        return self.placement == self.expected

    def diff(self) -> dict:
        out = {}
        for n in sorted(set(self.placement) | set(self.expected)):
            a, b = self.placement.get(n, {}), self.expected.get(n, {})
            if a != b:
                out[n] = {
                    "missing": sorted(set(b) - set(a)),
                    "unexpected": sorted(set(a) - set(b)),
                    "changed": sorted(p for p in set(a) & set(b) if a[p] != b[p]),
                }
        return out


class PlacementMismatch(AssertionError):
    pass


def replay_deployment(sim: Simulation, plan: DeploymentPlan, horizon: int = 5000, strict: bool = True) -> ReplayResult:
    """Run ``plan`` wave by wave with application agents dormant and record the trace."""
    cfg = sim.config
    initial = {n: set(s.values) for n, s in sim.stores.items()}
    carriers: list[dict] = []
    visited: set[str] = set()
    installs = {n: len(v) for n, v in plan.expected.items()}

    def hook(node_id: str, req: Request, result) -> None:
        if not plan.is_carrier(req.path) or req.method not in ("POST", "PUT") or not result.ok:
            return
        if plan.strategy == "direct":
            if req.agent != "inject":
                return
            n_inst = 1
        else:
            if node_id in visited:
                return
            visited.add(node_id)
            n_inst = installs.get(node_id, 0)
        hops = sim.network.distance(req.source, node_id)
        size = len(req.payload.encode())
        carriers.append({"node": node_id, "P": size, "hops": int(hops), "packets": req.size_packets, "installs": n_inst, "tick": sim.time})

    sim.listeners.append(hook)
    sim.machinery_only = True
    packets_before = sim.metrics.total_packets_hops
    start = sim.time

    def busy(s: Simulation) -> bool:
        return bool(s.queue) or any(name.startswith("_") for st in s.stores.values() for name in st.agents)

    try:
        for wave in range(plan.waves):
            for u in plan.units:
                if u.wave == wave:
                    sim.inject(u.entry, u.method, u.path, u.payload)
            sim.run(horizon, until=lambda s: not busy(s))
    finally:
        sim.listeners.remove(hook)
        sim.machinery_only = False

    # W(i) = w P(i), T(i) = tx(i+1) + W(i+1), L(i) = l installs(i); step 0 is the supervisor
    tx = [cfg.t_ms_per_packet_hop * c["hops"] * c["packets"] for c in carriers]
    writes = [cfg.w_ms_per_byte * c["P"] for c in carriers]
    steps = [TraceStep(plan.supervisor, 0, (tx[0] + writes[0]) if carriers else 0, 0, 0, 0)]
    for i, c in enumerate(carriers):
        nxt = (tx[i + 1] + writes[i + 1]) if i + 1 < len(carriers) else 0
        steps.append(TraceStep(c["node"], writes[i], nxt, cfg.l_ms_per_install * c["installs"], c["P"], c["hops"]))

    # independent serial timeline of the same carriers
    clock = 0
    for c in carriers:
        clock += cfg.t_ms_per_packet_hop * c["hops"] * c["packets"]
        clock += cfg.w_ms_per_byte * c["P"]
        clock += cfg.l_ms_per_install * c["installs"]

    result = ReplayResult(
        DeploymentTrace(steps),
        sim.placement(initial),
        plan.expected,
        clock,
        sim.metrics.total_packets_hops - packets_before,
        sim.time - start,
        carriers,
    )
    if strict and not result.matches:
        raise PlacementMismatch(f"deployment placement differs: {json.dumps(result.diff(), sort_keys=True)}")
    return result


def total_deployment_time(result: ReplayResult) -> int:
    return deployment_time(result.trace)[1]
