"""Reference choreographies and topologies used by the tests, scripts and CLI demos."""
from __future__ import annotations

import json

from .agent import serialize_doc
from .design import Design, InputSequence
from .model import CommLink, Network, Node, Resource, Scope

SUPERVISOR_ADDR = "aaaa::1"


def addr(i: int) -> str:
    return f"aaaa::{i:x}"


def agent_resource(doc: dict, name: str | None = None) -> Resource:
    return Resource(name or doc["NAME"], "A", serialize_doc(doc))


# ---------------------------------------------------------------------------
# topologies


def chain_network(
    n: int,
    *,
    supervisor: bool = True,
    memory: int = 65536,
    slots: int = 16,
    externals: tuple[Resource, ...] = (),
) -> Network:
    """``n`` chain nodes ``n01..``; with ``supervisor`` an extra hop ``sup`` heads the chain."""
    nodes, edges = [], []
    ids = [f"n{i:02d}" for i in range(1, n + 1)]
    if supervisor:
        nodes.append(Node("sup", SUPERVISOR_ADDR, memory, {"A": 0, "S": 0, "L": 0}))
    for k, nid in enumerate(ids):
        nodes.append(Node(nid, addr(k + 2 if supervisor else k + 1), memory, {"A": slots, "S": slots, "L": slots}, externals))
    chain = (["sup"] if supervisor else []) + ids
    edges = [(a, b) for a, b in zip(chain, chain[1:])]
    return Network(tuple(nodes), frozenset(edges), supervisor="sup" if supervisor else (ids[0] if ids else None))


def ring_network(n: int, *, memory: int = 65536, slots: int = 16, prefix: str = "n") -> Network:
    ids = [f"{prefix}{i:02d}" for i in range(1, n + 1)]
    nodes = [Node(nid, addr(k + 1), memory, {"A": slots, "S": slots, "L": slots}) for k, nid in enumerate(ids)]
    edges = [(ids[i], ids[(i + 1) % n]) for i in range(n)] if n > 1 else []
    if n == 2:
        edges = [(ids[0], ids[1])]
    return Network(tuple(nodes), frozenset(edges), supervisor=ids[0] if ids else None)


# ---------------------------------------------------------------------------
# Brightness sensor driving a light and a database


def listing1_agent() -> dict:
    return {
        "NAME": "AgentSensor",
        "PRE": "L#brighness<50 && S#time%10==0",
        "POST": ["{'value':'R#light+1'}", "L#brighness"],
        "TARGET": ["PUT[aaaa::2]:5683/L/light", "PUT[aaaa::1]:5683/database/light"],
    }


def listing1_setup(brightness: str = "40"):
    """(network, per-node resources). Database on aaaa::1, light on aaaa::2, sensor on aaaa::3."""
    net = Network(
        (
            Node("database", "aaaa::1", 4096, {"A": 4, "S": 4, "L": 4}),
            Node("light", "aaaa::2", 4096, {"A": 4, "S": 4, "L": 4}),
            Node("sensor", "aaaa::3", 4096, {"A": 4, "S": 4, "L": 4}),
        ),
        frozenset({("database", "light"), ("light", "sensor")}),
        supervisor="database",
    )
    resources = {
        "light": [Resource("light", "L", "0")],
        "sensor": [Resource("brighness", "L", brightness), agent_resource(listing1_agent())],
    }
    return net, resources


# ---------------------------------------------------------------------------
# Discovery by flooding


def discover_notifier(with_neighbors: bool = False, period: int = 5) -> dict:
    payload = "{'resources':S#resources,'neighbors':S#neighbors}" if with_neighbors else "{'resources':S#resources}"
    return {"PRE": f"S#rand%{period}==0", "POST": [payload], "TARGET": [f"PUT[{SUPERVISOR_ADDR}]:5683/NetworkInfo"]}


def listing2_agent(with_neighbors: bool = False, period: int = 5) -> dict:
    return {
        "NAME": "DiscoverDeployer",
        "PRE": f"S#rand%{period}==0",
        "POST": ["A#DiscoverDeployer", discover_notifier(with_neighbors, period)],
        "TARGET": ["POST[ff02::2]:5683/A/DiscoverDeployer", "POST[0::1]:5683/A/DiscoverNotifier"],
    }


# ---------------------------------------------------------------------------
# Observe, transcode, forward


def listing3_setup(temperature: str = "22.9 C"):
    """Plain CoAP devices expose their sensor and actuator as system resources."""
    net = Network(
        (
            Node("coap1", "aaaa::11", 4096, {"A": 0, "S": 0, "L": 0}, (Resource("heater", "S", ""),)),
            Node("emma", "aaaa::10", 4096, {"A": 8, "S": 4, "L": 8}),
            Node("coap2", "aaaa::12", 4096, {"A": 0, "S": 0, "L": 0}, (Resource("temperature", "S", temperature),)),
        ),
        frozenset({("coap1", "emma"), ("emma", "coap2")}),
        supervisor="emma",
    )
    subscriber = {
        "NAME": "Subscriber",
        "PRE": "!?L#subscribed",
        "POST": ["observe=/L/raw", "1"],
        "TARGET": ["GET[aaaa::12]:5683/S/temperature", "PUT[0::1]:5683/L/subscribed"],
    }
    transcoder = {"NAME": "Transcoder", "PRE": "?L#raw", "POST": ["?value=L#raw"], "TARGET": ["PUT[0::1]:5683/L/t"]}
    sender = {"NAME": "Sender", "PRE": "?L#t", "POST": ["?value=L#t"], "TARGET": ["PUT[aaaa::11]:5683/S/heater"]}
    resources = {"emma": [agent_resource(subscriber), agent_resource(transcoder), agent_resource(sender)]}
    return net, resources


# ---------------------------------------------------------------------------
# differential application with self-uninstall


def fig5_design(values=("90", "70", "20"), start: int = 1, period: int = 5) -> Design:
    t1 = {
        "NAME": "t1",
        "PRE": "L#p1 != L#p0 && L#p1 - L#p0 < 50",
        "POST": ["L#p0"],
        "TARGET": ["PUT[0::1]:5683/L/p1"],
    }
    t2 = {
        "NAME": "t2",
        "PRE": "L#p1 - L#p0 >= 50",
        "POST": ["", ""],
        "TARGET": ["DELETE[0::1]:5683/A/t1", "DELETE[0::1]:5683/A/t2"],
    }
    scope = Scope(
        "diff",
        (Resource("p0", "L", "100"), Resource("p1", "L", "100"), agent_resource(t1), agent_resource(t2)),
    )
    return Design((scope,), (), (InputSequence("diff", "/L/p0", tuple(values), start, period),), "differential")


# ---------------------------------------------------------------------------
# dining philosophers, naive token grabbing


def philosopher_id(i: int) -> str:
    return f"P{i:02d}"


def philosopher_scope(i: int, n: int) -> Scope:
    k = f"{i:02d}"
    left = f"{(i - 2) % n + 1:02d}"
    guard = f"L#fork_{k}==1 && L#hold_{k}==0"
    take = {
        "NAME": f"take_{k}",
        "PRE": guard,
        "POST": ["0", "1"],
        "TARGET": [f"PUT[0::1]:5683/L/fork_{k}", f"PUT[0::1]:5683/L/hold_{k}"],
    }
    give = {
        "NAME": f"give_{k}",
        "PRE": guard,
        "POST": ["0", f"{{'value':'R#hold_{left}+1'}}"],
        "TARGET": [f"PUT[0::1]:5683/L/fork_{k}", f"PUT[@{philosopher_id((i - 2) % n + 1)}]:5683/L/hold_{left}"],
    }
    return Scope(
        philosopher_id(i),
        (Resource(f"fork_{k}", "L", "1"), Resource(f"hold_{k}", "L", "0"), agent_resource(take), agent_resource(give)),
    )


def philosophers_design(n: int) -> Design:
    scopes = tuple(philosopher_scope(i, n) for i in range(1, n + 1))
    links = tuple(
        CommLink(f"{philosopher_id(i)}/A/give_{i:02d}", f"{philosopher_id((i - 2) % n + 1)}/L/hold_{(i - 2) % n + 1:02d}", 1, 1)
        for i in range(1, n + 1)
    ) if n > 1 else ()
    return Design(scopes, links, (), f"philosophers-{n}")


BINDING_SLACK = 16


def philosopher_network(
    n_nodes: int, design: Design, per_node: int = 6, topology: str = "ring", memory: int | None = None
) -> Network:
    """Identical nodes each able to host ``per_node`` philosopher scopes.

    By default memory is as tight as the slots, plus the few bytes an agent
    grows by when ``[@scope]`` targets are bound to real addresses after
    mapping.  Pass ``memory`` to leave headroom for deployment machinery.
    """
    biggest = max(s.size for s in design.scopes) + BINDING_SLACK
    ids = [f"n{i:02d}" for i in range(1, n_nodes + 1)]
    nodes = tuple(
        Node(nid, addr(k + 1), memory or per_node * biggest, {"A": per_node * 2, "S": 0, "L": per_node * 2})
        for k, nid in enumerate(ids)
    )
    if topology == "ring":
        edges = [(ids[i], ids[(i + 1) % n_nodes]) for i in range(n_nodes)] if n_nodes > 2 else list(zip(ids, ids[1:]))
    elif topology == "line":
        edges = list(zip(ids, ids[1:]))
    else:
        raise ValueError(f"unknown topology {topology}")
    return Network(nodes, frozenset(edges), supervisor=ids[0])


def one_scope_per_node(design: Design, prefix: str = "n") -> tuple[Network, dict]:
    """A line network with a node for every scope and the identity placement."""
    ids = [f"{prefix}{i:02d}" for i in range(1, len(design.scopes) + 1)]
    nodes = tuple(Node(nid, addr(k + 2), 65536, {"A": 16, "S": 16, "L": 16}) for k, nid in enumerate(ids))
    net = Network(nodes, frozenset(zip(ids, ids[1:])), supervisor=ids[0] if ids else None)
    placement = {(s.id, 1): nid for s, nid in zip(design.scopes, ids)}
    return net, placement


# ---------------------------------------------------------------------------
# discovery application used by the deployment benchmarks


def notifier_design(count: int) -> Design:
    """A scope holding the discovery notifier, to be mapped on ``count`` nodes."""
    doc = discover_notifier(with_neighbors=True)
    doc = {"NAME": "DiscoverNotifier", **doc}
    scope = Scope("notifier", (agent_resource(doc), Resource("period", "L", "5")), multiplicity=count)
    return Design((scope,), (), (), "discovery")


def dumps(doc) -> str:
    return json.dumps(doc, indent=2)
