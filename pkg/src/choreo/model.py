"""Shared data model: resources, scopes, nodes, networks and communication costs."""
from __future__ import annotations

import enum
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

INF = math.inf


def is_inf(d) -> bool:
    return d == INF


def hop_product(cost: int, distance) -> float | int:
    """``cost * distance`` with a zero cost absorbing an infinite distance."""
    if cost == 0:
        return 0
    return INF if distance == INF else cost * distance


class ModelError(ValueError):
    pass


class ResourceType(str, enum.Enum):
    AGENT = "A"
    SYSTEM = "S"
    LOCAL = "L"

    @classmethod
    def parse(cls, tag: str | "ResourceType") -> "ResourceType":
        if isinstance(tag, ResourceType):
            return tag
        try:
            return cls(str(tag).strip().upper()[:1])
        except ValueError:
            raise ModelError(f"unknown resource type {tag!r}") from None


RESOURCE_TYPES = (ResourceType.AGENT, ResourceType.SYSTEM, ResourceType.LOCAL)


@dataclass(frozen=True)
class Resource:
    name: str
    rtype: ResourceType
    value: str = ""
    scope_path: str = ""
    size_bytes: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "rtype", ResourceType.parse(self.rtype))
        if self.size_bytes is not None and self.size_bytes < 0:
            raise ModelError(f"negative size for resource {self.name}")

    @property
    def path(self) -> str:
        return f"/{self.rtype.value}/{self.name}"

    @property
    def size(self) -> int:
        # explicit sizes win; otherwise the serialized value length
        if self.size_bytes is not None:
            return self.size_bytes
        return len(self.value.encode("utf-8"))


def total_size(resources: Iterable[Resource]) -> int:
    return sum(r.size for r in resources)


@dataclass(frozen=True)
class Node:
    id: str
    address: str = ""
    memory_bytes: int = 0
    free_slots: Mapping[ResourceType, int] = field(default_factory=dict)
    external_resources: tuple[Resource, ...] = ()
    hosted: tuple[Resource, ...] = ()

    def __post_init__(self):
        slots = {t: int(self.free_slots.get(t, self.free_slots.get(t.value, 0))) for t in RESOURCE_TYPES}
        object.__setattr__(self, "free_slots", slots)
        object.__setattr__(self, "external_resources", tuple(self.external_resources))
        object.__setattr__(self, "hosted", tuple(self.hosted))
        if not self.address:
            object.__setattr__(self, "address", self.id)
        if self.memory_bytes < 0 or any(v < 0 for v in slots.values()):
            raise ModelError(f"node {self.id}: negative capacity")
        if total_size(self.external_resources) + total_size(self.hosted) > self.memory_bytes:
            raise ModelError(f"node {self.id}: resources exceed memory_bytes")
        for t in RESOURCE_TYPES:
            if sum(1 for r in self.hosted if r.rtype is t) > slots[t]:
                raise ModelError(f"node {self.id}: hosted {t.value} resources exceed free slots")
        ext_paths = {r.path for r in self.external_resources}
        if len(ext_paths) != len(self.external_resources):
            raise ModelError(f"node {self.id}: duplicate external resource path")
        if ext_paths & {r.path for r in self.hosted}:
            raise ModelError(f"node {self.id}: hosted and external resources overlap")

    @property
    def available_memory(self) -> int:
        """size(n) - size(external resources)."""
        return self.memory_bytes - total_size(self.external_resources)

    def has_external(self, name: str, rtype: ResourceType) -> bool:
        return any(r.name == name and r.rtype is rtype for r in self.external_resources)


@dataclass(frozen=True)
class Network:
    nodes: tuple[Node, ...]
    adjacency: frozenset[tuple[str, str]] = frozenset()
    directed: bool = False
    distances: tuple[tuple[float, ...], ...] | None = None
    supervisor: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ModelError("duplicate node ids")
        known = set(ids)
        edges = set()
        for a, b in self.adjacency:
            if a not in known or b not in known:
                raise ModelError(f"edge ({a}, {b}) references unknown node")
            edges.add((a, b))
        object.__setattr__(self, "adjacency", frozenset(edges))
        if self.distances is None:
            object.__setattr__(self, "distances", compute_distances(self))
        else:
            d = tuple(tuple(INF if v is None or v == "inf" else v for v in row) for row in self.distances)
            if len(d) != len(ids) or any(len(row) != len(ids) for row in d):
                raise ModelError("distance matrix shape does not match node count")
            for i in range(len(ids)):
                if d[i][i] != 0:
                    raise ModelError(f"distance from {ids[i]} to itself must be 0")
            if not self.directed:
                for i in range(len(ids)):
                    for j in range(len(ids)):
                        if d[i][j] != d[j][i]:
                            raise ModelError("undirected network needs a symmetric distance matrix")
            object.__setattr__(self, "distances", d)
        if self.supervisor is not None and self.supervisor not in known:
            raise ModelError(f"unknown supervisor {self.supervisor}")

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def index(self, node_id: str) -> int:
        for i, n in enumerate(self.nodes):
            if n.id == node_id:
                return i
        raise KeyError(node_id)

    def node(self, node_id: str) -> Node:
        return self.nodes[self.index(node_id)]

    def by_address(self, address: str) -> Node | None:
        for n in self.nodes:
            if n.address == address:
                return n
        return None

    def distance(self, a: str, b: str):
        return self.distances[self.index(a)][self.index(b)]

    def neighbors(self, node_id: str) -> list[str]:
        out = {b for a, b in self.adjacency if a == node_id}
        if not self.directed:
            out |= {a for a, b in self.adjacency if b == node_id}
        return sorted(out)

    @property
    def supervisor_id(self) -> str:
        if self.supervisor is not None:
            return self.supervisor
        if not self.nodes:
            raise ModelError("empty network has no supervisor")
        return self.nodes[0].id


def compute_distances(network: Network) -> tuple[tuple[float, ...], ...]:
    """All-pairs minimum hop counts by BFS; unreachable pairs are ``INF``."""
    ids = [n.id for n in network.nodes]
    pos = {nid: i for i, nid in enumerate(ids)}
    succ: list[list[int]] = [[] for _ in ids]
    for a, b in sorted(network.adjacency):
        succ[pos[a]].append(pos[b])
        if not network.directed:
            succ[pos[b]].append(pos[a])
    rows = []
    for src in range(len(ids)):
        dist = [INF] * len(ids)
        dist[src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in succ[u]:
                if dist[v] == INF:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        rows.append(tuple(dist))
    return tuple(rows)


@dataclass(frozen=True)
class CommLink:
    from_resource: str
    to_resource: str
    frequency: int = 1
    weight: int = 1

    def __post_init__(self):
        if self.frequency < 1 or self.weight < 1:
            raise ModelError("link frequency and weight must be >= 1")

    @property
    def from_scope(self) -> str:
        return self.from_resource.split("/", 1)[0]

    @property
    def to_scope(self) -> str:
        return self.to_resource.split("/", 1)[0]


def comm_cost(link: CommLink) -> int:
    return link.frequency * link.weight


def scope_comm_cost(s1: "Scope | str", s2: "Scope | str", links: Iterable[CommLink]) -> int:
    """Directed cost from scope ``s1`` to ``s2``: sum of f*p over links s1 -> s2."""
    a = s1 if isinstance(s1, str) else s1.id
    b = s2 if isinstance(s2, str) else s2.id
    return sum(comm_cost(l) for l in links if l.from_scope == a and l.to_scope == b)


@dataclass(frozen=True)
class ExternalRef:
    """A system resource a scope expects to find already present on its host."""

    name: str
    rtype: ResourceType = ResourceType.SYSTEM
    value: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rtype", ResourceType.parse(self.rtype))


@dataclass(frozen=True)
class Scope:
    id: str
    resources: tuple[Resource, ...] = ()
    multiplicity: int = 1
    hop_limits: Mapping[str, int] = field(default_factory=dict)
    requires: tuple[ExternalRef, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "resources", tuple(self.resources))
        object.__setattr__(self, "requires", tuple(self.requires))
        object.__setattr__(self, "hop_limits", dict(self.hop_limits))
        if self.multiplicity < 1:
            raise ModelError(f"scope {self.id}: multiplicity must be >= 1")
        paths = [r.path for r in self.resources]
        if len(set(paths)) != len(paths):
            raise ModelError(f"scope {self.id}: duplicate resource path")

    def demand(self, rtype: ResourceType) -> int:
        return sum(1 for r in self.resources if r.rtype is rtype)

    @property
    def size(self) -> int:
        return total_size(self.resources)


# ---------------------------------------------------------------------------
# topology files


def read_document(source) -> dict:
    """Parse a JSON or TOML file (chosen by suffix); mappings pass through."""
    if isinstance(source, Mapping):
        return dict(source)
    path = Path(source)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text)
    return json.loads(text)


def load_network(source) -> Network:
    """Build a :class:`Network` from a JSON/TOML topology file or an equivalent dict."""
    try:
        doc = read_document(source)
    except (OSError, ValueError) as exc:
        raise ModelError(f"cannot parse topology: {exc}") from exc
    nodes = []
    for i, spec in enumerate(doc.get("nodes", [])):
        if "id" not in spec:
            raise ModelError(f"nodes[{i}]: missing field 'id'")
        try:
            ext = tuple(
                Resource(e["name"], e.get("type", "S"), e.get("value", ""), size_bytes=e.get("size_bytes"))
                for e in spec.get("external", [])
            )
            nodes.append(
                Node(
                    id=str(spec["id"]),
                    address=str(spec.get("address", spec["id"])),
                    memory_bytes=int(spec.get("memory_bytes", 0)),
                    free_slots={ResourceType.parse(k): int(v) for k, v in spec.get("free_slots", {}).items()},
                    external_resources=ext,
                )
            )
        except KeyError as exc:
            raise ModelError(f"node {spec.get('id')}: missing field {exc}") from exc
    edges = frozenset((str(a), str(b)) for a, b in doc.get("edges", []))
    distances = doc.get("distances")
    if distances is not None:
        distances = [[INF if v is None or v in ("inf", "Infinity") else v for v in row] for row in distances]
    return Network(
        nodes=tuple(nodes),
        adjacency=edges,
        directed=bool(doc.get("directed", False)),
        distances=distances,
        supervisor=doc.get("supervisor"),
    )


def network_to_dict(network: Network) -> dict:
    def enc(d):
        return None if d == INF else d

    return {
        "nodes": [
            {
                "id": n.id,
                "address": n.address,
                "memory_bytes": n.memory_bytes,
                "free_slots": {t.value: n.free_slots[t] for t in RESOURCE_TYPES},
                "external": [
                    {"name": r.name, "type": r.rtype.value, "size_bytes": r.size, "value": r.value}
                    for r in n.external_resources
                ],
            }
            for n in network.nodes
        ],
        "edges": [list(e) for e in sorted(network.adjacency)],
        "directed": network.directed,
        "distances": [[enc(d) for d in row] for row in network.distances],
        **({"supervisor": network.supervisor} if network.supervisor else {}),
    }


_PALETTE = ("lightblue", "palegreen", "khaki", "salmon", "plum", "lightgrey", "orange", "aquamarine")


def network_to_dot(network: Network, hosted: Mapping[str, Iterable[str]] | None = None) -> str:
    """Topology graph; with ``hosted`` (node -> labels) nodes are coloured by what they host."""
    hosted = {k: sorted(v) for k, v in (hosted or {}).items()}
    colours: dict[str, str] = {}
    for labels in hosted.values():
        for lab in labels:
            colours.setdefault(lab.split("#")[0], _PALETTE[len(colours) % len(_PALETTE)])
    kind = "digraph" if network.directed else "graph"
    arrow = "->" if network.directed else "--"
    lines = [f"{kind} topology {{"]
    for n in network.nodes:
        labels = hosted.get(n.id, [])
        text = "\\n".join([n.id, n.address, *labels]).replace('"', '\\"')
        fill = f', style=filled, fillcolor="{colours[labels[0].split("#")[0]]}"' if labels else ""
        lines.append(f'  "{n.id}" [label="{text}"{fill}];')
    for a, b in sorted(network.adjacency):
        lines.append(f'  "{a}" {arrow} "{b}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
