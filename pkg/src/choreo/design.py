"""Design documents: scopes, links, agents and scripted inputs of a choreography."""
from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .agent import SELF_ADDRESS, AgentFormatError, parse_agent, serialize_doc
from .expr import references
from .model import CommLink, ExternalRef, ModelError, Network, Resource, ResourceType, Scope, read_document

SCOPE_ADDR_RE = re.compile(r"\[@([A-Za-z0-9_.\-]+)\]")


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class InputSequence:
    """Values written by the environment into ``path`` of every instance of ``scope``."""

    scope: str
    path: str
    values: tuple[str, ...]
    start: int = 1
    period: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(str(v) for v in self.values))
        if self.start < 0 or self.period < 1:
            raise DesignError("input start must be >= 0 and period >= 1")


@dataclass(frozen=True)
class Design:
    scopes: tuple[Scope, ...] = ()
    links: tuple[CommLink, ...] = ()
    inputs: tuple[InputSequence, ...] = ()
    name: str = "design"

    def __post_init__(self):
        object.__setattr__(self, "scopes", tuple(self.scopes))
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        ids = [s.id for s in self.scopes]
        if len(set(ids)) != len(ids):
            raise DesignError("duplicate scope ids")
        known = set(ids)
        for link in self.links:
            if link.from_scope not in known or link.to_scope not in known:
                raise DesignError(f"link {link.from_resource} -> {link.to_resource} names an unknown scope")
            if link.from_scope == link.to_scope:
                raise DesignError(f"link inside scope {link.from_scope} is not allowed")
        for inp in self.inputs:
            if inp.scope not in known:
                raise DesignError(f"input for unknown scope {inp.scope}")

    def scope(self, scope_id: str) -> Scope:
        for s in self.scopes:
            if s.id == scope_id:
                return s
        raise KeyError(scope_id)


def scope_agents(scope: Scope) -> list[tuple[Resource, dict]]:
    out = []
    for r in scope.resources:
        if r.rtype is ResourceType.AGENT:
            try:
                out.append((r, json.loads(r.value)))
            except json.JSONDecodeError as exc:
                raise DesignError(f"agent {scope.id}{r.path} is not valid JSON: {exc}") from exc
    return out


def validate_colocation(design: Design) -> None:
    """Every agent PRE may only read resources of its own scope or System state."""
    for scope in design.scopes:
        agents = []
        for res, doc in scope_agents(scope):
            try:
                agents.append((res, parse_agent(doc, name=res.name)))
            except AgentFormatError as exc:
                raise DesignError(f"agent {res.name} in scope {scope.id}: {exc}") from exc
        # resources the scope creates for itself count as co-located
        created = {t.path for _, a in agents for t in a.targets if t.address == SELF_ADDRESS and t.method in ("PUT", "POST")}
        local = {r.path for r in scope.resources} | created
        names = {p.rsplit("/", 1)[-1] for p in local}
        for res, agent in agents:
            for ref in references(agent.pre):
                if ref.prefix == "S":
                    continue
                if ref.prefix == "R" and ref.name in names:
                    continue
                if f"/{ref.prefix}/{ref.name}" in local:
                    continue
                raise DesignError(
                    f"agent {res.name} in scope {scope.id} reads {ref.text}, which is in no scope it can see"
                )


# ---------------------------------------------------------------------------
# binding scope addresses after mapping


def bind_agent_doc(doc: dict, addresses: Mapping[str, list[str]]) -> dict:
    """Replace ``[@scope]`` target addresses by the hosting nodes' addresses.

    A target naming a scope with several instances fans out into one target
    per instance.
    """
    posts, targets = [], []
    for post, target in zip(doc.get("POST", []), doc.get("TARGET", [])):
        if isinstance(post, dict):
            post = bind_agent_doc(post, addresses)
        m = SCOPE_ADDR_RE.search(target)
        if not m:
            posts.append(post)
            targets.append(target)
            continue
        scope_id = m.group(1)
        if scope_id not in addresses:
            raise DesignError(f"target {target!r} names unmapped scope {scope_id}")
        for addr in addresses[scope_id]:
            posts.append(copy.deepcopy(post))
            targets.append(SCOPE_ADDR_RE.sub(f"[{addr}]", target, count=1))
    out = dict(doc)
    out["POST"], out["TARGET"] = posts, targets
    return out


def scope_addresses(placement: Mapping[tuple[str, int], str], network: Network) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for (scope_id, _k), node_id in sorted(placement.items()):
        out.setdefault(scope_id, []).append(network.node(node_id).address)
    return out


def instantiate(design: Design, placement: Mapping[tuple[str, int], str], network: Network) -> dict[str, list[Resource]]:
    """Resources to install per node for a (scope instance -> node) placement."""
    addresses = scope_addresses(placement, network)
    per_node: dict[str, list[Resource]] = {nid: [] for nid in network.node_ids}
    seen: dict[str, set[str]] = {nid: set() for nid in network.node_ids}
    for (scope_id, k), node_id in sorted(placement.items()):
        scope = design.scope(scope_id)
        for r in scope.resources:
            value = r.value
            if r.rtype is ResourceType.AGENT:
                value = serialize_doc(bind_agent_doc(json.loads(r.value), addresses))
            if r.path in seen[node_id]:
                raise DesignError(f"two scopes place {r.path} on node {node_id}")
            seen[node_id].add(r.path)
            per_node[node_id].append(Resource(r.name, r.rtype, value, scope_path=f"{scope_id}#{k}", size_bytes=r.size_bytes))
    return {nid: rs for nid, rs in per_node.items() if rs}


# ---------------------------------------------------------------------------
# serialization


def _resource_from(spec: dict) -> Resource:
    value = spec.get("value", "")
    if isinstance(value, (dict, list)):
        value = serialize_doc(value)
    return Resource(spec["name"], spec.get("type", "L"), str(value), size_bytes=spec.get("size_bytes"))


def design_from_dict(doc: Mapping) -> Design:
    try:
        scopes = []
        for s in doc.get("scopes", []):
            scopes.append(
                Scope(
                    id=str(s["id"]),
                    resources=tuple(_resource_from(r) for r in s.get("resources", [])),
                    multiplicity=int(s.get("multiplicity", 1)),
                    hop_limits={str(k): int(v) for k, v in s.get("hop_limits", {}).items()},
                    requires=tuple(
                        ExternalRef(e["name"], e.get("type", "S"), str(e.get("value", ""))) for e in s.get("requires", [])
                    ),
                )
            )
        links = tuple(
            CommLink(l["from"], l["to"], int(l.get("frequency", 1)), int(l.get("weight", 1))) for l in doc.get("links", [])
        )
        inputs = tuple(
            InputSequence(i["scope"], i["path"], tuple(i["values"]), int(i.get("start", 1)), int(i.get("period", 1)))
            for i in doc.get("inputs", [])
        )
    except KeyError as exc:
        raise DesignError(f"design is missing field {exc}") from exc
    except ModelError as exc:
        raise DesignError(str(exc)) from exc
    return Design(tuple(scopes), links, inputs, str(doc.get("name", "design")))


def _resource_to(r: Resource) -> dict:
    out: dict = {"name": r.name, "type": r.rtype.value}
    if r.rtype is ResourceType.AGENT:
        out["value"] = json.loads(r.value)
    else:
        out["value"] = r.value
    if r.size_bytes is not None:
        out["size_bytes"] = r.size_bytes
    return out


def design_to_dict(design: Design) -> dict:
    return {
        "name": design.name,
        "scopes": [
            {
                "id": s.id,
                "multiplicity": s.multiplicity,
                "hop_limits": dict(s.hop_limits),
                "resources": [_resource_to(r) for r in s.resources],
                "requires": [{"name": e.name, "type": e.rtype.value, "value": e.value} for e in s.requires],
            }
            for s in design.scopes
        ],
        "links": [
            {"from": l.from_resource, "to": l.to_resource, "frequency": l.frequency, "weight": l.weight}
            for l in design.links
        ],
        "inputs": [
            {"scope": i.scope, "path": i.path, "values": list(i.values), "start": i.start, "period": i.period}
            for i in design.inputs
        ],
    }


def load_design(source) -> Design:
    if isinstance(source, Mapping):
        return design_from_dict(source)
    try:
        doc = read_document(source)
    except ValueError as exc:
        raise DesignError(f"cannot parse design {source}: {exc}") from exc
    return design_from_dict(doc)


def dump_design(design: Design, path) -> None:
    Path(path).write_text(json.dumps(design_to_dict(design), indent=2) + "\n")
