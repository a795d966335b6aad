"""Agent documents and their execution against a node's resource store.

An agent fires when its PRE expression holds: every TARGET receives one request
whose payload is the matching POST template rendered against the local store.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Union

from .expr import (
    EvalError,
    Expr,
    ExprSyntaxError,
    Ref,
    RenderError,
    evaluate,
    parse_expression,
    references,
    render_template,
)

log = logging.getLogger(__name__)

METHODS = ("PUT", "POST", "GET", "DELETE")
SELF_ADDRESS = "0::1"
MULTICAST_NEIGHBORS = "ff02::2"
DEFAULT_PORT = 5683
RAND_RANGE = 100

_TARGET_RE = re.compile(r"^\s*([A-Za-z]+)\s*\[([^\]]+)\]\s*(?::(\d+))?\s*(/\S*)\s*$")
_VALUE_OBJ_RE = re.compile(r"""^\s*\{\s*['"]value['"]\s*:\s*(?:'([^']*)'|"([^"]*)"|([^'"}]*?))\s*\}\s*$""")
_VALUE_QUERY_RE = re.compile(r"^\?value=(.*)$", re.S)


class AgentFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Target:
    method: str
    address: str
    port: int
    path: str

    def __str__(self) -> str:
        return f"{self.method}[{self.address}]:{self.port}{self.path}"

    @property
    def resource_type(self) -> str:
        return self.path.split("/")[1] if self.path.count("/") >= 1 else ""

    @property
    def is_agent_path(self) -> bool:
        return is_agent_path(self.path)


def is_agent_path(path: str) -> bool:
    return path.startswith("/A/")


def parse_target(text: str) -> Target:
    m = _TARGET_RE.match(text)
    if not m:
        raise AgentFormatError(f"malformed target {text!r}")
    method = m.group(1).upper()
    if method not in METHODS:
        raise AgentFormatError(f"unknown method {m.group(1)!r} in {text!r}")
    port = int(m.group(3)) if m.group(3) else DEFAULT_PORT
    return Target(method, m.group(2).strip(), port, m.group(4))


@dataclass(frozen=True)
class Agent:
    name: str
    pre_text: str
    pre: Expr
    targets: tuple[Target, ...]
    posts: tuple[Union[str, "Agent"], ...]
    doc: dict = field(compare=False, hash=False, repr=False)

    def to_json(self) -> str:
        return serialize_doc(self.doc)

    @property
    def size(self) -> int:
        return len(self.to_json().encode("utf-8"))

    def input_refs(self) -> list[Ref]:
        return references(self.pre)


def serialize_doc(doc: dict) -> str:
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def parse_agent(document, name: str | None = None) -> Agent:
    """Parse an agent from JSON text or an already-decoded mapping.

    ``name`` overrides NAME, as happens when a nested document is installed
    under ``/A/<name>``.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise AgentFormatError(f"agent is not valid JSON: {exc}") from exc
    else:
        doc = document
    if not isinstance(doc, dict):
        raise AgentFormatError("agent document must be a JSON object")
    for key in ("PRE", "POST", "TARGET"):
        if key not in doc:
            raise AgentFormatError(f"agent document lacks {key}")
    posts_raw, targets_raw = doc["POST"], doc["TARGET"]
    if not isinstance(posts_raw, list) or not isinstance(targets_raw, list):
        raise AgentFormatError("POST and TARGET must be arrays")
    if len(posts_raw) != len(targets_raw):
        raise AgentFormatError(f"POST has {len(posts_raw)} entries but TARGET has {len(targets_raw)}")
    agent_name = name or doc.get("NAME")
    if not agent_name:
        raise AgentFormatError("agent has no NAME")
    try:
        pre = parse_expression(str(doc["PRE"]))
    except ExprSyntaxError as exc:
        raise AgentFormatError(f"agent {agent_name}: bad PRE: {exc}") from exc
    targets = tuple(parse_target(str(t)) for t in targets_raw)
    posts: list[Union[str, Agent]] = []
    for post, target in zip(posts_raw, targets):
        if isinstance(post, dict):
            inner_name = post.get("NAME") or target.path.rsplit("/", 1)[-1]
            posts.append(parse_agent(post, name=inner_name))
        else:
            posts.append(str(post))
    return Agent(str(agent_name), str(doc["PRE"]), pre, targets, tuple(posts), doc)


def make_agent(name: str, pre: str, actions: Iterable[tuple[str, object]]) -> Agent:
    """Build an agent from ``(target, payload)`` pairs; payload may be a nested dict."""
    actions = list(actions)
    doc = {"NAME": name, "PRE": pre, "POST": [p for _, p in actions], "TARGET": [t for t, _ in actions]}
    return parse_agent(doc)


# ---------------------------------------------------------------------------
# node state


@dataclass
class NodeContext:
    """Per-node environment visible through System references."""

    node_id: str
    address: str
    time: int = 0
    rng: random.Random | None = None
    neighbors: tuple[str, ...] = ()
    packet_bytes: int = 64
    rand_override: int | None = None
    time_override: int | None = None

    def draw(self) -> int:
        if self.rand_override is not None:
            return self.rand_override
        if self.rng is None:
            self.rng = random.Random(0)
        return self.rng.randrange(RAND_RANGE)


@dataclass
class Request:
    method: str
    source: str
    address: str
    port: int
    path: str
    payload: str
    size_packets: int
    agent: str = ""

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "source": self.source,
            "address": self.address,
            "port": self.port,
            "path": self.path,
            "payload": self.payload,
            "size_packets": self.size_packets,
            "agent": self.agent,
        }


def packets_for(payload: str, packet_bytes: int) -> int:
    return max(1, math.ceil(len(payload.encode("utf-8")) / packet_bytes))


VOLATILE_SYSTEM = ("time", "rand", "address", "id", "resources", "neighbors")


class ResourceStore:
    """Resources of one container keyed by path, with request tokens."""

    def __init__(self, values: dict[str, str] | None = None, tokens: dict[str, int] | None = None):
        self.values: dict[str, str] = {}
        self.tokens: dict[str, int] = {}
        self.agents: dict[str, Agent] = {}
        self.diagnostics: list[str] = []
        for path, value in (values or {}).items():
            self._set(path, value)
        if tokens:
            self.tokens.update({p: c for p, c in tokens.items() if c})

    # -- basic access ---------------------------------------------------
    def _set(self, path: str, value: str) -> bool:
        if is_agent_path(path):
            try:
                agent = _cached_parse(value, path.rsplit("/", 1)[-1])
            except AgentFormatError as exc:
                self.diagnostics.append(f"rejected agent {path}: {exc}")
                return False
            self.agents[agent.name] = agent
        self.values[path] = value
        return True

    def write(self, path: str, value: str, token: bool = True) -> bool:
        ok = self._set(path, value)
        if ok and token and not path.startswith("/S/"):
            self.tokens[path] = self.tokens.get(path, 0) + 1
        return ok

    def delete(self, path: str) -> bool:
        if path not in self.values:
            return False
        del self.values[path]
        self.tokens.pop(path, None)
        if is_agent_path(path):
            self.agents.pop(path.rsplit("/", 1)[-1], None)
        return True

    def get(self, path: str) -> str | None:
        return self.values.get(path)

    def live_agents(self) -> list[str]:
        return sorted(self.agents)

    def copy(self) -> "ResourceStore":
        out = ResourceStore()
        out.values = dict(self.values)
        out.tokens = dict(self.tokens)
        out.agents = dict(self.agents)
        return out

    def freeze(self) -> tuple:
        return (tuple(sorted(self.values.items())), tuple(sorted((p, c) for p, c in self.tokens.items() if c)))

    @classmethod
    def thaw(cls, frozen: tuple) -> "ResourceStore":
        values, tokens = frozen
        out = cls()
        for p, v in values:
            out._set(p, v)
        out.tokens = dict(tokens)
        return out

    # -- reference resolution --------------------------------------------
    def ref_path(self, ref: Ref) -> str | None:
        """Stored path a reference denotes, if any."""
        if ref.prefix in ("A", "S", "L"):
            path = f"/{ref.prefix}/{ref.name}"
            return path if path in self.values else None
        if ref.prefix == "R":
            for t in ("L", "S", "A"):
                path = f"/{t}/{ref.name}"
                if path in self.values:
                    return path
            return None
        path = f"/{ref.prefix}/{ref.name}"
        return path if path in self.values else None

    def resolver(self, ctx: NodeContext | None):
        drawn: list[int] = []

        def resolve(ref: Ref) -> str | None:
            if ref.prefix == "S" and ctx is not None and ref.name in VOLATILE_SYSTEM:
                if ref.name == "time":
                    return str(ctx.time if ctx.time_override is None else ctx.time_override)
                if ref.name == "rand":
                    if not drawn:
                        drawn.append(ctx.draw())
                    return str(drawn[0])
                if ref.name == "address":
                    return ctx.address
                if ref.name == "id":
                    return ctx.node_id
                if ref.name == "resources":
                    return json.dumps(sorted(self.values), separators=(",", ":"))
                if ref.name == "neighbors":
                    return json.dumps(list(ctx.neighbors), separators=(",", ":"))
            path = self.ref_path(ref)
            return None if path is None else self.values[path]

        return resolve


_PARSE_CACHE: dict[tuple[str, str], Agent] = {}


def _cached_parse(text: str, name: str) -> Agent:
    key = (text, name)
    agent = _PARSE_CACHE.get(key)
    if agent is None:
        agent = parse_agent(text, name=name)
        if len(_PARSE_CACHE) > 50_000:
            _PARSE_CACHE.clear()
        _PARSE_CACHE[key] = agent
    return agent


# ---------------------------------------------------------------------------
# firing rule


def input_paths(agent: Agent, store: ResourceStore) -> tuple[list[str], bool]:
    """Token-carrying input places of ``agent`` and whether it reads System state.

    System resources are environment driven and count as permanently marked.
    """
    paths, system = [], False
    for ref in agent.input_refs():
        if ref.prefix == "S":
            system = True
            continue
        path = store.ref_path(ref)
        if path is None:
            continue
        if path.startswith("/S/"):
            system = True
        elif path not in paths:
            paths.append(path)
    return paths, system


def token_enabled(agent: Agent, store: ResourceStore) -> bool:
    """First firing condition: a token sits on an input place.

    Agents without token-carrying inputs behave as source transitions.
    """
    paths, system = input_paths(agent, store)
    if system or not paths:
        return True
    return any(store.tokens.get(p, 0) > 0 for p in paths)


def consume_tokens(agent: Agent, store: ResourceStore) -> None:
    paths, _ = input_paths(agent, store)
    for p in paths:
        if store.tokens.get(p, 0) > 0:
            store.tokens[p] -= 1
            if not store.tokens[p]:
                del store.tokens[p]


def eval_pre(agent: Agent, store: ResourceStore, ctx: NodeContext | None = None) -> bool:
    """Second firing condition. Missing references and type errors read as false."""
    try:
        value = evaluate(agent.pre, store.resolver(ctx))
    except EvalError as exc:
        log.debug("agent %s: PRE %r is false: %s", agent.name, agent.pre_text, exc)
        store.diagnostics.append(f"{agent.name}: {exc}")
        return False
    return value != 0 if isinstance(value, int) else value != ""


def render_post(agent: Agent, index: int, store: ResourceStore, ctx: NodeContext | None = None) -> str:
    post = agent.posts[index]
    if isinstance(post, Agent):
        return post.to_json()
    return render_template(post, store.resolver(ctx))


def fire(agent: Agent, store: ResourceStore, ctx: NodeContext) -> list[Request]:
    """Requests produced by one evaluation of ``agent`` (empty if PRE is false)."""
    ctx = _pin_rand(agent, ctx)
    if not eval_pre(agent, store, ctx):
        return []
    return _emit(agent, store, ctx)


def step_agent(agent: Agent, store: ResourceStore, ctx: NodeContext) -> list[Request] | None:
    """One scheduling step under both firing conditions.

    Returns None when the agent does not fire; otherwise consumes its input
    tokens and returns the requests of the firing.
    """
    if not token_enabled(agent, store):
        return None
    ctx = _pin_rand(agent, ctx)
    if not eval_pre(agent, store, ctx):
        return None
    requests = _emit(agent, store, ctx)
    consume_tokens(agent, store)
    return requests


def uses_rand(agent: Agent) -> bool:
    return "S#rand" in agent.pre_text or any(isinstance(p, str) and "S#rand" in p for p in agent.posts)


def _pin_rand(agent: Agent, ctx: NodeContext) -> NodeContext:
    # one draw per evaluation, shared by PRE and every payload
    if ctx.rand_override is not None or not uses_rand(agent):
        return ctx
    return dataclasses.replace(ctx, rand_override=ctx.draw())


def _emit(agent: Agent, store: ResourceStore, ctx: NodeContext) -> list[Request]:
    out = []
    for i, target in enumerate(agent.targets):
        try:
            payload = render_post(agent, i, store, ctx)
        except RenderError as exc:
            log.info("agent %s: skipping %s: %s", agent.name, target, exc)
            store.diagnostics.append(f"{agent.name}: render error for {target}: {exc}")
            continue
        out.append(
            Request(
                method=target.method,
                source=ctx.node_id,
                address=target.address,
                port=target.port,
                path=target.path,
                payload=payload,
                size_packets=packets_for(payload, ctx.packet_bytes),
                agent=agent.name,
            )
        )
    return out


# ---------------------------------------------------------------------------
# request handling


@dataclass
class ApplyResult:
    ok: bool
    value: str | None = None
    created_agent: str | None = None
    deleted_agent: str | None = None
    diagnostic: str = ""


def unwrap_value(payload: str) -> str:
    """``{'value':X}`` and ``?value=X`` envelopes carry X; anything else is stored as is."""
    m = _VALUE_OBJ_RE.match(payload)
    if m:
        return next(g for g in m.groups() if g is not None)
    m = _VALUE_QUERY_RE.match(payload)
    if m:
        return m.group(1)
    return payload


def apply_request(store: ResourceStore, request: Request, ctx: NodeContext | None = None) -> ApplyResult:
    path, method = request.path, request.method
    if method == "GET":
        return ApplyResult(True, store.get(path))
    if method == "DELETE":
        existed = store.delete(path)
        if not existed:
            msg = f"DELETE {path}: no such resource"
            store.diagnostics.append(msg)
            return ApplyResult(True, None, diagnostic=msg)
        return ApplyResult(True, None, deleted_agent=path.rsplit("/", 1)[-1] if is_agent_path(path) else None)
    if is_agent_path(path):
        payload = request.payload
        if method == "PUT":
            payload = unwrap_value(payload)
        existed = path in store.values
        if not store.write(path, payload):
            return ApplyResult(False, diagnostic=store.diagnostics[-1])
        note = f"{method} {path}: overwrote existing agent" if existed else ""
        return ApplyResult(True, payload, created_agent=path.rsplit("/", 1)[-1], diagnostic=note)
    try:
        payload = render_template(request.payload, store.resolver(ctx))
    except RenderError as exc:
        msg = f"{method} {path}: {exc}"
        store.diagnostics.append(msg)
        return ApplyResult(False, diagnostic=msg)
    if method == "PUT":
        payload = unwrap_value(payload)
    note = f"POST {path}: overwrote existing resource" if method == "POST" and path in store.values else ""
    store.write(path, payload)
    return ApplyResult(True, payload, diagnostic=note)
