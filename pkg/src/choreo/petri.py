"""Dynamic Petri net view of a choreography.

Resources are places, agents are transitions, requests are tokens.  Agent
places can be created and deleted while the net runs, which adds or removes
the matching transition.  Analysis is explicit: breadth-first enumeration of
reachable states under every interleaving, then graph checks on the result.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .agent import (
    MULTICAST_NEIGHBORS,
    SELF_ADDRESS,
    Agent,
    NodeContext,
    Request,
    ResourceStore,
    apply_request,
    parse_agent,
    step_agent,
    token_enabled,
    uses_rand,
)
from .design import Design, scope_agents, validate_colocation
from .expr import references
from .model import ResourceType

EXT_PREFIX = "ext:"

# (container, method, path, payload, source container, agent)
Message = tuple


@dataclass(frozen=True)
class NetState:
    stores: tuple  # ((container, frozen ResourceStore), ...)
    inflight: tuple  # sorted messages
    input_pos: tuple  # consumed prefix length per input sequence

    def store(self, container: str) -> ResourceStore:
        for c, frozen in self.stores:
            if c == container:
                return ResourceStore.thaw(frozen)
        return ResourceStore()

    def live_transitions(self) -> list[tuple[str, str]]:
        out = []
        for c, (values, _tokens) in self.stores:
            if c.startswith(EXT_PREFIX):
                continue
            out.extend((c, p.rsplit("/", 1)[-1]) for p, _ in values if p.startswith("/A/"))
        return sorted(out)

    def max_tokens(self) -> int:
        return max((n for _, (_, toks) in self.stores for _, n in toks), default=0)

    def tokens(self) -> dict[tuple[str, str], int]:
        return {(c, p): n for c, (_, toks) in self.stores for p, n in toks}


@dataclass
class PetriNet:
    design: Design
    places: dict[tuple[str, str], str]  # (container, path) -> kind
    transitions: dict[tuple[str, str], Agent]
    input_arcs: dict[tuple[str, str], list[tuple[str, str]]]
    output_arcs: dict[tuple[str, str], list[tuple[tuple[str, str], str]]]
    initial: NetState
    inputs: tuple = ()
    time_window: int = 20

    def agent_places(self) -> list[tuple[str, str]]:
        return [p for p, kind in self.places.items() if kind == "A"]

    def data_places(self) -> list[tuple[str, str]]:
        return [p for p, kind in self.places.items() if kind != "A"]


class CompileError(ValueError):
    pass


def _container_for(address: str, own: str) -> str:
    if address == SELF_ADDRESS:
        return own
    if address.startswith("@"):
        return address[1:]
    return EXT_PREFIX + address


def compile_to_net(design: Design, time_window: int = 20) -> PetriNet:
    """Places for every resource (agents included), one transition per agent."""
    try:
        validate_colocation(design)
    except ValueError as exc:
        raise CompileError(str(exc)) from exc
    scope_ids = {s.id for s in design.scopes}
    places: dict[tuple[str, str], str] = {}
    transitions: dict[tuple[str, str], Agent] = {}
    stores: dict[str, ResourceStore] = {}
    for scope in design.scopes:
        store = ResourceStore()
        for ext in scope.requires:
            path = f"/{ext.rtype.value}/{ext.name}"
            store.write(path, ext.value, token=False)
        for r in scope.resources:
            places[(scope.id, r.path)] = r.rtype.value
            if not store.write(r.path, r.value):
                raise CompileError(f"agent {r.name} in scope {scope.id} does not parse")
        stores[scope.id] = store
        for res, doc in scope_agents(scope):
            transitions[(scope.id, res.name)] = parse_agent(doc, name=res.name)

    input_arcs, output_arcs = {}, {}
    for (sid, name), agent in transitions.items():
        store = stores[sid]
        ins = []
        for ref in references(agent.pre):
            path = store.ref_path(ref)
            if path is not None and not path.startswith("/S/"):
                ins.append((sid, path))
        input_arcs[(sid, name)] = ins
        outs = []
        for target in agent.targets:
            dest = _container_for(target.address, sid)
            if target.address.startswith("@") and dest not in scope_ids:
                raise CompileError(f"agent {name} in scope {sid} targets unknown scope {dest}")
            place = (dest, target.path)
            if place not in places:
                places[place] = "A" if target.path.startswith("/A/") else ("ext" if dest.startswith(EXT_PREFIX) else "L")
            outs.append((place, target.method))
        output_arcs[(sid, name)] = outs

    for inp in design.inputs:
        places.setdefault((inp.scope, inp.path), "L")
    initial = NetState(
        stores=tuple(sorted((c, s.freeze()) for c, s in stores.items())),
        inflight=(),
        input_pos=tuple(0 for _ in design.inputs),
    )
    return PetriNet(design, places, transitions, input_arcs, output_arcs, initial, design.inputs, time_window)


# ---------------------------------------------------------------------------
# successor relation


def _label_str(label: tuple) -> str:
    kind = label[0]
    if kind == "fire":
        return f"fire {label[1]}/{label[2]}"
    if kind == "deliver":
        return f"deliver {label[2]} {label[1]}{label[3]} {label[4]!r}"
    return f"input {label[1]}{label[2]}={label[3]!r}"


def _ctx(container: str, time: int | None = None, rand: int | None = None) -> NodeContext:
    return NodeContext(node_id=container, address=container, time_override=time, rand_override=rand, packet_bytes=1 << 30)


def _env_choices(agent: Agent, window: int) -> list[tuple[int | None, int | None]]:
    # System clock and random draws are environment choices; enumerate them
    texts = [agent.pre_text] + [p for p in agent.posts if isinstance(p, str)]
    times = list(range(window)) if any("S#time" in t for t in texts) else [None]
    rands = list(range(100)) if uses_rand(agent) else [None]
    return [(t, r) for t in times for r in rands]


def _request_message(req: Request, own: str) -> tuple[bool, Message]:
    dest = _container_for(req.address, own)
    local = dest == own
    return local, (dest, req.method, req.path, req.payload, own, req.agent)


def _deliver(stores: dict[str, ResourceStore], msg: Message) -> None:
    dest, method, path, payload, source, agent = msg
    store = stores.setdefault(dest, ResourceStore())
    req = Request(method, source, dest, 0, path, payload, 1, agent)
    apply_request(store, req, _ctx(dest, time=0, rand=0))


def _freeze(stores: dict[str, ResourceStore]) -> tuple:
    return tuple(sorted((c, s.freeze()) for c, s in stores.items()))


def successors(net: PetriNet, state: NetState) -> list[tuple[tuple, NetState]]:
    """All (label, successor) pairs, sorted canonically."""
    out: set[tuple[tuple, NetState]] = set()
    thawed = {c: ResourceStore.thaw(f) for c, f in state.stores}

    for container in sorted(thawed):
        if container.startswith(EXT_PREFIX):
            continue
        base = thawed[container]
        for name in base.live_agents():
            agent = base.agents[name]
            if not token_enabled(agent, base):
                continue
            for t, r in _env_choices(agent, net.time_window):
                stores = {c: (s.copy() if c == container else s) for c, s in thawed.items()}
                store = stores[container]
                requests = step_agent(agent, store, _ctx(container, t, r))
                if requests is None:
                    continue
                inflight = list(state.inflight)
                for req in requests:
                    local, msg = _request_message(req, container)
                    if local:
                        _deliver(stores, msg)
                    else:
                        inflight.append(msg)
                nxt = NetState(_freeze(stores), tuple(sorted(inflight)), state.input_pos)
                out.add((("fire", container, name), nxt))

    for i, msg in enumerate(sorted(set(state.inflight))):
        stores = {c: s.copy() for c, s in thawed.items()}
        _deliver(stores, msg)
        rest = list(state.inflight)
        rest.remove(msg)
        nxt = NetState(_freeze(stores), tuple(rest), state.input_pos)
        out.add((("deliver", msg[0], msg[1], msg[2], msg[3]), nxt))

    for i, inp in enumerate(net.inputs):
        pos = state.input_pos[i]
        if pos >= len(inp.values):
            continue
        stores = {c: s.copy() for c, s in thawed.items()}
        stores.setdefault(inp.scope, ResourceStore()).write(inp.path, inp.values[pos])
        positions = list(state.input_pos)
        positions[i] += 1
        nxt = NetState(_freeze(stores), state.inflight, tuple(positions))
        out.add((("input", inp.scope, inp.path, inp.values[pos]), nxt))

    return sorted(out, key=lambda e: (e[0], repr(e[1])))


# ---------------------------------------------------------------------------
# exploration


@dataclass(frozen=True)
class Bounds:
    max_states: int = 100_000
    max_tokens: int = 16
    max_steps: int = 10_000

    def __post_init__(self):
        if min(self.max_states, self.max_tokens, self.max_steps) < 1:
            raise ValueError("exploration bounds must be positive")


@dataclass
class StateGraph:
    states: list[NetState]
    edges: list[tuple[int, tuple, int]]
    initial: int = 0
    truncated: bool = False
    expanded: set[int] = field(default_factory=set)
    depth: dict[int, int] = field(default_factory=dict)
    transitions: set[tuple[str, str]] = field(default_factory=set)

    def out_edges(self) -> dict[int, list[tuple[tuple, int]]]:
        out: dict[int, list[tuple[tuple, int]]] = {i: [] for i in range(len(self.states))}
        for src, label, dst in self.edges:
            out[src].append((label, dst))
        return out

    def path_to(self, target: int) -> list[tuple]:
        """Shortest label sequence from the initial state to ``target``."""
        parent: dict[int, tuple[int, tuple] | None] = {self.initial: None}
        out = self.out_edges()
        queue = deque([self.initial])
        while queue:
            u = queue.popleft()
            if u == target:
                break
            for label, v in out[u]:
                if v not in parent:
                    parent[v] = (u, label)
                    queue.append(v)
        if target not in parent:
            raise ValueError("state is unreachable")
        path = []
        node = target
        while parent[node] is not None:
            u, label = parent[node]
            path.append(label)
            node = u
        return path[::-1]


def explore(net: PetriNet, bounds: Bounds | None = None) -> StateGraph:
    bounds = bounds or Bounds()
    index = {net.initial: 0}
    graph = StateGraph(states=[net.initial], edges=[], depth={0: 0})
    graph.transitions.update(net.transitions)
    queue = deque([0])
    while queue:
        sid = queue.popleft()
        state = graph.states[sid]
        if state.max_tokens() > bounds.max_tokens or graph.depth[sid] >= bounds.max_steps:
            graph.truncated = True
            continue
        succ = successors(net, state)
        new_states = [s for _, s in succ if s not in index]
        if len(index) + len(set(new_states)) > bounds.max_states:
            graph.truncated = True
            continue
        graph.expanded.add(sid)
        for label, nxt in succ:
            if label[0] == "fire":
                graph.transitions.add((label[1], label[2]))
            if nxt not in index:
                index[nxt] = len(graph.states)
                graph.states.append(nxt)
                graph.depth[index[nxt]] = graph.depth[sid] + 1
                queue.append(index[nxt])
            graph.edges.append((sid, label, index[nxt]))
    return graph


def replay(net: PetriNet, labels: Iterable[tuple]) -> NetState:
    """Execute a label sequence from the initial state; raises if a step is not enabled."""
    current = {net.initial}
    for step, label in enumerate(labels):
        nxt = {s for st in current for lab, s in successors(net, st) if lab == tuple(label)}
        if not nxt:
            raise ValueError(f"step {step}: {_label_str(tuple(label))} is not enabled")
        current = nxt
    return min(current, key=repr)


def follows_path(graph: StateGraph, labels: Iterable[tuple]) -> tuple[bool, int]:
    """Whether ``labels`` is a path from the initial state; returns (ok, steps matched)."""
    out = graph.out_edges()
    current = {graph.initial}
    n = 0
    for label in labels:
        label = tuple(label)
        current = {v for u in current for lab, v in out[u] if lab == label}
        if not current:
            return False, n
        n += 1
    return True, n


def labels_from_trace(trace: Iterable[tuple], node_scope: Mapping[str, str]) -> list[tuple]:
    """Translate simulator trace entries (keyed by node) into state-graph labels (keyed by scope)."""
    out = []
    for entry in trace:
        kind, node, *rest = entry
        if node not in node_scope:
            continue
        out.append((kind, node_scope[node], *rest))
    return out


# ---------------------------------------------------------------------------
# properties

PROPERTIES = ("safety", "deadlock_freedom", "liveness", "termination", "determinism", "reversibility")
UNSUPPORTED = ("output_correctness", "input_dependence")


@dataclass
class Verdict:
    status: str  # holds | fails | unknown | unsupported
    path: list[tuple] | None = None
    note: str = ""

    def to_dict(self) -> dict:
        out: dict = {"status": self.status}
        if self.path is not None:
            out["counterexample"] = [list(l) for l in self.path]
            out["counterexample_text"] = [_label_str(l) for l in self.path]
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class PropertyReport:
    verdicts: dict[str, Verdict]
    states: int
    edges: int
    truncated: bool

    def __getitem__(self, key: str) -> Verdict:
        return self.verdicts[key]

    @property
    def ok(self) -> bool:
        return not any(v.status == "fails" for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "states": self.states,
            "edges": self.edges,
            "truncated": self.truncated,
            "properties": {k: v.to_dict() for k, v in self.verdicts.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _sccs(n: int, out: dict[int, list[tuple[tuple, int]]], nodes: set[int]) -> list[list[int]]:
    """Tarjan, iterative, restricted to ``nodes``."""
    index, low, on, stack, comps = {}, {}, set(), [], []
    counter = 0
    for root in sorted(nodes):
        if root in index:
            continue
        work = [(root, iter([v for _, v in out[root] if v in nodes]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on.add(root)
        while work:
            u, it = work[-1]
            advanced = False
            for v in it:
                if v not in index:
                    index[v] = low[v] = counter
                    counter += 1
                    stack.append(v)
                    on.add(v)
                    work.append((v, iter([w for _, w in out[v] if w in nodes])))
                    advanced = True
                    break
                if v in on:
                    low[u] = min(low[u], index[v])
            if advanced:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[u])
            if low[u] == index[u]:
                comp = []
                while True:
                    w = stack.pop()
                    on.discard(w)
                    comp.append(w)
                    if w == u:
                        break
                comps.append(sorted(comp))
    return comps


def check_properties(graph: StateGraph, k: int = 16) -> PropertyReport:
    out = graph.out_edges()
    n = len(graph.states)
    all_nodes = set(range(n))
    truncated = graph.truncated
    verdicts: dict[str, Verdict] = {}

    # safety: k-boundedness of every place
    bad = next((i for i in range(n) if graph.states[i].max_tokens() > k), None)
    if bad is not None:
        verdicts["safety"] = Verdict("fails", graph.path_to(bad), f"a place holds more than {k} tokens")
    else:
        verdicts["safety"] = Verdict("unknown" if truncated else "holds")

    # deadlock: nothing enabled while agents are still installed
    dead = [i for i in sorted(graph.expanded) if not out[i] and graph.states[i].live_transitions()]
    if dead:
        verdicts["deadlock_freedom"] = Verdict(
            "fails", graph.path_to(min(dead, key=lambda i: (graph.depth[i], i))), "no event enabled while agents remain"
        )
    else:
        verdicts["deadlock_freedom"] = Verdict("unknown" if truncated else "holds")

    comps = _sccs(n, out, all_nodes)
    comp_of = {v: ci for ci, comp in enumerate(comps) for v in comp}
    cyclic = [
        comp
        for comp in comps
        if len(comp) > 1 or any(v == comp[0] for _, v in out[comp[0]])
    ]

    # termination: no reachable cycle
    if cyclic:
        entry = min((v for comp in cyclic for v in comp), key=lambda v: (graph.depth[v], v))
        comp = comps[comp_of[entry]]
        loop = _cycle_from(entry, set(comp), out)
        verdicts["termination"] = Verdict("fails", graph.path_to(entry) + loop, "reachable cycle")
    else:
        verdicts["termination"] = Verdict("unknown" if truncated else "holds")

    # liveness: every transition can fire again from every reachable state
    bottom = [
        comp for comp in comps if all(comp_of[v] == comp_of[comp[0]] for u in comp for _, v in out[u])
    ]
    transitions = sorted(graph.transitions)
    failing = None
    for comp in sorted(bottom, key=lambda c: (graph.depth[c[0]], c[0])):
        fired = {(lab[1], lab[2]) for u in comp for lab, v in out[u] if lab[0] == "fire"}
        missing = [t for t in transitions if t not in fired]
        if missing and (not truncated or all(u in graph.expanded for u in comp)):
            failing = (comp, missing)
            break
    if failing:
        comp, missing = failing
        verdicts["liveness"] = Verdict(
            "fails", graph.path_to(min(comp, key=lambda v: (graph.depth[v], v))), f"{missing[0][0]}/{missing[0][1]} can no longer fire"
        )
    else:
        verdicts["liveness"] = Verdict("unknown" if truncated else "holds")

    # determinism: one enabled event, or pairwise commuting events
    verdicts["determinism"] = _determinism(graph, out, truncated)

    # reversibility: the initial state is reachable from everywhere
    back: dict[int, list[int]] = {i: [] for i in range(n)}
    for src, _, dst in graph.edges:
        back[dst].append(src)
    reach = {graph.initial}
    queue = deque([graph.initial])
    while queue:
        u = queue.popleft()
        for v in back[u]:
            if v not in reach:
                reach.add(v)
                queue.append(v)
    stuck = [i for i in sorted(graph.expanded) if i not in reach]
    if stuck and not truncated:
        verdicts["reversibility"] = Verdict("fails", graph.path_to(stuck[0]), "initial marking unreachable")
    elif stuck:
        verdicts["reversibility"] = Verdict("unknown", note="exploration truncated")
    else:
        verdicts["reversibility"] = Verdict("unknown" if truncated else "holds")

    for name in UNSUPPORTED:
        verdicts[name] = Verdict("unsupported", note="no operative definition")
    return PropertyReport(verdicts, n, len(graph.edges), truncated)


def _cycle_from(start: int, comp: set[int], out) -> list[tuple]:
    parent = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for label, v in out[u]:
            if v == start:
                path = [label]
                node = u
                while parent[node] is not None:
                    prev, lab = parent[node]
                    path.append(lab)
                    node = prev
                return path[::-1]
            if v in comp and v not in parent:
                parent[v] = (u, label)
                queue.append(v)
    return []


def _determinism(graph: StateGraph, out, truncated: bool) -> Verdict:
    for s in sorted(graph.expanded, key=lambda i: (graph.depth[i], i)):
        edges = out[s]
        by_label: dict[tuple, set[int]] = {}
        for label, v in edges:
            by_label.setdefault(label, set()).add(v)
        for label, targets in by_label.items():
            if len(targets) > 1:
                return Verdict("fails", graph.path_to(s) + [label], "one event has several outcomes")
        if len(by_label) < 2:
            continue
        labels = sorted(by_label)
        for i, a in enumerate(labels):
            for b in labels[i + 1:]:
                sa, sb = next(iter(by_label[a])), next(iter(by_label[b]))
                if sa not in graph.expanded or sb not in graph.expanded:
                    continue
                ab = {v for lab, v in out[sa] if lab == b}
                ba = {v for lab, v in out[sb] if lab == a}
                if not ab or ab != ba:
                    return Verdict("fails", graph.path_to(s) + [a], f"{_label_str(a)} and {_label_str(b)} do not commute")
    return Verdict("unknown" if truncated else "holds")


# ---------------------------------------------------------------------------
# DOT export


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def net_to_dot(net: PetriNet) -> str:
    lines = ["digraph petri {", "  rankdir=LR;"]
    for (c, path), kind in sorted(net.places.items()):
        shape = "doublecircle" if kind == "A" else "circle"
        lines.append(f"  {_q('p:' + c + path)} [shape={shape}, label={_q(c + path)}];")
    for (c, name) in sorted(net.transitions):
        lines.append(f"  {_q('t:' + c + '/' + name)} [shape=box, label={_q(name)}];")
        lines.append(f"  {_q('t:' + c + '/' + name)} -> {_q('p:' + c + '/A/' + name)} [style=dotted, arrowhead=none];")
    for t, places in sorted(net.input_arcs.items()):
        for c, path in places:
            lines.append(f"  {_q('p:' + c + path)} -> {_q('t:' + t[0] + '/' + t[1])};")
    for t, arcs in sorted(net.output_arcs.items()):
        for (c, path), method in arcs:
            style = ", style=dashed" if method in ("DELETE",) or path.startswith("/A/") else ""
            lines.append(f"  {_q('t:' + t[0] + '/' + t[1])} -> {_q('p:' + c + path)} [label={_q(method)}{style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_dot(graph: StateGraph) -> str:
    lines = ["digraph states {"]
    for i, st in enumerate(graph.states):
        shape = "doublecircle" if i == graph.initial else "ellipse"
        live = ",".join(f"{c}/{n}" for c, n in st.live_transitions())
        text = f"s{i}\\n{live}"
        lines.append(f"  s{i} [shape={shape}, label={_q(text)}];")
    for src, label, dst in graph.edges:
        lines.append(f"  s{src} -> s{dst} [label={_q(_label_str(label))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
