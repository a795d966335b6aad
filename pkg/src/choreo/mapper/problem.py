"""Mappability analysis and the pseudo-boolean encoding of the mapping problem."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..model import (
    INF,
    RESOURCE_TYPES,
    CommLink,
    Network,
    ResourceType,
    Scope,
    scope_comm_cost,
)

Instance = tuple[str, int]  # (scope id, ordinal 1..M(s))

COEFF_LIMIT = 2**62


class BuildError(ValueError):
    pass


def mappable_nodes(scope: Scope, network: Network) -> list[str]:
    """N_s: nodes with enough typed slots, the required externals and enough memory."""
    out = []
    for node in network.nodes:
        if any(scope.demand(t) > node.free_slots[t] for t in RESOURCE_TYPES):
            continue
        if not all(node.has_external(e.name, e.rtype) for e in scope.requires):
            continue
        if scope.size > node.available_memory:
            continue
        out.append(node.id)
    return out


@dataclass
class ScopeCheck:
    scope: str
    multiplicity: int
    mappable: list[str]

    @property
    def ok(self) -> bool:
        return len(self.mappable) >= self.multiplicity


@dataclass
class MappabilityReport:
    scopes: list[ScopeCheck]

    @property
    def maybe_satisfiable(self) -> bool:
        return all(s.ok for s in self.scopes)

    @property
    def verdict(self) -> str:
        return "maybe-satisfiable" if self.maybe_satisfiable else "infeasible"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "scopes": [
                {"scope": s.scope, "multiplicity": s.multiplicity, "mappable": len(s.mappable), "nodes": s.mappable, "ok": s.ok}
                for s in self.scopes
            ],
        }


def check_application_mappable(scopes: Iterable[Scope], network: Network) -> MappabilityReport:
    """Necessary condition only: every scope has at least M(s) candidate nodes."""
    return MappabilityReport([ScopeCheck(s.id, s.multiplicity, mappable_nodes(s, network)) for s in scopes])


# ---------------------------------------------------------------------------
# PBO instance


@dataclass(frozen=True)
class MappingLiteral:
    instance: Instance
    node: str
    var_id: int


@dataclass(frozen=True)
class Constraint:
    family: str  # multiplicity | exclusivity | topology | slots | memory | linearization
    terms: tuple[tuple[int, int], ...]  # (coefficient, var id)
    op: str  # "=", "<=", ">="
    rhs: int
    label: str = ""

    def holds(self, values: Sequence[int]) -> bool:
        lhs = sum(c * values[v] for c, v in self.terms)
        if self.op == "=":
            return lhs == self.rhs
        if self.op == "<=":
            return lhs <= self.rhs
        return lhs >= self.rhs


@dataclass(frozen=True)
class ProductTerm:
    coef: int  # c_{s,s'} * d_{n,n'}
    left: int
    right: int
    aux: int


@dataclass
class PboInstance:
    scopes: tuple[Scope, ...]
    links: tuple[CommLink, ...]
    network: Network
    instances: list[Instance]
    domains: dict[Instance, list[str]]
    literals: list[MappingLiteral]
    products: list[ProductTerm]
    constraints: list[Constraint]
    linearization: list[Constraint]
    cost: dict[tuple[str, str], int]  # directed scope pair -> c
    forbidden: dict[tuple[Instance, Instance], frozenset[tuple[str, str]]] = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return len(self.literals) + len(self.products)

    @property
    def constraint_count(self) -> int:
        return len(self.constraints)

    def literal(self, instance: Instance, node: str) -> MappingLiteral | None:
        return self._index().get((instance, node))

    def _index(self) -> dict:
        cache = getattr(self, "_lit_index", None)
        if cache is None:
            cache = {(l.instance, l.node): l for l in self.literals}
            self._lit_index = cache
        return cache

    def family_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for c in self.constraints:
            out[c.family] = out.get(c.family, 0) + 1
        out["linearization"] = len(self.linearization)
        return out

    def objective_of(self, values: Sequence[int]) -> int:
        return sum(p.coef * values[p.aux] for p in self.products)


def expand_instances(scopes: Iterable[Scope]) -> list[Instance]:
    return [(s.id, k) for s in scopes for k in range(1, s.multiplicity + 1)]


def _excluded(d, c: int, limit: int | None) -> bool:
    if d == INF and c > 0:
        return True
    return limit is not None and d > limit


def hop_limit(scope_a: Scope, scope_b: Scope) -> int | None:
    limits = [l for l in (scope_a.hop_limits.get(scope_b.id), scope_b.hop_limits.get(scope_a.id)) if l is not None]
    return min(limits) if limits else None


def build_pbo(scopes: Iterable[Scope], links: Iterable[CommLink], network: Network) -> PboInstance:
    scopes = tuple(scopes)
    links = tuple(links)
    by_id = {s.id: s for s in scopes}
    for l in links:
        if l.from_scope not in by_id or l.to_scope not in by_id:
            raise BuildError(f"link {l.from_resource} -> {l.to_resource} names an unknown scope")
        if l.from_scope == l.to_scope:
            raise BuildError(f"self-scope link in {l.from_scope} is not supported")
    cost = {}
    for a in scopes:
        for b in scopes:
            if a.id != b.id:
                c = scope_comm_cost(a, b, links)
                if c:
                    cost[(a.id, b.id)] = c

    instances = expand_instances(scopes)
    domains = {inst: mappable_nodes(by_id[inst[0]], network) for inst in instances}
    literals: list[MappingLiteral] = []
    for inst in instances:
        for n in domains[inst]:
            literals.append(MappingLiteral(inst, n, len(literals)))
    var = {(l.instance, l.node): l.var_id for l in literals}

    constraints: list[Constraint] = []
    for inst in instances:
        constraints.append(
            Constraint("multiplicity", tuple((1, var[(inst, n)]) for n in domains[inst]), "=", 1, f"{inst[0]}#{inst[1]}")
        )
    for s in scopes:
        if s.multiplicity < 2:
            continue
        for n in network.node_ids:
            terms = tuple((1, var[((s.id, k), n)]) for k in range(1, s.multiplicity + 1) if ((s.id, k), n) in var)
            if len(terms) > 1:
                constraints.append(Constraint("exclusivity", terms, "<=", 1, f"{s.id}@{n}"))

    products: list[ProductTerm] = []
    linearization: list[Constraint] = []
    forbidden: dict[tuple[Instance, Instance], frozenset[tuple[str, str]]] = {}
    next_var = len(literals)
    for i in instances:
        for j in instances:
            if i[0] == j[0]:
                continue
            c = cost.get((i[0], j[0]), 0)
            limit = hop_limit(by_id[i[0]], by_id[j[0]]) if i < j else None
            excluded = set()
            for n in domains[i]:
                for m in domains[j]:
                    d = network.distance(n, m)
                    if _excluded(d, c, limit):
                        excluded.add((n, m))
                        constraints.append(
                            Constraint("topology", ((1, var[(i, n)]), (1, var[(j, m)])), "<=", 1, f"{i[0]}#{i[1]}@{n}|{j[0]}#{j[1]}@{m}")
                        )
                    elif c and d:
                        coef = c * d
                        if coef > COEFF_LIMIT:
                            raise BuildError(f"objective coefficient {coef} overflows")
                        x, y = var[(i, n)], var[(j, m)]
                        aux = next_var
                        next_var += 1
                        products.append(ProductTerm(int(coef), x, y, aux))
                        linearization.extend(
                            (
                                Constraint("linearization", ((1, aux), (-1, x), (-1, y)), ">=", -1),
                                Constraint("linearization", ((1, aux), (-1, x)), "<=", 0),
                                Constraint("linearization", ((1, aux), (-1, y)), "<=", 0),
                            )
                        )
            if excluded:
                forbidden[(i, j)] = frozenset(excluded)

    for node in network.nodes:
        for t in RESOURCE_TYPES:
            terms = tuple(
                (by_id[l.instance[0]].demand(t), l.var_id)
                for l in literals
                if l.node == node.id and by_id[l.instance[0]].demand(t) > 0
            )
            if terms:
                constraints.append(Constraint("slots", terms, "<=", node.free_slots[t], f"{node.id}/{t.value}"))
        terms = tuple((by_id[l.instance[0]].size, l.var_id) for l in literals if l.node == node.id)
        if terms:
            constraints.append(Constraint("memory", terms, "<=", node.available_memory, node.id))

    return PboInstance(scopes, links, network, instances, domains, literals, products, constraints, linearization, cost, forbidden)


# ---------------------------------------------------------------------------
# OPB export


def _lin(terms: Iterable[tuple[int, int]]) -> str:
    return " ".join(f"{'+' if c >= 0 else '-'}{abs(c)} x{v + 1}" for c, v in terms)


def to_opb(instance: PboInstance, include_linearization: bool = True) -> str:
    """Standard OPB text: linear objective over auxiliaries plus all constraints."""
    cons = list(instance.constraints) + (list(instance.linearization) if include_linearization else [])
    lines = [f"* #variable= {instance.num_vars} #constraint= {len(cons)}"]
    for l in instance.literals:
        lines.append(f"* x{l.var_id + 1} = {l.instance[0]}#{l.instance[1]}@{l.node}")
    if instance.products:
        lines.append(f"min: {_lin((p.coef, p.aux) for p in instance.products)} ;")
    else:
        lines.append("min: ;")
    for c in cons:
        op = ">=" if c.op == ">=" else ("=" if c.op == "=" else "<=")
        if op == "<=":
            # OPB only has >= and =; negate
            lines.append(f"{_lin((-k, v) for k, v in c.terms)} >= {-c.rhs} ;")
        else:
            lines.append(f"{_lin(c.terms)} {op} {c.rhs} ;")
    return "\n".join(lines) + "\n"
