import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from choreo.deploy import (
    STRATEGIES,
    DeploymentTrace,
    PlanError,
    TraceError,
    TraceStep,
    bfs_tree,
    deployment_time,
    make_plan,
    plan_composed,
    plan_direct,
    plan_self,
    unit_chain_sizes,
)
from choreo.design import instantiate
from choreo.mapper import map_application
from choreo.model import Network, Node, Resource
from choreo.scenarios import chain_network, listing2_agent, notifier_design, ring_network


def chain_placement(n):
    net = chain_network(n)
    design = notifier_design(n)
    assignment, _ = map_application(design.scopes, design.links, net)
    return net, instantiate(design, assignment.chosen, net)


def test_direct_has_one_unit_per_resource():
    net, placement = chain_placement(5)
    plan = plan_direct(placement, net)
    assert len(plan.units) == sum(len(v) for v in placement.values())
    assert all(u.wave == 0 for u in plan.units)
    assert plan.expected == {n: {r.path: r.value for r in rs} for n, rs in placement.items()}


def test_direct_refuses_hidden_nodes():
    nodes = (Node("sup", memory_bytes=100, free_slots={"L": 4}), Node("far", memory_bytes=100, free_slots={"L": 4}))
    net = Network(nodes, supervisor="sup")
    with pytest.raises(PlanError):
        plan_direct({"far": [Resource("x", "L", "1")]}, net)


def test_bfs_tree_prefers_smallest_parent():
    tree = bfs_tree(ring_network(6), "n01")
    assert tree["n01"] is None
    assert tree["n04"] == "n03"  # three hops either way round; the smaller parent id wins


def test_composed_nests_along_the_chain():
    net, placement = chain_placement(5)
    plan = plan_composed(placement, net)
    assert plan.waves == 1 and len(plan.units) == 1
    sizes = [s for _, s in unit_chain_sizes(plan)[0]]
    assert all(a > b for a, b in zip(sizes, sizes[1:]))
    assert [n for n, _ in unit_chain_sizes(plan)[0]] == [f"n{i:02d}" for i in range(1, 6)]


def test_composed_splits_into_waves_when_memory_is_short():
    net = chain_network(4, memory=600)
    design = notifier_design(4)
    assignment, _ = map_application(design.scopes, design.links, net)
    placement = instantiate(design, assignment.chosen, net)
    plan = plan_composed(placement, net)
    assert plan.waves > 1
    for chain in unit_chain_sizes(plan):
        assert all(size <= 600 for _, size in chain)


def test_self_plan_has_one_flood_unit():
    net, placement = chain_placement(5)
    plan = plan_self(placement, net)
    assert len(plan.units) == 1 and plan.units[0].path == "/A/_flood"
    doc = json.loads(plan.units[0].payload)
    assert doc["PRE"] == "!?L#_seen"


def test_self_plan_rejects_oversize_payload():
    net, placement = chain_placement(3)
    small = chain_network(3, memory=300)
    with pytest.raises(PlanError):
        plan_self(placement, small)


def test_self_plan_from_agent_list_installs_everywhere():
    net = ring_network(4)
    plan = plan_self([listing2_agent()], net)
    assert set(plan.expected) == set(net.node_ids)


def test_make_plan_dispatch_and_errors():
    net, placement = chain_placement(3)
    for strategy in STRATEGIES:
        assert make_plan(strategy, placement, net).strategy == strategy
    with pytest.raises(PlanError):
        make_plan("teleport", placement, net)
    assert make_plan("self", {}, net).units == []


def test_deployment_time_boundary():
    steps = [TraceStep("sup", 0, 30, 0, 0), TraceStep("a", 10, 25, 5, 10), TraceStep("b", 5, 0, 5, 5)]
    per, total = deployment_time(DeploymentTrace(steps))
    assert per == [20, 35, 10]
    assert total == 65
    with pytest.raises(TraceError):
        deployment_time([TraceStep("sup", 0, 1, 0, 0), TraceStep("a", 10, 0, 0, 10)])


@given(st.lists(st.tuples(st.integers(1, 500), st.integers(1, 5), st.integers(0, 4)), min_size=1, max_size=12))
def test_deployment_time_equals_serial_sum(carriers):
    """D(i) telescopes: the sum equals transmission + writes + installs of all carriers."""
    w, t, l = 1, 20, 5
    tx = [t * hops for _, hops, _ in carriers]
    writes = [w * p for p, _, _ in carriers]
    steps = [TraceStep("sup", 0, tx[0] + writes[0], 0, 0)]
    for i, (p, hops, inst) in enumerate(carriers):
        nxt = tx[i + 1] + writes[i + 1] if i + 1 < len(carriers) else 0
        steps.append(TraceStep(f"n{i}", writes[i], nxt, l * inst, p, hops))
    _, total = deployment_time(steps)
    assert total == sum(tx) + sum(writes) + l * sum(i for *_, i in carriers)
