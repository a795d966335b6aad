import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choreo.deploy import STRATEGIES, make_plan
from choreo.design import Design, instantiate
from choreo.mapper import evaluate_cost, map_application
from choreo.model import CommLink, Network, Node, Resource, Scope
from choreo.scenarios import (
    agent_resource,
    chain_network,
    fig5_design,
    listing1_setup,
    listing3_setup,
    notifier_design,
    one_scope_per_node,
    ring_network,
)
from choreo.sim import (
    PlacementMismatch,
    SimConfig,
    SimInput,
    Simulation,
    replay_deployment,
    run_discovery,
    simulation_from_design,
    total_deployment_time,
)
from oracles import FIG5_FINAL, LISTING1_FINAL, LISTING3_HEATER, LISTING3_WIRE_PAYLOAD, discovery_bound


def test_listing1_increments_light_and_logs_brightness():
    net, res = listing1_setup()
    sim = Simulation(net, res)
    sim.run(25)
    assert sim.stores["light"].values == LISTING1_FINAL["light"]
    assert sim.stores["database"].values == LISTING1_FINAL["database"]
    assert sim.metrics.fires == {"sensor/AgentSensor": 3}


def test_listing1_stops_above_threshold():
    net, res = listing1_setup()
    sim = Simulation(net, res, inputs=[SimInput("sensor", "/L/brighness", ("60",), 15)])
    sim.run(40)
    assert sim.stores["light"].values["/L/light"] == "2"
    net, res = listing1_setup(brightness="50")
    sim = Simulation(net, res)
    sim.run(40)
    assert sim.metrics.fires == {}


def test_listing3_observe_transcode_forward():
    net, res = listing3_setup()
    sim = Simulation(net, res, inputs=[SimInput("coap2", "/S/temperature", ("23.4 C",), 20)])
    wire = []
    sim.listeners.append(lambda node, req, result: wire.append((node, req.path, req.payload)))
    sim.run(12)
    assert sim.stores["coap1"].values["/S/heater"] == LISTING3_HEATER
    assert ("coap1", "/S/heater", LISTING3_WIRE_PAYLOAD) in wire
    sim.run(20)
    assert sim.stores["coap1"].values["/S/heater"] == "23.4 C"
    assert sim.metrics.fires["emma/Subscriber"] == 1


def test_fig5_differential_uninstalls_itself():
    design = fig5_design()
    net, placement = one_scope_per_node(design)
    sim = simulation_from_design(design, placement, net)
    sim.run(30)
    store = sim.stores["n01"]
    assert store.values == FIG5_FINAL
    assert store.live_agents() == []
    deletes = [e["path"] for e in sim.log if e["kind"] == "delete"]
    assert sorted(deletes) == ["/A/t1", "/A/t2"]


def test_discovery_covers_ring_with_neighbor_tables():
    net = ring_network(5)
    result = run_discovery(Simulation(net, config=SimConfig(seed=3)))
    assert result.complete and result.missing == []
    assert result.ticks <= discovery_bound(2, 5)
    for node_id, info in result.services.items():
        expected = sorted(net.node(n).address for n in net.neighbors(node_id))
        assert sorted(info["neighbors"]) == expected
        assert "/A/DiscoverNotifier" in info["resources"]


def test_discovery_single_node_and_partition():
    one = Network((Node("solo", "aaaa::1", 4096, {"A": 4}),), supervisor="solo")
    result = run_discovery(Simulation(one))
    assert result.complete and list(result.services) == ["solo"]
    nodes = tuple(Node(f"n{i}", f"aaaa::{i + 1}", 4096, {"A": 4, "L": 4}) for i in range(4))
    split = Network(nodes, frozenset({("n0", "n1"), ("n2", "n3")}), supervisor="n0")
    result = run_discovery(Simulation(split), horizon=100)
    assert not result.complete and result.missing == ["n2", "n3"]


def test_no_agents_no_traffic():
    sim = Simulation(ring_network(4))
    metrics = sim.run(50)
    assert metrics.total_packets_hops == 0 and metrics.fires == {} and sim.log == []


def test_horizon_zero_gives_empty_log():
    net, res = listing1_setup()
    sim = Simulation(net, res)
    sim.run(0)
    assert sim.event_log_lines() == ""


@settings(max_examples=8)
@given(st.integers(0, 10_000))
def test_same_seed_same_log(seed):
    def run():
        sim = Simulation(ring_network(5), config=SimConfig(seed=seed))
        run_discovery(sim, horizon=60)
        sim.run(20)
        return sim.event_log_lines(), json.dumps(sim.metrics.to_dict(), sort_keys=True)

    assert run() == run()


def test_different_seeds_differ():
    logs = set()
    for seed in range(4):
        sim = Simulation(ring_network(5), config=SimConfig(seed=seed))
        run_discovery(sim, horizon=60)
        logs.add(sim.event_log_lines())
    assert len(logs) > 1


def test_event_log_is_sorted_json_lines():
    net, res = listing1_setup()
    sim = Simulation(net, res)
    sim.run(25)
    lines = sim.event_log_lines().splitlines()
    ticks = []
    for line in lines:
        entry = json.loads(line)
        assert {"tick", "node", "kind", "path", "payload_size"} <= set(entry)
        assert line == json.dumps(entry, sort_keys=True, separators=(",", ":"))
        ticks.append(entry["tick"])
    assert ticks == sorted(ticks)


def test_unroutable_requests_are_dropped_and_counted():
    nodes = (Node("a", "aaaa::1", 4096, {"A": 4}), Node("b", "aaaa::2", 4096, {"L": 4}))
    net = Network(nodes)
    doc = {"NAME": "s", "PRE": "S#time<2", "POST": ["1", "1"], "TARGET": ["PUT[aaaa::2]:5683/L/x", "PUT[aaaa::9]:5683/L/x"]}
    sim = Simulation(net, {"a": [agent_resource(doc)]})
    sim.run(5)
    assert sim.metrics.dropped == 4
    assert sim.metrics.requests_sent == 0
    assert {e["reason"] for e in sim.log if e["kind"] == "drop"} == {"no route", "unknown address"}


@pytest.mark.parametrize("hops,latency,tick,expected", [(1, 10, 10, 1), (3, 10, 10, 3), (3, 5, 10, 2), (0, 10, 10, 1)])
def test_delay_formula(hops, latency, tick, expected):
    sim = Simulation(ring_network(2), config=SimConfig(hop_latency_ms=latency, tick_ms=tick))
    assert sim.delay(hops) == expected


@settings(max_examples=10)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 6), st.sampled_from([2, 5, 10]))
def test_load_matches_objective(distance, weight, units, period):
    """packets x hops over a window equals z(X) times the number of time units, within one event."""
    payload = "x" * (64 * weight - 10)
    sender = {"NAME": "tx", "PRE": f"S#time % {period} == 0", "POST": [payload], "TARGET": ["PUT[@b]:5683/L/in"]}
    a = Scope("a", (agent_resource(sender),))
    b = Scope("b", (Resource("in", "L", ""),))
    design = Design((a, b), (CommLink("a/A/tx", "b/L/in", 1, weight),))
    ids = [f"n{i}" for i in range(distance + 1)]
    net = Network(tuple(Node(i, f"aaaa::{k + 1}", 4096, {"A": 2, "L": 2}) for k, i in enumerate(ids)), frozenset(zip(ids, ids[1:])))
    chosen = {("a", 1): ids[0], ("b", 1): ids[-1]}
    sim = simulation_from_design(design, chosen, net, SimConfig(packet_bytes=64))
    window = units * period
    sim.run(window)
    expected = evaluate_cost(chosen, design.links, net) * units
    per_event = weight * distance
    assert abs(sim.metrics.total_packets_hops - expected) <= per_event


def _fixture_placements():
    out = []
    for n in (5, 14):
        net = chain_network(n)
        design = notifier_design(n)
        assignment, _ = map_application(design.scopes, design.links, net)
        out.append((f"chain{n}", net, instantiate(design, assignment.chosen, net)))
    design = fig5_design()
    net, placement = one_scope_per_node(design)
    out.append(("fig5", net, instantiate(design, placement, net)))
    return out


@pytest.mark.parametrize("name,net,placement", _fixture_placements(), ids=lambda v: v if isinstance(v, str) else "")
def test_strategies_reach_identical_placements(name, net, placement):
    finals = {}
    for strategy in STRATEGIES:
        result = replay_deployment(Simulation(net), make_plan(strategy, placement, net))
        assert result.matches, result.diff()
        assert total_deployment_time(result) == result.wall_ms
        finals[strategy] = result.placement
    assert finals["direct"] == finals["composed"] == finals["self"]


def test_machinery_is_cleaned_up():
    net = chain_network(5)
    _, _, placement = _fixture_placements()[0]
    for strategy in ("composed", "self"):
        sim = Simulation(net)
        replay_deployment(sim, make_plan(strategy, placement, net))
        for store in sim.stores.values():
            assert not any(name.startswith("_") for name in store.agents)
            assert not any(p.rsplit("/", 1)[-1].startswith("_") and p.startswith("/A/") for p in store.values)


def test_tampered_plan_is_a_hard_failure():
    name, net, placement = _fixture_placements()[0]
    plan = make_plan("direct", placement, net)
    plan.expected["n01"]["/L/ghost"] = "1"
    with pytest.raises(PlacementMismatch):
        replay_deployment(Simulation(net), plan)
